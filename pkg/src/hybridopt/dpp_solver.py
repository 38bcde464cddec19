"""Backward-induction value solver on a space-time-regime lattice.

The value function is computed by the one-step recursion

    V[k](x, i) = min over candidate pairs (mu, nu) of
        f(t_k, x, i, mu, nu) dt
        + sum_j p_ij(x, nu, dt) * E_W[ V[k+1](x + b(x,i,mu) dt + sigma(x,i,mu) sqrt(dt) W, j) ]

with V at the final slice equal to the terminal cost.  The expectation over
the Brownian increment uses tensorized Gauss-Hermite quadrature (weights
normalized to unit sum), the regime factor reuses the exact
frozen-generator exponential of the switching module, and next-slice values
are read off by multilinear interpolation with edge clamping, which keeps
every one-step operator a convex combination and hence preserves lower
bounds of V.  Ties in the minimization break to the lowest candidate-pair
index, so solved grids are bit-reproducible.

The search runs over step-constant Markov policies; that family is exactly
optimal for the discretized problem, while richer path-dependent controls
can only be compared against it through the Monte Carlo side (see the
verification module).

Within a time slice all node minimizations are independent (they are plain
vectorized array ops here); slices are strictly sequential.  A solved grid
is immutable.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy import sparse

from . import expr as ex
from .control import MeasureBatch, TableControl
from .dynamics import HybridModel
from .errors import ValidationError
from .measure_space import DiscreteMeasure
from .switching import step_transition_probs

SCHEMA_VERSION = 1


class GridSpec:
    """Space-time lattice parameters: n_t time steps over the model horizon,
    per-dimension node counts over the truncation box, and the Gauss-Hermite
    order per Brownian dimension."""

    __slots__ = ("time_steps", "space_nodes", "quad_order")

    def __init__(self, time_steps: int, space_nodes, quad_order: int = 5):
        if int(time_steps) < 1:
            raise ValidationError("time_steps must be >= 1")
        nodes = tuple(int(v) for v in np.atleast_1d(space_nodes))
        if any(v < 2 for v in nodes):
            raise ValidationError("need at least 2 space nodes per dimension")
        if int(quad_order) < 1:
            raise ValidationError("quad_order must be >= 1")
        self.time_steps = int(time_steps)
        self.space_nodes = nodes
        self.quad_order = int(quad_order)

    def to_dict(self) -> dict:
        return {
            "time_steps": self.time_steps,
            "space_nodes": list(self.space_nodes),
            "quad_order": self.quad_order,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GridSpec":
        return cls(payload["time_steps"], payload["space_nodes"], payload.get("quad_order", 5))


def gauss_hermite(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[phi(W)], W ~ N(0, I_dim), as a tensor grid.

    Built from the physicists' Hermite rule via the change of variables
    w = sqrt(2) z; weights are normalized to sum exactly to one so constant
    functions integrate exactly.
    """
    z, w = np.polynomial.hermite.hermgauss(order)
    pts_1d = np.sqrt(2.0) * z
    wts_1d = w / np.sum(w)
    grids = list(itertools.product(*([range(order)] * dim)))
    pts = np.array([[pts_1d[g[d]] for d in range(dim)] for g in grids])
    wts = np.array([np.prod([wts_1d[g[d]] for d in range(dim)]) for g in grids])
    wts = wts / np.sum(wts)
    return pts, wts


def space_axes(model: HybridModel, grid: GridSpec) -> list[np.ndarray]:
    if len(grid.space_nodes) != model.state_dim:
        raise ValidationError("space_nodes must have one entry per state dimension")
    return [
        np.linspace(lo, hi, n)
        for lo, hi, n in zip(model.truncation_lower, model.truncation_upper, grid.space_nodes)
    ]


def nodes_mesh(axes: list[np.ndarray]) -> np.ndarray:
    """All lattice points as an (n_nodes, d) array in row-major axis order."""
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def interpolation_matrix(axes: list[np.ndarray], points: np.ndarray) -> tuple[sparse.csr_matrix, int]:
    """Multilinear interpolation weights with edge clamping.

    Returns a (m, n_nodes) sparse matrix whose rows are convex weights, plus
    the count of query points that had to be clamped into the box.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = pts.shape
    lows = np.array([a[0] for a in axes])
    highs = np.array([a[-1] for a in axes])
    clamped = int(np.count_nonzero(np.any((pts < lows) | (pts > highs), axis=1)))
    pts = np.clip(pts, lows, highs)

    idx_lo = []
    frac = []
    for dd, axis in enumerate(axes):
        pos = np.searchsorted(axis, pts[:, dd], side="right") - 1
        pos = np.clip(pos, 0, len(axis) - 2)
        width = axis[pos + 1] - axis[pos]
        f = (pts[:, dd] - axis[pos]) / width
        idx_lo.append(pos)
        frac.append(np.clip(f, 0.0, 1.0))

    shape = tuple(len(a) for a in axes)
    n_nodes = int(np.prod(shape))
    rows, cols, vals = [], [], []
    for corner in itertools.product((0, 1), repeat=d):
        w = np.ones(m)
        multi = []
        for dd, hi_bit in enumerate(corner):
            w = w * (frac[dd] if hi_bit else 1.0 - frac[dd])
            multi.append(idx_lo[dd] + hi_bit)
        flat = np.ravel_multi_index(tuple(multi), shape)
        rows.append(np.arange(m))
        cols.append(flat)
        vals.append(w)
    mat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, n_nodes)
    )
    return mat, clamped


def interpolate_values(axes: list[np.ndarray], values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Clamped multilinear interpolation of node values at arbitrary points."""
    mat, _ = interpolation_matrix(axes, points)
    return mat @ values


class SolverKernels:
    """Precomputed per-(regime, candidate) one-step operators for one grid.

    ``move[i-1][mi]`` is the (n_nodes, n_nodes) state-transport kernel for
    drift/diffusion under the mu candidate: Gauss-Hermite weights composed
    with interpolation weights, so rows are convex.  ``regime_rows[i-1][ni]``
    is the (n_nodes, N) matrix of exact expm transition rows under the nu
    candidate.  Rates and coefficients are time-independent, so one set of
    kernels serves every slice; the verification oracles build their exact
    lattice kernels from this very object.
    """

    def __init__(self, model: HybridModel, grid: GridSpec, mu_candidates, nu_candidates):
        if not mu_candidates or not nu_candidates:
            raise ValidationError("candidate sets must be nonempty")
        for m in list(mu_candidates) + list(nu_candidates):
            if m.action_set != model.action_set:
                raise ValidationError("candidates must live on the model's action set")
        dt = model.horizon / grid.time_steps
        if dt * model.rates.rate_bound > 0.1 + 1e-12:
            raise ValidationError("grid too coarse: dt * rate bound exceeds 0.1")
        self.model = model
        self.grid = grid
        self.mu_candidates = tuple(mu_candidates)
        self.nu_candidates = tuple(nu_candidates)
        self.dt = dt
        self.times = dt * np.arange(grid.time_steps + 1)
        self.axes = space_axes(model, grid)
        self.nodes = nodes_mesh(self.axes)
        self.n_nodes = self.nodes.shape[0]
        self.clamp_count = 0

        gh_pts, gh_wts = gauss_hermite(grid.quad_order, model.state_dim)
        sqrt_dt = np.sqrt(dt)
        # folds the per-(node, quadrature) interpolation rows into one
        # quadrature-weighted row per node
        fold = sparse.kron(
            sparse.eye(self.n_nodes, format="csr"), sparse.csr_matrix(gh_wts[None, :])
        )

        n = model.regime_count
        self.move: list[list[sparse.csr_matrix]] = []
        for i in range(1, n + 1):
            row = []
            regs = np.full(self.n_nodes, i)
            for mu in self.mu_candidates:
                mb = MeasureBatch.constant(mu, self.n_nodes)
                b = model.drift_at(self.nodes, regs, mb)
                sig = model.diffusion_at(self.nodes, regs, mb)
                drifted = self.nodes + b * dt
                # moved points for every (node, quadrature) pair
                moved = drifted[:, None, :] + np.einsum("nrc,qc->nqr", sig, gh_pts) * sqrt_dt
                mat, clamped = interpolation_matrix(self.axes, moved.reshape(-1, model.state_dim))
                self.clamp_count += clamped
                row.append((fold @ mat).tocsr())
            self.move.append(row)

        self.regime_rows: list[list[np.ndarray]] = []
        for i in range(1, n + 1):
            row = []
            for nu in self.nu_candidates:
                if model.rates.depends_on_state:
                    rows = np.vstack(
                        [step_transition_probs(model.rates, i, xn, nu, dt) for xn in self.nodes]
                    )
                else:
                    one = step_transition_probs(
                        model.rates, i, np.zeros(model.state_dim), nu, dt
                    )
                    rows = np.tile(one, (self.n_nodes, 1))
                row.append(rows)
            self.regime_rows.append(row)

    def stage_values(self, k: int, i: int, mi: int, ni: int, v_next: np.ndarray) -> np.ndarray:
        """One-step operator for a fixed candidate pair at slice k, regime i.

        Shared verbatim by the solver, the residual check, and the lattice
        oracle so their values agree bit-for-bit where they must.
        """
        mu = self.mu_candidates[mi]
        nu = self.nu_candidates[ni]
        run = self.model.running_cost_at(
            float(self.times[k]),
            self.nodes,
            np.full(self.n_nodes, i),
            MeasureBatch.constant(mu, self.n_nodes),
            MeasureBatch.constant(nu, self.n_nodes),
        )
        ev = self.move[i - 1][mi] @ v_next  # (n_nodes, N)
        cont = np.einsum("nj,nj->n", self.regime_rows[i - 1][ni], ev)
        return run * self.dt + cont

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [
            (mi, ni)
            for mi in range(len(self.mu_candidates))
            for ni in range(len(self.nu_candidates))
        ]


class ValueGrid:
    """Solved value table V[k][node][regime] with the stored argmin policy."""

    __slots__ = (
        "grid",
        "axes",
        "times",
        "values",
        "policy_mu",
        "policy_nu",
        "mu_candidates",
        "nu_candidates",
        "clamp_count",
    )

    def __init__(self, grid, axes, times, values, policy_mu, policy_nu, mu_candidates, nu_candidates, clamp_count=0):
        self.grid = grid
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.times = np.asarray(times, dtype=float)
        self.values = values
        self.policy_mu = policy_mu
        self.policy_nu = policy_nu
        self.mu_candidates = tuple(mu_candidates)
        self.nu_candidates = tuple(nu_candidates)
        self.clamp_count = int(clamp_count)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def nodes(self) -> np.ndarray:
        return nodes_mesh(self.axes)

    def time_index(self, t: float) -> int:
        return int(np.clip(round((t - self.times[0]) / self.dt), 0, len(self.times) - 1))

    def value_at(self, t: float, x, regime: int) -> float:
        """V at grid time nearest t, multilinear in x, exact in the regime."""
        k = self.time_index(t)
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = interpolate_values(self.axes, self.values[k][:, regime - 1], pts)
        return float(out[0]) if pts.shape[0] == 1 else out

    def values_at(self, t: float, x: np.ndarray, regimes: np.ndarray) -> np.ndarray:
        k = self.time_index(t)
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        per_regime = np.stack(
            [interpolate_values(self.axes, self.values[k][:, j], pts) for j in range(self.values.shape[2])],
            axis=-1,
        )
        return per_regime[np.arange(pts.shape[0]), np.asarray(regimes, dtype=int) - 1]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "grid": self.grid.to_dict(),
            "axes": [a.tolist() for a in self.axes],
            "times": self.times.tolist(),
            "index_order": "values[k][node][regime], nodes row-major over the axes",
            "values": self.values.tolist(),
            "policy_mu": self.policy_mu.tolist(),
            "policy_nu": self.policy_nu.tolist(),
            "mu_candidates": [m.to_dict() for m in self.mu_candidates],
            "nu_candidates": [m.to_dict() for m in self.nu_candidates],
            "clamp_count": self.clamp_count,
        }

    @classmethod
    def from_dict(cls, payload: dict, action_set) -> "ValueGrid":
        if payload.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported value-grid schema {payload.get('schema_version')!r}")
        return cls(
            GridSpec.from_dict(payload["grid"]),
            [np.asarray(a, dtype=float) for a in payload["axes"]],
            payload["times"],
            np.asarray(payload["values"], dtype=float),
            np.asarray(payload["policy_mu"], dtype=np.intp),
            np.asarray(payload["policy_nu"], dtype=np.intp),
            [DiscreteMeasure.from_dict(action_set, m) for m in payload["mu_candidates"]],
            [DiscreteMeasure.from_dict(action_set, m) for m in payload["nu_candidates"]],
            payload.get("clamp_count", 0),
        )


def solve(model: HybridModel, grid: GridSpec, mu_candidates, nu_candidates) -> ValueGrid:
    """Backward induction over the lattice; returns values and argmin policy."""
    kern = SolverKernels(model, grid, mu_candidates, nu_candidates)
    n_t = grid.time_steps
    n_reg = model.regime_count
    n_pairs = len(kern.pairs)

    values = np.empty((n_t + 1, kern.n_nodes, n_reg))
    terminal = model.terminal_cost_at(kern.nodes)
    for j in range(n_reg):
        values[n_t][:, j] = terminal
    policy_mu = np.zeros((n_t, kern.n_nodes, n_reg), dtype=np.intp)
    policy_nu = np.zeros((n_t, kern.n_nodes, n_reg), dtype=np.intp)

    pair_mu = np.array([mi for mi, _ in kern.pairs], dtype=np.intp)
    pair_nu = np.array([ni for _, ni in kern.pairs], dtype=np.intp)
    for k in range(n_t - 1, -1, -1):
        v_next = values[k + 1]
        for i in range(1, n_reg + 1):
            stacked = np.empty((n_pairs, kern.n_nodes))
            for p, (mi, ni) in enumerate(kern.pairs):
                stacked[p] = kern.stage_values(k, i, mi, ni, v_next)
            best = np.argmin(stacked, axis=0)  # first occurrence = lowest pair index
            values[k][:, i - 1] = stacked[best, np.arange(kern.n_nodes)]
            policy_mu[k][:, i - 1] = pair_mu[best]
            policy_nu[k][:, i - 1] = pair_nu[best]

    return ValueGrid(
        grid,
        kern.axes,
        kern.times,
        values,
        policy_mu,
        policy_nu,
        kern.mu_candidates,
        kern.nu_candidates,
        kern.clamp_count,
    )


def dpp_residual(value_grid: ValueGrid, model: HybridModel, k_from: int, k_to: int) -> float:
    """Gap between the stored-policy chaining of the one-step operator over
    [k_from, k_to] and a re-minimization over window-constant candidate
    controls.

    For k_to == k_from + 1 the two sides coincide with the recursion itself
    and the residual is exactly zero; over longer windows the window-constant
    class is coarser than per-step policies and the gap is O(dt) in general.
    """
    n_t = value_grid.grid.time_steps
    if not 0 <= k_from < k_to <= n_t:
        raise ValidationError("need 0 <= k_from < k_to <= time steps")
    kern = SolverKernels(model, value_grid.grid, value_grid.mu_candidates, value_grid.nu_candidates)
    n_reg = model.regime_count
    pair_index = {pair: p for p, pair in enumerate(kern.pairs)}

    # side A: chain the one-step operator with the stored per-step minimizers
    chained = value_grid.values[k_to].copy()
    for k in range(k_to - 1, k_from - 1, -1):
        nxt = np.empty_like(chained)
        for i in range(1, n_reg + 1):
            per_pair = np.empty((len(kern.pairs), kern.n_nodes))
            for p, (mi, ni) in enumerate(kern.pairs):
                per_pair[p] = kern.stage_values(k, i, mi, ni, chained)
            stored = np.array(
                [
                    pair_index[(int(value_grid.policy_mu[k][nd, i - 1]), int(value_grid.policy_nu[k][nd, i - 1]))]
                    for nd in range(kern.n_nodes)
                ]
            )
            nxt[:, i - 1] = per_pair[stored, np.arange(kern.n_nodes)]
        chained = nxt

    # side B: hold one candidate pair fixed on the whole window, minimize
    best = None
    for mi, ni in kern.pairs:
        w = value_grid.values[k_to].copy()
        for k in range(k_to - 1, k_from - 1, -1):
            nxt = np.empty_like(w)
            for i in range(1, n_reg + 1):
                nxt[:, i - 1] = kern.stage_values(k, i, mi, ni, w)
            w = nxt
        best = w if best is None else np.minimum(best, w)

    return float(np.max(np.abs(chained - best)))


def extract_policy(value_grid: ValueGrid) -> TableControl:
    """Greedy table policy: (time slice, nearest node, regime) -> argmin pair."""
    return TableControl(
        origin=float(value_grid.times[0]),
        dt=value_grid.dt,
        axes=value_grid.axes,
        policy_mu=value_grid.policy_mu,
        policy_nu=value_grid.policy_nu,
        mu_candidates=value_grid.mu_candidates,
        nu_candidates=value_grid.nu_candidates,
    )
