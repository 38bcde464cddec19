"""Hybrid model definition and Euler-Maruyama simulation with switching.

The model bundles the per-regime drift/diffusion expressions, the rate
spec, the running and terminal costs, the action set, a truncation box for
the continuous state, and the declared constants the validation report
checks the coefficients against: a joint squared-Lipschitz constant for
drift and diffusion (in state and in W1 of the control measure), a plain
Lipschitz constant for the rates, the uniform exit-rate bound, a linear
growth bound, and lower bounds for the costs.

Simulation interleaves an explicit Euler step of

    X' = X + b(X, i, mu) dt + sigma(X, i, mu) dW

with the frozen-generator regime draw of the switching module.  Brownian
increments are drawn before the switch sample within a step; the switch
uses the step-start (x, nu).  All randomness comes from counter-based
streams keyed by (seed, path index, role), so a path's trajectory is
independent of batch composition and worker scheduling -- batches can be
partitioned across processes and reassembled bit-identically.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import expr as ex
from . import rng
from .control import FeedbackControl, MeasureBatch
from .errors import (
    NumericalError,
    SimulationError,
    StepSizeError,
    UsageError,
    ValidationError,
)
from .measure_space import ActionSet, DiscreteMeasure, w1_distance
from .switching import RateSpec, pick_regime, step_transition_probs, transition_rows_batch

_TIME_TOL = 1e-9
_GRID_ABS_TOL = 1e-12


def _parse_field(raw, what):
    if isinstance(raw, str):
        try:
            return ex.parse(raw)
        except Exception as err:
            raise ValidationError(f"{what}: {err}") from err
    return raw


def _check_vars(node, allowed, what):
    bad = {v for v in ex.variables(node) if v not in allowed and not v.startswith("x")}
    if bad:
        raise ValidationError(f"{what} may depend on {sorted(allowed) + ['x*']} only, found {sorted(bad)}")


class HybridModel:
    """Coefficient bundle for one controlled regime-switching diffusion."""

    __slots__ = (
        "state_dim",
        "regime_count",
        "action_set",
        "rates",
        "drift",
        "diffusion",
        "running_cost",
        "terminal_cost",
        "horizon",
        "truncation_lower",
        "truncation_upper",
        "clamp",
        "lipschitz_drift_diffusion",
        "lipschitz_rates",
        "growth_bound",
        "running_cost_floor",
        "terminal_cost_floor",
        "starts",
    )

    def __init__(
        self,
        state_dim: int,
        action_set: ActionSet,
        rates: RateSpec,
        drift,
        diffusion,
        running_cost,
        terminal_cost,
        horizon: float,
        truncation_lower,
        truncation_upper,
        clamp: bool = True,
        lipschitz_drift_diffusion: float = 1.0,
        lipschitz_rates: float = 1.0,
        growth_bound: float = 1.0,
        running_cost_floor: float = 0.0,
        terminal_cost_floor: float = 0.0,
        starts=(),
    ):
        d = int(state_dim)
        if d < 1:
            raise ValidationError("state_dim must be >= 1")
        n = rates.regime_count
        self.state_dim = d
        self.regime_count = n
        self.action_set = action_set
        self.rates = rates

        drift = tuple(tuple(_parse_field(e, f"drift[{i}][{c}]") for c, e in enumerate(row)) for i, row in enumerate(drift))
        if len(drift) != n or any(len(row) != d for row in drift):
            raise ValidationError(f"drift must be {n} regimes x {d} coordinates")
        diffusion = tuple(
            tuple(tuple(_parse_field(e, f"diffusion[{i}][{r}][{c}]") for c, e in enumerate(row)) for r, row in enumerate(mat))
            for i, mat in enumerate(diffusion)
        )
        if len(diffusion) != n or any(len(mat) != d or any(len(row) != d for row in mat) for mat in diffusion):
            raise ValidationError(f"diffusion must be {n} regimes x {d}x{d} matrices")
        for row in drift:
            for e in row:
                _check_vars(e, {"i", "mu"}, "drift")
        for mat in diffusion:
            for row in mat:
                for e in row:
                    _check_vars(e, {"i", "mu"}, "diffusion")
        self.drift = drift
        self.diffusion = diffusion

        self.running_cost = _parse_field(running_cost, "running_cost")
        _check_vars(self.running_cost, {"t", "i", "mu", "nu"}, "running_cost")
        self.terminal_cost = _parse_field(terminal_cost, "terminal_cost")
        _check_vars(self.terminal_cost, set(), "terminal_cost")

        if horizon <= 0:
            raise ValidationError("horizon must be positive")
        self.horizon = float(horizon)

        lo = np.atleast_1d(np.asarray(truncation_lower, dtype=float))
        hi = np.atleast_1d(np.asarray(truncation_upper, dtype=float))
        if lo.shape != (d,) or hi.shape != (d,) or not np.all(lo < hi):
            raise ValidationError("truncation box must be a nonempty box of the state dimension")
        lo.setflags(write=False)
        hi.setflags(write=False)
        self.truncation_lower = lo
        self.truncation_upper = hi
        self.clamp = bool(clamp)

        for name, value in (
            ("lipschitz_drift_diffusion", lipschitz_drift_diffusion),
            ("lipschitz_rates", lipschitz_rates),
            ("growth_bound", growth_bound),
        ):
            if value <= 0:
                raise ValidationError(f"{name} must be positive")
        self.lipschitz_drift_diffusion = float(lipschitz_drift_diffusion)
        self.lipschitz_rates = float(lipschitz_rates)
        self.growth_bound = float(growth_bound)
        self.running_cost_floor = float(running_cost_floor)
        self.terminal_cost_floor = float(terminal_cost_floor)

        cleaned = []
        for x0, i0 in starts:
            x0 = tuple(float(v) for v in np.atleast_1d(x0))
            if len(x0) != d:
                raise ValidationError("start state has the wrong dimension")
            i0 = int(i0)
            if not 1 <= i0 <= n:
                raise ValidationError(f"start regime {i0} out of range 1..{n}")
            cleaned.append((x0, i0))
        self.starts = tuple(cleaned)

        self._smoke_check()

    def _smoke_check(self):
        # every expression must evaluate to something finite at a reference point
        mid = (self.truncation_lower + self.truncation_upper) / 2.0
        probe = DiscreteMeasure(
            self.action_set,
            np.vstack([self.action_set.lower, self.action_set.upper]),
            [0.5, 0.5],
        )
        env = {"t": 0.0, "x": mid, "i": 1.0, "mu": probe, "nu": probe}
        for i in range(self.regime_count):
            env["i"] = float(i + 1)
            for e in self.drift[i]:
                _finite_or_raise(ex.evaluate(e, env), "drift")
            for row in self.diffusion[i]:
                for e in row:
                    _finite_or_raise(ex.evaluate(e, env), "diffusion")
        _finite_or_raise(ex.evaluate(self.running_cost, env), "running_cost")
        _finite_or_raise(ex.evaluate(self.terminal_cost, env), "terminal_cost")
        self.rates.generator(mid, probe)

    def default_start(self) -> tuple[np.ndarray, int]:
        if self.starts:
            x0, i0 = self.starts[0]
            return np.asarray(x0, dtype=float), i0
        return (self.truncation_lower + self.truncation_upper) / 2.0, 1

    def clip_state(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.truncation_lower, self.truncation_upper)

    def drift_at(self, x: np.ndarray, regimes: np.ndarray, mu: MeasureBatch) -> np.ndarray:
        """b(x, i, mu) for a path batch; rows are selected per regime."""
        x = np.atleast_2d(x)
        out = np.zeros_like(x)
        for regime in range(1, self.regime_count + 1):
            mask = np.asarray(regimes) == regime
            if not np.any(mask):
                continue
            env = {"x": x[mask], "i": float(regime), "mu": mu.take(mask)}
            cnt = int(np.count_nonzero(mask))
            for c, e in enumerate(self.drift[regime - 1]):
                out[mask, c] = ex.eval_vector(e, env, cnt)
        return out

    def diffusion_at(self, x: np.ndarray, regimes: np.ndarray, mu: MeasureBatch) -> np.ndarray:
        """sigma(x, i, mu) for a path batch, shape (n, d, d)."""
        x = np.atleast_2d(x)
        n, d = x.shape
        out = np.zeros((n, d, d))
        for regime in range(1, self.regime_count + 1):
            mask = np.asarray(regimes) == regime
            if not np.any(mask):
                continue
            env = {"x": x[mask], "i": float(regime), "mu": mu.take(mask)}
            cnt = int(np.count_nonzero(mask))
            for r in range(d):
                for c in range(d):
                    out[mask, r, c] = ex.eval_vector(self.diffusion[regime - 1][r][c], env, cnt)
        return out

    def running_cost_at(self, t, x, regimes, mu: MeasureBatch, nu: MeasureBatch) -> np.ndarray:
        x = np.atleast_2d(x)
        env = {"t": t, "x": x, "i": np.asarray(regimes, dtype=float), "mu": mu, "nu": nu}
        return ex.eval_vector(self.running_cost, env, x.shape[0])

    def terminal_cost_at(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return ex.eval_vector(self.terminal_cost, {"x": x}, x.shape[0])


def _finite_or_raise(value, what):
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"{what} evaluated to a non-finite value at the reference point")


class HybridPath:
    """One simulated trajectory on a step grid.

    ``states``/``regimes`` have n+1 entries, the per-step control measures and
    Brownian increments have n.  The grid length matches the horizon exactly:
    n * dt == t_end - s within 1e-12.
    """

    __slots__ = ("start_time", "dt", "times", "states", "regimes", "mu", "nu", "brownian")

    def __init__(self, start_time, dt, times, states, regimes, mu, nu, brownian):
        n = len(times) - 1
        if abs(n * dt - (times[-1] - times[0])) > _GRID_ABS_TOL * max(1.0, abs(times[-1])):
            raise ValidationError("step grid does not tile the horizon")
        self.start_time = float(start_time)
        self.dt = float(dt)
        self.times = times
        self.states = states
        self.regimes = regimes
        self.mu = tuple(mu)
        self.nu = tuple(nu)
        self.brownian = brownian

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def step_index(self, t: float) -> int:
        """Grid index for time t; raises if the path does not cover t."""
        if t < self.start_time - _TIME_TOL:
            raise UsageError(f"history starts at {self.start_time}, queried at {t}")
        k = int(round((t - self.start_time) / self.dt))
        if abs(self.start_time + k * self.dt - t) > _TIME_TOL:
            k = int(np.floor((t - self.start_time) / self.dt + _TIME_TOL))
        if k > self.n_steps:
            raise UsageError(f"history ends at {self.end_time}, queried at {t}")
        return max(k, 0)

    def state_at(self, t: float):
        """Extension-map lookup: clamped to the segment's endpoint values."""
        k = self.step_index(min(max(t, self.start_time), self.end_time))
        return self.states[k], int(self.regimes[k])


class PathBatch:
    """Vectorized bundle of paths sharing the control's candidate pools."""

    __slots__ = (
        "start_time",
        "dt",
        "times",
        "states",
        "regimes",
        "mu_pool",
        "nu_pool",
        "mu_idx",
        "nu_idx",
        "brownian",
        "path_indices",
        "clamp_count",
    )

    def __init__(self, start_time, dt, times, states, regimes, mu_pool, nu_pool, mu_idx, nu_idx, brownian, path_indices, clamp_count):
        self.start_time = start_time
        self.dt = dt
        self.times = times
        self.states = states
        self.regimes = regimes
        self.mu_pool = mu_pool
        self.nu_pool = nu_pool
        self.mu_idx = mu_idx
        self.nu_idx = nu_idx
        self.brownian = brownian
        self.path_indices = path_indices
        self.clamp_count = clamp_count

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def path(self, j: int) -> HybridPath:
        return HybridPath(
            self.start_time,
            self.dt,
            self.times,
            self.states[j],
            self.regimes[j],
            tuple(self.mu_pool[i] for i in self.mu_idx[j]),
            tuple(self.nu_pool[i] for i in self.nu_idx[j]),
            self.brownian[j],
        )

    @staticmethod
    def concatenate(blocks: list["PathBatch"]) -> "PathBatch":
        head = blocks[0]
        return PathBatch(
            head.start_time,
            head.dt,
            head.times,
            np.concatenate([b.states for b in blocks]),
            np.concatenate([b.regimes for b in blocks]),
            head.mu_pool,
            head.nu_pool,
            np.concatenate([b.mu_idx for b in blocks]),
            np.concatenate([b.nu_idx for b in blocks]),
            np.concatenate([b.brownian for b in blocks]),
            np.concatenate([b.path_indices for b in blocks]),
            sum(b.clamp_count for b in blocks),
        )


def em_step(model: HybridModel, x, regime: int, mu: DiscreteMeasure, dt: float, dw) -> np.ndarray:
    """One explicit Euler step x + b dt + sigma dW (clamped if the model says so)."""
    if dt <= 0:
        raise ValidationError("dt must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dw = np.atleast_1d(np.asarray(dw, dtype=float))
    if dw.shape != (model.state_dim,):
        raise ValidationError(f"dW must have length {model.state_dim}")
    batch = MeasureBatch.constant(mu, 1)
    regimes = np.array([regime])
    b = model.drift_at(x[None, :], regimes, batch)[0]
    sig = model.diffusion_at(x[None, :], regimes, batch)[0]
    with np.errstate(over="ignore", invalid="ignore"):
        out = x + b * dt + sig @ dw
    if not np.all(np.isfinite(out)):
        raise NumericalError("Euler step produced a non-finite state")
    if model.clamp:
        out = model.clip_state(out)
    return out


def _grid_steps(s: float, t_end: float, dt: float) -> int:
    if dt <= 0 or t_end <= s:
        raise ValidationError("need dt > 0 and t_end > s")
    n = int(round((t_end - s) / dt))
    if n < 1 or abs(n * dt - (t_end - s)) > _GRID_ABS_TOL * max(1.0, abs(t_end)):
        raise ValidationError(f"(t_end - s) = {t_end - s!r} is not an integral number of dt = {dt!r} steps")
    return n


def _simulate_block(
    model: HybridModel,
    control: FeedbackControl,
    s: float,
    x0,
    i0: int,
    t_end: float,
    dt: float,
    seed: int,
    path_indices: np.ndarray,
    flip_brownian: bool = False,
) -> PathBatch:
    n_steps = _grid_steps(s, t_end, dt)
    if dt * model.rates.rate_bound > 0.1 + 1e-12:
        raise StepSizeError("dt * rate bound exceeds 0.1; shrink dt")
    d = model.state_dim
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (d,):
        raise ValidationError(f"x0 must have dimension {d}")
    if not 1 <= int(i0) <= model.regime_count:
        raise ValidationError(f"start regime {i0} out of range")
    n_paths = len(path_indices)
    times = s + dt * np.arange(n_steps + 1)

    brownian = np.empty((n_paths, n_steps, d))
    uniforms = np.empty((n_paths, n_steps))
    for row, p in enumerate(path_indices):
        brownian[row] = rng.brownian_increments(seed, int(p), n_steps, d, dt)
        uniforms[row] = rng.switch_uniforms(seed, int(p), n_steps)
    if flip_brownian:
        brownian = -brownian

    states = np.empty((n_paths, n_steps + 1, d))
    regimes = np.empty((n_paths, n_steps + 1), dtype=np.int64)
    start = x0.copy()
    if model.clamp:
        start = model.clip_state(start)
    states[:, 0, :] = start
    regimes[:, 0] = int(i0)
    mu_idx = np.empty((n_paths, n_steps), dtype=np.intp)
    nu_idx = np.empty((n_paths, n_steps), dtype=np.intp)

    mu_pool, nu_pool = control.mu_pool, control.nu_pool
    mu_moments: dict = {}
    nu_moments: dict = {}
    state_free = not model.rates.depends_on_state
    row_cache: dict[tuple[int, int], np.ndarray] = {}
    clamp_count = 0

    for k in range(n_steps):
        t_k = float(times[k])
        x_k = states[:, k, :]
        lam_k = regimes[:, k]
        mi, ni = control.indices(t_k, x_k, lam_k, states[:, : k + 1, :], regimes[:, : k + 1])
        mu_idx[:, k] = mi
        nu_idx[:, k] = ni
        mu_b = MeasureBatch(mu_pool, mi, mu_moments)
        nu_b = MeasureBatch(nu_pool, ni, nu_moments)

        b = model.drift_at(x_k, lam_k, mu_b)
        sig = model.diffusion_at(x_k, lam_k, mu_b)
        with np.errstate(over="ignore", invalid="ignore"):
            x_next = x_k + b * dt + np.einsum("nrc,nc->nr", sig, brownian[:, k, :])
        if not np.all(np.isfinite(x_next)):
            raise SimulationError(f"non-finite state at step {k}")
        if model.clamp:
            clipped = model.clip_state(x_next)
            clamp_count += int(np.count_nonzero(np.any(clipped != x_next, axis=1)))
            x_next = clipped
        elif np.any(x_next < model.truncation_lower) or np.any(x_next > model.truncation_upper):
            raise SimulationError(f"state escaped the truncation box at step {k} (clamping disabled)")
        states[:, k + 1, :] = x_next

        if model.regime_count == 1:
            regimes[:, k + 1] = 1
            continue
        if state_free:
            rows = np.empty((n_paths, model.regime_count))
            for regime in np.unique(lam_k):
                r_mask = lam_k == regime
                for cand in np.unique(ni[r_mask]):
                    key = (int(regime), int(cand))
                    row = row_cache.get(key)
                    if row is None:
                        row = step_transition_probs(
                            model.rates, int(regime), x0 * 0.0, nu_pool[cand], dt
                        )
                        row_cache[key] = row
                    rows[r_mask & (ni == cand)] = row
        else:
            rows = transition_rows_batch(model.rates, lam_k, x_k, nu_b, dt)
        regimes[:, k + 1] = pick_regime(rows, uniforms[:, k])

    return PathBatch(
        s, dt, times, states, regimes, mu_pool, nu_pool, mu_idx, nu_idx, brownian,
        np.asarray(path_indices), clamp_count,
    )


def simulate(
    model: HybridModel,
    control: FeedbackControl,
    s: float,
    x0,
    i0: int,
    t_end: float,
    dt: float,
    seed: int,
) -> HybridPath:
    """Simulate a single path; bit-identical for identical (model, control, seed)."""
    return _simulate_block(model, control, s, x0, i0, t_end, dt, seed, np.array([0])).path(0)


def _block_args(args):
    return _simulate_block(*args)


def simulate_paths(
    model: HybridModel,
    control: FeedbackControl,
    s: float,
    x0,
    i0: int,
    t_end: float,
    dt: float,
    seed: int,
    path_count: int,
    workers: int = 1,
    flip_brownian: bool = False,
    first_path_index: int = 0,
) -> PathBatch:
    """Simulate a batch, optionally fanned out over worker processes.

    Paths are split into contiguous index blocks; per-path counter streams
    make the assembled result independent of the worker count.
    """
    if path_count < 1:
        raise ValidationError("path_count must be >= 1")
    indices = np.arange(first_path_index, first_path_index + path_count)
    workers = max(1, int(workers))
    if workers == 1 or path_count < 2 * workers:
        return _simulate_block(model, control, s, x0, i0, t_end, dt, seed, indices, flip_brownian)
    blocks = np.array_split(indices, workers)
    args = [
        (model, control, s, x0, i0, t_end, dt, seed, blk, flip_brownian)
        for blk in blocks
        if len(blk)
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_block_args, args))
    return PathBatch.concatenate(results)


class HypothesisCheck:
    """One entry of a model validation report."""

    __slots__ = ("name", "passed", "observed", "bound", "detail")

    def __init__(self, name, passed, observed, bound, detail=""):
        self.name = name
        self.passed = bool(passed)
        self.observed = float(observed)
        self.bound = float(bound)
        self.detail = detail

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "observed": self.observed,
            "bound": self.bound,
            "detail": self.detail,
        }


class ModelValidationReport:
    __slots__ = ("checks", "sample_count")

    def __init__(self, checks, sample_count):
        self.checks = list(checks)
        self.sample_count = sample_count

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "sample_count": self.sample_count,
            "checks": [c.to_dict() for c in self.checks],
        }


def _random_measure(gen: np.random.Generator, action_set: ActionSet) -> DiscreteMeasure:
    m = int(gen.integers(1, 4))
    span = action_set.upper - action_set.lower
    atoms = action_set.lower + gen.random((m, action_set.dim)) * span
    raw = gen.random(m) + 1e-3
    return DiscreteMeasure(action_set, atoms, raw / raw.sum())


def validate_model(model: HybridModel, sample_count: int = 1000) -> ModelValidationReport:
    """Empirical check of the declared coefficient hypotheses.

    Draws sample pairs in the truncation box x measure family (independent
    pairs plus small-perturbation pairs, so local slopes are probed too) and
    reports the worst observed ratio against each declared constant:
    the joint drift/diffusion squared-Lipschitz bound, rate nonnegativity,
    the exit-rate bound, the rate Lipschitz bound, and the cost floors.
    """
    if sample_count < 100:
        raise ValidationError("sample_count must be >= 100")
    gen = rng.stream(0, 0, rng.ROLE_VALIDATE)
    d = model.state_dim
    lo, hi = model.truncation_lower, model.truncation_upper
    span = hi - lo
    scale = float(np.max(span))

    def draw_x():
        return lo + gen.random(d) * span

    worst_c1 = 0.0
    worst_c2 = 0.0
    worst_rate_min = np.inf
    worst_exit = 0.0
    f_min = np.inf
    g_min = np.inf

    for trial in range(sample_count):
        # alternate state-only, measure-only, and joint perturbations so the
        # empirical sup is not diluted by the other term in the denominator;
        # state-only pairs alternate far and near ones to probe local slopes
        variant = trial % 3
        x = draw_x()
        mu_a = _random_measure(gen, model.action_set)
        if variant == 0:
            y = draw_x() if trial % 6 == 0 else model.clip_state(x + gen.standard_normal(d) * 1e-3 * scale)
            mu_b = mu_a
        elif variant == 1:
            y = x
            mu_b = _random_measure(gen, model.action_set)
        else:
            y = draw_x()
            mu_b = _random_measure(gen, model.action_set)
        w1 = w1_distance(mu_a, mu_b)
        dist2 = float(np.sum((x - y) ** 2)) + w1**2
        dist1 = float(np.linalg.norm(x - y)) + w1

        ba = MeasureBatch.constant(mu_a, 1)
        bb = MeasureBatch.constant(mu_b, 1)
        for regime in range(1, model.regime_count + 1):
            reg = np.array([regime])
            if dist2 > 1e-14:
                db = model.drift_at(x[None, :], reg, ba)[0] - model.drift_at(y[None, :], reg, bb)[0]
                ds = model.diffusion_at(x[None, :], reg, ba)[0] - model.diffusion_at(y[None, :], reg, bb)[0]
                num = float(np.sum(db**2) + np.sum(ds**2))
                worst_c1 = max(worst_c1, num / dist2)

        qx = model.rates.off_diagonal(x, mu_a)
        qy = model.rates.off_diagonal(y, mu_b)
        worst_rate_min = min(worst_rate_min, float(np.min(qx)), float(np.min(qy)))
        worst_exit = max(worst_exit, float(np.max(qx.sum(axis=-1))), float(np.max(qy.sum(axis=-1))))
        if dist1 > 1e-14:
            worst_c2 = max(worst_c2, float(np.max(np.abs(qx - qy))) / dist1)

        t = gen.random() * model.horizon
        lam = np.array([int(gen.integers(1, model.regime_count + 1))])
        f_min = min(f_min, float(model.running_cost_at(t, x[None, :], lam, ba, bb)[0]))
        g_min = min(g_min, float(model.terminal_cost_at(x[None, :])[0]))

    checks = [
        HypothesisCheck(
            "drift_diffusion_lipschitz",
            worst_c1 <= model.lipschitz_drift_diffusion + 1e-9,
            worst_c1,
            model.lipschitz_drift_diffusion,
            "max (|db|^2 + |dsigma|^2) / (|dx|^2 + W1^2) over sampled pairs",
        ),
        HypothesisCheck(
            "rate_nonnegative",
            worst_rate_min >= -1e-12,
            worst_rate_min,
            0.0,
            "min off-diagonal rate over samples",
        ),
        HypothesisCheck(
            "rate_bound",
            worst_exit <= model.rates.rate_bound + 1e-9,
            worst_exit,
            model.rates.rate_bound,
            "max exit rate over samples",
        ),
        HypothesisCheck(
            "rate_lipschitz",
            worst_c2 <= model.lipschitz_rates + 1e-9,
            worst_c2,
            model.lipschitz_rates,
            "max |dq| / (|dx| + W1) over sampled pairs",
        ),
        HypothesisCheck(
            "running_cost_floor",
            f_min >= model.running_cost_floor - 1e-12,
            f_min,
            model.running_cost_floor,
            "min running cost over samples",
        ),
        HypothesisCheck(
            "terminal_cost_floor",
            g_min >= model.terminal_cost_floor - 1e-12,
            g_min,
            model.terminal_cost_floor,
            "min terminal cost over samples",
        ),
        HypothesisCheck(
            "action_set_compact",
            np.isfinite(model.action_set.diameter) and model.action_set.diameter > 0,
            model.action_set.diameter,
            np.inf,
            "action set box diameter",
        ),
    ]
    return ModelValidationReport(checks, sample_count)
