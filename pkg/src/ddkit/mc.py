"""Monte Carlo oracle for the drawdown laws.

Simulates paths until the first time the running maximum exceeds the
path by delta, and estimates tails, transforms, and excursion counts
with CLT error bars.  Everything the analytic layer produces can be
checked against these estimates, so the engine is built for
reproducibility first and speed second:

* every path owns a counter-based random stream keyed on
  (seed, path index), so results are bit-identical no matter how the
  work is chunked or how many threads run;
* draws are consumed in fixed blocks per path (normals, then bridge
  uniforms when the scheme needs them), so a path's randomness depends
  only on its own history;
* reductions concatenate chunk results in index order.

Schemes: ``euler`` is the generic first-order step with drawdown
detection on the grid; ``exact_bm`` uses the model's exact Gaussian
transition (arithmetic, lognormal, or mean-reverting) plus per-step
Brownian-bridge extremes: the bridge minimum probes for the drawdown
and the bridge maximum feeds the running maximum.  Correcting only
the minimum side would leave the grid maximum lagging the true one by
about 0.58 sigma sqrt(dt), which shows up as a drawdown threshold
inflated by the same amount; sampling both sides removes every
O(sqrt(dt)) term.  The two extremes of one step are drawn
independently, and a step that first sets a new maximum and then
falls delta below it within the same step is not seen; both effects
are O(dt) when delta is several step standard deviations, which the
dt <= delta^2/100 guard enforces.  For the mean-reverting kind the
bridge uses the constant diffusion coefficient, again an O(dt)
approximation.  The dt-pair comparisons in the verification layer
measure what is left.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import signal

from .errors import UnsupportedModelError, ValidationError
from .models import DiffusionModel, validate_query

_MOD = "mc"

# partitioning contract: fixed path chunks and per-path draw blocks
_CHUNK_PATHS = 2048
_BLOCK_STEPS = 256


def thread_cap() -> int:
    """Worker cap from DDKIT_THREADS; 0 or unset means auto."""
    raw = os.environ.get("DDKIT_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError("DDKIT_THREADS must be an integer",
                              operation="thread_cap", value=raw, module=_MOD)
    if n < 0:
        raise ValidationError("DDKIT_THREADS must be >= 0",
                              operation="thread_cap", value=n, module=_MOD)
    if n == 0:
        return min(8, os.cpu_count() or 1)
    return n


# ---------------------------------------------------------------------------
# configuration and sample types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McConfig:
    """Simulation settings.

    dt must also satisfy dt <= delta^2 / 100 for the query it is used
    with; that guard is checked where delta is known.  t_max should be
    generous: paths still running at the horizon are counted, bounded,
    and warned about, never silently dropped.
    """

    n_paths: int
    dt: float
    t_max: float
    seed: int
    scheme: str = "exact_bm"

    def __post_init__(self):
        if not (isinstance(self.n_paths, int) and self.n_paths >= 1000):
            raise ValidationError("n_paths must be an integer >= 1000",
                                  operation="McConfig", value=self.n_paths,
                                  module=_MOD)
        if not (isinstance(self.dt, (int, float)) and 0 < self.dt
                and math.isfinite(self.dt)):
            raise ValidationError("dt must be positive and finite",
                                  operation="McConfig", value=self.dt,
                                  module=_MOD)
        if not (isinstance(self.t_max, (int, float)) and self.t_max >= self.dt
                and math.isfinite(self.t_max)):
            raise ValidationError("t_max must be finite and >= dt",
                                  operation="McConfig", value=self.t_max,
                                  module=_MOD)
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise ValidationError("seed must be a 64-bit unsigned integer",
                                  operation="McConfig", value=self.seed,
                                  module=_MOD)
        if self.scheme not in ("euler", "exact_bm"):
            raise ValidationError("scheme must be 'euler' or 'exact_bm'",
                                  operation="McConfig", value=self.scheme,
                                  module=_MOD)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_max / self.dt)))


@dataclass(frozen=True)
class ExcursionRecord:
    """One excursion below the running maximum: the level it hangs
    from, how deep it got, and how long it lasted."""

    level: float
    depth: float
    lifetime: float

    def __post_init__(self):
        if not (self.depth > 0 and self.lifetime > 0):
            raise ValidationError("depth and lifetime must be positive",
                                  operation="ExcursionRecord",
                                  value=(self.depth, self.lifetime),
                                  module=_MOD)


@dataclass(frozen=True)
class PathSample:
    """Stopping data of one simulated path."""

    tau_hat: float
    m_tau_hat: float
    stopped: bool
    excursions: tuple = ()


@dataclass(frozen=True, eq=False)
class PathCollection:
    """Column-oriented set of PathSamples from one simulate() call.

    Behaves as a sequence of PathSample; the estimators read the
    arrays directly.
    """

    x: float
    delta: float
    cfg: McConfig
    tau_hat: np.ndarray
    m_tau_hat: np.ndarray
    stopped: np.ndarray

    def __post_init__(self):
        n = self.cfg.n_paths
        if not (self.tau_hat.shape == self.m_tau_hat.shape
                == self.stopped.shape == (n,)):
            raise ValidationError("sample arrays must have one row per path",
                                  operation="PathCollection", module=_MOD)
        if np.any(self.m_tau_hat[self.stopped] < self.x):
            raise ValidationError("a stopped path reported a maximum below "
                                  "its start", operation="PathCollection",
                                  module=_MOD)
        horizon = self.cfg.n_steps * self.cfg.dt
        if np.any(self.tau_hat > horizon * (1 + 1e-12)):
            raise ValidationError("tau_hat beyond the horizon",
                                  operation="PathCollection", module=_MOD)

    def __len__(self) -> int:
        return self.cfg.n_paths

    def __getitem__(self, i: int) -> PathSample:
        return PathSample(tau_hat=float(self.tau_hat[i]),
                          m_tau_hat=float(self.m_tau_hat[i]),
                          stopped=bool(self.stopped[i]))

    def __iter__(self) -> Iterator[PathSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def unstopped_fraction(self) -> float:
        return float(1.0 - self.stopped.mean())


# ---------------------------------------------------------------------------
# per-path streams and block stepping
# ---------------------------------------------------------------------------

def _generators(seed: int, first: int, count: int) -> list:
    return [np.random.Generator(
        np.random.Philox(key=np.array([seed, first + i], dtype=np.uint64)))
        for i in range(count)]


def _draw_normals(gens, rows, length):
    return np.stack([gens[i].standard_normal(length) for i in rows])


def _draw_uniforms(gens, rows, length):
    # 1 - random() lies in ]0, 1]; at exactly 1 the bridge minimum
    # degenerates to the endpoint minimum, which is the right limit
    return np.stack([1.0 - gens[i].random(length) for i in rows])


def _exact_blocks(model, x_cur, z, dt):
    """(X block, previous X per step) under the exact Gaussian step."""
    step = model.exact_step
    if step.kind == "arith":
        inc = step.mu_sim * dt + math.sqrt(step.sig_sq_sim * dt) * z
        xb = x_cur[:, None] + np.cumsum(inc, axis=1)
    elif step.kind == "loggauss":
        inc = step.mu_sim * dt + math.sqrt(step.sig_sq_sim * dt) * z
        xb = x_cur[:, None] * np.exp(np.cumsum(inc, axis=1))
    elif step.kind == "ou":
        a = math.exp(-step.theta * dt)
        sd = math.sqrt(step.sig_sq_sim * (-math.expm1(-2.0 * step.theta * dt))
                       / (2.0 * step.theta))
        d0 = x_cur - step.mean
        dev, _ = signal.lfilter([1.0], [1.0, -a], sd * z, axis=1,
                                zi=(a * d0)[:, None])
        xb = step.mean + dev
    else:  # pragma: no cover - catalog kinds are closed above
        raise UnsupportedModelError("unknown exact step kind",
                                    operation="simulate", value=step.kind,
                                    module=_MOD)
    xprev = np.concatenate([x_cur[:, None], xb[:, :-1]], axis=1)
    return xb, xprev


def _bridge_extremes(model, xprev, xb, u_min, u_max, dt):
    """Within-step (minimum, maximum) samples of the Brownian bridge
    between consecutive step ends, in the state coordinate."""
    step = model.exact_step
    s2 = step.bridge_sig_sq
    if step.kind == "loggauss":
        # the bridge is exact in log space; state extremes are its exp
        a, b = np.log(xprev), np.log(xb)
    else:
        a, b = xprev, xb
    gap = a - b
    root_lo = np.sqrt(gap * gap - 2.0 * s2 * dt * np.log(u_min))
    root_hi = np.sqrt(gap * gap - 2.0 * s2 * dt * np.log(u_max))
    lo = 0.5 * (a + b - root_lo)
    hi = 0.5 * (a + b + root_hi)
    if step.kind == "loggauss":
        return np.exp(lo), np.exp(hi)
    return lo, hi


def _euler_blocks(model, x_cur, z, dt):
    a, b = model.interval
    lo = a + 1e-12 * (1.0 + abs(a)) if math.isfinite(a) else -math.inf
    hi = b - 1e-12 * (1.0 + abs(b)) if math.isfinite(b) else math.inf
    p, L = z.shape
    xb = np.empty((p, L))
    xc = x_cur
    rdt = math.sqrt(dt)
    for k in range(L):
        mu = np.asarray(model.drift(xc), dtype=float)
        s2 = np.asarray(model.diffusion_sq(xc), dtype=float)
        xc = xc + mu * dt + np.sqrt(s2) * rdt * z[:, k]
        # a first-order step can jump over an endpoint the diffusion
        # itself cannot reach; pin it just inside
        xc = np.clip(xc, lo, hi)
        xb[:, k] = xc
    xprev = np.concatenate([x_cur[:, None], xb[:, :-1]], axis=1)
    return xb, xprev


def _require_scheme(model, cfg):
    if cfg.scheme == "exact_bm" and model.exact_step is None:
        raise UnsupportedModelError(
            "this model has no exact Gaussian step; use scheme='euler'",
            operation="simulate", value=model.model_id, module=_MOD)


# ---------------------------------------------------------------------------
# drawdown simulation
# ---------------------------------------------------------------------------

def _drawdown_chunk(model, x, delta, cfg, first, count):
    gens = _generators(cfg.seed, first, count)
    n_steps = cfg.n_steps
    dt = cfg.dt
    bridge = cfg.scheme == "exact_bm"

    x_cur = np.full(count, float(x))
    m_cur = np.full(count, float(x))
    tau = np.full(count, n_steps * dt)
    m_tau = np.full(count, float(x))
    stopped = np.zeros(count, dtype=bool)
    alive = np.arange(count)
    step_base = 0

    while alive.size and step_base < n_steps:
        length = min(_BLOCK_STEPS, n_steps - step_base)
        z = _draw_normals(gens, alive, length)
        if bridge:
            u_min = _draw_uniforms(gens, alive, length)
            u_max = _draw_uniforms(gens, alive, length)
            xb, xprev = _exact_blocks(model, x_cur[alive], z, dt)
            probe, tops = _bridge_extremes(model, xprev, xb, u_min, u_max,
                                           dt)
        else:
            xb, _ = _euler_blocks(model, x_cur[alive], z, dt)
            probe, tops = xb, xb
        # running maximum before each step's end; the probe (bridge
        # minimum, or the grid point itself) stops the path when it
        # falls delta below.  A new-maximum step cannot stop: its probe
        # stays above the old maximum minus delta or the bridge dip is
        # caught on the spot.
        m_shift = np.maximum.accumulate(
            np.concatenate([m_cur[alive][:, None], tops[:, :-1]], axis=1),
            axis=1)
        hit = m_shift - probe >= delta
        any_hit = hit.any(axis=1)
        k_hit = np.argmax(hit, axis=1)

        rows = np.flatnonzero(any_hit)
        if rows.size:
            g = alive[rows]
            kk = k_hit[rows]
            off = 0.5 if bridge else 1.0
            tau[g] = (step_base + kk + off) * dt
            m_tau[g] = m_shift[rows, kk]
            stopped[g] = True

        keep = np.flatnonzero(~any_hit)
        x_cur[alive[keep]] = xb[keep, -1]
        m_cur[alive[keep]] = np.maximum(m_cur[alive[keep]],
                                        np.max(tops[keep], axis=1))
        alive = alive[keep]
        step_base += length

    m_tau[~stopped] = m_cur[~stopped]
    tau[~stopped] = n_steps * dt
    return tau, m_tau, stopped


def simulate(model: DiffusionModel, x: float, delta: float,
             cfg: McConfig) -> PathCollection:
    """Run n_paths independent trajectories until the first drawdown of
    size delta, the horizon, or the state space ends.

    Identical (seed, cfg) give bit-identical results at any thread
    count: every path's randomness is keyed on (seed, path index) and
    consumed in fixed blocks.
    """
    validate_query(model, x, delta)
    _require_scheme(model, cfg)
    if cfg.dt > delta * delta / 100.0:
        raise ValidationError(
            "dt must be at most delta^2 / 100 to resolve the drawdown",
            operation="simulate", value=cfg.dt, module=_MOD)

    chunks = [(i, min(_CHUNK_PATHS, cfg.n_paths - i))
              for i in range(0, cfg.n_paths, _CHUNK_PATHS)]
    workers = min(thread_cap(), len(chunks))
    if workers <= 1:
        parts = [_drawdown_chunk(model, x, delta, cfg, f, c)
                 for f, c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_drawdown_chunk, model, x, delta, cfg, f, c)
                    for f, c in chunks]
            parts = [f.result() for f in futs]

    tau = np.concatenate([p[0] for p in parts])
    m_tau = np.concatenate([p[1] for p in parts])
    stopped = np.concatenate([p[2] for p in parts])
    out = PathCollection(x=float(x), delta=float(delta), cfg=cfg,
                         tau_hat=tau, m_tau_hat=m_tau, stopped=stopped)
    if out.unstopped_fraction > 0.01:
        warnings.warn(
            f"{out.unstopped_fraction:.1%} of paths did not reach the "
            f"drawdown by t_max={cfg.t_max:g}; estimates carry that bias",
            stacklevel=2)
    return out


# ---------------------------------------------------------------------------
# coupled dt-pairs: same randomness at dt and dt/2
# ---------------------------------------------------------------------------

def _paired_normals(model, cfg, z, dt_half):
    """Coarse-step normals built from pairs of fine-step normals.

    Two consecutive exact steps of size dt/2 compose into one exact
    step of size dt driven by this combination, so the two arms ride
    the same noise and their difference isolates discretization bias.
    """
    z1, z2 = z[:, 0::2], z[:, 1::2]
    step = model.exact_step
    if cfg.scheme == "exact_bm" and step is not None and step.kind == "ou":
        a = math.exp(-step.theta * dt_half)
        return (a * z1 + z2) / math.sqrt(1.0 + a * a)
    return (z1 + z2) / math.sqrt(2.0)


def _paired_chunk(model, x, delta, cfg, first, count):
    """One chunk of the coupled (dt, dt/2) pair; cfg.dt is the coarse
    step.  Returns two result triples, fine first."""
    gens = _generators(cfg.seed, first, count)
    dt_c = cfg.dt
    dt_f = 0.5 * dt_c
    n_blocks = -(-cfg.n_steps // (_BLOCK_STEPS // 2))
    bridge = cfg.scheme == "exact_bm"
    lc_full = _BLOCK_STEPS // 2

    arms = []
    for dt in (dt_f, dt_c):
        arms.append({
            "dt": dt,
            "x": np.full(count, float(x)),
            "m": np.full(count, float(x)),
            "tau": np.full(count, cfg.n_steps * dt_c),
            "mt": np.full(count, float(x)),
            "stopped": np.zeros(count, dtype=bool),
            "step": 0,
        })
    alive = np.arange(count)

    for blk in range(n_blocks):
        lc = min(lc_full, cfg.n_steps - blk * lc_full)
        lf = 2 * lc
        z = _draw_normals(gens, alive, lf)
        z_arm = {0: z, 1: _paired_normals(model, cfg, z, dt_f)}
        if bridge:
            u = {(i, j): _draw_uniforms(gens, alive, lf if i == 0 else lc)
                 for i in (0, 1) for j in (0, 1)}
        arm_alive = []
        for i, st in enumerate(arms):
            dt = st["dt"]
            length = lf if i == 0 else lc
            live = ~st["stopped"][alive]
            if bridge:
                xb, xprev = _exact_blocks(model, st["x"][alive], z_arm[i],
                                          dt)
                probe, tops = _bridge_extremes(model, xprev, xb,
                                               u[(i, 0)], u[(i, 1)], dt)
            else:
                xb, _ = _euler_blocks(model, st["x"][alive], z_arm[i], dt)
                probe, tops = xb, xb
            m_shift = np.maximum.accumulate(
                np.concatenate([st["m"][alive][:, None], tops[:, :-1]],
                               axis=1), axis=1)
            hit = (m_shift - probe >= delta) & live[:, None]
            any_hit = hit.any(axis=1)
            k_hit = np.argmax(hit, axis=1)
            rows = np.flatnonzero(any_hit)
            if rows.size:
                g = alive[rows]
                kk = k_hit[rows]
                off = 0.5 if bridge else 1.0
                st["tau"][g] = (st["step"] + kk + off) * dt
                st["mt"][g] = m_shift[rows, kk]
                st["stopped"][g] = True
            rest = np.flatnonzero(live & ~any_hit)
            st["x"][alive[rest]] = xb[rest, -1]
            st["m"][alive[rest]] = np.maximum(
                st["m"][alive[rest]], np.max(tops[rest], axis=1))
            st["step"] += length
            arm_alive.append(live & ~any_hit)
        either = arm_alive[0] | arm_alive[1]
        alive = alive[either]
        if not alive.size:
            break

    out = []
    for st in arms:
        un = ~st["stopped"]
        st["mt"][un] = st["m"][un]
        st["tau"][un] = cfg.n_steps * dt_c
        out.append((st["tau"], st["mt"], st["stopped"]))
    return out[0], out[1]


def paired_simulate(model: DiffusionModel, x: float, delta: float,
                    cfg: McConfig) -> tuple[PathCollection, PathCollection]:
    """Coupled simulations at cfg.dt/2 and cfg.dt over shared noise.

    Returns (fine, coarse).  Because the arms share every increment,
    the difference of their estimates measures the discretization bias
    of halving dt directly, with far less noise than two independent
    runs would leave; that is the dt-pair rule's measurement.
    """
    validate_query(model, x, delta)
    _require_scheme(model, cfg)
    if cfg.dt > delta * delta / 100.0:
        raise ValidationError(
            "dt must be at most delta^2 / 100 to resolve the drawdown",
            operation="paired_simulate", value=cfg.dt, module=_MOD)

    chunks = [(i, min(_CHUNK_PATHS, cfg.n_paths - i))
              for i in range(0, cfg.n_paths, _CHUNK_PATHS)]
    workers = min(thread_cap(), len(chunks))
    if workers <= 1:
        parts = [_paired_chunk(model, x, delta, cfg, f, c)
                 for f, c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_paired_chunk, model, x, delta, cfg, f, c)
                    for f, c in chunks]
            parts = [f.result() for f in futs]

    cols = []
    # both arms simulate exactly n_steps coarse steps of time; an
    # aligned t_max keeps each arm's own step count consistent with it
    horizon = cfg.n_steps * cfg.dt
    for armidx, dt in ((0, 0.5 * cfg.dt), (1, cfg.dt)):
        arm_cfg = McConfig(n_paths=cfg.n_paths, dt=dt, t_max=horizon,
                           seed=cfg.seed, scheme=cfg.scheme)
        tau = np.concatenate([p[armidx][0] for p in parts])
        m_tau = np.concatenate([p[armidx][1] for p in parts])
        stopped = np.concatenate([p[armidx][2] for p in parts])
        cols.append(PathCollection(x=float(x), delta=float(delta),
                                   cfg=arm_cfg, tau_hat=tau,
                                   m_tau_hat=m_tau, stopped=stopped))
    fine, coarse = cols
    if fine.unstopped_fraction > 0.01:
        warnings.warn(
            f"{fine.unstopped_fraction:.1%} of paths did not reach the "
            f"drawdown by t_max={cfg.t_max:g}; estimates carry that bias",
            stacklevel=2)
    return fine, coarse


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def _as_arrays(samples):
    if isinstance(samples, PathCollection):
        return samples.tau_hat, samples.m_tau_hat, samples.stopped, samples
    rows = list(samples)
    if not rows:
        raise ValidationError("no samples", operation="estimate", module=_MOD)
    tau = np.array([s.tau_hat for s in rows])
    m = np.array([s.m_tau_hat for s in rows])
    st = np.array([s.stopped for s in rows])
    return tau, m, st, None


def _warn_unstopped(stopped, context):
    frac = float(1.0 - stopped.mean())
    if frac > 0.01:
        warnings.warn(f"{frac:.1%} of paths unstopped in {context}; "
                      "their contribution is bounded, not known",
                      stacklevel=3)
    return frac


def estimate_tail(samples, y: float) -> tuple[float, float]:
    """Empirical P(M_tau > y) with its CLT standard error.

    Paths still running at the horizon contribute their maximum so
    far, which can only undercount; the unstopped fraction bounds the
    effect and triggers a warning above 1%.
    """
    tau, m, st, _ = _as_arrays(samples)
    _warn_unstopped(st, "estimate_tail")
    n = m.size
    p = float(np.mean(m > y))
    se = math.sqrt(p * (1.0 - p) / n)
    return p, se


def estimate_transform(samples, alpha: float, beta: float) -> tuple[float, float]:
    """Empirical E[exp(-alpha tau - beta M_tau); stopped] with standard
    error.  Unstopped paths contribute 0 here and at most
    exp(-alpha t_max - beta max_so_far) each; the gap is the bias
    bound quoted in the warning."""
    if alpha < 0 or beta < 0:
        raise ValidationError("alpha and beta must be >= 0",
                              operation="estimate_transform",
                              value=(alpha, beta), module=_MOD)
    tau, m, st, _ = _as_arrays(samples)
    with np.errstate(under="ignore"):
        vals = np.where(st, np.exp(-alpha * tau - beta * m), 0.0)
    n = vals.size
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    frac = float(1.0 - st.mean())
    if frac > 0.01:
        with np.errstate(under="ignore"):
            high = est + float(np.where(~st, np.exp(-alpha * tau - beta * m),
                                        0.0).mean())
        warnings.warn(
            f"{frac:.1%} of paths unstopped; the transform lies in "
            f"[{est:.6g}, {high:.6g}]", stacklevel=2)
    return est, se


def tau_cdf_estimate(samples, t: float) -> tuple[float, float]:
    """Empirical P(tau <= t) with standard error; valid for t below the
    horizon, where stopping is fully observed."""
    tau, m, st, col = _as_arrays(samples)
    if col is not None and t > col.cfg.t_max:
        raise ValidationError("t beyond the simulated horizon",
                              operation="tau_cdf_estimate", value=t,
                              module=_MOD)
    p = float(np.mean(st & (tau <= t)))
    se = math.sqrt(p * (1.0 - p) / tau.size)
    return p, se


# ---------------------------------------------------------------------------
# excursions below the running maximum
# ---------------------------------------------------------------------------

def extract_excursions(path: np.ndarray, dt: float, delta: float,
                       band: tuple[float, float]) -> list[ExcursionRecord]:
    """Excursions of a gridded trajectory that start in ]band0, band1]
    and reach depth >= delta.

    An excursion is a maximal run strictly below the running maximum;
    its level is the maximum it hangs from.  The final, possibly
    unfinished run is included when already deep enough: its depth is a
    fact of the observed path.  The list's length is the Poisson count
    the excursion law predicts for the band.
    """
    x = np.asarray(path, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValidationError("path must be a 1d array of at least 2 points",
                              operation="extract_excursions", module=_MOD)
    lo, hi = float(band[0]), float(band[1])
    if not (lo < hi):
        raise ValidationError("band must have lo < hi",
                              operation="extract_excursions", value=(lo, hi),
                              module=_MOD)
    m = np.maximum.accumulate(x)
    # segment boundaries where the path touches or raises its maximum
    is_top = np.concatenate([[True], x[1:] >= m[:-1]])
    starts = np.flatnonzero(is_top)
    mins = np.minimum.reduceat(x, starts)
    levels = m[starts]
    ends = np.concatenate([starts[1:], [x.size]])
    out = []
    for s, e, lev, mn in zip(starts, ends, levels, mins):
        depth = float(lev - mn)
        if depth >= delta and lo < lev <= hi:
            out.append(ExcursionRecord(level=float(lev), depth=depth,
                                       lifetime=float((e - s) * dt)))
    return out


_EXC_BLOCK_STEPS = 4096


def _scan_excursion_row(row, lev0, mn0, lo, hi, delta):
    """Count closed band excursions along one block of one path.

    Returns (count, new_level, new_min, k_done) where k_done is the
    index of the first point above hi (the count is final there: no
    excursion can start in the band once the maximum passed hi), or -1.
    """
    k_done = -1
    over = row > hi
    if over.any():
        k_done = int(np.argmax(over))
        row = row[:k_done + 1]
    m_run = np.maximum(lev0, np.maximum.accumulate(row))
    prev = np.concatenate(([lev0], m_run[:-1]))
    starts = np.flatnonzero(row >= prev)
    c = 0
    if starts.size:
        s0 = int(starts[0])
        first_min = mn0 if s0 == 0 else min(mn0, float(row[:s0].min()))
        if lev0 - first_min >= delta and lo < lev0 <= hi:
            c += 1
        if starts.size > 1:
            mins = np.minimum.reduceat(row, starts)
            levs = m_run[starts]
            deep = levs[:-1] - mins[:-1] >= delta
            band = (levs[:-1] > lo) & (levs[:-1] <= hi)
            c += int(np.count_nonzero(deep & band))
        last = int(starts[-1])
        new_lev = float(m_run[-1])
        new_min = float(row[last:].min())
    else:
        new_lev = lev0
        new_min = min(mn0, float(row.min()))
    return c, new_lev, new_min, k_done


def _excursion_chunk(model, x, y, delta, cfg, first, count):
    gens = _generators(cfg.seed, first, count)
    n_steps = cfg.n_steps
    dt = cfg.dt
    exact = cfg.scheme == "exact_bm"

    x_cur = np.full(count, float(x))
    level = np.full(count, float(x))
    cur_min = np.full(count, float(x))
    counts = np.zeros(count, dtype=np.int64)
    done = np.zeros(count, dtype=bool)
    alive = np.arange(count)
    step_base = 0

    while alive.size and step_base < n_steps:
        length = min(_EXC_BLOCK_STEPS, n_steps - step_base)
        z = _draw_normals(gens, alive, length)
        if exact:
            xb, _ = _exact_blocks(model, x_cur[alive], z, dt)
        else:
            xb, _ = _euler_blocks(model, x_cur[alive], z, dt)
        for r in range(alive.size):
            g = alive[r]
            c, lev, mn, k_done = _scan_excursion_row(
                xb[r], level[g], cur_min[g], x, y, delta)
            counts[g] += c
            level[g] = lev
            cur_min[g] = mn
            if k_done >= 0:
                done[g] = True
            else:
                x_cur[g] = xb[r, -1]
        alive = alive[~done[alive]]
        step_base += length

    # flush excursions still open at the horizon: their depth is real
    open_deep = (~done & (level > x) & (level <= y)
                 & (level - cur_min >= delta))
    counts[open_deep] += 1
    return counts, done


def excursion_counts(model: DiffusionModel, x: float, y: float, delta: float,
                     cfg: McConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-path counts of delta-deep excursions starting in ]x, y].

    Paths run without drawdown stopping, so every excursion from the
    band is observed; a path finishes at its first new maximum above y,
    where its count is final: excursions hang from ever higher levels
    and none can start in the band afterwards.  (Stopping at the first
    delta-drawdown from above y, the other natural reading, sees a
    longer path but the same count.)  Depths are measured on the grid;
    they undercount by O(sqrt(dt)), which a dt-refinement pair removes
    in the verification layer.  Hitting times of y can be heavy tailed,
    so pick t_max generously; paths still short of y at the horizon are
    reported in the finished array and bias the mean low.
    Returns (counts, finished).
    """
    validate_query(model, x, delta)
    _require_scheme(model, cfg)
    a, b = model.interval
    if not (x < y < b):
        raise ValidationError("need x < y inside the state space",
                              operation="excursion_counts", value=y,
                              module=_MOD)
    if cfg.dt > delta * delta / 100.0:
        raise ValidationError(
            "dt must be at most delta^2 / 100 to resolve the drawdown",
            operation="excursion_counts", value=cfg.dt, module=_MOD)

    chunks = [(i, min(_CHUNK_PATHS, cfg.n_paths - i))
              for i in range(0, cfg.n_paths, _CHUNK_PATHS)]
    workers = min(thread_cap(), len(chunks))
    if workers <= 1:
        parts = [_excursion_chunk(model, x, y, delta, cfg, f, c)
                 for f, c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_excursion_chunk, model, x, y, delta, cfg,
                                f, c) for f, c in chunks]
            parts = [f.result() for f in futs]
    counts = np.concatenate([p[0] for p in parts])
    done = np.concatenate([p[1] for p in parts])
    frac = float(1.0 - done.mean())
    if frac > 0.01:
        warnings.warn(f"{frac:.1%} of excursion paths hit the horizon "
                      "before the stopping drawdown", stacklevel=2)
    return counts, done


# ---------------------------------------------------------------------------
# raw trajectories (demos, diagnostics, extract_excursions input)
# ---------------------------------------------------------------------------

def sample_trajectory(model: DiffusionModel, x: float, cfg: McConfig,
                      n_steps: int | None = None,
                      path_index: int = 0) -> np.ndarray:
    """One gridded trajectory of n_steps steps (default: the horizon),
    drawn from the stream of the given path index."""
    if not model.contains(x):
        raise ValidationError("start must be interior",
                              operation="sample_trajectory", value=x,
                              module=_MOD)
    _require_scheme(model, cfg)
    steps = cfg.n_steps if n_steps is None else int(n_steps)
    if steps < 1:
        raise ValidationError("n_steps must be >= 1",
                              operation="sample_trajectory", value=n_steps,
                              module=_MOD)
    gens = _generators(cfg.seed, path_index, 1)
    out = np.empty(steps + 1)
    out[0] = x
    x_cur = np.full(1, float(x))
    donefill = 1
    while donefill <= steps:
        length = min(_BLOCK_STEPS, steps - donefill + 1)
        z = _draw_normals(gens, [0], length)
        if cfg.scheme == "exact_bm":
            xb, _ = _exact_blocks(model, x_cur, z, cfg.dt)
        else:
            xb, _ = _euler_blocks(model, x_cur, z, cfg.dt)
        out[donefill:donefill + length] = xb[0]
        x_cur = xb[:, -1].copy()
        donefill += length
    return out
