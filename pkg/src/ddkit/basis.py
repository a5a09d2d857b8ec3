"""Local solution bases for (1/2) sigma_sq g'' + mu g' = alpha g.

Each drawdown window [z - delta, z] gets its own initial-value basis:

    u(l) = 0,  u'(l) = S'(l)      (vanishing solution, unit scale slope)
    v(l) = 1,  v'(l) = 0          (flat solution)

In scale-derivative terms (g+ = g'/S') this pins the scale Wronskian

    w(x) = (u'(x) v(x) - u(x) v'(x)) / S'(x)

to exactly +1 on the whole window, which is the invariant monitored by
every solve.  The pair is never integrated across long ranges: windows
are short, so the exponential dominance of the growing solution stays
mild and the quotients formed downstream stay well conditioned.

Integration is classical RK4 on a fixed grid, vectorized over a batch
of windows, validated by step doubling against the configured
tolerances, with renormalization checkpoints: whenever a row's state
exceeds ~1e120 it is rescaled by a common factor and the log of that
factor is carried separately.  Common factors cancel in every quotient
the drawdown laws form, so the bookkeeping is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import BPoly

from .errors import DegenerateBasisError, NumericError, ValidationError
from .models import DiffusionModel, scale_density

_MOD = "basis"

_RENORM_UP = 1e100
_RENORM_DOWN = 1e-100
_CHECKPOINT_FRACS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class OdeSettings:
    """Accuracy knobs for the window solver.

    rel_tol / abs_tol bound the accepted step-doubling gap at the right
    endpoint; the sweep also has to hold the Wronskian monitor within
    10 * rel_tol before a grid is accepted, because determinant error
    of RK4 is one order worse than state error for drifted models and
    the endpoint gap alone would let it slip through.  max_steps caps
    the finest grid tried before giving up.  normalization optionally
    rescales the stored basis so that the larger solution has magnitude
    1 at that point; the factor is folded into the log-scale channel
    and cancels in all quotients.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_steps: int = 2_000_000
    normalization: float | None = None

    def __post_init__(self):
        for name, v in (("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)):
            if not (0.0 < v <= 1e-4):
                raise ValidationError(f"{name} must lie in ]0, 1e-4]",
                                      operation="OdeSettings", value=v, module=_MOD)
        if self.max_steps < 1000:
            raise ValidationError("max_steps must be at least 1000",
                                  operation="OdeSettings", value=self.max_steps,
                                  module=_MOD)


DEFAULT_SETTINGS = OdeSettings()


# ---------------------------------------------------------------------------
# batched RK4 sweep
# ---------------------------------------------------------------------------

def _rhs(model, alpha, x, y, out):
    mu = np.asarray(model.drift(x), dtype=float)
    s2 = np.asarray(model.diffusion_sq(x), dtype=float)
    fac = 2.0 / s2
    out[:, 0] = y[:, 1]
    out[:, 1] = fac * (alpha * y[:, 0] - mu * y[:, 1])
    out[:, 2] = y[:, 3]
    out[:, 3] = fac * (alpha * y[:, 2] - mu * y[:, 3])
    return out


def _sweep_scalar(model, alpha, l, r, y0, n, *, record_dense=False,
                  checkpoints=()):
    """Single-window variant of _sweep running on python floats.

    Identical state, shear, and renormalization rules; the model
    coefficients are evaluated in one vectorized pass over the
    half-step grid up front, so the time loop has no per-step numpy
    dispatch.  Long single-window solves (large alpha, long windows)
    are an order of magnitude faster this way.
    """
    lf, rf = float(l[0]), float(r[0])
    h = (rf - lf) / n
    half = lf + 0.5 * h * np.arange(2 * n + 1)
    mu_g = np.broadcast_to(
        np.asarray(model.drift(half), dtype=float), half.shape).tolist()
    fac_g = np.broadcast_to(
        2.0 / np.asarray(model.diffusion_sq(half), dtype=float),
        half.shape).tolist()
    a = float(alpha)
    hh, h6 = 0.5 * h, h / 6.0
    u, up = float(y0[0, 0]), float(y0[0, 1])
    vt, vtp = float(y0[0, 2]), float(y0[0, 3])
    lam_u = lam_v = 0.0
    C = 0.0

    def clipped_exp(e):
        return math.exp(-745.0 if e < -745.0 else (50.0 if e > 50.0 else e))

    def vrec():
        f = clipped_exp(lam_v - lam_u)
        return vt * f + C * u, vtp * f + C * up

    dense_x = dense_y = dense_lam = None
    if record_dense:
        dense_x = np.empty((n + 1, 1))
        dense_y = np.empty((n + 1, 1, 4))
        dense_lam = np.empty((n + 1, 1))
        dense_x[0, 0] = lf
        vr, vpr = vrec()
        dense_y[0, 0] = (u, up, vr, vpr)
        dense_lam[0, 0] = lam_u
    cp_idx = sorted({min(n, int(round(f * n))) for f in checkpoints})
    cp_out = []
    if 0 in cp_idx:
        cp_out.append((0, np.array([lf]), np.array([up * vt - u * vtp]),
                       np.array([lam_u + lam_v])))

    for j in range(n):
        m = 2 * j
        mu, fac = mu_g[m], fac_g[m]
        k10, k11 = up, fac * (a * u - mu * up)
        k12, k13 = vtp, fac * (a * vt - mu * vtp)
        mu, fac = mu_g[m + 1], fac_g[m + 1]
        b0, b1, b2, b3 = u + hh * k10, up + hh * k11, vt + hh * k12, vtp + hh * k13
        k20, k21 = b1, fac * (a * b0 - mu * b1)
        k22, k23 = b3, fac * (a * b2 - mu * b3)
        b0, b1, b2, b3 = u + hh * k20, up + hh * k21, vt + hh * k22, vtp + hh * k23
        k30, k31 = b1, fac * (a * b0 - mu * b1)
        k32, k33 = b3, fac * (a * b2 - mu * b3)
        mu, fac = mu_g[m + 2], fac_g[m + 2]
        b0, b1, b2, b3 = u + h * k30, up + h * k31, vt + h * k32, vtp + h * k33
        k40, k41 = b1, fac * (a * b0 - mu * b1)
        k42, k43 = b3, fac * (a * b2 - mu * b3)
        u += h6 * (k10 + 2.0 * (k20 + k30) + k40)
        up += h6 * (k11 + 2.0 * (k21 + k31) + k41)
        vt += h6 * (k12 + 2.0 * (k22 + k32) + k42)
        vtp += h6 * (k13 + 2.0 * (k23 + k33) + k43)

        den = u * u + up * up
        if den > 0.0:
            ce = (vt * u + vtp * up) / den
            if abs(ce) * max(abs(u), abs(up)) > 0.25 * max(abs(vt), abs(vtp)):
                vt -= ce * u
                vtp -= ce * up
                C += ce * clipped_exp(lam_v - lam_u)

        um = max(abs(u), abs(up))
        if um > _RENORM_UP:
            u /= um
            up /= um
            lam_u += math.log(um)
        vm = max(abs(vt), abs(vtp))
        if 0.0 < vm < _RENORM_DOWN:
            vt /= vm
            vtp /= vm
            lam_v += math.log(vm)

        if record_dense:
            dense_x[j + 1, 0] = lf + (j + 1) * h
            vr, vpr = vrec()
            dense_y[j + 1, 0] = (u, up, vr, vpr)
            dense_lam[j + 1, 0] = lam_u
        if (j + 1) in cp_idx:
            cp_out.append((j + 1, np.array([lf + (j + 1) * h]),
                           np.array([up * vt - u * vtp]),
                           np.array([lam_u + lam_v])))

    vr, vpr = vrec()
    return dict(y=np.array([[u, up, vr, vpr]]), lam=np.array([lam_u]),
                checkpoints=cp_out,
                dense=(dense_x, dense_y, dense_lam) if record_dense else None)


def _sweep(model, alpha, l, r, y0, n, *, record_dense=False, checkpoints=()):
    """Fixed-grid RK4 over a batch of windows [l_i, r_i], n steps each.

    The state per row is (u, u', vt, vt') where vt is a *sheared*
    companion: the flat solution minus an accumulated multiple C of u.
    Shearing leaves the Wronskian invariant in exact arithmetic and
    keeps vt near the decaying envelope, so the Wronskian monitor
    u' vt - u vt' never suffers the catastrophic cancellation that
    u' v - u v' does once u dominates.  The true flat solution is
    reconstructed as v = vt e^{lam_v - lam_u} + C u in u's frame.

    Renormalization is per pair: the u pair is scaled down when it
    exceeds ~1e100 (log factor lam_u), the vt pair scaled up when it
    falls below ~1e-100 (log factor lam_v <= 0).
    """
    B = l.shape[0]
    if B == 1:
        return _sweep_scalar(model, alpha, l, r, y0, n,
                             record_dense=record_dense, checkpoints=checkpoints)
    h = (r - l) / n
    y = y0.astype(float).copy()
    lam_u = np.zeros(B)
    lam_v = np.zeros(B)
    C = np.zeros(B)
    k1 = np.empty_like(y); k2 = np.empty_like(y)
    k3 = np.empty_like(y); k4 = np.empty_like(y)

    def v_reconstructed():
        fac = np.exp(np.clip(lam_v - lam_u, -745.0, 50.0))
        vr = y[:, 2] * fac + C * y[:, 0]
        vpr = y[:, 3] * fac + C * y[:, 1]
        return vr, vpr

    dense_x = dense_y = dense_lam = None
    if record_dense:
        dense_x = np.empty((n + 1, B))
        dense_y = np.empty((n + 1, B, 4))
        dense_lam = np.empty((n + 1, B))
        dense_x[0] = l
        vr, vpr = v_reconstructed()
        dense_y[0] = np.column_stack([y[:, 0], y[:, 1], vr, vpr])
        dense_lam[0] = lam_u
    cp_idx = sorted({min(n, int(round(f * n))) for f in checkpoints})
    cp_out = []
    if 0 in cp_idx:
        cp_out.append((0, l.copy(), y[:, 1] * y[:, 2] - y[:, 0] * y[:, 3],
                       lam_u + lam_v))

    for j in range(n):
        x = l + j * h
        _rhs(model, alpha, x, y, k1)
        _rhs(model, alpha, x + 0.5 * h, y + (0.5 * h)[:, None] * k1, k2)
        _rhs(model, alpha, x + 0.5 * h, y + (0.5 * h)[:, None] * k2, k3)
        _rhs(model, alpha, x + h, y + h[:, None] * k3, k4)
        y += (h / 6.0)[:, None] * (k1 + 2.0 * (k2 + k3) + k4)

        # shear: remove the u-direction content of the companion
        umag = np.maximum(np.abs(y[:, 0]), np.abs(y[:, 1]))
        vmag = np.maximum(np.abs(y[:, 2]), np.abs(y[:, 3]))
        denom = y[:, 0] ** 2 + y[:, 1] ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            c_eff = (y[:, 2] * y[:, 0] + y[:, 3] * y[:, 1]) / denom
        trig = (denom > 0) & (np.abs(c_eff) * umag > 0.25 * vmag)
        if trig.any():
            ce = np.where(trig, c_eff, 0.0)
            y[:, 2] -= ce * y[:, 0]
            y[:, 3] -= ce * y[:, 1]
            C += ce * np.exp(np.clip(lam_v - lam_u, -745.0, 50.0))

        # per-pair renormalization
        umag = np.maximum(np.abs(y[:, 0]), np.abs(y[:, 1]))
        mask = umag > _RENORM_UP
        if mask.any():
            y[mask, 0] /= umag[mask]
            y[mask, 1] /= umag[mask]
            lam_u[mask] += np.log(umag[mask])
        vmag = np.maximum(np.abs(y[:, 2]), np.abs(y[:, 3]))
        mask = (vmag < _RENORM_DOWN) & (vmag > 0)
        if mask.any():
            y[mask, 2] /= vmag[mask]
            y[mask, 3] /= vmag[mask]
            lam_v[mask] += np.log(vmag[mask])

        if record_dense:
            dense_x[j + 1] = l + (j + 1) * h
            vr, vpr = v_reconstructed()
            dense_y[j + 1] = np.column_stack([y[:, 0], y[:, 1], vr, vpr])
            dense_lam[j + 1] = lam_u
        if (j + 1) in cp_idx:
            xc = l + (j + 1) * h
            cp_out.append((j + 1, xc, y[:, 1] * y[:, 2] - y[:, 0] * y[:, 3],
                           lam_u + lam_v))

    vr, vpr = v_reconstructed()
    y_out = np.column_stack([y[:, 0], y[:, 1], vr, vpr])
    return dict(y=y_out, lam=lam_u, checkpoints=cp_out,
                dense=(dense_x, dense_y, dense_lam) if record_dense else None)


def _initial_steps(model, alpha, l, r, max_steps):
    """Grid sizing from the local exponential rate of the two solutions."""
    ts = np.linspace(0.0, 1.0, 9)
    xs = (l[:, None] + ts[None, :] * (r - l)[:, None]).ravel()
    mu = np.abs(np.asarray(model.drift(xs), dtype=float))
    s2 = np.asarray(model.diffusion_sq(xs), dtype=float)
    if np.any(~(s2 > 0.0)):
        raise NumericError("diffusion_sq non-positive inside a solver window",
                           operation="solve", value=float(xs[np.argmin(s2)]),
                           module=_MOD)
    rate = mu / s2 + np.sqrt((mu / s2) ** 2 + 2.0 * alpha / s2)
    rate = rate.reshape(l.shape[0], ts.size).max(axis=1)
    n = int(np.ceil(8.0 * np.max(rate * (r - l))))
    if n > max_steps:
        # 8 steps per e-fold is already minimal for RK4; a requirement
        # past the cap cannot be rescued by the doubling ladder
        raise NumericError(
            f"window too stiff: resolving the local solution scale needs "
            f"about {n} steps, cap {max_steps}; alpha {alpha:g}, window "
            f"length {float(np.max(r - l)):g}",
            operation="solve", value=n, module=_MOD)
    n = max(64, min(n, max_steps // 2))
    return ((n + 7) // 8) * 8


def _endpoint_gap(a, b, abs_tol):
    """Relative disagreement of two sweeps at r, log-scale aware.

    Each component is measured against the magnitude of its solution
    pair (u, u') or (v, v'), not only its own: a derivative can sit
    many orders below its solution (v' ~ alpha v near alpha = 0), where
    its own-relative accuracy is limited by accumulated rounding and
    one more digit never arrives.  Downstream everything enters through
    quotients with the partner, so pair-scale absolute accuracy is the
    certificate that matters.
    """
    lam0 = np.minimum(a["lam"], b["lam"])
    with np.errstate(invalid="ignore", over="ignore"):
        fa = np.exp(a["lam"] - lam0)[:, None]
        fb = np.exp(b["lam"] - lam0)[:, None]
        va = a["y"] * fa
        vb = b["y"] * fb
        if not (np.all(np.isfinite(va)) and np.all(np.isfinite(vb))):
            return math.inf
        mag = np.maximum(np.abs(va), np.abs(vb))
        sc = np.empty_like(mag)
        sc[:, :2] = mag[:, :2].max(axis=1, keepdims=True)
        sc[:, 2:] = mag[:, 2:].max(axis=1, keepdims=True)
        np.maximum(sc, abs_tol, out=sc)
        return float(np.max(np.abs(va - vb) / sc))


def _drift_from_checkpoints(model, cps, rows=None):
    """Max log-deviation of the scale Wronskian across checkpoints."""
    if len(cps) < 2:
        return 0.0
    logs = []
    for (_, xc, wraw, lam_sum) in cps:
        xr = xc if rows is None else xc[rows]
        wr = wraw if rows is None else wraw[rows]
        lr = lam_sum if rows is None else lam_sum[rows]
        sp = np.asarray(scale_density(model, xr), dtype=float)
        with np.errstate(divide="ignore"):
            logs.append(np.log(np.abs(wr)) - np.log(sp) + lr)
    logs = np.array(logs)
    if not np.all(np.isfinite(logs)):
        return math.inf
    return float(np.max(np.abs(logs - logs[0])))


def _solve_adaptive(model, alpha, l, r, settings, *, record_dense=False,
                    check_rows=None):
    n = _initial_steps(model, alpha, l, r, settings.max_steps)
    y0 = np.zeros((l.shape[0], 4))
    sprime_l = np.asarray(scale_density(model, l), dtype=float)
    y0[:, 1] = sprime_l
    y0[:, 2] = 1.0
    # RK4 propagates the Wronskian through det of the per-step update
    # matrix, whose truncation error is not controlled by the endpoint
    # gap when the drift term is large, so the doubling loop accepts a
    # grid only once both figures are in tolerance.
    drift_tol = 10.0 * settings.rel_tol
    prev = _sweep(model, alpha, l, r, y0, n)
    while True:
        n2 = 2 * n
        if n2 > settings.max_steps:
            raise NumericError(
                f"step budget exhausted: {n2} steps needed, cap {settings.max_steps}; "
                f"window length {float(np.max(r - l)):g}, alpha {alpha:g}",
                operation="solve", value=n2, module=_MOD)
        cur = _sweep(model, alpha, l, r, y0, n2,
                     checkpoints=_CHECKPOINT_FRACS)
        gap = _endpoint_gap(prev, cur, settings.abs_tol)
        drift = _drift_from_checkpoints(model, cur["checkpoints"], rows=check_rows)
        if gap <= settings.rel_tol and drift <= drift_tol:
            n = n2
            break
        prev, n = cur, n2
    if record_dense:
        cur = _sweep(model, alpha, l, r, y0, n,
                     record_dense=True, checkpoints=_CHECKPOINT_FRACS)
    cur.update(n_steps=n, endpoint_gap=gap, w_drift=drift, sprime_l=sprime_l)
    return cur


# ---------------------------------------------------------------------------
# batched endpoint API (used by the drawdown laws)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class BatchEndpoints:
    """Scaled endpoint data for a batch of windows.

    True values at r are (field) * exp(lam); the common factor exp(lam)
    cancels in the quotients the laws form.
    """

    u_r: np.ndarray
    up_r: np.ndarray
    v_r: np.ndarray
    vp_r: np.ndarray
    lam: np.ndarray
    sprime_l: np.ndarray
    sprime_r: np.ndarray
    w_drift: float
    n_steps: int


def batch_endpoints(model: DiffusionModel, alpha: float,
                    l: np.ndarray, r: np.ndarray,
                    settings: OdeSettings | None = None,
                    max_check_rows: int = 64) -> BatchEndpoints:
    """Solve all windows [l_i, r_i] at once and return endpoint data."""
    settings = settings or DEFAULT_SETTINGS
    l = np.asarray(l, dtype=float)
    r = np.asarray(r, dtype=float)
    if l.shape != r.shape or l.ndim != 1 or l.size == 0:
        raise ValidationError("l and r must be equal-length 1d arrays",
                              operation="batch_endpoints", value=(l.shape, r.shape),
                              module=_MOD)
    if not np.all(r > l):
        raise ValidationError("windows must satisfy l < r",
                              operation="batch_endpoints", module=_MOD)
    a, b = model.interval
    if not (np.all(l > a) and np.all(r < b)):
        raise ValidationError("windows must lie inside the open state space",
                              operation="batch_endpoints", module=_MOD)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValidationError("alpha must be positive and finite",
                              operation="batch_endpoints", value=alpha, module=_MOD)
    B = l.size
    stride = max(1, B // max_check_rows)
    check_rows = np.arange(0, B, stride)
    out = _solve_adaptive(model, alpha, l, r, settings, check_rows=check_rows)
    y = out["y"]
    return BatchEndpoints(
        u_r=y[:, 0].copy(), up_r=y[:, 1].copy(),
        v_r=y[:, 2].copy(), vp_r=y[:, 3].copy(),
        lam=out["lam"].copy(),
        sprime_l=out["sprime_l"],
        sprime_r=np.asarray(scale_density(model, r), dtype=float),
        w_drift=out["w_drift"], n_steps=out["n_steps"],
    )


# ---------------------------------------------------------------------------
# dense single-window basis
# ---------------------------------------------------------------------------

class SolutionRecord:
    """One basis solution with dense evaluation.

    value() and raw_deriv() return true-scale numbers and can overflow
    for extreme alpha * window products; value_scaled() returns a
    (mantissa, log_factor) pair that never does.
    """

    def __init__(self, basis: "SolutionBasis", col: int):
        self._basis = basis
        self._col = col

    def value(self, x: float) -> float:
        m, lg = self.value_scaled(x)
        return m * math.exp(lg)

    def raw_deriv(self, x: float) -> float:
        g, gp, lg = self._basis._eval_cols(x, self._col)
        return gp * math.exp(lg)

    def scale_deriv(self, x: float) -> float:
        g, gp, lg = self._basis._eval_cols(x, self._col)
        sp = scale_density(self._basis.model, x)
        return gp / sp * math.exp(lg)

    def value_scaled(self, x: float) -> tuple[float, float]:
        g, gp, lg = self._basis._eval_cols(x, self._col)
        return g, lg

    def log_scale(self, x: float) -> float:
        return self._basis._lam_at(x)


class SolutionBasis:
    """Dense basis (u, v) on one window with Wronskian diagnostics."""

    def __init__(self, model, alpha, l, r, settings, dense, meta):
        self.model = model
        self.alpha = alpha
        self.interval = (l, r)
        self.settings = settings
        self.wronskian_ref = 1.0
        xs, ys, lams = dense
        self._xs = xs[:, 0]
        self._ys = ys[:, 0, :]
        self._lams = lams[:, 0]
        self.meta = meta
        self.u = SolutionRecord(self, 0)
        self.v = SolutionRecord(self, 2)

    # -- dense evaluation -------------------------------------------------
    def _segment(self, x: float) -> int:
        l, r = self.interval
        if not (l <= x <= r):
            raise ValidationError("evaluation point outside the solved window",
                                  operation="evaluate", value=x, module=_MOD)
        i = int(np.searchsorted(self._xs, x, side="right") - 1)
        return min(max(i, 0), len(self._xs) - 2)

    def _second_deriv(self, x, g, gp):
        mu = float(self.model.drift(x))
        s2 = float(self.model.diffusion_sq(x))
        return (2.0 / s2) * (self.alpha * g - mu * gp)

    def _eval_cols(self, x: float, col: int) -> tuple[float, float, float]:
        """Quintic Hermite on the containing segment, in that segment's
        left-node renormalization frame.  Returns (g, g', log_factor)."""
        i = self._segment(x)
        x0, x1 = self._xs[i], self._xs[i + 1]
        lam0, lam1 = self._lams[i], self._lams[i + 1]
        adj = math.exp(lam1 - lam0)
        g0, gp0 = self._ys[i, col], self._ys[i, col + 1]
        g1, gp1 = self._ys[i + 1, col] * adj, self._ys[i + 1, col + 1] * adj
        gpp0 = self._second_deriv(x0, g0, gp0)
        gpp1 = self._second_deriv(x1, g1, gp1)
        poly = BPoly.from_derivatives([x0, x1], [[g0, gp0, gpp0], [g1, gp1, gpp1]])
        return float(poly(x)), float(poly.derivative()(x)), lam0

    def _lam_at(self, x: float) -> float:
        return float(self._lams[self._segment(x)])

    # -- diagnostics -------------------------------------------------------
    def wronskian(self, x: float) -> float:
        """Scale Wronskian (u' v - u v') / S' at x, true scale."""
        u, up, lg = self._eval_cols(x, 0)
        v, vp, _ = self._eval_cols(x, 2)
        sp = scale_density(self.model, x)
        return (up * v - u * vp) / sp * math.exp(2.0 * lg)

    def wronskian_drift(self) -> float:
        """Max log-deviation of the scale Wronskian across the solver's
        interior checkpoints, measured on the sheared companion so the
        figure is free of subtraction cancellation.  This is the
        certified conservation monitor; pointwise wronskian(x) values
        reconstructed from the stored basis lose relative accuracy once
        the growing solution dominates."""
        return float(self.meta["w_drift"])

    def residual(self, xs) -> np.ndarray:
        """ODE residual of the dense interpolants at xs, relative to the
        local magnitude of the basis pair.

        The yardstick is the operator magnitude of whichever of u, v is
        locally dominant; the pair never vanishes jointly, so the figure
        stays meaningful at the isolated zeros of one component, where a
        per-component ratio would divide rounding noise by a vanishing
        scale.
        """
        out = []
        for x in np.atleast_1d(np.asarray(xs, dtype=float)):
            mu = float(self.model.drift(x))
            s2 = float(self.model.diffusion_sq(x))
            i = self._segment(x)
            x0, x1 = self._xs[i], self._xs[i + 1]
            lam0, lam1 = self._lams[i], self._lams[i + 1]
            adj = math.exp(lam1 - lam0)
            res = []
            den = 1e-300
            for col in (0, 2):
                g0, gp0 = self._ys[i, col], self._ys[i, col + 1]
                g1, gp1 = self._ys[i + 1, col] * adj, self._ys[i + 1, col + 1] * adj
                poly = BPoly.from_derivatives(
                    [x0, x1],
                    [[g0, gp0, self._second_deriv(x0, g0, gp0)],
                     [g1, gp1, self._second_deriv(x1, g1, gp1)]])
                g = float(poly(x))
                gp = float(poly.derivative()(x))
                gpp = float(poly.derivative(2)(x))
                res.append(abs(0.5 * s2 * gpp + mu * gp - self.alpha * g))
                den = max(den, abs(self.alpha * g) + abs(mu * gp)
                          + 0.5 * s2 * abs(gpp))
            out.append(max(res) / den)
        return np.asarray(out)

    def endpoint_data(self):
        """(u, u', v, v') true-scale at both ends plus log factor at r.
        At l the factor is 0 by construction."""
        yl = self._ys[0]
        yr = self._ys[-1]
        return dict(l=tuple(yl), r=tuple(yr), lam_r=float(self._lams[-1]))


def solve_local_basis(model: DiffusionModel, alpha: float, l: float, r: float,
                      settings: OdeSettings | None = None) -> SolutionBasis:
    """Dense (u, v) basis on [l, r] with u(l)=0, u'(l)=S'(l), v(l)=1, v'(l)=0."""
    settings = settings or DEFAULT_SETTINGS
    a, b = model.interval
    if not (a < l < r < b):
        raise ValidationError("need A < l < r < B strictly",
                              operation="solve_local_basis", value=(l, r), module=_MOD)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValidationError("alpha must be positive and finite",
                              operation="solve_local_basis", value=alpha, module=_MOD)
    la = np.array([float(l)])
    ra = np.array([float(r)])
    out = _solve_adaptive(model, alpha, la, ra, settings, record_dense=True)
    basis = SolutionBasis(model, alpha, float(l), float(r), settings,
                          out["dense"],
                          meta=dict(n_steps=out["n_steps"],
                                    endpoint_gap=out["endpoint_gap"],
                                    w_drift=out["w_drift"]))
    if settings.normalization is not None:
        # fold a common rescale into the log channel; quotients unchanged
        xn = float(settings.normalization)
        mag = max(abs(basis.u.value_scaled(xn)[0]), abs(basis.v.value_scaled(xn)[0]))
        if mag > 0:
            basis._ys /= mag
            basis._lams += math.log(mag)
    return basis


def scale_derivative(model: DiffusionModel, record: SolutionRecord, x: float,
                     side: str = "right") -> float:
    """g'(x)/S'(x) for a solution record.  The solutions are C^1 across
    interior points, so both one-sided values agree; side is accepted
    for endpoint bookkeeping."""
    if side not in ("left", "right"):
        raise ValidationError("side must be 'left' or 'right'",
                              operation="scale_derivative", value=side, module=_MOD)
    return record.scale_deriv(x)


def wronskian(basis: SolutionBasis, x: float) -> float:
    """Scale Wronskian of the basis at x; +1 by construction at l."""
    return basis.wronskian(x)
