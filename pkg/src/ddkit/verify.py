"""Analytics-versus-oracle comparison reports.

Pure composition: everything here calls the law layer for exact values
and the Monte Carlo layer for estimates, then lines them up with
z-scores.  No numerics of its own.

The dt-pair rule governs step sizes: a run at dt is trusted once the
run at dt/2 moves every watched estimate by less than one standard
error.  The reports carry both arms so the reader can see the moves,
not just the verdicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import laws, mc
from .errors import ValidationError
from .models import DiffusionModel

_MOD = "verify"
_Z_MAX = 3.0


@dataclass(frozen=True)
class CheckRow:
    """One analytic value against its Monte Carlo estimate."""

    name: str
    analytic: float
    estimate: float
    std_error: float
    z_score: float
    dt_move: float          # |fine - coarse| estimate move, in std errors
    passed: bool

    def line(self) -> str:
        tag = "ok  " if self.passed else "FAIL"
        return (f"{tag} {self.name:<28} analytic {self.analytic: .8f}  "
                f"mc {self.estimate: .8f}  se {self.std_error:.2e}  "
                f"z {self.z_score:+.2f}  dt-move {self.dt_move:.2f}se")


@dataclass(frozen=True)
class VerificationReport:
    """Drawdown law checks for one model at one (x, delta)."""

    model_id: str
    x: float
    delta: float
    dt: float
    n_paths: int
    rows: tuple
    unstopped_fraction: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and \
            self.unstopped_fraction < 0.01

    def lines(self) -> list[str]:
        out = [f"model {self.model_id}  x={self.x:g} delta={self.delta:g}  "
               f"n={self.n_paths} dt={self.dt:g}  "
               f"unstopped {self.unstopped_fraction:.2%}"]
        out.extend(r.line() for r in self.rows)
        out.append("result: " + ("PASS" if self.passed else "FAIL"))
        return out


@dataclass(frozen=True)
class ExcursionReport:
    """Poisson structure check for excursion counts in one band."""

    model_id: str
    x: float
    y: float
    delta: float
    n_paths: int
    dt_fine: float
    analytic_mean: float
    mean_fine: float
    mean_coarse: float
    mean_extrapolated: float
    var_over_mean: float
    finished_fraction: float

    @property
    def mean_band(self) -> float:
        return _Z_MAX * math.sqrt(self.analytic_mean / self.n_paths)

    @property
    def mean_ok(self) -> bool:
        return abs(self.mean_extrapolated - self.analytic_mean) \
            <= self.mean_band

    @property
    def dispersion_ok(self) -> bool:
        return 0.9 <= self.var_over_mean <= 1.1

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.dispersion_ok

    def lines(self) -> list[str]:
        return [
            f"model {self.model_id}  band ]{self.x:g}, {self.y:g}] "
            f"delta={self.delta:g}  n={self.n_paths}",
            f"analytic mean {self.analytic_mean:.6f}  "
            f"extrapolated {self.mean_extrapolated:.6f}  "
            f"(fine {self.mean_fine:.6f} @ dt={self.dt_fine:g}, "
            f"coarse {self.mean_coarse:.6f})  band +-{self.mean_band:.4f}",
            f"variance/mean {self.var_over_mean:.4f} in [0.9, 1.1]: "
            f"{'yes' if self.dispersion_ok else 'NO'}  "
            f"finished {self.finished_fraction:.2%}",
            "result: " + ("PASS" if self.passed else "FAIL"),
        ]


def _probe_values(samples, ys, alpha):
    out = [mc.estimate_tail(samples, y) for y in ys]
    out.append(mc.estimate_transform(samples, alpha, 0.0))
    return out


def dt_pair_simulate(model: DiffusionModel, x: float, delta: float,
                     cfg: mc.McConfig, ys, alpha: float,
                     max_halvings: int = 3):
    """Simulate a coupled (dt, dt/2) pair; halve until every probe
    (tails at ys, the alpha-transform) moves by less than one standard
    error between the arms.  The arms share their noise, so the move
    is the halving bias itself, not two runs' worth of Monte Carlo
    scatter.  Returns (fine collection, moves in std errors, fine dt).
    """
    run = cfg
    for _ in range(max_halvings + 1):
        fine, coarse = mc.paired_simulate(model, x, delta, run)
        pf = _probe_values(fine, ys, alpha)
        pc = _probe_values(coarse, ys, alpha)
        moves = [abs(f[0] - c[0]) / f[1] if f[1] > 0 else 0.0
                 for f, c in zip(pf, pc)]
        if max(moves) < 1.0:
            break
        run = mc.McConfig(n_paths=run.n_paths, dt=run.dt / 2,
                          t_max=run.t_max, seed=run.seed,
                          scheme=run.scheme)
    return fine, moves, fine.cfg.dt


def verification_report(model: DiffusionModel, x: float, delta: float,
                        cfg: mc.McConfig, ys=None, alpha: float = 0.5,
                        tol: float = 1e-9) -> VerificationReport:
    """Check P(M_tau > y) on three levels and E[e^{-alpha tau}] against
    the oracle, at a dt passing the dt-pair rule."""
    if ys is None:
        ys = (x + 0.5 * delta, x + delta, x + 2.0 * delta)
    ys = tuple(float(v) for v in ys)
    if len(ys) != 3:
        raise ValidationError("need exactly three tail levels",
                              operation="verification_report", value=ys,
                              module=_MOD)
    samples, moves, dt_used = dt_pair_simulate(model, x, delta, cfg, ys,
                                               alpha)
    query = laws.DrawdownQuery(x=x, delta=delta, alpha=alpha, tol=tol)
    rows = []
    probes = _probe_values(samples, ys, alpha)
    names = [f"P(max > {y:g})" for y in ys] + [f"E[exp(-{alpha:g} tau)]"]
    exact = [laws.max_tail(model, query, y) for y in ys]
    exact.append(laws.joint_transform(model, query).value)
    for name, ana, (est, se), move in zip(names, exact, probes, moves):
        if se > 0:
            z = (est - ana) / se
            ok = abs(z) <= _Z_MAX
        else:
            z = 0.0
            ok = abs(est - ana) <= 1e-12
        rows.append(CheckRow(name=name, analytic=ana, estimate=est,
                             std_error=se, z_score=z, dt_move=move,
                             passed=ok))
    return VerificationReport(model_id=model.model_id, x=float(x),
                              delta=float(delta), dt=dt_used,
                              n_paths=cfg.n_paths, rows=tuple(rows),
                              unstopped_fraction=samples.unstopped_fraction)


def excursion_report(model: DiffusionModel, x: float, y: float,
                     delta: float, cfg: mc.McConfig,
                     tol: float = 1e-9) -> ExcursionReport:
    """Poisson check of delta-deep excursion counts in ]x, y].

    Counts at cfg.dt and cfg.dt/4 extrapolate the O(sqrt(dt)) depth
    undercount away: the sqrt halves, so 2*fine - coarse cancels it.
    The analytic mean comes from the tail law, whose exponent is the
    same integral of nu dS.
    """
    counts_c, _ = mc.excursion_counts(model, x, y, delta, cfg)
    fine_cfg = mc.McConfig(n_paths=cfg.n_paths, dt=cfg.dt / 4,
                           t_max=cfg.t_max, seed=cfg.seed,
                           scheme=cfg.scheme)
    counts_f, done_f = mc.excursion_counts(model, x, y, delta, fine_cfg)
    query = laws.DrawdownQuery(x=x, delta=delta, tol=tol)
    analytic = -math.log(laws.max_tail(model, query, y))
    mean_c = float(counts_c.mean())
    mean_f = float(counts_f.mean())
    var_f = float(counts_f.var(ddof=1))
    return ExcursionReport(model_id=model.model_id, x=float(x), y=float(y),
                           delta=float(delta), n_paths=cfg.n_paths,
                           dt_fine=fine_cfg.dt, analytic_mean=analytic,
                           mean_fine=mean_f, mean_coarse=mean_c,
                           mean_extrapolated=2.0 * mean_f - mean_c,
                           var_over_mean=var_f / mean_f,
                           finished_fraction=float(done_f.mean()))
