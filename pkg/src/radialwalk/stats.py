"""Goodness-of-fit and regime diagnostics for walk ensembles.

One-sample Kolmogorov-Smirnov distances against exact squared-Bessel
marginals verify the diffusive radial limit; moment-ratio tables check the
m^(l/2) growth bound; occupation fractions check that bounded sets carry a
vanishing share of time; and an excursion-based classifier sorts parameter
points into transient- or recurrent-consistent behavior.
"""

import math
from dataclasses import dataclass

import numpy as np

from .bessel import BesqLaw, besq_marginal_cdf
from .covariance import RADEMACHER, WalkModel, make_walk_model
from .walk import SnapshotRecorder, floor_index, run_ensemble

TRANSIENT = "transient-consistent"
RECURRENT = "recurrent-consistent"
INCONCLUSIVE = "inconclusive"

ESCAPE_CUTOFF = 0.95
RETURN_CUTOFF = 0.95

DEFAULT_ALPHA = 0.01
# Absorbs the finite-n misspecification of the walk marginal on top of the
# asymptotic critical value.
DEFAULT_SLACK = 0.01

DEFAULT_PHASE_RADIUS = 20.0


def ks_statistic(sample, cdf) -> float:
    """One-sample KS distance between a sample and a reference CDF.

    D = max over order statistics of max(|i/N - F(x_i)|, |(i-1)/N - F(x_i)|).
    The sample is sorted internally; NaNs are rejected.
    """
    values = np.asarray(sample, dtype=float)
    if values.size == 0:
        raise ValueError("sample must be non-empty")
    if np.isnan(values).any():
        raise ValueError("sample contains NaN")
    values = np.sort(values)
    n = values.size
    probs = np.asarray(cdf(values), dtype=float)
    grid = np.arange(1, n + 1) / n
    return float(max((grid - probs).max(), (probs - (grid - 1.0 / n)).max()))


def kolmogorov_tail(c: float) -> float:
    """Limiting tail probability 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 c^2)."""
    if c <= 0:
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, 200):
        term = sign * math.exp(-2.0 * k * k * c * c)
        total += term
        if abs(term) < 1e-18:
            break
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_critical_value(alpha: float) -> float:
    """The c with kolmogorov_tail(c) = alpha, by bisection."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    lo, hi = 1e-6, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if kolmogorov_tail(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ks_threshold(n: int, alpha: float) -> float:
    """Asymptotic one-sample KS critical distance c(alpha) / sqrt(n)."""
    if n < 20:
        raise ValueError(f"the asymptotic threshold needs n >= 20, got {n}")
    return ks_critical_value(alpha) / math.sqrt(n)


@dataclass(frozen=True)
class KSReport:
    """A KS comparison outcome: pass iff statistic <= threshold."""

    statistic: float
    sample_size: int
    alpha: float
    threshold: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "statistic": self.statistic,
            "sample_size": self.sample_size,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "pass": self.passed,
        }


def _unit_start(dim: int) -> np.ndarray:
    # Fixed start adjacent to the origin: the direction there is defined and
    # the scaled start n^(-1/2) e1 vanishes in the limit.
    e1 = np.zeros(dim)
    e1[0] = 1.0
    return e1


@dataclass(frozen=True)
class MarginalFitResult:
    """KS comparison of scaled squared radii against the squared-Bessel marginal."""

    report: KSReport
    n: int
    t_eval: float
    values: np.ndarray
    sub_seeds: np.ndarray

    def to_json(self) -> dict:
        out = self.report.to_json()
        out.update({"n": self.n, "t_eval": self.t_eval})
        return out


def marginal_fit(
    model: WalkModel,
    n: int,
    t_eval: float = 1.0,
    horizon: float | None = None,
    n_traj: int = 1000,
    master_seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
    slack: float = DEFAULT_SLACK,
    workers: int = 1,
) -> MarginalFitResult:
    """KS fit of Y_n(t_eval) over an ensemble against the exact reference law.

    Requires unit radial variance (the normalization of the limit); rescale
    increments by 1/sqrt(radial_var), equivalently time by radial_var, to
    reduce other models to this case.  Walks start at e1, whose scaled image
    vanishes as n grows.
    """
    params = model.field.params
    if params.radial_var != 1.0:
        raise ValueError(
            f"marginal fit requires radial variance 1 (got {params.radial_var}); "
            "rescale increments by 1/sqrt(radial_var), equivalently time by "
            "radial_var, and rerun"
        )
    if horizon is None:
        horizon = t_eval
    if not 0 < t_eval <= horizon:
        raise ValueError(f"t_eval must lie in (0, horizon], got {t_eval}")
    steps = int(math.ceil(n * horizon - 1e-9))
    snap = floor_index(n, t_eval)
    start = _unit_start(params.dim)

    positions, sub_seeds = run_ensemble(
        model,
        start,
        steps,
        n_traj,
        master_seed,
        lambda rows: SnapshotRecorder(rows, [snap], params.dim),
        workers=workers,
    )
    at_eval = positions[:, 0, :]
    values = (at_eval * at_eval).sum(axis=1) / n

    law = BesqLaw(dim=params.total_var)
    statistic = ks_statistic(values, lambda y: besq_marginal_cdf(law, t_eval, y))
    threshold = ks_threshold(n_traj, alpha) + slack
    report = KSReport(
        statistic=statistic,
        sample_size=n_traj,
        alpha=alpha,
        threshold=threshold,
        passed=bool(statistic <= threshold),
    )
    return MarginalFitResult(
        report=report, n=n, t_eval=t_eval, values=values, sub_seeds=sub_seeds
    )


@dataclass(frozen=True)
class MomentRatioCheck:
    """Ratios E|X_m|^l / (m^(l/2) + |x0|^l) over a step grid.

    Passes when the ratio maximum over the top decade of the grid is at most
    1.2 times the maximum over the middle decade (running maximum has
    stabilized); None when a decade band is empty.
    """

    power: int
    steps: np.ndarray
    ratios: np.ndarray
    passed: bool | None

    def to_json(self) -> dict:
        return {
            "power": self.power,
            "steps": [int(m) for m in self.steps],
            "ratios": [float(r) for r in self.ratios],
            "pass": self.passed,
        }


def moment_bound_check(
    model: WalkModel,
    start,
    power: int,
    m_grid,
    n_traj: int = 400,
    master_seed: int = 0,
    workers: int = 1,
) -> MomentRatioCheck:
    """Monte Carlo check that E|X_m|^power grows no faster than m^(power/2)."""
    if power not in (1, 2, 3, 4):
        raise ValueError(f"power must be in 1..4, got {power}")
    ms = np.array(sorted({int(m) for m in m_grid}), dtype=np.int64)
    if (ms < 0).any():
        raise ValueError("step grid must be >= 0")
    start = np.asarray(start, dtype=float)
    steps = int(ms.max())

    positions, _ = run_ensemble(
        model,
        start,
        steps,
        n_traj,
        master_seed,
        lambda rows: SnapshotRecorder(rows, ms, model.dim),
        workers=workers,
    )
    norms = np.sqrt((positions * positions).sum(axis=2))  # (n_traj, len(ms))
    means = (norms**power).mean(axis=0)
    start_norm = math.sqrt(float(start @ start))
    denom = ms.astype(float) ** (power / 2.0) + start_norm**power
    ratios = means / denom

    m_max = float(ms.max())
    top = ms > m_max / 10.0
    middle = (ms > m_max / 100.0) & ~top
    if top.any() and middle.any():
        passed = bool(ratios[top].max() <= 1.2 * ratios[middle].max())
    else:
        passed = None
    return MomentRatioCheck(power=power, steps=ms, ratios=ratios, passed=passed)


class _OccupationVisitor:
    """Accumulates per-trajectory time fractions spent inside a fixed ball."""

    def __init__(self, n_rows: int, radius_sq: float, grid):
        self.radius_sq = radius_sq
        self.grid = {int(g): j for j, g in enumerate(grid)}
        self.counts = np.zeros(n_rows, dtype=np.int64)
        self.fractions = np.empty((n_rows, len(grid)))

    def _absorb(self, k, pos):
        inside = (pos * pos).sum(axis=1) <= self.radius_sq
        self.counts += inside
        j = self.grid.get(k + 1)  # after index k, steps 0..k are counted
        if j is not None:
            self.fractions[:, j] = self.counts / (k + 1)

    def start(self, pos):
        self._absorb(0, pos)

    def step(self, k, pos):
        self._absorb(k, pos)

    def finish(self):
        return self.fractions


@dataclass(frozen=True)
class OccupationCheck:
    """Mean time fractions f_n spent in a ball, over a grid of horizons n.

    Passes when f at 4096 has dropped by at least a factor 1.5 from f at 256;
    None when the grid lacks those points.
    """

    ball_radius: float
    horizons: np.ndarray
    fractions: np.ndarray
    passed: bool | None

    def to_json(self) -> dict:
        return {
            "ball_radius": self.ball_radius,
            "horizons": [int(n) for n in self.horizons],
            "fractions": [float(f) for f in self.fractions],
            "pass": self.passed,
        }


def occupation_fraction(
    model: WalkModel,
    start,
    ball_radius: float,
    n_grid,
    n_traj: int = 200,
    master_seed: int = 0,
    workers: int = 1,
) -> OccupationCheck:
    """Mean fraction of the first n steps spent inside |x| <= ball_radius."""
    if not ball_radius > 0:
        raise ValueError(f"ball_radius must be > 0, got {ball_radius}")
    grid = np.array(sorted({int(g) for g in n_grid}), dtype=np.int64)
    if (grid < 1).any():
        raise ValueError("horizon grid must be >= 1")
    start = np.asarray(start, dtype=float)
    steps = int(grid.max()) - 1  # indices 0..n-1 enter the count for horizon n

    per_traj, _ = run_ensemble(
        model,
        start,
        steps,
        n_traj,
        master_seed,
        lambda rows: _OccupationVisitor(rows, ball_radius**2, grid),
        workers=workers,
    )
    fractions = per_traj.mean(axis=0)
    passed = None
    lookup = {int(g): j for j, g in enumerate(grid)}
    if 256 in lookup and 4096 in lookup:
        passed = bool(fractions[lookup[4096]] <= fractions[lookup[256]] / 1.5)
    return OccupationCheck(
        ball_radius=float(ball_radius), horizons=grid, fractions=fractions, passed=passed
    )


class _PhaseVisitor:
    """Tracks late-time minimum radius and double-radius excursion returns."""

    def __init__(self, n_rows: int, radius: float, late_start: int):
        self.inner_sq = radius * radius
        self.outer_sq = 4.0 * radius * radius
        self.late_start = late_start
        self.min_late_sq = np.full(n_rows, np.inf)
        self.exited = np.zeros(n_rows, dtype=bool)
        self.returned = np.zeros(n_rows, dtype=bool)

    def _absorb(self, k, pos):
        sq = (pos * pos).sum(axis=1)
        # a return needs a strictly earlier first exit, hence the order
        np.logical_or(self.returned, self.exited & (sq <= self.inner_sq), out=self.returned)
        np.logical_or(self.exited, sq > self.outer_sq, out=self.exited)
        if k >= self.late_start:
            np.minimum(self.min_late_sq, sq, out=self.min_late_sq)

    def start(self, pos):
        self._absorb(0, pos)

    def step(self, k, pos):
        self._absorb(k, pos)

    def finish(self):
        return self.min_late_sq, self.returned


@dataclass(frozen=True)
class PhaseVerdict:
    """Excursion-based classification of a parameter point.

    escape_fraction: share of trajectories whose radius minimum over the
    second half of the walk stays above the radius.  return_fraction: share
    that re-entered the radius ball after first leaving the doubled ball.
    """

    dim: int
    radial_var: float
    total_var: float
    radius: float
    n_traj: int
    n_steps: int
    escape_fraction: float
    return_fraction: float
    verdict: str

    def to_json(self) -> dict:
        return {
            "d": self.dim,
            "U": self.radial_var,
            "V": self.total_var,
            "radius": self.radius,
            "N_traj": self.n_traj,
            "N_steps": self.n_steps,
            "escape_fraction": self.escape_fraction,
            "return_fraction": self.return_fraction,
            "verdict": self.verdict,
        }


def classify_phase(
    radial_var: float,
    total_var: float,
    dim: int,
    n_traj: int = 200,
    n_steps: int = 100_000,
    radius: float = DEFAULT_PHASE_RADIUS,
    master_seed: int = 0,
    noise: str = RADEMACHER,
    workers: int = 1,
) -> PhaseVerdict:
    """Classify a parameter point as transient- or recurrent-consistent.

    Transient-consistent when at least 95% of trajectories keep their
    late-time radius above `radius`; recurrent-consistent when at least 95%
    complete a double-radius excursion and re-enter; otherwise inconclusive.
    The verdict is a pure function of (parameters, seed).
    """
    if not radial_var < total_var:
        raise ValueError(
            f"requires radial_var < total_var, got {radial_var} >= {total_var}"
        )
    model = make_walk_model(
        dim=dim, radial_var=radial_var, total_var=total_var, noise=noise
    )
    start = _unit_start(dim)
    (min_late_sq, returned), _ = run_ensemble(
        model,
        start,
        n_steps,
        n_traj,
        master_seed,
        lambda rows: _PhaseVisitor(rows, radius, n_steps // 2),
        workers=workers,
    )
    escape_fraction = float((min_late_sq > radius * radius).mean())
    return_fraction = float(returned.mean())
    if escape_fraction >= ESCAPE_CUTOFF:
        verdict = TRANSIENT
    elif return_fraction >= RETURN_CUTOFF:
        verdict = RECURRENT
    else:
        verdict = INCONCLUSIVE
    return PhaseVerdict(
        dim=dim,
        radial_var=radial_var,
        total_var=total_var,
        radius=radius,
        n_traj=n_traj,
        n_steps=n_steps,
        escape_fraction=escape_fraction,
        return_fraction=return_fraction,
        verdict=verdict,
    )
