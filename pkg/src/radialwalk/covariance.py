"""Direction-dependent increment covariance fields and zero-drift walk models.

The walks are Markov chains on R^d whose increment law at position x has
conditional mean exactly zero and conditional covariance

    M(x) = s(x)^2 * Sigma(x / |x|),

where Sigma(u) = radial_var * u u^T + transverse_var * (I - u u^T) prescribes
the variance `radial_var` along the current direction and the trace
`total_var`, and s(x)^2 = 1 + c (1 + |x|)^(-delta) is an optional decaying
perturbation.  Increments are assembled in an orthonormal frame whose first
vector is x/|x| (a fixed direction at the origin), so the conditional moments
hold exactly by construction, not just asymptotically.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

RADEMACHER = "rademacher"
GAUSSIAN = "gaussian"
NOISE_KINDS = (RADEMACHER, GAUSSIAN)

UNIT_NORM_TOL = 1e-12

# fixed stream for validation directions so reports are reproducible
_DIRECTION_SEED = 0x5D1E


@dataclass(frozen=True)
class FieldParams:
    """Dimension and variance parameters of a covariance field.

    `radial_var` is the increment variance along the current direction and
    `total_var` the trace of the increment covariance; the transverse
    spectrum is flat with eigenvalue (total_var - radial_var)/(dim - 1).
    Equal radial and total variance is admitted but leaves the field
    rank-deficient (flagged with a warning; validation then fails positive
    definiteness).
    """

    dim: int
    radial_var: float
    total_var: float

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dimension must be >= 2, got {self.dim}")
        if not self.radial_var > 0:
            raise ValueError(f"radial variance must be > 0, got {self.radial_var}")
        if self.total_var < self.radial_var:
            raise ValueError(
                f"total variance {self.total_var} must be >= radial variance "
                f"{self.radial_var}"
            )
        if self.total_var == self.radial_var:
            warnings.warn(
                "total_var == radial_var: transverse variance is zero and the "
                "field is rank-deficient",
                stacklevel=2,
            )

    @property
    def transverse_var(self) -> float:
        return (self.total_var - self.radial_var) / (self.dim - 1)

    @property
    def degenerate(self) -> bool:
        return self.transverse_var == 0.0


def canonical_sigma(direction, params: FieldParams) -> np.ndarray:
    """Covariance matrix with the prescribed radial variance and trace.

    Sigma(u) = radial_var * u u^T + transverse_var * (I - u u^T).  Its
    eigenvalues are radial_var (eigenvector u) and transverse_var with
    multiplicity dim - 1, so u^T Sigma u = radial_var and
    trace Sigma = total_var hold identically.
    """
    u = np.asarray(direction, dtype=float)
    if u.shape != (params.dim,):
        raise ValueError(f"direction has shape {u.shape}, expected ({params.dim},)")
    norm = math.sqrt(float(u @ u))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"direction must be a unit vector, got norm {norm!r}")
    lam = params.transverse_var
    return lam * np.eye(params.dim) + (params.radial_var - lam) * np.outer(u, u)


class CovarianceField:
    """A map from unit directions on the sphere to d x d covariance matrices.

    With no callable supplied the field is the canonical one realized by
    `canonical_sigma`; a custom callable is accepted for validation of
    externally defined fields.
    """

    def __init__(
        self,
        params: FieldParams,
        evaluate: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        self.params = params
        self._evaluate = evaluate

    @property
    def is_canonical(self) -> bool:
        return self._evaluate is None

    def evaluate(self, direction) -> np.ndarray:
        if self._evaluate is None:
            return canonical_sigma(direction, self.params)
        return np.asarray(self._evaluate(np.asarray(direction, dtype=float)), dtype=float)


def canonical_field(params: FieldParams) -> CovarianceField:
    return CovarianceField(params)


def sphere_directions(dim: int, count: int, seed: int = _DIRECTION_SEED) -> np.ndarray:
    """Quasi-uniform unit vectors: an equispaced fan for dim 2, seeded uniform draws above."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if dim == 2:
        angles = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    from .seeding import make_rng

    rng = make_rng(seed)
    out = rng.standard_normal((count, dim))
    norms = np.sqrt((out * out).sum(axis=1))
    while bool((norms < 1e-8).any()):
        small = norms < 1e-8
        out[small] = rng.standard_normal((int(small.sum()), dim))
        norms = np.sqrt((out * out).sum(axis=1))
    return out / norms[:, None]


@dataclass(frozen=True)
class FieldValidation:
    """Report of direction-sampled field checks; see `validate_field`."""

    max_radial_dev: float
    max_trace_dev: float
    min_eig: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "max_radial_dev": self.max_radial_dev,
            "max_trace_dev": self.max_trace_dev,
            "min_eig": self.min_eig,
            "pass": self.passed,
        }


def validate_field(
    field: CovarianceField,
    n_dirs: int = 1000,
    tol: float = 1e-10,
    seed: int = _DIRECTION_SEED,
) -> FieldValidation:
    """Sample directions and report radial-variance, trace, and definiteness checks.

    Report-only: never raises on a broken field.  Passes iff both deviations
    are <= tol and the smallest eigenvalue seen is strictly positive.
    """
    p = field.params
    dirs = sphere_directions(p.dim, n_dirs, seed=seed)
    max_radial = 0.0
    max_trace = 0.0
    min_eig = math.inf
    for u in dirs:
        sigma = field.evaluate(u)
        max_radial = max(max_radial, abs(float(u @ sigma @ u) - p.radial_var))
        max_trace = max(max_trace, abs(float(np.trace(sigma)) - p.total_var))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(sigma)[0]))
    passed = bool(max_radial <= tol and max_trace <= tol and min_eig > 0.0)
    return FieldValidation(max_radial, max_trace, min_eig, passed)


@dataclass(frozen=True)
class Perturbation:
    """Scalar covariance inflation 1 + amplitude * (1 + |x|)^(-decay).

    A scalar factor preserves zero drift and positive definiteness for any
    amplitude >= 0, and its operator-norm distance from the limit field
    decays like (1 + r)^(-decay).
    """

    amplitude: float
    decay: float = 1.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if not self.decay > 0:
            raise ValueError(f"decay must be > 0, got {self.decay}")

    def variance_factor(self, radii) -> np.ndarray:
        r = np.asarray(radii, dtype=float)
        return 1.0 + self.amplitude * (1.0 + r) ** (-self.decay)


@dataclass(frozen=True)
class WalkModel:
    """Zero-drift walk model: increment sampler plus exact conditional moments.

    Requires the canonical field (the sampler realizes exactly that
    construction).  `origin_direction` stands in for x/|x| at the origin.
    """

    field: CovarianceField
    noise_kind: str = RADEMACHER
    perturbation: Perturbation | None = None
    origin_direction: np.ndarray | None = None

    def __post_init__(self):
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(
                f"noise_kind must be one of {NOISE_KINDS}, got {self.noise_kind!r}"
            )
        if not self.field.is_canonical:
            raise ValueError(
                "walk models require the canonical covariance field; custom "
                "fields are supported only by validate_field"
            )
        p = self.field.params
        if self.origin_direction is None:
            od = np.zeros(p.dim)
            od[0] = 1.0
        else:
            od = np.asarray(self.origin_direction, dtype=float)
            if od.shape != (p.dim,):
                raise ValueError(
                    f"origin_direction has shape {od.shape}, expected ({p.dim},)"
                )
            if abs(math.sqrt(float(od @ od)) - 1.0) > UNIT_NORM_TOL:
                raise ValueError("origin_direction must be a unit vector")
        object.__setattr__(self, "origin_direction", od)
        scale = np.full(p.dim, math.sqrt(p.transverse_var))
        scale[0] = math.sqrt(p.radial_var)
        object.__setattr__(self, "_noise_scale", scale)

    @property
    def params(self) -> FieldParams:
        return self.field.params

    @property
    def dim(self) -> int:
        return self.field.params.dim

    def variance_factor(self, radii) -> np.ndarray:
        """s(x)^2 as a function of |x|; identically 1 when unperturbed."""
        if self.perturbation is None:
            return np.ones_like(np.asarray(radii, dtype=float))
        return self.perturbation.variance_factor(radii)

    def covariance_gap(self, radius: float) -> float:
        """sup over |x| >= radius of the operator norm |M(x) - Sigma(x/|x|)|."""
        if self.perturbation is None:
            return 0.0
        p = self.field.params
        top_eig = max(p.radial_var, p.transverse_var)
        return (
            self.perturbation.amplitude
            * (1.0 + float(radius)) ** (-self.perturbation.decay)
            * top_eig
        )


def make_walk_model(
    dim: int,
    radial_var: float = 1.0,
    total_var: float = 3.0,
    noise: str = RADEMACHER,
    perturb_amplitude: float = 0.0,
    perturb_decay: float = 1.0,
    origin_direction=None,
) -> WalkModel:
    """Convenience constructor for a canonical-field walk model."""
    params = FieldParams(dim=dim, radial_var=radial_var, total_var=total_var)
    perturbation = (
        Perturbation(perturb_amplitude, perturb_decay) if perturb_amplitude > 0 else None
    )
    return WalkModel(
        field=canonical_field(params),
        noise_kind=noise,
        perturbation=perturbation,
        origin_direction=origin_direction,
    )


def directions_of(positions, origin_direction):
    """Row-wise unit directions x/|x| with the origin convention; also returns |x|."""
    pos = np.asarray(positions, dtype=float)
    norms = np.sqrt((pos * pos).sum(axis=1))
    dirs = np.empty_like(pos)
    nz = norms > 0.0
    dirs[nz] = pos[nz] / norms[nz, None]
    dirs[~nz] = origin_direction
    return dirs, norms


def rotate_from_axis(directions, vectors):
    """Apply, row by row, the orthogonal map taking e1 to the given unit direction.

    Built from the Householder reflection through direction - sgn * e1 with
    sgn = -sign(direction[0]), which never cancels; the product with sgn makes
    the map send e1 exactly to the direction.  O(d) per row without forming
    the matrix.
    """
    sgn = np.where(directions[:, 0] >= 0.0, -1.0, 1.0)
    u = directions.copy()
    u[:, 0] -= sgn
    unorm2 = (u * u).sum(axis=1)  # >= 1 by the sign choice
    dot = (u * vectors).sum(axis=1)
    return sgn[:, None] * (vectors - (2.0 * dot / unorm2)[:, None] * u)


def orthonormal_frame(direction) -> np.ndarray:
    """Full frame as columns: the direction itself followed by d-1 transverse unit vectors."""
    u = np.asarray(direction, dtype=float)
    d = u.shape[0]
    rows = rotate_from_axis(np.tile(u, (d, 1)), np.eye(d))
    return rows.T


def draw_noise(model: WalkModel, rng: np.random.Generator, count: int) -> np.ndarray:
    """i.i.d. unit-variance noise rows: signs for rademacher, standard normals otherwise."""
    d = model.dim
    if model.noise_kind == GAUSSIAN:
        return rng.standard_normal((count, d))
    return rng.integers(0, 2, size=(count, d)).astype(np.float64) * 2.0 - 1.0


def increments_from_noise(model: WalkModel, positions, noise) -> np.ndarray:
    """Increments at the given positions from unit-variance noise rows.

    Row i is s(x_i) * Q(x_i) @ (sqrt(radial_var) * eta_1, sqrt(transverse_var)
    * eta_2, ...), with Q the frame rotation; conditional mean is exactly zero
    and conditional covariance exactly M(x_i).
    """
    pos = np.asarray(positions, dtype=float)
    dirs, norms = directions_of(pos, model.origin_direction)
    delta = rotate_from_axis(dirs, noise * model._noise_scale)
    if model.perturbation is not None:
        factor = np.sqrt(model.perturbation.variance_factor(norms))
        delta = delta * factor[:, None]
    return delta


def sample_increment(model: WalkModel, position, rng: np.random.Generator) -> np.ndarray:
    """One increment draw at the given position."""
    pos = np.asarray(position, dtype=float)[None, :]
    return increments_from_noise(model, pos, draw_noise(model, rng, 1))[0]


def sample_increments(
    model: WalkModel, position, rng: np.random.Generator, count: int
) -> np.ndarray:
    """Independent increment draws at a fixed position, one per row."""
    pos = np.broadcast_to(
        np.asarray(position, dtype=float), (count, model.dim)
    )
    return increments_from_noise(model, pos, draw_noise(model, rng, count))


@dataclass(frozen=True)
class ExactMoments:
    """Closed-form conditional increment moments at a fixed position.

    mean            E[D | x]                  (identically zero)
    covariance      M(x) = E[D D^T | x]
    trace_cov       trace M(x)              = s(x)^2 * total_var
    radial_qform    x^T M(x) x              = s(x)^2 * radial_var * |x|^2
    third_radial    E[<x, D> |D|^2 | x]       (zero for both noise kinds)
    fourth_norm     E[|D|^4 | x]
    """

    mean: np.ndarray
    covariance: np.ndarray
    trace_cov: float
    radial_qform: float
    third_radial: float
    fourth_norm: float


def exact_moments(model: WalkModel, position) -> ExactMoments:
    p = model.field.params
    x = np.asarray(position, dtype=float)
    radius = math.sqrt(float(x @ x))
    s2 = float(model.variance_factor(radius))
    xhat = x / radius if radius > 0 else model.origin_direction
    covariance = s2 * canonical_sigma(xhat, p)
    trace = s2 * p.total_var
    qform = s2 * p.radial_var * radius * radius
    if model.noise_kind == RADEMACHER:
        # |D|^2 is deterministic: s^2 * (radial + (d-1) * transverse) = trace
        fourth = trace * trace
    else:
        trace_sq = s2 * s2 * (p.radial_var**2 + (p.dim - 1) * p.transverse_var**2)
        fourth = trace * trace + 2.0 * trace_sq
    return ExactMoments(
        mean=np.zeros(p.dim),
        covariance=covariance,
        trace_cov=trace,
        radial_qform=qform,
        third_radial=0.0,
        fourth_norm=fourth,
    )


def moment_profile(model: WalkModel, positions):
    """Vectorized closed-form moments along a position array.

    Returns (trace M, x^T M x, E[<x,D>|D|^2], E[|D|^4]) as arrays, computed
    without materializing covariance matrices so constant-trace models stay
    exact to the last bit.
    """
    p = model.field.params
    pos = np.asarray(positions, dtype=float)
    radius_sq = (pos * pos).sum(axis=1)
    s2 = model.variance_factor(np.sqrt(radius_sq))
    trace = s2 * p.total_var
    qform = s2 * p.radial_var * radius_sq
    third = np.zeros_like(trace)
    if model.noise_kind == RADEMACHER:
        fourth = trace * trace
    else:
        trace_sq = s2 * s2 * (p.radial_var**2 + (p.dim - 1) * p.transverse_var**2)
        fourth = trace * trace + 2.0 * trace_sq
    return trace, qform, third, fourth
