"""Trajectory simulation, diffusive scaling, and exact compensator tracking.

A trajectory X_0..X_N is advanced one step at a time across a whole batch of
independent walks (one RNG substream per walk), so ensemble results are
byte-identical for any partition of the batch.  The scaled path is the step
function t -> X_{floor(n t)} / sqrt(n); its squared radius Y, the predictable
compensator B of Y, and the compensator A of the squared martingale part are
tracked from the model's closed-form conditional moments, making the identities
testable to machine precision rather than statistically.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .covariance import WalkModel, draw_noise, increments_from_noise, moment_profile
from .seeding import make_rng, substream_seeds

# Noise is drawn per trajectory in blocks of this many steps.  The stream a
# trajectory sees is independent of the block size, but the constant is fixed
# so replays share the exact draw pattern.
BLOCK_STEPS = 2048

# Positions beyond this norm abort the run: transient regimes must fail loudly.
OVERFLOW_LIMIT = 1e150

DEFAULT_CHUNK = 256


class SimulationOverflow(RuntimeError):
    """A position exceeded OVERFLOW_LIMIT; records where and which stream."""

    def __init__(self, step: int, trajectory: int, seed: int | None):
        self.step = step
        self.trajectory = trajectory
        self.seed = seed
        super().__init__(
            f"position overflow at step {step} in trajectory {trajectory} "
            f"(seed {seed}); the walk left the representable range"
        )


@dataclass(frozen=True)
class Trajectory:
    """A simulated walk: positions X_0..X_steps, reproducible from its seed."""

    start: np.ndarray
    steps: int
    seed: int
    positions: np.ndarray  # (steps + 1, dim)


class PositionRecorder:
    """Visitor that stores every position of every trajectory in the batch."""

    def __init__(self, n_rows: int, steps: int, dim: int):
        self.positions = np.empty((n_rows, steps + 1, dim))

    def start(self, pos):
        self.positions[:, 0, :] = pos

    def step(self, k, pos):
        self.positions[:, k, :] = pos

    def finish(self):
        return self.positions


class SnapshotRecorder:
    """Visitor that stores positions only at selected step indices."""

    def __init__(self, n_rows: int, indices, dim: int):
        self.indices = sorted({int(i) for i in indices})
        if self.indices and self.indices[0] < 0:
            raise ValueError("snapshot indices must be >= 0")
        self._slot = {k: j for j, k in enumerate(self.indices)}
        self.positions = np.empty((n_rows, len(self.indices), dim))

    def start(self, pos):
        j = self._slot.get(0)
        if j is not None:
            self.positions[:, j, :] = pos

    def step(self, k, pos):
        j = self._slot.get(k)
        if j is not None:
            self.positions[:, j, :] = pos

    def finish(self):
        return self.positions


def _drive(model, start, steps, rngs, visitor, seeds=None, index_offset=0):
    """Advance a batch of walks in lockstep, feeding each new position to `visitor`."""
    n_rows = len(rngs)
    pos = np.tile(np.asarray(start, dtype=float), (n_rows, 1))
    visitor.start(pos)
    done = 0
    while done < steps:
        n_block = min(BLOCK_STEPS, steps - done)
        noise = np.empty((n_rows, n_block, model.dim))
        for i, rng in enumerate(rngs):
            noise[i] = draw_noise(model, rng, n_block)
        for j in range(n_block):
            pos = pos + increments_from_noise(model, pos, noise[:, j, :])
            done += 1
            row_max = np.abs(pos).max(axis=1)
            if row_max.max() > OVERFLOW_LIMIT:
                idx = int(row_max.argmax())
                raise SimulationOverflow(
                    step=done,
                    trajectory=index_offset + idx,
                    seed=None if seeds is None else int(seeds[idx]),
                )
            visitor.step(done, pos)


def simulate(model: WalkModel, start, steps: int, seed: int) -> Trajectory:
    """Simulate one trajectory; bit-identical given (model, start, steps, seed)."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    start = np.asarray(start, dtype=float)
    if start.shape != (model.dim,):
        raise ValueError(f"start has shape {start.shape}, expected ({model.dim},)")
    recorder = PositionRecorder(1, steps, model.dim)
    _drive(
        model,
        start,
        steps,
        [make_rng(seed)],
        recorder,
        seeds=np.array([seed], dtype=np.uint64),
    )
    return Trajectory(start=start, steps=steps, seed=int(seed), positions=recorder.finish()[0])


def simulate_batch(model: WalkModel, start, steps: int, seeds) -> np.ndarray:
    """Positions (len(seeds), steps + 1, dim) of independent walks from one start."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    recorder = PositionRecorder(len(seeds), steps, model.dim)
    _drive(model, start, steps, [make_rng(int(s)) for s in seeds], recorder, seeds=seeds)
    return recorder.finish()


def run_ensemble(
    model: WalkModel,
    start,
    steps: int,
    n_traj: int,
    master_seed: int,
    visitor_factory,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
):
    """Run n_traj independent walks through per-chunk visitors.

    `visitor_factory(n_rows)` builds a fresh visitor per chunk; finished
    visitor results (an array or tuple of arrays, one row per trajectory) are
    concatenated in index order.  The chunk size is fixed independently of
    `workers`, and every trajectory owns its substream, so output is
    byte-identical for any worker count.  Returns (merged results, sub_seeds).
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    sub_seeds = substream_seeds(master_seed, n_traj)
    spans = [(lo, min(lo + chunk_size, n_traj)) for lo in range(0, n_traj, chunk_size)]

    def one_chunk(span):
        lo, hi = span
        rngs = [make_rng(int(s)) for s in sub_seeds[lo:hi]]
        visitor = visitor_factory(hi - lo)
        _drive(model, start, steps, rngs, visitor, seeds=sub_seeds[lo:hi], index_offset=lo)
        return visitor.finish()

    if workers <= 1 or len(spans) == 1:
        parts = [one_chunk(span) for span in spans]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one_chunk, spans))

    return _merge_parts(parts), sub_seeds


def _merge_parts(parts):
    first = parts[0]
    if isinstance(first, tuple):
        return tuple(
            np.concatenate([p[i] for p in parts], axis=0) for i in range(len(first))
        )
    return np.concatenate(parts, axis=0)


def floor_index(n: int, t: float) -> int:
    """floor(n * t) with a nudge so jump times k/n land on index k despite roundoff."""
    return int(math.floor(n * t + 1e-9))


def _required_steps(n: int, horizon: float) -> int:
    return int(math.ceil(n * horizon - 1e-9))


@dataclass(frozen=True)
class ScaledPath:
    """The cadlag step function t -> X_{floor(n t)} / sqrt(n) on [0, horizon]."""

    n: int
    horizon: float
    times: np.ndarray  # jump times k/n, k = 0..K
    values: np.ndarray  # (K + 1, dim)

    def value_at(self, t: float) -> np.ndarray:
        if t < 0 or t > self.horizon + 1e-12:
            raise ValueError(f"t = {t} outside [0, {self.horizon}]")
        k = min(floor_index(self.n, t), len(self.times) - 1)
        return self.values[k]

    def radius_sq_at(self, t: float) -> float:
        v = self.value_at(t)
        return float(v @ v)


def scale(traj: Trajectory, n: int, horizon: float = 1.0) -> ScaledPath:
    """Diffusively rescale a trajectory by index n over [0, horizon]."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    needed = _required_steps(n, horizon)
    if traj.steps < needed:
        raise ValueError(
            f"trajectory has {traj.steps} steps but scaling by n={n} over "
            f"[0, {horizon}] needs {needed}"
        )
    top = floor_index(n, horizon)
    times = np.arange(top + 1) / n
    values = traj.positions[: top + 1] / math.sqrt(n)
    return ScaledPath(n=n, horizon=float(horizon), times=times, values=values)


@dataclass(frozen=True)
class CompensatorTrack:
    """Exact compensator decomposition of the squared scaled radius.

    At jump times k/n the track holds (CSV letters in parentheses):
      radius_sq (Y)        |X_k|^2 / n
      compensator (B)      sum_{m<k} trace M(X_m) / n, the predictable
                           compensator of Y
      quad_compensator (A) compensator of the squared martingale part,
                           accumulated from the closed-form jump
                           (4 x^T M x + 4 m3 + m4 - (trace M)^2) / n^2
      martingale (M)       Y - B
    together with per-jump magnitudes of Y, B, and A.
    """

    n: int
    horizon: float
    total_var: float
    times: np.ndarray
    radius_sq: np.ndarray
    compensator: np.ndarray
    quad_compensator: np.ndarray
    martingale: np.ndarray
    jumps_radius_sq: np.ndarray
    jumps_compensator: np.ndarray
    jumps_quad: np.ndarray


def compensators(traj: Trajectory, model: WalkModel, n: int, horizon: float = 1.0) -> CompensatorTrack:
    """Track Y, B, A, M at jump times from the model's exact conditional moments."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    needed = _required_steps(n, horizon)
    if traj.steps < needed:
        raise ValueError(
            f"trajectory has {traj.steps} steps but the track over [0, {horizon}] "
            f"at n={n} needs {needed}"
        )
    top = floor_index(n, horizon)
    pos = traj.positions[: top + 1]
    radius_sq = (pos * pos).sum(axis=1) / n
    trace, qform, third, fourth = moment_profile(model, pos[:-1])
    comp = np.concatenate([[0.0], np.cumsum(trace)]) / n
    jumps_quad = (4.0 * qform + 4.0 * third + (fourth - trace * trace)) / (n * n)
    quad = np.concatenate([[0.0], np.cumsum(jumps_quad)])
    return CompensatorTrack(
        n=n,
        horizon=float(horizon),
        total_var=model.field.params.total_var,
        times=np.arange(top + 1) / n,
        radius_sq=radius_sq,
        compensator=comp,
        quad_compensator=quad,
        martingale=radius_sq - comp,
        jumps_radius_sq=np.abs(np.diff(radius_sq)),
        jumps_compensator=trace / n,
        jumps_quad=jumps_quad,
    )


@dataclass(frozen=True)
class JumpDiagnostics:
    """Extreme jump sizes over the horizon: sup |dY|^2, sup |dB|^2, sup |dA|."""

    radius_sq_jump_sq: float
    compensator_jump_sq: float
    quad_jump: float


def jump_diagnostics(track: CompensatorTrack) -> JumpDiagnostics:
    def peak(a):
        return float(a.max()) if a.size else 0.0

    return JumpDiagnostics(
        radius_sq_jump_sq=peak(track.jumps_radius_sq) ** 2,
        compensator_jump_sq=peak(track.jumps_compensator) ** 2,
        quad_jump=peak(track.jumps_quad),
    )


@dataclass(frozen=True)
class ConvergenceResiduals:
    """sup_t |B(t) - total_var * t| and sup_t |A(t) - 4 integral of Y|."""

    drift_gap: float
    quad_gap: float


def convergence_residuals(track: CompensatorTrack) -> ConvergenceResiduals:
    """Exact suprema of the compensator residuals over [0, horizon].

    B and A are constant between jumps while t -> total_var * t and the
    running integral of Y are monotone there, so each segment's supremum is
    attained at one of its endpoints; both endpoints of every segment are
    evaluated, including the partial cell ending at the horizon.
    """
    n = track.n
    v = track.total_var
    t = track.times
    comp = track.compensator
    quad = track.quad_compensator
    y = track.radius_sq
    # integral of Y up to t_k; consecutive cells are flat so each adds Y_k / n
    integral = np.concatenate([[0.0], np.cumsum(y[:-1])]) / n

    drift_gaps = [np.abs(comp - v * t)]
    quad_gaps = [np.abs(quad - 4.0 * integral)]
    if len(t) > 1:
        drift_gaps.append(np.abs(comp[:-1] - v * t[1:]))
        quad_gaps.append(np.abs(quad[:-1] - 4.0 * (integral[:-1] + y[:-1] / n)))
    if track.horizon > t[-1] + 1e-15:
        tail = track.horizon - t[-1]
        drift_gaps.append(np.array([abs(comp[-1] - v * track.horizon)]))
        quad_gaps.append(np.array([abs(quad[-1] - 4.0 * (integral[-1] + tail * y[-1]))]))
    return ConvergenceResiduals(
        drift_gap=float(np.concatenate(drift_gaps).max()),
        quad_gap=float(np.concatenate(quad_gaps).max()),
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(path, traj: Trajectory, n: int) -> None:
    """Columns k, t = k/n, x_1..x_d with full-precision reals."""
    dim = traj.positions.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t"] + [f"x{i + 1}" for i in range(dim)])
        for k, row in enumerate(traj.positions):
            writer.writerow([k, _fmt(k / n)] + [_fmt(c) for c in row])


def write_track_csv(path, track: CompensatorTrack) -> None:
    """Columns t, Y, B, A, M with full-precision reals."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "Y", "B", "A", "M"])
        for k in range(len(track.times)):
            writer.writerow(
                [
                    _fmt(track.times[k]),
                    _fmt(track.radius_sq[k]),
                    _fmt(track.compensator[k]),
                    _fmt(track.quad_compensator[k]),
                    _fmt(track.martingale[k]),
                ]
            )
