"""Brownian paths shared by the coupled edge operators.

One standard Brownian motion ``B`` drives everything: the soft-edge
(Airy) equations consume its increments directly, while the hard-edge
(Bessel) equations read the scaled view ``B_2a(x) = a**(-1/3) * B(a**(2/3) x)``
of the *same* path.  Realizing the hard-edge noise as a view of the base
path, rather than as fresh randomness, is what makes the a-sweep a coupled
experiment.

Paths are immutable.  ``sample_path`` and ``refine`` are pure functions of
the seed material, so paths can be shared freely across workers and are
reproducible bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError, OutOfRangeError

MAGIC = b"EDGEBM01"

# Stream ids for the counter-based generator: one stream per purpose so
# that refinement stages never reuse base-path randomness.
_STREAM_BASE = 0
_STREAM_REFINE = 1  # stage at refinement level k uses stream _STREAM_REFINE + k


def _generator(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream)."""
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) | (int(stream) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _grid_count(horizon: float, step: float) -> int:
    # floor(T/h), robust against `horizon/step` landing just below an integer
    return int(np.floor(horizon / step + 1e-9))


@dataclass(frozen=True)
class BrownianPath:
    """One realization of standard Brownian motion on a uniform grid.

    Attributes
    ----------
    step : float
        Grid spacing h > 0.
    horizon : float
        Total time covered; the grid is ``t_i = i*step`` for
        ``i = 0 .. floor(horizon/step)``.
    values : ndarray
        ``W(t_i)``; ``values[0] == 0`` exactly.
    seed : int
        64-bit reproducibility token.
    refinement_level : int
        Number of bridge-refinement stages applied since sampling.
    """

    step: float
    horizon: float
    values: np.ndarray = field(repr=False)
    seed: int
    refinement_level: int = 0

    def __post_init__(self):
        self.values.flags.writeable = False

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.step

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    def eval(self, t) -> float | np.ndarray:
        """Linearly interpolated value of W at time(s) ``t``.

        Exact at grid points.  Interpolation is deterministic (no bridge
        sampling); only :func:`refine` adds randomness.
        """
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < -1e-12) or np.any(t_arr > self.horizon * (1 + 1e-12) + 1e-12):
            raise OutOfRangeError(
                f"time {t!r} outside path domain [0, {self.horizon}]"
            )
        pos = np.clip(t_arr / self.step, 0.0, self.n_steps)
        i = np.minimum(pos.astype(np.int64), self.n_steps - 1)
        frac = pos - i
        out = self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def scaled_eval(self, a: float, x) -> float | np.ndarray:
        """The coupled hard-edge noise ``B_2a(x) = a**(-1/3) W(a**(2/3) x)``.

        The caller must have pre-sized the path: ``a**(2/3) * x`` has to be
        within the horizon.
        """
        if a <= 0:
            raise InvalidArgumentError("scale parameter a must be positive")
        return a ** (-1.0 / 3.0) * self.eval(a ** (2.0 / 3.0) * np.asarray(x, dtype=float))

    def increments(self) -> np.ndarray:
        """Increments W(t_{i+1}) - W(t_i) on the path's own grid."""
        return np.diff(self.values)


def sample_path(seed: int, horizon: float, step: float) -> BrownianPath:
    """Sample a Brownian path with independent N(0, step) increments.

    The same (seed, horizon, step) always yields the same path.
    """
    if step <= 0 or horizon <= 0:
        raise InvalidArgumentError("horizon and step must be positive")
    if step > horizon:
        raise InvalidArgumentError("step must not exceed horizon")
    n = _grid_count(horizon, step)
    rng = _generator(seed, _STREAM_BASE)
    increments = rng.standard_normal(n) * np.sqrt(step)
    values = np.empty(n + 1)
    values[0] = 0.0
    np.cumsum(increments, out=values[1:])
    return BrownianPath(step=float(step), horizon=float(horizon), values=values, seed=int(seed))


def _refine_stage(path: BrownianPath, m: int) -> BrownianPath:
    """One bridge-refinement stage inserting m-1 points per interval."""
    level = path.refinement_level + 1
    rng = _generator(path.seed, _STREAM_REFINE + level)
    n = path.n_steps
    h_new = path.step / m
    old = path.values
    new = np.empty(n * m + 1)
    new[::m] = old  # knots preserved bit-exactly
    if m > 1:
        z = rng.standard_normal((n, m - 1))
        left = old[:-1].copy()
        right = old[1:]
        for j in range(1, m):
            k = m - j + 1  # sub-intervals remaining up to the right knot
            mean = left + (right - left) / k
            var = h_new * (k - 1) / k
            left = mean + np.sqrt(var) * z[:, j - 1]
            new[j::m][:n] = left
    return replace(path, step=h_new, values=new, refinement_level=level)


def refine(path: BrownianPath, factor: int) -> BrownianPath:
    """Refine the grid by ``factor`` using Brownian-bridge sampling.

    Conditioned on the existing knots, so the restriction of the result to
    the original grid equals the original values bit-exactly.  Stages are
    seeded from (seed, refinement level): refining by 2 twice gives the
    same path as refining by 4 once.
    """
    factor = int(factor)
    if factor < 2:
        raise InvalidArgumentError("refinement factor must be an integer >= 2")
    out = path
    remaining = factor
    while remaining % 2 == 0:
        out = _refine_stage(out, 2)
        remaining //= 2
    if remaining > 1:
        out = _refine_stage(out, remaining)
    return out


def fluctuation_constant(path: BrownianPath, s_min: float) -> float:
    """Empirical modulus-of-continuity constant of the path.

    Supremum over grid pairs (s, s+h), s >= s_min, of
    ``|W(s+h) - W(s)| / sqrt(h * ln(2 + s/h + |ln h|))`` with h the grid
    step.  Almost-sure finiteness of the continuum supremum is what the
    hard-edge tail bounds lean on; the grid value is a path diagnostic.
    """
    if s_min <= 0:
        raise InvalidArgumentError("s_min must be positive")
    h = path.step
    i0 = int(np.ceil(s_min / h - 1e-9))
    if i0 >= path.n_steps:
        raise InvalidArgumentError("no grid pairs at or beyond s_min")
    s = np.arange(i0, path.n_steps) * h
    dW = np.abs(np.diff(path.values[i0:]))
    denom = np.sqrt(h * np.log(2.0 + s / h + np.abs(np.log(h))))
    return float(np.max(dW / denom))


# ---------------------------------------------------------------------------
# Increment extraction for the SDE solvers.
#
# Solvers must consume genuine grid increments of the base path (summed,
# never interpolated: interpolated increments have the wrong quadratic
# variation).  When the requested step is finer than the base grid the path
# is bridge-refined first; when it is coarser, increments are summed over a
# whole number of base cells, snapping the effective step.
# ---------------------------------------------------------------------------


def _prepare(path: BrownianPath, base_step_target: float, base_span: float):
    """Refine so the base grid resolves ``base_step_target``; return
    (path, stride) with stride*step <= ~target."""
    if base_span > path.horizon * (1 + 1e-9) + 1e-12:
        raise OutOfRangeError(
            f"path horizon {path.horizon} too short: need {base_span}"
        )
    p = path
    if p.step > base_step_target * (1 + 1e-6):
        p = refine(path, int(np.ceil(p.step / base_step_target - 1e-6)))
    ratio = base_step_target / p.step
    stride = int(round(ratio)) if abs(ratio - round(ratio)) < 1e-6 * max(1.0, ratio) \
        else int(np.floor(ratio + 1e-9))
    return p, max(1, stride)


def direct_increments(path: BrownianPath, span: float, h: float):
    """Base-path increments over steps of (approximately) h covering [0, span].

    Returns ``(dW, actual_h, n_steps)``.
    """
    p, stride = _prepare(path, h, span)
    actual_h = stride * p.step
    n = int(np.floor(span / actual_h + 1e-9))
    dW = np.diff(p.values[: n * stride + 1 : stride])
    return np.ascontiguousarray(dW), actual_h, n


def scaled_increments(path: BrownianPath, a: float, span_hard: float, h_hard: float):
    """Increments of the coupled view B_2a over hard-time steps of ~h_hard.

    Reads the base path at times ``a**(2/3) * t`` and scales by
    ``a**(-1/3)``; the base path is refined first if it cannot resolve the
    mapped step.  Returns ``(dB2a, actual_h_hard, n_steps)``.
    """
    if a <= 0:
        raise InvalidArgumentError("scale parameter a must be positive")
    c = a ** (2.0 / 3.0)
    p, stride = _prepare(path, c * h_hard, c * span_hard)
    actual_h = stride * p.step / c
    n = int(np.floor(span_hard / actual_h + 1e-9))
    dW = np.diff(p.values[: n * stride + 1 : stride])
    return np.ascontiguousarray(dW * a ** (-1.0 / 3.0)), actual_h, n


def scaled_path_values(path: BrownianPath, a: float, t_hard: np.ndarray) -> np.ndarray:
    """B_2a at hard times, vectorized (exact where a**(2/3)*t hits knots)."""
    return a ** (-1.0 / 3.0) * path.eval(a ** (2.0 / 3.0) * np.asarray(t_hard))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_path(path: BrownianPath, filename) -> None:
    """Binary container: header {magic, seed, h, count} then the values."""
    with open(filename, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Qd Q", path.seed & 0xFFFFFFFFFFFFFFFF, path.step, path.values.shape[0]))
        fh.write(path.values.astype("<f8").tobytes())


def load_path(filename) -> BrownianPath:
    """Load a path written by :func:`save_path`.

    The refinement level is not part of the container; loaded paths start
    a fresh refinement tree (replays regenerate from seeds instead).
    """
    with open(filename, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise InvalidArgumentError(f"bad magic {magic!r}, expected {MAGIC!r}")
        seed, step, count = struct.unpack("<Qd Q", fh.read(24))
        values = np.frombuffer(fh.read(8 * count), dtype="<f8").copy()
    horizon = (count - 1) * step
    return BrownianPath(step=step, horizon=horizon, values=values, seed=seed)


def path_to_csv(path: BrownianPath, filename) -> None:
    """Two-column CSV export (t, W)."""
    with open(filename, "w", newline="\n") as fh:
        fh.write("t,W\n")
        for t, w in zip(path.grid, path.values):
            fh.write(f"{t!r},{w!r}\n")
