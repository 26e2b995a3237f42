"""Integrators for the edge-operator SDE systems.

Four flavors: the soft-edge pair (psi, psi'), the hard-edge pair
(phi, phi'), the scaled hard-edge pair (u_hat, u_hat') that interpolates
between them, and the two Riccati diffusions (log-derivative flows) with
explosion/restart bookkeeping.

Conventions
-----------
* ``noise=None`` selects zero-noise mode: the equations reduce to their
  deterministic ODE versions (stochastic terms *and* Ito corrections are
  dropped), which is what every deterministic oracle in the tests targets.
* With a :class:`~edgeops.noise.BrownianPath`, increments are only ever
  taken between genuine knots of the (possibly refined) path, so reruns on
  the same path are bit-identical.
* Hard-edge solutions grow like exp(2a*x); magnitudes are carried as
  (sign, log) with the raw values filled in only where they are
  representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _loops
from .errors import (
    InvalidArgumentError,
    InvalidStateError,
    OutOfRangeError,
)
from .noise import BrownianPath, direct_increments, scaled_increments

_EMPTY = np.empty(0)

M_SWITCH_DEFAULT = 1e3
M_CAP_DEFAULT = 1e6
RAW_LOG_LIMIT = 700.0  # |ln f| beyond which raw doubles stop being stored


def _coeffs(beta: float, zero_noise: bool):
    """(noise coefficient 2/sqrt(beta), Ito coefficient 2/beta)."""
    if zero_noise:
        return 0.0, 0.0
    if not beta > 0:
        raise InvalidArgumentError("beta must be positive")
    return 2.0 / math.sqrt(beta), 2.0 / beta


@dataclass
class SolutionPair:
    """A grid-sampled solution (f, f') of one of the pair systems.

    Magnitudes are stored as sign plus log so exponential growth survives;
    ``raw_f``/``raw_fp`` hold direct values wherever they fit in a double
    (NaN elsewhere).  ``deriv_ratio`` is f'/f, finite away from zeros of f.
    """

    grid: np.ndarray
    sign: np.ndarray
    log_mag: np.ndarray
    deriv_ratio: np.ndarray
    raw_f: np.ndarray | None
    raw_fp: np.ndarray | None
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def values(self) -> np.ndarray:
        """f on the grid (may overflow to +-inf if logs exceed ~709)."""
        with np.errstate(over="ignore"):
            return self.sign * np.exp(self.log_mag)

    @property
    def deriv_values(self) -> np.ndarray:
        """f' on the grid, from raw storage when available."""
        if self.raw_fp is not None and not np.any(np.isnan(self.raw_fp)):
            return self.raw_fp
        with np.errstate(over="ignore", invalid="ignore"):
            return self.deriv_ratio * self.values

    @property
    def crossings(self) -> np.ndarray:
        """Grid indices i with sign[i] != sign[i+1] (zeros of f)."""
        return np.nonzero(self.sign[:-1] != self.sign[1:])[0]

    def value_at(self, x: float) -> float:
        """f at a grid point (nearest-node lookup)."""
        i = int(round((x - self.grid[0]) / self.step))
        if not 0 <= i < self.grid.shape[0]:
            raise OutOfRangeError(f"{x} outside solution grid")
        return float(self.sign[i] * np.exp(self.log_mag[i]))

    def index_of(self, x: float) -> int:
        i = int(round((x - self.grid[0]) / self.step))
        if not 0 <= i < self.grid.shape[0] or abs(self.grid[i] - x) > 1e-8 * max(1.0, abs(x)):
            raise InvalidArgumentError(f"{x} is not a grid point of this solution")
        return i

    @classmethod
    def from_values(cls, grid, values, deriv=None, kind="synthetic", params=None):
        """Build a pair from plain value arrays (used for synthetic kernels)."""
        values = np.asarray(values, dtype=float)
        grid = np.asarray(grid, dtype=float)
        sign = np.where(values < 0, -1, 1).astype(np.int8)
        with np.errstate(divide="ignore"):
            log_mag = np.log(np.abs(values))
        if deriv is None:
            deriv = np.gradient(values, grid)
        deriv = np.asarray(deriv, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = deriv / values
        return cls(grid=grid, sign=sign, log_mag=log_mag, deriv_ratio=ratio,
                   raw_f=values, raw_fp=deriv, kind=kind, params=params or {})


@dataclass
class RiccatiPath:
    """A grid-sampled Riccati trajectory with explosion bookkeeping.

    ``values`` hold the diffusion on the (possibly strided) grid with a
    ``+inf`` marker at the first stored node after each explosion.
    ``cum_log_abs``/``rel_sign`` carry ln|f| of the underlying linear
    solution relative to the reference node, accumulated in-step by the
    integrator (valid through explosions); they are what
    :func:`log_reconstruct` consumes.
    """

    grid: np.ndarray
    values: np.ndarray
    explosions: np.ndarray
    restart_policy: float
    params: dict = field(default_factory=dict)
    cum_log_abs: np.ndarray | None = None
    rel_sign: np.ndarray | None = None
    final_p: float = math.nan
    settled: bool = True

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def n_explosions(self) -> int:
        return int(self.explosions.shape[0])


def _pair_from_arrays(grid, u, v, off, kind, params) -> SolutionPair:
    sign = np.where(u < 0, -1, 1).astype(np.int8)
    with np.errstate(divide="ignore"):
        log_mag = np.log(np.abs(u)) + off
        log_fp = np.log(np.abs(v)) + off
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = v / u
    raw_f = np.sign(u) * np.exp(np.minimum(log_mag, RAW_LOG_LIMIT))
    raw_fp = np.sign(v) * np.exp(np.minimum(log_fp, RAW_LOG_LIMIT))
    raw_f[log_mag > RAW_LOG_LIMIT] = np.nan
    raw_fp[log_fp > RAW_LOG_LIMIT] = np.nan
    return SolutionPair(grid=grid, sign=sign, log_mag=log_mag, deriv_ratio=ratio,
                        raw_f=raw_f, raw_fp=raw_fp, kind=kind, params=params)


def _soft_increments(noise, span, h):
    if noise is None:
        n = int(math.floor(span / h + 1e-9))
        return _EMPTY, h, n
    return direct_increments(noise, span, h)


def solve_airy_pair(noise: BrownianPath | None, beta: float, c0: float, c1: float,
                    L: float, h: float) -> SolutionPair:
    """Integrate the soft-edge pair d(psi) = psi' dx, d(psi') = psi ((2/sqrt(beta)) dB + x dx).

    Deterministic given the noise path; ``noise=None`` integrates the
    classical equation psi'' = x psi.
    """
    if c0 == 0.0 and c1 == 0.0:
        raise InvalidArgumentError("initial data (c0, c1) must not be (0, 0)")
    sig, _ = _coeffs(beta, noise is None)
    dB, ah, n = _soft_increments(noise, L, h)
    u, v, off = _loops.pair_scaled(float(c0), float(c1), ah, n, dB, sig, 0.0, 0.0)
    grid = np.arange(n + 1) * ah
    params = dict(beta=beta, c0=c0, c1=c1, h=ah, noise=noise)
    return _pair_from_arrays(grid, u, v, off, "airy", params)


def solve_scaled_pair(noise: BrownianPath | None, beta: float, a: float,
                      eta0: float, eta1: float, L: float, h: float) -> SolutionPair:
    """Integrate the scaled hard-edge pair (u_hat, u_hat') in soft coordinates.

    eps = a**(-1/3); correction terms F1, F2 vanish continuously at eps = 0,
    where the output is bit-identical to :func:`solve_airy_pair`.  ``a`` may
    be ``math.inf`` (or ``None``) as the eps = 0 sentinel; otherwise a >= 1.
    """
    if a is None or a == math.inf:
        eps = 0.0
    else:
        if a < 1:
            raise InvalidArgumentError("scaled pair requires a >= 1 (or inf)")
        eps = float(a) ** (-1.0 / 3.0)
    if eta0 == 0.0 and eta1 == 0.0:
        raise InvalidArgumentError("initial data must not be (0, 0)")
    sig, itob = _coeffs(beta, noise is None)
    dB, ah, n = _soft_increments(noise, L, h)
    u, v, off = _loops.pair_scaled(float(eta0), float(eta1), ah, n, dB, sig, itob, eps)
    grid = np.arange(n + 1) * ah
    params = dict(beta=beta, a=a, eta0=eta0, eta1=eta1, h=ah, noise=noise)
    return _pair_from_arrays(grid, u, v, off, "scaled", params)


def solve_hard_pair(noise: BrownianPath | None, beta: float, a: float, lam: float,
                    c0: float, c1: float, T: float, h: float) -> SolutionPair:
    """Integrate the hard-edge pair in hard coordinates with parameter 2a.

    d(phi) = phi' dx,
    d(phi') = (2/sqrt(beta)) phi' dB_2a + ((2a + 2/beta) phi' - lam e^{-x} phi) dx.

    The noise is the coupled view B_2a of the base path, so the horizon
    must cover a**(2/3) * T.  Solutions grow like exp(2a*x); magnitudes are
    kept in log space automatically.
    """
    if a <= 0.5:
        raise InvalidArgumentError("hard-edge pair requires a > 1/2")
    if c0 == 0.0 and c1 == 0.0:
        raise InvalidArgumentError("initial data (c0, c1) must not be (0, 0)")
    sig, _ = _coeffs(beta, noise is None)
    if noise is None:
        dB, ah, n = _EMPTY, h, int(math.floor(T / h + 1e-9))
    else:
        dB, ah, n = scaled_increments(noise, a, T, h)
    u, v, off = _loops.pair_hard(float(c0), float(c1), ah, n, dB, sig, 2.0 * a, float(lam))
    grid = np.arange(n + 1) * ah
    params = dict(beta=beta, a=a, lam=lam, c0=c0, c1=c1, h=ah, noise=noise)
    return _pair_from_arrays(grid, u, v, off, "hard", params)


def _riccati_run(kind, dB, h, n, t0, lam, sig, two_a, x0, stride, band_dwell,
                 m_switch, m_cap, params) -> RiccatiPath:
    if n <= 0:
        raise InvalidArgumentError("empty integration window")
    stride = max(1, int(stride))
    n = (n // stride) * stride  # keep the last node on the stored grid
    dirichlet = 1 if x0 == math.inf else 0
    init_inverse = 1 if (x0 == math.inf or abs(x0) > m_switch) else 0
    (p, cum, sgn, expl, n_expl, n_done, final_p, settled, overflowed) = _loops.riccati(
        kind, dB, h, n, t0, lam, sig, two_a, x0, init_inverse,
        m_switch, m_cap, stride, dirichlet, band_dwell, 65536)
    if overflowed:
        raise InvalidStateError("explosion buffer overflow (>65536 explosions)")
    k_done = n_done // stride
    grid = t0 + np.arange(k_done + 1) * (stride * h)
    values = p[: k_done + 1].copy()
    explosions = expl[:n_expl].copy()
    # spec'd marker: the first stored node after each explosion reads +inf
    if n_expl:
        marks = np.ceil((explosions - t0) / (stride * h) - 1e-12).astype(int)
        marks = marks[(marks >= 0) & (marks <= k_done)]
        values[marks] = np.inf
    if dirichlet:
        values[0] = np.inf
    path = RiccatiPath(grid=grid, values=values, explosions=explosions,
                       restart_policy=m_cap, params=params,
                       cum_log_abs=cum[: k_done + 1].copy(),
                       rel_sign=sgn[: k_done + 1].copy(),
                       final_p=final_p,
                       settled=bool(settled) or band_dwell <= 0.0)
    path.params["dirichlet_start"] = bool(dirichlet)
    path.params["n_steps_done"] = int(n_done)
    path.params["n_steps_requested"] = int(n)
    return path


def solve_airy_riccati(noise: BrownianPath | None, beta: float, t0: float, x0: float,
                       T: float, h: float, lam: float = 0.0, stride: int = 1,
                       band_dwell: float = 0.0,
                       m_switch: float = M_SWITCH_DEFAULT,
                       m_cap: float = M_CAP_DEFAULT) -> RiccatiPath:
    """Riccati flow dX = (t - lam - X^2) dt + (2/sqrt(beta)) dB from X(t0) = x0.

    Explosions to -inf restart at +inf instantaneously; they are recorded
    (with sub-grid times from the inverse-variable integration), not
    errors.  ``x0 = inf`` enters through the inverse variable exactly.
    """
    if not T > t0 >= 0:
        raise InvalidArgumentError("need T > t0 >= 0")
    sig, _ = _coeffs(beta, noise is None)
    if noise is None:
        dB, ah, n_total = _EMPTY, h, 0
        n = int(math.floor((T - t0) / h + 1e-9))
    else:
        dB_full, ah, n_total = direct_increments(noise, T, h)
        i0 = int(round(t0 / ah))
        t0 = i0 * ah
        dB = dB_full[i0:]
        n = n_total - i0
    params = dict(beta=beta, lam=lam, t0=t0, x0=x0, h=ah, kind="airy", noise=noise)
    return _riccati_run(_loops.RICCATI_SOFT, dB, ah, n, t0, lam, sig, 0.0,
                        float(x0), stride, band_dwell, m_switch, m_cap, params)


def solve_bessel_riccati(noise: BrownianPath | None, beta: float, a: float, lam: float,
                         T: float, h: float, p0: float = math.inf, stride: int = 1,
                         m_switch: float = M_SWITCH_DEFAULT,
                         m_cap: float = M_CAP_DEFAULT) -> RiccatiPath:
    """Hard-edge Riccati flow with parameter 2a on the coupled noise view.

    dp = (2/sqrt(beta)) p dB_2a + ((2a + 2/beta) p - p^2 - lam e^{-t}) dt,
    started at p(0) = +inf (entered exactly through the inverse variable).
    """
    if a <= 0:
        raise InvalidArgumentError("coupled hard-edge flow requires a > 0")
    sig, _ = _coeffs(beta, noise is None)
    if noise is None:
        dB, ah, n = _EMPTY, h, int(math.floor(T / h + 1e-9))
    else:
        dB, ah, n = scaled_increments(noise, a, T, h)
    params = dict(beta=beta, a=a, two_a=2.0 * a, lam=lam, p0=p0, h=ah,
                  kind="bessel", noise=noise)
    return _riccati_run(_loops.RICCATI_HARD, dB, ah, n, 0.0, lam, sig, 2.0 * a,
                        float(p0), stride, 0.0, m_switch, m_cap, params)


def bessel_riccati_direct(noise: BrownianPath | None, beta: float, two_a: float,
                          lam: float, T: float, h: float, p0: float = math.inf,
                          stride: int = 1, m_switch: float = M_SWITCH_DEFAULT,
                          m_cap: float = M_CAP_DEFAULT) -> RiccatiPath:
    """Hard-edge Riccati flow with the path consumed at hard times directly.

    For standalone hard-edge sampling (any 2a >= 0, including the 2a = 0
    degenerate family) where the coupling view is not wanted; B_2a is a
    standard Brownian motion either way.
    """
    if two_a < 0:
        raise InvalidArgumentError("hard-edge parameter 2a must be >= 0")
    sig, _ = _coeffs(beta, noise is None)
    if noise is None:
        dB, ah, n = _EMPTY, h, int(math.floor(T / h + 1e-9))
    else:
        dB, ah, n = direct_increments(noise, T, h)
    params = dict(beta=beta, two_a=two_a, lam=lam, p0=p0, h=ah,
                  kind="bessel", noise=noise)
    return _riccati_run(_loops.RICCATI_HARD, dB, ah, n, 0.0, lam, sig, float(two_a),
                        float(p0), stride, 0.0, m_switch, m_cap, params)


def log_reconstruct(r: RiccatiPath, log_f_at_start: float, sign_at_start: int,
                    flip_signs: bool = True) -> SolutionPair:
    """Rebuild ln|f| (and signs) from a Riccati path: ln f(t) = ln f(start) + int p.

    Uses the integrator's in-step accumulation when present (valid through
    explosions); falls back to trapezoid integration of the stored values
    otherwise.  Signs flip at each explosion (zero crossing of f).
    """
    if not flip_signs and r.n_explosions:
        raise InvalidStateError(
            "window contains explosions; reconstruction needs sign flips")
    n = r.grid.shape[0]
    if r.cum_log_abs is not None:
        log_mag = log_f_at_start + r.cum_log_abs
        sign = (sign_at_start * r.rel_sign).astype(np.int8)
        if r.params.get("dirichlet_start"):
            log_mag = log_mag.copy()
            log_mag[0] = -np.inf
    else:
        vals = np.clip(np.nan_to_num(r.values, posinf=r.restart_policy,
                                     neginf=-r.restart_policy),
                       -r.restart_policy, r.restart_policy)
        log_mag = np.empty(n)
        log_mag[0] = log_f_at_start
        log_mag[1:] = log_f_at_start + np.cumsum(
            0.5 * (vals[1:] + vals[:-1]) * np.diff(r.grid))
        sign = np.full(n, sign_at_start, dtype=np.int8)
        if flip_signs:
            for te in r.explosions:
                sign[r.grid > te] *= -1
    ratio = np.where(np.isfinite(r.values), r.values, np.inf)
    with np.errstate(over="ignore"):
        f = sign * np.exp(log_mag)
        fp = np.where(np.isfinite(log_mag), ratio * f, np.nan)
    raw_f = np.where(log_mag < RAW_LOG_LIMIT, f, np.nan)
    raw_fp = np.where(np.isfinite(fp) & (log_mag < RAW_LOG_LIMIT), fp, np.nan)
    params = dict(r.params)
    params["reconstructed"] = True
    return SolutionPair(grid=r.grid.copy(), sign=sign, log_mag=log_mag,
                        deriv_ratio=ratio, raw_f=raw_f, raw_fp=raw_fp,
                        kind=params.get("kind", "hard"), params=params)


def pair_to_csv(pair: SolutionPair, filename) -> None:
    """Trajectory dump: CSV columns (t, sign, log_mag, deriv_ratio)."""
    with open(filename, "w", newline="\n") as fh:
        fh.write("t,sign,log_mag,deriv_ratio\n")
        for t, s, lm, dr in zip(pair.grid, pair.sign, pair.log_mag, pair.deriv_ratio):
            fh.write(f"{t!r},{int(s)},{lm!r},{dr!r}\n")
