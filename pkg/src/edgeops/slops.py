"""Solution functions, triangular resolvent kernels, Hilbert-Schmidt norms.

Builds the named solutions of the two operator families

* soft edge: psi_d (Dirichlet), psi_star (Neumann), psi_inf (decaying,
  Wronskian-normalized), psi_L (truncated boundary-value solution);
* hard edge, transported to soft coordinates: phi~_d, phi~_star,
  phi~_inf, phi~_L;

assembles the rank-structured kernels K(x, y) = u_right(max) u_d(min) / p1(0)
and computes Hilbert-Schmidt norms/distances by trapezoid quadrature.

Everything hard-edge is carried as (sign, log): the raw hard-coordinate
solutions span e^{+-2a t} and only ratios and transported products are
representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _loops
from .errors import (
    HardEigenvalueCollisionError,
    InvalidArgumentError,
    NearEigenvalueError,
    WindowTooShortError,
)
from .noise import BrownianPath, direct_increments, scaled_increments
from .sde import (
    RiccatiPath,
    SolutionPair,
    log_reconstruct,
    solve_airy_pair,
    solve_bessel_riccati,
    _coeffs,
    _pair_from_arrays,
)

_EMPTY = np.empty(0)


# ---------------------------------------------------------------------------
# Sturm-Liouville coefficient bundles
# ---------------------------------------------------------------------------


@dataclass
class SLCoefficients:
    """Sampled coefficients (r, p1, q0, p0) of the generalized S-L form.

    The hard-edge weights r = m_2a and p1 = 1/s_2a are stored as logs
    (they reach e^{+-2a t}); the soft-edge coefficients are plain arrays.
    """

    grid: np.ndarray
    log_r: np.ndarray
    log_p1: np.ndarray
    q0: np.ndarray
    p0: np.ndarray
    descriptor: dict

    @property
    def r(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_r)

    @property
    def p1(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_p1)


def log_m_2a(noise: BrownianPath | None, beta: float, a: float, t_hard) -> np.ndarray:
    """ln m_2a(t) = -(2a+1) t - (2/sqrt(beta)) B_2a(t) on hard times."""
    t = np.asarray(t_hard, dtype=float)
    sig, _ = _coeffs(beta, noise is None)
    b = 0.0 if noise is None else noise.scaled_eval(a, t)
    return -(2.0 * a + 1.0) * t - sig * b


def log_s_2a(noise: BrownianPath | None, beta: float, a: float, t_hard) -> np.ndarray:
    """ln s_2a(t) = 2a t + (2/sqrt(beta)) B_2a(t) on hard times."""
    t = np.asarray(t_hard, dtype=float)
    sig, _ = _coeffs(beta, noise is None)
    b = 0.0 if noise is None else noise.scaled_eval(a, t)
    return 2.0 * a * t + sig * b


def airy_coefficients(noise: BrownianPath | None, beta: float, grid) -> SLCoefficients:
    """Soft-edge coefficients: r = p1 = 1, q0 = (2/sqrt(beta)) B, p0(x) = x."""
    grid = np.asarray(grid, dtype=float)
    sig, _ = _coeffs(beta, noise is None)
    q0 = sig * (noise.eval(grid) if noise is not None else np.zeros_like(grid))
    return SLCoefficients(grid=grid, log_r=np.zeros_like(grid),
                          log_p1=np.zeros_like(grid), q0=np.asarray(q0, dtype=float),
                          p0=grid.copy(),
                          descriptor=dict(family="airy", beta=beta, noise=noise))


def bessel_coefficients(noise: BrownianPath | None, beta: float, a: float, grid) -> SLCoefficients:
    """Hard-edge coefficients on hard times: r = m_2a, p1 = 1/s_2a, q0 = p0 = 0."""
    grid = np.asarray(grid, dtype=float)
    return SLCoefficients(grid=grid, log_r=log_m_2a(noise, beta, a, grid),
                          log_p1=-log_s_2a(noise, beta, a, grid),
                          q0=np.zeros_like(grid), p0=np.zeros_like(grid),
                          descriptor=dict(family="bessel", beta=beta, two_a=2 * a, noise=noise))


# ---------------------------------------------------------------------------
# sign/log arithmetic helpers
# ---------------------------------------------------------------------------


def _signed_log_sum(s1, l1, s2, l2):
    """(sign, log) of s1*e^l1 + s2*e^l2, elementwise and overflow-safe."""
    l1 = np.asarray(l1, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    m = np.maximum(l1, l2)
    dead = ~np.isfinite(m)  # both terms zero
    m_safe = np.where(dead, 0.0, m)
    val = s1 * np.exp(l1 - m_safe) + s2 * np.exp(l2 - m_safe)
    sign = np.where(val < 0, -1, 1).astype(np.int8)
    with np.errstate(divide="ignore"):
        log = m_safe + np.log(np.abs(val))
    log = np.where(dead, -np.inf, log)
    return sign, log


def _log_trapezoid_right(log_f: np.ndarray, h: float, log_tail: float) -> np.ndarray:
    """log of G(i) = tail + trapezoid of e^{log_f} from node i to the last node.

    Reverse log-sum-exp accumulation; stable across hundreds of orders of
    magnitude.
    """
    terms = np.log(0.5 * h) + np.logaddexp(log_f[:-1], log_f[1:])
    acc = np.logaddexp.accumulate(np.concatenate(([log_tail], terms[::-1])))
    return acc[::-1]


# ---------------------------------------------------------------------------
# Soft-edge solution functions
# ---------------------------------------------------------------------------


def airy_dirichlet(noise: BrownianPath | None, beta: float, L_grid: float, h: float) -> SolutionPair:
    """The Dirichlet solution psi_d (value 0, slope 1 at the origin)."""
    return solve_airy_pair(noise, beta, 0.0, 1.0, L_grid, h)


def airy_neumann(noise: BrownianPath | None, beta: float, L_grid: float, h: float) -> SolutionPair:
    """The Neumann-normalized solution psi_star (value 1, slope 0)."""
    return solve_airy_pair(noise, beta, 1.0, 0.0, L_grid, h)


def _last_zero_index(pair: SolutionPair, upto: int) -> int:
    c = pair.crossings
    c = c[c < upto]
    return int(c[-1]) + 1 if c.size else 0


def airy_infty(psi_d: SolutionPair, L_grid: float, margin: float = 2.0) -> SolutionPair:
    """The decaying solution psi_inf with Wronskian psi_d psi_inf' - psi_d' psi_inf = -1.

    Built from psi_d via the reciprocal-square integral (with a one-term
    closure of the tail beyond L_grid from the asymptotic slope sqrt(x)),
    then extended below the last zero of psi_d by backward integration of
    the pair system on the recorded noise increments.  The Wronskian
    normalization pins psi_inf(0) = 1.
    """
    h = psi_d.step
    iL = psi_d.index_of(L_grid) if psi_d.grid[-1] >= L_grid else psi_d.grid.shape[0] - 1
    iz = _last_zero_index(psi_d, iL)
    if psi_d.grid[iz] > L_grid - margin:
        raise WindowTooShortError(
            f"last zero of psi_d at {psi_d.grid[iz]:.3f} too close to window end {L_grid}")
    i_s = max(iz + int(round(0.5 / h)), int(round(1.0 / h)))
    i_s = min(i_s, iL - int(round(min(1.0, margin / 2) / h)))

    lm = psi_d.log_mag
    sgn = psi_d.sign
    # I(x) = int_x^{L_grid} psi_d^{-2} dy + psi_d(L_grid)^{-2} / (2 sqrt(L_grid))
    log_tail = -2.0 * lm[iL] - math.log(2.0 * math.sqrt(L_grid))
    logI = _log_trapezoid_right(-2.0 * lm[i_s:iL + 1], h, log_tail)

    lm_inf = lm[i_s:iL + 1] + logI
    s_inf = sgn[i_s:iL + 1].copy()
    # psi_inf' = psi_d' I - 1/psi_d  (makes the Wronskian exactly -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_dp = lm[i_s:iL + 1] + np.log(np.abs(psi_d.deriv_ratio[i_s:iL + 1]))
    s_dp = (sgn[i_s:iL + 1] * np.where(psi_d.deriv_ratio[i_s:iL + 1] < 0, -1, 1)).astype(np.int8)
    s_infp, lm_infp = _signed_log_sum(s_dp, log_dp + logI, -sgn[i_s:iL + 1], -lm[i_s:iL + 1])

    # backward extension on the same increments
    beta = psi_d.params["beta"]
    noise = psi_d.params.get("noise")
    sig, _ = _coeffs(beta, noise is None)
    if noise is None:
        dB = _EMPTY
    else:
        dB, ah, _ = direct_increments(noise, L_grid, h)
        if abs(ah - h) > 1e-12 * max(1.0, h):
            raise InvalidArgumentError("psi_d grid is not aligned with its noise path")
    u_s = float(s_inf[0] * np.exp(lm_inf[0]))
    v_s = float(s_infp[0] * np.exp(lm_infp[0]))
    u_back, v_back = _loops.pair_scaled_backward(u_s, v_s, i_s, h, dB, sig)

    n = iL + 1
    u = np.empty(n)
    v = np.empty(n)
    u[:i_s + 1] = u_back
    v[:i_s + 1] = v_back
    with np.errstate(over="ignore"):
        u[i_s:] = s_inf * np.exp(lm_inf)
        v[i_s:] = s_infp * np.exp(lm_infp)
    params = dict(psi_d.params)
    params.update(role="psi_inf", L_grid=L_grid, switch_index=i_s)
    out = _pair_from_arrays(psi_d.grid[:n].copy(), u, v, np.zeros(n), "airy", params)
    # keep the formula-region logs exact (exp/log round trip would lose them)
    out.log_mag[i_s:] = lm_inf
    out.sign[i_s:] = s_inf
    return out


def _truncate(u_star: SolutionPair, u_d: SolutionPair, L: float, kind: str) -> SolutionPair:
    iL = u_d.index_of(L)
    window = u_d.log_mag[: iL + 1]
    scale = np.max(window[np.isfinite(window)])
    if not np.isfinite(u_d.log_mag[iL]) or u_d.log_mag[iL] < scale + math.log(1e-10):
        raise NearEigenvalueError(
            f"u_d({L}) is numerically zero: 0 is an eigenvalue of the truncated problem")
    # u_L = u_star - (u_star(L)/u_d(L)) u_d
    lc = u_star.log_mag[iL] - u_d.log_mag[iL]
    sc = int(u_star.sign[iL] * u_d.sign[iL])
    n = iL + 1
    s, lm = _signed_log_sum(u_star.sign[:n], u_star.log_mag[:n],
                            -sc * u_d.sign[:n], lc + u_d.log_mag[:n])
    with np.errstate(divide="ignore", invalid="ignore"):
        log_dp_star = u_star.log_mag[:n] + np.log(np.abs(u_star.deriv_ratio[:n]))
        log_dp_d = u_d.log_mag[:n] + np.log(np.abs(u_d.deriv_ratio[:n]))
    s_dp_star = (u_star.sign[:n] * np.where(u_star.deriv_ratio[:n] < 0, -1, 1)).astype(np.int8)
    s_dp_d = (u_d.sign[:n] * np.where(u_d.deriv_ratio[:n] < 0, -1, 1)).astype(np.int8)
    sp, lp = _signed_log_sum(s_dp_star, log_dp_star, -sc * s_dp_d, lc + log_dp_d)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = (sp * s).astype(float) * np.exp(lp - lm)
        raw_f = np.where(lm < 700, s * np.exp(np.minimum(lm, 700.0)), np.nan)
        raw_fp = np.where(lp < 700, sp * np.exp(np.minimum(lp, 700.0)), np.nan)
    params = dict(u_d.params)
    params.update(role="truncated", trunc=L)
    return SolutionPair(grid=u_d.grid[:n].copy(), sign=s, log_mag=lm, deriv_ratio=ratio,
                        raw_f=raw_f, raw_fp=raw_fp, kind=kind, params=params)


def airy_truncated(psi_d: SolutionPair, psi_star: SolutionPair, L: float) -> SolutionPair:
    """psi_L = psi_star - (psi_star(L)/psi_d(L)) psi_d: value 1 at 0, 0 at L."""
    return _truncate(psi_star, psi_d, L, "airy")


# ---------------------------------------------------------------------------
# Hard-edge solution functions (transported to soft coordinates)
# ---------------------------------------------------------------------------


def _tilde_riccati(noise, beta, a, L_grid, h, p0, T_hard=None):
    """Run the hard-edge Riccati flow at lam = a^2 over the soft window."""
    c = a ** (2.0 / 3.0)
    T = max(T_hard or 0.0, L_grid / c)
    return solve_bessel_riccati(noise, beta, a, a * a, T, h / c, p0=p0)


def _dirichlet_anchor(r: RiccatiPath, a: float, itob: float) -> float:
    # ln phi_d at the first grid node: phi_d(t) = t (1 + (2a + 2/beta) t / 2 + ...)
    t1 = r.step
    return math.log(t1) + math.log1p((a + 0.5 * itob) * t1)


def _tilde_pair(noise, beta, a, grid_soft, t_hard, rec, extra_log, params) -> SolutionPair:
    lm = extra_log + 0.5 * log_m_2a(noise, beta, a, t_hard) + rec.log_mag
    sign = rec.sign.copy()
    with np.errstate(over="ignore"):
        raw_f = np.where(lm < 700, sign * np.exp(np.minimum(lm, 700.0)), np.nan)
    # derivative of the transported smooth factor only: the weight m^{1/2}
    # carries Brownian roughness and is not differentiable
    ratio = a ** (-2.0 / 3.0) * rec.deriv_ratio
    return SolutionPair(grid=grid_soft, sign=sign, log_mag=lm, deriv_ratio=ratio,
                        raw_f=raw_f, raw_fp=None, kind="hard", params=params)


def bessel_tilde_dirichlet(noise: BrownianPath | None, beta: float, a: float,
                           L_grid: float, h: float) -> SolutionPair:
    """phi~_d(x) = a^{2/3} m_2a^{1/2}(a^{-2/3} x) phi_d(a^{-2/3} x), in log space.

    phi_d is reconstructed from the hard-edge Riccati flow at lam = a^2
    (Dirichlet start p(0) = +inf entered through the inverse variable);
    sign flips at explosions are the zeros of phi_d.
    """
    if a <= 0.5:
        raise InvalidArgumentError("hard-edge transform requires a > 1/2")
    c = a ** (2.0 / 3.0)
    _, itob = _coeffs(beta, noise is None)
    r = _tilde_riccati(noise, beta, a, L_grid, h, math.inf)
    rec = log_reconstruct(r, _dirichlet_anchor(r, a, itob), 1)
    t_hard = r.grid
    grid_soft = c * t_hard
    params = dict(beta=beta, a=a, lam=a * a, h=grid_soft[1] - grid_soft[0],
                  noise=noise, form="tilde", role="phi_tilde_d", riccati=r)
    return _tilde_pair(noise, beta, a, grid_soft, t_hard, rec,
                       (2.0 / 3.0) * math.log(a), params)


def bessel_tilde_star(noise: BrownianPath | None, beta: float, a: float,
                      L_grid: float, h: float) -> SolutionPair:
    """The transported Neumann-normalized solution phi~_star.

    Underlying hard-edge data phi_star(0) = a^{-2/3}, phi_star'(0) = a^{1/3}
    (so the scaled pair starts at (1, 0)); transported with the same
    a^{2/3} m^{1/2} factor as phi~_d.
    """
    if a <= 0.5:
        raise InvalidArgumentError("hard-edge transform requires a > 1/2")
    c = a ** (2.0 / 3.0)
    r = _tilde_riccati(noise, beta, a, L_grid, h, float(a))
    rec = log_reconstruct(r, -(2.0 / 3.0) * math.log(a), 1)
    t_hard = r.grid
    grid_soft = c * t_hard
    params = dict(beta=beta, a=a, lam=a * a, h=grid_soft[1] - grid_soft[0],
                  noise=noise, form="tilde", role="phi_tilde_star", riccati=r)
    return _tilde_pair(noise, beta, a, grid_soft, t_hard, rec,
                       (2.0 / 3.0) * math.log(a), params)


def bessel_tilde_infty(noise: BrownianPath | None, beta: float, a: float, L: float,
                       L_grid: float, h: float, extend_to_zero: bool = True,
                       phi_tilde_d: SolutionPair | None = None) -> SolutionPair:
    """phi~_inf built from the Wronskian integral, in log space.

    phi_inf(t) = phi_d(t) * int_t^inf phi_d(w)^{-2} s_2a(w) dw, with the
    tail beyond the simulated hard window closed geometrically using the
    local decay exponent 2 (p(T) - a); then transported by m^{1/2}.

    Requires the no-explosion guard on [a^{-2/3} L, T]: an explosion there
    means a^2 is (numerically) an eigenvalue and the kernel factor does not
    exist for this realization (raises HardEigenvalueCollisionError).

    Below soft position L the integral formula is replaced by backward
    integration of the hard pair from Wronskian-consistent data at L, which
    extends phi~_inf to 0 (phi~_inf(0) = phi_inf(0) = 1 up to integrator
    error).
    """
    if a <= 0.5:
        raise InvalidArgumentError("hard-edge transform requires a > 1/2")
    c = a ** (2.0 / 3.0)
    if phi_tilde_d is None:
        phi_tilde_d = bessel_tilde_dirichlet(noise, beta, a, L_grid, h)
    r: RiccatiPath = phi_tilde_d.params["riccati"]
    t_hard = r.grid
    grid_soft = phi_tilde_d.grid
    h_hard = r.step
    t_guard = L / c
    bad = r.explosions[r.explosions >= t_guard - 1e-12]
    if bad.size:
        raise HardEigenvalueCollisionError(
            f"hard-edge diffusion exploded at t={bad[0]:.4g} >= {t_guard:.4g}: "
            f"a^2 is numerically an eigenvalue at a={a:g}")

    _, itob = _coeffs(beta, noise is None)
    rec = log_reconstruct(r, _dirichlet_anchor(r, a, itob), 1)
    log_phi_d = rec.log_mag
    logs = log_s_2a(noise, beta, a, t_hard)
    A = logs - 2.0 * log_phi_d
    A[0] = -np.inf if not np.isfinite(A[0]) else A[0]

    p_end = r.values[-1] if np.isfinite(r.values[-1]) else r.final_p
    rate = 2.0 * (p_end - a)
    if not rate > 0:
        rate = a  # pre-asymptotic window; geometric closure at the drift scale
    log_tail = A[-1] - math.log(rate)

    iL = int(round(L / (c * h_hard)))
    # formula region [iL, end]
    logG = _log_trapezoid_right(A[iL:], h_hard, log_tail)
    lm_inf_hard = log_phi_d[iL:] + logG  # ln phi_inf on hard nodes
    s_inf = rec.sign[iL:].copy()
    half_log_m = 0.5 * log_m_2a(noise, beta, a, t_hard)
    lm_tilde = half_log_m[iL:] + lm_inf_hard

    n = t_hard.shape[0]
    sign_full = np.empty(n, dtype=np.int8)
    lm_full = np.empty(n)
    sign_full[iL:] = s_inf
    lm_full[iL:] = lm_tilde

    if extend_to_zero and iL > 0:
        # Wronskian-consistent derivative at the switch point:
        # phi_inf' = p phi_inf - s / phi_d
        j = iL
        while j < n - 1 and not np.isfinite(r.values[j]):
            j += 1
        pL = r.values[j]
        s1 = int(s_inf[0]) * (1 if pL >= 0 else -1)
        l1 = lm_inf_hard[0] + (math.log(abs(pL)) if pL != 0 else -math.inf)
        sA, lA = _signed_log_sum(np.array([s1], dtype=np.int8), np.array([l1]),
                                 np.array([-rec.sign[iL]], dtype=np.int8),
                                 np.array([logs[iL] - log_phi_d[iL]]))
        if max(lm_inf_hard[0], l1, lA[0]) > 690.0:
            # hard-coordinate magnitudes exceed double range (a^{1/3} L too
            # large); leave the formula values in place below L
            sign_full[:iL] = rec.sign[:iL]
            lm_full[:iL] = half_log_m[:iL] + log_phi_d[:iL] + logG[0]
        else:
            u_s = float(s_inf[0] * np.exp(lm_inf_hard[0]))
            v_s = float(sA[0] * np.exp(lA[0]))
            sig, _ = _coeffs(beta, noise is None)
            if noise is None:
                dB = _EMPTY
            else:
                dB, _, _ = scaled_increments(noise, a, t_hard[-1], h_hard)
            u_back, v_back = _loops.pair_hard_backward(u_s, v_s, iL, h_hard, dB,
                                                       sig, 2.0 * a, a * a)
            with np.errstate(divide="ignore"):
                lm_back = np.log(np.abs(u_back)) + half_log_m[:iL + 1]
            sign_full[:iL] = np.where(u_back[:-1] < 0, -1, 1)
            lm_full[:iL] = lm_back[:-1]

    with np.errstate(over="ignore"):
        raw_f = np.where(lm_full < 700, sign_full * np.exp(np.minimum(lm_full, 700.0)), np.nan)
    params = dict(beta=beta, a=a, lam=a * a, h=grid_soft[1] - grid_soft[0],
                  noise=noise, form="tilde", role="phi_tilde_inf", L=L,
                  tail_rate=rate)
    return SolutionPair(grid=grid_soft.copy(), sign=sign_full, log_mag=lm_full,
                        deriv_ratio=np.full(n, np.nan), raw_f=raw_f, raw_fp=None,
                        kind="hard", params=params)


def bessel_tilde_truncated(phi_tilde_d: SolutionPair, phi_tilde_star: SolutionPair,
                           L: float) -> SolutionPair:
    """phi~_L = phi~_star - (phi~_star(L)/phi~_d(L)) phi~_d (value 1 at 0, 0 at L)."""
    return _truncate(phi_tilde_star, phi_tilde_d, L, "hard")


# ---------------------------------------------------------------------------
# Kernels and Hilbert-Schmidt quadrature
# ---------------------------------------------------------------------------


@dataclass
class TriangularKernel:
    """Rank-structured kernel K(x,y) = u_right(max) u_d(min) / p1(0) on a grid.

    Factors are stored as (sign, log); the assembled matrix exponentiates
    products, which are moderate whenever the kernel itself is.
    """

    grid: np.ndarray
    ud_sign: np.ndarray
    ud_log: np.ndarray
    ur_sign: np.ndarray
    ur_log: np.ndarray
    p1_at_0: float
    trunc: float | None = None
    params: dict = field(default_factory=dict)

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def matrix(self) -> np.ndarray:
        idx = np.arange(self.grid.shape[0])
        lo = np.minimum.outer(idx, idx)
        hi = np.maximum.outer(idx, idx)
        with np.errstate(over="ignore"):
            out = (self.ud_sign[lo] * self.ur_sign[hi]).astype(float)
            out *= np.exp(self.ud_log[lo] + self.ur_log[hi] - math.log(self.p1_at_0))
        return out

    def diagonal(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return (self.ud_sign * self.ur_sign) * np.exp(
                self.ud_log + self.ur_log - math.log(self.p1_at_0))


def assemble_kernel(u_d: SolutionPair, u_right: SolutionPair, p1_at_0: float,
                    trunc: float | None = None, stride: int = 1) -> TriangularKernel:
    """Assemble the triangular kernel from its two solution factors.

    Both factors must live on the same grid; ``stride`` subsamples the grid
    for quadrature/eigen work (the SDE grid is much finer than the kernel
    needs).  With ``trunc=L`` the kernel is restricted to [0, L]^2 (zero
    outside).
    """
    if p1_at_0 <= 0:
        raise InvalidArgumentError("p1(0) must be positive")
    if trunc is not None:
        i_d = u_d.index_of(trunc)
        i_r = u_right.index_of(trunc)
    else:
        i_d = u_d.grid.shape[0] - 1
        i_r = u_right.grid.shape[0] - 1
    if i_d != i_r or np.max(np.abs(u_d.grid[:i_d + 1] - u_right.grid[:i_r + 1])) > 1e-8:
        raise InvalidArgumentError("kernel factors must share a grid")
    sl = slice(0, i_d + 1, max(1, int(stride)))
    return TriangularKernel(
        grid=u_d.grid[sl].copy(),
        ud_sign=u_d.sign[sl].astype(np.int8), ud_log=u_d.log_mag[sl].copy(),
        ur_sign=u_right.sign[sl].astype(np.int8), ur_log=u_right.log_mag[sl].copy(),
        p1_at_0=float(p1_at_0), trunc=trunc,
        params={k: v for k, v in u_d.params.items() if k in ("beta", "a", "lam")})


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    h = grid[1] - grid[0]
    w = np.full(grid.shape[0], h)
    w[0] = w[-1] = 0.5 * h
    return w


def _hs_sq(M: np.ndarray, w: np.ndarray) -> float:
    # symmetric quadrature: 2 x lower triangle minus the double-counted diagonal
    wm = (M * M) * w[:, None] * w[None, :]
    lower = np.tril(wm)
    return float(2.0 * lower.sum() - np.trace(wm))


def hs_norm(K: TriangularKernel) -> float:
    """Hilbert-Schmidt norm: sqrt of the trapezoid quadrature of K^2."""
    return math.sqrt(max(_hs_sq(K.matrix(), _trapezoid_weights(K.grid)), 0.0))


def hs_distance(K1: TriangularKernel, K2: TriangularKernel) -> float:
    """Hilbert-Schmidt distance of two kernels on a common grid."""
    if K1.grid.shape != K2.grid.shape or np.max(np.abs(K1.grid - K2.grid)) > 1e-8:
        raise InvalidArgumentError("hs_distance needs a common grid")
    D = K1.matrix() - K2.matrix()
    return math.sqrt(max(_hs_sq(D, _trapezoid_weights(K1.grid)), 0.0))


def wronskian(f1: SolutionPair, f2: SolutionPair, p1_at_0: float) -> np.ndarray:
    """p1 * (f1 f2' - f1' f2) on the shared grid.

    Constant along exact solutions of the same equation.  Meaningful in
    floating point only where the products f*f' are representable and not
    astronomically larger than the Wronskian itself (pair one growing with
    one decaying solution on long windows).
    """
    if f1.grid.shape != f2.grid.shape or np.max(np.abs(f1.grid - f2.grid)) > 1e-9:
        raise InvalidArgumentError("wronskian needs a common grid")
    v1, d1 = f1.raw_f, f1.raw_fp
    v2, d2 = f2.raw_f, f2.raw_fp
    if v1 is None or v2 is None or d1 is None or d2 is None:
        raise InvalidArgumentError("wronskian needs raw-representable pairs")
    return p1_at_0 * (v1 * d2 - d1 * v2)


def kernel_to_csv(K: TriangularKernel, filename) -> None:
    """Grid dump (x, y, K) for plotting."""
    M = K.matrix()
    with open(filename, "w", newline="\n") as fh:
        fh.write("x,y,K\n")
        for i, x in enumerate(K.grid):
            for j, y in enumerate(K.grid):
                fh.write(f"{x!r},{y!r},{M[i, j]!r}\n")


def kernel_summary(K: TriangularKernel) -> dict:
    """JSON-ready summary {hs_norm, trunc, params}."""
    return dict(hs_norm=hs_norm(K), trunc=K.trunc, params=dict(K.params))
