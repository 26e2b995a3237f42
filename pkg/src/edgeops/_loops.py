"""Compiled inner loops for the SDE integrators.

All kernels take plain float64 scalars/arrays so they compile once and get
cached.  Zero-noise mode is signalled by an empty increment array together
with ``sig = 0``; in that mode every stochastic term (including Ito
corrections) vanishes and the loops integrate the underlying ODEs.

Scheme notes, kept here because they are load-bearing:

* The second-order pairs use a symplectic-ordered update (derivative first,
  then value with the *new* derivative).  For the soft-edge pair the
  one-step map has determinant exactly 1, and for the hard-edge pair the
  linear-noise factor is applied as ``exp(sig*dB + 2a*h)`` so the
  determinant telescopes to the exact weight ``s_2a``.  Both choices make
  the discrete Wronskian identities hold to rounding instead of drifting
  at O(sqrt(h)) like a plain Euler-Maruyama pair would.
* The Riccati loops switch to the inverse variable Y = 1/X whenever
  |X| > m_switch.  Y has bounded coefficients through blow-ups, which gives
  sub-grid explosion times and an exact entry of the p(0) = +inf initial
  condition as Y = 0.
* Riccati drifts are Heun-averaged with left-point noise: strong order is
  unchanged, but the deterministic bias drops to O(h^2), which the
  zero-noise spectral targets need.
"""

import numpy as np
from numba import njit

RICCATI_SOFT = 0
RICCATI_HARD = 1


@njit(cache=True)
def pair_scaled(u0, v0, h, n, dB, sig, itob, eps):
    """Integrate the scaled pair (u, u') in soft coordinates.

    eps = a**(-1/3); eps == 0.0 is exactly the Airy pair.  Returns value,
    derivative and accumulated log-renormalization arrays.
    """
    u_arr = np.empty(n + 1)
    v_arr = np.empty(n + 1)
    off_arr = np.zeros(n + 1)
    u = u0
    v = v0
    off = 0.0
    u_arr[0] = u
    v_arr[0] = v
    has_noise = dB.shape[0] > 0
    eps2 = eps * eps
    for i in range(n):
        x = i * h
        db = dB[i] if has_noise else 0.0
        if eps == 0.0:
            w = x
            geom = 1.0
        else:
            w = -np.expm1(-eps2 * x) / eps2
            geom = np.exp(sig * eps * db)
        kap = sig * db + (w + itob * eps) * h
        v = v * geom + u * kap
        u = u + h * v
        au = abs(u)
        av = abs(v)
        m = au if au > av else av
        if m > 1e250:
            u /= m
            v /= m
            off += np.log(m)
        u_arr[i + 1] = u
        v_arr[i + 1] = v
        off_arr[i + 1] = off
    return u_arr, v_arr, off_arr


@njit(cache=True)
def pair_hard(u0, v0, h, n, dB2a, sig, two_a, lam):
    """Integrate the hard-edge pair (phi, phi') in hard coordinates."""
    u_arr = np.empty(n + 1)
    v_arr = np.empty(n + 1)
    off_arr = np.zeros(n + 1)
    u = u0
    v = v0
    off = 0.0
    u_arr[0] = u
    v_arr[0] = v
    has_noise = dB2a.shape[0] > 0
    for i in range(n):
        x = i * h
        db = dB2a[i] if has_noise else 0.0
        geom = np.exp(sig * db + two_a * h)
        v = v * geom - lam * np.exp(-x) * u * h
        u = u + h * v
        au = abs(u)
        av = abs(v)
        m = au if au > av else av
        if m > 1e150:
            u /= m
            v /= m
            off += np.log(m)
        u_arr[i + 1] = u
        v_arr[i + 1] = v
        off_arr[i + 1] = off
    return u_arr, v_arr, off_arr


@njit(cache=True)
def pair_scaled_backward(u_end, v_end, i_end, h, dB, sig):
    """Exact inverse of the eps=0 forward map, run from node i_end down to 0.

    Used to extend the decaying soft-edge solution below the last zero of
    the Dirichlet solution; backward integration is stable for it.
    """
    u_arr = np.empty(i_end + 1)
    v_arr = np.empty(i_end + 1)
    u = u_end
    v = v_end
    u_arr[i_end] = u
    v_arr[i_end] = v
    has_noise = dB.shape[0] > 0
    for i in range(i_end - 1, -1, -1):
        x = i * h
        db = dB[i] if has_noise else 0.0
        kap = sig * db + x * h
        u = u - h * v
        v = v - u * kap
        u_arr[i] = u
        v_arr[i] = v
    return u_arr, v_arr


@njit(cache=True)
def pair_hard_backward(u_end, v_end, i_end, h, dB2a, sig, two_a, lam):
    """Backward integration of the hard-edge pair, node i_end down to 0.

    Inverts, per step, a noise factor exp(sig*dB) on the derivative followed
    by the exact propagator of the frozen-coefficient system
    (u, v)' = [[0, 1], [-lam e^{-x}, 2a]] (u, v).  The step determinant is
    exactly exp(-(sig dB + 2a h)), so the Wronskian identity
    W = -s_2a telescopes without drift, and the frozen propagator carries
    none of the O((a h)^2) mode-slope bias a kick-drift step would leave on
    the backward-propagated decaying solution.
    """
    u_arr = np.empty(i_end + 1)
    v_arr = np.empty(i_end + 1)
    u = u_end
    v = v_end
    u_arr[i_end] = u
    v_arr[i_end] = v
    has_noise = dB2a.shape[0] > 0
    a = 0.5 * two_a
    for i in range(i_end - 1, -1, -1):
        x = (i + 0.5) * h
        db = dB2a[i] if has_noise else 0.0
        q = lam * np.exp(-x)
        s2 = a * a - q
        if s2 >= 0.0:
            s = np.sqrt(s2)
            sh = s * h
            if sh < 1e-5:
                c = 1.0 + 0.5 * sh * sh
                sn = h * (1.0 + sh * sh / 6.0)
            else:
                c = np.cosh(sh)
                sn = np.sinh(sh) / s
        else:
            s = np.sqrt(-s2)
            sh = s * h
            c = np.cos(sh)
            sn = (np.sin(sh) / s) if sh >= 1e-5 else h * (1.0 - sh * sh / 6.0)
        ea = np.exp(-a * h)
        # inverse propagator, scaled by e^{-a h}
        p11 = ea * (c + a * sn)
        p12 = ea * (-sn)
        p21 = ea * (q * sn)
        p22 = ea * (c - a * sn)
        u_new = p11 * u + p12 * v
        v_new = p21 * u + p22 * v
        u = u_new
        v = v_new * np.exp(-sig * db)
        u_arr[i] = u
        v_arr[i] = v
    return u_arr, v_arr


@njit(inline="always")
def _drift(kind, t, x, two_a, lam, sig2):
    if kind == RICCATI_SOFT:
        return (t - lam) - x * x
    return (two_a + 0.5 * sig2) * x - x * x - lam * np.exp(-t)


@njit(inline="always")
def _drift_inv(kind, t, y, two_a, lam, sig2):
    if kind == RICCATI_SOFT:
        return 1.0 - (t - lam) * y * y + sig2 * y * y * y
    return 1.0 - (two_a - 0.5 * sig2) * y + lam * np.exp(-t) * y * y


@njit(cache=True)
def riccati(kind, dB, h, n, t0, lam, sig, two_a, x_init, init_inverse,
            m_switch, m_cap, stride, dirichlet, band_dwell, max_expl):
    """Riccati diffusion with inverse-variable explosion handling.

    kind: RICCATI_SOFT (additive noise, drift (t - lam) - X^2, the shift
    lam acting as a time offset in the drift) or RICCATI_HARD (linear
    noise, drift (2a + sig^2/2) p - p^2 - lam e^{-t}).

    Alongside the trajectory, accumulates ln|f| of the underlying linear
    solution (relative to the reference node: node 1 for Dirichlet starts,
    node 0 otherwise) and its sign, so the solution can be reconstructed in
    log space through explosions.

    band_dwell > 0 enables early stop for the soft-edge kind once the path
    has stayed inside the tracking band |X - sqrt(t - lam)| <=
    (t-lam)**(-1/4) * ln(t-lam) for that long (with t - lam >= 10).

    Returns (p_store, cum_store, sgn_store, expl_times, n_expl, n_done,
    final_p, settled, overflowed).
    """
    n_store = n // stride + 1
    p_store = np.empty(n_store)
    cum_store = np.empty(n_store)
    sgn_store = np.empty(n_store, dtype=np.int8)
    expl_times = np.empty(max_expl)
    sig2 = sig * sig
    has_noise = dB.shape[0] > 0
    inv_switch = 1.0 / m_switch

    inverse = init_inverse != 0
    if inverse:
        y = 0.0 if x_init == np.inf else 1.0 / x_init
        x = 0.0
    else:
        y = 0.0
        x = x_init
    cum = 0.0
    sgn = np.int8(1)
    n_expl = 0
    streak = 0.0
    settled = 0
    overflowed = 0

    p_store[0] = 1.0 / y if inverse and y != 0.0 else (m_cap if inverse else x)
    cum_store[0] = cum
    sgn_store[0] = sgn
    n_done = n

    for i in range(n):
        t = t0 + i * h
        db = dB[i] if has_noise else 0.0
        if inverse:
            g0 = _drift_inv(kind, t, y, two_a, lam, sig2)
            if kind == RICCATI_SOFT:
                noise_term = -sig * y * y * db
            else:
                noise_term = -sig * y * db
            y_pred = y + h * g0 + noise_term
            g1 = _drift_inv(kind, t + h, y_pred, two_a, lam, sig2)
            y_new = y + 0.5 * h * (g0 + g1) + noise_term
            # log|f| bookkeeping: d ln|f| = d ln|Y| + d ln|f'|
            if kind == RICCATI_SOFT:
                dlogfp = y * (t - lam) * h + sig * y * db - 0.5 * sig2 * y * y * h
            else:
                dlogfp = sig * db + (two_a - lam * np.exp(-t) * y) * h
            if i == 0 and dirichlet:
                cum = 0.0  # reference is node 1; f(0) = 0 has no log
            else:
                y_old_abs = abs(y) if y != 0.0 else 1e-300
                y_new_abs = abs(y_new) if y_new != 0.0 else 1e-300
                cum += np.log(y_new_abs / y_old_abs) + dlogfp
            if y < 0.0 and y_new >= 0.0:
                # f crossed zero: explosion to -inf, instant restart at +inf
                if n_expl >= max_expl:
                    overflowed = 1
                    n_done = i
                    break
                frac = -y / (y_new - y) if y_new > y else 0.5
                expl_times[n_expl] = t + frac * h
                n_expl += 1
                sgn = -sgn
            y = y_new
            if abs(y) > inv_switch:
                x = 1.0 / y
                inverse = False
        else:
            f0 = _drift(kind, t, x, two_a, lam, sig2)
            if kind == RICCATI_SOFT:
                noise_term = sig * db
            else:
                noise_term = sig * x * db
            x_pred = x + h * f0 + noise_term
            f1 = _drift(kind, t + h, x_pred, two_a, lam, sig2)
            x_new = x + 0.5 * h * (f0 + f1) + noise_term
            cum += 0.5 * (x + x_new) * h
            x = x_new
            if abs(x) > m_switch:
                y = 1.0 / x
                inverse = True

        if (i + 1) % stride == 0:
            k = (i + 1) // stride
            if inverse:
                p_store[k] = 1.0 / y if y != 0.0 else (m_cap if y >= 0 else -m_cap)
            else:
                p_store[k] = x
            cum_store[k] = cum
            sgn_store[k] = sgn

        if band_dwell > 0.0 and kind == RICCATI_SOFT and not inverse:
            tau = t + h - lam
            if tau >= 10.0 and abs(x - np.sqrt(tau)) <= tau ** -0.25 * np.log(tau):
                streak += h
                if streak >= band_dwell:
                    settled = 1
                    n_done = i + 1
                    break
            else:
                streak = 0.0

    final_p = (1.0 / y if y != 0.0 else m_cap) if inverse else x
    return (p_store, cum_store, sgn_store, expl_times, n_expl, n_done,
            final_p, settled, overflowed)
