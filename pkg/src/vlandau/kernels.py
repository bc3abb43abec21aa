"""Hot numerical kernels, each in a compiled and a pure-numpy variant.

Every kernel exists twice with identical semantics: a numba ``@njit``
version (parallel over independent outputs, deterministic accumulation
order within each output) and a vectorized numpy version.  The compiled
variants are used when numba imports successfully and the environment
variable ``VLANDAU_NUMBA`` is not set to ``0``; ``USING_NUMBA`` records
the active backend and ``use_numba()`` can switch it at runtime (the
benchmark harness does).

Numerical conventions shared by several kernels:

* Mode rows follow the real-FFT layout scaled by 1/nx: a row ``c`` of
  length nx//2 + 1 represents
  ``F(theta) = c[0] + sum_{0<k<nx/2} 2 (Re c[k] cos k theta - Im c[k] sin k theta)
  + Re c[nx/2] cos((nx/2) theta)``.
* Phase factors ``e^{-i k theta}`` are built by rotation recurrences, and
  the small factor ``e^{-i k d} - 1`` by the product recurrence
  ``r_{k+1} = r_k + r_k r_1 + r_1`` with ``r_1`` evaluated as
  ``(-2 sin^2(d/2), -sin d)``.  This keeps the error of the small factor
  proportional to its size, which matters because downstream norms weight
  late times by ``e^{a t}``.
* Suffix integrals over [t_n, t_end] use composite-trapezoid recurrences
  that only ever add same-sign increments:
  ``A_n = A_{n+1} + dt (g_n + g_{n+1}) / 2`` and, for the first moment
  ``I_n = int (s - t_n) g ds``, ``I_n = I_{n+1} + dt A_{n+1} + dt^2 g_{n+1} / 2``
  (an exact identity for the composite rule, not an extra approximation).
* ``suffix_weighted`` generalizes the plain suffix rule to arbitrary
  two-point cell weights ``A_n = A_{n+1} + alpha g_n + beta g_{n+1}``.
  With ``alpha = (a dt - 1 + e^{-a dt})/(a^2 dt)`` and
  ``beta = (e^{a dt} - 1 - a dt)/(a^2 dt)`` the rule integrates
  ``e^{-a s} x (piecewise linear)`` exactly, which removes the convex
  quadrature overshoot of the trapezoid on exponentially decaying
  integrands (the trapezoid overestimates those by ``(a dt)^2/12``
  relative, far above the tolerance of the trajectory bound checks).
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
    from numba import njit, prange
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        return deco

    prange = range

USING_NUMBA = _HAVE_NUMBA and os.environ.get("VLANDAU_NUMBA", "1") != "0"


def use_numba(enabled: bool) -> bool:
    """Select the backend at runtime; returns the backend actually active."""
    global USING_NUMBA
    USING_NUMBA = bool(enabled) and _HAVE_NUMBA
    return USING_NUMBA


def set_num_threads(n: int) -> None:
    """Limit compiled-kernel parallelism; no effect on the numpy backend."""
    if _HAVE_NUMBA and n >= 1:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# mode-row evaluation along trajectories
# ---------------------------------------------------------------------------

def _eval_rows_np(cre, cim, x, v, times, dx_dev, out):
    nt, nk = cre.shape
    half = nk - 1
    for n in range(nt):
        theta = x + v * times[n] + dx_dev[n]
        ure = np.cos(theta)
        uim = np.sin(theta)
        acc = np.full(theta.shape, cre[n, 0])
        pre, pim = ure.copy(), uim.copy()
        for k in range(1, half):
            acc += 2.0 * (cre[n, k] * pre - cim[n, k] * pim)
            pre, pim = pre * ure - pim * uim, pre * uim + pim * ure
        acc += cre[n, half] * pre
        out[n] = acc
    return out


@njit(cache=True, parallel=True)
def _eval_rows_nb(cre, cim, x, v, times, dx_dev, out):  # pragma: no cover
    nt, nk = cre.shape
    half = nk - 1
    npart = x.shape[0]
    for n in prange(nt):
        t = times[n]
        for p in range(npart):
            theta = x[p] + v[p] * t + dx_dev[n, p]
            ure = math.cos(theta)
            uim = math.sin(theta)
            acc = cre[n, 0]
            pre = ure
            pim = uim
            for k in range(1, half):
                acc += 2.0 * (cre[n, k] * pre - cim[n, k] * pim)
                pre, pim = pre * ure - pim * uim, pre * uim + pim * ure
            acc += cre[n, half] * pre
            out[n, p] = acc
    return out


def eval_rows(cre, cim, x, v, times, dx_dev):
    """Evaluate per-time mode rows at particle angles x + v t + dx_dev.

    cre/cim: (nt, nk) mode rows (see module docstring for the layout);
    x, v: flat particle labels (P,); dx_dev: (nt, P) position deviations.
    Returns (nt, P).
    """
    out = np.empty(dx_dev.shape)
    fn = _eval_rows_nb if USING_NUMBA else _eval_rows_np
    return fn(np.ascontiguousarray(cre), np.ascontiguousarray(cim),
              x, v, times, dx_dev, out)


# ---------------------------------------------------------------------------
# suffix trapezoid integrals
# ---------------------------------------------------------------------------

def _suffix_trapz_np(g, dt):
    nt = g.shape[0]
    acc = np.zeros_like(g)
    for n in range(nt - 2, -1, -1):
        acc[n] = acc[n + 1] + (0.5 * dt) * (g[n] + g[n + 1])
    return acc


@njit(cache=True, parallel=True)
def _suffix_trapz_nb(g, dt):  # pragma: no cover
    nt, npart = g.shape
    acc = np.zeros((nt, npart))
    for p in prange(npart):
        run = 0.0
        for n in range(nt - 2, -1, -1):
            run += (0.5 * dt) * (g[n, p] + g[n + 1, p])
            acc[n, p] = run
    return acc


def suffix_trapz(g, dt):
    """A[n] = trapezoid of g over [t_n, t_end]; g is (nt, P)."""
    fn = _suffix_trapz_nb if USING_NUMBA else _suffix_trapz_np
    return fn(np.ascontiguousarray(g), float(dt))


def _suffix_trapz_moment_np(g, dt):
    nt = g.shape[0]
    acc = np.zeros_like(g)
    mom = np.zeros_like(g)
    for n in range(nt - 2, -1, -1):
        mom[n] = mom[n + 1] + dt * acc[n + 1] + (0.5 * dt * dt) * g[n + 1]
        acc[n] = acc[n + 1] + (0.5 * dt) * (g[n] + g[n + 1])
    return acc, mom


@njit(cache=True, parallel=True)
def _suffix_trapz_moment_nb(g, dt):  # pragma: no cover
    nt, npart = g.shape
    acc = np.zeros((nt, npart))
    mom = np.zeros((nt, npart))
    for p in prange(npart):
        run = 0.0
        runm = 0.0
        for n in range(nt - 2, -1, -1):
            runm += dt * run + (0.5 * dt * dt) * g[n + 1, p]
            run += (0.5 * dt) * (g[n, p] + g[n + 1, p])
            acc[n, p] = run
            mom[n, p] = runm
    return acc, mom


def suffix_trapz_moment(g, dt):
    """(A, I) with A as in suffix_trapz and I[n] = int (s - t_n) g(s) ds.

    I is the exact first moment of the same composite-trapezoid rule, so
    A and I stay consistent to rounding.
    """
    fn = _suffix_trapz_moment_nb if USING_NUMBA else _suffix_trapz_moment_np
    return fn(np.ascontiguousarray(g), float(dt))


def _suffix_weighted_np(g, alpha, beta):
    nt = g.shape[0]
    acc = np.zeros_like(g)
    for n in range(nt - 2, -1, -1):
        acc[n] = acc[n + 1] + alpha * g[n] + beta * g[n + 1]
    return acc


@njit(cache=True, parallel=True)
def _suffix_weighted_nb(g, alpha, beta):  # pragma: no cover
    nt, npart = g.shape
    acc = np.zeros((nt, npart))
    for p in prange(npart):
        run = 0.0
        for n in range(nt - 2, -1, -1):
            run += alpha * g[n, p] + beta * g[n + 1, p]
            acc[n, p] = run
    return acc


def exp_cell_weights(a: float, dt: float) -> tuple[float, float]:
    """Two-point cell weights that integrate e^{-a s} (c0 + c1 s) exactly.

    Writing the integrand as e^{-a s} h(s) and interpolating h linearly
    between nodes gives, per cell [s, s + dt],
    int = alpha g(s) + beta g(s + dt) with constant alpha, beta on a
    uniform grid.  a = 0 degenerates to the trapezoid weights dt/2.
    """
    if a < 0 or dt <= 0:
        raise ValueError("need a >= 0 and dt > 0")
    x = a * dt
    # the closed forms are ratios of O(x^2) differences; expm1 keeps them
    # accurate down to the series switch, below which the expansion takes
    # over (relative error <= x^4/720 at the switch)
    if x < 1e-3:
        alpha = dt * (0.5 - x / 6.0 + x * x / 24.0 - x ** 3 / 120.0)
        beta = dt * (0.5 + x / 6.0 + x * x / 24.0 + x ** 3 / 120.0)
    else:
        alpha = (x + math.expm1(-x)) / (a * a * dt)
        beta = (math.expm1(x) - x) / (a * a * dt)
    return alpha, beta


def suffix_weighted(g, alpha, beta):
    """A[n] = sum over cells of alpha g_left + beta g_right on [t_n, t_end]."""
    fn = _suffix_weighted_nb if USING_NUMBA else _suffix_weighted_np
    return fn(np.ascontiguousarray(g), float(alpha), float(beta))


# ---------------------------------------------------------------------------
# spectral density corrections
# ---------------------------------------------------------------------------

def _corr_fourier_np(wf, x, v, times, dx_dev, nk):
    nt = times.shape[0]
    out_re = np.zeros((nt, nk))
    out_im = np.zeros((nt, nk))
    inv2pi = 1.0 / (2.0 * math.pi)
    wflat = wf
    for n in range(nt):
        psi = x + v * times[n]
        ure, uim = np.cos(psi), np.sin(psi)
        d = dx_dev[n]
        halfs = np.sin(0.5 * d)
        r1re = -2.0 * halfs * halfs
        r1im = -np.sin(d)
        pre = ure.copy()
        pim = -uim.copy()                     # e^{-i psi}
        rre = r1re.copy()
        rim = r1im.copy()                     # e^{-i d} - 1
        for k in range(1, nk):
            # (e^{-i k psi}) (e^{-i k d} - 1), accumulated against weights
            fre = pre * rre - pim * rim
            fim = pre * rim + pim * rre
            out_re[n, k] = inv2pi * float(np.dot(wflat, fre))
            out_im[n, k] = inv2pi * float(np.dot(wflat, fim))
            if k + 1 < nk:
                pre, pim = (pre * ure + pim * uim,
                            -pre * uim + pim * ure)
                rre, rim = (rre + rre * r1re - rim * r1im + r1re,
                            rim + rre * r1im + rim * r1re + r1im)
    return out_re, out_im


@njit(cache=True, parallel=True)
def _corr_fourier_nb(wf, x, v, times, dx_dev, nk):  # pragma: no cover
    nt = times.shape[0]
    npart = x.shape[0]
    out_re = np.zeros((nt, nk))
    out_im = np.zeros((nt, nk))
    inv2pi = 1.0 / (2.0 * math.pi)
    for n in prange(nt):
        t = times[n]
        acc_re = np.zeros(nk)
        acc_im = np.zeros(nk)
        for p in range(npart):
            w = wf[p]
            if w == 0.0:
                continue
            psi = x[p] + v[p] * t
            ure = math.cos(psi)
            uim = math.sin(psi)
            d = dx_dev[n, p]
            halfs = math.sin(0.5 * d)
            r1re = -2.0 * halfs * halfs
            r1im = -math.sin(d)
            pre = ure
            pim = -uim
            rre = r1re
            rim = r1im
            for k in range(1, nk):
                acc_re[k] += w * (pre * rre - pim * rim)
                acc_im[k] += w * (pre * rim + pim * rre)
                if k + 1 < nk:
                    pre, pim = pre * ure + pim * uim, -pre * uim + pim * ure
                    rre, rim = (rre + rre * r1re - rim * r1im + r1re,
                                rim + rre * r1im + rim * r1re + r1im)
        for k in range(nk):
            out_re[n, k] = inv2pi * acc_re[k]
            out_im[n, k] = inv2pi * acc_im[k]
    return out_re, out_im


def corr_fourier(wf, x, v, times, dx_dev, nk):
    """Density-correction modes against the free flow.

    Returns (re, im), each (nt, nk), holding

        (1/2pi) sum_p wf_p e^{-i k (x_p + v_p t_n)} (e^{-i k dX_p(t_n)} - 1)

    i.e. the transported-density Fourier modes minus their free-streaming
    part, with the cancellation done analytically per particle.
    """
    if USING_NUMBA:
        return _corr_fourier_nb(wf, x, v, times, dx_dev, int(nk))
    return _corr_fourier_np(wf, x, v, times, dx_dev, int(nk))


# ---------------------------------------------------------------------------
# direct kernel summation and charge deposition
# ---------------------------------------------------------------------------

def _direct_bmap_np(wf, pos, xs):
    nt = pos.shape[0]
    out = np.empty((nt, xs.shape[0]))
    two_pi = 2.0 * math.pi
    for n in range(nt):
        diff = xs[:, None] - pos[n][None, :]
        bvals = 0.5 - np.mod(diff, two_pi) / two_pi
        out[n] = bvals @ wf
    return out


@njit(cache=True, parallel=True)
def _direct_bmap_nb(wf, pos, xs):  # pragma: no cover
    nt = pos.shape[0]
    nx = xs.shape[0]
    npart = wf.shape[0]
    out = np.empty((nt, nx))
    two_pi = 2.0 * math.pi
    for n in prange(nt):
        for i in range(nx):
            acc = 0.0
            xi = xs[i]
            for p in range(npart):
                frac = (xi - pos[n, p]) / two_pi
                frac = frac - math.floor(frac)
                acc += wf[p] * (0.5 - frac)
            out[n, i] = acc
    return out


def direct_bmap(wf, pos, xs):
    """Field by direct kernel summation: E(x_i,t_n) = sum_p wf_p B(x_i - X_p).

    pos is (nt, P) absolute particle positions; xs the evaluation grid.
    """
    fn = _direct_bmap_nb if USING_NUMBA else _direct_bmap_np
    return fn(wf, np.ascontiguousarray(pos), xs)


def _cic_density_np(wf, pos, nx, dx):
    nt = pos.shape[0]
    out = np.zeros((nt, nx))
    for n in range(nt):
        s = pos[n] / dx
        j = np.floor(s).astype(np.int64)
        frac = s - j
        j0 = np.mod(j, nx)
        j1 = np.mod(j + 1, nx)
        np.add.at(out[n], j0, wf * (1.0 - frac) / dx)
        np.add.at(out[n], j1, wf * frac / dx)
    return out


@njit(cache=True, parallel=True)
def _cic_density_nb(wf, pos, nx, dx):  # pragma: no cover
    nt, npart = pos.shape
    out = np.zeros((nt, nx))
    for n in prange(nt):
        for p in range(npart):
            s = pos[n, p] / dx
            j = int(math.floor(s))
            frac = s - j
            j0 = j % nx
            j1 = (j + 1) % nx
            out[n, j0] += wf[p] * (1.0 - frac) / dx
            out[n, j1] += wf[p] * frac / dx
    return out


def cic_density(wf, pos, nx, dx):
    """Cloud-in-cell density on the x grid from weighted particles."""
    fn = _cic_density_nb if USING_NUMBA else _cic_density_np
    return fn(wf, np.ascontiguousarray(pos), int(nx), float(dx))


def _cic_pert_np(wf, x, v, times, dx_dev, nx, dx):
    nt = times.shape[0]
    out = np.zeros((nt, nx))
    for n in range(nt):
        base = x + v * times[n]
        s0 = base / dx
        j0 = np.floor(s0).astype(np.int64)
        f0 = s0 - j0
        d = dx_dev[n] / dx
        s1 = s0 + d
        j1 = np.floor(s1).astype(np.int64)
        f1 = s1 - j1
        shift = j1 - j0
        g = d - shift                    # f1 - f0 without cancellation
        row = out[n]
        same = shift == 0
        if same.any():
            w = wf[same] * g[same] / dx
            jj = j0[same]
            np.add.at(row, np.mod(jj, nx), -w)
            np.add.at(row, np.mod(jj + 1, nx), w)
        cross = ~same
        if cross.any():
            wcr = wf[cross] / dx
            np.add.at(row, np.mod(j0[cross], nx), -wcr * (1.0 - f0[cross]))
            np.add.at(row, np.mod(j0[cross] + 1, nx), -wcr * f0[cross])
            np.add.at(row, np.mod(j1[cross], nx), wcr * (1.0 - f1[cross]))
            np.add.at(row, np.mod(j1[cross] + 1, nx), wcr * f1[cross])
    return out


@njit(cache=True, parallel=True)
def _cic_pert_nb(wf, x, v, times, dx_dev, nx, dx):  # pragma: no cover
    nt = times.shape[0]
    npart = x.shape[0]
    out = np.zeros((nt, nx))
    for n in prange(nt):
        t = times[n]
        for p in range(npart):
            base = x[p] + v[p] * t
            s0 = base / dx
            j0 = int(math.floor(s0))
            f0 = s0 - j0
            d = dx_dev[n, p] / dx
            s1 = s0 + d
            j1 = int(math.floor(s1))
            f1 = s1 - j1
            w = wf[p] / dx
            if j1 == j0:
                g = w * d              # net transfer between the two cells
                out[n, j0 % nx] -= g
                out[n, (j0 + 1) % nx] += g
            else:
                out[n, j0 % nx] -= w * (1.0 - f0)
                out[n, (j0 + 1) % nx] -= w * f0
                out[n, j1 % nx] += w * (1.0 - f1)
                out[n, (j1 + 1) % nx] += w * f1
    return out


def cic_density_pert(wf, x, v, times, dx_dev, nx, dx):
    """CIC density of displaced particles minus CIC density of the free flow.

    Computed per particle as a net deposition difference so the result
    scales with the displacement instead of carrying the O(1) background;
    the no-crossing branch transfers exactly wf * dX/dx between the two
    touched cells.
    """
    fn = _cic_pert_nb if USING_NUMBA else _cic_pert_np
    return fn(wf, x, v, times, np.ascontiguousarray(dx_dev), int(nx), float(dx))
