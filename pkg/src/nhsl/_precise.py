"""Extended-precision helpers (mpmath) for exponentially narrow bands.

Flat-band widths fall below double-precision resolution quickly (a barrier
cell of 40 sites already has widths near 1e-19), so the exact band edges
and the loop radii are computed here with a working precision chosen from M.
"""

from __future__ import annotations

import mpmath as mp


def working_dps(M: int) -> int:
    """Decimal digits sufficient for band widths down to about exp(-1.5 M)."""
    return 30 + (2 * M) // 3


def symmetric_cell(values, J, corner):
    """Real symmetric cell matrix at h = 0; corner = +1 (k = 0), -1 (k = pi/M) or 0 (open cut)."""
    M = len(values)
    H = mp.matrix(M, M)
    for n in range(M):
        H[n, n] = mp.mpf(values[n])
    for n in range(M - 1):
        H[n, n + 1] = H[n + 1, n] = mp.mpf(J)
    if corner:
        H[0, M - 1] += corner * mp.mpf(J)
        H[M - 1, 0] += corner * mp.mpf(J)
    return H


def sorted_eigh(H, vectors=False):
    """Eigenvalues (ascending) and optionally the matching eigenvector columns as lists."""
    if not vectors:
        return sorted(mp.eigsy(H, eigvals_only=True)), None
    E, Q = mp.eigsy(H)
    order = sorted(range(len(E)), key=lambda i: E[i])
    n = H.rows
    return [E[i] for i in order], [[Q[r, i] for r in range(n)] for i in order]


def discriminant(E, values, J):
    """Trace of the one-cell transfer matrix and its derivative in E.

    The Bloch condition reads trace = 2 cos(qM) with q the (possibly
    complex) wave number; for the gauge field q = k - ih.
    """
    a, b, c, d = mp.mpf(1), mp.mpf(0), mp.mpf(0), mp.mpf(1)
    da = db = dc = dd = mp.mpf(0)
    for v in values:
        t = (E - v) / J
        # T = [[t, -1], [1, 0]], dT/dE = [[1/J, 0], [0, 0]]
        na, nb = t * a - c, t * b - d
        nda, ndb = t * da - dc + a / J, t * db - dd + b / J
        c, d, dc, dd = a, b, da, db
        a, b, da, db = na, nb, nda, ndb
    return a + d, da + dd


def refine_band_energy(E0, values, J, q, M, tol_digits=None, max_iter=60):
    """Newton-polish an approximate eigenvalue so that trace(E) = 2 cos(qM)."""
    target = 2 * mp.cos(q * M)
    E = mp.mpc(E0)
    eps = mp.mpf(10) ** (-(tol_digits or mp.mp.dps - 8))
    for _ in range(max_iter):
        f, df = discriminant(E, values, J)
        if df == 0:
            raise ArithmeticError("vanishing derivative while refining a band energy")
        step = (f - target) / df
        E -= step
        if abs(step) <= eps * max(1, abs(E)):
            return E
    raise ArithmeticError("band energy refinement did not converge")
