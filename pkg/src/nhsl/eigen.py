"""Dense complex eigensolver for non-Hermitian matrices.

Pipeline: diagonal balancing, Householder reduction to upper Hessenberg
form, single-shift implicit QR with Wilkinson shifts, then eigenvectors by
back-substitution on the triangular Schur factor.  The kernels are compiled
with numba; the public functions are thin wrappers that validate input,
sort the output and turn kernel status codes into exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

EPS = 2.0**-52
DEFLATION_TOL = 4.0 * EPS
ITERATIONS_PER_DIM = 40
EXCEPTIONAL_EVERY = 10
RESIDUAL_TOL = 1e-10

_TINY = np.finfo(float).tiny / EPS
_BIG = 1e150


class ConvergenceError(ArithmeticError):
    """QR iteration ran out of its iteration budget.

    ``matrix`` holds the partially reduced Hessenberg matrix and
    ``unconverged`` the number of eigenvalues still missing.
    """

    def __init__(self, message, matrix=None, unconverged=0):
        super().__init__(message)
        self.matrix = matrix
        self.unconverged = unconverged


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None  # columns, unit 2-norm
    residuals: np.ndarray  # ||A v - lambda v|| per pair

    def flagged(self, tol=RESIDUAL_TOL, norm=None):
        """Indices of pairs whose residual exceeds ``tol * norm``."""
        if norm is None:
            norm = 1.0
        return np.flatnonzero(self.residuals > tol * norm)


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _balance(a):
    """Scale rows/columns by powers of two until their norms are comparable.

    Overwrites ``a`` with D^-1 A D and returns the diagonal of D.
    """
    n = a.shape[0]
    d = np.ones(n)
    radix = 2.0
    radix2 = radix * radix
    noconv = True
    while noconv:
        noconv = False
        for i in range(n):
            c = 0.0
            r = 0.0
            for j in range(n):
                if j != i:
                    c += abs(a[j, i])
                    r += abs(a[i, j])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= radix2
            g = r * radix
            while c >= g:
                f /= radix
                c /= radix2
            if (c + r) / f < 0.95 * s:
                d[i] *= f
                noconv = True
                for j in range(n):
                    a[i, j] /= f
                    a[j, i] *= f
    return d


@njit(cache=True, nogil=True)
def _hessenberg(a, q, want_q):
    """Householder reduction in place: A = Q H Q^H."""
    n = a.shape[0]
    for k in range(n - 2):
        alpha = 0.0
        for i in range(k + 1, n):
            alpha += a[i, k].real ** 2 + a[i, k].imag ** 2
        tail = alpha - (a[k + 1, k].real ** 2 + a[k + 1, k].imag ** 2)
        if tail == 0.0:
            continue
        alpha = np.sqrt(alpha)
        x0 = a[k + 1, k]
        ax0 = abs(x0)
        if ax0 == 0.0:
            beta = -alpha + 0j
        else:
            beta = -(x0 / ax0) * alpha
        m = n - k - 1
        v = np.empty(m, dtype=np.complex128)
        for i in range(m):
            v[i] = a[k + 1 + i, k]
        v[0] -= beta
        vv = 0.0
        for i in range(m):
            vv += v[i].real ** 2 + v[i].imag ** 2
        tau = 2.0 / vv
        # left: rows k+1.., columns k..
        for j in range(k, n):
            s = 0j
            for i in range(m):
                s += v[i].conjugate() * a[k + 1 + i, j]
            s *= tau
            for i in range(m):
                a[k + 1 + i, j] -= v[i] * s
        # right: all rows, columns k+1..
        for i in range(n):
            s = 0j
            for j in range(m):
                s += a[i, k + 1 + j] * v[j]
            s *= tau
            for j in range(m):
                a[i, k + 1 + j] -= s * v[j].conjugate()
        if want_q:
            for i in range(n):
                s = 0j
                for j in range(m):
                    s += q[i, k + 1 + j] * v[j]
                s *= tau
                for j in range(m):
                    q[i, k + 1 + j] -= s * v[j].conjugate()
        a[k + 1, k] = beta
        for i in range(k + 2, n):
            a[i, k] = 0j


@njit(cache=True, nogil=True)
def _givens(x, y):
    """Return (c, s, r) with c real and [[c, s], [-conj(s), c]] @ [x, y] = [r, 0]."""
    ay = abs(y)
    if ay == 0.0:
        return 1.0, 0j, x
    ax = abs(x)
    if ax == 0.0:
        return 0.0, 1.0 + 0j, y
    norm = np.hypot(ax, ay)
    phase = x / ax
    c = ax / norm
    s = phase * y.conjugate() / norm
    return c, s, phase * norm


@njit(cache=True, nogil=True)
def _wilkinson(a, b, c, d):
    """Eigenvalue of [[a, b], [c, d]] closest to d."""
    p = 0.5 * (a - d)
    bc = b * c
    disc = np.sqrt(p * p + bc)
    if (p.conjugate() * disc).real < 0.0:
        disc = -disc
    den = p + disc
    if den == 0:
        return d
    return d - bc / den


@njit(cache=True, nogil=True)
def _qr_iterate(h, z, want_t, want_z):
    """Shifted QR on an upper Hessenberg matrix.

    Returns (eigenvalues, status); status is 0 on success, otherwise the
    number of eigenvalues that did not converge.  With ``want_t`` the matrix
    is driven to full upper-triangular Schur form; with ``want_z`` the
    rotations are accumulated into ``z``.
    """
    n = h.shape[0]
    w = np.zeros(n, dtype=np.complex128)
    budget = ITERATIONS_PER_DIM * max(n, 1)
    total = 0
    stalled = 0
    ihi = n - 1
    while ihi >= 0:
        # look for a negligible subdiagonal entry
        l = ihi
        while l > 0:
            sub = abs(h[l, l - 1])
            tst = abs(h[l - 1, l - 1]) + abs(h[l, l])
            if tst == 0.0:
                if l - 2 >= 0:
                    tst += abs(h[l - 1, l - 2])
                if l + 1 <= ihi:
                    tst += abs(h[l + 1, l])
            if sub <= DEFLATION_TOL * tst or sub <= _TINY:
                h[l, l - 1] = 0j
                break
            l -= 1
        if l == ihi:
            w[ihi] = h[ihi, ihi]
            ihi -= 1
            stalled = 0
            continue
        if total >= budget:
            return w, ihi + 1
        total += 1
        stalled += 1

        if stalled % EXCEPTIONAL_EVERY == 0:
            if (stalled // EXCEPTIONAL_EVERY) % 2 == 1:
                mu = h[ihi, ihi] + 0.75 * abs(h[ihi, ihi - 1].real)
            else:
                mu = h[l, l] + 0.75 * abs(h[l + 1, l].real)
        else:
            mu = _wilkinson(h[ihi - 1, ihi - 1], h[ihi - 1, ihi],
                            h[ihi, ihi - 1], h[ihi, ihi])

        i1 = 0 if want_t else l
        i2 = n - 1 if want_t else ihi
        x = h[l, l] - mu
        y = h[l + 1, l]
        for k in range(l, ihi):
            if k > l:
                x = h[k, k - 1]
                y = h[k + 1, k - 1]
            c, s, r = _givens(x, y)
            if k > l:
                h[k, k - 1] = r
                h[k + 1, k - 1] = 0j
            sc = s.conjugate()
            for j in range(k, i2 + 1):
                t1 = h[k, j]
                t2 = h[k + 1, j]
                h[k, j] = c * t1 + s * t2
                h[k + 1, j] = -sc * t1 + c * t2
            top = min(k + 2, ihi)
            for i in range(i1, top + 1):
                t1 = h[i, k]
                t2 = h[i, k + 1]
                h[i, k] = c * t1 + sc * t2
                h[i, k + 1] = -s * t1 + c * t2
            if want_z:
                for i in range(n):
                    t1 = z[i, k]
                    t2 = z[i, k + 1]
                    z[i, k] = c * t1 + sc * t2
                    z[i, k + 1] = -s * t1 + c * t2
    return w, 0


@njit(cache=True, nogil=True)
def _schur_vectors(t, z):
    """Right eigenvectors of A = Z T Z^H from the triangular factor T."""
    n = t.shape[0]
    vecs = np.zeros((n, n), dtype=np.complex128)
    x = np.zeros(n, dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        lam = t[i, i]
        smin = max(EPS * abs(lam), _TINY)
        for j in range(n):
            x[j] = 0j
        x[i] = 1.0 + 0j
        for j in range(i - 1, -1, -1):
            s = 0j
            for m in range(j + 1, i + 1):
                s += t[j, m] * x[m]
            d = t[j, j] - lam
            if abs(d) < smin:
                d = smin + 0j
            x[j] = -s / d
            ax = abs(x[j])
            if ax > _BIG:
                for m in range(j, i + 1):
                    x[m] /= ax
        for r in range(n):
            s = 0j
            for m in range(i + 1):
                s += z[r, m] * x[m]
            vecs[r, i] = s
    return vecs


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def _prepare(a):
    a = np.array(a, dtype=np.complex128, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _order(values):
    return np.lexsort((values.imag, values.real))


def eigenvalues(a, balance=True):
    """Eigenvalues of a dense square matrix, sorted by (Re, Im)."""
    h = _prepare(a)
    if balance:
        _balance(h)
    dummy = np.zeros((1, 1), dtype=np.complex128)
    _hessenberg(h, dummy, False)
    w, status = _qr_iterate(h, dummy, False, False)
    if status:
        raise ConvergenceError(
            f"QR iteration did not converge: {status} eigenvalues left",
            matrix=h, unconverged=status)
    return w[_order(w)]


def eigenpairs(a, balance=True):
    """Eigenvalues, unit-norm right eigenvectors (columns) and residuals.

    Pairs whose residual exceeds tolerance (defective or nearly defective
    input) are returned as computed; check :meth:`EigenDecomposition.flagged`.
    """
    a0 = _prepare(a)
    h = a0.copy()
    n = h.shape[0]
    d = _balance(h) if balance else np.ones(n)
    z = np.eye(n, dtype=np.complex128)
    _hessenberg(h, z, True)
    w, status = _qr_iterate(h, z, True, True)
    if status:
        raise ConvergenceError(
            f"QR iteration did not converge: {status} eigenvalues left",
            matrix=h, unconverged=status)
    w = np.diag(h).copy()
    vecs = _schur_vectors(h, z) * d[:, None]
    vecs /= np.linalg.norm(vecs, axis=0)
    order = _order(w)
    w = w[order]
    vecs = vecs[:, order]
    residuals = np.linalg.norm(a0 @ vecs - vecs * w, axis=0)
    return EigenDecomposition(w, vecs, residuals)
