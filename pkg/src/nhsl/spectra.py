"""Band structures, gauge-field scans and the flat-band analysis."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from . import _precise
from .eigen import ConvergenceError, eigenpairs, eigenvalues
from .lattice import SuperlatticeSpec, assemble_bloch, build_potential

DEFAULT_NK_SCAN = 64
DEFAULT_NK_BANDS = 256
EPS_LO = 1e-4
EPS_HI = 1e-2
TIE_TOL = 1e-12
MIXING_LIMIT = 0.5


class PerturbationInvalidError(ValueError):
    """The chosen band is (nearly) degenerate, so first-order theory does not apply."""


class FitError(ValueError):
    """Not enough data to fit a decay exponent."""


def map_threads(fn, items, threads=1):
    """``list(map(fn, items))``, optionally on a thread pool (the eigen kernels release the GIL)."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def k_grid(M: int, Nk: int) -> np.ndarray:
    """Nk uniformly spaced wave numbers covering [-pi/M, pi/M)."""
    if int(Nk) != Nk or Nk < 2:
        raise ValueError(f"Nk must be an integer >= 2, got {Nk}")
    return -np.pi / M + 2.0 * np.pi / M * np.arange(Nk) / Nk


@dataclass(frozen=True)
class ComplexSpectrum:
    k_grid: np.ndarray
    bands: np.ndarray  # (M, Nk) complex, bands[l, j] = E_l(k_j)
    eigenvectors: np.ndarray | None = None  # (M, Nk, M): vector of band l at k_j

    @property
    def M(self) -> int:
        return self.bands.shape[0]


def match_bands(previous, current):
    """Permutation p with current[p[l]] the continuation of previous[l].

    Greedy on complex distance: the globally closest free pair is linked
    first.  Candidates closer than TIE_TOL to the best distance are broken
    toward the lower band index, then the lower candidate index.
    """
    n = len(previous)
    dist = np.abs(previous[:, None] - current[None, :])
    perm = np.full(n, -1)
    free_rows = np.ones(n, bool)
    free_cols = np.ones(n, bool)
    for _ in range(n):
        masked = np.where(free_rows[:, None] & free_cols[None, :], dist, np.inf)
        best = masked.min()
        rows, cols = np.nonzero(masked <= best + TIE_TOL)
        pick = np.lexsort((cols, rows))[0]
        r, c = rows[pick], cols[pick]
        perm[r] = c
        free_rows[r] = False
        free_cols[c] = False
    return perm


def _solve_at(spec, k, want_vectors):
    try:
        H = assemble_bloch(spec, k)
        if want_vectors:
            dec = eigenpairs(H)
            return dec.eigenvalues, dec.eigenvectors
        return eigenvalues(H), None
    except ConvergenceError as exc:
        raise ConvergenceError(f"{exc} (at k = {k!r})", exc.matrix, exc.unconverged) from exc


def band_structure(spec: SuperlatticeSpec, Nk: int = DEFAULT_NK_BANDS,
                   want_vectors: bool = False, threads: int = 1) -> ComplexSpectrum:
    """E_l(k) on the reduced zone, with bands threaded outward from k = 0."""
    ks = k_grid(spec.M, Nk)
    results = map_threads(lambda k: _solve_at(spec, k, want_vectors), ks, threads)
    start = int(np.argmin(np.abs(ks)))
    if ks[start] != 0.0:
        ref_vals, _ = _solve_at(spec, 0.0, False)
    else:
        ref_vals = results[start][0]
    M = spec.M
    bands = np.empty((M, Nk), dtype=np.complex128)
    vecs = np.empty((M, Nk, M), dtype=np.complex128) if want_vectors else None

    def place(j, prev):
        vals, v = results[j]
        p = match_bands(prev, vals)
        bands[:, j] = vals[p]
        if want_vectors:
            vecs[:, j, :] = v[:, p].T
        return bands[:, j]

    prev = place(start, ref_vals)
    for j in range(start + 1, Nk):
        prev = place(j, prev)
    prev = bands[:, start]
    for j in range(start - 1, -1, -1):
        prev = place(j, prev)
    return ComplexSpectrum(ks, bands, vecs)


def max_im_energy(spec: SuperlatticeSpec, Nk: int = DEFAULT_NK_SCAN, threads: int = 1) -> float:
    """Largest |Im E| over all bands and k samples."""
    ks = k_grid(spec.M, Nk)
    vals = map_threads(lambda k: _solve_at(spec, k, False)[0], ks, threads)
    return float(max(np.max(np.abs(v.imag)) for v in vals))


@dataclass(frozen=True)
class GaugeScan:
    """max |Im E| against h, with the threshold-crossing summary.

    ``transition_width`` is the onset interval divided by its upper end,
    (h_hi - h_lo) / h_hi, where h_lo and h_hi are the fields at which
    max_im crosses eps_lo and eps_hi.  It is 1 for an onset that starts at
    h = 0 and tends to 0 for a sharp threshold.  ``onset_interval`` keeps
    the absolute pair (h_lo, h_hi).
    """

    h_grid: np.ndarray
    max_im: np.ndarray
    hc_estimate: float | None
    transition_width: float | None
    onset_interval: tuple[float, float] | None
    eps_lo: float = EPS_LO
    eps_hi: float = EPS_HI


def first_crossing(x, y, level):
    """First x where y reaches ``level``, linearly interpolated; None if never."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    above = np.flatnonzero(y >= level)
    if len(above) == 0:
        return None
    i = above[0]
    if i == 0:
        return float(x[0])
    x0, x1, y0, y1 = x[i - 1], x[i], y[i - 1], y[i]
    return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))


def summarize_scan(h_grid, max_im, eps_lo=EPS_LO, eps_hi=EPS_HI) -> GaugeScan:
    h_grid = np.asarray(h_grid, float)
    max_im = np.asarray(max_im, float)
    if len(h_grid) < 2 or np.any(np.diff(h_grid) <= 0):
        raise ValueError("h_grid must be strictly increasing with at least two points")
    if not eps_lo < eps_hi:
        raise ValueError(f"need eps_lo < eps_hi, got {eps_lo} and {eps_hi}")
    h_hi = first_crossing(h_grid, max_im, eps_hi)
    h_lo = first_crossing(h_grid, max_im, eps_lo)
    if h_hi is None:
        return GaugeScan(h_grid, max_im, None, None, None, eps_lo, eps_hi)
    width = (h_hi - h_lo) / h_hi if h_hi > 0 else 1.0
    return GaugeScan(h_grid, max_im, h_hi, width, (h_lo, h_hi), eps_lo, eps_hi)


def scan_gauge(family: SuperlatticeSpec, h_grid, Nk: int = DEFAULT_NK_SCAN,
               eps_lo: float = EPS_LO, eps_hi: float = EPS_HI, threads: int = 1) -> GaugeScan:
    """max_im_energy over h_grid (the h stored on ``family`` is ignored)."""
    h_grid = np.asarray(h_grid, float)
    if len(h_grid) < 2 or np.any(np.diff(h_grid) <= 0):
        raise ValueError("h_grid must be strictly increasing with at least two points")
    if not eps_lo < eps_hi:
        raise ValueError(f"need eps_lo < eps_hi, got {eps_lo} and {eps_hi}")
    ks = k_grid(family.M, Nk)
    jobs = [(h, k) for h in h_grid for k in ks]
    vals = map_threads(lambda hk: np.max(np.abs(_solve_at(family.with_h(hk[0]), hk[1], False)[0].imag)),
                       jobs, threads)
    max_im = np.asarray(vals).reshape(len(h_grid), len(ks)).max(axis=1)
    return summarize_scan(h_grid, max_im, eps_lo, eps_hi)


def _kind_params(model, params):
    if isinstance(model, SuperlatticeSpec):
        return model.potential.kind, dict(model.potential.params), model.J
    if hasattr(model, "kind") and hasattr(model, "params"):
        return model.kind, dict(model.params), None
    return str(model), dict(params), None


def predicted_hc(model, J: float | None = None, **params) -> float:
    """Closed-form critical gauge field.

    ``model`` is a kind name with parameters as keywords, a
    PotentialSequence, or a SuperlatticeSpec.  Incommensurate: log(V/J);
    barrier: acosh(V/J - 1) / 2.
    """
    kind, params, spec_J = _kind_params(model, params)
    J = J if J is not None else (spec_J if spec_J is not None else 1.0)
    if not J > 0:
        raise ValueError(f"J must be positive, got {J}")
    if kind == "incommensurate":
        V = params["V"]
        if V < J:
            raise ValueError(f"incommensurate prediction needs V >= J (got V={V}, J={J})")
        return math.log(V / J)
    if kind == "barrier":
        V = params["V"]
        if not V > 2 * J:
            raise ValueError(f"barrier prediction needs V > 2J (got V={V}, J={J})")
        return 0.5 * math.acosh(V / J - 1.0)
    raise ValueError(f"no closed-form critical field for the {kind!r} model")


def decay_rate(model, J: float | None = None, **params) -> float | None:
    """Slowest evanescent decay rate per site (gamma_m) for the flat-band models, else None."""
    kind, params, spec_J = _kind_params(model, params)
    J = J if J is not None else (spec_J if spec_J is not None else 1.0)
    if kind == "incommensurate" and params["V"] > J:
        return math.log(params["V"] / J)
    if kind == "barrier" and params["V"] > 2 * J:
        return math.acosh(params["V"] / J - 1.0)
    return None


# ---------------------------------------------------------------------------
# flat bands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlatBandReport:
    """Exact and first-order half-widths of band l across cell sizes.

    Per-size arrays are aligned with ``sizes``.  ``sigma_fit`` is minus the
    least-squares slope of ln|delta_exact| against M and ``intercept`` the
    matching constant, so delta ~ exp(intercept - sigma_fit * M).
    ``mixing`` is the largest ratio of corner coupling to level spacing
    between band l and any other level of the open cell; first-order theory
    needs it small.
    """

    l: int
    sizes: np.ndarray
    E0: np.ndarray
    delta_exact: np.ndarray
    delta_pert: np.ndarray
    mixing: np.ndarray
    sigma_fit: float
    intercept: float
    sigma_pert: float
    gamma_m: float | None
    rho: float | None

    @property
    def rel_error(self) -> np.ndarray:
        return np.abs(self.delta_pert - self.delta_exact) / np.abs(self.delta_exact)


def fit_decay(sizes, deltas):
    """(sigma, intercept) from ordinary least squares of ln|delta| on M."""
    sizes = np.asarray(sizes, float)
    if len(sizes) < 3:
        raise FitError(f"a decay fit needs at least 3 sizes, got {len(sizes)}")
    logs = np.log(np.abs(np.asarray(deltas, float)))
    if not np.all(np.isfinite(logs)):
        raise FitError("zero or non-finite band width in the fit data")
    slope, intercept = np.polyfit(sizes, logs, 1)
    return float(-slope), float(intercept)


def _cell_values(family, M, origin):
    values = np.asarray(family.resized(M).potential.values, float)
    return np.roll(values, -origin) if origin else values


def _flatband_one(values, J, l, dps=None):
    """(E0, delta_exact, delta_pert, mixing) for one cell, in extended precision."""
    M = len(values)
    dps = dps or _precise.working_dps(M)
    with mp.workdps(dps):
        e_zero, _ = _precise.sorted_eigh(_precise.symmetric_cell(values, J, +1))
        e_pi, _ = _precise.sorted_eigh(_precise.symmetric_cell(values, J, -1))
        e_open, vecs = _precise.sorted_eigh(_precise.symmetric_cell(values, J, 0), vectors=True)
        delta = (e_pi[l] - e_zero[l]) / 2
        phi = vecs[l]
        pert = -2 * J * phi[0] * phi[M - 1]
        mixing = mp.mpf(0)
        for j in range(M):
            if j == l:
                continue
            gap = abs(e_open[l] - e_open[j])
            chi = vecs[j]
            for sign in (1, -1):
                c = J * abs(sign * chi[0] * phi[M - 1] + chi[M - 1] * phi[0])
                mixing = max(mixing, c / gap if gap else mp.inf)
        resolution = mp.mpf(10) ** (-(dps - 12))
        if abs(delta) < resolution:
            raise ArithmeticError("band width below working precision")
        return float(e_zero[l]), float(delta), float(pert), float(mixing)


def flatband_analysis(family: SuperlatticeSpec, l: int, sizes, origin: int = 0,
                      mixing_limit: float = MIXING_LIMIT) -> FlatBandReport:
    """Exact versus first-order flat-band widths of band l at h = 0.

    The exact half-width is (E_l(pi/M) - E_l(0)) / 2; the first-order value
    is -2J phi_1 phi_M from the l-th eigenvector of the cell with its corner
    bonds removed.  Both are computed with mpmath at a precision that grows
    with M, since the widths quickly drop below double resolution.

    ``origin`` cyclically shifts where the cell is cut.  The exact bands do
    not depend on it, but the first-order estimate does: it assumes the
    state is small at both cut edges.
    """
    sizes = [int(m) for m in sizes]
    if len(sizes) < 3:
        raise FitError(f"flat-band fit needs at least 3 sizes, got {len(sizes)}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing")
    if any(not 0 <= l < m for m in sizes):
        raise ValueError(f"band index {l} out of range for sizes {sizes}")
    rows = []
    for M in sizes:
        values = _cell_values(family, M, origin)
        try:
            rows.append(_flatband_one(values, family.J, l))
        except ArithmeticError:
            rows.append(_flatband_one(values, family.J, l, 2 * _precise.working_dps(M)))
        if rows[-1][3] >= mixing_limit:
            raise PerturbationInvalidError(
                f"band {l} is nearly degenerate at M = {M} "
                f"(coupling/spacing ratio {rows[-1][3]:.3g} >= {mixing_limit})")
    E0, dex, dpt, mix = (np.array(c) for c in zip(*rows))
    sigma, intercept = fit_decay(sizes, dex)
    sigma_pert, _ = fit_decay(sizes, dpt)
    gamma = decay_rate(family)
    rho = sigma / gamma if gamma else None
    return FlatBandReport(l, np.array(sizes), E0, dex, dpt, mix, sigma, intercept,
                          sigma_pert, gamma, rho)


def default_sizes(spec: SuperlatticeSpec) -> list[int]:
    """Four sizes ending at spec.M used for the loop-law sigma (40 -> 16, 24, 32, 40).

    The incommensurate family uses the three preceding Fibonacci sizes.
    """
    M = spec.M
    if spec.potential.kind == "incommensurate":
        fib = [2, 3]
        while fib[-1] < M:
            fib.append(fib[-1] + fib[-2])
        return [f for f in fib if f <= M][-4:]
    out = []
    for f in (0.4, 0.6, 0.8, 1.0):
        m = int(round(f * M))
        if spec.potential.kind == "barrier" and m % 2:
            m += 1
        out.append(m)
    return sorted(set(out))


def loop_radius(spec: SuperlatticeSpec, l: int, h: float, Nk: int = 16) -> float:
    """max over k of |E_l(k, h) - E_l(0, 0)|, polished in extended precision."""
    base = spec.with_h(0.0)
    values = list(spec.potential.values)
    M = spec.M
    rough0 = eigenvalues(assemble_bloch(base, 0.0)).real
    order = np.argsort(rough0)
    spectrum = band_structure(spec.with_h(h), Nk)
    with mp.workdps(_precise.working_dps(M) + M // 3):
        e_ref = _precise.refine_band_energy(rough0[order[l]], values, spec.J, mp.mpf(0), M)
        # rows of the band structure follow the sorted k = 0 spectrum, so
        # row l is the continuation of band l while the loops stay small
        radius = mp.mpf(0)
        for j, k in enumerate(spectrum.k_grid):
            q = mp.mpc(k, -h)
            e = _precise.refine_band_energy(spectrum.bands[l, j], values, spec.J, q, M)
            radius = max(radius, abs(e - e_ref))
        return float(radius)


def loop_radius_check(spec: SuperlatticeSpec, l: int, h: float, sizes=None,
                      Nk: int = 16, report: FlatBandReport | None = None) -> tuple[float, float]:
    """(predicted, measured) loop radius of band l at field h.

    predicted = exp((h - sigma) M) / 2 with sigma from :func:`flatband_analysis`
    over ``sizes`` (default :func:`default_sizes`); measured from the exact
    spectrum via :func:`loop_radius`.
    """
    if not h > 0:
        raise ValueError(f"loop radius check needs h > 0, got {h}")
    if report is None:
        report = flatband_analysis(spec, l, sizes or default_sizes(spec))
    predicted = 0.5 * math.exp((h - report.sigma_fit) * spec.M)
    return predicted, loop_radius(spec, l, h, Nk)


def clean_spec(M: int, J: float = 1.0, h: float = 0.0) -> SuperlatticeSpec:
    return SuperlatticeSpec(build_potential("custom", M, values=np.zeros(M)), J=J, h=h)
