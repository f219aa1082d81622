"""Inverse participation ratios of Bloch eigenstates within one cell."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import SuperlatticeSpec
from .spectra import band_structure


def ipr(vector, components_per_site: int = 1) -> float:
    """Sum of fourth powers over the squared sum of squares.

    With ``components_per_site=2`` the vector interleaves (U_n, V_n) and
    the numerator is sum(|U|^4 + |V|^4).  That makes the result identical
    to treating the 2M components as sites, so its floor is 1/(2M) there.
    """
    v = np.asarray(vector, dtype=np.complex128).ravel()
    if components_per_site not in (1, 2):
        raise ValueError(f"components_per_site must be 1 or 2, got {components_per_site}")
    if components_per_site == 2 and len(v) % 2:
        raise ValueError("interleaved (U, V) vector must have even length")
    p = np.abs(v) ** 2
    total = p.sum()
    if not total > 0:
        raise ValueError("IPR of a zero vector is undefined")
    p = p / total
    return float(np.sum(p * p))


def ipr_many(vectors) -> np.ndarray:
    """IPR of each column of a 2-d array (one site per component)."""
    p = np.abs(np.asarray(vectors)) ** 2
    s = p.sum(axis=0)
    if np.any(s == 0):
        raise ValueError("IPR of a zero vector is undefined")
    p /= s
    return np.sum(p * p, axis=0)


@dataclass(frozen=True)
class IprSummary:
    h: float
    ipr_max: float
    ipr_min: float
    ipr_mean: float
    per_state: list | None = None  # (l, k, ipr, energy) tuples


def ipr_summary(spec: SuperlatticeSpec, Nk: int = 16, keep_states: bool = False,
                threads: int = 1) -> IprSummary:
    """IPR extremes and uniform mean over all M * Nk eigenstates at spec.h."""
    bs = band_structure(spec, Nk, want_vectors=True, threads=threads)
    M = spec.M
    values = ipr_many(bs.eigenvectors.reshape(M * Nk, M).T).reshape(M, Nk)
    states = None
    if keep_states:
        states = [(l, float(k), float(values[l, j]), complex(bs.bands[l, j]))
                  for l in range(M) for j, k in enumerate(bs.k_grid)]
    return IprSummary(float(spec.h), float(values.max()), float(values.min()),
                      float(values.mean()), states)


def ipr_scan(family: SuperlatticeSpec, h_grid, Nk: int = 16, threads: int = 1) -> list[IprSummary]:
    return [ipr_summary(family.with_h(h), Nk, threads=threads) for h in h_grid]


def localization_transition(summaries, M: int) -> float | None:
    """Field where ipr_mean first falls below sqrt(ipr_mean(h0) / M).

    The threshold is the geometric mean of the first summary's ipr_mean and
    the extended-state value 1/M; the crossing is interpolated linearly in h.
    Returns None when the curve never gets there.
    """
    summaries = sorted(summaries, key=lambda s: s.h)
    if len(summaries) < 5:
        raise ValueError(f"need at least 5 grid points, got {len(summaries)}")
    h = np.array([s.h for s in summaries])
    y = np.array([s.ipr_mean for s in summaries])
    level = np.sqrt(y[0] / M)
    # relative slack so rounding noise on a flat curve does not count as a drop
    below = np.flatnonzero(y < level * (1.0 - 1e-9))
    if len(below) == 0:
        return None
    i = below[0]
    if i == 0:
        return float(h[0])
    return float(h[i - 1] + (y[i - 1] - level) * (h[i] - h[i - 1]) / (y[i - 1] - y[i]))
