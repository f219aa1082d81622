"""Discrete-time non-Hermitian quantum walk on a ring of coupled loops.

Each site carries two amplitudes, u (short loop) and v (long loop).  One
step mixes them with a coupler of angle beta, moves u one site left and v
one site right, applies the gain e^{+h} to u and the loss e^{-h} to v, and
multiplies both by the site phase e^{i phi_n}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .eigen import eigenpairs, eigenvalues
from .localization import IprSummary, ipr_many
from .spectra import EPS_HI, EPS_LO, GaugeScan, k_grid, map_threads, summarize_scan

WALK_KINDS = ("electric", "barrier-phase", "custom")


class DegenerateStepError(ArithmeticError):
    """The step matrix has a zero eigenvalue, so no quasi-energy exists."""


@dataclass(frozen=True)
class WalkSpec:
    """Walk parameters; ``phases`` are the M site phases in radians."""

    phases: np.ndarray
    beta: float
    h: float = 0.0
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=float)
        if ph.ndim != 1 or len(ph) < 1:
            raise ValueError("phases must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(ph)):
            raise ValueError("phases must be finite")
        if not 0 < self.beta <= math.pi / 2:
            raise ValueError(f"beta must lie in (0, pi/2], got {self.beta}")
        if not math.isfinite(self.h):
            raise ValueError("h must be finite")
        if self.kind not in WALK_KINDS:
            raise ValueError(f"unknown walk kind {self.kind!r}")
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "params", dict(self.params))

    @property
    def M(self) -> int:
        return len(self.phases)

    @property
    def valid(self) -> bool:
        """For the barrier-phase walk: whether pi/2 - beta < V < beta holds."""
        if self.kind != "barrier-phase":
            return True
        V = self.params["V"]
        return math.pi / 2 - self.beta < V < self.beta

    def with_h(self, h: float) -> WalkSpec:
        return replace(self, h=float(h))


def electric_walk(M: int, R: int, beta: float, h: float = 0.0) -> WalkSpec:
    """Linear phase ramp phi_n = 2 pi R n / M (n = 1..M), stored mod 2 pi."""
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")
    if int(R) != R:
        raise ValueError(f"R must be an integer, got {R}")
    n = np.arange(1, M + 1)
    phases = 2.0 * np.pi * ((int(R) * n) % M) / M
    return WalkSpec(phases, beta, h, "electric", {"R": int(R)})


def barrier_walk(M: int, V: float, beta: float, h: float = 0.0) -> WalkSpec:
    """Phase +V on the first M/2 sites and -V on the rest."""
    if int(M) != M or M < 2 or M % 2:
        raise ValueError(f"barrier-phase walk needs an even M >= 2, got {M}")
    phases = np.full(int(M), float(V))
    phases[int(M) // 2:] = -float(V)
    return WalkSpec(phases, beta, h, "barrier-phase", {"V": float(V)})


@dataclass(frozen=True)
class WalkState:
    m: int
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.complex128)
        v = np.asarray(self.v, dtype=np.complex128)
        if u.shape != v.shape or u.ndim != 1:
            raise ValueError("u and v must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("walk amplitudes must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.u) ** 2 + np.abs(self.v) ** 2))


def pulse(M: int, n0: int) -> WalkState:
    """u = delta at site n0 (0-based), v = 0."""
    if not 0 <= n0 < M:
        raise ValueError(f"n0 must be in 0..{M - 1}, got {n0}")
    u = np.zeros(M, dtype=np.complex128)
    u[n0] = 1.0
    return WalkState(0, u, np.zeros(M, dtype=np.complex128))


def walk_step(state: WalkState, spec: WalkSpec) -> WalkState:
    """Advance one round trip; site indices wrap around the ring."""
    if len(state.u) != spec.M:
        raise ValueError(f"state has {len(state.u)} sites, spec has {spec.M}")
    c, s = math.cos(spec.beta), math.sin(spec.beta)
    phase = np.exp(1j * spec.phases)
    up = np.roll(state.u, -1)  # u_{n+1}
    vp = np.roll(state.v, -1)
    um = np.roll(state.u, 1)   # u_{n-1}
    vm = np.roll(state.v, 1)
    u = (c * up + 1j * s * vp) * math.exp(spec.h) * phase
    v = (c * vm + 1j * s * um) * math.exp(-spec.h) * phase
    return WalkState(state.m + 1, u, v)


def walk_band_matrix(spec: WalkSpec, k: complex) -> np.ndarray:
    """2M x 2M one-step matrix acting on (U_1..U_M, V_1..V_M) at Bloch number k.

    Eigenvalues lambda give the quasi-energies through lambda = exp(-iE).
    """
    M = spec.M
    c, s = math.cos(spec.beta), math.sin(spec.beta)
    # shift matrices built separately (not as adjoints) so complex k continues analytically
    ahead = np.zeros((M, M), dtype=np.complex128)
    ahead[np.arange(M - 1), np.arange(1, M)] = 1.0
    ahead[M - 1, 0] += np.exp(1j * k * M)
    behind = np.zeros((M, M), dtype=np.complex128)
    behind[np.arange(1, M), np.arange(M - 1)] = 1.0
    behind[0, M - 1] += np.exp(-1j * k * M)
    phi = np.exp(1j * spec.phases)[:, None]
    fwd = phi * ahead
    back = phi * behind
    gain, loss = math.exp(spec.h), math.exp(-spec.h)
    W = np.empty((2 * M, 2 * M), dtype=np.complex128)
    W[:M, :M] = gain * c * fwd
    W[:M, M:] = 1j * gain * s * fwd
    W[M:, :M] = 1j * loss * s * back
    W[M:, M:] = loss * c * back
    return W


def quasienergy(lam) -> np.ndarray:
    """E = i log(lambda) with Re E in (-pi, pi]; Im E = log|lambda|."""
    lam = np.asarray(lam, dtype=np.complex128)
    if np.any(lam == 0):
        raise DegenerateStepError("zero eigenvalue of the step matrix")
    E = 1j * np.log(lam)
    re = np.where(E.real <= -np.pi, E.real + 2 * np.pi, E.real)
    return re + 1j * E.imag


def _sorted(E):
    return E[np.lexsort((E.imag, E.real))]


def walk_quasienergies(spec: WalkSpec, k: float) -> np.ndarray:
    """All 2M quasi-energies at k, sorted by (Re, Im)."""
    return _sorted(quasienergy(eigenvalues(walk_band_matrix(spec, k))))


@dataclass(frozen=True)
class QuasiEnergySpectrum:
    k_grid: np.ndarray
    energies: np.ndarray  # (Nk, 2M)
    vectors: np.ndarray | None = None  # (Nk, 2M, 2M); vectors[j][:, i] pairs with energies[j, i]


def walk_spectrum(spec: WalkSpec, Nk: int = 64, want_vectors: bool = False,
                  threads: int = 1) -> QuasiEnergySpectrum:
    ks = k_grid(spec.M, Nk)

    def one(k):
        W = walk_band_matrix(spec, k)
        if not want_vectors:
            return walk_quasienergies(spec, k), None
        dec = eigenpairs(W)
        E = quasienergy(dec.eigenvalues)
        order = np.lexsort((E.imag, E.real))
        return E[order], dec.eigenvectors[:, order]

    out = map_threads(one, ks, threads)
    energies = np.array([e for e, _ in out])
    vectors = np.array([v for _, v in out]) if want_vectors else None
    return QuasiEnergySpectrum(ks, energies, vectors)


def interleave(vector, M: int) -> np.ndarray:
    """(U_1..U_M, V_1..V_M) -> (U_1, V_1, U_2, V_2, ...)."""
    v = np.asarray(vector)
    out = np.empty(v.shape, dtype=np.complex128)
    out[0::2] = v[:M]
    out[1::2] = v[M:]
    return out


def walk_ipr_summary(spec: WalkSpec, Nk: int = 8, threads: int = 1) -> IprSummary:
    """IPR over all 2M * Nk walk eigenstates (numerator sums |U|^4 + |V|^4)."""
    sp = walk_spectrum(spec, Nk, want_vectors=True, threads=threads)
    vals = np.concatenate([ipr_many(v) for v in sp.vectors])
    return IprSummary(float(spec.h), float(vals.max()), float(vals.min()), float(vals.mean()))


def electric_dispersion(M: int, beta: float, k: float, l: int) -> float:
    """Odd-M electric walk band: 2 pi l / M + cos(beta)^M cos(kM), l = 1..M."""
    if int(M) != M or M < 1 or M % 2 == 0:
        raise ValueError(f"closed form is available for odd M only, got M={M}")
    if int(l) != l or not 1 <= l <= M:
        raise ValueError(f"band index must be in 1..{M}, got {l}")
    return 2.0 * np.pi * l / M + math.cos(beta) ** M * math.cos(k * M)


def electric_exact(M: int, beta: float, k: float, h: float = 0.0) -> np.ndarray:
    """All 2M quasi-energies of the odd-M electric walk in closed form.

    For odd M the cell propagator satisfies cos(M E) = cos(beta)^M cos(M (k - ih)),
    so E = (2 pi l +/- arccos(cos(beta)^M cos(M (k - ih)))) / M.  Returned
    on the principal branch and sorted by (Re, Im).
    """
    if int(M) != M or M < 1 or M % 2 == 0:
        raise ValueError(f"closed form is available for odd M only, got M={M}")
    arg = math.cos(beta) ** M * np.cos(M * (k - 1j * h))
    theta = np.arccos(complex(arg))
    l = np.arange(M)
    E = np.concatenate([(2 * np.pi * l + theta) / M, (2 * np.pi * l - theta) / M])
    return _sorted(quasienergy(np.exp(-1j * E)))


def walk_closed_form_m1(beta: float, k: float, h: float = 0.0, phi: float = 0.0) -> np.ndarray:
    """Two bands of the one-site walk: E = +/- arccos(cos(beta) cos(k - ih)) - phi."""
    theta = np.arccos(complex(math.cos(beta) * np.cos(k - 1j * h)))
    return _sorted(quasienergy(np.exp(-1j * np.array([theta - phi, -theta - phi]))))


def predicted_hc_walk(kind: str, beta: float, V: float | None = None) -> float:
    """Closed-form critical field of the walk.

    electric: -log|cos(beta)|; barrier-phase: acosh(cos(pi - beta - 2V) / cos(beta)) / 2,
    which needs pi/2 - beta < V < beta.
    """
    if kind == "electric":
        c = abs(math.cos(beta))
        if c < 1e-15 or c >= 1:
            raise ValueError(f"electric prediction needs 0 < |cos(beta)| < 1, got beta={beta}")
        return -math.log(c)
    if kind == "barrier-phase":
        if V is None:
            raise ValueError("barrier-phase prediction needs V")
        if not math.pi / 2 - beta <= V < beta:
            raise ValueError(f"barrier-phase prediction needs pi/2 - beta <= V < beta (got V={V}, beta={beta})")
        arg = math.cos(math.pi - beta - 2 * V) / math.cos(beta)
        if arg < 1.0:
            if arg > 1.0 - 1e-12:
                arg = 1.0
            else:
                raise ValueError(f"acosh argument {arg} < 1")
        return 0.5 * math.acosh(arg)
    raise ValueError(f"no closed-form critical field for walk kind {kind!r}")


def walk_max_im(spec: WalkSpec, Nk: int = 64, threads: int = 1) -> float:
    """max over k and bands of |log|lambda||, which does not depend on the branch of log."""
    ks = k_grid(spec.M, Nk)
    vals = map_threads(lambda k: np.max(np.abs(np.log(np.abs(eigenvalues(walk_band_matrix(spec, k)))))),
                       ks, threads)
    return float(max(vals))


def walk_gauge_scan(family: WalkSpec, h_grid, Nk: int = 64, eps_lo: float = EPS_LO,
                    eps_hi: float = EPS_HI, threads: int = 1) -> GaugeScan:
    h_grid = np.asarray(h_grid, float)
    ks = k_grid(family.M, Nk)
    jobs = [(h, k) for h in h_grid for k in ks]

    def one(hk):
        lam = eigenvalues(walk_band_matrix(family.with_h(hk[0]), hk[1]))
        return np.max(np.abs(np.log(np.abs(lam))))

    vals = map_threads(one, jobs, threads)
    max_im = np.asarray(vals).reshape(len(h_grid), len(ks)).max(axis=1)
    return summarize_scan(h_grid, max_im, eps_lo, eps_hi)


@dataclass(frozen=True)
class WalkTrace:
    """Power, ring second moment and width per step (m = 0..m_max).

    ``power`` is exp(``log_power``); the amplitudes were renormalized each
    step, so ``intensity`` rows are site intensities (|u|^2 + |v|^2) / P.
    """

    log_power: np.ndarray
    second_moment: np.ndarray
    n0: int
    intensity: np.ndarray | None = None

    @property
    def power(self) -> np.ndarray:
        return np.exp(self.log_power)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.second_moment)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(len(self.log_power))


def ring_distance(M: int, n0: int) -> np.ndarray:
    """Minimal-image distance of every site from n0 on an M-site ring."""
    d = np.abs(np.arange(M) - n0)
    return np.minimum(d, M - d)


def walk_dynamics(spec: WalkSpec, n0: int, m_max: int, keep_intensity: bool = False,
                  state: WalkState | None = None) -> WalkTrace:
    """Propagate a pulse injected in the u loop at site n0 (0-based)."""
    M = spec.M
    if int(m_max) != m_max or m_max < 0:
        raise ValueError(f"m_max must be a non-negative integer, got {m_max}")
    st = state if state is not None else pulse(M, n0)
    d2 = ring_distance(M, n0).astype(float) ** 2
    log_p = np.zeros(m_max + 1)
    m2 = np.zeros(m_max + 1)
    frames = np.zeros((m_max + 1, M)) if keep_intensity else None
    p0 = st.power
    if not p0 > 0:
        raise ValueError("initial state has zero power")
    u, v = st.u / math.sqrt(p0), st.v / math.sqrt(p0)
    acc = math.log(p0)
    st = WalkState(st.m, u, v)
    for m in range(m_max + 1):
        if m:
            st = walk_step(st, spec)
            p = st.power
            acc += math.log(p)
            st = WalkState(st.m, st.u / math.sqrt(p), st.v / math.sqrt(p))
        inten = np.abs(st.u) ** 2 + np.abs(st.v) ** 2
        log_p[m] = acc
        m2[m] = float(np.dot(d2, inten))
        if keep_intensity:
            frames[m] = inten
    return WalkTrace(log_p, m2, n0, frames)


def growth_rate(trace: WalkTrace, start_fraction: float = 0.5) -> float:
    """Least-squares slope of log P over the last part of the run.

    This is the late-time growth rate per step; early non-normal transients
    (finite amplification without a complex spectrum) are excluded.
    """
    m = trace.steps
    first = int(len(m) * start_fraction)
    if len(m) - first < 2:
        raise ValueError("trace too short for a slope")
    slope, _ = np.polyfit(m[first:], trace.log_power[first:], 1)
    return float(slope)
