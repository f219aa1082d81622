"""Superlattice models and the M x M Bloch Hamiltonian.

Sites are numbered 1..M in the potential formulas and stored 0-based, so
``values[n]`` is the potential on site ``n + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class InvalidModelError(ValueError):
    """Model parameters violate a structural constraint (e.g. odd M for a barrier)."""


class InvalidApproximantError(ValueError):
    """R/M is not a reduced fraction with 1 <= R < M."""


KINDS = ("impurity", "incommensurate", "barrier", "custom")


@dataclass(frozen=True)
class PotentialSequence:
    """On-site energies of one unit cell plus the model that produced them.

    ``params`` holds the model parameters by name: ``A`` for the impurity,
    ``V`` and ``R`` for the incommensurate chain, ``V`` for the barrier.
    """

    values: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise InvalidModelError("potential must be a 1-d sequence")
        if not np.all(np.isfinite(vals)):
            raise InvalidModelError("potential entries must be finite")
        if self.kind not in KINDS:
            raise InvalidModelError(f"unknown potential kind {self.kind!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "params", dict(self.params))

    @property
    def M(self) -> int:
        return len(self.values)


def _check_M(M):
    if int(M) != M or M < 2:
        raise InvalidModelError(f"M must be an integer >= 2, got {M}")
    return int(M)


def build_potential(kind: str, M: int, **params) -> PotentialSequence:
    """Potential sequence for one of the named models.

    >>> build_potential("barrier", 4, V=2.5).values
    array([ 2.5,  2.5, -2.5, -2.5])
    """
    M = _check_M(M)
    n = np.arange(1, M + 1)
    if kind == "impurity":
        A = float(params["A"])
        vals = np.zeros(M)
        vals[0] = A
        return PotentialSequence(vals, kind, {"A": A})
    if kind == "incommensurate":
        V = float(params["V"])
        R = params["R"]
        if int(R) != R:
            raise InvalidApproximantError(f"R must be an integer, got {R}")
        R = int(R)
        if not 1 <= R < M:
            raise InvalidApproximantError(f"need 1 <= R < M, got R={R}, M={M}")
        if math.gcd(R, M) != 1:
            raise InvalidApproximantError(f"R={R} and M={M} share a factor")
        # reduce R*n mod M first so the cosine argument stays exact-ish in [0, 2pi)
        vals = 2.0 * V * np.cos(2.0 * np.pi * ((R * n) % M) / M)
        return PotentialSequence(vals, kind, {"V": V, "R": R})
    if kind == "barrier":
        V = float(params["V"])
        if M % 2:
            raise InvalidModelError(f"barrier model needs even M, got {M}")
        vals = np.full(M, V)
        vals[M // 2:] = -V
        return PotentialSequence(vals, kind, {"V": V})
    if kind == "custom":
        vals = np.asarray(params["values"], dtype=float)
        if len(vals) != M:
            raise InvalidModelError(f"expected {M} values, got {len(vals)}")
        return PotentialSequence(vals, kind, {})
    raise InvalidModelError(f"unknown potential kind {kind!r}")


def fibonacci_approximant(s: int) -> tuple[int, int]:
    """Return (R, M) = (p_{s-1}, p_s) for the sequence 0, 1, 2, 3, 5, 8, ...

    R/M are the continued-fraction convergents of the inverse golden mean.
    """
    if int(s) != s or s < 2:
        raise ValueError(f"approximant index must be an integer >= 2, got {s}")
    p = [0, 1, 2]
    while len(p) <= s:
        p.append(p[-1] + p[-2])
    return p[s - 1], p[s]


def fibonacci_index(M: int) -> int:
    """Inverse of :func:`fibonacci_approximant` on M; ValueError if M is not in the sequence."""
    s = 2
    while True:
        R, Ms = fibonacci_approximant(s)
        if Ms == M:
            return s
        if Ms > M:
            raise ValueError(f"{M} is not a Fibonacci number >= 2")
        s += 1


@dataclass(frozen=True)
class SuperlatticeSpec:
    """Unit cell of M sites with hopping J and imaginary gauge field h."""

    potential: PotentialSequence
    J: float = 1.0
    h: float = 0.0

    def __post_init__(self):
        _check_M(self.potential.M)
        if not (self.J > 0 and math.isfinite(self.J)):
            raise InvalidModelError(f"J must be positive and finite, got {self.J}")
        if not math.isfinite(self.h):
            raise InvalidModelError("h must be finite")

    @property
    def M(self) -> int:
        return self.potential.M

    @property
    def J_L(self) -> float:
        return self.J * math.exp(self.h)

    @property
    def J_R(self) -> float:
        return self.J * math.exp(-self.h)

    def with_h(self, h: float) -> SuperlatticeSpec:
        return replace(self, h=float(h))

    def resized(self, M: int) -> SuperlatticeSpec:
        """Same model family at a different cell size.

        The incommensurate family moves along the Fibonacci approximants, so
        M must be a Fibonacci number there.  Custom potentials cannot be resized.
        """
        kind = self.potential.kind
        p = self.potential.params
        if kind == "custom":
            raise InvalidModelError("a custom potential has no size family")
        if kind == "incommensurate":
            R, _ = fibonacci_approximant(fibonacci_index(M))
            pot = build_potential(kind, M, V=p["V"], R=R)
        else:
            pot = build_potential(kind, M, **p)
        return replace(self, potential=pot)


def model(kind: str, M: int, J: float = 1.0, h: float = 0.0, **params) -> SuperlatticeSpec:
    """Shorthand: ``model("barrier", 80, V=2.5, h=0.3)``."""
    return SuperlatticeSpec(build_potential(kind, M, **params), J=J, h=h)


def wrap_k(k: float, M: int) -> float:
    """Reduce k into the zone [-pi/M, pi/M)."""
    period = 2.0 * np.pi / M
    return (k + np.pi / M) % period - np.pi / M


def assemble_bloch(spec: SuperlatticeSpec, k: complex) -> np.ndarray:
    """Bloch Hamiltonian at wave number k.

    Real k is wrapped into the reduced zone.  Complex k is accepted as-is,
    which is how the gauge identity E(k, h) = E(k - ih, 0) is checked.
    """
    M = spec.M
    if np.isreal(k):
        k = wrap_k(float(np.real(k)), M)
    H = np.zeros((M, M), dtype=np.complex128)
    H[np.arange(M), np.arange(M)] = spec.potential.values
    JL, JR = spec.J_L, spec.J_R
    i = np.arange(M - 1)
    H[i, i + 1] = JL
    H[i + 1, i] = JR
    # corners add onto the bond terms, which matters for M = 2
    H[0, M - 1] += JR * np.exp(-1j * k * M)
    H[M - 1, 0] += JL * np.exp(1j * k * M)
    return H


def clean_dispersion(M: int, J: float, k: float, h: float, l: int) -> complex:
    """Band l of the potential-free lattice: 2J cos(k + 2 pi l / M - i h)."""
    if int(l) != l or not 0 <= l < M:
        raise ValueError(f"band index must be in 0..{M - 1}, got {l}")
    return complex(2.0 * J * np.cos(k + 2.0 * np.pi * l / M - 1j * h))
