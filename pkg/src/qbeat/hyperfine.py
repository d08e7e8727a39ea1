"""Hyperfine level shifts and rank-2 quantum-beat spectra.

Energies and frequencies are in MHz. Shifts are linear in the coupling
constants, ``E_F = a_F * A + b_F * B``, and the rational coefficients
``(a_F, b_F)`` are exposed so that frequency differences can be checked
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from numbers import Real

from .angular import HalfInt, HalfIntLike, as_halfint, sixj_exact_square
from .errors import DomainError

__all__ = [
    "HyperfineSystem",
    "BeatComponent",
    "BeatSpectrum",
    "CS_8P32",
    "f_values",
    "shift_coefficients",
    "energy_shift",
    "beat_spectrum",
]

_RANK = 2


@dataclass(frozen=True)
class HyperfineSystem:
    """Nuclear spin ``I``, electronic ``J`` and coupling constants (MHz).

    ``A`` and ``B`` may be floats or ``Fraction`` objects; with fractions
    every derived energy stays exact.
    """

    I: HalfInt
    J: HalfInt
    A: Real = 0.0
    B: Real = 0.0

    def __post_init__(self):
        object.__setattr__(self, "I", as_halfint(self.I))
        object.__setattr__(self, "J", as_halfint(self.J))
        if self.I.twice < 0 or self.J.twice < 0:
            raise DomainError(f"negative angular momentum: I={self.I}, J={self.J}")
        if self.B != 0 and not self.has_quadrupole:
            raise DomainError(
                f"B must be 0 when I < 1 or J < 1 (I={self.I}, J={self.J}, B={self.B})"
            )

    @property
    def has_quadrupole(self) -> bool:
        return self.I.twice >= 2 and self.J.twice >= 2

    def with_constants(self, A: Real, B: Real) -> "HyperfineSystem":
        return HyperfineSystem(self.I, self.J, A, B)


# The Cs 8p 2P3/2 level with the fitted constants reported for it.
CS_8P32 = HyperfineSystem(HalfInt(7), HalfInt(3), 7.42, 0.14)


@dataclass(frozen=True)
class BeatComponent:
    """One beat term ``amplitude * cos(2 pi nu t)`` between levels F < F'.

    ``nu_per_A`` and ``nu_per_B`` give the signed splitting
    ``E(F') - E(F)`` per unit A and per unit B; ``nu`` is its magnitude for
    the system the spectrum was built from.
    """

    F: HalfInt
    Fprime: HalfInt
    nu: float
    amplitude: float
    amplitude_exact: Fraction = field(repr=False)
    nu_per_A: Fraction = field(repr=False)
    nu_per_B: Fraction = field(repr=False)


@dataclass(frozen=True)
class BeatSpectrum:
    constant: float
    components: tuple[BeatComponent, ...]
    constant_exact: Fraction = field(repr=False)
    system: HyperfineSystem | None = field(default=None, repr=False)

    @property
    def total_exact(self) -> Fraction:
        """Exact g2(0); equals 1 for every valid (I, J)."""
        return self.constant_exact + sum(
            (c.amplitude_exact for c in self.components), Fraction(0)
        )


def f_values(I: HalfIntLike, J: HalfIntLike) -> list[HalfInt]:
    """Total angular momenta F = |I-J| ... I+J, ascending."""
    i2, j2 = as_halfint(I).twice, as_halfint(J).twice
    return [HalfInt(f2) for f2 in range(abs(i2 - j2), i2 + j2 + 1, 2)]


@lru_cache(maxsize=4096)
def _shift_coeffs2(i2: int, j2: int, f2: int) -> tuple[Fraction, Fraction]:
    I, J, F = Fraction(i2, 2), Fraction(j2, 2), Fraction(f2, 2)
    K = F * (F + 1) - I * (I + 1) - J * (J + 1)
    a = K / 2
    if i2 >= 2 and j2 >= 2:
        b = (Fraction(3, 2) * K * (K + 1) - 2 * I * (I + 1) * J * (J + 1)) / (
            2 * I * (2 * I - 1) * 2 * J * (2 * J - 1)
        )
    else:
        b = Fraction(0)
    return a, b


def shift_coefficients(I: HalfIntLike, J: HalfIntLike, F: HalfIntLike) -> tuple[Fraction, Fraction]:
    """Exact ``(a, b)`` with ``E_F = a*A + b*B`` (Casimir formula).

    The quadrupole coefficient is 0 when I < 1 or J < 1.
    """
    i2, j2, f2 = as_halfint(I).twice, as_halfint(J).twice, as_halfint(F).twice
    if f2 not in range(abs(i2 - j2), i2 + j2 + 1, 2):
        raise DomainError(f"F={as_halfint(F)} is not a coupled value of I={as_halfint(I)}, J={as_halfint(J)}")
    return _shift_coeffs2(i2, j2, f2)


def energy_shift(sys: HyperfineSystem, F: HalfIntLike):
    """Hyperfine shift of level F in MHz.

    Exact (a Fraction) when ``sys.A`` and ``sys.B`` are Fractions.
    """
    if sys.B != 0 and not sys.has_quadrupole:
        raise DomainError("quadrupole shift undefined for I < 1 or J < 1")
    a, b = shift_coefficients(sys.I, sys.J, F)
    return a * sys.A + b * sys.B


@lru_cache(maxsize=1024)
def _amplitudes2(i2: int, j2: int):
    if j2 < _RANK:
        # J < 1 carries no rank-2 alignment; every 6-j vanishes and the
        # ratio A(t)/A(0) is taken as 1 with no beats
        return Fraction(1), ()
    I2 = HalfInt(i2)
    J2 = HalfInt(j2)
    fs = f_values(I2, J2)
    weight = Fraction(1, i2 + 1)  # 1/(2I+1)
    constant = Fraction(0)
    pairs = []
    for n, F in enumerate(fs):
        dim = F.twice + 1
        constant += dim * dim * weight * sixj_exact_square(F, F, _RANK, J2, J2, I2)
        for Fp in fs[n + 1:]:
            sq = sixj_exact_square(F, Fp, _RANK, J2, J2, I2)
            if sq == 0:
                continue
            # (F, F') and (F', F) both appear in the ordered double sum
            amp = 2 * dim * (Fp.twice + 1) * weight * sq
            pairs.append((F, Fp, amp))
    return constant, tuple(pairs)


def beat_spectrum(sys: HyperfineSystem) -> BeatSpectrum:
    """Constant term and beat components of the rank-2 depolarization coefficient.

    Components are ordered by (F, F') and carry the factor 2 from the two
    orderings of each pair, so ``constant + sum(amplitudes) == 1``. For
    J < 1 no alignment exists and the spectrum is the constant 1.
    """
    constant, pairs = _amplitudes2(sys.I.twice, sys.J.twice)
    comps = []
    for F, Fp, amp in pairs:
        aF, bF = shift_coefficients(sys.I, sys.J, F)
        aP, bP = shift_coefficients(sys.I, sys.J, Fp)
        per_a, per_b = aP - aF, bP - bF
        nu = abs(float(per_a * sys.A + per_b * sys.B))
        comps.append(
            BeatComponent(
                F=F,
                Fprime=Fp,
                nu=nu,
                amplitude=float(amp),
                amplitude_exact=amp,
                nu_per_A=per_a,
                nu_per_B=per_b,
            )
        )
    return BeatSpectrum(
        constant=float(constant),
        components=tuple(comps),
        constant_exact=constant,
        system=sys,
    )
