"""Time-domain beat signal: depolarization coefficient and polarization degree.

Units throughout: frequencies in MHz, times in ns, so a beat phase is
``2*pi*nu*t*1e-3`` rad.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, InvalidArgument
from .hyperfine import BeatSpectrum, HyperfineSystem, beat_spectrum

__all__ = [
    "MHZ_NS",
    "DetectionGeometry",
    "PulseModel",
    "CS_GEOMETRY",
    "smear_factor",
    "smear_factor_derivative",
    "g2",
    "polarization_general",
    "polarization",
    "polarization_cs",
    "simulate",
]

# angular frequency in rad/ns per MHz
MHZ_NS = 2.0 * np.pi * 1e-3

_SERIES_CUT = 1e-6


@dataclass(frozen=True)
class DetectionGeometry:
    """Alignment detection coefficient ``h2`` and initial alignment ``a0``.

    Defaults are for pumping 6s 2S1/2 -> 8p 2P3/2 and probing the
    8p 2P3/2 -> 5d 2D5/2 stimulated emission in Cs.
    """

    h2: float = -0.25
    a0: float = -0.8

    def __post_init__(self):
        if abs(self.h2 * self.a0) >= 4:
            raise DomainError(f"|h2*a0| must be < 4, got {self.h2 * self.a0}")


CS_GEOMETRY = DetectionGeometry()


@dataclass(frozen=True)
class PulseModel:
    """Rectangular pulse width ``W`` (ns) and pump/probe offset ``dt_offset`` (ns)."""

    W: float = 0.0
    dt_offset: float = 0.0

    def __post_init__(self):
        if not self.W >= 0:
            raise InvalidArgument(f"pulse width W must be >= 0, got {self.W}")


def smear_factor(nu, W):
    """Beat-contrast attenuation ``2[1 - cos(wW)]/(wW)^2`` for rectangular pulses.

    ``nu`` in MHz, ``W`` in ns; both broadcast. Returns 1 for ``wW < 1e-6``.
    """
    x = np.abs(MHZ_NS * np.asarray(nu, dtype=float) * np.asarray(W, dtype=float))
    # 2(1 - cos x)/x^2 == (sin(x/2)/(x/2))^2, which has no cancellation near 0
    out = np.sinc(x / (2.0 * np.pi)) ** 2
    out = np.where(x < _SERIES_CUT, 1.0, out)
    return out if out.ndim else float(out)


def _smear_dx(x):
    # d/dx of (sin(x/2)/(x/2))^2
    h = 0.5 * np.asarray(x, dtype=float)
    u = np.sinc(h / np.pi)
    small = np.abs(h) < 1e-3
    hs = np.where(small, 1.0, h)
    du = np.where(
        small,
        -h / 3.0 + h**3 / 30.0 - h**5 / 840.0,
        (hs * np.cos(hs) - np.sin(hs)) / hs**2,
    )
    return u * du  # 2u * du/dh * dh/dx, dh/dx = 1/2


def smear_factor_derivative(nu, W):
    """Partial derivatives ``(d/dnu, d/dW)`` of :func:`smear_factor`."""
    nu = np.asarray(nu, dtype=float)
    W = np.asarray(W, dtype=float)
    dx = _smear_dx(MHZ_NS * nu * W)
    return dx * MHZ_NS * W, dx * MHZ_NS * nu


def g2(spectrum: BeatSpectrum, pulse: PulseModel, t):
    """Depolarization coefficient at delay ``t`` (ns, scalar or array).

    Only the oscillating terms are attenuated by the pulse width; the
    offset ``pulse.dt_offset`` is added to ``t`` inside the cosines.
    """
    t_arr = np.asarray(t, dtype=float)
    out = np.full(t_arr.shape, spectrum.constant)
    t_eff = t_arr + pulse.dt_offset
    for c in spectrum.components:
        s = smear_factor(c.nu, pulse.W)
        out = out + c.amplitude * s * np.cos(MHZ_NS * c.nu * t_eff)
    return out if out.ndim else float(out)


def polarization_general(geom: DetectionGeometry, a):
    """Linear polarization degree ``3 h2 a / (4 + h2 a)`` for alignment ``a``."""
    ha = geom.h2 * np.asarray(a, dtype=float)
    den = 4.0 + ha
    if np.any(den <= 0):
        raise DomainError("4 + h2*a must be positive")
    out = 3.0 * ha / den
    return out if out.ndim else float(out)


def polarization(spectrum: BeatSpectrum, pulse: PulseModel, t, geom: DetectionGeometry = CS_GEOMETRY):
    return polarization_general(geom, g2(spectrum, pulse, t) * geom.a0)


def polarization_cs(spectrum: BeatSpectrum, pulse: PulseModel, t):
    """P_L(t) for the Cs J=3/2 -> 5/2 probe; algebraically ``3g/(20+g)``."""
    return polarization(spectrum, pulse, t, CS_GEOMETRY)


def simulate(
    sys: HyperfineSystem,
    pulse: PulseModel,
    times: Sequence[float],
    noise_sigma: float | None = None,
    seed: int | None = None,
    geom: DetectionGeometry = CS_GEOMETRY,
) -> list[tuple[float, float, float | None]]:
    """Synthetic ``(t, P_L, sigma)`` records.

    Without ``noise_sigma`` (or with 0) the values are exact model values
    and sigma is None. With it, independent Gaussian noise is added from a generator
    seeded by ``seed``.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise InvalidArgument("times must be nonempty")
    if noise_sigma is not None and noise_sigma < 0:
        raise InvalidArgument(f"noise_sigma must be >= 0, got {noise_sigma}")
    pl = np.atleast_1d(polarization(beat_spectrum(sys), pulse, times, geom))
    if not noise_sigma:
        return [(float(t), float(p), None) for t, p in zip(times, pl)]
    rng = np.random.default_rng(seed)
    noisy = pl + noise_sigma * rng.standard_normal(pl.shape)
    return [(float(t), float(p), float(noise_sigma)) for t, p in zip(times, noisy)]
