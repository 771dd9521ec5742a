"""Semicircle-law Stieltjes transform and its boundary-value identities."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import CertificateFailure, EdgePoint

DEFAULT_KAPPA = 0.1


@dataclass(frozen=True)
class SpectralPoint:
    """Spectral parameters (z, z̃); e = Re z̃ is the bulk energy."""

    z: complex
    ztilde: complex
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self):
        object.__setattr__(self, "z", complex(self.z))
        object.__setattr__(self, "ztilde", complex(self.ztilde))
        if not self.z.imag > 0:
            raise ValueError(f"Im z must be positive, got {self.z}")
        if self.ztilde.imag < 0:
            raise ValueError(f"Im z̃ must be nonnegative, got {self.ztilde}")
        if not abs(self.e) < 2 - self.kappa:
            raise EdgePoint(f"|Re z̃| = {abs(self.e)} is not below 2 - kappa = {2 - self.kappa}")

    @property
    def e(self) -> float:
        return self.ztilde.real

    def block_parameters(self, N: int, W: int):
        """Vector z_i: z on the first W indices, z̃ elsewhere."""
        zi = np.full(N, self.ztilde, dtype=complex)
        zi[:W] = self.z
        return zi

    def to_dict(self) -> dict:
        return {"z": [self.z.real, self.z.imag],
                "ztilde": [self.ztilde.real, self.ztilde.imag],
                "kappa": self.kappa}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralPoint":
        return cls(complex(*d["z"]), complex(*d["ztilde"]), d.get("kappa", DEFAULT_KAPPA))


def msc(z: complex) -> complex:
    """Root of m^2 + z m + 1 = 0 with Im m >= 0.

    On the real axis (|Re z| < 2) this is the boundary value at z + i0+,
    which the branch selection picks out exactly.
    """
    z = complex(z)
    if z.imag < 0:
        raise ValueError(f"msc needs Im z >= 0, got {z}")
    if z.imag == 0 and abs(z.real) >= 2:
        raise EdgePoint(f"boundary value at z={z.real} is at or beyond the spectral edge")
    s = cmath.sqrt(z * z - 4)
    # large root without cancellation, small root from the product m1 m2 = 1
    big = (-z - s) / 2 if abs(-z - s) >= abs(-z + s) else (-z + s) / 2
    small = 1 / big
    if z.imag == 0:
        # conjugate pair: take the upper one and clean the real part
        r = -z.real / 2
        i = math.sqrt(4 - z.real * z.real) / 2
        return complex(r, i)
    return big if big.imag > small.imag else small


def msc_bulk_identities(a: float, kappa: float = DEFAULT_KAPPA, atol: float = 1e-10):
    """Return (Re m/(1-m²), Im m/(1-m²), Re m²/(1-m²)) at a + i0+ and check them."""
    if abs(a) >= 2:
        raise EdgePoint(f"a={a} is not in the bulk")
    if abs(a) >= 2 - kappa:
        raise EdgePoint(f"|a|={abs(a)} is within kappa={kappa} of the edge")
    m = msc(complex(a, 0.0))
    q = m / (1 - m * m)
    r = m * m / (1 - m * m)
    out = (q.real, q.imag, r.real)
    expected = (0.0, 1 / math.sqrt(4 - a * a), -0.5)
    if any(abs(x - y) > atol for x, y in zip(out, expected)):
        raise CertificateFailure(f"bulk identities fail at a={a}: {out} vs {expected}")
    return out
