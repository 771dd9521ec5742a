"""Banded variance profiles and the perturbation matrices S0, Sigma, S_zeta.

Index convention: storage indices run over 0..N-1.  Storage index ``i``
is the lattice site ``p = i + 1`` of [[1, N]], represented in
Z_N = Z ∩ (-N/2, N/2] by :func:`to_zn`.  The W-block [[1, W]] is the first
``W`` storage indices.  S0 is translation invariant in Z_N, so its entry
depends only on ``(i - j) mod N``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import InvalidDimensions, KernelViolation, ZetaTooLarge
from .scalar import SpectralPoint

KernelKind = Literal["uniform", "triangular", "truncated-gaussian"]
KERNELS: tuple[str, ...] = ("uniform", "triangular", "truncated-gaussian")

# support radius of each kernel, in units of W
_SUPPORT = {"uniform": 1, "triangular": 2, "truncated-gaussian": 3}


def to_zn(i, N: int):
    """Map storage index (0-based) to its representative in (-N/2, N/2]."""
    p = np.asarray(i) + 1
    return np.where(p <= N // 2, p, p - N)


def zn_distance(x, N: int):
    """Periodic distance |x| on Z_N for an integer offset ``x``."""
    x = np.mod(np.asarray(x), N)
    return np.minimum(x, N - x)


@dataclass(frozen=True)
class BandProfile:
    N: int
    W: int
    kind: str
    # f(x) for x = 0..N//2; symmetry gives negative x
    half_kernel: np.ndarray = field(repr=False)
    c_s: float
    C_s: float

    def f(self, x) -> np.ndarray:
        """Kernel value at (possibly negative, possibly wrapped) offset x."""
        return self.half_kernel[zn_distance(x, self.N)]

    @property
    def kernel(self) -> np.ndarray:
        """Kernel on storage offsets 0..N-1, i.e. f((k) mod N)."""
        return self.f(np.arange(self.N))

    @property
    def support_radius(self) -> int:
        nz = np.nonzero(self.half_kernel)[0]
        return int(nz.max())

    def satisfies_band_bounds(self, c_s: float, C_s: float) -> bool:
        x = np.arange(self.N // 2 + 1)
        f = self.half_kernel
        W = self.W
        lower = c_s / W * (x <= W)
        upper = C_s / W * (x <= C_s * W)
        return bool(np.all(f >= lower - 1e-15) and np.all(f <= upper + 1e-15))

    def to_dict(self) -> dict:
        radius = min(int(math.ceil(self.C_s * self.W)), self.N // 2)
        return {
            "N": self.N,
            "W": self.W,
            "kind": self.kind,
            "c_s": self.c_s,
            "C_s": self.C_s,
            "kernel": [float(v) for v in self.half_kernel[: radius + 1]],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "BandProfile":
        N, W = int(d["N"]), int(d["W"])
        half = np.zeros(N // 2 + 1)
        vals = np.asarray(d["kernel"], dtype=float)
        half[: len(vals)] = vals
        return cls(N=N, W=W, kind=d["kind"], half_kernel=half,
                   c_s=float(d["c_s"]), C_s=float(d["C_s"]))


def _raw_kernel(kind: str, W: int, x: np.ndarray) -> np.ndarray:
    if kind == "uniform":
        return (x <= W).astype(float)
    if kind == "triangular":
        return np.clip(2 * W + 1 - x, 0, None).astype(float)
    if kind == "truncated-gaussian":
        return np.where(x <= 3 * W, np.exp(-0.5 * (x / W) ** 2), 0.0)
    raise ValueError(f"unknown kernel kind {kind!r}; expected one of {KERNELS}")


def build_profile(N: int, W: int, kind: KernelKind = "uniform") -> BandProfile:
    if W < 1 or 2 * W >= N:
        raise InvalidDimensions(f"need 1 <= W < N/2, got N={N}, W={W}")
    x = np.arange(N // 2 + 1)
    half = _raw_kernel(kind, W, x)
    # each x in 1..ceil(N/2)-1 has two lattice points; x = N/2 (N even) only one
    mult = np.full(x.shape, 2.0)
    mult[0] = 1.0
    if N % 2 == 0:
        mult[-1] = 1.0
    half = half / np.dot(mult, half)

    radius = int(np.nonzero(half)[0].max())
    c_s = float(half[: W + 1].min() * W)
    C_s = float(max(half.max() * W, radius / W))
    profile = BandProfile(N=N, W=W, kind=kind, half_kernel=half, c_s=c_s, C_s=C_s)
    if c_s <= 0 or not profile.satisfies_band_bounds(c_s, C_s):
        raise KernelViolation(f"{kind} kernel violates band bounds at N={N}, W={W}")
    return profile


@dataclass(frozen=True)
class VarianceMatrices:
    profile: BandProfile
    zeta: float
    S0: np.ndarray = field(repr=False)
    Sigma: np.ndarray = field(repr=False)
    Szeta: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.profile.N

    @property
    def W(self) -> int:
        return self.profile.W


def circulant_s0(profile: BandProfile) -> np.ndarray:
    N = profile.N
    idx = np.arange(N)
    return profile.f(idx[:, None] - idx[None, :])


def sigma_matrix(N: int, W: int) -> np.ndarray:
    Sigma = np.zeros((N, N))
    Sigma[:W, :W] = 1.0 / W
    Sigma[np.arange(W), np.arange(W)] = 2.0 / W
    return Sigma


def build_variance_matrices(profile: BandProfile, zeta: float = 0.0) -> VarianceMatrices:
    if zeta < 0:
        raise ValueError(f"zeta must be nonnegative, got {zeta}")
    S0 = circulant_s0(profile)
    Sigma = sigma_matrix(profile.N, profile.W)
    Szeta = S0 - zeta * Sigma
    if Szeta.min() < 0:
        raise ZetaTooLarge(
            f"zeta={zeta} makes S_zeta negative (min entry {Szeta.min():.3g})"
        )
    for M in (S0, Sigma, Szeta):
        M.setflags(write=False)
    return VarianceMatrices(profile=profile, zeta=float(zeta), S0=S0, Sigma=Sigma, Szeta=Szeta)


def max_admissible_zeta(profile: BandProfile) -> float:
    """Largest zeta keeping S_zeta entrywise nonnegative."""
    W = profile.W
    block = profile.f(np.arange(W)[:, None] - np.arange(W)[None, :])
    weights = np.where(np.eye(W, dtype=bool), 2.0 / W, 1.0 / W)
    return float((block / weights).min())


@dataclass(frozen=True)
class PerturbationSpec:
    zeta: float = 0.0
    g: np.ndarray | None = None

    def __post_init__(self):
        if self.zeta < 0:
            raise ValueError(f"zeta must be nonnegative, got {self.zeta}")

    def g_vector(self, N: int) -> np.ndarray:
        if self.g is None:
            return np.zeros(N)
        g = np.asarray(self.g, dtype=float)
        if g.shape != (N,):
            raise InvalidDimensions(f"g has shape {g.shape}, expected ({N},)")
        return g

    @property
    def g_sup(self) -> float:
        return 0.0 if self.g is None else float(np.max(np.abs(self.g), initial=0.0))

    def advisory_flags(self, W: int, T: float) -> dict:
        return {"g_small": self.g_sup <= W ** -0.75, "zeta_le_T": self.zeta <= T}

    def to_dict(self) -> dict:
        return {"zeta": self.zeta, "g": None if self.g is None else [float(v) for v in self.g]}


@dataclass(frozen=True)
class RegimeReport:
    eta_lower: float
    eta_upper: float
    r: float
    T: float
    log_N_W: float
    exponents_ok: bool
    spectral_ok: bool
    weak_ok: bool
    strong_ok: bool
    flags: dict

    @property
    def base_ok(self) -> bool:
        return self.spectral_ok


def _le(a: float, b: float) -> bool:
    return a <= b * (1 + 1e-12) + 1e-300


def validate_regime(profile: BandProfile, point: SpectralPoint, pert: PerturbationSpec,
                    eps_star: float, eps_upstar: float) -> RegimeReport:
    """Advisory check of the local-law parameter window; never raises."""
    N, W = profile.N, profile.W
    eta_lower = N ** -eps_star
    eta_upper = N ** -eps_upstar
    r = N ** (-eps_star + 3 * eps_upstar)
    T = N ** (-eps_star + eps_upstar)
    z = point.z
    flags = {
        "re_z_near_e": _le(abs(z.real - point.e), r),
        "im_z_lower": _le(eta_lower, z.imag),
        "im_z_upper": _le(z.imag, eta_upper),
        "zeta_range": 0 <= pert.zeta and _le(pert.zeta, T),
        "g_small": _le(pert.g_sup, W ** -0.75),
    }
    log_w = math.log(W) / math.log(N)
    weak = log_w >= max(6 / 7 + eps_upstar, 3 / 4 + 0.75 * eps_star + eps_upstar)
    strong = log_w >= max(3 / 4 + eps_upstar, 1 / 2 + eps_star + eps_upstar)
    return RegimeReport(
        eta_lower=eta_lower, eta_upper=eta_upper, r=r, T=T, log_N_W=log_w,
        exponents_ok=0 < eps_upstar <= eps_star / 20,
        spectral_ok=all(flags.values()),
        weak_ok=weak, strong_ok=strong, flags=flags,
    )
