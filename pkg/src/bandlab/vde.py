"""Contraction solver for the vector self-consistent equation of M.

Writing M = m + x with m = msc(z̃ + i0+), the equation is equivalent to

    (1 - m² S0) x = m²(g + z_i - z̃) + q(x) - ζ m³ Σ1 - ζ m² Σx,
    q(x) = x² / (m + x),

and the solver iterates this map with one dense LU of (1 - m² S0).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.linalg

from .errors import (
    CertificateFailure,
    DegenerateInputs,
    FlatProfile,
    MaxIterations,
    NonContraction,
    SingularStability,
)
from .profile import PerturbationSpec, VarianceMatrices, build_variance_matrices, to_zn, zn_distance
from .scalar import SpectralPoint, msc

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.05
DEFAULT_TOL = 1e-13


def sigma_apply(x: np.ndarray, W: int) -> np.ndarray:
    """Σx without forming Σ: (Σx)_i = (sum_{j<W} x_j + x_i)/W on the block."""
    out = np.zeros_like(x)
    out[:W] = (x[:W].sum() + x[:W]) / W
    return out


def stability_factor(m: complex, S0: np.ndarray):
    """LU factorization of 1 - m² S0, reusable across iterations and solves."""
    A = np.eye(S0.shape[0], dtype=complex) - (m * m) * S0
    try:
        with np.errstate(all="raise"):
            lu = scipy.linalg.lu_factor(A, check_finite=True)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise SingularStability(f"1 - m²S0 factorization failed: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) < 1e-14:
        raise SingularStability("1 - m²S0 is numerically singular")
    return lu


def dyson_residual(M: np.ndarray, V: VarianceMatrices, g: np.ndarray, zi: np.ndarray) -> float:
    return float(np.max(np.abs(1 / M + zi + g + V.Szeta @ M)))


@dataclass
class DysonSolution:
    M: np.ndarray = field(repr=False)
    m: complex
    iterations: int
    residual: float
    contraction_rate: float
    point: SpectralPoint
    zeta: float
    g: np.ndarray = field(repr=False)
    W: int
    step_norms: list = field(default_factory=list, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.M - self.m

    @property
    def N(self) -> int:
        return self.M.shape[0]

    @property
    def perturbation_size(self) -> float:
        """ζ + ‖g‖∞ + |z - z̃|."""
        return self.zeta + float(np.max(np.abs(self.g), initial=0.0)) + abs(self.point.z - self.point.ztilde)

    @property
    def min_im_M(self) -> float:
        # diagnostic only; positivity of Im M is not asserted anywhere
        return float(self.M.imag.min())

    def to_dict(self) -> dict:
        return {
            "point": self.point.to_dict(),
            "pert": {"zeta": self.zeta, "g": [float(v) for v in self.g]},
            "residual": self.residual,
            "iterations": self.iterations,
            "M": [[float(v.real), float(v.imag)] for v in self.M],
        }


def solve_M(V: VarianceMatrices, pert: PerturbationSpec, point: SpectralPoint,
            tol: float = DEFAULT_TOL, max_iter: int = 500, *, x0: np.ndarray | None = None,
            threshold: float = DEFAULT_THRESHOLD, factor=None) -> DysonSolution:
    """Solve for M by the contraction iteration started at ``x0`` (default 0).

    ``factor`` may carry a precomputed :func:`stability_factor` for the same z̃.
    """
    if tol < 1e-13:
        raise ValueError(f"tol must be >= 1e-13, got {tol}")
    if abs(pert.zeta - V.zeta) > 0:
        raise ValueError(f"pert.zeta={pert.zeta} does not match V.zeta={V.zeta}")
    N, W = V.N, V.W
    zeta = V.zeta
    g = pert.g_vector(N)
    zt = point.ztilde
    size = zeta + pert.g_sup + abs(point.z - zt)
    if size > threshold:
        log.warning("perturbation size %.3g exceeds contraction threshold %.3g", size, threshold)

    m = msc(zt)
    zi = point.block_parameters(N, W)
    lu = factor if factor is not None else stability_factor(m, V.S0)
    base = m * m * (g + (zi - zt)) - zeta * m ** 3 * sigma_apply(np.ones(N, dtype=complex), W)

    x = np.zeros(N, dtype=complex) if x0 is None else np.asarray(x0, dtype=complex).copy()
    prev_step = None
    rising = 0
    steps: list[float] = []
    ratios: list[float] = []
    for k in range(1, max_iter + 1):
        with np.errstate(all="ignore"):
            rhs = base + x * x / (m + x) - zeta * m * m * sigma_apply(x, W)
        if not np.all(np.isfinite(rhs)):
            raise NonContraction(f"iterate left the domain at step {k}")
        x_new = scipy.linalg.lu_solve(lu, rhs)
        step = float(np.max(np.abs(x_new - x)))
        steps.append(step)
        x = x_new
        M = m + x
        with np.errstate(all="ignore"):
            res = dyson_residual(M, V, g, zi)
        if not np.isfinite(res):
            raise NonContraction(f"residual not finite at step {k}")
        if res < tol:
            rate = float(np.median(ratios[-5:])) if ratios else 0.0
            return DysonSolution(M=M, m=m, iterations=k, residual=res, contraction_rate=rate,
                                 point=point, zeta=zeta, g=g, W=W, step_norms=steps)
        if prev_step is not None and prev_step > 0:
            ratio = step / prev_step
            ratios.append(ratio)
            rising = rising + 1 if ratio > 1 else 0
            if rising >= 5:
                raise NonContraction(
                    f"iterate differences grew for 5 consecutive steps (last ratio {ratio:.3g})"
                )
        prev_step = step
    raise MaxIterations(f"residual {res:.3g} > tol {tol:.3g} after {max_iter} iterations")


def lipschitz_check(sol1: DysonSolution, sol2: DysonSolution, bound: float = 10.0) -> float:
    """‖M' - M‖∞ divided by the total input change; must stay below ``bound``."""
    denom = (float(np.max(np.abs(sol1.g - sol2.g), initial=0.0))
             + abs(sol1.point.z - sol2.point.z)
             + abs(sol1.point.ztilde - sol2.point.ztilde)
             + abs(sol1.zeta - sol2.zeta))
    if denom < 1e-14:
        raise DegenerateInputs("inputs coincide; Lipschitz ratio undefined")
    ratio = float(np.max(np.abs(sol1.M - sol2.M))) / denom
    if not ratio < bound:
        raise CertificateFailure(f"Lipschitz ratio {ratio:.3g} exceeds {bound}")
    return ratio


@dataclass
class DecayProfile:
    distance: np.ndarray = field(repr=False)
    abs_x: np.ndarray = field(repr=False)
    modulus_gap: np.ndarray = field(repr=False)   # ||M_n|² - |m|²|
    rate: float        # c in exp(-c |n| / W)
    prefactor: float   # C, relative to the perturbation size
    envelope_ratio: float

    def envelope(self) -> tuple[np.ndarray, np.ndarray]:
        """Largest |x| at distance >= d, for each realized distance d."""
        order = np.argsort(self.distance)
        d = self.distance[order]
        a = self.abs_x[order]
        env = np.maximum.accumulate(a[::-1])[::-1]
        return d, env


def decay_of_x(sol: DysonSolution, center: int = 0, fit_range: tuple[float, float] = (1.0, 5.0)) -> DecayProfile:
    """Exponential decay fit of |x_n| for |n - center| in [lo·W, hi·W].

    ``center`` is a site of Z_N; the default 0 is the origin next to the W-block.
    """
    if sol.zeta == 0 and sol.point.z == sol.point.ztilde and not np.any(sol.g):
        raise FlatProfile("unperturbed solution: x vanishes identically")
    N, W = sol.N, sol.W
    dist = zn_distance(to_zn(np.arange(N), N) - center, N).astype(float)
    ax = np.abs(sol.x)
    gap = np.abs(np.abs(sol.M) ** 2 - abs(sol.m) ** 2)
    lo, hi = fit_range[0] * W, fit_range[1] * W
    sel = (dist >= lo) & (dist <= hi) & (ax > 1e-14 * ax.max())
    if sel.sum() < 3:
        raise FlatProfile("too few resolvable points in the fit window")
    slope, _ = np.polyfit(dist[sel] / W, np.log(ax[sel]), 1)
    rate = float(-slope)
    scale = sol.perturbation_size
    prefactor = float(np.max(gap * np.exp(rate * dist / W)) / scale)
    near = ax[dist <= lo].max() if np.any(dist <= lo) else ax.max()
    far = ax[dist >= hi].max() if np.any(dist >= hi) else 0.0
    return DecayProfile(distance=dist, abs_x=ax, modulus_gap=gap, rate=rate,
                        prefactor=prefactor, envelope_ratio=float(far / near))


@dataclass
class SumRule:
    value: float
    lower_bound: float
    implied_c: float | None
    slack: float


def sum_rule_check(sol: DysonSolution, eps_star: float = 0.2, eps_upstar: float = 0.01,
                   slack_mult: float = 1.0) -> SumRule:
    """(1/W) Σ_n (|m|²|M_n|⁻² - 1) against c(Im z - Im z̃) - ζ - slack."""
    if np.any(sol.g):
        raise ValueError("sum rule applies to g = 0 only")
    N, W = sol.N, sol.W
    value = float(np.sum(abs(sol.m) ** 2 / np.abs(sol.M) ** 2 - 1) / W)
    slack = slack_mult * (N ** (-1.5 * eps_star) + N ** (-eps_upstar) * sol.point.ztilde.imag)
    gap = sol.point.z.imag - sol.point.ztilde.imag
    if gap > 0:
        implied_c = (value + sol.zeta + slack) / gap
        if not implied_c > 0:
            raise CertificateFailure(f"sum rule: implied constant {implied_c:.3g} is not positive")
    else:
        implied_c = None
        if value < -sol.zeta - slack:
            raise CertificateFailure(f"sum rule: {value:.3g} below -zeta - slack")
    return SumRule(value=value, lower_bound=-sol.zeta - slack, implied_c=implied_c, slack=slack)


def perturbation_sweep(profile, e: float, zeta_values, g_values, dz_values, *,
                       im_ztilde: float = 0.0, tol: float = DEFAULT_TOL,
                       threshold: float = DEFAULT_THRESHOLD) -> tuple[float, list[dict]]:
    """Fit one constant C with ‖x‖∞ <= C(|z - z̃| + ζ + ‖g‖∞) over a product grid.

    g is taken as a smooth profile of sup-norm ``g_value``; z = z̃ + i·dz.
    """
    N = profile.N
    ztilde = complex(e, im_ztilde)
    m = msc(ztilde)
    Vs = {zeta: build_variance_matrices(profile, zeta) for zeta in zeta_values}
    lu = stability_factor(m, Vs[zeta_values[0]].S0)
    shape = np.cos(2 * np.pi * np.arange(N) / N)
    rows = []
    for zeta, gv, dz in product(zeta_values, g_values, dz_values):
        point = SpectralPoint(ztilde + 1j * dz, ztilde)
        pert = PerturbationSpec(zeta=zeta, g=gv * shape)
        sol = solve_M(Vs[zeta], pert, point, tol=tol, threshold=threshold, factor=lu)
        size = zeta + gv + dz
        rows.append({"zeta": zeta, "g": gv, "dz": dz, "x_sup": float(np.max(np.abs(sol.x))),
                     "ratio": float(np.max(np.abs(sol.x))) / size, "iterations": sol.iterations})
    return max(r["ratio"] for r in rows), rows
