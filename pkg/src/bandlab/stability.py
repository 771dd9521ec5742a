"""Stability operators of the Dyson equation and the T-equation.

Covers (1 - m²S0)^-1 with its decay structure, the kernel
(1 - S|M|²)^-1 S and its max-norm bound 1/(W Im z) + N/W², the energy
identity behind that bound, and the spectral gap of the periodic hopping
form used to control it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import CertificateFailure, EigensolveFailure, InvalidDimensions, SingularSolve
from .profile import VarianceMatrices, zn_distance

RCOND_CUTOFF = 1e-12
DEFAULT_TAU = 0.1


def decay_table(A: np.ndarray) -> np.ndarray:
    """Max |A_ij - δ_ij| at each periodic distance d = 0..N//2."""
    N = A.shape[0]
    idx = np.arange(N)
    dist = zn_distance(idx[:, None] - idx[None, :], N).ravel()
    dev = np.abs(A - np.eye(N)).ravel()
    table = np.zeros(N // 2 + 1)
    np.maximum.at(table, dist, dev)
    return table


@dataclass
class InverseStability:
    matrix: np.ndarray = field(repr=False)
    diag_deviation: float        # max_i |A_ii - 1|
    far_max: float               # max entry beyond far_distance
    far_distance: int
    contraction_norm: float      # ‖((m²S0 + τ)/(1 + τ))²‖_{∞→∞}
    table: np.ndarray = field(repr=False)


def regularized_step(m: complex, S0: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    N = S0.shape[0]
    return (m * m * S0 + tau * np.eye(N)) / (1 + tau)


def inverse_stability(m: complex, S0: np.ndarray, W: int, *, tau: float = DEFAULT_TAU,
                      far_multiplier: float = 8.0, diag_const: float = 10.0,
                      far_tol: float = 1e-8, check: bool = True) -> InverseStability:
    """Dense inverse of 1 - m²S0 plus its structural certificates.

    The (log N)² W cutoff of the asymptotic statement is replaced by
    ``far_multiplier`` * W.
    """
    N = S0.shape[0]
    A = np.eye(N, dtype=complex) - m * m * S0
    try:
        inv = scipy.linalg.inv(A)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSolve(f"1 - m²S0 is singular: {exc}") from exc
    B = regularized_step(m, S0, tau)
    contraction = float(np.abs(B @ B).sum(axis=1).max())
    table = decay_table(inv)
    far_d = int(far_multiplier * W)
    far = float(table[far_d + 1:].max()) if far_d + 1 < table.size else 0.0
    diag_dev = float(np.max(np.abs(np.diag(inv) - 1)))
    out = InverseStability(matrix=inv, diag_deviation=diag_dev, far_max=far, far_distance=far_d,
                           contraction_norm=contraction, table=table)
    if check:
        if not contraction < 1:
            raise CertificateFailure(f"regularized step not contracting: norm {contraction:.6f}")
        if diag_dev > diag_const / W:
            raise CertificateFailure(f"diagonal deviation {diag_dev:.3g} exceeds {diag_const}/W")
        if far > far_tol:
            raise CertificateFailure(f"entries beyond distance {far_d} reach {far:.3g}")
    return out


def neumann_inverse(m: complex, S0: np.ndarray, tau: float = DEFAULT_TAU, terms: int = 200) -> np.ndarray:
    """Partial sum (1/(1+τ)) Σ_k B^k with B = (m²S0 + τ)/(1 + τ)."""
    B = regularized_step(m, S0, tau)
    N = S0.shape[0]
    total = np.eye(N, dtype=complex)
    power = np.eye(N, dtype=complex)
    for _ in range(terms - 1):
        power = power @ B
        total += power
    return total / (1 + tau)


def stability_kernel(S: np.ndarray, abs_M2: np.ndarray):
    """(1 - S|M|²)^-1 S via one LU, with the reciprocal condition number."""
    N = S.shape[0]
    A = np.eye(N) - S * abs_M2[None, :]
    lu, piv = scipy.linalg.lu_factor(A)
    anorm = np.abs(A).sum(axis=0).max()
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond < RCOND_CUTOFF:
        raise SingularSolve(f"1 - S|M|² is numerically singular (rcond={rcond:.3g})")
    K = scipy.linalg.lu_solve((lu, piv), S)
    residual = float(np.max(np.abs(A @ K - S)))
    # the estimator's last bits vary with buffer alignment; it is only an estimate
    return K, float(f"{rcond:.8g}"), residual


@dataclass
class StabilityReport:
    max_norm: float
    bound_rhs: float
    fitted_C: float
    residual: float
    rcond: float
    decay_table: np.ndarray = field(repr=False)
    N: int = 0
    W: int = 0
    im_z: float = 0.0

    def to_dict(self) -> dict:
        return {"N": self.N, "W": self.W, "im_z": self.im_z, "max_norm": self.max_norm,
                "bound_rhs": self.bound_rhs, "fitted_C": self.fitted_C,
                "residual": self.residual, "rcond": self.rcond}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def write_decay_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["distance", "max_abs_entry"])
            for d, v in enumerate(self.decay_table):
                w.writerow([d, repr(float(v))])


def bound_rhs(N: int, W: int, im_z: float) -> float:
    return 1 / (W * im_z) + N / W ** 2


def t_stability_max_norm(V: VarianceMatrices, sol) -> StabilityReport:
    """max-norm of (1 - S_ζ|M|²)^-1 S_ζ against 1/(W Im z) + N/W²."""
    K, rcond, residual = stability_kernel(V.Szeta, np.abs(sol.M) ** 2)
    im_z = sol.point.z.imag
    rhs = bound_rhs(V.N, V.W, im_z)
    max_norm = float(np.abs(K).max())
    inv = inverse_stability(sol.m, V.S0, V.W, check=False)
    return StabilityReport(max_norm=max_norm, bound_rhs=rhs, fitted_C=max_norm / rhs,
                           residual=residual, rcond=rcond, decay_table=inv.table,
                           N=V.N, W=V.W, im_z=im_z)


def quadratic_form_identity(u0: np.ndarray, V: VarianceMatrices, M) -> tuple[float, float]:
    """Both sides of the energy identity for v = (1 - |M|²S)u.

    lhs = Σ(|M_i|⁻² - 1)u_i² + ζ(1 + 1/W)Σ_{i<=W} u_i² + ½Σ S_ij (u_i - u_j)²
    rhs = (u, |M|⁻² v)
    """
    M = getattr(M, "M", M)
    u = np.asarray(u0, dtype=float)
    S = V.Szeta
    W, zeta = V.W, V.zeta
    a2 = np.abs(M) ** 2
    v = u - a2 * (S @ u)
    diff = u[:, None] - u[None, :]
    lhs = (np.sum((1 / a2 - 1) * u * u)
           + zeta * (1 + 1 / W) * np.sum(u[:W] ** 2)
           + 0.5 * np.sum(S * diff * diff))
    rhs = float(np.dot(u, v / a2))
    return float(lhs), rhs


def _periodic_mask(Tlen: int, W: int) -> np.ndarray:
    idx = np.arange(Tlen)
    return zn_distance(idx[:, None] - idx[None, :], Tlen) <= W


def laplacian(weights: np.ndarray) -> np.ndarray:
    """Matrix of the form (u, Fv) = Σ_{i,j} w_ij (u_i - u_j)(v_i - v_j)."""
    w = np.array(weights, dtype=float)
    np.fill_diagonal(w, 0.0)
    return 2 * (np.diag(w.sum(axis=1)) - w)


def hopping_form(Tlen: int, W: int, logN5: float) -> np.ndarray:
    """F0: weight 1/(W logN5) on pairs at periodic distance <= W."""
    if W < 1 or 2 * W >= Tlen:
        raise InvalidDimensions(f"need 1 <= W < Tlen/2, got Tlen={Tlen}, W={W}")
    return laplacian(_periodic_mask(Tlen, W) / (W * logN5))


def f1_form(Tlen: int, W: int, logN5: float) -> np.ndarray:
    """F1: open-chain uniform core 1{|i-j|<=W}/W minus the periodic F0 weights."""
    if W < 1 or 2 * W >= Tlen:
        raise InvalidDimensions(f"need 1 <= W < Tlen/2, got Tlen={Tlen}, W={W}")
    idx = np.arange(Tlen)
    core = (np.abs(idx[:, None] - idx[None, :]) <= W) / W
    return laplacian(core - _periodic_mask(Tlen, W) / (W * logN5))


def fourier_energies(Tlen: int, W: int, logN5: float) -> np.ndarray:
    """Closed-form F0 eigenvalue for each momentum p = 2πn/Tlen, n = 0..Tlen-1."""
    p = 2 * np.pi * np.arange(Tlen) / Tlen
    n = np.arange(-W, W + 1)
    return (2 - 2 * np.cos(np.outer(p, n))).sum(axis=1) / (W * logN5)


def spectral_gap(Tlen: int, W: int, logN5: float, rtol: float = 1e-10) -> tuple[float, float]:
    """Second-smallest eigenvalue of F0 by eigensolve and by Fourier closed form."""
    F0 = hopping_form(Tlen, W, logN5)
    try:
        evals = scipy.linalg.eigvalsh(F0)
    except np.linalg.LinAlgError as exc:
        raise EigensolveFailure(str(exc)) from exc
    e1_eig = float(evals[1])
    e1_fourier = float(fourier_energies(Tlen, W, logN5)[1:].min())
    if abs(e1_eig - e1_fourier) >= rtol * max(1.0, e1_fourier):
        raise CertificateFailure(f"gap mismatch: eig {e1_eig!r} vs Fourier {e1_fourier!r}")
    return e1_eig, e1_fourier


def implied_gap_constant(e1: float, Tlen: int, W: int, logN5: float) -> float:
    """c such that e1 = c W³ / (Tlen² W logN5)."""
    return e1 * Tlen ** 2 * W * logN5 / W ** 3
