"""Generalized resolvents G(z, z̃) = (H - Z)^-1, minors, and the T-matrix.

Minors keep the original index names: a minor is stored as a full N×N
array whose rows and columns in the removed set are zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import SingularMatrix, SingularMinor
from .profile import VarianceMatrices
from .scalar import SpectralPoint
from .stability import stability_kernel

NEAR_SINGULAR_COND = 1e10


def spectral_diagonal(N: int, W: int, z: complex, zt: complex) -> np.ndarray:
    d = np.full(N, complex(zt))
    d[:W] = z
    return d


def _as_array(H) -> np.ndarray:
    return getattr(H, "H", H)


def gen_resolvent_matrix(H, W: int, z: complex, zt: complex):
    """(H - Z)^-1 with Z = diag(z on the first W indices, z̃ elsewhere).

    Returns (G, A, rcond) where A = H - Z.  No validation of z, z̃.
    """
    H = _as_array(H)
    N = H.shape[0]
    A = H.astype(complex) - np.diag(spectral_diagonal(N, W, z, zt))
    lu, piv, info = lapack.zgetrf(A)
    if info > 0 or not np.all(np.isfinite(lu)):
        raise SingularMatrix(f"zero pivot at position {info} in H - Z")
    anorm = np.abs(A).sum(axis=0).max()
    rcond, _ = lapack.zgecon(lu, anorm, norm="1")
    G = scipy.linalg.lu_solve((lu, piv), np.eye(N, dtype=complex))
    return G, A, float(rcond)


@dataclass
class GenResolvent:
    G: np.ndarray = field(repr=False)
    point: SpectralPoint
    inv_residual: float
    cond: float
    W: int
    A: np.ndarray = field(repr=False)   # H - Z, i.e. G^-1

    @property
    def near_singular(self) -> bool:
        return self.cond > NEAR_SINGULAR_COND

    @property
    def N(self) -> int:
        return self.G.shape[0]


def resolvent(Hs, point: SpectralPoint, W: int | None = None) -> GenResolvent:
    """Generalized resolvent of a sampled matrix (or a plain array with W given)."""
    if W is None:
        W = Hs.V.W
    G, A, rcond = gen_resolvent_matrix(Hs, W, point.z, point.ztilde)
    N = G.shape[0]
    inv_residual = float(np.max(np.abs(A @ G - np.eye(N))))
    cond = np.inf if rcond == 0 else 1 / rcond
    return GenResolvent(G=G, point=point, inv_residual=inv_residual, cond=cond, W=W, A=A)


def minor_first(A: np.ndarray, T) -> np.ndarray:
    """A^[T]: rows and columns in T set to zero, names kept."""
    out = np.array(A, copy=True)
    T = list(T)
    if T:
        out[T, :] = 0
        out[:, T] = 0
    return out


def minor_second(B: np.ndarray, T, Binv: np.ndarray | None = None) -> np.ndarray:
    """B^(T) = ((B^-1)^[T])^-1 by refactorizing the reduced matrix."""
    N = B.shape[0]
    T = sorted(set(T))
    keep = np.setdiff1d(np.arange(N), T)
    if Binv is None:
        Binv = scipy.linalg.inv(B)
    reduced = Binv[np.ix_(keep, keep)]
    try:
        lu, piv, info = lapack.zgetrf(reduced.astype(complex))
        if info > 0:
            raise SingularMinor(f"(B^-1)^[T] is singular for T={T}")
        inv_red = scipy.linalg.lu_solve((lu, piv), np.eye(keep.size, dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise SingularMinor(str(exc)) from exc
    out = np.zeros((N, N), dtype=complex)
    out[np.ix_(keep, keep)] = inv_red
    return out


def identity_residuals(B: np.ndarray, Binv: np.ndarray, i: int, j: int, k: int) -> dict:
    """Residuals of the four resolvent identities at distinct i, j, k."""
    if len({i, j, k}) < 3:
        raise ValueError("identities need distinct i, j, k")
    Bk = minor_second(B, [k], Binv)
    Bi = minor_second(B, [i], Binv)
    Bj = minor_second(B, [j], Binv)
    out = {}
    out["expand_ij"] = abs(B[i, j] - (Bk[i, j] + B[i, k] * B[k, j] / B[k, k]))
    out["expand_inv_ii"] = abs(
        1 / B[i, i] - (1 / Bk[i, i] - B[i, k] * B[k, i] / (Bk[i, i] * B[i, i] * B[k, k]))
    )
    mask = np.ones(B.shape[0], dtype=bool)
    mask[i] = False
    quad = Binv[i, mask] @ Bi[np.ix_(mask, mask)] @ Binv[mask, i]
    out["schur_diag"] = abs(1 / B[i, i] - (Binv[i, i] - quad))
    left = -B[i, i] * (Binv[i, mask] @ Bi[mask, j])
    maskj = np.ones(B.shape[0], dtype=bool)
    maskj[j] = False
    right = -B[j, j] * (Bj[i, maskj] @ Binv[maskj, j])
    out["schur_offdiag_i"] = abs(B[i, j] - left)
    out["schur_offdiag_j"] = abs(B[i, j] - right)
    return {key: float(v) for key, v in out.items()}


@dataclass
class TMatrix:
    T: np.ndarray = field(repr=False)

    @property
    def max(self) -> float:
        return float(self.T.max())


def t_matrix(Gr: GenResolvent, V: VarianceMatrices) -> TMatrix:
    """T_ij = Σ_k (S_ζ)_ik |G_kj|²."""
    return TMatrix(V.Szeta @ (np.abs(Gr.G) ** 2))


def _abs_m2(sol) -> np.ndarray:
    M = getattr(sol, "M", sol)
    return np.abs(np.asarray(M)) ** 2


def t_equation_residual(T: TMatrix, Gr: GenResolvent, sol, V: VarianceMatrices) -> float:
    """max_ij |T_ij - Σ_k K_ik(|G_kj|² - |M_k|² T_kj)| with K = (1 - S|M|²)^-1 S."""
    a2 = _abs_m2(sol)
    K, _, _ = stability_kernel(V.Szeta, a2)
    G2 = np.abs(Gr.G) ** 2
    rhs = K @ (G2 - a2[:, None] * T.T)
    return float(np.max(np.abs(T.T - rhs)))


def t_equation_split_residual(T: TMatrix, Gr: GenResolvent, sol, V: VarianceMatrices) -> float:
    """Same identity with the k = j term isolated as T⁰_ij."""
    a2 = _abs_m2(sol)
    K, _, _ = stability_kernel(V.Szeta, a2)
    X = np.abs(Gr.G) ** 2 - a2[:, None] * T.T
    diag_part = K * np.diag(X)[None, :]        # T⁰_ij = K_ij X_jj
    Xoff = X - np.diag(np.diag(X))
    off = K @ Xoff
    return float(np.max(np.abs((T.T - diag_part) - off)))


def interp_identity_check(H, W: int, fixed: complex, w: complex, w2: complex, block: str = "ztilde") -> float:
    """‖G(w) - G(w') - G(w)(w - w')J G(w')‖_max for the varying spectral slot.

    ``block="ztilde"`` varies z̃ with z = ``fixed`` (J = indicator of the
    complement of the W-block); ``block="z"`` varies z with z̃ = ``fixed``
    (J = indicator of the W-block).
    """
    H = _as_array(H)
    N = H.shape[0]
    J = np.zeros(N)
    if block == "ztilde":
        J[W:] = 1
        Ga, _, _ = gen_resolvent_matrix(H, W, fixed, w)
        Gb, _, _ = gen_resolvent_matrix(H, W, fixed, w2)
    elif block == "z":
        J[:W] = 1
        Ga, _, _ = gen_resolvent_matrix(H, W, w, fixed)
        Gb, _, _ = gen_resolvent_matrix(H, W, w2, fixed)
    else:
        raise ValueError(f"block must be 'z' or 'ztilde', got {block!r}")
    D = Ga - Gb - (w - w2) * (Ga * J[None, :]) @ Gb
    return float(np.max(np.abs(D)))


def ward_residual(Gr: GenResolvent) -> float:
    """Relative max over j of |Σ_k|G_kj|² - Im G_jj/η| at z = z̃ = E + iη."""
    p = Gr.point
    if p.z != p.ztilde:
        raise ValueError("Ward identity needs z = z̃")
    eta = p.z.imag
    col = np.sum(np.abs(Gr.G) ** 2, axis=0)
    target = np.diag(Gr.G).imag / eta
    return float(np.max(np.abs(col - target) / np.abs(target)))


def l2_norm(G: np.ndarray) -> float:
    return float(np.linalg.norm(G, 2))


@dataclass
class ResolventStats:
    Lambda: float
    tnorm2: float
    Tmax: float


def tnorm2(G: np.ndarray) -> float:
    """⦀G⦀² = max_j Σ_i |G_ij|²."""
    return float(np.max(np.sum(np.abs(G) ** 2, axis=0)))


def stats(Gr: GenResolvent, sol, V: VarianceMatrices) -> ResolventStats:
    M = getattr(sol, "M", sol)
    if hasattr(sol, "point") and (sol.point.z != Gr.point.z or sol.point.ztilde != Gr.point.ztilde):
        raise ValueError("resolvent and Dyson solution are at different spectral points")
    D = Gr.G.copy()
    D[np.diag_indices_from(D)] -= M
    Lam = float(np.max(np.abs(D)))
    return ResolventStats(Lambda=Lam, tnorm2=tnorm2(Gr.G), Tmax=t_matrix(Gr, V).max)


STATS_COLUMNS = ("trial", "seed", "N", "W", "Im_z", "Im_ztilde", "zeta",
                 "Lambda", "Tmax", "tnorm2", "inv_residual", "near_singular")


def stats_row(Hs, point: SpectralPoint, Gr: GenResolvent | None, st: ResolventStats | None) -> dict:
    """One CSV record; a failed factorization (Gr is None) gives NaN statistics."""
    nan = float("nan")
    return {
        "trial": Hs.trial_index, "seed": Hs.seed, "N": Hs.N, "W": Hs.V.W,
        "Im_z": point.z.imag, "Im_ztilde": point.ztilde.imag, "zeta": Hs.V.zeta,
        "Lambda": st.Lambda if st else nan, "Tmax": st.Tmax if st else nan,
        "tnorm2": st.tnorm2 if st else nan,
        "inv_residual": Gr.inv_residual if Gr is not None else nan,
        "near_singular": Gr.near_singular if Gr is not None else True,
    }
