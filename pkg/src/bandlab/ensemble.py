"""Reproducible sampling of random band matrices H_ζ^g.

Entry (i, j), i <= j, of trial ``t`` is ``sqrt(s_ij) * xi`` where xi is the
Philox draw at key (master_seed, t) and counter (i, j, subtrial).  The base
sample uses subtrial 0; :func:`resample_row` redraws row/column k with
another subtrial tag and leaves every other entry bit-identical.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .profile import PerturbationSpec, VarianceMatrices
from .rng import standard_draws, trial_key

ENSEMBLES = ("gaussian", "rademacher", "uniform")
MAGIC = b"BLAB"


def _abs_moment(kind: str, p: int) -> float:
    if kind == "gaussian":
        return float(math.prod(range(p - 1, 0, -2)))   # (p-1)!!
    if kind == "rademacher":
        return 1.0
    if kind == "uniform":
        return 3.0 ** (p / 2) / (p + 1)
    raise ValueError(f"unknown ensemble kind {kind!r}; expected one of {ENSEMBLES}")


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in ENSEMBLES:
            raise ValueError(f"unknown ensemble kind {self.kind!r}; expected one of {ENSEMBLES}")

    @property
    def moment_certificate(self) -> list[tuple[int, float]]:
        """(p, (E|xi|^p)^(1/p)) for the normalized entry distribution."""
        return [(p, _abs_moment(self.kind, p) ** (1 / p)) for p in (4, 6, 8)]


@dataclass(frozen=True)
class SampledMatrix:
    H: np.ndarray = field(repr=False)
    seed: int
    trial_index: int
    ensemble: EnsembleSpec
    V: VarianceMatrices = field(repr=False)
    g: np.ndarray = field(repr=False)
    # rows redrawn so far, k -> subtrial
    resampled: tuple = ()

    @property
    def N(self) -> int:
        return self.H.shape[0]

    def dump(self, path) -> None:
        """Little-endian float64 row-major, after a 16-byte header."""
        header = MAGIC + struct.pack("<III", self.N, 0, 0)
        Path(path).write_bytes(header + np.ascontiguousarray(self.H, dtype="<f8").tobytes())


def load_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    (N,) = struct.unpack("<I", raw[4:8])
    return np.frombuffer(raw, dtype="<f8", offset=16).reshape(N, N).copy()


def _upper_support(V: VarianceMatrices):
    iu, ju = np.nonzero(np.triu(V.Szeta) > 0)
    return iu, ju


def sample(V: VarianceMatrices, pert: PerturbationSpec, spec: EnsembleSpec,
           master_seed: int, trial: int) -> SampledMatrix:
    N = V.N
    key = trial_key(master_seed, trial)
    iu, ju = _upper_support(V)
    vals = np.sqrt(V.Szeta[iu, ju]) * standard_draws(spec.kind, key, iu, ju, 0)
    H = np.zeros((N, N))
    H[iu, ju] = vals
    H[ju, iu] = vals
    g = pert.g_vector(N)
    H[np.arange(N), np.arange(N)] -= g
    return SampledMatrix(H=H, seed=int(master_seed), trial_index=int(trial), ensemble=spec, V=V, g=g)


def row_draws(Hs: SampledMatrix, k: int, subtrial) -> tuple[np.ndarray, np.ndarray]:
    """Support columns of row k and the redrawn values there.

    ``subtrial`` may be an array, giving a (len(subtrial), n_support) block;
    the diagonal entry already includes the -g_k shift.
    """
    V = Hs.V
    cols = np.nonzero(V.Szeta[k] > 0)[0]
    key = trial_key(Hs.seed, Hs.trial_index)
    lo = np.minimum(cols, k)
    hi = np.maximum(cols, k)
    sub = np.asarray(subtrial)[..., None]
    vals = np.sqrt(V.Szeta[k, cols]) * standard_draws(Hs.ensemble.kind, key, lo, hi, sub)
    vals = vals - np.where(cols == k, Hs.g[k], 0.0)
    return cols, vals


def resample_row(Hs: SampledMatrix, k: int, subtrial: int) -> SampledMatrix:
    N = Hs.N
    if not 0 <= k < N:
        raise IndexError(f"row index {k} out of range for N={N}")
    cols, vals = row_draws(Hs, k, subtrial)
    H = Hs.H.copy()
    H[k, :] = 0.0
    H[:, k] = 0.0
    H[k, cols] = vals
    H[cols, k] = vals
    return replace(Hs, H=H, resampled=Hs.resampled + ((k, subtrial),))


def entry_draws(V: VarianceMatrices, spec: EnsembleSpec, master_seed: int, trials, i: int, j: int) -> np.ndarray:
    """H_ij (without the g shift) across many trials, without building matrices."""
    i, j = min(i, j), max(i, j)
    trials = np.asarray(trials)
    keys = np.array([trial_key(master_seed, t) for t in trials], dtype=np.uint32)
    return np.sqrt(V.Szeta[i, j]) * standard_draws(spec.kind, (keys[:, 0], keys[:, 1]), i, j, 0)
