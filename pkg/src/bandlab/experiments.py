"""Monte Carlo harness: the spectral-parameter ladder, fluctuation averaging,
and the self-consistent-equation probe.

All randomness is addressed by (master_seed, trial, subtrial, i, j), and
aggregation folds results in (level, trial) order, so reports do not
depend on how trials are scheduled across threads.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ensemble import EnsembleSpec, SampledMatrix, row_draws, sample
from .errors import ConfigError, EstimatorNoise, InsufficientTrials, SingularMatrix
from .profile import (
    BandProfile,
    PerturbationSpec,
    build_profile,
    build_variance_matrices,
    validate_regime,
)
from .resolvent import resolvent, stats, stats_row, t_matrix
from .scalar import DEFAULT_KAPPA, SpectralPoint, msc
from .vde import DEFAULT_THRESHOLD, solve_M, stability_factor

log = logging.getLogger(__name__)

IM_ZTILDE_FLOOR = 1e-10
PERCENTILE = 95
SLACK = 10.0


def parallel_map(fn, items, threads: int = 1) -> list:
    """Ordered map; ``threads > 1`` fans out over a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _require(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(name, msg)


@dataclass(frozen=True)
class LadderConfig:
    profile: BandProfile
    pert: PerturbationSpec = field(default_factory=PerturbationSpec)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    e: float = 0.0
    im_z: float = 0.1
    eps0: float = 0.02
    eps_star: float = 0.2
    eps_upstar: float = 0.01
    levels: int = 4
    trials_per_level: int = 20
    master_seed: int = 0
    kappa: float = DEFAULT_KAPPA
    # advisory contraction threshold for the Dyson solver at each level
    threshold: float = 0.2

    def __post_init__(self):
        _require(self.im_z > 0, "im_z", f"must be positive, got {self.im_z}")
        _require(self.eps_star > 0, "eps_star", f"must be positive, got {self.eps_star}")
        _require(0 < self.eps0 < self.eps_star / 5, "eps0",
                 f"need 0 < eps0 < eps_star/5 = {self.eps_star / 5}, got {self.eps0}")
        _require(self.levels >= 1, "levels", f"must be >= 1, got {self.levels}")
        _require(self.trials_per_level >= 1, "trials_per_level",
                 f"must be >= 1, got {self.trials_per_level}")
        floor = self.im_ztilde(self.levels - 1)
        _require(floor >= IM_ZTILDE_FLOOR, "levels",
                 f"Im z̃ at the last level is {floor:.3g} < {IM_ZTILDE_FLOOR}")
        _require(abs(self.e) < 2 - self.kappa, "e", f"|e| must be below 2 - kappa, got {self.e}")

    @property
    def N(self) -> int:
        return self.profile.N

    @property
    def W(self) -> int:
        return self.profile.W

    @property
    def z(self) -> complex:
        return complex(self.e, self.im_z)

    def im_ztilde(self, n: int) -> float:
        return self.N ** (-n * self.eps0) * self.im_z

    def point(self, n: int) -> SpectralPoint:
        return SpectralPoint(self.z, complex(self.e, self.im_ztilde(n)), self.kappa)

    def to_dict(self) -> dict:
        p = self.profile
        return {
            "profile": {"N": p.N, "W": p.W, "kind": p.kind},
            "pert": self.pert.to_dict(),
            "ensemble": self.ensemble.kind,
            "e": self.e, "im_z": self.im_z, "eps0": self.eps0,
            "eps_star": self.eps_star, "eps_upstar": self.eps_upstar,
            "levels": self.levels, "trials_per_level": self.trials_per_level,
            "master_seed": self.master_seed, "kappa": self.kappa, "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "LadderConfig":
        d = {**d, **overrides}
        return cls(**_common_fields(d, LADDER_KEYS))


def _common_fields(d: dict, allowed: set) -> dict:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    if "profile" not in d:
        raise ConfigError("profile", "missing")
    prof = d["profile"]
    if not isinstance(prof, dict):
        raise ConfigError("profile", "must be an object with N, W, kind")
    for key in ("N", "W"):
        if not isinstance(prof.get(key), int):
            raise ConfigError(f"profile.{key}", "must be an integer")
    try:
        profile = build_profile(prof["N"], prof["W"], prof.get("kind", "uniform"))
    except ValueError as exc:
        raise ConfigError("profile", str(exc)) from exc
    out = {k: v for k, v in d.items() if k not in ("profile", "pert", "ensemble")}
    out["profile"] = profile
    pert = d.get("pert") or {}
    try:
        out["pert"] = PerturbationSpec(zeta=float(pert.get("zeta", 0.0)), g=pert.get("g"))
    except (ValueError, TypeError, AttributeError) as exc:
        raise ConfigError("pert", str(exc)) from exc
    try:
        out["ensemble"] = EnsembleSpec(d.get("ensemble", "gaussian"))
    except ValueError as exc:
        raise ConfigError("ensemble", str(exc)) from exc
    for key, val in out.items():
        if val is None and key in NULLABLE_KEYS:
            continue
        if key in FLOAT_KEYS and not isinstance(val, (int, float)):
            raise ConfigError(key, f"must be a number, got {val!r}")
        if key in INT_KEYS and not isinstance(val, int):
            raise ConfigError(key, f"must be an integer, got {val!r}")
    return out


FLOAT_KEYS = {"e", "im_z", "eps0", "eps_star", "eps_upstar", "kappa", "threshold", "delta"}
INT_KEYS = {"levels", "trials_per_level", "master_seed", "trials", "subtrials", "j"}
LADDER_KEYS = {"profile", "pert", "ensemble", "e", "im_z", "eps0", "eps_star", "eps_upstar",
               "levels", "trials_per_level", "master_seed", "kappa", "threshold"}


# ---------------------------------------------------------------- ladder

def phi_goal(N: int, W: int, im_z: float) -> float:
    return 1 / math.sqrt(W * im_z) + math.sqrt(N) / W


def bound_cascade(N: int, W: int, im_z: float, phi_tilde2: float) -> tuple[float, float]:
    """(Φ^(0), Φ^(1)) from a value of Φ̃²."""
    pg = phi_goal(N, W, im_z)
    phi0 = math.sqrt(N / W * phi_tilde2)
    phi1 = pg ** 2 + (N / (W * im_z) + N ** 2 / W ** 2) * (phi_tilde2 + N ** -0.5) * phi0 ** 2
    return phi0, phi1


LADDER_COLUMNS = ("level",) + (
    "trial", "seed", "N", "W", "Im_z", "Im_ztilde", "zeta", "Lambda", "Tmax", "tnorm2",
    "inv_residual", "near_singular",
) + ("Phi_goal", "Phi_tilde_meas", "Phi0_meas", "Phi1_meas", "Tmax_bound", "ward_rel")


@dataclass
class LevelSummary:
    level: int
    im_ztilde: float
    trials: int
    singular: int
    lambda_median: float
    lambda_p95: float
    tmax_median: float
    tmax_p95: float
    tnorm2_median: float
    tnorm2_p95: float
    phi_goal: float
    ratio: float            # median Λ / Φ_goal
    ratio_p95: float
    phi_tilde: float        # N^ε0 Φ_goal
    phi0: float
    phi1: float
    tnorm2_vs_initial: float    # p95 ⦀G⦀² / (N Φ̃²)
    tmax_inequality_ok: bool
    within_slack: bool          # p95 Λ <= SLACK * Φ_goal
    ward_rel_max: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class LadderReport:
    config: LadderConfig
    levels: list[LevelSummary]
    rows: list[dict] = field(repr=False)
    regime: dict = field(default_factory=dict)

    @property
    def lambda_slope(self) -> float | None:
        """Log-log slope of median Λ against Im z̃_n across levels."""
        if len(self.levels) < 2:
            return None
        x = np.log([lv.im_ztilde for lv in self.levels])
        y = np.log([lv.lambda_median for lv in self.levels])
        return float(np.polyfit(x, y, 1)[0])

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "regime": self.regime,
            "levels": [lv.to_dict() for lv in self.levels],
            "fitted": {
                "lambda_vs_im_ztilde_slope": self.lambda_slope,
                "lambda_over_phi_goal": float(np.median([lv.ratio for lv in self.levels])),
            },
        }


def _trial_all_levels(cfg: LadderConfig, V, sols, t: int) -> list[dict]:
    """Sample trial t once and evaluate every level on it."""
    Hs = sample(V, cfg.pert, cfg.ensemble, cfg.master_seed, t)
    pg = phi_goal(cfg.N, cfg.W, cfg.im_z)
    cs = cfg.profile.C_s
    out = []
    for n, sol in enumerate(sols):
        pt = sol.point
        try:
            Gr = resolvent(Hs, pt)
        except SingularMatrix:
            Gr = None
        if Gr is None or Gr.near_singular:
            row = stats_row(Hs, pt, Gr, None)
            row.update(level=n, Phi_goal=pg, Phi_tilde_meas=math.nan, Phi0_meas=math.nan,
                       Phi1_meas=math.nan, Tmax_bound=math.nan, ward_rel=math.nan)
            out.append(row)
            continue
        st = stats(Gr, sol, V)
        pt2 = st.tnorm2 / cfg.N
        phi0, phi1 = bound_cascade(cfg.N, cfg.W, cfg.im_z, pt2)
        ward = math.nan
        if pt.z == pt.ztilde:
            target = float(np.max(np.diag(Gr.G).imag)) / pt.z.imag
            ward = abs(st.tnorm2 - target) / target
        row = stats_row(Hs, pt, Gr, st)
        row.update(level=n, Phi_goal=pg, Phi_tilde_meas=math.sqrt(pt2), Phi0_meas=phi0,
                   Phi1_meas=phi1, Tmax_bound=cs / cfg.W * st.tnorm2, ward_rel=ward)
        out.append(row)
    return out


def level_solutions(cfg: LadderConfig, V, tol: float = 1e-12) -> list:
    sols = []
    for n in range(cfg.levels):
        pt = cfg.point(n)
        lu = stability_factor(msc(pt.ztilde), V.S0)
        sols.append(solve_M(V, cfg.pert, pt, tol=tol, threshold=cfg.threshold, factor=lu))
    return sols


def run_ladder(cfg: LadderConfig, threads: int = 1) -> LadderReport:
    V = build_variance_matrices(cfg.profile, cfg.pert.zeta)
    regime = validate_regime(cfg.profile, cfg.point(0), cfg.pert, cfg.eps_star, cfg.eps_upstar)
    if not regime.spectral_ok:
        log.warning("spectral window advisory flags: %s", regime.flags)
    sols = level_solutions(cfg, V)
    need = cfg.trials_per_level
    by_trial: list[list[dict]] = []
    # extra trials are drawn only to replace singular ones; trial indices stay sequential
    while True:
        good = [sum(1 for rows in by_trial if not rows[n]["near_singular"]) for n in range(cfg.levels)]
        short = need - min(good)
        if short <= 0:
            break
        start = len(by_trial)
        if start + short > 2 * need:
            n_bad = int(np.argmin(good))
            exc = InsufficientTrials(
                f"level {n_bad}: {start - good[n_bad]} of {start} trials singular (more than 50%)"
            )
            exc.rows = [by_trial[t][n] for n in range(cfg.levels) for t in range(start)]
            raise exc
        by_trial += parallel_map(lambda t: _trial_all_levels(cfg, V, sols, t),
                                 range(start, start + short), threads)

    rows = [by_trial[t][n] for n in range(cfg.levels) for t in range(len(by_trial))]
    pg = phi_goal(cfg.N, cfg.W, cfg.im_z)
    phi_tilde2 = cfg.N ** (2 * cfg.eps0) * pg ** 2
    phi0, phi1 = bound_cascade(cfg.N, cfg.W, cfg.im_z, phi_tilde2)
    levels = []
    for n in range(cfg.levels):
        lv_rows = [r for r in rows if r["level"] == n]
        used = [r for r in lv_rows if not r["near_singular"]][:need]
        lam = np.array([r["Lambda"] for r in used])
        tmax = np.array([r["Tmax"] for r in used])
        tn2 = np.array([r["tnorm2"] for r in used])
        ok = bool(np.all(tmax <= np.array([r["Tmax_bound"] for r in used])))
        wards = [r["ward_rel"] for r in used if not math.isnan(r["ward_rel"])]
        levels.append(LevelSummary(
            level=n, im_ztilde=cfg.im_ztilde(n), trials=len(used),
            singular=sum(1 for r in lv_rows if r["near_singular"]),
            lambda_median=float(np.median(lam)), lambda_p95=float(np.percentile(lam, PERCENTILE)),
            tmax_median=float(np.median(tmax)), tmax_p95=float(np.percentile(tmax, PERCENTILE)),
            tnorm2_median=float(np.median(tn2)), tnorm2_p95=float(np.percentile(tn2, PERCENTILE)),
            phi_goal=pg, ratio=float(np.median(lam)) / pg,
            ratio_p95=float(np.percentile(lam, PERCENTILE)) / pg,
            phi_tilde=math.sqrt(phi_tilde2), phi0=phi0, phi1=phi1,
            tnorm2_vs_initial=float(np.percentile(tn2, PERCENTILE)) / (cfg.N * phi_tilde2),
            tmax_inequality_ok=ok,
            within_slack=float(np.percentile(lam, PERCENTILE)) <= SLACK * pg,
            ward_rel_max=max(wards) if wards else None,
        ))
    return LadderReport(config=cfg, levels=levels, rows=rows,
                        regime={"flags": regime.flags, "spectral_ok": regime.spectral_ok,
                                "weak_ok": regime.weak_ok, "strong_ok": regime.strong_ok,
                                "log_N_W": regime.log_N_W})


def w_doubling_ratio(cfg: LadderConfig, threads: int = 1) -> tuple[float, LadderReport, LadderReport]:
    """Median Λ at level 0 for 2W divided by that for W, same N and Im z."""
    from dataclasses import replace
    one = replace(cfg, levels=1)
    two = replace(one, profile=build_profile(cfg.N, 2 * cfg.W, cfg.profile.kind))
    r1 = run_ladder(one, threads)
    r2 = run_ladder(two, threads)
    return r2.levels[0].lambda_median / r1.levels[0].lambda_median, r1, r2


# ---------------------------------------------------------- fluctuations

@dataclass(frozen=True)
class FluctConfig:
    profile: BandProfile
    pert: PerturbationSpec = field(default_factory=PerturbationSpec)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    e: float = 0.0
    im_z: float = 0.1
    im_ztilde: float | None = None   # default: equal to im_z
    j: int = 0
    subtrials: int = 200
    trials: int = 20
    master_seed: int = 0
    kappa: float = DEFAULT_KAPPA
    threshold: float = 0.2

    def __post_init__(self):
        _require(self.im_z > 0, "im_z", f"must be positive, got {self.im_z}")
        _require(0 <= self.j < self.profile.N, "j", f"must index a site, got {self.j}")
        _require(self.subtrials >= 2, "subtrials", f"need at least 2, got {self.subtrials}")
        _require(self.trials >= 1, "trials", f"must be >= 1, got {self.trials}")
        if self.im_ztilde is not None:
            _require(0 <= self.im_ztilde, "im_ztilde", f"must be nonnegative, got {self.im_ztilde}")

    @property
    def point(self) -> SpectralPoint:
        itz = self.im_z if self.im_ztilde is None else self.im_ztilde
        return SpectralPoint(complex(self.e, self.im_z), complex(self.e, itz), self.kappa)

    def to_dict(self) -> dict:
        p = self.profile
        return {
            "profile": {"N": p.N, "W": p.W, "kind": p.kind}, "pert": self.pert.to_dict(),
            "ensemble": self.ensemble.kind, "e": self.e, "im_z": self.im_z,
            "im_ztilde": self.im_ztilde, "j": self.j, "subtrials": self.subtrials,
            "trials": self.trials, "master_seed": self.master_seed, "kappa": self.kappa,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "FluctConfig":
        d = {**d, **overrides}
        return cls(**_common_fields(d, FLUCT_KEYS))


FLUCT_KEYS = {"profile", "pert", "ensemble", "e", "im_z", "im_ztilde", "j", "subtrials",
              "trials", "master_seed", "kappa", "threshold"}
FLOAT_KEYS.add("im_ztilde")
NULLABLE_KEYS = {"im_ztilde"}


def conditional_moments(Hs: SampledMatrix, G: np.ndarray, zi: np.ndarray, k: int, j: int,
                        subtrials) -> np.ndarray:
    """|G_kj|² after redrawing row k, one value per subtrial tag.

    Uses G^(k) = G - G_·k G_k· / G_kk, which does not depend on row k, and
    the Schur formulas 1/G_kk = h_kk - z_k - h·G^(k)h, G_kj = -G_kk (h·G^(k))_j.
    """
    cols, vals = row_draws(Hs, k, np.asarray(subtrials))
    off = cols != k
    c_off = cols[off]
    h = vals[:, off]
    hkk = vals[:, ~off][:, 0] if np.any(~off) else np.zeros(len(vals))
    gk = G[c_off, k]
    Q = G[np.ix_(c_off, c_off)] - np.outer(gk, G[k, c_off]) / G[k, k]
    v = G[c_off, j] - gk * G[k, j] / G[k, k]
    n = c_off.size
    # one real GEMM against [Re Q | Im Q | Re v | Im v]
    R = np.empty((n, 2 * n + 2))
    R[:, :n] = Q.real
    R[:, n:2 * n] = Q.imag
    R[:, 2 * n] = v.real
    R[:, 2 * n + 1] = v.imag
    hR = h @ R
    quad = np.einsum("sa,sa->s", hR[:, :n], h) + 1j * np.einsum("sa,sa->s", hR[:, n:2 * n], h)
    Gkk = 1 / (hkk - zi[k] - quad)
    if j == k:
        return np.abs(Gkk) ** 2
    Gkj = -Gkk * (hR[:, 2 * n] + 1j * hR[:, 2 * n + 1])
    return np.abs(Gkj) ** 2


@dataclass
class FluctTrial:
    trial: int
    A: float
    m1: float
    ratio: float
    stderr_median: float
    noise_in_A: float
    combination: float      # |Σ b_k (E_k|G_kj|² - |M_k|² T_kj)|
    Lambda: float
    combination_over_lambda3: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FluctReport:
    trials: list[FluctTrial]
    b_max: float

    @property
    def median_ratio(self) -> float:
        return float(np.median([t.ratio for t in self.trials]))

    @property
    def second_moment(self) -> float:
        """Empirical E|Σ b_k Q_k |G_kj|²|² over outer trials."""
        return float(np.mean([t.A ** 2 for t in self.trials]))

    @property
    def gain_ok(self) -> bool:
        return self.median_ratio < 1 / 3

    def summary(self) -> dict:
        return {"median_A_over_m1": self.median_ratio, "gain_ok": self.gain_ok,
                "second_moment": self.second_moment, "b_max": self.b_max,
                "trials": [t.to_dict() for t in self.trials]}


def _fluct_trial(cfg: FluctConfig, V, sol, b: np.ndarray, t: int, gate: float) -> FluctTrial:
    N, j = cfg.profile.N, cfg.j
    pt = cfg.point
    Hs = sample(V, cfg.pert, cfg.ensemble, cfg.master_seed, t)
    Gr = resolvent(Hs, pt)
    G = Gr.G
    zi = pt.block_parameters(N, V.W)
    tags = np.arange(1, cfg.subtrials + 1)
    ks = np.array([k for k in range(N) if k != j])
    Ek = np.empty(ks.size)
    se = np.empty(ks.size)
    for idx, k in enumerate(ks):
        draws = conditional_moments(Hs, G, zi, int(k), j, tags)
        Ek[idx] = draws.mean()
        se[idx] = draws.std(ddof=1) / math.sqrt(draws.size)
    X = np.abs(G[ks, j]) ** 2
    QX = X - Ek
    A = abs(float(np.dot(b[ks], QX)))
    m1 = float(np.median(np.abs(QX))) * N * float(np.max(np.abs(b)))
    se_med = float(np.median(se))
    if m1 > 0 and se_med > gate * m1:
        raise EstimatorNoise(
            f"trial {t}: median E_k standard error {se_med:.3g} exceeds {gate:.0%} of m1 = {m1:.3g}"
        )
    T = t_matrix(Gr, V).T
    a2 = np.abs(sol.M) ** 2
    comb = abs(float(np.dot(b[ks], Ek - a2[ks] * T[ks, j])))
    lam = stats(Gr, sol, V).Lambda
    return FluctTrial(trial=t, A=A, m1=m1, ratio=A / m1 if m1 > 0 else 0.0,
                      stderr_median=se_med,
                      noise_in_A=float(math.sqrt(np.sum((b[ks] * se) ** 2))),
                      combination=comb, Lambda=lam, combination_over_lambda3=comb / lam ** 3)


def fluct_average(cfg: FluctConfig, b: np.ndarray | None = None, threads: int = 1,
                  gate: float = 0.2) -> FluctReport:
    """Averaged fluctuation Σ_{k≠j} b_k Q_k|G_kj|² with E_k estimated by row redraws.

    ``b`` defaults to the constant vector 1/N.
    """
    N = cfg.profile.N
    b = np.full(N, 1 / N) if b is None else np.asarray(b, dtype=float)
    if b.shape != (N,):
        raise ConfigError("b", f"shape {b.shape}, expected ({N},)")
    if np.max(np.abs(b)) > 1 / N * (1 + 1e-12):
        raise ConfigError("b", "max |b_k| must not exceed 1/N")
    V = build_variance_matrices(cfg.profile, cfg.pert.zeta)
    pt = cfg.point
    sol = solve_M(V, cfg.pert, pt, tol=1e-12, threshold=cfg.threshold)
    if not np.any(b):
        trials = [FluctTrial(trial=t, A=0.0, m1=0.0, ratio=0.0, stderr_median=0.0, noise_in_A=0.0,
                             combination=0.0, Lambda=math.nan, combination_over_lambda3=0.0)
                  for t in range(cfg.trials)]
        return FluctReport(trials=trials, b_max=0.0)
    trials = parallel_map(lambda t: _fluct_trial(cfg, V, sol, b, t, gate), range(cfg.trials), threads)
    return FluctReport(trials=trials, b_max=float(np.max(np.abs(b))))


# ------------------------------------------------- self-consistent probe

@dataclass
class ProbeReport:
    fraction: float | None
    included: int
    excluded: int
    threshold: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def self_consistent_probe(records, N: int, delta: float = 0.05, slack: float = SLACK) -> ProbeReport:
    """Fraction of trials with Λ² <= slack·‖T‖_max among those with Λ <= N^-δ.

    ``records`` are mappings with ``Lambda`` and ``Tmax`` (e.g. ladder rows);
    near-singular or hypothesis-violating trials are excluded and counted.
    """
    cut = N ** -delta
    good = [r for r in records if not r.get("near_singular", False) and r["Lambda"] <= cut]
    excluded = len(list(records)) - len(good)
    if not good:
        return ProbeReport(fraction=None, included=0, excluded=excluded, threshold=cut)
    hits = sum(1 for r in good if r["Lambda"] ** 2 <= slack * r["Tmax"])
    return ProbeReport(fraction=hits / len(good), included=len(good), excluded=excluded, threshold=cut)


def probe_trials(profile: BandProfile, pert: PerturbationSpec, ensemble: EnsembleSpec,
                 point: SpectralPoint, trials: int, master_seed: int = 0,
                 threads: int = 1, threshold: float = DEFAULT_THRESHOLD) -> list[dict]:
    """Per-trial (Λ, ‖T‖_max) records at one spectral point."""
    V = build_variance_matrices(profile, pert.zeta)
    sol = solve_M(V, pert, point, tol=1e-12, threshold=threshold)

    def one(t):
        Hs = sample(V, pert, ensemble, master_seed, t)
        try:
            Gr = resolvent(Hs, point)
        except SingularMatrix:
            return stats_row(Hs, point, None, None)
        return stats_row(Hs, point, Gr, None if Gr.near_singular else stats(Gr, sol, V))

    return parallel_map(one, range(trials), threads)
