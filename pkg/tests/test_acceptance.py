"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import pytest

from bandlab.cli import identity_row, main as cli_main
from bandlab.ensemble import EnsembleSpec
from bandlab.experiments import FluctConfig, LadderConfig, fluct_average, w_doubling_ratio
from bandlab.profile import PerturbationSpec, build_profile, build_variance_matrices
from bandlab.scalar import SpectralPoint, msc
from bandlab.stability import inverse_stability, spectral_gap, t_stability_max_norm
from bandlab.vde import perturbation_sweep, solve_M


def _line(n: int, ok: bool, detail: str) -> str:
    return f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"


def crit1_identities() -> tuple[bool, str]:
    t0 = time.perf_counter()
    V = build_variance_matrices(build_profile(400, 40), 0.01)
    pert = PerturbationSpec(zeta=0.01)
    point = SpectralPoint(0.3 + 0.3j, 0.3 + 0.27j)
    sol = solve_M(V, pert, point, tol=1e-12)
    ward_sol = solve_M(V, pert, SpectralPoint(point.z, point.z), tol=1e-12)
    worst: dict[str, float] = {}
    for t in range(50):
        row = identity_row(V, pert, EnsembleSpec(), point, sol, ward_sol, 2024, t)
        for k, v in row.items():
            if k not in ("trial", "symmetry"):
                worst[k] = max(worst.get(k, 0.0), v)
    dt = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    ok = max(worst.values()) < 1e-9 and dt < 120
    return ok, f"max residual {worst[top]:.2e} ({top}) over 50 trials, {dt:.1f}s"


def crit2_dyson() -> tuple[bool, str]:
    t0 = time.perf_counter()
    N, W = 2048, 128
    V = build_variance_matrices(build_profile(N, W), 0.01)
    pert = PerturbationSpec(zeta=0.01)
    pt = SpectralPoint(0.2 + 0.03j, 0.2 + 0.01j)
    a = solve_M(V, pert, pt)
    rng = np.random.default_rng(7)
    x0 = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    x0 *= 0.02 / np.max(np.abs(x0))
    b = solve_M(V, pert, pt, x0=x0)
    gap = float(np.max(np.abs(a.M - b.M)))
    V0 = build_variance_matrices(build_profile(N, W), 0.0)
    z = 0.2 + 0.03j
    triv = solve_M(V0, PerturbationSpec(), SpectralPoint(z, z))
    exact = triv.iterations == 1 and bool(np.all(triv.M == msc(z)))
    dt = time.perf_counter() - t0
    ok = a.residual < 1e-12 and b.residual < 1e-12 and gap < 1e-11 and exact and dt < 10
    return ok, (f"residuals {a.residual:.1e}/{b.residual:.1e}, start gap {gap:.1e}, "
                f"trivial exact in 1 iteration: {exact}, {dt:.1f}s")


def crit3_stability() -> tuple[bool, str]:
    t0 = time.perf_counter()
    pt = SpectralPoint(0.05j, 0.0)
    cs = []
    for N, W in [(512, 64), (1024, 128), (2048, 256)]:
        V = build_variance_matrices(build_profile(N, W))
        sol = solve_M(V, PerturbationSpec(), pt, tol=1e-12, threshold=0.1)
        cs.append(t_stability_max_norm(V, sol).fitted_C)
    spread = max(cs) / min(cs)
    dt = time.perf_counter() - t0
    ok = spread < 4 and dt < 600
    return ok, f"max_norm/bound = {', '.join(f'{c:.3f}' for c in cs)}; spread x{spread:.3f}, {dt:.1f}s"


def crit4_decay() -> tuple[bool, str]:
    t0 = time.perf_counter()
    N, W = 2000, 100
    prof = build_profile(N, W)
    V = build_variance_matrices(prof)
    far = max(inverse_stability(msc(e), V.S0, W).far_max for e in (0.0, 1.0, -1.5))
    vals = [0.004, 0.008, 0.016]
    C, rows = perturbation_sweep(prof, 0.0, vals, vals, vals)
    dt = time.perf_counter() - t0
    ok = far < 1e-8 and len(rows) == 27 and C < 20 and dt < 300
    return ok, f"far entries (> 8W) max {far:.1e}; sweep C = {C:.3f} over {len(rows)} points, {dt:.1f}s"


def crit5_gap() -> tuple[bool, str]:
    t0 = time.perf_counter()
    worst = 0.0
    for tlen in (64, 128, 256):
        e_eig, e_four = spectral_gap(tlen, tlen // 8, 2.0 * 8)
        worst = max(worst, abs(e_eig - e_four) / e_four)
    dt = time.perf_counter() - t0
    return worst < 1e-10 and dt < 60, f"max relative gap mismatch {worst:.1e}, {dt:.2f}s"


def crit6_local_law() -> tuple[bool, str]:
    t0 = time.perf_counter()
    cfg = LadderConfig(profile=build_profile(1024, 128), e=0.0, im_z=0.1, levels=1,
                       trials_per_level=20, master_seed=6)
    ratio, r1, r2 = w_doubling_ratio(cfg)
    ineq = all(lv.tmax_inequality_ok for r in (r1, r2) for lv in r.levels)
    n_rows = sum(1 for r in (r1, r2) for row in r.rows if row["Tmax"] <= row["Tmax_bound"])
    dt = time.perf_counter() - t0
    ok = 0.49 <= ratio <= 1.01 and ineq and n_rows == 40 and dt < 1800
    return ok, (f"median Lambda {r1.levels[0].lambda_median:.4f} -> {r2.levels[0].lambda_median:.4f}, "
                f"ratio {ratio:.4f}; T inequality on {n_rows}/40 trials, {dt:.1f}s")


def crit7_fluct() -> tuple[bool, str]:
    t0 = time.perf_counter()
    cfg = FluctConfig(profile=build_profile(1000, 100), e=0.0, im_z=0.1, subtrials=200,
                      trials=20, master_seed=7)
    rep = fluct_average(cfg)    # raises EstimatorNoise if the gate fails
    noise = max(t.stderr_median / t.m1 for t in rep.trials)
    dt = time.perf_counter() - t0
    ok = rep.median_ratio < 1 / 3 and dt < 2700
    return ok, (f"median A/m1 = {rep.median_ratio:.4f}; worst stderr/m1 = {noise:.3f} (gate 0.2), "
                f"{dt:.1f}s")


DETERMINISM_CONFIGS = {
    "solve-m": {"profile": {"N": 96, "W": 8}, "pert": {"zeta": 0.01},
                "point": {"z": [0.1, 0.05], "ztilde": [0.1, 0.03]}},
    "stability": {"grid": [{"N": 128, "W": 16}, {"N": 256, "W": 32}]},
    "gap": {"tlens": [64, 128, 256]},
    "sample-check": {"profile": {"N": 60, "W": 6}, "trials": 1000},
    "identities": {"profile": {"N": 100, "W": 10}, "pert": {"zeta": 0.01},
                   "point": {"z": [0.3, 0.3], "ztilde": [0.3, 0.27]}, "trials": 4},
    "ladder": {"profile": {"N": 128, "W": 16}, "levels": 3, "trials_per_level": 4, "eps0": 0.03},
    "fluct": {"profile": {"N": 200, "W": 20}, "trials": 3, "subtrials": 200},
}


def crit8_determinism(workdir: Path) -> tuple[bool, str]:
    bad = []
    for cmd, cfg in DETERMINISM_CONFIGS.items():
        path = workdir / f"{cmd}.json"
        path.write_text(json.dumps(cfg))
        blobs = []
        for threads in ("1", "2", "4"):
            out = workdir / f"{cmd}-{threads}"
            code = cli_main([cmd, "--config", str(path), "--seed", "7", "--threads", threads,
                             "--out", str(out)])
            files = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "MANIFEST.json"}
            blobs.append((code, files))
        if not (blobs[0][0] == 0 and blobs[0][1] and all(b == blobs[0] for b in blobs)):
            bad.append(cmd)
    ok = not bad
    return ok, f"{len(DETERMINISM_CONFIGS)} subcommands x threads 1/2/4" + (f"; differing: {bad}" if bad else "")


def _report(capsys, n, result):
    ok, detail = result
    with capsys.disabled():
        print("\n" + _line(n, ok, detail))
    assert ok, detail


def test_criterion_1_identities(capsys):
    _report(capsys, 1, crit1_identities())


def test_criterion_2_dyson_solver(capsys):
    _report(capsys, 2, crit2_dyson())


def test_criterion_3_stability_scaling(capsys):
    _report(capsys, 3, crit3_stability())


def test_criterion_4_decay_certificates(capsys):
    _report(capsys, 4, crit4_decay())


def test_criterion_5_spectral_gap(capsys):
    _report(capsys, 5, crit5_gap())


@pytest.mark.slow
def test_criterion_6_local_law_scaling(capsys):
    _report(capsys, 6, crit6_local_law())


@pytest.mark.slow
def test_criterion_7_fluctuation_averaging(capsys):
    _report(capsys, 7, crit7_fluct())


def test_criterion_8_determinism(capsys, tmp_path):
    _report(capsys, 8, crit8_determinism(tmp_path))


if __name__ == "__main__":
    import tempfile

    checks = [crit1_identities, crit2_dyson, crit3_stability, crit4_decay, crit5_gap,
              crit6_local_law, crit7_fluct]
    failed = 0
    for n, fn in enumerate(checks, 1):
        ok, detail = fn()
        failed += not ok
        print(_line(n, ok, detail), flush=True)
    with tempfile.TemporaryDirectory() as d:
        ok, detail = crit8_determinism(Path(d))
        failed += not ok
        print(_line(8, ok, detail), flush=True)
    raise SystemExit(1 if failed else 0)
