"""Command-line front end: one subcommand per experiment family.

Exit codes: 0 success, 2 configuration error, 3 runtime failure (outputs
written so far are kept and MANIFEST.json is marked incomplete).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .ensemble import EnsembleSpec, entry_draws, sample
from .errors import BandlabError, ConfigError, InsufficientTrials
from .experiments import (
    LADDER_COLUMNS,
    FluctConfig,
    LadderConfig,
    _common_fields,
    fluct_average,
    parallel_map,
    run_ladder,
    self_consistent_probe,
)
from .profile import PerturbationSpec, build_profile, build_variance_matrices
from .resolvent import (
    identity_residuals,
    interp_identity_check,
    resolvent,
    t_equation_residual,
    t_equation_split_residual,
    t_matrix,
    ward_residual,
)
from .scalar import SpectralPoint
from .stability import (
    f1_form,
    implied_gap_constant,
    inverse_stability,
    quadratic_form_identity,
    spectral_gap,
    t_stability_max_norm,
)
from .vde import DEFAULT_THRESHOLD, DEFAULT_TOL, solve_M

COMMANDS = ("solve-m", "stability", "gap", "sample-check", "identities", "ladder", "fluct")


class Outputs:
    def __init__(self, out_dir: Path, fmt: str):
        self.dir = out_dir
        self.fmt = fmt
        self.files: list[str] = []

    def csv(self, name: str, rows: list[dict], columns=None) -> None:
        if self.fmt == "json" or not rows:
            return
        columns = list(columns or rows[0].keys())
        path = self.dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _cell(r[k]) for k in columns})
        self.files.append(path.name)

    def json(self, name: str, obj) -> None:
        if self.fmt == "csv":
            return
        path = self.dir / f"{name}.json"
        path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
        self.files.append(path.name)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (bool, np.bool_)):
        return int(bool(v))
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _point(d: dict, field: str = "point") -> SpectralPoint:
    if field not in d:
        raise ConfigError(field, "missing")
    p = d[field]
    try:
        return SpectralPoint(complex(*p["z"]), complex(*p["ztilde"]), p.get("kappa", 0.1))
    except (KeyError, TypeError) as exc:
        raise ConfigError(field, "needs z and ztilde as [re, im] pairs") from exc
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from exc


def _pop(d: dict, key: str, default, kind=float):
    """Remove ``key`` from d, checking it is a number (or an int for kind=int)."""
    v = d.pop(key, default)
    if v is None:
        return v
    ok = isinstance(v, int) if kind is int else isinstance(v, (int, float))
    if not ok or isinstance(v, bool):
        raise ConfigError(key, f"must be {'an integer' if kind is int else 'a number'}, got {v!r}")
    return v


# ------------------------------------------------------------- commands

def cmd_solve_m(cfg: dict, seed: int, threads: int, out: Outputs) -> None:
    d = dict(cfg)
    point = _point(d)
    d.pop("point")
    tol = _pop(d, "tol", DEFAULT_TOL)
    max_iter = _pop(d, "max_iter", 500, int)
    threshold = _pop(d, "threshold", DEFAULT_THRESHOLD)
    d.pop("master_seed", None)
    base = _common_fields(d, {"profile", "pert", "ensemble"})
    V = build_variance_matrices(base["profile"], base["pert"].zeta)
    sol = solve_M(V, base["pert"], point, tol=tol, max_iter=max_iter, threshold=threshold)
    out.csv("solve_m", [{"i": i, "re_M": v.real, "im_M": v.imag, "abs_x": abs(v - sol.m)}
                        for i, v in enumerate(sol.M)])
    out.json("solve_m", sol.to_dict())


def cmd_stability(cfg: dict, seed: int, threads: int, out: Outputs) -> None:
    d = dict(cfg)
    grid = d.pop("grid", None)
    if not isinstance(grid, list) or not grid:
        raise ConfigError("grid", "must be a non-empty list of {N, W}")
    kind = d.pop("kind", "uniform")
    im_z = _pop(d, "im_z", 0.05)
    e = _pop(d, "e", 0.0)
    im_zt = _pop(d, "im_ztilde", 0.0)
    zeta = _pop(d, "zeta", 0.0)
    far_multiplier = _pop(d, "far_multiplier", 8.0)
    d.pop("master_seed", None)
    if d:
        raise ConfigError(sorted(d)[0], "unknown field")
    point = SpectralPoint(complex(e, im_z), complex(e, im_zt))

    def one(nw):
        try:
            prof = build_profile(int(nw["N"]), int(nw["W"]), kind)
        except (KeyError, TypeError) as exc:
            raise ConfigError("grid", "entries need integer N and W") from exc
        V = build_variance_matrices(prof, zeta)
        sol = solve_M(V, PerturbationSpec(zeta=zeta), point, tol=1e-12, threshold=1.0)
        rep = t_stability_max_norm(V, sol)
        inv = inverse_stability(sol.m, V.S0, V.W, far_multiplier=far_multiplier, check=False)
        row = rep.to_dict()
        row.update(far_max=inv.far_max, far_distance=inv.far_distance,
                   diag_deviation_times_W=inv.diag_deviation * V.W,
                   contraction_norm=inv.contraction_norm)
        return row

    rows = parallel_map(one, grid, threads)
    out.csv("stability", rows)
    cs = [r["fitted_C"] for r in rows]
    out.json("stability", {"rows": rows, "variation_factor": max(cs) / min(cs)})


def cmd_gap(cfg: dict, seed: int, threads: int, out: Outputs) -> None:
    d = dict(cfg)
    tlens = d.pop("tlens", [64, 128, 256])
    ratio = _pop(d, "ratio", 8, int)
    logn5 = _pop(d, "logN5", None)
    d.pop("master_seed", None)
    if d:
        raise ConfigError(sorted(d)[0], "unknown field")
    if not isinstance(tlens, list) or not all(isinstance(t, int) for t in tlens):
        raise ConfigError("tlens", "must be a list of integers")
    rows = []
    for tlen in tlens:
        W = tlen // ratio
        L = logn5 if logn5 is not None else 2.0 * ratio
        e_eig, e_four = spectral_gap(tlen, W, L)
        f1_min = float(np.linalg.eigvalsh(f1_form(tlen, W, L))[0])
        rows.append({"Tlen": tlen, "W": W, "logN5": L, "e1_eig": e_eig, "e1_fourier": e_four,
                     "rel_diff": abs(e_eig - e_four) / e_four,
                     "implied_c": implied_gap_constant(e_eig, tlen, W, L), "f1_min_eig": f1_min})
    out.csv("gap", rows)
    out.json("gap", {"rows": rows, "max_rel_diff": max(r["rel_diff"] for r in rows)})


def cmd_sample_check(cfg: dict, seed: int, threads: int, out: Outputs) -> None:
    d = dict(cfg)
    trials = _pop(d, "trials", 10000, int)
    pairs = d.pop("pairs", None)
    d.pop("master_seed", None)
    base = _common_fields(d, {"profile", "pert", "ensemble"})
    V = build_variance_matrices(base["profile"], base["pert"].zeta)
    spec: EnsembleSpec = base["ensemble"]
    if pairs is None:
        N, W = V.N, V.W
        pairs = [[(7 * s) % N, (7 * s + s % (W + 1)) % N] for s in range(20)]
    rows = []
    all_draws = []
    for i, j in pairs:
        x = entry_draws(V, spec, seed, np.arange(trials), i, j)
        s_ij = float(V.Szeta[min(i, j), max(i, j)])
        var_hat = float(np.mean(x ** 2))
        se = float(np.std(x ** 2, ddof=1) / math.sqrt(trials)) if s_ij > 0 else 0.0
        zsc = (var_hat - s_ij) / se if se > 0 else 0.0
        rows.append({"i": i, "j": j, "s_ij": s_ij, "var_hat": var_hat, "stderr": se, "z_score": zsc})
        if s_ij > 0:
            all_draws.append(x / math.sqrt(s_ij))
    xi = np.concatenate(all_draws) if all_draws else np.zeros(1)
    moments = {str(p): {"empirical": float(np.mean(np.abs(xi) ** p) ** (1 / p)), "analytic": a}
               for p, a in spec.moment_certificate}
    out.csv("sample_check", rows)
    out.json("sample_check", {"rows": rows, "max_abs_z": max(abs(r["z_score"]) for r in rows),
                              "moments": moments})


IDENTITY_COLUMNS = ("trial", "expand_ij", "expand_inv_ii", "schur_diag", "schur_offdiag_i",
                    "schur_offdiag_j", "t_equation", "t_equation_split", "interp_ztilde",
                    "interp_z", "ward", "quadratic_form", "inv_residual", "symmetry")


def identity_row(V, pert, ensemble, point, sol, ward_sol, seed: int, t: int) -> dict:
    """Every exact identity evaluated on trial t; the values are residuals."""
    Hs = sample(V, pert, ensemble, seed, t)
    N, W = V.N, V.W
    rng = np.random.default_rng([seed, t])
    i, j, k = (int(v) for v in rng.choice(N, 3, replace=False))
    Gr = resolvent(Hs, point)
    T = t_matrix(Gr, V)
    ident = identity_residuals(Gr.G, Gr.A, i, j, k)
    Gw = resolvent(Hs, ward_sol.point)
    u = rng.standard_normal(N)
    lhs, rhs = quadratic_form_identity(u, V, sol)
    row = {"trial": t, **ident,
           "t_equation": t_equation_residual(T, Gr, sol, V),
           "t_equation_split": t_equation_split_residual(T, Gr, sol, V),
           "interp_ztilde": interp_identity_check(Hs, W, point.z, 1j, 0.5j, block="ztilde"),
           "interp_z": interp_identity_check(Hs, W, point.ztilde, 1j, 0.5j, block="z"),
           "ward": ward_residual(Gw),
           "quadratic_form": abs(lhs - rhs) / max(1.0, abs(rhs)),
           "inv_residual": Gr.inv_residual,
           "symmetry": float(np.max(np.abs(Gr.G - Gr.G.T)))}
    return row


def cmd_identities(cfg: dict, seed: int, threads: int, out: Outputs) -> None:
    d = dict(cfg)
    point = _point(d)
    d.pop("point")
    trials = _pop(d, "trials", 50, int)
    d.pop("master_seed", None)
    base = _common_fields(d, {"profile", "pert", "ensemble"})
    pert = base["pert"]
    V = build_variance_matrices(base["profile"], pert.zeta)
    sol = solve_M(V, pert, point, tol=1e-12, threshold=1.0)
    wpt = SpectralPoint(point.z, point.z, point.kappa)
    ward_sol = solve_M(V, pert, wpt, tol=1e-12, threshold=1.0)
    rows = parallel_map(lambda t: identity_row(V, pert, base["ensemble"], point, sol, ward_sol, seed, t),
                        range(trials), threads)
    out.csv("identities", rows, IDENTITY_COLUMNS)
    worst = {c: max(r[c] for r in rows) for c in IDENTITY_COLUMNS if c != "trial"}
    out.json("identities", {"max_residual": worst, "all_below_1e-9": max(worst.values()) < 1e-9})


def cmd_ladder(cfg: dict, seed: int, threads: int, out: Outputs) -> None:
    lc = LadderConfig.from_dict(cfg, master_seed=seed)
    try:
        rep = run_ladder(lc, threads)
    except InsufficientTrials as exc:
        out.csv("ladder", getattr(exc, "rows", []), LADDER_COLUMNS)
        raise
    out.csv("ladder", rep.rows, LADDER_COLUMNS)
    summary = rep.summary()
    summary["self_consistent_probe"] = self_consistent_probe(rep.rows, lc.N).to_dict()
    out.json("ladder", summary)


def cmd_fluct(cfg: dict, seed: int, threads: int, out: Outputs) -> None:
    d = dict(cfg)
    b = d.pop("b", None)
    fc = FluctConfig.from_dict(d, master_seed=seed)
    rep = fluct_average(fc, None if b is None else np.asarray(b, dtype=float), threads)
    out.csv("fluct", [t.to_dict() for t in rep.trials])
    out.json("fluct", {"config": fc.to_dict(), **rep.summary()})


HANDLERS = {
    "solve-m": cmd_solve_m, "stability": cmd_stability, "gap": cmd_gap,
    "sample-check": cmd_sample_check, "identities": cmd_identities,
    "ladder": cmd_ladder, "fluct": cmd_fluct,
}


# ----------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bandlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"bandlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (u64); BANDLAB_SEED overrides")
        p.add_argument("--threads", default="1", help="worker count or 'auto'")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    return ap


def _threads(s: str) -> int:
    if s == "auto":
        return os.cpu_count() or 1
    try:
        n = int(s)
    except ValueError as exc:
        raise ConfigError("--threads", f"expected an integer or 'auto', got {s!r}") from exc
    if n < 1:
        raise ConfigError("--threads", f"must be >= 1, got {n}")
    return n


def _seed(cli_seed, cfg: dict) -> int:
    env = os.environ.get("BANDLAB_SEED")
    if env is not None and env != "":
        try:
            v = int(env)
        except ValueError as exc:
            raise ConfigError("BANDLAB_SEED", f"not an integer: {env!r}") from exc
    elif cli_seed is not None:
        v = cli_seed
    else:
        v = cfg.get("master_seed", 0)
        if not isinstance(v, int):
            raise ConfigError("master_seed", f"must be an integer, got {v!r}")
    if not 0 <= v < 2 ** 64:
        raise ConfigError("seed", f"must fit in u64, got {v}")
    return v


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    start = _now()
    manifest = {"command": args.command, "version": __version__, "start": start,
                "config_path": args.config}

    def finish(complete: bool, code: int, error: str | None = None, outputs=None) -> int:
        manifest.update(end=_now(), complete=complete, exit_code=code, outputs=outputs or [])
        if error:
            manifest["error"] = error
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "MANIFEST.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            print(f"bandlab: cannot write manifest: {exc}", file=sys.stderr)
        return code

    try:
        raw = Path(args.config).read_bytes()
    except OSError as exc:
        print(f"bandlab: config error: {args.config}: {exc.strerror}", file=sys.stderr)
        return finish(False, 2, f"config unreadable: {exc.strerror}")
    manifest["config_hash"] = "sha256:" + hashlib.sha256(raw).hexdigest()
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        msg = f"{args.config}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        print(f"bandlab: config error: {msg}", file=sys.stderr)
        return finish(False, 2, msg)
    try:
        if not isinstance(cfg, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        seed = _seed(args.seed, cfg)
        threads = _threads(args.threads)
        out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise ConfigError("--out", f"{out_dir} is not writable")
    except ConfigError as exc:
        print(f"bandlab: config error: {exc}", file=sys.stderr)
        return finish(False, 2, str(exc))
    manifest["master_seed"] = seed
    manifest["threads"] = threads

    out = Outputs(out_dir, args.format)
    try:
        # BLAS stays single-threaded so results do not depend on --threads
        with threadpool_limits(limits=1):
            HANDLERS[args.command](cfg, seed, threads, out)
    except ConfigError as exc:
        print(f"bandlab: config error: {exc}", file=sys.stderr)
        return finish(False, 2, str(exc), out.files)
    except BandlabError as exc:
        print(f"bandlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return finish(False, 3, f"{type(exc).__name__}: {exc}", out.files)
    except (ValueError, KeyError, TypeError) as exc:
        # malformed values that slipped past schema checks
        print(f"bandlab: config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return finish(False, 2, f"{type(exc).__name__}: {exc}", out.files)
    return finish(True, 0, None, out.files)


if __name__ == "__main__":
    sys.exit(main())
