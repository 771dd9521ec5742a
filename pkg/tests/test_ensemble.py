from __future__ import annotations

import math

import numpy as np
import pytest

from bandlab.ensemble import (
    EnsembleSpec,
    entry_draws,
    load_matrix,
    resample_row,
    row_draws,
    sample,
)
from bandlab.profile import PerturbationSpec, build_profile, build_variance_matrices
from bandlab.rng import philox4x32, standard_draws, trial_key

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    out = philox4x32(ctr, key)
    assert tuple(int(w) for w in out) == expected


def test_philox_vectorized_matches_scalar():
    ctr = [np.arange(5), np.full(5, 7), np.arange(5) * 3, np.zeros(5)]
    vec = philox4x32(ctr, (11, 13))
    for t in range(5):
        one = philox4x32([c[t] for c in ctr], (11, 13))
        assert all(int(v[t]) == int(o) for v, o in zip(vec, one))


@pytest.mark.parametrize("kind", ["gaussian", "rademacher", "uniform"])
def test_standard_draw_moments(kind):
    x = standard_draws(kind, trial_key(1, 0), np.arange(200000), 0, 0)
    se = math.sqrt(np.var(x ** 2) / x.size)
    assert abs(x.mean()) < 5 / math.sqrt(x.size)
    assert abs(np.mean(x ** 2) - 1) <= 5 * se


@pytest.fixture(scope="module")
def V200():
    return build_variance_matrices(build_profile(200, 10), 0.0)


def test_sample_structure(V200):
    Hs = sample(V200, PerturbationSpec(), EnsembleSpec(), 7, 3)
    H = Hs.H
    assert np.array_equal(H, H.T)
    assert not np.any(H[V200.Szeta == 0])
    again = sample(V200, PerturbationSpec(), EnsembleSpec(), 7, 3)
    assert np.array_equal(H, again.H)
    other = sample(V200, PerturbationSpec(), EnsembleSpec(), 7, 4)
    assert not np.array_equal(H, other.H)


def test_variance_monte_carlo(V200):
    spec = EnsembleSpec("gaussian")
    rng = np.random.default_rng(0)
    trials = np.arange(10000)
    for _ in range(20):
        i = int(rng.integers(200))
        j = (i + int(rng.integers(-10, 11))) % 200
        x = entry_draws(V200, spec, 99, trials, i, j)
        s = V200.Szeta[i, j]
        se = np.std(x ** 2, ddof=1) / math.sqrt(x.size)
        assert abs(np.mean(x ** 2) - s) < 5 * se


def test_entry_draws_match_sample(V200):
    spec = EnsembleSpec("uniform")
    x = entry_draws(V200, spec, 5, [0, 1, 2], 3, 8)
    for t in range(3):
        assert sample(V200, PerturbationSpec(), spec, 5, t).H[3, 8] == x[t]


def test_diagonal_shift():
    V = build_variance_matrices(build_profile(100, 5))
    pert = PerturbationSpec(g=np.full(100, 0.1))
    means = np.mean([np.diag(sample(V, pert, EnsembleSpec(), 1, t).H) for t in range(400)], axis=0)
    se = math.sqrt(V.Szeta[0, 0] / (400 * 100))
    assert abs(means.mean() + 0.1) < 5 * se


def test_independence_disjoint_pairs():
    V = build_variance_matrices(build_profile(50, 5))
    spec = EnsembleSpec()
    trials = np.arange(10000)
    a = entry_draws(V, spec, 2, trials, 3, 5)
    b = entry_draws(V, spec, 2, trials, 10, 12)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 5 / math.sqrt(trials.size)


@pytest.mark.parametrize("kind,target", [("gaussian", 3 ** 0.25), ("rademacher", 1.0)])
def test_fourth_moment_certificate(kind, target):
    spec = EnsembleSpec(kind)
    assert spec.moment_certificate[0] == (4, pytest.approx(target))
    x = standard_draws(kind, trial_key(3, 1), np.arange(50000), 1, 0)
    assert np.mean(x ** 4) ** 0.25 == pytest.approx(target, rel=0.1)


def test_unknown_kind():
    with pytest.raises(ValueError):
        EnsembleSpec("cauchy")


def test_resample_row(V200):
    Hs = sample(V200, PerturbationSpec(), EnsembleSpec(), 7, 0)
    same = resample_row(Hs, 17, 0)
    assert np.array_equal(same.H, Hs.H)
    a = resample_row(Hs, 17, 1)
    b = resample_row(Hs, 17, 2)
    assert np.array_equal(a.H, a.H.T)
    assert not np.array_equal(a.H[17], b.H[17])
    mask = np.ones((200, 200), dtype=bool)
    mask[17, :] = mask[:, 17] = False
    assert np.array_equal(a.H[mask], Hs.H[mask])
    assert np.array_equal(b.H[mask], Hs.H[mask])


def test_resampled_mean_zero(V200):
    Hs = sample(V200, PerturbationSpec(), EnsembleSpec(), 7, 0)
    cols, vals = row_draws(Hs, 40, np.arange(1, 10001))
    j = list(cols).index(45)
    x = vals[:, j]
    assert abs(x.mean()) < 5 * x.std() / math.sqrt(x.size)


def test_dump_roundtrip(tmp_path, V200):
    Hs = sample(V200, PerturbationSpec(), EnsembleSpec(), 1, 0)
    path = tmp_path / "h.bin"
    Hs.dump(path)
    raw = path.read_bytes()
    assert raw[:4] == b"BLAB" and len(raw) == 16 + 8 * 200 * 200
    assert np.array_equal(load_matrix(path), Hs.H)
