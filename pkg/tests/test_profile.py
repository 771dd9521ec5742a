from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandlab.errors import InvalidDimensions, ZetaTooLarge
from bandlab.profile import (
    KERNELS,
    BandProfile,
    PerturbationSpec,
    build_profile,
    build_variance_matrices,
    max_admissible_zeta,
    to_zn,
    validate_regime,
)
from bandlab.scalar import SpectralPoint


def test_uniform_small():
    p = build_profile(10, 2, "uniform")
    assert np.allclose(p.f(np.arange(-2, 3)), 0.2)
    assert p.f(3) == 0 and p.f(-3) == 0
    V = build_variance_matrices(p, 0.0)
    assert np.allclose(V.S0.sum(axis=1), 1.0, atol=1e-12)


def test_band_bounds_hand_constants():
    p = build_profile(10, 2, "uniform")
    assert p.satisfies_band_bounds(1 / 3, 1.0)
    # 1/5 < 0.5·(1/2): a lower constant this large must fail
    assert not p.satisfies_band_bounds(0.5, 1.0)


@pytest.mark.parametrize("N,W", [(10, 5), (10, 6), (10, 0)])
def test_invalid_dimensions(N, W):
    with pytest.raises(InvalidDimensions):
        build_profile(N, W)


def test_zeta_zero_gives_s0():
    V = build_variance_matrices(build_profile(10, 2), 0.0)
    assert np.array_equal(V.Szeta, V.S0)


def test_zeta_entry_formula():
    V = build_variance_matrices(build_profile(10, 2), 0.1)
    assert V.Szeta[0, 0] == pytest.approx(1 / 5 - 0.1 * (2 / 2), abs=1e-15)
    assert V.Szeta[0, 1] == pytest.approx(1 / 5 - 0.1 / 2, abs=1e-15)
    assert V.Szeta[5, 5] == pytest.approx(1 / 5)


def test_zeta_too_large():
    with pytest.raises(ZetaTooLarge):
        build_variance_matrices(build_profile(10, 2), 1.0)


def test_max_admissible_zeta_is_sharp():
    p = build_profile(40, 4, "triangular")
    z = max_admissible_zeta(p)
    build_variance_matrices(p, z * (1 - 1e-9))
    with pytest.raises(ZetaTooLarge):
        build_variance_matrices(p, z * (1 + 1e-6))


@settings(max_examples=40, deadline=None)
@given(N=st.integers(8, 120), frac=st.floats(0.01, 0.49), kind=st.sampled_from(KERNELS))
def test_profile_invariants(N, frac, kind):
    W = max(1, int(frac * N))
    if 2 * W >= N:
        return
    p = build_profile(N, W, kind)
    x = np.arange(-N, N)
    assert np.array_equal(p.f(x), p.f(-x))
    assert p.kernel.sum() == pytest.approx(1.0, abs=1e-12)
    assert p.satisfies_band_bounds(p.c_s, p.C_s)
    V = build_variance_matrices(p)
    assert np.max(np.abs(V.S0.sum(axis=1) - 1)) < 1e-12
    # circulant: each row is the previous one shifted by one
    assert np.array_equal(np.roll(V.S0[0], 1), V.S0[1])
    for M in (V.S0, V.Sigma, V.Szeta):
        assert np.array_equal(M, M.T)


def test_sigma_structure():
    V = build_variance_matrices(build_profile(30, 5), 0.0)
    S = V.Sigma
    assert np.count_nonzero(S) == 25
    assert np.allclose(S[:5].sum(axis=1), 1 + 1 / 5)
    assert not S[5:].any() and not S[:, 5:].any()


def test_index_convention():
    assert list(to_zn(np.arange(6), 6)) == [1, 2, 3, -2, -1, 0]
    assert list(to_zn(np.arange(5), 5)) == [1, 2, -2, -1, 0]


def test_matrices_read_only():
    V = build_variance_matrices(build_profile(20, 3))
    with pytest.raises(ValueError):
        V.Szeta[0, 0] = 1.0


@pytest.mark.parametrize("kind", KERNELS)
def test_json_roundtrip(kind):
    p = build_profile(64, 5, kind)
    d = json.loads(p.to_json())
    assert set(d) == {"N", "W", "kind", "c_s", "C_s", "kernel"}
    q = BandProfile.from_dict(d)
    assert np.array_equal(q.kernel, p.kernel)


def test_regime_strong_weak_false_at_three_quarters():
    N = 4096
    p = build_profile(N, 512)
    rep = validate_regime(p, SpectralPoint(0.2j, 0.2j), PerturbationSpec(), 0.2, 0.01)
    assert rep.log_N_W == pytest.approx(0.75)
    assert not rep.strong_ok
    assert not rep.weak_ok


def test_regime_boundary_inclusive():
    N, es = 1024, 0.2
    p = build_profile(N, 200)
    eta = N ** -es
    rep = validate_regime(p, SpectralPoint(complex(0, eta), 0.0), PerturbationSpec(), es, 0.01)
    assert rep.spectral_ok, rep.flags


def test_regime_g_flag():
    N, W = 1024, 200
    p = build_profile(N, W)
    g = np.full(N, 2 * W ** -0.75)
    rep = validate_regime(p, SpectralPoint(0.2j, 0.2j), PerturbationSpec(g=g), 0.2, 0.01)
    assert rep.flags["g_small"] is False
    assert not rep.spectral_ok
