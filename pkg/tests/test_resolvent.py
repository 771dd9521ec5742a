from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandlab.ensemble import EnsembleSpec, sample
from bandlab.errors import SingularMatrix, SingularMinor
from bandlab.profile import PerturbationSpec, build_profile, build_variance_matrices
from bandlab.resolvent import (
    STATS_COLUMNS,
    gen_resolvent_matrix,
    identity_residuals,
    interp_identity_check,
    l2_norm,
    minor_first,
    minor_second,
    resolvent,
    stats,
    stats_row,
    t_equation_residual,
    t_equation_split_residual,
    t_matrix,
    tnorm2,
    ward_residual,
)
from bandlab.scalar import SpectralPoint
from bandlab.vde import solve_M


@pytest.fixture(scope="module")
def setup():
    V = build_variance_matrices(build_profile(200, 20), 0.01)
    pert = PerturbationSpec(zeta=0.01)
    pt = SpectralPoint(0.2 + 0.3j, 0.2 + 0.25j)
    sol = solve_M(V, pert, pt)
    Hs = sample(V, pert, EnsembleSpec(), 11, 0)
    return V, pert, pt, sol, Hs, resolvent(Hs, pt)


def test_zero_matrix():
    G, _, _ = gen_resolvent_matrix(np.zeros((5, 5)), 2, 1j, 1j)
    assert np.allclose(G, 1j * np.eye(5), atol=1e-15)


def test_inverse_residual_and_symmetry(setup):
    *_, Gr = setup
    assert Gr.inv_residual < 1e-9
    assert np.max(np.abs(Gr.G - Gr.G.T)) < 1e-10
    assert not Gr.near_singular


def test_l2_bound():
    V = build_variance_matrices(build_profile(150, 10))
    for t in range(5):
        Hs = sample(V, PerturbationSpec(), EnsembleSpec(), 4, t)
        for z, zt in [(0.1j, 0.5j), (0.3 + 0.2j, 0.3 + 0.05j)]:
            Gr = resolvent(Hs, SpectralPoint(z, zt))
            assert l2_norm(Gr.G) <= 1 / min(z.imag, zt.imag) + 1e-8


def test_ward(setup):
    V, pert, _, _, Hs, _ = setup
    Gr = resolvent(Hs, SpectralPoint(0.2 + 0.3j, 0.2 + 0.3j))
    assert ward_residual(Gr) < 1e-10


def test_real_ztilde_flagged_or_singular():
    H = np.diag([0.0, 1.0, 2.0, 3.0])
    with pytest.raises(SingularMatrix):
        gen_resolvent_matrix(H, 1, 0.1j, 1.0)


def test_minor_first_conventions():
    A = np.arange(36.0).reshape(6, 6)
    assert np.array_equal(minor_first(A, []), A)
    m = minor_first(A, [1, 4])
    assert not m[[1, 4]].any() and not m[:, [1, 4]].any()
    assert np.array_equal(minor_first(minor_first(A, [1]), [4]), m)


def test_minor_second_diagonal():
    B = np.diag([1.0, 2.0, 3.0 + 1j, 4.0])
    assert np.allclose(minor_second(B, [2]), minor_first(B, [2]))


def test_minor_second_singular():
    B = np.eye(3)
    Binv = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1.0]])
    with pytest.raises(SingularMinor):
        minor_second(B, [1], Binv)


@settings(max_examples=25, deadline=None)
@given(idx=st.lists(st.integers(0, 199), min_size=3, max_size=3, unique=True))
def test_identities_random_indices(setup, idx):
    *_, Gr = setup
    res = identity_residuals(Gr.G, Gr.A, *idx)
    assert max(res.values()) < 1e-9


def test_t_matrix_trivial():
    V = build_variance_matrices(build_profile(40, 4))
    from bandlab.resolvent import GenResolvent
    G = 1j * np.eye(40)
    Gr = GenResolvent(G=G, point=SpectralPoint(1j, 1j), inv_residual=0.0, cond=1.0, W=4, A=-1j * np.eye(40))
    assert np.allclose(t_matrix(Gr, V).T, V.Szeta)


def test_t_equation(setup):
    V, _, _, sol, _, Gr = setup
    T = t_matrix(Gr, V)
    assert np.all(T.T >= 0)
    assert T.max <= V.profile.C_s / V.W * tnorm2(Gr.G) * (1 + 1e-12)
    assert t_equation_residual(T, Gr, sol, V) < 1e-9
    assert t_equation_split_residual(T, Gr, sol, V) < 1e-9
    assert t_equation_residual(T, Gr, np.zeros(200), V) < 1e-12


def test_interpolation(setup):
    V, _, pt, _, Hs, _ = setup
    assert interp_identity_check(Hs, 20, pt.z, 1j, 1j) == 0
    assert interp_identity_check(Hs, 20, pt.z, 1j, 0.5j) < 1e-9
    assert interp_identity_check(Hs, 20, pt.ztilde, 1j, 0.5j, block="z") < 1e-9


def test_stats(setup):
    V, pert, pt, sol, Hs, Gr = setup
    s = stats(Gr, sol, V)
    assert s.tnorm2 >= np.max(np.abs(np.diag(Gr.G))) ** 2
    from bandlab.resolvent import GenResolvent
    fake = GenResolvent(G=np.diag(sol.M), point=pt, inv_residual=0.0, cond=1.0, W=20, A=np.eye(200))
    assert stats(fake, sol, V).Lambda == 0
    row = stats_row(Hs, pt, Gr, s)
    assert tuple(row) == STATS_COLUMNS


def test_tnorm_ward_consequence(setup):
    V, pert, _, _, Hs, _ = setup
    pt = SpectralPoint(0.2 + 0.3j, 0.2 + 0.3j)
    Gr = resolvent(Hs, pt)
    target = np.max(np.diag(Gr.G).imag) / 0.3
    assert tnorm2(Gr.G) == pytest.approx(target, rel=1e-10)


def test_stats_point_mismatch(setup):
    V, pert, _, sol, Hs, _ = setup
    other = resolvent(Hs, SpectralPoint(0.5j, 0.5j))
    with pytest.raises(ValueError):
        stats(other, sol, V)
