import numpy as np
import pytest
from hypothesis import given, strategies as st

from bmforge.errors import NotFirstOrderCritical, NotRegular
from bmforge.families import (maxcut_bad_pair, maxcut_instance, orthocut_instance,
                              spheres_instance)
from bmforge.linalg import antisymmetric_basis, orth_complement, random_orthogonal
from bmforge.manifold import (classify_spectrum, first_order_certificate,
                              hessian_quadratic, project_tangent, riemannian_gradient,
                              second_order_report, tangent_basis)
from bmforge.optimizer import random_feasible_point, retract_array
from bmforge.sdp import apply_A, apply_A_adjoint
from bmforge.tolerances import Tolerances

import oracles

FAMILIES = {
    "maxcut": lambda: maxcut_instance(6),
    "orthocut": lambda: orthocut_instance(4, 2),
    "spheres": lambda: spheres_instance((2, 1, 3, 2)),
}


def _sym(rng, n):
    M = rng.standard_normal((n, n))
    return M + M.T


# --- tangent basis ------------------------------------------------------------------------

def test_dims_maxcut_5_2():
    inst = maxcut_instance(5)
    _, V = maxcut_bad_pair(5, 2)
    tb = tangent_basis(inst, V)
    assert (tb.dim, tb.vertical.shape[0], tb.horizontal.shape[0]) == (5, 1, 4)


def test_p1_vertical_empty():
    inst = maxcut_instance(3)
    tb = tangent_basis(inst, np.ones((3, 1)))
    assert tb.vertical.shape[0] == 0 and tb.dim == 0


def test_dims_appendix_c(appendix_c):
    tb = tangent_basis(appendix_c.instance, appendix_c.V)
    assert tb.dim == 6 and tb.vertical.shape[0] == 1


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_basis_orthonormal_and_tangent(family, rng):
    inst = FAMILIES[family]()
    V = random_feasible_point(inst, 3, rng)
    tb = tangent_basis(inst, V)
    T = tb.matrix()
    np.testing.assert_allclose(T.T @ T, np.eye(tb.dim), atol=1e-10)
    for B in tb.basis:
        assert np.linalg.norm(apply_A(inst, V @ B.T + B @ V.T)) <= 1e-10
    n, p = V.shape
    assert tb.dim == n * p - inst.m
    assert tb.vertical.shape[0] == p * (p - 1) // 2
    assert tb.horizontal.shape[0] == tb.dim - p * (p - 1) // 2
    # vertical inside the tangent span, horizontal orthogonal to vertical
    for Vb in tb.vertical:
        np.testing.assert_allclose(project_tangent(tb, Vb), Vb, atol=1e-10)
    cross = np.einsum("kia,lia->kl", tb.vertical, tb.horizontal)
    assert np.max(np.abs(cross), initial=0.0) <= 1e-10


def test_tangent_basis_not_regular(rng):
    V = rng.standard_normal((4, 2))
    V[0] = 0
    with pytest.raises(NotRegular):
        tangent_basis(maxcut_instance(4), V)


def test_tangent_basis_deterministic(rng):
    inst = maxcut_instance(6)
    V = random_feasible_point(inst, 2, rng)
    a, b = tangent_basis(inst, V), tangent_basis(inst, V.copy())
    np.testing.assert_array_equal(a.basis, b.basis)


# --- projection -------------------------------------------------------------------------

@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_projection(family, rng):
    inst = FAMILIES[family]()
    V = random_feasible_point(inst, 3, rng)
    tb = tangent_basis(inst, V)
    W = rng.standard_normal(V.shape)
    P1 = project_tangent(tb, W)
    np.testing.assert_allclose(project_tangent(tb, P1), P1, atol=1e-12)
    normal = apply_A_adjoint(inst, rng.standard_normal(inst.m)) @ V
    assert np.linalg.norm(project_tangent(tb, normal)) <= 1e-10 * np.linalg.norm(normal)
    for E in antisymmetric_basis(3):
        np.testing.assert_allclose(project_tangent(tb, V @ E), V @ E, atol=1e-12)


# --- gradient and first order ----------------------------------------------------------------

def test_gradient_zero_at_forged(forged_maxcut_5_2):
    inst, _, V, res = forged_maxcut_5_2
    g = riemannian_gradient(inst, res.C, V)
    assert np.linalg.norm(g) <= 1e-8 * np.linalg.norm(res.C)


def test_gradient_zero_for_adjoint_cost(rng):
    inst = orthocut_instance(3, 2)
    V = random_feasible_point(inst, 3, rng)
    C = apply_A_adjoint(inst, rng.standard_normal(inst.m))
    assert np.linalg.norm(riemannian_gradient(inst, C, V)) <= 1e-10 * np.linalg.norm(C)


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_gradient_finite_differences(family, rng):
    inst = FAMILIES[family]()
    for _ in range(4):
        V = random_feasible_point(inst, 2, rng)
        C = _sym(rng, inst.n)
        grad = riemannian_gradient(inst, C, V)
        tb = tangent_basis(inst, V)
        for _ in range(5):
            D = oracles.random_tangent(tb, rng)
            fd = oracles.fd_directional(lambda W: np.sum((C @ W) * W),
                                        lambda W, E: retract_array(inst, W, E), V, D)
            assert abs(fd - np.sum(grad * D)) <= 1e-6 * max(1.0, np.linalg.norm(grad))


def test_first_order_appendix_c(appendix_c):
    fx = appendix_c
    fo = first_order_certificate(fx.instance, fx.C, fx.V)
    np.testing.assert_allclose(fo.g2, fx.g2, atol=1e-10)
    assert np.linalg.norm(fo.C2 @ fx.V) <= 1e-10 and fo.is_critical


def test_first_order_exact_fit(rng):
    inst = spheres_instance((2, 2, 3))
    V = random_feasible_point(inst, 2, rng)
    h = rng.standard_normal(inst.m)
    fo = first_order_certificate(inst, apply_A_adjoint(inst, h), V)
    np.testing.assert_allclose(fo.g2, h, atol=1e-10)
    assert np.linalg.norm(fo.C2) <= 1e-10


def test_first_order_random_cost(rng):
    inst = maxcut_instance(6)
    V = random_feasible_point(inst, 2, rng)
    C = _sym(rng, 6)
    fo = first_order_certificate(inst, C, V)
    assert not fo.is_critical
    grad = riemannian_gradient(inst, C, V)
    assert fo.residual_C2V == pytest.approx(np.linalg.norm(grad) / 2, rel=1e-10)
    np.testing.assert_allclose(fo.g2, oracles.multipliers_normal_equations(inst.A, V, C @ V),
                               rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(apply_A_adjoint(inst, fo.g2) + fo.C2, C, atol=1e-12)


# --- Hessian ---------------------------------------------------------------------------------

def test_hessian_vertical_and_polarisation(forged_maxcut_5_2, rng):
    inst, _, V, res = forged_maxcut_5_2
    fo = res.first_order
    E = antisymmetric_basis(2)[0]
    assert abs(hessian_quadratic(fo, V @ E, V @ E)) <= 1e-10
    tb = tangent_basis(inst, V)
    D = oracles.random_tangent(tb, rng)
    assert hessian_quadratic(fo, D, D) == pytest.approx(
        2 * np.sum(fo.C2 * (D @ D.T)), rel=1e-12)


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_hessian_finite_differences_random_points(family, rng):
    # the family retractions are second order, so curvature matches off criticality too
    inst = FAMILIES[family]()
    for _ in range(3):
        V = random_feasible_point(inst, 2, rng)
        C = _sym(rng, inst.n)
        rep = second_order_report(inst, C, V, require_critical=False)
        scale = max(1.0, float(np.max(np.abs(rep.eigenvalues))))
        for _ in range(5):
            D = oracles.random_tangent(rep.basis, rng)
            fd = oracles.fd_second(lambda W: np.sum((C @ W) * W),
                                   lambda W, E: retract_array(inst, W, E), V, D)
            exact = hessian_quadratic(rep.first_order, D, D)
            assert abs(fd - exact) <= 1e-5 * scale


def test_hessian_fd_forged(forged_maxcut_5_2, rng):
    inst, _, V, res = forged_maxcut_5_2
    rep = res.second_order
    scale = float(np.max(np.abs(rep.eigenvalues)))
    for _ in range(5):
        D = oracles.random_tangent(rep.basis, rng)
        fd = oracles.fd_second(lambda W: np.sum((res.C @ W) * W),
                               lambda W, E: retract_array(inst, W, E), V, D)
        assert abs(fd - hessian_quadratic(rep.first_order, D, D)) <= 1e-5 * scale


def test_second_order_appendix_c(appendix_c):
    rep = second_order_report(appendix_c.instance, appendix_c.C, appendix_c.V)
    assert rep.zero_dim == 1 and np.sum(rep.eigenvalues > rep.zero_tol) == 5
    assert rep.is_nondegenerate


def test_second_order_forged(forged_maxcut_5_2):
    rep = forged_maxcut_5_2[3].second_order
    assert rep.zero_dim == 1
    assert np.all(rep.eigenvalues[1:] > 0) and rep.eigenvalues.size == 5


def test_injected_negative_direction(forged_maxcut_5_2):
    inst, _, V, res = forged_maxcut_5_2
    C2 = res.first_order.C2
    w = orth_complement(V, 1e-10)[:, 0]
    # C' V = C V keeps V critical; the -beta w w^T term bends some tangent direction down
    Cp = res.C - 10 * np.max(np.abs(res.second_order.eigenvalues)) * np.outer(w, w)
    rep = second_order_report(inst, Cp, V)
    assert rep.first_order.is_critical
    assert not rep.is_second_order and not rep.is_nondegenerate
    assert np.allclose(rep.first_order.C2 @ V, 0, atol=1e-10)
    assert C2.shape == Cp.shape


def test_second_order_requires_critical(rng):
    inst = maxcut_instance(5)
    V = random_feasible_point(inst, 2, rng)
    with pytest.raises(NotFirstOrderCritical):
        second_order_report(inst, _sym(rng, 5), V)


@given(seed=st.integers(0, 2**31))
def test_orbit_invariance_of_report(seed):
    rng = np.random.default_rng(seed)
    inst = maxcut_instance(5)
    truth, V = maxcut_bad_pair(5, 2)
    from bmforge.forge import forge
    C = forge(inst, truth, V).C
    Q = random_orthogonal(2, rng)
    a = second_order_report(inst, C, V)
    b = second_order_report(inst, C, V @ Q)
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-8)
    assert (a.is_second_order, a.is_nondegenerate, a.zero_dim) == \
        (b.is_second_order, b.is_nondegenerate, b.zero_dim)


def test_classify_spectrum_rules():
    tol = Tolerances()
    assert classify_spectrum(np.array([0.0, 1.0, 2.0]), 2, tol)[3:] == (True, True)
    assert classify_spectrum(np.array([0.0, 0.0, 2.0]), 2, tol)[3:] == (True, False)
    assert classify_spectrum(np.array([-1.0, 0.0, 2.0]), 2, tol)[3:] == (False, False)
    assert classify_spectrum(np.zeros(0), 1, tol)[3:] == (True, True)
