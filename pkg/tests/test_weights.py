import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grainflow.domain import plane, torus
from grainflow.weights import (InfeasibleShapeError, const_weight, exp_weight,
                               make_test_function, weight_from_name)

FD = 1e-4


def _fd_grad(f, x):
    out = np.empty_like(x)
    for k in range(2):
        e = np.zeros(2)
        e[k] = FD
        out[..., k] = (f(x + e) - f(x - e)) / (2 * FD)
    return out


def test_weight_from_name():
    assert weight_from_name("const").variant == "const"
    assert weight_from_name("exp").variant == "exp"
    with pytest.raises(ValueError):
        weight_from_name("bogus")


def test_const_weight_trivial():
    om = const_weight()
    x = np.random.default_rng(0).normal(size=(50, 2))
    assert np.all(om.value(x) == 1.0)
    assert np.all(om.grad(x) == 0.0)
    assert om.c1 == 0.0


def test_exp_weight_ratio_bounds():
    om = exp_weight()
    rng = np.random.default_rng(1)
    x = rng.uniform(-3, 3, size=(100, 2))
    w = om.value(x)
    assert np.all((0 < w) & (w <= 1.0))
    # |grad Omega| <= c1 Omega and ||Hess|| <= c1 Omega, checked both in
    # closed form and by central finite differences
    g = om.grad(x)
    assert np.all(np.linalg.norm(g, axis=1) <= om.c1 * w)
    gfd = _fd_grad(om.value, x)
    assert np.max(np.abs(g - gfd) / w[:, None]) < 1e-3
    H = om.hess(x)
    assert np.all(np.linalg.norm(H, axis=(1, 2)) <= om.c1 * w)
    hfd = np.stack([_fd_grad(lambda y: om.grad(y)[..., k], x)
                    for k in range(2)], axis=-1)
    assert np.max(np.abs(H - hfd) / w[:, None, None]) < 1e-3


def test_exp_weight_growth_pairs():
    om = exp_weight()
    rng = np.random.default_rng(2)
    x = rng.uniform(-3, 3, size=(100, 2))
    y = x + rng.uniform(-1, 1, size=(100, 2))
    d = np.linalg.norm(x - y, axis=1)
    assert np.all(om.value(x) <= om.value(y) * np.exp(om.c1 * d) + 1e-12)


@pytest.mark.parametrize("omname,dom", [("const", plane()), ("exp", plane()),
                                        ("const", torus())])
@pytest.mark.parametrize("j", [2, 5])
def test_a_family_ratio_bounds(omname, dom, j):
    om = weight_from_name(omname)
    if om.c1 >= j:
        pytest.skip("weight growth exceeds j")
    phi = make_test_function(j, "A", (0.3, -0.2) if not dom.periodic
                             else (0.3, 0.8), om, dom, width=max(1.0, 4.0 / j))
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, size=(200, 2)) if not dom.periodic else \
        rng.uniform(0, 1, size=(200, 2))
    v = phi.value(x)
    assert np.all(v > 0)
    assert np.all(v <= om.value(x) * (1 + 1e-9))
    g = phi.grad(x)
    assert np.all(np.linalg.norm(g, axis=1) <= j * v * (1 + 1e-9))
    H = phi.hess(x)
    assert np.all(np.linalg.norm(H, axis=(1, 2)) <= j * v * (1 + 1e-9))
    # finite-difference agreement of the closed-form derivatives
    gfd = _fd_grad(phi.value, x)
    assert np.max(np.abs(g - gfd) / v[:, None]) < 1e-3


@pytest.mark.parametrize("j", [2, 6])
def test_b_family_bounds(j):
    om = const_weight()
    dom = plane()
    g = make_test_function(j, "B", (0.0, 0.0), om, dom, direction=(1.0, 2.0))
    rng = np.random.default_rng(5)
    x = rng.uniform(-4, 4, size=(200, 2))
    val = g.value(x)
    w = om.value(x)
    assert np.all(np.linalg.norm(val, axis=1) <= j * w * (1 + 1e-9))
    J = g.jacobian(x)
    assert np.all(np.linalg.norm(J, axis=(1, 2)) <= j * w * (1 + 1e-9))
    # L2 bound: int |g/Omega|^2 <= j^2, by tensor-grid Riemann sum
    s = np.linspace(-8, 8, 400)
    gx, gy = np.meshgrid(s, s, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    ratio = np.linalg.norm(g.value(pts), axis=1) / om.value(pts)
    cell = (s[1] - s[0]) ** 2
    assert np.sum(ratio**2) * cell <= j * j * (1 + 1e-6)


def test_infeasible_width_rejected():
    om = const_weight()
    with pytest.raises(InfeasibleShapeError):
        make_test_function(4, "A", (0, 0), om, plane(), width=0.5)
    with pytest.raises(InfeasibleShapeError):
        make_test_function(1, "A", (0, 0), exp_weight(), plane())


def test_omega_itself_is_a_member():
    phi = make_test_function(2, "A", (0, 0), exp_weight(), plane())
    x = np.array([[0.5, -1.0]])
    assert phi.value(x) == pytest.approx(exp_weight().value(x))


# sampled-pair growth and difference inequalities for factory members;
# hypothesis drives the pair geometry, the loop drives 100 pairs per draw
@settings(max_examples=20, deadline=None)
@given(j=st.integers(min_value=1, max_value=8),
       seed=st.integers(min_value=0, max_value=2**31))
def test_scalar_pair_inequalities(j, seed):
    om = const_weight()
    phi = make_test_function(j, "A", (0.2, 0.1), om, plane(), width=max(1.0, 4.0 / j))
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, size=(100, 2))
    u = rng.normal(size=(100, 2))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y = x + (rng.random((100, 1)) * 2.0 / j) * u
    d = np.linalg.norm(x - y, axis=1)
    px, py = phi.value(x), phi.value(y)
    grow = np.exp(j * d)
    assert np.all(px <= py * grow + 1e-6)
    assert np.all(np.abs(px - py) <= j * d * px * grow + 1e-6)
    lin = np.einsum("nk,nk->n", phi.grad(y), x - y)
    assert np.all(np.abs(px - py - lin) <= j * d * d * py * grow + 1e-6)


@settings(max_examples=20, deadline=None)
@given(j=st.integers(min_value=1, max_value=8),
       seed=st.integers(min_value=0, max_value=2**31))
def test_vector_pair_inequality(j, seed):
    om = const_weight()
    g = make_test_function(j, "B", (0.0, 0.0), om, plane(), direction=(0.0, 1.0))
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, size=(100, 2))
    u = rng.normal(size=(100, 2))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y = x + (rng.random((100, 1)) * 2.0 / j) * u
    d = np.linalg.norm(x - y, axis=1)
    diff = np.linalg.norm(g.value(x) - g.value(y), axis=1)
    assert np.all(diff <= j * d * om.value(x) * np.exp(om.c1 * d) + 1e-6)
