import numpy as np
import numpy.testing as npt
import pytest

from reludepth import gates, netcore, polyapprox
from reludepth.errors import InvalidInputError, SpecViolationError
from reludepth.polyapprox import PolySpec


def test_eval_poly():
    p = PolySpec(dim=2, degree=3, coeff_bound=2.0,
                 terms={(2, 1): 2.0, (0, 0): -0.5})
    assert polyapprox.eval_poly(p, [1.0, 2.0]) == pytest.approx(3.5)
    npt.assert_allclose(
        polyapprox.eval_poly(p, [[1.0, 2.0], [0.5, -1.0]]),
        [3.5, -1.0],
    )
    assert p.sparsity == 2


@pytest.mark.parametrize("terms", [
    {(4, 0): 1.0},
    {(1,): 1.0},
    {(1, 0): 3.0},
    {(-1, 1): 1.0},
])
def test_invalid_polynomials(terms):
    with pytest.raises(SpecViolationError):
        PolySpec(dim=2, degree=3, coeff_bound=2.0, terms=terms)


def test_poly_depth_formula():
    assert polyapprox.poly_depth(4, 2) == 49


def test_coordinate_front():
    front = polyapprox.coordinate_front(3)
    x = np.array([[-1.0, 0.5, 1.0], [0.0, -0.25, 0.75]])
    npt.assert_allclose(front(x), np.column_stack([x, np.ones(2)]))
    assert front.depth() == 1


def test_monomial_net(gate_cfg, rng):
    net = polyapprox.monomial_net((2, 1), 3, gate_cfg)
    x = rng.uniform(-1, 1, size=(2000, 2))
    err = gates.max_abs_error(net, x, x[:, 0] ** 2 * x[:, 1])
    assert err <= gate_cfg.epsilon
    with pytest.raises(InvalidInputError):
        polyapprox.monomial_net((2, 2), 3, gate_cfg)


def test_sparse_poly_net_accuracy_and_depth(gate_cfg, rng):
    p = polyapprox.random_poly(dim=10, degree=4, coeff_bound=1.0, mu=5,
                               seed=3)
    net = polyapprox.sparse_poly_net(p, gate_cfg)
    x = rng.uniform(-1, 1, size=(2000, 10))
    err = gates.max_abs_error(net, x, polyapprox.eval_poly(p, x))
    assert err <= gate_cfg.epsilon
    assert net.depth() == 2 * 4 * gate_cfg.l_tilde + 8 * 4 + 1


def test_sparse_poly_net_shares_one_gate(gate_cfg):
    p = polyapprox.random_poly(dim=3, degree=3, coeff_bound=1.0, mu=6,
                               seed=11)
    net = polyapprox.sparse_poly_net(p, gate_cfg)
    gate = gates.productL_gate(
        gate_cfg.with_arity(3).with_epsilon(
            polyapprox.branch_epsilon(p, gate_cfg.epsilon)
        )
    )
    # gate atoms, the coefficients and the pass-through labels
    assert netcore.count_free_params(net) <= (
        netcore.count_free_params(gate) + p.sparsity + 3
    )
    assert {"poly.c{}".format(i) for i in range(6)} <= \
        netcore.share_groups(net)


def test_padding_to_requested_depth(gate_cfg, rng):
    p = PolySpec(dim=2, degree=2, coeff_bound=1.0,
                 terms={(1, 1): 1.0, (0, 0): 0.25})
    net = polyapprox.sparse_poly_net(p, gate_cfg, depth=40)
    assert net.depth() == 40
    x = rng.uniform(-1, 1, size=(500, 2))
    assert gates.max_abs_error(net, x, polyapprox.eval_poly(p, x)) \
        <= gate_cfg.epsilon


def test_zero_polynomial_gives_zero_net(gate_cfg):
    p = PolySpec(dim=3, degree=2, coeff_bound=1.0, terms={(1, 0, 1): 0.0})
    net = polyapprox.sparse_poly_net(p, gate_cfg)
    assert netcore.count_free_params(net) == 0
    assert net.depth() == polyapprox.poly_depth(2, gate_cfg.l_tilde)
    npt.assert_array_equal(net(np.ones((4, 3))), np.zeros((4, 1)))


def test_zero_net_rejects_bad_depth():
    with pytest.raises(InvalidInputError):
        polyapprox.zero_net(2, depth=0)


def test_random_poly_is_deterministic():
    a = polyapprox.random_poly(dim=4, degree=3, coeff_bound=2.0, mu=7, seed=5)
    b = polyapprox.random_poly(dim=4, degree=3, coeff_bound=2.0, mu=7, seed=5)
    assert a.terms == b.terms
    assert a.sparsity == 7
    assert all(abs(c) <= 2.0 for c in a.terms.values())
    with pytest.raises(InvalidInputError):
        polyapprox.random_poly(dim=1, degree=1, coeff_bound=1.0, mu=3,
                               seed=0)


def _pair_products(mu, dim=16):
    terms = {}
    for i in range(mu):
        alpha = [0] * dim
        alpha[2 * i] = alpha[2 * i + 1] = 1
        terms[tuple(alpha)] = 0.5
    return PolySpec(dim=dim, degree=2, coeff_bound=1.0, terms=terms)


def test_free_params_grow_affinely_in_sparsity():
    # per-branch accuracy eps / (mu * B) held at 0.01, so every mu uses the
    # same product gate
    counts = {}
    for mu in (1, 2, 4, 8):
        p = _pair_products(mu)
        cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=0.01 * mu)
        assert polyapprox.branch_epsilon(p, cfg.epsilon) == 0.01
        counts[mu] = netcore.count_free_params(
            polyapprox.sparse_poly_net(p, cfg),
        )
    per_term = counts[2] - counts[1]
    assert per_term >= 1
    for k in (1, 2, 4):
        assert counts[2 * k] - counts[k] == k * per_term
    gate = gates.productL_gate(gates.GateConfig(
        theta=0.5, l_tilde=2, epsilon=0.01, arity=2,
    ))
    assert counts[1] >= netcore.count_free_params(gate)
