import math

import numpy as np
import numpy.testing as npt
import pytest

from reludepth import gates, netcore, smoothapprox
from reludepth.errors import InvalidConfigError, InvalidInputError
from reludepth.smoothapprox import GridIndex


def _grid(dim, n):
    axes = [np.linspace(-1, 1, n)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1) \
        .reshape(-1, dim)


@pytest.mark.parametrize("r, expected", [
    (1.0, (0, 1.0)),
    (2.0, (1, 1.0)),
    (2.5, (2, 0.5)),
    (0.3, (0, 0.3)),
])
def test_smoothness_split(r, expected):
    s, v = smoothapprox.smoothness_split(r)
    assert s == expected[0]
    assert v == pytest.approx(expected[1])


def test_smoothness_split_rejects_nonpositive():
    with pytest.raises(InvalidInputError):
        smoothapprox.smoothness_split(0.0)


def test_psi_net_matches_trapezoid():
    t = np.linspace(-3, 3, 601)
    net = smoothapprox.psi_net()
    npt.assert_allclose(net(t[:, None])[:, 0], smoothapprox.psi(t),
                        atol=1e-12)
    assert net.depth() == 1
    assert net.width() == 4
    assert netcore.count_free_params(net) == 8


def test_psi_shape():
    npt.assert_allclose(smoothapprox.psi([-2.5, -1.5, 0.0, 1.0, 1.5, 2.0]),
                        [0.0, 0.5, 1.0, 1.0, 0.5, 0.0])


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("N", [2, 3, 7, 8, 32])
def test_partition_of_unity(dim, N, rng):
    x = np.vstack([rng.uniform(-1, 1, size=(500, dim)),
                   -np.ones((1, dim)), np.ones((1, dim))])
    npt.assert_allclose(smoothapprox.partition_sum(N, x), 1.0, atol=1e-9)


@pytest.mark.slow
@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("N", [2, 8, 32])
def test_partition_of_unity_dense(dim, N):
    x = np.random.default_rng(N).uniform(-1, 1, size=(10 ** 5, dim))
    assert np.max(np.abs(smoothapprox.partition_sum(N, x) - 1.0)) <= 1e-9


def test_grid_index():
    idx = GridIndex(N=4, j=(0, 2, 4))
    npt.assert_allclose(idx.center(), [-1.0, 0.0, 1.0])
    assert smoothapprox.phi_reference(idx, [-1.0, 0.0, 1.0]) == 1.0
    assert smoothapprox.phi_reference(idx, [1.0, 0.0, 1.0]) == 0.0
    with pytest.raises(InvalidInputError):
        GridIndex(N=4, j=(5,))


def test_catalog_and_rescaling():
    f = smoothapprox.get_target("exp_neg_norm2", 2, 2.0)
    assert f([0.0, 0.0]) == 1.0
    assert f([1.0, 1.0]) == pytest.approx(math.exp(-2))
    g = smoothapprox.rescaled(smoothapprox.get_target("sin_pi_x1", 1, 2.0),
                              2.0)
    assert g.name == "sin_pi_x1@2.0"
    assert g([0.25]) == pytest.approx(math.sin(math.pi * 0.5))
    same = smoothapprox.target_from_name("sin_pi_x1@2.0", 1, 2.0)
    assert same([0.1]) == pytest.approx(g([0.1]))
    with pytest.raises(InvalidInputError):
        smoothapprox.get_target("nope", 1, 2.0)


def test_multi_indices_are_graded():
    indices = smoothapprox.multi_indices(2, 2)
    assert len(indices) == math.comb(4, 2)
    assert indices[0] == (0, 0)
    assert [sum(a) for a in indices] == sorted(sum(a) for a in indices)


def test_exp_derivatives_match_finite_differences(rng):
    f = smoothapprox.get_target("exp_neg_norm2", 2, 3.0)
    blind = smoothapprox.SmoothTarget("blind", 2, 3.0, f.c0, f.value)
    x = rng.uniform(-0.9, 0.9, size=(20, 2))
    for k in [(1, 0), (0, 1), (1, 1), (2, 0)]:
        npt.assert_allclose(
            smoothapprox.derivative_values(blind, k, x),
            smoothapprox.derivative_values(f, k, x),
            atol=1e-4,
        )


def test_taylor_coeffs_of_product_are_global():
    f = smoothapprox.get_target("prod_coords", 2, 3.0)
    coeffs = smoothapprox.taylor_coeffs(f, [0.5, -0.25])
    for alpha, c in coeffs.items():
        assert c == pytest.approx(1.0 if alpha == (1, 1) else 0.0, abs=1e-12)


def test_f1_reference_converges_at_rate_r():
    f = smoothapprox.get_target("exp_neg_norm2", 2, 2.0)
    x = _grid(2, 301)
    exact = f(x)
    sizes = [4, 8, 16, 32]
    errors = [np.max(np.abs(smoothapprox.f1_reference(f, N, x) - exact))
              for N in sizes]
    slope, _ = np.polyfit(np.log(sizes), np.log(errors), 1)
    assert slope <= -1.7


def test_f1_reference_reproduces_low_degree_polynomials(rng):
    f = smoothapprox.get_target("sum_coords", 3, 2.0)
    x = rng.uniform(-1, 1, size=(300, 3))
    npt.assert_allclose(smoothapprox.f1_reference(f, 3, x), f(x), atol=1e-12)


def test_grid_size_and_depth():
    assert smoothapprox.grid_size(0.1, 2, 2.0) == 3
    assert smoothapprox.grid_size(0.01, 2, 2.0) == 9
    assert smoothapprox.gate_epsilon(0.1, 2, 2.0) == pytest.approx(0.01)
    assert smoothapprox.smooth_depth(2, 1, 3) == 45


def test_psi_front_outputs(rng):
    N = 3
    front = smoothapprox.psi_front(2, N)
    x = rng.uniform(-1, 1, size=(100, 2))
    out = front(x)
    z = (x + 1) / 2
    for k in range(2):
        for j in range(N + 1):
            npt.assert_allclose(out[:, k * (N + 1) + j],
                                smoothapprox.psi(3 * N * z[:, k] - 3 * j),
                                atol=1e-12)
    npt.assert_allclose(out[:, 2 * (N + 1):2 * (N + 1) + 2], x, atol=1e-12)
    npt.assert_allclose(out[:, -1], 1.0)


def test_smooth_net_is_isolated_from_local_approximation(rng):
    f = smoothapprox.get_target("exp_neg_norm2", 2, 2.0)
    cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=0.5)
    net, report = smoothapprox.build_smooth_net(f, 0.1, cfg)
    assert net.depth() == smoothapprox.smooth_depth(2, 1, 2)
    assert report.grid_size == 3
    assert report.n_branches <= 16 * 3
    assert report.free_params == netcore.count_free_params(net)
    x = rng.uniform(-1, 1, size=(2000, 2))
    gap = np.max(np.abs(net(x)[:, 0] -
                        smoothapprox.f1_reference(f, report.grid_size, x)))
    assert gap <= report.isolation_bound(2, 1)
    assert report.to_json_obj()["grid_size"] == 3


@pytest.mark.parametrize("epsilon", [0.1, 0.05])
def test_smooth_net_parameter_magnitude(epsilon):
    f = smoothapprox.get_target("exp_neg_norm2", 2, 2.0)
    cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=0.5)
    net, report = smoothapprox.build_smooth_net(f, epsilon, cfg)
    # the psi slopes and offsets stay under 3 * eps^(-1/r)
    assert 1.5 * report.grid_size + 2 <= 3 * epsilon ** -0.5
    gate_magnitude = report.gate_bound * max(1.0, report.coeff_bound)
    bound = max(report.b_tilde, 3 * epsilon ** -0.5, gate_magnitude)
    assert net.param_bound() == report.param_bound
    assert net.param_bound() <= bound
    assert report.magnitude_bound == pytest.approx(bound)


@pytest.mark.slow
def test_smooth_net_error_shrinks_with_epsilon(rng):
    f = smoothapprox.get_target("exp_neg_norm2", 2, 2.0)
    cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=0.5)
    x = rng.uniform(-1, 1, size=(2000, 2))
    errors = [
        np.max(np.abs(smoothapprox.smooth_net(f, eps, cfg)(x)[:, 0] - f(x)))
        for eps in (0.1, 0.01)
    ]
    assert errors[1] < errors[0]


def test_zero_target_gives_zero_net():
    f = smoothapprox.get_target("zero", 2, 2.0)
    cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=0.5)
    net, report = smoothapprox.build_smooth_net(f, 0.1, cfg)
    assert report.n_branches == 0
    assert netcore.count_free_params(net) == 0
    assert net.depth() == smoothapprox.smooth_depth(2, 1, 2)


def test_smooth_net_rejects_bad_inputs():
    cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=0.5)
    with pytest.raises(InvalidConfigError):
        smoothapprox.smooth_net(
            smoothapprox.get_target("zero", 1, 2.0), 1.5, cfg,
        )
    with pytest.raises(InvalidInputError):
        smoothapprox.smooth_net(
            smoothapprox.get_target("zero", 4, 2.0), 0.1, cfg,
        )
