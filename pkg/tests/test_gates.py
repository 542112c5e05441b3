import numpy as np
import numpy.testing as npt
import pytest

from reludepth import gates, netcore
from reludepth.errors import (
    InvalidConfigError,
    InvalidInputError,
    SpecViolationError,
)


def test_sawtooth_values():
    npt.assert_allclose(gates.sawtooth(1, [0.0, 0.25, 0.5, 1.0]),
                        [0.0, 0.5, 1.0, 0.0])
    npt.assert_allclose(gates.sawtooth(2, [0.25, 0.5, 0.75]),
                        [1.0, 0.0, 1.0])


def test_series_length():
    assert gates.series_length(0.5) == 1
    assert gates.series_length(1 / 16) == 1
    assert gates.series_length(0.01) == 3
    assert gates.series_length(0.001) == 4


def test_truncated_square_error_bound():
    t = np.linspace(0, 1, 1001)
    for levels in (1, 3, 5):
        err = np.max(np.abs(gates.truncated_square(levels, t) - t ** 2))
        assert err <= 4.0 ** -(levels + 1) + 1e-12


def test_levels_are_spread_over_layers():
    cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=1e-4)
    levels = gates.sawtooth_levels(cfg)
    assert sum(levels) == gates.series_length(1e-4)
    assert len(levels) == 2
    assert max(levels) - min(levels) <= 1


@pytest.mark.parametrize("kwargs", [
    {"theta": 0.0, "l_tilde": 2, "epsilon": 0.1},
    {"theta": 0.5, "l_tilde": 1, "epsilon": 0.1},
    {"theta": 0.5, "l_tilde": 2, "epsilon": 1.5},
    {"theta": 0.5, "l_tilde": 2, "epsilon": 0.1, "arity": 0},
])
def test_invalid_gate_configs(kwargs):
    with pytest.raises(InvalidConfigError):
        gates.GateConfig(**kwargs)


@pytest.mark.parametrize("epsilon", [0.1, 0.01, 0.001])
def test_square_gate_accuracy_and_depth(epsilon):
    cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=epsilon, arity=1)
    net = gates.square_gate(cfg)
    t = np.linspace(0, 1, 2001)
    assert gates.max_abs_error(net, t[:, None], t ** 2) <= epsilon
    assert net.depth() == 2 * cfg.l_tilde + 7


def test_square_gate_depth_is_fixed_as_width_grows():
    counts, widths = [], []
    for epsilon in (1e-1, 1e-2, 1e-3, 1e-4):
        cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=epsilon)
        net = gates.square_gate(cfg)
        assert net.depth() == 11
        counts.append(netcore.count_free_params(net))
        widths.append(net.width())
    assert counts == sorted(counts)
    assert counts[-1] > counts[0]
    assert widths[-1] > widths[0]


def test_product2_gate(gate_cfg):
    net = gates.product2_gate(gate_cfg)
    grid = np.linspace(-2, 2, 81)
    u, v = np.meshgrid(grid, grid)
    points = np.column_stack([u.ravel(), v.ravel()])
    assert gates.max_abs_error(net, points, points[:, 0] * points[:, 1]) \
        <= gate_cfg.epsilon
    assert net.depth() == gate_cfg.block_depth
    netcore.validate(net)


def test_productL_gate(gate_cfg, rng):
    cfg = gate_cfg.with_arity(3)
    net = gates.productL_gate(cfg)
    u = rng.uniform(-1, 1, size=(3000, 3))
    assert gates.max_abs_error(net, u, np.prod(u, axis=1)) <= cfg.epsilon
    assert net.depth() == gates.product_depth(3, cfg.l_tilde)
    assert net.depth() <= 2 * 3 * cfg.l_tilde + 8 * 3


def test_productL_arity_one_is_identity(gate_cfg):
    net = gates.productL_gate(gate_cfg.with_arity(1))
    x = np.linspace(-1, 1, 11)[:, None]
    npt.assert_allclose(net(x), x, atol=1e-15)
    assert gates.product_depth(1, gate_cfg.l_tilde) == 1


def test_stage_trace_ends_at_gate_output(gate_cfg, rng):
    cfg = gate_cfg.with_arity(4)
    u = rng.uniform(-1, 1, size=(200, 4))
    trace = gates.stage_trace(cfg, u)
    assert trace.shape == (200, 3)
    npt.assert_allclose(trace[:, 0], u[:, 0] * u[:, 1], atol=cfg.epsilon)
    npt.assert_allclose(trace[:, -1], gates.productL_gate(cfg)(u)[:, 0],
                        atol=1e-9)
    with pytest.raises(InvalidInputError):
        gates.stage_trace(cfg, u[:, :3])


def test_gate_report(gate_cfg):
    net = gates.product2_gate(gate_cfg)
    report = gates.gate_report(net, gate_cfg)
    assert report.depth == gate_cfg.block_depth
    assert report.free_params == netcore.count_free_params(net)
    assert report.width == net.width()
    obj = report.to_json_obj()
    assert obj["depth"] == report.depth


def test_fit_scaling_exponent():
    eps = [1e-1, 1e-2, 1e-3]
    counts = [10 * (1 / e) ** 0.5 for e in eps]
    assert gates.fit_scaling_exponent(eps, counts) == pytest.approx(0.5)


@pytest.mark.parametrize("theta,l_tilde,arity", [
    (0.5, 2, 2),
    (0.5, 2, 3),
    (0.5, 3, 2),
    (0.25, 3, 2),
])
def test_free_params_grow_at_most_like_eps_to_minus_theta(
        theta, l_tilde, arity):
    epsilons = [1e-1, 1e-2, 1e-3, 1e-4]
    counts = []
    for epsilon in epsilons:
        cfg = gates.GateConfig(theta=theta, l_tilde=l_tilde,
                               epsilon=epsilon, arity=arity)
        net = gates.productL_gate(cfg)
        assert net.depth() == gates.product_depth(arity, l_tilde)
        counts.append(netcore.count_free_params(net))
    assert gates.fit_scaling_exponent(epsilons, counts) <= theta + 0.15


@pytest.mark.parametrize("epsilon", [0.1, 0.01])
def test_stage_products_stay_in_gate_domain(epsilon, rng):
    arity = 5
    cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=epsilon,
                           arity=arity)
    corners = np.array([[1.0] * arity, [-1.0] * arity,
                        [1.0, -1.0, 1.0, -1.0, 1.0]])
    u = np.vstack([corners, rng.uniform(-1, 1, size=(2000, arity))])
    trace = gates.stage_trace(cfg, u)
    assert np.max(np.abs(trace)) <= 2.0
    for j in range(arity - 1):
        assert np.max(np.abs(trace[:, j])) <= 1 + (j + 1) * epsilon / arity


def test_stage_trace_flags_inputs_outside_the_cube(gate_cfg):
    cfg = gate_cfg.with_arity(3)
    with pytest.raises(SpecViolationError):
        gates.stage_trace(cfg, [[1.5, 1.5, 1.5]])


@pytest.mark.parametrize("arity", [2, 5])
def test_productL_gate_small_sample(arity, gate_cfg, rng):
    cfg = gate_cfg.with_arity(arity)
    net = gates.productL_gate(cfg)
    u = rng.uniform(-1, 1, size=(2000, arity))
    assert gates.max_abs_error(net, u, np.prod(u, axis=1)) <= cfg.epsilon
    assert net.depth() <= 2 * arity * cfg.l_tilde + 8 * arity


@pytest.mark.slow
@pytest.mark.parametrize("arity", [2, 3, 5])
@pytest.mark.parametrize("epsilon", [1e-1, 1e-2, 1e-3])
def test_productL_gate_monte_carlo(arity, epsilon):
    cfg = gates.GateConfig(theta=0.5, l_tilde=2, epsilon=epsilon,
                           arity=arity)
    net = gates.productL_gate(cfg)
    u = np.random.default_rng(arity).uniform(-1, 1, size=(10 ** 5, arity))
    assert gates.max_abs_error(net, u, np.prod(u, axis=1)) <= epsilon
    assert net.depth() <= 2 * arity * cfg.l_tilde + 8 * arity
