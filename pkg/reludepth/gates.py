"""
Product gates: ReLU networks approximating ``t**2``, ``u*v`` and
``u_1*...*u_l`` with fixed depth.

The square gate uses ``t**2 = t - sum_s g_s(t) / 4**s`` where ``g_s`` is the
s-fold composition of the hat function. The first S levels of the series are
spread over ``l_tilde`` composition layers; a layer realizing k consecutive
levels needs ``2**k`` units, so accuracy is bought with width once the depth
is fixed.
"""
import dataclasses
import functools
import logging
import typing

import numpy as np

from . import netcore
from .errors import InvalidConfigError, InvalidInputError, SpecViolationError
from .netcore import LayerSpec, ReluNet


logger = logging.getLogger(__name__)

# share of the product error budget given to each of the three squares
SQUARE_BUDGET_DIVISOR = 24

# carried factors of an l-ary product live in [-1, 1]
FACTOR_BOUND = 1.0


@dataclasses.dataclass(frozen=True)
class GateConfig:
    theta: float
    l_tilde: int
    epsilon: float
    arity: int = 2

    def __post_init__(self) -> None:
        if not self.theta > 0:
            raise InvalidConfigError("theta must be positive")
        if self.l_tilde < 1 or self.l_tilde <= 1 / (2 * self.theta):
            raise InvalidConfigError(
                "l_tilde={} must exceed 1/(2*theta)={:.6g}".format(
                    self.l_tilde, 1 / (2 * self.theta),
                )
            )
        if not 0 < self.epsilon < 1:
            raise InvalidConfigError(
                "epsilon={!r} outside (0, 1)".format(self.epsilon)
            )
        if self.arity < 1:
            raise InvalidConfigError("arity must be at least 1")

    def with_epsilon(self, epsilon: float) -> "GateConfig":
        return dataclasses.replace(self, epsilon=epsilon)

    def with_arity(self, arity: int) -> "GateConfig":
        return dataclasses.replace(self, arity=arity)

    @property
    def block_depth(self) -> int:
        """Depth of one binary product gate."""
        return 2 * self.l_tilde + 8


@dataclasses.dataclass(frozen=True)
class GateReport:
    depth: int
    free_params: int
    param_bound: float
    width: int
    levels: typing.Tuple[int, ...]

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        return dataclasses.asdict(self)


def sawtooth(i: int, x: typing.Any) -> np.ndarray:
    """The i-fold composed hat function on [0, 1]."""
    period = 2.0 ** (1 - i)
    r = np.mod(np.asarray(x, dtype=np.float64), period)
    return 2.0 ** i * np.minimum(r, period - r)


def series_length(epsilon: float) -> int:
    """Smallest S >= 1 with ``4**-(S+1) <= epsilon``."""
    levels = 1
    while 4.0 ** -(levels + 1) > epsilon:
        levels += 1
    return levels


def truncated_square(levels: int, t: typing.Any) -> np.ndarray:
    """Reference value of ``t - sum_{s <= levels} g_s(t) / 4**s``."""
    t = np.asarray(t, dtype=np.float64)
    acc = np.zeros_like(t)
    for s in range(1, levels + 1):
        acc += sawtooth(s, t) / 4.0 ** s
    return t - acc


def sawtooth_levels(cfg: GateConfig) -> typing.Tuple[int, ...]:
    """Series levels realized by each composition layer of a square gate."""
    total = series_length(cfg.epsilon)
    n_layers = min(total, cfg.l_tilde)
    base, rem = divmod(total, n_layers)
    return tuple([base + 1] * rem + [base] * (n_layers - rem))


def _hat_coefficients(i: int, k: int) -> np.ndarray:
    # g_i(y) = sum_p c_p relu(y - p / 2**k) on [0, 1], for i <= k
    n = 2 ** k
    values = sawtooth(i, np.arange(n + 1) / n)
    slopes = np.diff(values) * n
    return np.concatenate([slopes[:1], np.diff(slopes)])


def _composition_layer(
        y_form: np.ndarray,
        k: int,
        carries: typing.Sequence[np.ndarray],
        prefix: str,
        ) -> LayerSpec:
    # units relu(y - p / 2**k) for every p, then one unit per carried form
    n = 2 ** k
    in_dim = len(y_form)
    rows, cols, values, labels = [], [], [], []
    (y_cols,) = np.nonzero(y_form)
    for p in range(n):
        for q in y_cols:
            rows.append(p)
            cols.append(q)
            values.append(y_form[q])
            labels.append("{}.y{}".format(prefix, q))
    for c, form in enumerate(carries):
        for q in np.flatnonzero(form):
            rows.append(n + c)
            cols.append(q)
            values.append(form[q])
            labels.append("{}.c{}.{}".format(prefix, c, q))
    biases = np.concatenate([-np.arange(n) / n, np.zeros(len(carries))])
    bias_mask = biases != 0
    return LayerSpec.from_triplets(
        (n + len(carries), in_dim),
        np.array(rows), np.array(cols), np.array(values),
        biases,
        bias_mask=bias_mask,
        weight_groups=labels,
        bias_groups=[
            "{}.b{}".format(prefix, p) if m else None
            for p, m in enumerate(bias_mask)
        ],
    )


def _gate_prefix(kind: str, cfg: GateConfig) -> str:
    return "{}[L={},eps={!r}]".format(kind, cfg.l_tilde, cfg.epsilon)


@functools.lru_cache(maxsize=64)
def square_gate(cfg: GateConfig) -> ReluNet:
    """
    Approximate ``t**2`` on [0, 1] to `cfg.epsilon` with depth
    ``2*l_tilde + 7``.
    """
    levels = sawtooth_levels(cfg)
    depth = cfg.block_depth - 1
    prefix = _gate_prefix("sq", cfg)

    layers: typing.List[LayerSpec] = []
    y_form = np.array([1.0])
    t_form = np.array([1.0])
    a_form: typing.Optional[np.ndarray] = None
    done = 0
    for j, k in enumerate(levels, 1):
        n = 2 ** k
        carries = [t_form] if j > 1 else []
        if a_form is not None:
            carries.append(a_form)
        layer = _composition_layer(y_form, k, carries,
                                   "{}.L{}".format(prefix, j))
        layers.append(layer)

        width = layer.out_dim
        y_form = np.zeros(width)
        y_form[:n] = _hat_coefficients(k, k)
        new_a = np.zeros(width)
        for i in range(1, k + 1):
            new_a[:n] += _hat_coefficients(i, k) / 4.0 ** (done + i)
        if a_form is not None:
            new_a[width - 1] += 1.0
        a_form = new_a
        t_form = np.zeros(width)
        # unit 0 of the first layer is relu(t) = t
        t_form[0 if j == 1 else n] = 1.0
        done += k

    assert a_form is not None
    if depth > len(layers):
        carry = LayerSpec.structural(
            np.vstack([t_form, a_form]),
            np.zeros(2),
            prefix="{}.carry".format(prefix),
        )
        layers.append(carry)
        t_form, a_form = np.array([1.0, 0.0]), np.array([0.0, 1.0])

    output = LayerSpec.structural(
        (t_form - a_form)[np.newaxis, :],
        np.zeros(1),
        prefix="{}.out".format(prefix),
    )
    net = ReluNet(input_dim=1, layers=tuple(layers), output_map=output)
    logger.debug("square gate eps=%g levels=%s width=%d",
                 cfg.epsilon, levels, net.width())
    return netcore.pad_to_depth(net, depth)


@functools.lru_cache(maxsize=64)
def product2_gate(cfg: GateConfig) -> ReluNet:
    """
    Approximate ``u*v`` on [-2, 2]^2 to `cfg.epsilon` with depth
    ``2*l_tilde + 8``, via ``uv = 8a**2 - 2b**2 - 2c**2`` for
    ``a = |u+v|/4``, ``b = |u|/2``, ``c = |v|/2``.
    """
    square_cfg = dataclasses.replace(
        cfg,
        epsilon=cfg.epsilon / SQUARE_BUDGET_DIVISOR,
        arity=1,
    )
    square = square_gate(square_cfg)
    prefix = _gate_prefix("x2", cfg)

    abs_in = LayerSpec.structural(
        [[0.25, 0.25], [-0.25, -0.25],
         [0.5, 0.0], [-0.5, 0.0],
         [0.0, 0.5], [0.0, -0.5]],
        np.zeros(6),
        prefix="{}.abs".format(prefix),
    )
    abs_out = LayerSpec.structural(
        [[1, 1, 0, 0, 0, 0],
         [0, 0, 1, 1, 0, 0],
         [0, 0, 0, 0, 1, 1]],
        np.zeros(3),
        fixed_weights=True,
    )
    magnitudes = ReluNet(input_dim=2, layers=(abs_in,), output_map=abs_out)
    squares = netcore.parallel([
        netcore.embed_inputs(square, [i], 3) for i in range(3)
    ])
    combine = LayerSpec.structural(
        [[8.0, -2.0, -2.0]], np.zeros(1), fixed_weights=True,
    )
    return netcore.append_affine(
        netcore.compose(squares, magnitudes),
        combine,
    )


@functools.lru_cache(maxsize=64)
def productL_gate(cfg: GateConfig) -> ReluNet:
    """
    Approximate ``u_1 * ... * u_l`` on [-1, 1]^l to `cfg.epsilon`.

    The product is a chain of l-1 binary gates of accuracy epsilon/l, all
    sharing their parameters; factors not yet consumed ride along in identity
    channels. Arity 1 is a single identity channel.
    """
    arity = cfg.arity
    if arity == 1:
        return netcore.identity_channels(1, 1, FACTOR_BOUND)

    stage_gate = product2_gate(cfg.with_epsilon(cfg.epsilon / arity))
    depth = stage_gate.depth()
    net: typing.Optional[ReluNet] = None
    for j in range(arity - 1):
        width = arity - j
        parts = [netcore.embed_inputs(stage_gate, [0, 1], width)]
        if width > 2:
            parts.append(netcore.embed_inputs(
                netcore.identity_channels(width - 2, depth, FACTOR_BOUND),
                list(range(2, width)),
                width,
            ))
        stage = netcore.parallel(parts)
        net = stage if net is None else netcore.compose(stage, net)
    assert net is not None
    return net


def product_depth(arity: int, l_tilde: int) -> int:
    """Depth of `productL_gate`; never above ``2*arity*l_tilde + 8*arity``."""
    if arity == 1:
        return 1
    return (arity - 1) * (2 * l_tilde + 8)


def stage_trace(cfg: GateConfig, u: typing.Any) -> np.ndarray:
    """
    Running products after each binary stage of ``productL_gate(cfg)``.

    Returns an array of shape (n, arity - 1).
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if u.shape[1] != cfg.arity or cfg.arity < 2:
        raise InvalidInputError(
            "expected {} factors per row".format(cfg.arity)
        )
    stage_gate = product2_gate(cfg.with_epsilon(cfg.epsilon / cfg.arity))
    trace = np.empty((u.shape[0], cfg.arity - 1))
    running = u[:, 0]
    for j in range(1, cfg.arity):
        running = netcore.evaluate(
            stage_gate, np.column_stack([running, u[:, j]]),
        )[:, 0]
        trace[:, j - 1] = running
    peak = float(np.max(np.abs(trace))) if trace.size else 0.0
    if peak > 2.0:
        # stage inputs must stay inside the binary gate domain [-2, 2]
        raise SpecViolationError(
            "intermediate product reached {!r}, outside [-2, 2]".format(peak)
        )
    return trace


def gate_report(net: ReluNet, cfg: GateConfig) -> GateReport:
    square_cfg = dataclasses.replace(
        cfg,
        epsilon=cfg.epsilon / SQUARE_BUDGET_DIVISOR / max(cfg.arity, 1),
    )
    return GateReport(
        depth=net.depth(),
        free_params=netcore.count_free_params(net),
        param_bound=net.param_bound(),
        width=net.width(),
        levels=sawtooth_levels(square_cfg),
    )


def fit_scaling_exponent(
        epsilons: typing.Sequence[float],
        counts: typing.Sequence[float],
        ) -> float:
    """Least-squares slope of log(count) against log(1/epsilon)."""
    x = np.log(1 / np.asarray(epsilons, dtype=np.float64))
    y = np.log(np.asarray(counts, dtype=np.float64))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def max_abs_error(
        net: ReluNet,
        points: np.ndarray,
        reference: np.ndarray,
        ) -> float:
    values = netcore.evaluate(net, points)
    return float(np.max(np.abs(values[:, 0] - reference)))
