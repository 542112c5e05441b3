"""
Nets for targets with group structure, ``f(x) = g(P_1(x_1), ..., P_d*(x_d*))``
where each ``P_k`` is a sparse polynomial of its own block of coordinates.

The inner polynomials are approximated in parallel, clamped into [-1, 1] and
fed into a smooth net for ``g``.
"""
import dataclasses
import logging
import math
import typing

import numpy as np

from . import gates, netcore, polyapprox, smoothapprox
from .errors import InvalidConfigError, InvalidInputError, SpecViolationError
from .netcore import LayerSpec, ReluNet
from .polyapprox import PolySpec
from .smoothapprox import SmoothTarget


logger = logging.getLogger(__name__)

INNER_BOUND = 0.5
INNER_TOLERANCE = 1e-12

# group order used by the radial constructions
RADIAL_IOTA = 2


@dataclasses.dataclass(frozen=True)
class CompositeSpec:
    block_dims: typing.Tuple[int, ...]
    inner_polys: typing.Tuple[PolySpec, ...]
    outer: SmoothTarget

    def __post_init__(self) -> None:
        object.__setattr__(self, "block_dims", tuple(self.block_dims))
        object.__setattr__(self, "inner_polys", tuple(self.inner_polys))
        if not self.block_dims:
            raise SpecViolationError("a composite needs at least one block")
        if len(self.inner_polys) != len(self.block_dims):
            raise SpecViolationError(
                "{} blocks but {} inner polynomials".format(
                    len(self.block_dims), len(self.inner_polys),
                )
            )
        if self.outer.dim != len(self.block_dims):
            raise SpecViolationError(
                "outer target takes {} inputs, spec has {} blocks".format(
                    self.outer.dim, len(self.block_dims),
                )
            )
        for k, (dim, p) in enumerate(zip(self.block_dims, self.inner_polys)):
            if p.dim != dim:
                raise SpecViolationError(
                    "block {} has dimension {}, its polynomial {}".format(
                        k, dim, p.dim,
                    )
                )
            if p.coeff_bound > INNER_BOUND:
                raise SpecViolationError(
                    "block {} coefficient bound {!r} exceeds 1/2".format(
                        k, p.coeff_bound,
                    )
                )
            total = float(np.sum(np.abs(p.coefficients())))
            if total > INNER_BOUND + INNER_TOLERANCE:
                raise SpecViolationError(
                    "block {} polynomial can leave [-1/2, 1/2]".format(k)
                )

    @property
    def dim(self) -> int:
        return sum(self.block_dims)

    @property
    def d_star(self) -> int:
        return len(self.block_dims)

    @property
    def iota(self) -> int:
        return max(p.degree for p in self.inner_polys)

    @property
    def mu(self) -> int:
        return max(max(p.sparsity, 1) for p in self.inner_polys)

    @property
    def tau_r(self) -> float:
        return 1.0 if self.outer.r >= 1 else self.outer.v

    def block_columns(self) -> typing.List[typing.List[int]]:
        columns, start = [], 0
        for dim in self.block_dims:
            columns.append(list(range(start, start + dim)))
            start += dim
        return columns


def inner_values(spec: CompositeSpec, x: typing.Any) -> np.ndarray:
    points = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if points.shape[1] != spec.dim:
        raise InvalidInputError(
            "expected points of dimension {}, got {}".format(
                spec.dim, points.shape[1],
            )
        )
    values = np.column_stack([
        polyapprox.eval_poly(p, points[:, cols])
        for p, cols in zip(spec.inner_polys, spec.block_columns())
    ])
    if np.any(np.abs(values) > INNER_BOUND + INNER_TOLERANCE):
        raise SpecViolationError("inner polynomial value outside [-1/2, 1/2]")
    return values


def eval_composite(spec: CompositeSpec, x: typing.Any) -> typing.Any:
    values = spec.outer(inner_values(spec, x))
    if np.ndim(x) == 1:
        return float(values[0])
    return values


def clamp_net(dim: int) -> ReluNet:
    """``min(1, max(-1, t))`` per channel, as ``relu(t+1) - relu(t-1) - 1``."""
    if dim < 1:
        raise InvalidInputError("clamp dimension must be positive")
    idx = np.arange(dim)
    hidden = LayerSpec.from_triplets(
        (2 * dim, dim),
        np.concatenate([2 * idx, 2 * idx + 1]),
        np.concatenate([idx, idx]),
        np.ones(2 * dim),
        np.tile([1.0, -1.0], dim),
        weight_groups=["clamp.w"] * (2 * dim),
        bias_groups=["clamp.b+", "clamp.b-"] * dim,
    )
    output = LayerSpec.from_triplets(
        (dim, 2 * dim),
        np.concatenate([idx, idx]),
        np.concatenate([2 * idx, 2 * idx + 1]),
        np.concatenate([np.ones(dim), -np.ones(dim)]),
        -np.ones(dim),
        weight_groups=["clamp.o+"] * dim + ["clamp.o-"] * dim,
        bias_groups=["clamp.c"] * dim,
    )
    return ReluNet(input_dim=dim, layers=(hidden,), output_map=output)


def composite_depth(d_star: int, r: float, l_tilde: int, iota: int) -> int:
    s, _ = smoothapprox.smoothness_split(r)
    return smoothapprox.smooth_depth(d_star, s, l_tilde) + \
        polyapprox.poly_depth(iota, l_tilde)


@dataclasses.dataclass(frozen=True)
class CompositeReport:
    depth: int
    expected_depth: int
    inner_epsilon: float
    outer_epsilon: float
    free_params: int
    outer_params: int
    inner_params: int
    clamp_params: int
    # parameters counted in more than one part (shared labels)
    overlap: int
    param_bound: float
    smooth_group_term: float
    sparse_group_term: float
    tradeoff_outer_term: float
    tradeoff_inner_term: float

    @property
    def proof_param_count(self) -> float:
        return self.smooth_group_term + self.sparse_group_term + \
            self.tradeoff_outer_term + self.tradeoff_inner_term

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        result = dataclasses.asdict(self)
        result["proof_param_count"] = self.proof_param_count
        return result


def _inner_net(spec: CompositeSpec, nu: float,
               cfg: gates.GateConfig) -> ReluNet:
    depth = polyapprox.poly_depth(spec.iota, cfg.l_tilde) - 1
    blocks = []
    for k, (p, cols) in enumerate(zip(spec.inner_polys,
                                      spec.block_columns())):
        padded = PolySpec(dim=p.dim, degree=spec.iota,
                          coeff_bound=p.coeff_bound, terms=p.terms)
        block = polyapprox.sparse_poly_net(
            padded, cfg.with_epsilon(nu), depth=depth, name="P{}".format(k),
        )
        blocks.append(netcore.embed_inputs(block, cols, spec.dim))
    return netcore.parallel(blocks)


def build_composite_net(
        spec: CompositeSpec,
        epsilon: float,
        cfg: gates.GateConfig,
        depth: typing.Optional[int] = None,
        ) -> typing.Tuple[ReluNet, CompositeReport]:
    if not 0 < epsilon < 0.5:
        raise InvalidConfigError(
            "epsilon={!r} outside (0, 1/2)".format(epsilon)
        )
    tau = spec.tau_r
    outer_eps = epsilon
    inner_eps = epsilon ** (1 / tau)

    inner = _inner_net(spec, inner_eps, cfg)
    clamp = clamp_net(spec.d_star)
    outer = smoothapprox.smooth_net(spec.outer, outer_eps, cfg)
    net = netcore.compose(outer, netcore.compose(clamp, inner))
    expected = composite_depth(spec.d_star, spec.outer.r, cfg.l_tilde,
                               spec.iota)
    if depth is not None:
        net = netcore.pad_to_depth(net, depth)

    counts = [netcore.count_free_params(part)
              for part in (outer, inner, clamp)]
    total = netcore.count_free_params(net)
    d_star, r, s = spec.d_star, spec.outer.r, spec.outer.s
    report = CompositeReport(
        depth=net.depth(),
        expected_depth=expected,
        inner_epsilon=inner_eps,
        outer_epsilon=outer_eps,
        free_params=total,
        outer_params=counts[0],
        inner_params=counts[1],
        clamp_params=counts[2],
        overlap=sum(counts) - total,
        param_bound=net.param_bound(),
        smooth_group_term=(8 * d_star + 5) * math.comb(s + d_star, s) *
        epsilon ** (-d_star / r),
        sparse_group_term=float(spec.mu * d_star),
        tradeoff_outer_term=(d_star + s) ** cfg.theta *
        epsilon ** (-(r + d_star) * cfg.theta / r),
        tradeoff_inner_term=(spec.mu * spec.iota) ** cfg.theta *
        epsilon ** (-cfg.theta / tau),
    )
    logger.debug("composite net: d*=%d iota=%d depth=%d params=%d",
                 d_star, spec.iota, net.depth(), total)
    return net, report


def composite_net(
        spec: CompositeSpec,
        epsilon: float,
        cfg: gates.GateConfig,
        depth: typing.Optional[int] = None,
        ) -> ReluNet:
    return build_composite_net(spec, epsilon, cfg, depth)[0]


# radial and partially radial targets

def _half_norm2_poly(dim: int) -> PolySpec:
    # |x|^2 / (2 dim), so the value stays in [0, 1/2]
    terms = {
        tuple(2 if i == k else 0 for i in range(dim)): 1 / (2 * dim)
        for k in range(dim)
    }
    return PolySpec(dim=dim, degree=RADIAL_IOTA, coeff_bound=INNER_BOUND,
                    terms=terms)


def _half_linear_poly() -> PolySpec:
    return PolySpec(dim=1, degree=RADIAL_IOTA, coeff_bound=INNER_BOUND,
                    terms={(1,): 0.5})


def radial_spec(g: SmoothTarget, dim: int) -> CompositeSpec:
    """
    ``x -> g(|x|^2 / dim)`` for g on [0, 1]; the outer function is
    ``u -> g(2u)``.
    """
    if g.dim != 1:
        raise InvalidInputError("radial profile must be univariate")
    if dim < 1:
        raise InvalidInputError("dimension must be positive")
    return CompositeSpec(
        block_dims=(dim,),
        inner_polys=(_half_norm2_poly(dim),),
        outer=smoothapprox.rescaled(g, 2.0),
    )


def partial_radial_spec(
        g: SmoothTarget,
        dim: int,
        d_prime: int,
        ) -> CompositeSpec:
    """
    ``x -> g(t, x_{d'+1}, ..., x_d)`` with ``t = |x_1..x_d'|^2 / d'``.
    """
    if not 1 <= d_prime <= dim:
        raise InvalidInputError(
            "need 1 <= d_prime <= dim, got d_prime={}".format(d_prime)
        )
    d_star = dim - d_prime + 1
    if g.dim != d_star:
        raise InvalidInputError(
            "profile takes {} inputs, expected {}".format(g.dim, d_star)
        )
    return CompositeSpec(
        block_dims=(d_prime,) + (1,) * (dim - d_prime),
        inner_polys=(_half_norm2_poly(d_prime),) +
        (_half_linear_poly(),) * (dim - d_prime),
        outer=smoothapprox.rescaled(g, 2.0),
    )


@dataclasses.dataclass(frozen=True)
class BudgetPlan:
    theta: float
    l_tilde: int
    epsilon: float
    depth: int

    def gate_config(self) -> gates.GateConfig:
        return gates.GateConfig(theta=self.theta, l_tilde=self.l_tilde,
                                epsilon=self.epsilon)


def radial_plan(g: SmoothTarget, dim: int, n_budget: int) -> BudgetPlan:
    r = g.r
    s, v = smoothapprox.smoothness_split(r)
    tau = 1.0 if r >= 1 else v
    l_tilde = math.ceil(2 * (r + 1) / tau)
    epsilon = float(n_budget) ** -r
    if not 0 < epsilon < 0.5:
        raise InvalidConfigError(
            "budget n={} gives epsilon={!r} outside (0, 1/2)".format(
                n_budget, epsilon,
            )
        )
    return BudgetPlan(
        theta=tau / (2 + 2 * r),
        l_tilde=l_tilde,
        epsilon=epsilon,
        depth=2 * (dim + s + 2) * l_tilde + 8 * (dim + s) + 20,
    )


def partial_radial_plan(
        g: SmoothTarget,
        dim: int,
        d_prime: int,
        n_budget: int,
        ) -> BudgetPlan:
    r = g.r
    s, v = smoothapprox.smoothness_split(r)
    if not 1 <= d_prime <= dim:
        raise InvalidInputError(
            "need 1 <= d_prime <= dim, got d_prime={}".format(d_prime)
        )
    tau = 1.0 if r >= 1 else v
    d_star = dim - d_prime + 1
    if d_star > smoothapprox.MAX_NET_DIM:
        raise InvalidConfigError(
            "outer dimension d*={} exceeds the smooth-net limit {}; "
            "raise d_prime to at least {}".format(
                d_star, smoothapprox.MAX_NET_DIM,
                dim + 1 - smoothapprox.MAX_NET_DIM,
            )
        )
    l_tilde = math.ceil(2 * (d_star + r) / (d_star * tau))
    epsilon = float(n_budget) ** (-r / d_star)
    if not 0 < epsilon < 0.5:
        raise InvalidConfigError(
            "budget n={} gives epsilon={!r} outside (0, 1/2)".format(
                n_budget, epsilon,
            )
        )
    return BudgetPlan(
        theta=d_star * tau / (2 * (d_star + r)),
        l_tilde=l_tilde,
        epsilon=epsilon,
        depth=2 * (d_star + s + 2) * l_tilde + 8 * (d_star + s) + 20,
    )


def radial_net(g: SmoothTarget, dim: int, n_budget: int) -> ReluNet:
    plan = radial_plan(g, dim, n_budget)
    return composite_net(radial_spec(g, dim), plan.epsilon,
                         plan.gate_config(), depth=plan.depth)


def partial_radial_net(
        g: SmoothTarget,
        dim: int,
        d_prime: int,
        n_budget: int,
        ) -> ReluNet:
    plan = partial_radial_plan(g, dim, d_prime, n_budget)
    return composite_net(partial_radial_spec(g, dim, d_prime), plan.epsilon,
                         plan.gate_config(), depth=plan.depth)
