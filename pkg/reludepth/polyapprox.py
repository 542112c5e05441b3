"""
Deep nets for sparse polynomials on [-1, 1]^d.

Every monomial is a product of beta factors (repeated coordinates, padded with
literal ones) fed into one shared product gate; the output map sums the
branches with their coefficients.
"""
import dataclasses
import logging
import math
import typing

import numpy as np

from . import gates, netcore
from .errors import InvalidInputError, SpecViolationError
from .netcore import LayerSpec, ReluNet


logger = logging.getLogger(__name__)

Exponent = typing.Tuple[int, ...]

# per-monomial accuracy never exceeds this, so gate configs stay valid
MAX_BRANCH_EPSILON = 0.5


@dataclasses.dataclass(frozen=True)
class PolySpec:
    dim: int
    degree: int
    coeff_bound: float
    terms: typing.Mapping[Exponent, float]

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise SpecViolationError("polynomial dimension must be positive")
        if self.degree < 1:
            raise SpecViolationError("polynomial degree must be at least 1")
        if not self.coeff_bound > 0:
            raise SpecViolationError("coefficient bound must be positive")
        normalized: typing.Dict[Exponent, float] = {}
        for alpha, coeff in self.terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.dim:
                raise SpecViolationError(
                    "exponent {} has length {}, expected {}".format(
                        alpha, len(alpha), self.dim,
                    )
                )
            if min(alpha) < 0 or sum(alpha) > self.degree:
                raise SpecViolationError(
                    "exponent {} not within degree {}".format(
                        alpha, self.degree,
                    )
                )
            if abs(coeff) > self.coeff_bound:
                raise SpecViolationError(
                    "coefficient {!r} of {} exceeds bound {!r}".format(
                        coeff, alpha, self.coeff_bound,
                    )
                )
            normalized[alpha] = float(coeff)
        object.__setattr__(self, "terms", normalized)

    @property
    def sparsity(self) -> int:
        return len(self.terms)

    def exponent_matrix(self) -> np.ndarray:
        if not self.terms:
            return np.zeros((0, self.dim), dtype=np.int64)
        return np.array(list(self.terms.keys()), dtype=np.int64)

    def coefficients(self) -> np.ndarray:
        return np.array(list(self.terms.values()), dtype=np.float64)


def eval_poly(p: PolySpec, x: typing.Any) -> typing.Any:
    """
    Direct evaluation ``sum_alpha c_alpha x^alpha`` at one point or a batch.
    """
    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    if single:
        points = points[np.newaxis, :]
    if points.ndim != 2 or points.shape[1] != p.dim:
        raise InvalidInputError(
            "expected points of dimension {}, got shape {}".format(
                p.dim, np.shape(x),
            )
        )
    monomials = np.prod(
        points[:, np.newaxis, :] ** p.exponent_matrix()[np.newaxis, :, :],
        axis=2,
    )
    values = monomials @ p.coefficients()
    if single:
        return float(values[0])
    return values


def poly_depth(beta: int, l_tilde: int) -> int:
    return 2 * beta * l_tilde + 8 * beta + 1


def coordinate_front(dim: int) -> ReluNet:
    """
    One hidden layer passing ``x`` through and adding a constant-1 output.

    The constant unit is bias-only and fixed, so it costs no parameters.
    """
    passthrough = netcore.identity_channels(dim, 1, 1.0)
    constant = ReluNet(
        input_dim=dim,
        layers=(LayerSpec.structural(
            np.zeros((1, dim)), np.ones(1), fixed_biases=True,
        ),),
        output_map=LayerSpec.structural(
            np.ones((1, 1)), np.zeros(1), fixed_weights=True,
        ),
    )
    return netcore.parallel([passthrough, constant])


def _check_alpha(alpha: typing.Sequence[int], beta: int) -> Exponent:
    exponent = tuple(int(a) for a in alpha)
    if not exponent or min(exponent) < 0:
        raise InvalidInputError(
            "invalid exponent vector {!r}".format(alpha)
        )
    if beta < 1 or sum(exponent) > beta:
        raise InvalidInputError(
            "exponent {} exceeds degree {}".format(exponent, beta)
        )
    return exponent


def _slots(alpha: Exponent, beta: int) -> typing.List[int]:
    # column len(alpha) of the front output is the constant 1
    slots = [k for k, a in enumerate(alpha) for _ in range(a)]
    return slots + [len(alpha)] * (beta - len(slots))


def monomial_net(
        alpha: typing.Sequence[int],
        beta: int,
        cfg: gates.GateConfig,
        ) -> ReluNet:
    """
    Approximate ``x^alpha`` on [-1, 1]^d to `cfg.epsilon` with an arity-beta
    product gate.
    """
    exponent = _check_alpha(alpha, beta)
    gate = gates.productL_gate(cfg.with_arity(beta))
    front = coordinate_front(len(exponent))
    branch = netcore.embed_inputs(gate, _slots(exponent, beta),
                                  len(exponent) + 1)
    return netcore.compose(branch, front)


def zero_net(dim: int, depth: int = 1) -> ReluNet:
    """The constant-0 net; it has no free parameters at any depth."""
    if depth < 1:
        raise InvalidInputError("depth must be at least 1")
    layers = tuple(
        LayerSpec.structural(np.zeros((1, dim if k == 0 else 1)), np.zeros(1))
        for k in range(depth)
    )
    return ReluNet(
        input_dim=dim,
        layers=layers,
        output_map=LayerSpec.structural(np.zeros((1, 1)), np.zeros(1)),
    )


def branch_epsilon(p: PolySpec, epsilon: float) -> float:
    budget = epsilon / (max(p.sparsity, 1) * p.coeff_bound)
    return min(budget, MAX_BRANCH_EPSILON)


def sparse_poly_net(
        p: PolySpec,
        cfg: gates.GateConfig,
        depth: typing.Optional[int] = None,
        name: str = "poly",
        ) -> ReluNet:
    """
    Approximate `p` on [-1, 1]^d to `cfg.epsilon`.

    The result has depth ``2*beta*l_tilde + 8*beta + 1`` unless `depth` asks
    for more. Coefficients are labeled ``<name>.c<i>``, so two polynomials in
    one network need different names.
    """
    target_depth = poly_depth(p.degree, cfg.l_tilde) if depth is None \
        else depth
    support = [(alpha, c) for alpha, c in p.terms.items() if c != 0]
    if not support:
        return zero_net(p.dim, target_depth)

    gate = gates.productL_gate(
        cfg.with_arity(p.degree).with_epsilon(branch_epsilon(p, cfg.epsilon))
    )
    branches = [
        netcore.embed_inputs(gate, _slots(alpha, p.degree), p.dim + 1)
        for alpha, _ in support
    ]
    net = netcore.compose(netcore.parallel(branches), coordinate_front(p.dim))
    combine = LayerSpec.from_triplets(
        (1, len(support)),
        np.zeros(len(support)),
        np.arange(len(support)),
        np.array([c for _, c in support]),
        np.zeros(1),
        bias_mask=np.zeros(1, dtype=bool),
        weight_groups=["{}.c{}".format(name, i) for i in range(len(support))],
    )
    net = netcore.append_affine(net, combine)
    logger.debug("sparse polynomial net: mu=%d beta=%d depth=%d",
                 len(support), p.degree, net.depth())
    return netcore.pad_to_depth(net, target_depth)


def random_poly(
        dim: int,
        degree: int,
        coeff_bound: float,
        mu: int,
        seed: int,
        ) -> PolySpec:
    """
    A random polynomial with `mu` distinct monomials of degree at most
    `degree` and coefficients uniform in ``[-coeff_bound, coeff_bound]``.
    """
    available = math.comb(dim + degree, degree)
    if mu < 1 or mu > available:
        raise InvalidInputError(
            "cannot pick {} distinct monomials out of {}".format(mu, available)
        )
    rng = np.random.default_rng(seed)
    terms: typing.Dict[Exponent, float] = {}
    while len(terms) < mu:
        total = int(rng.integers(0, degree + 1))
        alpha = tuple(int(a) for a in rng.multinomial(total, [1 / dim] * dim))
        if alpha in terms:
            continue
        terms[alpha] = float(rng.uniform(-coeff_bound, coeff_bound))
    return PolySpec(dim=dim, degree=degree, coeff_bound=coeff_bound,
                    terms=terms)
