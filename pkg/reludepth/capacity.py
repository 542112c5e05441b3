"""
Covering-number (entropy) bounds for deep and shallow ReLU nets, and the
depth/parameter pairs sharing one bound.

All logarithms are base 2.
"""
import csv
import dataclasses
import logging
import math
import pathlib
import typing

from . import netcore
from .errors import InvalidInputError
from .netcore import ReluNet


logger = logging.getLogger(__name__)

# slack for floor() of exact ratios
_FLOOR_SLACK = 1e-12


@dataclasses.dataclass(frozen=True)
class CapacityQuery:
    n: float
    L: int
    R: float
    d_max: int
    epsilon: float
    c_dim: float = 1.0

    def __post_init__(self) -> None:
        for name in ("n", "L", "R", "d_max", "c_dim"):
            if not getattr(self, name) > 0:
                raise InvalidInputError("{} must be positive".format(name))
        if not 0 < self.epsilon < 1:
            raise InvalidInputError(
                "covering radius {!r} outside (0, 1)".format(self.epsilon)
            )

    @property
    def scale(self) -> float:
        """C * R * D_max"""
        return self.c_dim * self.R * self.d_max

    @property
    def degenerate(self) -> bool:
        return self.scale <= 1

    def replace(self, **changes: typing.Any) -> "CapacityQuery":
        return dataclasses.replace(self, **changes)


class IsoPoint(typing.NamedTuple):
    L: int
    n: int
    log2_bound: float


def _per_param_cost(q: CapacityQuery, L: int) -> float:
    return 3 * (L + 1) ** 2 * math.log2(q.scale) + math.log2(1 / q.epsilon)


def deep_log_covering_bound(q: CapacityQuery) -> float:
    """``3 (L+1)^2 n log2(C R D_max) + n log2(1/eps)``."""
    if q.degenerate:
        logger.warning(
            "degenerate covering bound: C*R*D_max=%g <= 1", q.scale,
        )
    return q.n * _per_param_cost(q, q.L)


def shallow_log_covering_bound(
        n: float,
        R: float,
        epsilon: float,
        c_shallow: float = 1.0,
        ) -> float:
    if not (n > 0 and R > 0 and epsilon > 0 and c_shallow > 0):
        raise InvalidInputError("shallow bound arguments must be positive")
    if R <= epsilon:
        logger.warning(
            "degenerate shallow bound: R=%g <= epsilon=%g", R, epsilon,
        )
    return c_shallow * n * math.log2(R / epsilon)


def admissible_params(
        target_log_n_cover: float,
        q_template: CapacityQuery,
        L: int,
        ) -> typing.Optional[float]:
    """
    The real n at which the deep bound of depth `L` reaches the target, or
    None when no positive n does.
    """
    cost = _per_param_cost(q_template, L)
    if cost <= 0 or target_log_n_cover <= 0:
        return None
    return target_log_n_cover / cost


def iso_capacity_curve(
        target_log_n_cover: float,
        q_template: CapacityQuery,
        L_range: typing.Iterable[int],
        ) -> typing.List[IsoPoint]:
    """
    For each depth, the largest integer n whose deep bound stays within the
    target. Depths without a feasible n are left out.
    """
    curve = []
    for L in L_range:
        if L < 1:
            raise InvalidInputError("depths must be positive")
        n_real = admissible_params(target_log_n_cover, q_template, L)
        if n_real is None or n_real * (1 + _FLOOR_SLACK) < 1:
            logger.warning(
                "no admissible parameter count at depth %d for target %g",
                L, target_log_n_cover,
            )
            continue
        n = math.floor(n_real * (1 + _FLOOR_SLACK))
        curve.append(IsoPoint(
            L=L,
            n=n,
            log2_bound=deep_log_covering_bound(q_template.replace(n=n, L=L)),
        ))
    return curve


def query_from_net(
        net: ReluNet,
        epsilon: float,
        c_dim: float = 1.0,
        ) -> CapacityQuery:
    return CapacityQuery(
        n=netcore.count_free_params(net),
        L=net.depth(),
        R=net.param_bound(),
        d_max=max([net.input_dim] + net.layer_widths()),
        epsilon=epsilon,
        c_dim=c_dim,
    )


def write_curve_csv(
        path: typing.Union[str, pathlib.Path],
        curve: typing.Sequence[IsoPoint],
        ) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(IsoPoint._fields)
        for point in curve:
            writer.writerow([point.L, point.n, repr(point.log2_bound)])
