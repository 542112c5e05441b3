"""
Local Taylor polynomials glued by a ReLU partition of unity.

Bumps live on the grid ``z = (x + 1) / 2 = j / N`` of the unit cube, so the
cells cover all of [-1, 1]^d; in x coordinates the centers are
``2 j / N - 1``. The network is

    h_f(x) = sum_j sum_alpha a_{j, alpha} prod(psi_1, ..., psi_d, x^alpha)

with all products computed by one shared product gate.
"""
import dataclasses
import itertools
import logging
import math
import typing

import numpy as np
import scipy.special
from numpy.polynomial import hermite

from . import gates, netcore
from .errors import InvalidConfigError, InvalidInputError, TaylorError
from .netcore import LayerSpec, ReluNet
from .polyapprox import Exponent, zero_net


logger = logging.getLogger(__name__)

ValueOracle = typing.Callable[[np.ndarray], np.ndarray]
DerivativeOracle = typing.Callable[[Exponent, np.ndarray], np.ndarray]

PSI_OFFSETS = (2.0, 1.0, -1.0, -2.0)
PSI_SIGNS = (1.0, -1.0, -1.0, 1.0)

MAX_NET_DIM = 3

# finite-difference steps are FD_EPS ** (1 / (|k| + 2)) times the scale
FD_EPS = float(np.finfo(np.float64).eps)


def smoothness_split(r: float) -> typing.Tuple[int, float]:
    """Return ``(s, v)`` with ``r = s + v``, s integer and v in (0, 1]."""
    if not r > 0:
        raise InvalidInputError("smoothness r must be positive")
    if float(r).is_integer():
        return int(r) - 1, 1.0
    s = math.ceil(r) - 1
    return s, r - s


@dataclasses.dataclass(frozen=True)
class SmoothTarget:
    name: str
    dim: int
    r: float
    c0: float
    value: ValueOracle
    derivative: typing.Optional[DerivativeOracle] = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise InvalidInputError("target dimension must be positive")
        smoothness_split(self.r)

    @property
    def s(self) -> int:
        return smoothness_split(self.r)[0]

    @property
    def v(self) -> float:
        return smoothness_split(self.r)[1]

    def __call__(self, x: typing.Any) -> typing.Any:
        points = _as_points(x, self.dim)
        values = np.asarray(self.value(points), dtype=np.float64)
        if np.ndim(x) == 1:
            return float(values[0])
        return values


@dataclasses.dataclass(frozen=True)
class GridIndex:
    N: int
    j: typing.Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.N < 1:
            raise InvalidInputError("grid size N must be positive")
        if not self.j or any(not 0 <= jk <= self.N for jk in self.j):
            raise InvalidInputError(
                "grid index {} outside {{0..{}}}".format(self.j, self.N)
            )

    def center(self) -> np.ndarray:
        return 2 * np.asarray(self.j, dtype=np.float64) / self.N - 1


def _as_points(x: typing.Any, dim: int) -> np.ndarray:
    points = np.asarray(x, dtype=np.float64)
    if points.ndim == 1:
        points = points[np.newaxis, :]
    if points.ndim != 2 or points.shape[1] != dim:
        raise InvalidInputError(
            "expected points of dimension {}, got shape {}".format(
                dim, np.shape(x),
            )
        )
    return points


# catalog

def _exp_neg_norm2(dim: int, r: float) -> SmoothTarget:
    def value(x: np.ndarray) -> np.ndarray:
        return np.exp(-np.sum(x ** 2, axis=1))

    def derivative(k: Exponent, x: np.ndarray) -> np.ndarray:
        # d^n/dt^n exp(-t^2) = (-1)^n H_n(t) exp(-t^2)
        result = np.ones(x.shape[0])
        for i, ki in enumerate(k):
            basis = np.zeros(ki + 1)
            basis[ki] = 1.0
            result *= (-1) ** ki * hermite.hermval(x[:, i], basis) * \
                np.exp(-x[:, i] ** 2)
        return result

    return SmoothTarget("exp_neg_norm2", dim, r, 2.0 ** r, value, derivative)


def _sin_pi_x1(dim: int, r: float) -> SmoothTarget:
    def value(x: np.ndarray) -> np.ndarray:
        return np.sin(np.pi * x[:, 0])

    def derivative(k: Exponent, x: np.ndarray) -> np.ndarray:
        if any(k[1:]):
            return np.zeros(x.shape[0])
        return np.pi ** k[0] * np.sin(np.pi * x[:, 0] + k[0] * np.pi / 2)

    return SmoothTarget("sin_pi_x1", dim, r, np.pi ** r, value, derivative)


def _prod_coords(dim: int, r: float) -> SmoothTarget:
    def value(x: np.ndarray) -> np.ndarray:
        return np.prod(x, axis=1)

    def derivative(k: Exponent, x: np.ndarray) -> np.ndarray:
        if max(k) > 1:
            return np.zeros(x.shape[0])
        rest = [i for i, ki in enumerate(k) if ki == 0]
        return np.prod(x[:, rest], axis=1)

    return SmoothTarget("prod_coords", dim, r, 1.0, value, derivative)


def _sum_coords(dim: int, r: float) -> SmoothTarget:
    def value(x: np.ndarray) -> np.ndarray:
        return np.sum(x, axis=1)

    def derivative(k: Exponent, x: np.ndarray) -> np.ndarray:
        order = sum(k)
        if order == 0:
            return np.sum(x, axis=1)
        return np.full(x.shape[0], 1.0 if order == 1 else 0.0)

    return SmoothTarget("sum_coords", dim, r, 1.0, value, derivative)


def _zero(dim: int, r: float) -> SmoothTarget:
    def value(x: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[0])

    def derivative(k: Exponent, x: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[0])

    return SmoothTarget("zero", dim, r, 0.0, value, derivative)


TARGETS: typing.Mapping[
    str, typing.Callable[[int, float], SmoothTarget]
] = {
    "exp_neg_norm2": _exp_neg_norm2,
    "sin_pi_x1": _sin_pi_x1,
    "prod_coords": _prod_coords,
    "sum_coords": _sum_coords,
    "zero": _zero,
}


def get_target(name: str, dim: int, r: float) -> SmoothTarget:
    try:
        factory = TARGETS[name]
    except KeyError:
        raise InvalidInputError(
            "unknown target {!r} (known: {})".format(
                name, ", ".join(sorted(TARGETS)),
            )
        ) from None
    return factory(dim, r)


def rescaled(target: SmoothTarget, scale: float) -> SmoothTarget:
    """The target ``u -> target(scale * u)``."""
    inner_value = target.value
    inner_derivative = target.derivative

    def value(u: np.ndarray) -> np.ndarray:
        return inner_value(scale * u)

    derivative: typing.Optional[DerivativeOracle] = None
    if inner_derivative is not None:
        oracle = inner_derivative

        def scaled_derivative(k: Exponent, u: np.ndarray) -> np.ndarray:
            return scale ** sum(k) * oracle(k, scale * u)

        derivative = scaled_derivative

    return SmoothTarget(
        name="{}@{!r}".format(target.name, scale),
        dim=target.dim,
        r=target.r,
        c0=target.c0 * abs(scale) ** target.r,
        value=value,
        derivative=derivative,
    )


# derivatives and Taylor coefficients

def multi_indices(dim: int, order: int) -> typing.List[Exponent]:
    """All exponents with total degree at most `order`, graded."""
    found = [
        alpha for alpha in itertools.product(range(order + 1), repeat=dim)
        if sum(alpha) <= order
    ]
    found.sort(key=lambda alpha: (sum(alpha), tuple(-a for a in alpha)))
    return found


def _finite_difference(
        f: SmoothTarget,
        k: Exponent,
        points: np.ndarray,
        scale: float,
        ) -> np.ndarray:
    order = sum(k)
    if order == 0:
        return np.asarray(f.value(points), dtype=np.float64)
    h = FD_EPS ** (1 / (order + 2)) * scale
    result = np.zeros(points.shape[0])
    stencils = [
        [((ki / 2 - m) * h, (-1) ** m * math.comb(ki, m))
         for m in range(ki + 1)]
        for ki in k
    ]
    for combo in itertools.product(*stencils):
        shift = np.array([offset for offset, _ in combo])
        weight = float(np.prod([w for _, w in combo]))
        result += weight * np.asarray(f.value(points + shift))
    return result / h ** order


def derivative_values(
        f: SmoothTarget,
        k: Exponent,
        points: np.ndarray,
        fd_scale: float = 1.0,
        ) -> np.ndarray:
    if f.derivative is not None:
        values = np.asarray(f.derivative(k, points), dtype=np.float64)
    else:
        values = _finite_difference(f, k, points, fd_scale)
    if not np.all(np.isfinite(values)):
        raise TaylorError(
            "non-finite derivative {} of {}".format(k, f.name)
        )
    return values


def taylor_coeff_matrix(
        f: SmoothTarget,
        centers: np.ndarray,
        basis: typing.Optional[typing.Sequence[Exponent]] = None,
        ) -> np.ndarray:
    """
    Coefficients of the degree-s Taylor polynomials about each center, in the
    global monomial basis. Returns shape (n_centers, len(basis)).
    """
    centers = _as_points(centers, f.dim)
    if basis is None:
        basis = multi_indices(f.dim, f.s)
    column = {alpha: i for i, alpha in enumerate(basis)}
    coeffs = np.zeros((centers.shape[0], len(basis)))
    for k in multi_indices(f.dim, f.s):
        scaled = derivative_values(f, k, centers) / np.prod(
            scipy.special.factorial(k)
        )
        # (x - c)^k = prod_i sum_{a_i <= k_i} C(k_i, a_i) x_i^a_i (-c_i)^(k_i - a_i)
        for alpha in itertools.product(*(range(ki + 1) for ki in k)):
            if alpha not in column:
                continue
            factor = np.ones(centers.shape[0])
            for i, (ki, ai) in enumerate(zip(k, alpha)):
                factor *= math.comb(ki, ai) * (-centers[:, i]) ** (ki - ai)
            coeffs[:, column[alpha]] += scaled * factor
    return coeffs


def taylor_coeffs(
        f: SmoothTarget,
        center: typing.Any,
        ) -> typing.Dict[Exponent, float]:
    basis = multi_indices(f.dim, f.s)
    row = taylor_coeff_matrix(f, np.atleast_2d(center), basis)[0]
    return {alpha: float(a) for alpha, a in zip(basis, row)}


def b_tilde(f: SmoothTarget, points_per_dim: int = 21) -> float:
    """Largest |partial derivative| of order <= s on a grid of the cube."""
    axes = [np.linspace(-1, 1, points_per_dim)] * f.dim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    grid = grid.reshape(-1, f.dim)
    return max(
        float(np.max(np.abs(derivative_values(f, k, grid))))
        for k in multi_indices(f.dim, f.s)
    )


# partition of unity

def psi(t: typing.Any) -> np.ndarray:
    """``relu(t+2) - relu(t+1) - relu(t-1) + relu(t-2)``, i.e. the trapezoid."""
    return np.clip(2 - np.abs(np.asarray(t, dtype=np.float64)), 0.0, 1.0)


def psi_net() -> ReluNet:
    """
    The trapezoid as a 4-unit net. Slopes are fixed at 1; the four
    thresholds and four output signs are free.
    """
    layer = LayerSpec.structural(
        np.ones((4, 1)), np.array(PSI_OFFSETS), fixed_weights=True,
    )
    output = LayerSpec.structural(
        np.array([PSI_SIGNS]), np.zeros(1), fixed_biases=True,
    )
    return ReluNet(input_dim=1, layers=(layer,), output_map=output)


def _bump_factors(N: int, x: np.ndarray, j: np.ndarray) -> np.ndarray:
    z = (x + 1) / 2
    return np.prod(psi(3 * N * z - 3 * j), axis=-1)


def phi_reference(idx: GridIndex, x: typing.Any) -> typing.Any:
    points = _as_points(x, len(idx.j))
    values = _bump_factors(idx.N, points, np.asarray(idx.j))
    if np.ndim(x) == 1:
        return float(values[0])
    return values


def partition_sum(N: int, x: typing.Any) -> np.ndarray:
    """Sum of all bumps of grid size N at the points x."""
    points = _as_points(x, np.shape(x)[-1])
    total = np.zeros(points.shape[0])
    for cell, valid in _active_cells(N, points):
        total += np.where(valid, _bump_factors(N, points, cell), 0.0)
    return total


def _active_cells(
        N: int,
        points: np.ndarray,
        ) -> typing.Iterator[typing.Tuple[np.ndarray, np.ndarray]]:
    # every bump that can be nonzero at a point sits at floor(N z) or one up
    low = np.clip(np.floor((points + 1) / 2 * N), 0, N).astype(np.int64)
    for bits in itertools.product((0, 1), repeat=points.shape[1]):
        cell = low + np.array(bits, dtype=np.int64)
        valid = np.all(cell <= N, axis=1)
        yield np.minimum(cell, N), valid


def _flat_index(cell: np.ndarray, N: int) -> np.ndarray:
    return np.ravel_multi_index(tuple(cell.T), (N + 1,) * cell.shape[1])


def _monomials(points: np.ndarray, basis: typing.Sequence[Exponent]) -> np.ndarray:
    exps = np.array(basis, dtype=np.int64)
    return np.prod(points[:, np.newaxis, :] ** exps[np.newaxis], axis=2)


def f1_reference(f: SmoothTarget, N: int, x: typing.Any) -> typing.Any:
    """``sum_j phi_j(x) p_j(x)`` evaluated directly, without any network."""
    if N < 1:
        raise InvalidInputError("grid size N must be positive")
    points = _as_points(x, f.dim)
    basis = multi_indices(f.dim, f.s)
    monomials = _monomials(points, basis)

    cells = list(_active_cells(N, points))
    flat = np.concatenate([_flat_index(cell, N) for cell, _ in cells])
    needed, inverse = np.unique(flat, return_inverse=True)
    inverse = inverse.ravel()
    grid = np.stack(np.unravel_index(needed, (N + 1,) * f.dim), axis=1)
    coeffs = taylor_coeff_matrix(f, 2 * grid / N - 1, basis)

    total = np.zeros(points.shape[0])
    n = points.shape[0]
    for c, (cell, valid) in enumerate(cells):
        rows = coeffs[inverse[c * n:(c + 1) * n]]
        local = np.sum(rows * monomials, axis=1)
        total += np.where(valid, _bump_factors(N, points, cell) * local, 0.0)
    if np.ndim(x) == 1:
        return float(total[0])
    return total


# the network

def grid_size(epsilon: float, dim: int, r: float) -> int:
    """N with ``N + 1 = ceil(nu ** (-1 / (d + r)))``, ``nu = eps ** ((r + d) / r)``."""
    nu = epsilon ** ((r + dim) / r)
    return max(math.ceil(nu ** (-1 / (dim + r)) - 1e-9) - 1, 1)


def gate_epsilon(epsilon: float, dim: int, r: float) -> float:
    return float(epsilon ** ((r + dim) / r))


def smooth_depth(dim: int, s: int, l_tilde: int) -> int:
    return 2 * (dim + s) * l_tilde + 8 * (dim + s) + 3


def psi_front(dim: int, N: int) -> ReluNet:
    """
    One hidden layer producing ``psi_{k, j}(x)`` for every coordinate k and
    grid position j, then ``x`` itself and the constant 1.
    """
    n_psi = dim * (N + 1)
    slope = 1.5 * N
    rows, cols, values, wlabels = [], [], [], []
    biases, blabels = [], []
    out_rows, out_cols, out_vals, out_labels = [], [], [], []
    unit = 0
    for k in range(dim):
        for j in range(N + 1):
            for offset, sign in zip(PSI_OFFSETS, PSI_SIGNS):
                rows.append(unit)
                cols.append(k)
                values.append(slope)
                wlabels.append("psi.slope")
                biases.append(slope - 3 * j + offset)
                blabels.append("psi.b{}.{!r}".format(j, offset))
                out_rows.append(k * (N + 1) + j)
                out_cols.append(unit)
                out_vals.append(sign)
                out_labels.append("psi.out+" if sign > 0 else "psi.out-")
                unit += 1
    for k in range(dim):
        rows.append(unit)
        cols.append(k)
        values.append(1.0)
        wlabels.append("unit")
        biases.append(1.0)
        blabels.append("shift:1.0")
        out_rows.append(n_psi + k)
        out_cols.append(unit)
        out_vals.append(1.0)
        out_labels.append("unit")
        unit += 1
    # constant unit: bias-only and fixed
    biases.append(1.0)
    blabels.append(None)
    out_rows.append(n_psi + dim)
    out_cols.append(unit)
    out_vals.append(1.0)
    out_labels.append(None)
    unit += 1

    bias_mask = np.ones(unit, dtype=bool)
    bias_mask[-1] = False
    layer = LayerSpec.from_triplets(
        (unit, dim), np.array(rows), np.array(cols), np.array(values),
        np.array(biases),
        bias_mask=bias_mask,
        weight_groups=wlabels,
        bias_groups=blabels,
    )
    out_biases = np.concatenate([np.zeros(n_psi), -np.ones(dim), [0.0]])
    out_mask = np.array([label is not None for label in out_labels])
    output = LayerSpec.from_triplets(
        (n_psi + dim + 1, unit),
        np.array(out_rows), np.array(out_cols), np.array(out_vals),
        out_biases,
        weight_mask=out_mask,
        bias_mask=out_biases != 0,
        weight_groups=out_labels,
        bias_groups=[
            "unshift:1.0" if b != 0 else None for b in out_biases
        ],
    )
    return ReluNet(input_dim=dim, layers=(layer,), output_map=output)


@dataclasses.dataclass(frozen=True)
class SmoothNetReport:
    grid_size: int
    gate_epsilon: float
    gate_params: int
    gate_bound: float
    b_tilde: float
    coeff_bound: float
    n_branches: int
    depth: int
    free_params: int
    param_bound: float
    magnitude_bound: float
    # (8d + 5) * binom(s + d, s) * eps^(-d/r)
    proof_param_count: float

    def isolation_bound(self, dim: int, s: int) -> float:
        """Bound on ``|h_f - f1|`` from the per-gate accuracy."""
        return (self.grid_size + 1) ** dim * math.comb(s + dim, s) * \
            self.coeff_bound * self.gate_epsilon

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        return dataclasses.asdict(self)


def build_smooth_net(
        f: SmoothTarget,
        epsilon: float,
        cfg: gates.GateConfig,
        depth: typing.Optional[int] = None,
        ) -> typing.Tuple[ReluNet, SmoothNetReport]:
    if not 0 < epsilon < 1:
        raise InvalidConfigError(
            "epsilon={!r} outside (0, 1)".format(epsilon)
        )
    if f.dim > MAX_NET_DIM:
        raise InvalidInputError(
            "smooth nets are built for dim <= {}, got {}".format(
                MAX_NET_DIM, f.dim,
            )
        )
    d, s = f.dim, f.s
    N = grid_size(epsilon, d, f.r)
    nu = gate_epsilon(epsilon, d, f.r)
    target_depth = smooth_depth(d, s, cfg.l_tilde) if depth is None \
        else depth

    basis = multi_indices(d, s)
    cells = np.stack(
        np.unravel_index(np.arange((N + 1) ** d), (N + 1,) * d), axis=1,
    )
    coeffs = taylor_coeff_matrix(f, 2 * cells / N - 1, basis)
    gate = gates.productL_gate(cfg.with_arity(d + s).with_epsilon(nu))
    n_psi = d * (N + 1)
    const_col = n_psi + d

    branches, weights, labels = [], [], []
    for flat, cell in enumerate(cells):
        psi_cols = [k * (N + 1) + int(jk) for k, jk in enumerate(cell)]
        for m, alpha in enumerate(basis):
            a = coeffs[flat, m]
            if a == 0:
                continue
            x_cols = [n_psi + k for k, ak in enumerate(alpha)
                      for _ in range(ak)]
            slots = psi_cols + x_cols + [const_col] * (s - len(x_cols))
            branches.append(netcore.embed_inputs(gate, slots, const_col + 1))
            weights.append(a)
            labels.append("taylor.{}.{}".format(
                flat, ".".join(map(str, alpha)),
            ))

    coeff_bound = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    smoothness_bound = b_tilde(f)
    if branches:
        net = netcore.compose(netcore.parallel(branches), psi_front(d, N))
        combine = LayerSpec.from_triplets(
            (1, len(weights)),
            np.zeros(len(weights)),
            np.arange(len(weights)),
            np.array(weights),
            np.zeros(1),
            bias_mask=np.zeros(1, dtype=bool),
            weight_groups=labels,
        )
        net = netcore.pad_to_depth(
            netcore.append_affine(net, combine), target_depth,
        )
    else:
        net = zero_net(d, target_depth)

    gate_bound = gate.param_bound()
    report = SmoothNetReport(
        grid_size=N,
        gate_epsilon=nu,
        gate_params=netcore.count_free_params(gate),
        gate_bound=gate_bound,
        b_tilde=smoothness_bound,
        coeff_bound=coeff_bound,
        n_branches=len(branches),
        depth=net.depth(),
        free_params=netcore.count_free_params(net),
        param_bound=net.param_bound(),
        magnitude_bound=max(
            smoothness_bound,
            3 * epsilon ** (-1 / f.r),
            1.5 * N + 2,
            gate_bound * max(1.0, coeff_bound),
        ),
        proof_param_count=(8 * d + 5) * math.comb(s + d, s) *
        epsilon ** (-d / f.r),
    )
    logger.debug("smooth net for %s: N=%d nu=%g branches=%d depth=%d",
                 f.name, N, nu, len(branches), net.depth())
    return net, report


def smooth_net(
        f: SmoothTarget,
        epsilon: float,
        cfg: gates.GateConfig,
        depth: typing.Optional[int] = None,
        ) -> ReluNet:
    return build_smooth_net(f, epsilon, cfg, depth)[0]


def target_from_name(name: str, dim: int, r: float) -> SmoothTarget:
    """
    Resolve a catalog name, including the ``<name>@<scale>`` form produced
    by `rescaled`.
    """
    base, sep, scale = name.rpartition("@")
    if not sep:
        return get_target(name, dim, r)
    try:
        factor = float(scale)
    except ValueError:
        raise InvalidInputError(
            "invalid target scale in {!r}".format(name)
        ) from None
    return rescaled(target_from_name(base, dim, r), factor)
