"""
Synthetic regression datasets for the depth-selection experiments.
"""
import csv
import dataclasses
import logging
import math
import pathlib
import typing

import numpy as np

from .errors import InvalidInputError, MalformedDocumentError


logger = logging.getLogger(__name__)

# MMI = exp(a + b M - c d - e log(d + f M))
MMI_CONSTANTS = (1.2655, 0.2089, 0.0011, 0.2451, 2.1502)

LOG_BASES: typing.Mapping[str, typing.Callable[[np.ndarray], np.ndarray]] = {
    "e": np.log,
    "10": np.log10,
}


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    clean_targets: typing.Optional[np.ndarray] = None
    meta: typing.Mapping[str, typing.Any] = dataclasses.field(
        default_factory=dict,
    )

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2:
            raise InvalidInputError("inputs must be a 2-d array")
        m = self.inputs.shape[0]
        if self.targets.shape != (m,):
            raise InvalidInputError(
                "{} inputs but {} targets".format(m, len(self.targets))
            )
        if self.clean_targets is not None and \
                self.clean_targets.shape != (m,):
            raise InvalidInputError("clean targets misaligned with inputs")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, rows: typing.Any) -> "Dataset":
        return Dataset(
            inputs=self.inputs[rows],
            targets=self.targets[rows],
            clean_targets=None if self.clean_targets is None
            else self.clean_targets[rows],
            meta=self.meta,
        )


def _check_count(m: int) -> None:
    if m < 1:
        raise InvalidInputError("sample count must be positive")


def gen_square_feature(
        m: int,
        seed: int,
        dim: int = 10,
        bound: float = 100.0,
        ) -> Dataset:
    """``sum_j x_j^2`` on ``[-bound, bound]^dim``, noiseless."""
    _check_count(m)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-bound, bound, size=(m, dim))
    return Dataset(
        inputs=x,
        targets=np.sum(x ** 2, axis=1),
        meta={"generator": "square_feature", "seed": seed, "dim": dim,
              "bound": bound, "noise": 0.0},
    )


def gen_partial_radial(
        m: int,
        k: int,
        seed: int,
        dim: int = 10,
        bound: float = 100.0,
        ) -> Dataset:
    """``sum_{j<=k} x_j^2 + sum_{j>k} x_j`` on ``[-bound, bound]^dim``."""
    _check_count(m)
    if not 2 <= k <= dim - 1:
        raise InvalidInputError(
            "k={} outside 2..{}".format(k, dim - 1)
        )
    rng = np.random.default_rng(seed)
    x = rng.uniform(-bound, bound, size=(m, dim))
    return Dataset(
        inputs=x,
        targets=np.sum(x[:, :k] ** 2, axis=1) + np.sum(x[:, k:], axis=1),
        meta={"generator": "partial_radial", "seed": seed, "k": k,
              "dim": dim, "bound": bound, "noise": 0.0},
    )


def sinc_norm2(x: np.ndarray) -> np.ndarray:
    """``sin(t) / t`` with ``t = |x|^2``, and 1 at the origin."""
    t = np.sum(np.asarray(x, dtype=np.float64) ** 2, axis=-1)
    safe = np.where(t == 0, 1.0, t)
    return np.where(t == 0, 1.0, np.sin(safe) / safe)


def gen_radial_noisy(
        m: int,
        seed: int,
        sigma2: float = 0.1,
        dim: int = 2,
        ) -> Dataset:
    """``sin|x|^2 / |x|^2`` on [-1, 1]^dim plus Gaussian noise."""
    _check_count(m)
    if sigma2 < 0:
        raise InvalidInputError("noise variance must be nonnegative")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(m, dim))
    clean = sinc_norm2(x)
    noise = rng.normal(0.0, math.sqrt(sigma2), size=m)
    return Dataset(
        inputs=x,
        targets=clean + noise,
        clean_targets=clean,
        meta={"generator": "radial_noisy", "seed": seed, "dim": dim,
              "noise": sigma2},
    )


def mmi(
        magnitude: typing.Any,
        distance: typing.Any,
        log_base: str = "e",
        ) -> np.ndarray:
    try:
        log = LOG_BASES[log_base]
    except KeyError:
        raise InvalidInputError(
            "unknown log base {!r}".format(log_base)
        ) from None
    a, b, c, e, f = MMI_CONSTANTS
    magnitude = np.asarray(magnitude, dtype=np.float64)
    distance = np.asarray(distance, dtype=np.float64)
    return np.exp(
        a + b * magnitude - c * distance - e * log(distance + f * magnitude)
    )


def gen_mmi(
        m: int,
        seed: int,
        magnitude_range: typing.Tuple[float, float] = (4.0, 8.0),
        distance_range: typing.Tuple[float, float] = (1.0, 200.0),
        log_base: str = "e",
        ) -> Dataset:
    """Synthetic intensities; inputs are (magnitude, distance in km)."""
    _check_count(m)
    for low, high in (magnitude_range, distance_range):
        if not 0 < low < high:
            raise InvalidInputError("ranges must be positive and ordered")
    rng = np.random.default_rng(seed)
    magnitude = rng.uniform(*magnitude_range, size=m)
    distance = rng.uniform(*distance_range, size=m)
    return Dataset(
        inputs=np.column_stack([magnitude, distance]),
        targets=mmi(magnitude, distance, log_base),
        meta={"generator": "mmi", "seed": seed,
              "magnitude_range": list(magnitude_range),
              "distance_range": list(distance_range),
              "log_base": log_base, "noise": 0.0},
    )


Generator = typing.Callable[..., Dataset]

GENERATORS: typing.Mapping[str, Generator] = {
    "square_feature": gen_square_feature,
    "partial_radial": gen_partial_radial,
    "radial_noisy": gen_radial_noisy,
    "mmi": gen_mmi,
}

_DEFAULT_SIZES = {
    "square_feature": (3000, 200),
    "partial_radial": (3000, 200),
    "radial_noisy": (2000, 200),
    "mmi": (700, 200),
}


def default_sizes(name: str) -> typing.Tuple[int, int]:
    """(n_train, n_test) used by the experiments for a generator."""
    try:
        return _DEFAULT_SIZES[name]
    except KeyError:
        raise InvalidInputError("unknown generator {!r}".format(name)) \
            from None


def generate(
        name: str,
        m: int,
        seed: int,
        params: typing.Optional[typing.Mapping[str, typing.Any]] = None,
        ) -> Dataset:
    try:
        generator = GENERATORS[name]
    except KeyError:
        raise InvalidInputError(
            "unknown generator {!r} (known: {})".format(
                name, ", ".join(sorted(GENERATORS)),
            )
        ) from None
    kwargs = dict(params or {})
    for key in ("magnitude_range", "distance_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    logger.debug("generating %d rows of %s (seed=%d, params=%r)",
                 m, name, seed, kwargs)
    try:
        return generator(m, seed=seed, **kwargs)
    except TypeError as exc:
        raise InvalidInputError(
            "bad parameters for {}: {}".format(name, exc)
        ) from exc


def split(ds: Dataset, n_train: int) -> typing.Tuple[Dataset, Dataset]:
    """First `n_train` rows for training, the rest for testing."""
    if not 0 < n_train < len(ds):
        raise InvalidInputError(
            "cannot split {} rows at {}".format(len(ds), n_train)
        )
    return ds.subset(slice(0, n_train)), ds.subset(slice(n_train, None))


def write_csv(ds: Dataset, path: typing.Union[str, pathlib.Path]) -> None:
    header = ["x{}".format(i + 1) for i in range(ds.dim)] + ["y"]
    columns = [ds.inputs, ds.targets[:, np.newaxis]]
    if ds.clean_targets is not None:
        header.append("y_clean")
        columns.append(ds.clean_targets[:, np.newaxis])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in np.hstack(columns):
            writer.writerow([repr(float(v)) for v in row])


def read_csv(path: typing.Union[str, pathlib.Path]) -> Dataset:
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedDocumentError(
                "{}: empty dataset file".format(path)
            ) from None
        try:
            rows = [[float(v) for v in row] for row in reader if row]
        except ValueError as exc:
            raise MalformedDocumentError(
                "{}: {}".format(path, exc)
            ) from exc

    if "y" not in header:
        raise MalformedDocumentError("{}: no 'y' column".format(path))
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise MalformedDocumentError(
                "{}:{}: {} fields, header has {}".format(
                    path, lineno, len(row), len(header),
                )
            )
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    x_cols = [i for i, name in enumerate(header) if name.startswith("x")]
    clean = None
    if "y_clean" in header:
        clean = data[:, header.index("y_clean")]
    return Dataset(
        inputs=data[:, x_cols],
        targets=data[:, header.index("y")],
        clean_targets=clean,
        meta={"source": str(path)},
    )
