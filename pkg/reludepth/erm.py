"""
Fully connected ReLU regressors trained by Adam on the empirical squared loss.
"""
import dataclasses
import logging
import math
import time
import typing

import numpy as np

from . import datagen, metrics
from .errors import (
    DivergenceError,
    InvalidConfigError,
    InvalidInputError,
    MalformedDocumentError,
)
from .netcore import LayerSpec, ReluNet


logger = logging.getLogger(__name__)

INIT_SCHEMES = ("glorot_uniform", "he_uniform")

BatchSize = typing.Union[int, str]


def _require_key(obj: typing.Mapping[str, typing.Any], key: str) -> typing.Any:
    try:
        return obj[key]
    except KeyError:
        raise MalformedDocumentError(
            "training config lacks {!r}".format(key)
        ) from None


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    shape: typing.Tuple[int, ...]
    r0: float = 0.001
    decay_rate: float = 0.95
    decay_step: int = 1000
    iterations: int = 5000
    batch_size: BatchSize = 128
    seed: int = 0
    m_clip: typing.Optional[float] = None
    init_scheme: str = "glorot_uniform"
    standardize: bool = True
    log_every: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", tuple(int(w) for w in self.shape))
        if len(self.shape) < 2 or min(self.shape) < 1:
            raise InvalidConfigError(
                "shape {} needs an input and an output width".format(
                    list(self.shape),
                )
            )
        if not self.r0 > 0:
            raise InvalidConfigError("r0 must be positive")
        if not 0 < self.decay_rate <= 1:
            raise InvalidConfigError("decay_rate must lie in (0, 1]")
        if self.decay_step < 1:
            raise InvalidConfigError("decay_step must be at least 1")
        if self.iterations < 0:
            raise InvalidConfigError("iterations must be nonnegative")
        if self.batch_size != "full" and (
                not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise InvalidConfigError(
                "batch_size must be a positive integer or 'full'"
            )
        if self.m_clip is not None and not self.m_clip > 0:
            raise InvalidConfigError("m_clip must be positive")
        if self.init_scheme not in INIT_SCHEMES:
            raise InvalidConfigError(
                "unknown init scheme {!r}".format(self.init_scheme)
            )
        if self.log_every < 1:
            raise InvalidConfigError("log_every must be at least 1")

    @property
    def hidden(self) -> typing.Tuple[int, ...]:
        return self.shape[1:-1]

    def replace(self, **changes: typing.Any) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        result = dataclasses.asdict(self)
        result["shape"] = list(self.shape)
        return result

    @classmethod
    def from_mapping(
            cls,
            obj: typing.Mapping[str, typing.Any],
            ) -> "TrainConfig":
        known = {field.name for field in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise MalformedDocumentError(
                "unknown training keys: {}".format(", ".join(sorted(unknown)))
            )
        kwargs = dict(obj)
        kwargs["shape"] = _require_key(obj, "shape")
        return cls(**kwargs)


@dataclasses.dataclass(frozen=True, eq=False)
class Mlp:
    """Weights have shape (d_k, d_{k-1}); the last layer has no ReLU."""
    weights: typing.Tuple[np.ndarray, ...]
    biases: typing.Tuple[np.ndarray, ...]

    @property
    def shape(self) -> typing.Tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(
            w.shape[0] for w in self.weights
        )

    def parameters(self) -> typing.List[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def with_parameters(self, params: typing.Sequence[np.ndarray]) -> "Mlp":
        n = len(self.weights)
        return Mlp(weights=tuple(params[:n]), biases=tuple(params[n:]))

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def from_flat(self, vector: np.ndarray) -> "Mlp":
        params, offset = [], 0
        for p in self.parameters():
            params.append(vector[offset:offset + p.size].reshape(p.shape))
            offset += p.size
        return self.with_parameters(params)


def init_mlp(cfg: TrainConfig) -> Mlp:
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(cfg.shape[:-1], cfg.shape[1:]):
        if cfg.init_scheme == "he_uniform":
            limit = math.sqrt(6 / fan_in)
        else:
            limit = math.sqrt(6 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights=tuple(weights), biases=tuple(biases))


def _forward(
        net: Mlp,
        x: np.ndarray,
        ) -> typing.Tuple[typing.List[np.ndarray], typing.List[np.ndarray]]:
    # activations[k] feeds layer k; pre[k] is layer k's pre-activation
    activations, pre = [x], []
    last = len(net.weights) - 1
    h = x
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if k == last else np.maximum(z, 0.0)
        if k != last:
            activations.append(h)
    return activations, pre


def predict(net: Mlp, x: typing.Any) -> np.ndarray:
    points = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if points.shape[1] != net.shape[0]:
        raise InvalidInputError(
            "expected inputs of dimension {}, got {}".format(
                net.shape[0], points.shape[1],
            )
        )
    _, pre = _forward(net, points)
    out = pre[-1]
    return out[:, 0] if out.shape[1] == 1 else out


def mse_loss(net: Mlp, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((predict(net, x) - y) ** 2))


def grad_mse(
        net: Mlp,
        x: np.ndarray,
        y: np.ndarray,
        ) -> typing.Tuple[float, typing.List[np.ndarray]]:
    """
    Loss ``mean((f(x_i) - y_i)^2)`` and its gradient, ordered like
    ``net.parameters()``. The ReLU derivative at 0 is taken as 0.
    """
    if not len(x):
        raise InvalidInputError("gradient of an empty batch")
    activations, pre = _forward(net, x)
    residual = pre[-1][:, 0] - y
    loss = float(np.mean(residual ** 2))
    if not math.isfinite(loss):
        raise DivergenceError("non-finite training loss")

    delta = (2 / len(y)) * residual[:, np.newaxis]
    n = len(net.weights)
    grad_w: typing.List[np.ndarray] = [np.empty(0)] * n
    grad_b: typing.List[np.ndarray] = [np.empty(0)] * n
    for k in range(n - 1, -1, -1):
        grad_w[k] = delta.T @ activations[k]
        grad_b[k] = np.sum(delta, axis=0)
        if k:
            delta = (delta @ net.weights[k]) * (pre[k - 1] > 0)
    return loss, grad_w + grad_b


def decayed_rate(r0: float, decay_rate: float, decay_step: int,
                 global_step: int) -> float:
    return r0 * decay_rate ** (global_step // decay_step)


@dataclasses.dataclass(frozen=True, eq=False)
class AdamState:
    net: Mlp
    m: typing.Tuple[np.ndarray, ...]
    v: typing.Tuple[np.ndarray, ...]
    beta1: float = 0.9
    beta2: float = 0.999
    stabilizer: float = 1e-8

    @classmethod
    def start(cls, net: Mlp) -> "AdamState":
        zeros = tuple(np.zeros_like(p) for p in net.parameters())
        return cls(net=net, m=zeros, v=zeros)


def adam_step(
        state: AdamState,
        gradient: typing.Sequence[np.ndarray],
        step_index: int,
        rate: float,
        ) -> AdamState:
    """One Adam update; `step_index` is the zero-based global step."""
    t = step_index + 1
    new_m, new_v, new_params = [], [], []
    for p, g, m, v in zip(state.net.parameters(), gradient,
                          state.m, state.v):
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise DivergenceError("non-finite Adam moments")
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        new_params.append(p - rate * m_hat / (np.sqrt(v_hat) +
                                              state.stabilizer))
        new_m.append(m)
        new_v.append(v)
    return dataclasses.replace(
        state,
        net=state.net.with_parameters(new_params),
        m=tuple(new_m),
        v=tuple(new_v),
    )


def truncate(value: typing.Any, M: float) -> typing.Any:
    """``sign(f) * min(|f|, M)``"""
    if not M > 0:
        raise InvalidInputError("truncation level must be positive")
    result = np.clip(value, -M, M)
    if np.ndim(result) == 0:
        return float(result)
    return result


@dataclasses.dataclass(frozen=True, eq=False)
class FittedModel:
    """A trained net together with the standardization it was trained on."""
    net: Mlp
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float

    def predict(self, x: typing.Any) -> np.ndarray:
        points = np.atleast_2d(np.asarray(x, dtype=np.float64))
        scaled = (points - self.x_mean) / self.x_scale
        return predict(self.net, scaled) * self.y_scale + self.y_mean


@dataclasses.dataclass(frozen=True, eq=False)
class FitResult:
    model: FittedModel
    loss_history: typing.List[typing.Tuple[int, float]]
    diverged: bool
    steps: int


def _standardization(
        ds: datagen.Dataset,
        enabled: bool,
        ) -> typing.Tuple[np.ndarray, np.ndarray, float, float]:
    if not enabled:
        return np.zeros(ds.dim), np.ones(ds.dim), 0.0, 1.0
    x_scale = np.std(ds.inputs, axis=0)
    x_scale[x_scale == 0] = 1.0
    y_scale = float(np.std(ds.targets)) or 1.0
    return (np.mean(ds.inputs, axis=0), x_scale,
            float(np.mean(ds.targets)), y_scale)


def fit(cfg: TrainConfig, train_ds: datagen.Dataset) -> FitResult:
    """
    Run `cfg.iterations` Adam steps. On divergence the last finite state is
    kept and `diverged` is set.
    """
    if cfg.shape[0] != train_ds.dim or cfg.shape[-1] != 1:
        raise InvalidConfigError(
            "shape {} does not fit {}-d inputs and scalar targets".format(
                list(cfg.shape), train_ds.dim,
            )
        )
    x_mean, x_scale, y_mean, y_scale = _standardization(
        train_ds, cfg.standardize,
    )
    x = (train_ds.inputs - x_mean) / x_scale
    y = (train_ds.targets - y_mean) / y_scale
    m = len(y)
    batch = m if cfg.batch_size == "full" else min(int(cfg.batch_size), m)

    def model_of(net: Mlp) -> FittedModel:
        return FittedModel(net, x_mean, x_scale, y_mean, y_scale)

    def train_mse(net: Mlp) -> float:
        return mse_loss(net, x, y) * y_scale ** 2

    rng = np.random.default_rng((cfg.seed, 1))
    state = AdamState.start(init_mlp(cfg))
    history = [(0, train_mse(state.net))]
    order = rng.permutation(m)
    cursor = 0
    diverged = False
    step = 0
    for step in range(cfg.iterations):
        if cursor + batch > m:
            order = rng.permutation(m)
            cursor = 0
        rows = order[cursor:cursor + batch]
        cursor += batch
        rate = decayed_rate(cfg.r0, cfg.decay_rate, cfg.decay_step, step)
        try:
            _, gradient = grad_mse(state.net, x[rows], y[rows])
            candidate = adam_step(state, gradient, step, rate)
            if not np.all(np.isfinite(candidate.net.flat())):
                raise DivergenceError("non-finite parameters")
        except DivergenceError as exc:
            logger.info("training diverged at step %d: %s", step, exc)
            diverged = True
            break
        state = candidate
        if (step + 1) % cfg.log_every == 0:
            history.append((step + 1, train_mse(state.net)))
    else:
        step = cfg.iterations

    return FitResult(
        model=model_of(state.net),
        loss_history=history,
        diverged=diverged,
        steps=step,
    )


@dataclasses.dataclass(frozen=True, eq=False)
class RunReport:
    config: TrainConfig
    seed: int
    final_train_mse: float
    test_metrics: metrics.MetricsReport
    clean_metrics: typing.Optional[metrics.MetricsReport]
    baseline_mse: float
    loss_history: typing.List[typing.Tuple[int, float]]
    valid: bool
    diverged: bool
    n_params: int
    wall_time: float
    model: typing.Optional[FittedModel] = None

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        """Serializable fields; the wall time and the model are left out."""
        return {
            "config": self.config.to_json_obj(),
            "seed": self.seed,
            "final_train_mse": _finite_or_none(self.final_train_mse),
            "test_metrics": self.test_metrics.to_json_obj(),
            "clean_metrics": None if self.clean_metrics is None
            else self.clean_metrics.to_json_obj(),
            "baseline_mse": self.baseline_mse,
            "loss_history": [[s, _finite_or_none(v)]
                             for s, v in self.loss_history],
            "valid": self.valid,
            "diverged": self.diverged,
            "n_params": self.n_params,
        }


def _finite_or_none(value: float) -> typing.Optional[float]:
    return value if math.isfinite(value) else None


def train(
        cfg: TrainConfig,
        train_ds: datagen.Dataset,
        test_ds: datagen.Dataset,
        ) -> RunReport:
    """
    Fit on `train_ds` and evaluate on `test_ds`. Test predictions are
    truncated to ``[-m_clip, m_clip]`` when `m_clip` is set.
    """
    started = time.perf_counter()
    result = fit(cfg, train_ds)
    model = result.model

    final_train = float(np.mean(
        (model.predict(train_ds.inputs) - train_ds.targets) ** 2
    ))
    test_pred = model.predict(test_ds.inputs)
    if cfg.m_clip is not None:
        test_pred = truncate(test_pred, cfg.m_clip)
    with np.errstate(all="ignore"):
        test_metrics = metrics.compute_metrics(test_pred, test_ds.targets)
        clean_metrics = None
        if test_ds.clean_targets is not None:
            clean_metrics = metrics.compute_metrics(
                test_pred, test_ds.clean_targets,
            )
    baseline = float(np.mean(
        (test_ds.targets - np.mean(train_ds.targets)) ** 2
    ))
    valid = (
        not result.diverged and
        math.isfinite(final_train) and math.isfinite(test_metrics.mse) and
        test_metrics.mse < baseline
    )
    wall_time = time.perf_counter() - started
    logger.info(
        "trained %s seed=%d steps=%d test_mse=%.6g valid=%s in %.2fs",
        list(cfg.shape), cfg.seed, result.steps, test_metrics.mse, valid,
        wall_time,
    )
    return RunReport(
        config=cfg,
        seed=cfg.seed,
        final_train_mse=final_train,
        test_metrics=test_metrics,
        clean_metrics=clean_metrics,
        baseline_mse=baseline,
        loss_history=result.loss_history,
        valid=valid,
        diverged=result.diverged,
        n_params=model.net.n_params(),
        wall_time=wall_time,
        model=model,
    )


def mlp_to_relunet(model: FittedModel) -> ReluNet:
    """Export a trained model with its standardization folded in."""
    net = model.net
    if len(net.weights) < 2:
        raise InvalidInputError("a ReluNet needs at least one hidden layer")
    weights = list(net.weights)
    biases = list(net.biases)
    first = weights[0] / model.x_scale
    biases[0] = biases[0] - first @ model.x_mean
    weights[0] = first
    weights[-1] = weights[-1] * model.y_scale
    biases[-1] = biases[-1] * model.y_scale + model.y_mean
    layers = tuple(
        LayerSpec.dense(w, b) for w, b in zip(weights[:-1], biases[:-1])
    )
    return ReluNet(
        input_dim=net.shape[0],
        layers=layers,
        output_map=LayerSpec.dense(weights[-1], biases[-1]),
    )
