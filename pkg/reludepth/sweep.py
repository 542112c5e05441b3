"""
Depth/width experiment sweeps.

A sweep is described by an :class:`ExperimentManifest` (a TOML document).
Every (network configuration, trial) pair is an independent training run;
runs are fanned out to a worker pool and collected in a fixed order, so the
numeric outputs of a rerun are identical to the first run.
"""
import asyncio
import concurrent.futures
import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import math
import pathlib
import typing

import toml

from . import datagen, erm, metrics
from .errors import (
    InvalidConfigError,
    InvalidInputError,
    MalformedDocumentError,
)
from .infra import generate_error_id


logger = logging.getLogger(__name__)

PathLike = typing.Union[str, pathlib.Path]
Hidden = typing.Tuple[int, ...]

STRATEGIES = ("coordinate", "uniform")

STATUS_OK = "ok"
STATUS_DIVERGED = "diverged"
STATUS_CRASHED = "crashed"

PRESET_DIR = pathlib.Path(__file__).parent / "experiments"

# keys owned by the sweep, not by the [train] table
_RESERVED_TRAIN_KEYS = ("shape", "seed")


def _require_key(obj: typing.Any, key: str, where: str) -> typing.Any:
    if not isinstance(obj, dict):
        raise MalformedDocumentError(
            "{} must be a table holding {!r}".format(where, key)
        )
    try:
        return obj[key]
    except KeyError:
        raise MalformedDocumentError(
            "manifest {} lacks {!r}".format(where, key)
        ) from None


def _hidden_label(hidden: Hidden) -> str:
    return "-".join(map(str, hidden))


def count_mlp_params(dim: int, hidden: Hidden) -> int:
    shape = (dim,) + tuple(hidden) + (1,)
    return sum((a + 1) * b for a, b in zip(shape[:-1], shape[1:]))


@dataclasses.dataclass(frozen=True)
class DataSpec:
    generator: str
    n_train: int
    n_test: int
    seed: int = 0
    params: typing.Mapping[str, typing.Any] = dataclasses.field(
        default_factory=dict,
    )
    # parameter name -> values; the sweep runs once per combination
    grid: typing.Mapping[str, typing.Sequence[typing.Any]] = \
        dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.generator not in datagen.GENERATORS:
            raise InvalidConfigError(
                "unknown generator {!r}".format(self.generator)
            )
        if self.n_train < 1 or self.n_test < 1:
            raise InvalidConfigError("n_train and n_test must be positive")
        for key, values in self.grid.items():
            if not values:
                raise InvalidConfigError(
                    "grid parameter {!r} has no values".format(key)
                )

    def trial_seed(self, trial: int) -> int:
        return self.seed + trial

    def grid_points(self) -> typing.List[typing.Dict[str, typing.Any]]:
        keys = sorted(self.grid)
        return [dict(zip(keys, values)) for values in
                itertools.product(*(self.grid[k] for k in keys))]

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        return {
            "generator": self.generator,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "seed": self.seed,
            "params": dict(self.params),
            "grid": {k: list(v) for k, v in self.grid.items()},
        }


@dataclasses.dataclass(frozen=True)
class NetworkConfig:
    hidden: Hidden
    r0: typing.Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise InvalidConfigError(
                "hidden widths {} must be positive and nonempty".format(
                    list(self.hidden),
                )
            )
        if self.r0 is not None and not self.r0 > 0:
            raise InvalidConfigError("r0 must be positive")

    @property
    def depth(self) -> int:
        return len(self.hidden)

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        result: typing.Dict[str, typing.Any] = {"hidden": list(self.hidden)}
        if self.r0 is not None:
            result["r0"] = self.r0
        return result


@dataclasses.dataclass(frozen=True)
class WidthRange:
    """Candidate widths ``start, start+step, ..., stop`` for some depths."""
    depths: typing.Tuple[int, ...]
    start: int
    stop: int
    step: int
    r0: typing.Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "depths", tuple(int(L) for L in self.depths))
        if not self.depths or min(self.depths) < 1:
            raise InvalidConfigError("width range depths must be positive")
        if not 1 <= self.start <= self.stop or self.step < 1:
            raise InvalidConfigError(
                "bad width range {}..{} step {}".format(
                    self.start, self.stop, self.step,
                )
            )

    @property
    def candidates(self) -> typing.Tuple[int, ...]:
        return tuple(range(self.start, self.stop + 1, self.step))

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        result: typing.Dict[str, typing.Any] = {
            "depths": list(self.depths),
            "start": self.start,
            "stop": self.stop,
            "step": self.step,
        }
        if self.r0 is not None:
            result["r0"] = self.r0
        return result


@dataclasses.dataclass(frozen=True)
class SearchSpec:
    """
    Width search per depth.

    ``uniform`` tries every candidate width for all layers at once.
    ``coordinate`` starts all layers at the median candidate, tunes the
    middle layer, then the remaining layers one at a time moving outwards.
    """
    depths: typing.Tuple[int, ...]
    ranges: typing.Tuple[WidthRange, ...]
    strategy: str = "coordinate"

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise InvalidConfigError(
                "unknown search strategy {!r}".format(self.strategy)
            )
        if not self.depths:
            raise InvalidConfigError("search needs at least one depth")
        for depth in self.depths:
            self.range_for(depth)

    def range_for(self, depth: int) -> WidthRange:
        for width_range in self.ranges:
            if depth in width_range.depths:
                return width_range
        raise InvalidConfigError(
            "no width range covers depth {}".format(depth)
        )

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        return {
            "strategy": self.strategy,
            "depths": list(self.depths),
            "ranges": [r.to_json_obj() for r in self.ranges],
        }


@dataclasses.dataclass(frozen=True)
class ExperimentManifest:
    name: str
    data: DataSpec
    trials: int
    seeds: typing.Tuple[int, ...]
    train: typing.Mapping[str, typing.Any] = dataclasses.field(
        default_factory=dict,
    )
    configs: typing.Tuple[NetworkConfig, ...] = ()
    search: typing.Optional[SearchSpec] = None
    output_dir: typing.Optional[str] = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise InvalidConfigError("empty trial list")
        if len(self.seeds) != self.trials:
            raise InvalidConfigError(
                "{} seeds for {} trials".format(len(self.seeds), self.trials)
            )
        if not self.configs and self.search is None:
            raise InvalidConfigError(
                "manifest {!r} names no network configurations".format(
                    self.name,
                )
            )
        for key in _RESERVED_TRAIN_KEYS:
            if key in self.train:
                raise InvalidConfigError(
                    "{!r} is set by the sweep, not in [train]".format(key)
                )
        # fails early on unknown or out-of-range training settings
        self.train_config((1, 1, 1), seed=0)

    def train_config(self, shape: typing.Sequence[int], seed: int,
                     r0: typing.Optional[float] = None) -> erm.TrainConfig:
        settings = dict(self.train)
        settings["shape"] = list(shape)
        settings["seed"] = seed
        if r0 is not None:
            settings["r0"] = r0
        return erm.TrainConfig.from_mapping(settings)

    def with_trials(self, trials: int) -> "ExperimentManifest":
        """Rerun with `trials` trials, continuing the seed sequence."""
        if trials < 1:
            raise InvalidConfigError("empty trial list")
        start = self.seeds[0]
        contiguous = self.seeds == tuple(range(start, start + self.trials))
        if trials <= self.trials:
            seeds = self.seeds[:trials]
        elif contiguous:
            seeds = tuple(range(start, start + trials))
        else:
            raise InvalidConfigError(
                "explicit seed list has only {} entries".format(
                    len(self.seeds),
                )
            )
        return dataclasses.replace(self, trials=trials, seeds=seeds)

    def replace(self, **changes: typing.Any) -> "ExperimentManifest":
        return dataclasses.replace(self, **changes)

    def expand(self) -> typing.List[typing.Tuple[str, "ExperimentManifest"]]:
        """
        One manifest per data grid point, labeled like ``k=3``. Without a
        grid this is just ``[("", self)]``.
        """
        if not self.data.grid:
            return [("", self)]
        result = []
        for point in self.data.grid_points():
            label = ",".join(
                "{}={}".format(k, point[k]) for k in sorted(point)
            )
            data = dataclasses.replace(
                self.data, params=dict(self.data.params, **point), grid={},
            )
            result.append((label, dataclasses.replace(self, data=data)))
        return result

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        result: typing.Dict[str, typing.Any] = {
            "name": self.name,
            "data": self.data.to_json_obj(),
            "trials": self.trials,
            "seeds": list(self.seeds),
            "train": dict(self.train),
            "configs": [c.to_json_obj() for c in self.configs],
        }
        if self.search is not None:
            result["search"] = self.search.to_json_obj()
        return result

    def digest(self) -> str:
        """sha256 over the canonical JSON form; the output dir is left out."""
        canonical = json.dumps(self.to_json_obj(), sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _extract_width_range(obj: typing.Any) -> WidthRange:
    r0 = obj.get("r0") if isinstance(obj, dict) else None
    return WidthRange(
        depths=tuple(_require_key(obj, "depths", "[[search.ranges]]")),
        start=int(_require_key(obj, "start", "[[search.ranges]]")),
        stop=int(_require_key(obj, "stop", "[[search.ranges]]")),
        step=int(obj.get("step", 1)),
        r0=None if r0 is None else float(r0),
    )


def extract_manifest(obj: typing.Any) -> ExperimentManifest:
    data_obj = _require_key(obj, "data", "document")
    generator = str(_require_key(data_obj, "generator", "[data]"))
    try:
        default_train, default_test = datagen.default_sizes(generator)
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from None
    data = DataSpec(
        generator=generator,
        n_train=int(data_obj.get("n_train", default_train)),
        n_test=int(data_obj.get("n_test", default_test)),
        seed=int(data_obj.get("seed", 0)),
        params=dict(data_obj.get("params", {})),
        grid={k: list(v) for k, v in data_obj.get("grid", {}).items()},
    )

    trials = int(obj.get("trials", 1))
    if "seeds" in obj:
        seeds = tuple(int(s) for s in obj["seeds"])
        trials = int(obj.get("trials", len(seeds)))
    else:
        base = int(obj.get("seed", 0))
        seeds = tuple(range(base, base + max(trials, 0)))

    configs = []
    for entry in obj.get("configs", []):
        r0 = entry.get("r0") if isinstance(entry, dict) else None
        configs.append(NetworkConfig(
            hidden=tuple(_require_key(entry, "hidden", "[[configs]]")),
            r0=None if r0 is None else float(r0),
        ))

    search = None
    if "search" in obj:
        search_obj = obj["search"]
        search = SearchSpec(
            depths=tuple(
                int(L) for L in _require_key(search_obj, "depths", "[search]")
            ),
            ranges=tuple(
                _extract_width_range(r)
                for r in _require_key(search_obj, "ranges", "[search]")
            ),
            strategy=str(search_obj.get("strategy", "coordinate")),
        )

    output_dir = obj.get("output_dir")
    return ExperimentManifest(
        name=str(_require_key(obj, "name", "document")),
        data=data,
        trials=trials,
        seeds=seeds,
        train=dict(obj.get("train", {})),
        configs=tuple(configs),
        search=search,
        output_dir=None if output_dir is None else str(output_dir),
    )


def preset_names() -> typing.List[str]:
    return sorted(path.stem for path in PRESET_DIR.glob("*.toml"))


def resolve_manifest(name: str) -> pathlib.Path:
    """A manifest file path, or the bundled preset of that name."""
    path = pathlib.Path(name)
    if path.is_file():
        return path
    preset = PRESET_DIR / "{}.toml".format(name)
    if preset.is_file():
        return preset
    raise InvalidInputError(
        "no manifest file or preset {!r} (presets: {})".format(
            name, ", ".join(preset_names()),
        )
    )


def load_manifest(path: PathLike) -> ExperimentManifest:
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = toml.load(f)
    except toml.TomlDecodeError as exc:
        raise MalformedDocumentError("{}: {}".format(path, exc)) from exc
    return extract_manifest(obj)


@dataclasses.dataclass(frozen=True)
class TrialTask:
    generator: str
    params: typing.Mapping[str, typing.Any]
    n_train: int
    n_test: int
    data_seed: int
    train: erm.TrainConfig
    trial: int

    @property
    def hidden(self) -> Hidden:
        return self.train.hidden


def run_trial(task: TrialTask) -> typing.Dict[str, typing.Any]:
    """Generate the trial's data, train, and return the JSON report."""
    ds = datagen.generate(
        task.generator,
        task.n_train + task.n_test,
        task.data_seed,
        task.params,
    )
    train_ds, test_ds = datagen.split(ds, task.n_train)
    return erm.train(task.train, train_ds, test_ds).to_json_obj()


@dataclasses.dataclass(frozen=True)
class TrialRecord:
    hidden: Hidden
    trial: int
    seed: int
    data_seed: int
    status: str
    report: typing.Optional[typing.Dict[str, typing.Any]] = None
    error_id: typing.Optional[str] = None
    error: typing.Optional[str] = None

    @property
    def depth(self) -> int:
        return len(self.hidden)

    @property
    def valid(self) -> bool:
        return self.status == STATUS_OK and self.report is not None and \
            bool(self.report["valid"])

    def test_metrics(self) -> typing.Optional[metrics.MetricsReport]:
        if self.report is None:
            return None
        return metrics.MetricsReport.from_json_obj(
            self.report["test_metrics"]
        )

    def to_json_obj(self, manifest_hash: str) -> typing.Dict[str, typing.Any]:
        return {
            "manifest_hash": manifest_hash,
            "depth": self.depth,
            "hidden": list(self.hidden),
            "trial": self.trial,
            "seed": self.seed,
            "data_seed": self.data_seed,
            "status": self.status,
            "error_id": self.error_id,
            "error": self.error,
            "report": self.report,
        }


@dataclasses.dataclass(frozen=True)
class ConfigSummary:
    config: NetworkConfig
    n_params: int
    records: typing.Tuple[TrialRecord, ...]
    best: bool = False

    @property
    def depth(self) -> int:
        return self.config.depth

    @property
    def mean_width(self) -> float:
        return sum(self.config.hidden) / self.depth

    @property
    def crashed(self) -> int:
        return sum(r.status == STATUS_CRASHED for r in self.records)

    @property
    def diverged(self) -> int:
        return sum(r.status == STATUS_DIVERGED for r in self.records)

    @property
    def valid_rate(self) -> float:
        return sum(r.valid for r in self.records) / len(self.records)

    def aggregate(self) -> typing.Dict[str, typing.Dict[str, float]]:
        reports = [
            m for m in (r.test_metrics() for r in self.records)
            if m is not None
        ]
        return metrics.aggregate(reports)

    @property
    def median_test_mse(self) -> float:
        return self.aggregate()["median"]["mse"]


def _score(summary: ConfigSummary) -> float:
    value = summary.median_test_mse
    return math.inf if math.isnan(value) else value


@dataclasses.dataclass(frozen=True)
class SweepResult:
    manifest: ExperimentManifest
    manifest_hash: str
    summaries: typing.Tuple[ConfigSummary, ...]

    @property
    def records(self) -> typing.List[TrialRecord]:
        return [r for s in self.summaries for r in s.records]

    @property
    def divergence_only(self) -> bool:
        """Every run diverged or crashed, and at least one diverged."""
        statuses = {r.status for r in self.records}
        return STATUS_DIVERGED in statuses and STATUS_OK not in statuses

    def best_per_depth(self) -> typing.Dict[int, ConfigSummary]:
        return {s.depth: s for s in self.summaries if s.best}


def _coordinate_order(depth: int) -> typing.List[int]:
    middle = (depth - 1) // 2
    return sorted(range(depth), key=lambda i: (abs(i - middle), i))


class SweepRunner:
    def __init__(self, manifest: ExperimentManifest, workers: int = 1):
        if manifest.data.grid:
            raise InvalidConfigError(
                "manifest {!r} has a data grid; run its expansion".format(
                    manifest.name,
                )
            )
        self.manifest = manifest
        self.manifest_hash = manifest.digest()
        self.workers = workers
        self.logger = logging.getLogger(
            ".".join([__name__, type(self).__qualname__])
        )
        sample = datagen.generate(
            manifest.data.generator, 2, manifest.data.seed,
            manifest.data.params,
        )
        self.input_dim = sample.dim
        self._done: typing.Dict[Hidden, ConfigSummary] = {}

    def _executor(self) -> concurrent.futures.Executor:
        if self.workers <= 1:
            # in-process, one run at a time
            return concurrent.futures.ThreadPoolExecutor(max_workers=1)
        return concurrent.futures.ProcessPoolExecutor(
            max_workers=self.workers,
        )

    def _tasks(self, config: NetworkConfig) -> typing.List[TrialTask]:
        data = self.manifest.data
        shape = (self.input_dim,) + config.hidden + (1,)
        return [
            TrialTask(
                generator=data.generator,
                params=data.params,
                n_train=data.n_train,
                n_test=data.n_test,
                data_seed=data.trial_seed(trial),
                train=self.manifest.train_config(shape, seed, config.r0),
                trial=trial,
            )
            for trial, seed in enumerate(self.manifest.seeds)
        ]

    def _record(self, task: TrialTask, outcome: typing.Any) -> TrialRecord:
        common = dict(
            hidden=task.hidden,
            trial=task.trial,
            seed=task.train.seed,
            data_seed=task.data_seed,
        )
        if isinstance(outcome, BaseException):
            error_id = generate_error_id()
            self.logger.error(
                "trial %d of %s crashed (error_id=%s)",
                task.trial, _hidden_label(task.hidden), error_id,
                exc_info=outcome,
            )
            return TrialRecord(status=STATUS_CRASHED, error_id=error_id,
                               error=str(outcome), **common)
        status = STATUS_DIVERGED if outcome["diverged"] else STATUS_OK
        return TrialRecord(status=status, report=outcome, **common)

    async def evaluate(
            self,
            executor: concurrent.futures.Executor,
            configs: typing.Sequence[NetworkConfig],
            ) -> typing.List[ConfigSummary]:
        """Run all trials of the configs not seen before, concurrently."""
        loop = asyncio.get_running_loop()
        pending = [c for c in dict.fromkeys(configs)
                   if c.hidden not in self._done]
        tasks = [(c, task) for c in pending for task in self._tasks(c)]
        outcomes = await asyncio.gather(
            *(loop.run_in_executor(executor, run_trial, task)
              for _, task in tasks),
            return_exceptions=True,
        )
        by_config: typing.Dict[NetworkConfig, typing.List[TrialRecord]] = {
            c: [] for c in pending
        }
        for (config, task), outcome in zip(tasks, outcomes):
            by_config[config].append(self._record(task, outcome))
        for config, records in by_config.items():
            summary = ConfigSummary(
                config=config,
                n_params=count_mlp_params(self.input_dim, config.hidden),
                records=tuple(records),
            )
            self._done[config.hidden] = summary
            self.logger.info(
                "%s: median test mse %.6g, valid rate %.2f",
                _hidden_label(config.hidden), summary.median_test_mse,
                summary.valid_rate,
            )
        return [self._done[c.hidden] for c in configs]

    async def _search_depth(
            self,
            executor: concurrent.futures.Executor,
            search: SearchSpec,
            depth: int,
            ) -> None:
        width_range = search.range_for(depth)
        candidates = width_range.candidates

        def config(hidden: typing.Sequence[int]) -> NetworkConfig:
            return NetworkConfig(hidden=tuple(hidden), r0=width_range.r0)

        if search.strategy == "uniform":
            await self.evaluate(
                executor, [config([w] * depth) for w in candidates],
            )
            return

        current = [candidates[(len(candidates) - 1) // 2]] * depth
        for layer in _coordinate_order(depth):
            options = []
            for width in candidates:
                hidden = list(current)
                hidden[layer] = width
                options.append(config(hidden))
            summaries = await self.evaluate(executor, options)
            best = min(range(len(options)),
                       key=lambda i: (_score(summaries[i]), i))
            current = list(options[best].hidden)
            self.logger.debug("depth %d layer %d -> width %d",
                              depth, layer, current[layer])

    async def run_async(self) -> SweepResult:
        executor = self._executor()
        try:
            jobs: typing.List[typing.Awaitable[typing.Any]] = []
            if self.manifest.configs:
                jobs.append(self.evaluate(executor, self.manifest.configs))
            search = self.manifest.search
            if search is not None:
                jobs.extend(self._search_depth(executor, search, depth)
                            for depth in search.depths)
            await asyncio.gather(*jobs)
        finally:
            executor.shutdown(wait=True)
        return self._result()

    def run(self) -> SweepResult:
        return asyncio.run(self.run_async())

    def _result(self) -> SweepResult:
        ordered = sorted(self._done.values(),
                         key=lambda s: (s.depth, s.config.hidden))
        best: typing.Dict[int, ConfigSummary] = {}
        for summary in ordered:
            incumbent = best.get(summary.depth)
            if incumbent is None or _score(summary) < _score(incumbent):
                best[summary.depth] = summary
        summaries = tuple(
            dataclasses.replace(s, best=best[s.depth] is s) for s in ordered
        )
        return SweepResult(
            manifest=self.manifest,
            manifest_hash=self.manifest_hash,
            summaries=summaries,
        )


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trials(result: SweepResult, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in result.records:
            json.dump(record.to_json_obj(result.manifest_hash), f,
                      sort_keys=True)
            f.write("\n")


def write_aggregate(result: SweepResult, path: PathLike) -> None:
    header = ["manifest_hash", "depth", "hidden", "n_params", "trials",
              "crashed", "diverged", "valid_rate", "best"]
    for stat in ("mean", "median"):
        header.extend("{}_{}".format(stat, name)
                      for name in metrics.METRIC_NAMES)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for s in result.summaries:
            aggregated = s.aggregate()
            row = [result.manifest_hash, s.depth,
                   _hidden_label(s.config.hidden), s.n_params,
                   len(s.records), s.crashed, s.diverged,
                   _fmt(s.valid_rate), int(s.best)]
            for stat in ("mean", "median"):
                row.extend(_fmt(aggregated[stat][name])
                           for name in metrics.METRIC_NAMES)
            writer.writerow(row)


def write_plot(result: SweepResult, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["manifest_hash", "depth", "width", "n_params",
                         "median_test_mse", "valid_rate", "best"])
        for s in result.summaries:
            writer.writerow([
                result.manifest_hash, s.depth, _fmt(s.mean_width),
                s.n_params, _fmt(s.median_test_mse), _fmt(s.valid_rate),
                int(s.best),
            ])


def write_outputs(
        result: SweepResult,
        output_dir: PathLike,
        ) -> typing.Dict[str, pathlib.Path]:
    out = pathlib.Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "manifest": out / "manifest.json",
        "trials": out / "trials.jsonl",
        "aggregate": out / "aggregate.csv",
        "plot": out / "plot.csv",
    }
    with open(paths["manifest"], "w", encoding="utf-8") as f:
        json.dump({
            "manifest_hash": result.manifest_hash,
            "manifest": result.manifest.to_json_obj(),
            "data_seeds": [result.manifest.data.trial_seed(t)
                           for t in range(result.manifest.trials)],
        }, f, sort_keys=True, indent=2)
        f.write("\n")
    write_trials(result, paths["trials"])
    write_aggregate(result, paths["aggregate"])
    write_plot(result, paths["plot"])
    return paths


def run_sweep(
        manifest: ExperimentManifest,
        workers: int = 1,
        output_dir: typing.Optional[PathLike] = None,
        ) -> SweepResult:
    """
    Run every trial of `manifest` and, if an output directory is given (or
    named by the manifest), write the result tables there.
    """
    result = SweepRunner(manifest, workers).run()
    target = output_dir if output_dir is not None else manifest.output_dir
    if target is not None:
        write_outputs(result, target)
    return result


def run_grid(
        manifest: ExperimentManifest,
        workers: int = 1,
        output_dir: typing.Optional[PathLike] = None,
        ) -> typing.List[typing.Tuple[str, SweepResult]]:
    """`run_sweep` for every grid point, each in its own subdirectory."""
    target = output_dir if output_dir is not None else manifest.output_dir
    results = []
    for label, point in manifest.expand():
        out: typing.Optional[PathLike] = target
        if target is not None and label:
            out = pathlib.Path(target) / label
        logger.info("sweep %s %s", manifest.name, label or "(no grid)")
        results.append((label, run_sweep(point, workers, out)))
    return results
