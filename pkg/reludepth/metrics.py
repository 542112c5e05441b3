"""
Regression metrics.

``mdae_paper`` and ``evs_paper`` follow the printed definitions used in the
experiment tables (median distance to the median target, and one minus the
residual sum over the raw target energy). The ``*_standard`` fields are the
usual median absolute error and explained variance.
"""
import dataclasses
import math
import typing

import numpy as np

from .errors import InvalidInputError


METRIC_NAMES = (
    "mse", "mae", "mdae_paper", "mdae_standard",
    "r2s", "evs_paper", "evs_standard",
)


def lower_median(values: typing.Any) -> float:
    """The median, taking the lower middle element for even counts."""
    ordered = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if not len(ordered):
        raise InvalidInputError("median of an empty sequence")
    return float(ordered[(len(ordered) - 1) // 2])


@dataclasses.dataclass(frozen=True)
class MetricsReport:
    mse: float
    mae: float
    mdae_paper: float
    mdae_standard: float
    r2s: float
    evs_paper: float
    evs_standard: float
    n_points: int
    undefined: typing.Tuple[str, ...] = ()

    def to_json_obj(self) -> typing.Dict[str, typing.Any]:
        result: typing.Dict[str, typing.Any] = {}
        for name in METRIC_NAMES:
            value = getattr(self, name)
            result[name] = None if math.isnan(value) else value
        result["n_points"] = self.n_points
        result["undefined"] = list(self.undefined)
        return result

    @classmethod
    def from_json_obj(
            cls,
            obj: typing.Mapping[str, typing.Any],
            ) -> "MetricsReport":
        values = {
            name: math.nan if obj[name] is None else float(obj[name])
            for name in METRIC_NAMES
        }
        return cls(
            n_points=int(obj["n_points"]),
            undefined=tuple(obj.get("undefined", ())),
            **values,
        )


def _ratio(num: float, den: float, name: str,
           undefined: typing.List[str]) -> float:
    if den == 0:
        undefined.append(name)
        return math.nan
    return 1 - num / den


def compute_metrics(
        predictions: typing.Any,
        targets: typing.Any,
        ) -> MetricsReport:
    f = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if f.shape != y.shape:
        raise InvalidInputError(
            "{} predictions for {} targets".format(len(f), len(y))
        )
    if not len(y):
        raise InvalidInputError("metrics need at least one point")

    residual = y - f
    sse = float(np.sum(residual ** 2))
    undefined: typing.List[str] = []
    r2s = _ratio(sse, float(np.sum((y - np.mean(y)) ** 2)), "r2s",
                 undefined)
    evs_paper = _ratio(sse, float(np.sum(y ** 2)), "evs_paper", undefined)
    evs_standard = _ratio(float(np.var(residual)), float(np.var(y)),
                          "evs_standard", undefined)
    return MetricsReport(
        mse=sse / len(y),
        mae=float(np.mean(np.abs(residual))),
        mdae_paper=lower_median(np.abs(f - lower_median(y))),
        mdae_standard=lower_median(np.abs(residual)),
        r2s=r2s,
        evs_paper=evs_paper,
        evs_standard=evs_standard,
        n_points=len(y),
        undefined=tuple(undefined),
    )


def aggregate(
        reports: typing.Sequence[MetricsReport],
        ) -> typing.Dict[str, typing.Dict[str, float]]:
    """
    Mean and (lower) median of every metric over the reports, skipping
    undefined values.
    """
    result: typing.Dict[str, typing.Dict[str, float]] = {
        "mean": {}, "median": {},
    }
    for name in METRIC_NAMES:
        values = [getattr(r, name) for r in reports]
        defined = [v for v in values if not math.isnan(v)]
        if defined:
            result["mean"][name] = float(np.mean(defined))
            result["median"][name] = lower_median(defined)
        else:
            result["mean"][name] = math.nan
            result["median"][name] = math.nan
    return result
