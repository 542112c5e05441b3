"""
JSON documents for networks, polynomials and composite specs.

Weights are written as sparse triplets ``{"shape", "rows", "cols",
"values"}``; a dense list of rows is accepted on input. Floats go through
``repr`` and round-trip exactly.
"""
import json
import pathlib
import typing

import numpy as np

from . import smoothapprox
from .composite import CompositeSpec
from .errors import InvalidInputError, MalformedDocumentError
from .netcore import LayerSpec, ReluNet
from .polyapprox import PolySpec


Document = typing.Dict[str, typing.Any]
PathLike = typing.Union[str, pathlib.Path]


def _require_key(obj: typing.Any, key: str) -> typing.Any:
    if not isinstance(obj, dict):
        raise MalformedDocumentError(
            "expected an object holding {!r}".format(key)
        )
    try:
        return obj[key]
    except KeyError:
        raise MalformedDocumentError(
            "malformed document: missing {!r}".format(key)
        ) from None


def _require_list(obj: typing.Any, what: str) -> typing.List[typing.Any]:
    if not isinstance(obj, list):
        raise MalformedDocumentError("{} must be a list".format(what))
    return obj


def _labels(values: np.ndarray) -> typing.List[typing.Optional[str]]:
    return [None if label is None else str(label) for label in values]


def make_layer_document(layer: LayerSpec) -> Document:
    rows, cols, values = layer.coo()
    return {
        "weights": {
            "shape": [layer.out_dim, layer.in_dim],
            "rows": rows.tolist(),
            "cols": cols.tolist(),
            "values": values.tolist(),
        },
        "biases": layer.biases.tolist(),
        "mask": layer.weight_mask.tolist(),
        "share_groups": _labels(layer.weight_groups),
        "bias_mask": layer.bias_mask.tolist(),
        "bias_groups": _labels(layer.bias_groups),
    }


def extract_layer_document(obj: typing.Any) -> LayerSpec:
    weights = _require_key(obj, "weights")
    biases = _require_list(_require_key(obj, "biases"), "biases")
    mask = obj.get("mask")
    groups = obj.get("share_groups")
    bias_mask = obj.get("bias_mask")
    bias_groups = obj.get("bias_groups")
    if isinstance(weights, list):
        return LayerSpec.dense(
            weights, biases,
            mask=mask,
            share_groups=groups,
            bias_mask=bias_mask,
            bias_groups=bias_groups,
        )
    shape = _require_list(_require_key(weights, "shape"), "weights.shape")
    if len(shape) != 2:
        raise MalformedDocumentError("weights.shape must have two entries")
    return LayerSpec.from_triplets(
        (int(shape[0]), int(shape[1])),
        np.array(_require_key(weights, "rows"), dtype=np.int64),
        np.array(_require_key(weights, "cols"), dtype=np.int64),
        np.array(_require_key(weights, "values"), dtype=np.float64),
        np.array(biases, dtype=np.float64),
        weight_mask=None if mask is None else np.array(mask, dtype=bool),
        bias_mask=None if bias_mask is None
        else np.array(bias_mask, dtype=bool),
        weight_groups=groups,
        bias_groups=bias_groups,
    )


def make_net_document(net: ReluNet) -> Document:
    return {
        "input_dim": net.input_dim,
        "layers": [make_layer_document(layer) for layer in net.layers],
        "output_map": make_layer_document(net.output_map),
    }


def extract_net_document(obj: typing.Any) -> ReluNet:
    try:
        return ReluNet(
            input_dim=int(_require_key(obj, "input_dim")),
            layers=tuple(
                extract_layer_document(layer)
                for layer in _require_list(_require_key(obj, "layers"),
                                           "layers")
            ),
            output_map=extract_layer_document(_require_key(obj,
                                                           "output_map")),
        )
    except (InvalidInputError, TypeError, ValueError) as exc:
        if isinstance(exc, MalformedDocumentError):
            raise
        raise MalformedDocumentError(
            "malformed network document: {}".format(exc)
        ) from exc


def make_poly_document(p: PolySpec) -> Document:
    return {
        "dim": p.dim,
        "degree": p.degree,
        "coeff_bound": p.coeff_bound,
        "terms": [
            {"alpha": list(alpha), "c": c} for alpha, c in p.terms.items()
        ],
    }


def extract_poly_document(obj: typing.Any) -> PolySpec:
    terms = {}
    for term in _require_list(_require_key(obj, "terms"), "terms"):
        alpha = tuple(_require_list(_require_key(term, "alpha"), "alpha"))
        if alpha in terms:
            raise MalformedDocumentError(
                "exponent {} listed twice".format(list(alpha))
            )
        terms[alpha] = float(_require_key(term, "c"))
    return PolySpec(
        dim=int(_require_key(obj, "dim")),
        degree=int(_require_key(obj, "degree")),
        coeff_bound=float(_require_key(obj, "coeff_bound")),
        terms=terms,
    )


def make_composite_document(spec: CompositeSpec) -> Document:
    return {
        "block_dims": list(spec.block_dims),
        "inner_polys": [make_poly_document(p) for p in spec.inner_polys],
        "outer": {"target": spec.outer.name, "r": spec.outer.r},
    }


def extract_composite_document(obj: typing.Any) -> CompositeSpec:
    block_dims = tuple(
        int(d) for d in _require_list(_require_key(obj, "block_dims"),
                                      "block_dims")
    )
    outer = _require_key(obj, "outer")
    return CompositeSpec(
        block_dims=block_dims,
        inner_polys=tuple(
            extract_poly_document(p)
            for p in _require_list(_require_key(obj, "inner_polys"),
                                   "inner_polys")
        ),
        outer=smoothapprox.target_from_name(
            str(_require_key(outer, "target")),
            len(block_dims),
            float(_require_key(outer, "r")),
        ),
    )


def _load_json(path: PathLike) -> typing.Any:
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise MalformedDocumentError(
                "{}: {}".format(path, exc)
            ) from exc


def _dump_json(obj: typing.Any, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f)
        f.write("\n")


def dump_net(net: ReluNet, path: PathLike) -> None:
    _dump_json(make_net_document(net), path)


def load_net(path: PathLike) -> ReluNet:
    return extract_net_document(_load_json(path))


def load_poly(path: PathLike) -> PolySpec:
    return extract_poly_document(_load_json(path))


def load_composite(path: PathLike) -> CompositeSpec:
    return extract_composite_document(_load_json(path))
