"""
Explicit deep ReLU networks.

A network is a stack of hidden layers ``h_k = relu(W_k h_{k-1} + b_k)``
followed by an affine output map. Weights are stored as CSR matrices; the
explicit entries of a matrix are its structural connections.

Every explicit entry (and every bias) carries a *tunable* flag and an optional
share-group label. Labels name parameter atoms: entries with the same plain
label are one shared parameter and must hold equal values. Entries produced by
fusing two affine maps carry a derived label (``~a|b|...``) listing the atoms
they are computed from, so fusion never invents parameters that are already
accounted for. Tunable entries without a label are independent parameters.
"""
import dataclasses
import logging
import typing

import numpy as np
import scipy.sparse

from .errors import InvalidInputError


logger = logging.getLogger(__name__)

DERIVED_PREFIX = "~"
ATOM_SEPARATOR = "|"

# label kinds used while merging entries
_FIXED = 0
_FREE = 1
_LABELED = 2

DEFAULT_CHUNK = 2048

Label = typing.Optional[str]


def _atoms(label: Label) -> typing.Tuple[str, ...]:
    if label is None:
        return ()
    if label.startswith(DERIVED_PREFIX):
        return tuple(label[len(DERIVED_PREFIX):].split(ATOM_SEPARATOR))
    return (label,)


def _derived_label(atoms: typing.Iterable[str]) -> str:
    return DERIVED_PREFIX + ATOM_SEPARATOR.join(sorted(set(atoms)))


def _label_array(
        labels: typing.Optional[typing.Iterable[Label]],
        n: int,
        ) -> np.ndarray:
    if isinstance(labels, np.ndarray) and labels.dtype == object \
            and labels.shape == (n,):
        return labels.copy()
    result = np.empty(n, dtype=object)
    if labels is None:
        result[:] = None
        return result
    values = list(labels)
    if len(values) != n:
        raise InvalidInputError(
            "expected {} share-group labels, got {}".format(n, len(values))
        )
    for i, label in enumerate(values):
        if label is not None:
            label = str(label)
            if not label.startswith(DERIVED_PREFIX) and \
                    ATOM_SEPARATOR in label:
                raise InvalidInputError(
                    "share-group label {!r} contains {!r}".format(
                        label, ATOM_SEPARATOR,
                    )
                )
        result[i] = label
    return result


def _kinds(mask: np.ndarray, labels: np.ndarray) -> np.ndarray:
    has_label = np.fromiter(
        (label is not None for label in labels),
        dtype=bool,
        count=len(labels),
    )
    kinds = np.full(len(mask), _FIXED, dtype=np.int8)
    kinds[mask & ~has_label] = _FREE
    kinds[mask & has_label] = _LABELED
    return kinds


def _merge_terms(
        entry: np.ndarray,
        n_entries: int,
        values: np.ndarray,
        factors: typing.Sequence[typing.Tuple[np.ndarray, np.ndarray]],
        ) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Sum product terms into entries and derive their masks and labels.

    `entry` maps each term to its target entry, `values` holds the term
    values and `factors` holds one ``(kinds, labels)`` pair per factor of the
    product, aligned with the terms.
    """
    merged = np.bincount(entry, weights=values, minlength=n_entries)
    term_free = np.zeros(len(entry), dtype=bool)
    term_tunable = np.zeros(len(entry), dtype=bool)
    for kinds, _ in factors:
        term_free |= kinds == _FREE
        term_tunable |= kinds != _FIXED

    free = np.bincount(entry, weights=term_free,
                       minlength=n_entries) > 0
    tunable = np.bincount(entry, weights=term_tunable,
                          minlength=n_entries) > 0

    labels = np.empty(n_entries, dtype=object)
    labels[:] = None
    atom_sets: typing.Dict[int, typing.Set[str]] = {}
    for t in np.flatnonzero(term_tunable & ~free[entry]):
        target = atom_sets.setdefault(int(entry[t]), set())
        for kinds, factor_labels in factors:
            if kinds[t] == _LABELED:
                target.update(_atoms(factor_labels[t]))
    for e, atoms in atom_sets.items():
        labels[e] = _derived_label(atoms)

    return merged, tunable, labels


@dataclasses.dataclass(frozen=True, eq=False)
class LayerSpec:
    """
    An affine map ``x -> W x + b`` with per-entry parameter bookkeeping.

    `weight_mask`, `weight_groups` are aligned with ``weights.data``;
    `bias_mask`, `bias_groups` with `biases`.
    """
    weights: scipy.sparse.csr_matrix
    biases: np.ndarray
    weight_mask: np.ndarray
    bias_mask: np.ndarray
    weight_groups: np.ndarray
    bias_groups: np.ndarray

    def __post_init__(self) -> None:
        rows, _ = self.weights.shape
        if self.biases.shape != (rows,):
            raise InvalidInputError(
                "bias length {} does not match {} weight rows".format(
                    self.biases.shape, rows,
                )
            )
        nnz = len(self.weights.data)
        if self.weight_mask.shape != (nnz,) or \
                self.weight_groups.shape != (nnz,):
            raise InvalidInputError("weight mask/labels misaligned")
        if self.bias_mask.shape != (rows,) or \
                self.bias_groups.shape != (rows,):
            raise InvalidInputError("bias mask/labels misaligned")

    @classmethod
    def from_triplets(
            cls,
            shape: typing.Tuple[int, int],
            rows: np.ndarray,
            cols: np.ndarray,
            values: np.ndarray,
            biases: np.ndarray,
            weight_mask: typing.Optional[np.ndarray] = None,
            bias_mask: typing.Optional[np.ndarray] = None,
            weight_groups: typing.Optional[typing.Iterable[Label]] = None,
            bias_groups: typing.Optional[typing.Iterable[Label]] = None,
            ) -> "LayerSpec":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        biases = np.array(biases, dtype=np.float64)
        n_rows, n_cols = shape
        nnz = len(values)
        if rows.shape != (nnz,) or cols.shape != (nnz,):
            raise InvalidInputError("triplet arrays must have equal length")
        if nnz and (rows.min() < 0 or rows.max() >= n_rows or
                    cols.min() < 0 or cols.max() >= n_cols):
            raise InvalidInputError("triplet index outside {}".format(shape))

        if weight_mask is None:
            wmask = np.ones(nnz, dtype=bool)
        else:
            wmask = np.asarray(weight_mask, dtype=bool).copy()
        if bias_mask is None:
            bmask = np.ones(n_rows, dtype=bool)
        else:
            bmask = np.asarray(bias_mask, dtype=bool).copy()
        wgroups = _label_array(weight_groups, nnz)
        bgroups = _label_array(bias_groups, n_rows)

        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if nnz > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if dup.any():
                raise InvalidInputError("duplicate weight entries")
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
        matrix = scipy.sparse.csr_matrix(
            (values, cols, indptr),
            shape=(n_rows, n_cols),
        )
        return cls(
            weights=matrix,
            biases=biases,
            weight_mask=wmask[order],
            bias_mask=bmask,
            weight_groups=wgroups[order],
            bias_groups=bgroups,
        )

    @classmethod
    def dense(
            cls,
            weights: typing.Any,
            biases: typing.Any,
            mask: typing.Optional[typing.Any] = None,
            share_groups: typing.Optional[typing.Any] = None,
            bias_mask: typing.Optional[typing.Any] = None,
            bias_groups: typing.Optional[typing.Iterable[Label]] = None,
            ) -> "LayerSpec":
        """
        Build a layer in which every matrix entry is explicit.
        """
        w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        rows, cols = np.indices(w.shape)
        flat_groups = None
        if share_groups is not None:
            flat_groups = list(np.asarray(share_groups, dtype=object).ravel())
        flat_mask = None
        if mask is not None:
            flat_mask = np.asarray(mask, dtype=bool).ravel()
        return cls.from_triplets(
            w.shape,
            rows.ravel(),
            cols.ravel(),
            w.ravel(),
            biases,
            weight_mask=flat_mask,
            bias_mask=bias_mask,
            weight_groups=flat_groups,
            bias_groups=bias_groups,
        )

    @classmethod
    def structural(
            cls,
            weights: typing.Any,
            biases: typing.Any,
            prefix: typing.Optional[str] = None,
            fixed_weights: bool = False,
            fixed_biases: bool = False,
            ) -> "LayerSpec":
        """
        Build a layer from a dense construction matrix.

        Nonzero weights become explicit tunable entries, zero biases are fixed.
        With a `prefix`, every tunable entry gets its own positional label, so
        two layers built from the same prefix and values share parameters.
        """
        w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        b = np.asarray(biases, dtype=np.float64)
        rows, cols = np.nonzero(w)
        values = w[rows, cols]
        wmask = np.full(len(values), not fixed_weights)
        bmask = (b != 0) & (not fixed_biases)
        wgroups: typing.Optional[typing.List[Label]] = None
        bgroups: typing.Optional[typing.List[Label]] = None
        if prefix is not None:
            wgroups = [
                "{}.w{}.{}".format(prefix, r, c) if m else None
                for r, c, m in zip(rows, cols, wmask)
            ]
            bgroups = [
                "{}.b{}".format(prefix, r) if m else None
                for r, m in enumerate(bmask)
            ]
        return cls.from_triplets(
            w.shape, rows, cols, values, b,
            weight_mask=wmask,
            bias_mask=bmask,
            weight_groups=wgroups,
            bias_groups=bgroups,
        )

    @property
    def in_dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weights.shape[0])

    @property
    def nnz(self) -> int:
        return len(self.weights.data)

    def coo(self) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
        rows = np.repeat(
            np.arange(self.out_dim, dtype=np.int64),
            np.diff(self.weights.indptr),
        )
        return (
            rows,
            self.weights.indices.astype(np.int64),
            self.weights.data,
        )

    def apply(self, h: np.ndarray) -> np.ndarray:
        return np.asarray(self.weights @ h.T).T + self.biases

    def to_dense(self) -> np.ndarray:
        return np.asarray(self.weights.todense())

    def tunable_values(self) -> np.ndarray:
        return np.concatenate([
            self.weights.data[self.weight_mask],
            self.biases[self.bias_mask],
        ])

    def tunable_labels(self) -> typing.Iterator[Label]:
        yield from self.weight_groups[self.weight_mask]
        yield from self.bias_groups[self.bias_mask]


@dataclasses.dataclass(frozen=True, eq=False)
class ReluNet:
    input_dim: int
    layers: typing.Tuple[LayerSpec, ...]
    output_map: LayerSpec

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise InvalidInputError("input_dim must be positive")
        if not self.layers:
            raise InvalidInputError("a ReluNet needs at least one layer")
        prev = self.input_dim
        for k, layer in enumerate(self.layers, 1):
            if layer.in_dim != prev:
                raise InvalidInputError(
                    "layer {} expects {} inputs, previous width is {}".format(
                        k, layer.in_dim, prev,
                    )
                )
            prev = layer.out_dim
        if self.output_map.in_dim != prev:
            raise InvalidInputError(
                "output map expects {} inputs, last width is {}".format(
                    self.output_map.in_dim, prev,
                )
            )

    def depth(self) -> int:
        return len(self.layers)

    @property
    def output_dim(self) -> int:
        return self.output_map.out_dim

    def layer_widths(self) -> typing.List[int]:
        return [layer.out_dim for layer in self.layers]

    def width(self) -> int:
        return max(self.layer_widths())

    def num_units(self) -> int:
        return sum(self.layer_widths())

    def all_maps(self) -> typing.Iterator[LayerSpec]:
        yield from self.layers
        yield self.output_map

    def param_bound(self) -> float:
        bound = 0.0
        for layer in self.all_maps():
            values = layer.tunable_values()
            if len(values):
                bound = max(bound, float(np.max(np.abs(values))))
        return bound

    def __call__(self, x: typing.Any) -> np.ndarray:
        return evaluate(self, x)


def evaluate(
        net: ReluNet,
        x: typing.Any,
        chunk_size: int = DEFAULT_CHUNK,
        ) -> np.ndarray:
    """
    Evaluate `net` at one point (1-d input) or a batch of points (rows).
    """
    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    if single:
        points = points[np.newaxis, :]
    if points.ndim != 2 or points.shape[1] != net.input_dim:
        raise InvalidInputError(
            "expected input of dimension {}, got shape {}".format(
                net.input_dim, np.shape(x),
            )
        )

    out = np.empty((points.shape[0], net.output_dim))
    chunk = max(chunk_size, 1)
    for start in range(0, points.shape[0], chunk):
        h = points[start:start+chunk]
        for layer in net.layers:
            h = np.maximum(layer.apply(h), 0.0)
        out[start:start+chunk] = net.output_map.apply(h)

    if single:
        return out[0]
    return out


def _fuse(outer: LayerSpec, inner: LayerSpec) -> LayerSpec:
    """
    The affine map ``x -> outer(inner(x))`` with derived bookkeeping.
    """
    if outer.in_dim != inner.out_dim:
        raise InvalidInputError(
            "cannot fuse: outer expects {} inputs, inner yields {}".format(
                outer.in_dim, inner.out_dim,
            )
        )

    o_rows, o_cols, o_vals = outer.coo()
    i_rows, i_cols, i_vals = inner.coo()
    o_kinds = _kinds(outer.weight_mask, outer.weight_groups)
    i_kinds = _kinds(inner.weight_mask, inner.weight_groups)
    n_cols = inner.in_dim

    # join outer entries (r, k) with inner entries (k, c)
    indptr = inner.weights.indptr
    counts = np.diff(indptr)[o_cols]
    o_idx = np.repeat(np.arange(len(o_vals)), counts)
    starts = np.repeat(indptr[o_cols], counts)
    local = np.arange(len(o_idx)) - np.repeat(np.cumsum(counts) - counts,
                                              counts)
    i_idx = starts + local

    keys = o_rows[o_idx] * n_cols + i_cols[i_idx]
    uniq, entry = np.unique(keys, return_inverse=True)
    entry = entry.ravel()
    values, wmask, wgroups = _merge_terms(
        entry,
        len(uniq),
        o_vals[o_idx] * i_vals[i_idx],
        [
            (o_kinds[o_idx], outer.weight_groups[o_idx]),
            (i_kinds[i_idx], inner.weight_groups[i_idx]),
        ],
    )

    # bias: outer.W @ inner.b + outer.b
    ib_kinds = _kinds(inner.bias_mask, inner.bias_groups)
    ob_kinds = _kinds(outer.bias_mask, outer.bias_groups)
    relevant = (inner.biases[o_cols] != 0) | (ib_kinds[o_cols] != _FIXED)
    t_rows = np.concatenate([o_rows[relevant], np.arange(outer.out_dim)])
    t_vals = np.concatenate([
        o_vals[relevant] * inner.biases[o_cols[relevant]],
        outer.biases,
    ])
    ones_fixed = np.full(outer.out_dim, _FIXED, dtype=np.int8)
    no_labels = _label_array(None, outer.out_dim)
    bias, bmask, bgroups = _merge_terms(
        t_rows,
        outer.out_dim,
        t_vals,
        [
            (
                np.concatenate([o_kinds[relevant], ones_fixed]),
                np.concatenate([outer.weight_groups[relevant], no_labels]),
            ),
            (
                np.concatenate([ib_kinds[o_cols[relevant]], ob_kinds]),
                np.concatenate([
                    inner.bias_groups[o_cols[relevant]],
                    outer.bias_groups,
                ]),
            ),
        ],
    )
    # untouched outer biases keep their own labels
    plain = np.bincount(
        t_rows[:np.count_nonzero(relevant)],
        minlength=outer.out_dim,
    ) == 0
    bgroups[plain] = outer.bias_groups[plain]
    bmask[plain] = outer.bias_mask[plain]

    logger.debug("fused %d x %d map into %d entries",
                 outer.out_dim, n_cols, len(uniq))

    return LayerSpec.from_triplets(
        (outer.out_dim, n_cols),
        uniq // n_cols,
        uniq % n_cols,
        values,
        bias,
        weight_mask=wmask,
        bias_mask=bmask,
        weight_groups=wgroups,
        bias_groups=bgroups,
    )


def compose(outer: ReluNet, inner: ReluNet) -> ReluNet:
    """
    The network ``x -> outer(inner(x))`` of depth ``depth(inner) +
    depth(outer)``; the inner output map is fused into outer's first layer.
    """
    if inner.output_dim != outer.input_dim:
        raise InvalidInputError(
            "inner yields {} outputs, outer expects {} inputs".format(
                inner.output_dim, outer.input_dim,
            )
        )
    fused = _fuse(outer.layers[0], inner.output_map)
    return ReluNet(
        input_dim=inner.input_dim,
        layers=inner.layers + (fused,) + outer.layers[1:],
        output_map=outer.output_map,
    )


def append_affine(net: ReluNet, affine: LayerSpec) -> ReluNet:
    """
    Post-compose an affine map with the output map (no extra layer).
    """
    return ReluNet(
        input_dim=net.input_dim,
        layers=net.layers,
        output_map=_fuse(affine, net.output_map),
    )


def _identity_layer(width: int, bias: float = 0.0,
                    bias_label: Label = None) -> LayerSpec:
    idx = np.arange(width)
    return LayerSpec.from_triplets(
        (width, width), idx, idx, np.ones(width),
        np.full(width, bias),
        bias_mask=np.full(width, bias != 0),
        weight_groups=["unit"] * width,
        bias_groups=[bias_label] * width,
    )


def pad_to_depth(net: ReluNet, depth: int) -> ReluNet:
    """
    Append identity layers after the last hidden layer.

    Hidden activations are nonnegative, so the padding is exact.
    """
    if depth < net.depth():
        raise InvalidInputError(
            "cannot pad a depth-{} net to depth {}".format(net.depth(), depth)
        )
    if depth == net.depth():
        return net
    width = net.layers[-1].out_dim
    extra = tuple(_identity_layer(width) for _ in range(depth - net.depth()))
    return ReluNet(
        input_dim=net.input_dim,
        layers=net.layers + extra,
        output_map=net.output_map,
    )


def identity_channels(dim: int, depth: int, bound: float) -> ReluNet:
    """
    ``x -> x`` on ``[-bound, bound]^dim`` via ``relu(x + bound) - bound``.

    Inputs below ``-bound`` come out as ``-bound``.
    """
    if dim < 1 or depth < 1 or not bound > 0:
        raise InvalidInputError(
            "identity channels need dim, depth >= 1 and bound > 0"
        )
    first = _identity_layer(dim, bias=bound,
                            bias_label="shift:{!r}".format(float(bound)))
    rest = tuple(_identity_layer(dim) for _ in range(depth - 1))
    out = _identity_layer(dim, bias=-bound,
                          bias_label="unshift:{!r}".format(float(bound)))
    return ReluNet(input_dim=dim, layers=(first,) + rest, output_map=out)


def _stack(parts: typing.Sequence[LayerSpec],
           shared_input: bool) -> LayerSpec:
    rows, cols, values = [], [], []
    wmask, bmask, wgroups, bgroups, biases = [], [], [], [], []
    row_off = col_off = 0
    for part in parts:
        r, c, v = part.coo()
        rows.append(r + row_off)
        cols.append(c if shared_input else c + col_off)
        values.append(v)
        wmask.append(part.weight_mask)
        wgroups.append(part.weight_groups)
        biases.append(part.biases)
        bmask.append(part.bias_mask)
        bgroups.append(part.bias_groups)
        row_off += part.out_dim
        col_off += part.in_dim
    n_cols = parts[0].in_dim if shared_input else col_off
    return LayerSpec.from_triplets(
        (row_off, n_cols),
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(values),
        np.concatenate(biases),
        weight_mask=np.concatenate(wmask),
        bias_mask=np.concatenate(bmask),
        weight_groups=np.concatenate(wgroups),
        bias_groups=np.concatenate(bgroups),
    )


def parallel(
        nets: typing.Sequence[ReluNet],
        padded_to_common_depth: bool = True,
        ) -> ReluNet:
    """
    Run `nets` side by side on the same input and concatenate their outputs.
    """
    if not nets:
        raise InvalidInputError("parallel needs at least one network")
    input_dim = nets[0].input_dim
    if any(net.input_dim != input_dim for net in nets):
        raise InvalidInputError("parallel members must share input_dim")
    depth = max(net.depth() for net in nets)
    if any(net.depth() != depth for net in nets):
        if not padded_to_common_depth:
            raise InvalidInputError(
                "member depths differ and padding is disabled"
            )
        nets = [pad_to_depth(net, depth) for net in nets]
    if len(nets) == 1:
        return nets[0]

    layers = tuple(
        _stack([net.layers[k] for net in nets], shared_input=(k == 0))
        for k in range(depth)
    )
    output_map = _stack([net.output_map for net in nets], shared_input=False)
    return ReluNet(input_dim=input_dim, layers=layers, output_map=output_map)


def embed_inputs(
        net: ReluNet,
        columns: typing.Sequence[int],
        input_dim: int,
        ) -> ReluNet:
    """
    Let `net` read input ``i`` from column ``columns[i]`` of a wider input.

    Repeated columns are allowed; their weights are summed.
    """
    columns = np.asarray(columns, dtype=np.int64)
    if columns.shape != (net.input_dim,):
        raise InvalidInputError(
            "need {} column indices, got {}".format(
                net.input_dim, len(columns),
            )
        )
    if columns.size and (columns.min() < 0 or columns.max() >= input_dim):
        raise InvalidInputError("column index outside the embedding input")

    selector = LayerSpec.from_triplets(
        (net.input_dim, input_dim),
        np.arange(net.input_dim),
        columns,
        np.ones(net.input_dim),
        np.zeros(net.input_dim),
        weight_mask=np.zeros(net.input_dim, dtype=bool),
        bias_mask=np.zeros(net.input_dim, dtype=bool),
    )
    first = _fuse(net.layers[0], selector)
    return ReluNet(
        input_dim=input_dim,
        layers=(first,) + net.layers[1:],
        output_map=net.output_map,
    )


def free_param_atoms(net: ReluNet) -> typing.Tuple[int, typing.Set[str]]:
    """
    Return the number of unlabeled tunable entries and the set of atoms.
    """
    unlabeled = 0
    seen: typing.Set[Label] = set()
    for layer in net.all_maps():
        labels = list(layer.tunable_labels())
        unlabeled += labels.count(None)
        seen.update(labels)
    seen.discard(None)
    atoms: typing.Set[str] = set()
    for label in seen:
        atoms.update(_atoms(label))
    return unlabeled, atoms


def count_free_params(net: ReluNet) -> int:
    unlabeled, atoms = free_param_atoms(net)
    return unlabeled + len(atoms)


def validate(net: ReluNet, rtol: float = 1e-12) -> None:
    """
    Check that all entries of each plain share group hold equal values.
    """
    values: typing.Dict[str, float] = {}
    for k, layer in enumerate(net.all_maps()):
        pairs = zip(
            np.concatenate([layer.weight_groups, layer.bias_groups]),
            np.concatenate([layer.weights.data, layer.biases]),
        )
        for label, value in pairs:
            if label is None or label.startswith(DERIVED_PREFIX):
                continue
            ref = values.setdefault(label, float(value))
            if abs(ref - value) > rtol * max(1.0, abs(ref)):
                raise InvalidInputError(
                    "share group {!r} holds {!r} and {!r} (map {})".format(
                        label, ref, float(value), k,
                    )
                )


def share_groups(net: ReluNet) -> typing.Set[str]:
    _, atoms = free_param_atoms(net)
    return atoms

