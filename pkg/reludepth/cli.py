import argparse
import json
import logging
import pathlib
import sys
import typing

import numpy as np
import toml
from dotenv import load_dotenv

from . import (
    capacity,
    composite,
    datagen,
    erm,
    gates,
    infra,
    netcodec,
    netcore,
    polyapprox,
    smoothapprox,
    sweep,
)
from .errors import (
    EXIT_INTERNAL,
    EXIT_SUCCESS,
    DivergenceError,
    InvalidInputError,
    VerificationFailure,
    exit_code_for,
)
from .netcore import ReluNet


logger = logging.getLogger(__name__)

CONSTRUCT_KINDS = (
    "psi", "square", "product", "poly", "smooth", "composite", "radial",
    "partial-radial",
)

Reference = typing.Callable[[np.ndarray], np.ndarray]


def _emit(obj: typing.Any, out: typing.Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out is None:
        print(text)
        return
    with open(out, "w", encoding="utf-8") as f:
        f.write(text)
        f.write("\n")


def _int_list(s: str) -> typing.List[int]:
    try:
        return [int(part) for part in s.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected comma separated integers, got {!r}".format(s)
        ) from None


def _depth_range(s: str) -> range:
    first, sep, last = s.partition(":")
    try:
        if not sep:
            return range(int(first), int(first) + 1)
        return range(int(first), int(last) + 1)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected FIRST:LAST, got {!r}".format(s)
        ) from None


def _key_value(s: str) -> typing.Tuple[str, typing.Any]:
    key, sep, raw = s.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(
            "expected KEY=VALUE, got {!r}".format(s)
        )
    try:
        value = toml.loads("v = {}".format(raw))["v"]
    except toml.TomlDecodeError:
        value = raw
    return key, value


# construct

def _gate_config(args: argparse.Namespace) -> gates.GateConfig:
    return gates.GateConfig(
        theta=args.theta,
        l_tilde=args.ltilde,
        epsilon=args.eps,
        arity=args.arity,
    )


def _size_report(
        kind: str,
        net: ReluNet,
        epsilon: typing.Optional[float],
        formula: typing.Mapping[str, typing.Any],
        details: typing.Optional[typing.Mapping[str, typing.Any]] = None,
        ) -> typing.Dict[str, typing.Any]:
    return {
        "kind": kind,
        "epsilon": epsilon,
        "input_dim": net.input_dim,
        "depth": net.depth(),
        "width": net.width(),
        "free_params": netcore.count_free_params(net),
        "param_bound": net.param_bound(),
        "formula": dict(formula),
        "details": dict(details or {}),
    }


def _construct(
        args: argparse.Namespace,
        ) -> typing.Tuple[ReluNet, typing.Dict[str, typing.Any]]:
    kind = args.kind
    if kind == "psi":
        net = smoothapprox.psi_net()
        return net, _size_report(kind, net, None, {"depth": 1, "units": 4})

    if kind in ("radial", "partial-radial"):
        if args.budget is None:
            raise InvalidInputError("--budget is required for " + kind)
        dim = args.dim if args.dim is not None else 4
        if kind == "radial":
            g = smoothapprox.get_target(args.target, 1, args.r)
            plan = composite.radial_plan(g, dim, args.budget)
            spec = composite.radial_spec(g, dim)
        else:
            if args.d_prime is None:
                raise InvalidInputError("--d-prime is required for " + kind)
            g = smoothapprox.get_target(args.target, dim - args.d_prime + 1,
                                        args.r)
            plan = composite.partial_radial_plan(g, dim, args.d_prime,
                                                 args.budget)
            spec = composite.partial_radial_spec(g, dim, args.d_prime)
        net, report = composite.build_composite_net(
            spec, plan.epsilon, plan.gate_config(), depth=plan.depth,
        )
        return net, _size_report(
            kind, net, plan.epsilon,
            {"depth": plan.depth,
             "proof_param_count": report.proof_param_count},
            {"plan": {"theta": plan.theta, "l_tilde": plan.l_tilde,
                      "budget": args.budget},
             "composite": report.to_json_obj()},
        )

    cfg = _gate_config(args)
    if kind == "square":
        net = gates.square_gate(cfg)
        gate_rep = gates.gate_report(net, cfg)
        return net, _size_report(
            kind, net, cfg.epsilon,
            {"depth": cfg.block_depth - 1,
             "levels": gates.series_length(cfg.epsilon)},
            gate_rep.to_json_obj(),
        )

    if kind == "product":
        net = gates.productL_gate(cfg)
        return net, _size_report(
            kind, net, cfg.epsilon,
            {"depth": gates.product_depth(cfg.arity, cfg.l_tilde),
             "depth_bound": 2 * cfg.arity * cfg.l_tilde + 8 * cfg.arity},
            gates.gate_report(net, cfg).to_json_obj(),
        )

    if kind == "poly":
        if args.poly is None:
            raise InvalidInputError("--poly FILE is required for poly")
        p = netcodec.load_poly(args.poly)
        net = polyapprox.sparse_poly_net(p, cfg)
        return net, _size_report(
            kind, net, cfg.epsilon,
            {"depth": polyapprox.poly_depth(p.degree, cfg.l_tilde)},
            {"mu": p.sparsity, "beta": p.degree,
             "branch_epsilon": polyapprox.branch_epsilon(p, cfg.epsilon)},
        )

    if kind == "smooth":
        dim = args.dim if args.dim is not None else 2
        f = smoothapprox.get_target(args.target, dim, args.r)
        net, smooth_report = smoothapprox.build_smooth_net(f, args.eps, cfg)
        return net, _size_report(
            kind, net, args.eps,
            {"depth": smoothapprox.smooth_depth(dim, f.s, cfg.l_tilde),
             "proof_param_count": smooth_report.proof_param_count},
            smooth_report.to_json_obj(),
        )

    if kind == "composite":
        if args.composite is None:
            raise InvalidInputError(
                "--composite FILE is required for composite"
            )
        spec = netcodec.load_composite(args.composite)
        net, comp_report = composite.build_composite_net(spec, args.eps, cfg)
        return net, _size_report(
            kind, net, args.eps,
            {"depth": comp_report.expected_depth,
             "proof_param_count": comp_report.proof_param_count},
            comp_report.to_json_obj(),
        )

    raise InvalidInputError("unknown construction {!r}".format(kind))


def cmd_construct(args: argparse.Namespace,
                  config: infra.AppConfig) -> int:
    net, report = _construct(args)
    netcodec.dump_net(net, args.out)
    logger.info("wrote %s net (depth %d) to %s",
                args.kind, net.depth(), args.out)
    _emit(report, args.report)
    return EXIT_SUCCESS


# verify

def _oracle(
        name: str,
        dim: int,
        r: float,
        ) -> typing.Tuple[Reference, float, float]:
    """Reference function and the cube ``[low, high]^dim`` it is checked on."""
    kind, _, arg = name.partition(":")
    if kind == "psi":
        return (lambda x: smoothapprox.psi(x[:, 0])), -3.0, 3.0
    if kind == "square":
        return (lambda x: x[:, 0] ** 2), 0.0, 1.0
    if kind == "product":
        return (lambda x: np.prod(x, axis=1)), -1.0, 1.0
    if kind == "zero":
        return (lambda x: np.zeros(len(x))), -1.0, 1.0
    if kind == "poly" and arg:
        p = netcodec.load_poly(arg)
        return (lambda x: polyapprox.eval_poly(p, x)), -1.0, 1.0
    if kind == "smooth" and arg:
        f = smoothapprox.get_target(arg, dim, r)
        return f, -1.0, 1.0
    if kind == "composite" and arg:
        spec = netcodec.load_composite(arg)
        return (lambda x: composite.eval_composite(spec, x)), -1.0, 1.0
    if kind == "radial" and arg:
        radial = composite.radial_spec(
            smoothapprox.get_target(arg, 1, r), dim,
        )
        return (lambda x: composite.eval_composite(radial, x)), -1.0, 1.0
    raise InvalidInputError("unknown oracle {!r}".format(name))


def sample_points(
        dim: int,
        low: float,
        high: float,
        samples: int,
        sampling: str,
        seed: int,
        ) -> np.ndarray:
    if samples < 1:
        raise InvalidInputError("need at least one sample")
    if sampling == "grid":
        per_axis = max(int(round(samples ** (1 / dim))), 2)
        axes = [np.linspace(low, high, per_axis)] * dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=(samples, dim))


def verify_net(
        net: ReluNet,
        oracle: str,
        epsilon: float,
        samples: int = 10000,
        sampling: str = "random",
        seed: int = 0,
        r: float = 2.0,
        chunk_size: int = netcore.DEFAULT_CHUNK,
        ) -> typing.Dict[str, typing.Any]:
    reference, low, high = _oracle(oracle, net.input_dim, r)
    points = sample_points(net.input_dim, low, high, samples, sampling, seed)
    values = netcore.evaluate(net, points, chunk_size)[:, 0]
    errors = np.abs(values - np.asarray(reference(points)))
    max_error = float(np.max(errors))
    return {
        "oracle": oracle,
        "epsilon": epsilon,
        "sampling": sampling,
        "samples": len(points),
        "seed": seed,
        "max_error": max_error,
        "mean_error": float(np.mean(errors)),
        "passed": max_error <= epsilon,
    }


def cmd_verify(args: argparse.Namespace, config: infra.AppConfig) -> int:
    net = netcodec.load_net(args.net)
    result = verify_net(
        net, args.oracle, args.eps,
        samples=args.samples,
        sampling=args.sampling,
        seed=args.seed,
        r=args.r,
        chunk_size=config.eval_chunk,
    )
    _emit(result, args.out)
    if not result["passed"]:
        raise VerificationFailure(result["max_error"], args.eps)
    return EXIT_SUCCESS


# capacity

def cmd_capacity(args: argparse.Namespace, config: infra.AppConfig) -> int:
    if args.net is not None:
        query = capacity.query_from_net(
            netcodec.load_net(args.net), args.eps, args.c_dim,
        )
    else:
        if None in (args.params, args.depth, args.bound, args.width):
            raise InvalidInputError(
                "give --net or all of --params, --depth, --bound, --width"
            )
        query = capacity.CapacityQuery(
            n=args.params, L=args.depth, R=args.bound, d_max=args.width,
            epsilon=args.eps, c_dim=args.c_dim,
        )

    if args.curve_target is not None:
        curve = capacity.iso_capacity_curve(
            args.curve_target, query, args.depths,
        )
        if args.out is None:
            print(",".join(capacity.IsoPoint._fields))
            for point in curve:
                print("{},{},{!r}".format(point.L, point.n, point.log2_bound))
        else:
            capacity.write_curve_csv(args.out, curve)
        return EXIT_SUCCESS

    _emit({
        "n": query.n,
        "L": query.L,
        "R": query.R,
        "d_max": query.d_max,
        "epsilon": query.epsilon,
        "deep_log2_bound": capacity.deep_log_covering_bound(query),
        "shallow_log2_bound": capacity.shallow_log_covering_bound(
            query.n, query.R, query.epsilon, args.c_shallow,
        ),
    }, args.out)
    return EXIT_SUCCESS


# data and training

def cmd_gen_data(args: argparse.Namespace, config: infra.AppConfig) -> int:
    default_train, default_test = datagen.default_sizes(args.generator)
    n_train = args.n_train if args.n_train is not None else default_train
    n_test = args.n_test if args.n_test is not None else default_test
    ds = datagen.generate(args.generator, n_train + n_test, args.seed,
                          dict(args.param))
    train_ds, test_ds = datagen.split(ds, n_train)
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datagen.write_csv(train_ds, out / "train.csv")
    datagen.write_csv(test_ds, out / "test.csv")
    logger.info("wrote %d/%d rows of %s to %s",
                n_train, n_test, args.generator, out)
    return EXIT_SUCCESS


def _train_config(args: argparse.Namespace, dim: int) -> erm.TrainConfig:
    settings: typing.Dict[str, typing.Any] = {}
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as f:
            settings.update(toml.load(f))
    overrides = {
        "iterations": args.iterations,
        "r0": args.r0,
        "seed": args.seed,
        "batch_size": args.batch_size,
        "m_clip": args.m_clip,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if args.hidden is not None:
        settings["shape"] = [dim] + list(args.hidden) + [1]
    return erm.TrainConfig.from_mapping(settings)


def _batch_size(s: str) -> typing.Union[int, str]:
    if s == "full":
        return s
    try:
        return int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "batch size must be an integer or 'full'"
        ) from None


def cmd_train(args: argparse.Namespace, config: infra.AppConfig) -> int:
    train_ds = datagen.read_csv(args.train_data)
    test_ds = datagen.read_csv(args.test_data)
    cfg = _train_config(args, train_ds.dim)
    report = erm.train(cfg, train_ds, test_ds)
    _emit(report.to_json_obj(), args.out)
    if args.export_net is not None and report.model is not None:
        netcodec.dump_net(erm.mlp_to_relunet(report.model), args.export_net)
    if report.diverged:
        raise DivergenceError("training diverged")
    return EXIT_SUCCESS


def cmd_sweep(args: argparse.Namespace, config: infra.AppConfig) -> int:
    manifest = sweep.load_manifest(sweep.resolve_manifest(args.manifest))
    if args.trials is not None:
        manifest = manifest.with_trials(args.trials)
    if args.output_dir is not None:
        output_dir = args.output_dir
    elif manifest.output_dir is not None:
        output_dir = manifest.output_dir
    else:
        output_dir = str(pathlib.Path(config.output_dir) / manifest.name)
    workers = args.workers if args.workers is not None else config.workers

    results = sweep.run_grid(manifest, workers, output_dir)
    for label, result in results:
        for depth, best in sorted(result.best_per_depth().items()):
            print("{}depth {}: best {} median test mse {!r} "
                  "valid rate {!r}".format(
                      label + " " if label else "", depth,
                      list(best.config.hidden), best.median_test_mse,
                      best.valid_rate,
                  ))
    if all(result.divergence_only for _, result in results):
        raise DivergenceError("every trial of the sweep diverged")
    return EXIT_SUCCESS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reludepth",
        description="Deep ReLU net constructions and depth experiments.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("construct", help="build a network")
    p.add_argument("kind", choices=CONSTRUCT_KINDS)
    p.add_argument("--out", required=True, help="network JSON to write")
    p.add_argument("--report", help="size report JSON (default: stdout)")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--ltilde", type=int, default=2)
    p.add_argument("--arity", type=int, default=2)
    p.add_argument("--target", default="exp_neg_norm2")
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--dim", type=int)
    p.add_argument("--poly", help="polynomial JSON")
    p.add_argument("--composite", help="composite spec JSON")
    p.add_argument("--budget", type=int, help="parameter budget n")
    p.add_argument("--d-prime", type=int)
    p.set_defaults(func=cmd_construct)

    p = subparsers.add_parser("verify", help="compare a net with an oracle")
    p.add_argument("net")
    p.add_argument("--oracle", required=True)
    p.add_argument("--eps", type=float, required=True,
                   help="declared accuracy")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--sampling", choices=("grid", "random"),
                   default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = subparsers.add_parser("capacity", help="covering-number bounds")
    p.add_argument("--net", help="take n, L, R and D_max from a network")
    p.add_argument("--params", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--bound", type=float)
    p.add_argument("--width", type=int)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--c-dim", type=float, default=1.0)
    p.add_argument("--c-shallow", type=float, default=1.0)
    p.add_argument("--curve-target", type=float,
                   help="log2 covering number of the iso-capacity curve")
    p.add_argument("--depths", type=_depth_range, default=range(1, 21))
    p.add_argument("--out")
    p.set_defaults(func=cmd_capacity)

    p = subparsers.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("generator", choices=sorted(datagen.GENERATORS))
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", type=_key_value, action="append", default=[],
                   metavar="KEY=VALUE")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = subparsers.add_parser("train", help="one ERM training run")
    p.add_argument("--train-data", required=True)
    p.add_argument("--test-data", required=True)
    p.add_argument("--config", help="TOML training settings")
    p.add_argument("--hidden", type=_int_list)
    p.add_argument("--iterations", type=int)
    p.add_argument("--r0", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=_batch_size)
    p.add_argument("--m-clip", type=float)
    p.add_argument("--export-net", help="write the trained net as JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = subparsers.add_parser("sweep", help="run an experiment manifest")
    p.add_argument("manifest", help="TOML file or preset name")
    p.add_argument("--workers", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    load_dotenv()
    config = infra.load_config()
    infra.configure_logging(config)

    try:
        return args.func(args, config)
    except Exception as exc:
        code = exit_code_for(exc)
        if code == EXIT_INTERNAL:
            error_id = infra.generate_error_id()
            logger.error("internal error (error_id=%s)", error_id,
                         exc_info=True)
            print("reludepth: internal error, id {}".format(error_id),
                  file=sys.stderr)
        else:
            print("reludepth: {}".format(exc), file=sys.stderr)
        return code
