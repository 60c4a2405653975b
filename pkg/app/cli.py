"""Batch command-line interface

    python -m app.cli gen-dataset --spec fixtures/scenarios/extra_paths.json --count 20000 --out data/extra.chm
    python -m app.cli train --dataset data/extra.chm --out models/extra.ckp
    python -m app.cli sample --model models/extra.ckp --count 3000 --out data/generated.chm

Every subcommand writes ``<output>.manifest.json`` next to its main output.
Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
On failure every file the command had started writing is removed.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from app import __version__
from app.config import get_settings
from app.core.errors import InvalidInputError, ToolkitError
from app.models.schemas import (
    CompressorConfig,
    GenerativeMode,
    MetricName,
    PathParams,
    RunManifest,
    ScenarioSpec,
    SweepKind,
    SweepRow,
    VaeConfig,
)
from app.services import compressor, experiments, genmodel, landscape, metrics
from app.services.datasets import generate_dataset, load_scenario, read_dataset, sidecar_path, split, write_dataset
from app.utils.artifacts import cleanup_on_failure, read_checkpoint, write_checkpoint, write_manifest
from app.utils.logger import configure_logging, get_logger

logger = get_logger(__name__)

# (config, seed, inputs) recorded in the manifest
RunInfo = Tuple[Dict[str, Any], Optional[int], Dict[str, str]]
Handler = Callable[[argparse.Namespace, List[Path]], RunInfo]


# Argument helpers
def _int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def _float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def _named_paths(value: str) -> Dict[str, str]:
    named = {}
    for item in value.split(","):
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise argparse.ArgumentTypeError(f"expected name=path pairs, got {item!r}")
        named[name.strip()] = path.strip()
    return named


def _output(path: str) -> Path:
    """Relative outputs land under Settings.output_dir"""
    out = Path(path)
    if not out.is_absolute():
        out = Path(get_settings().output_dir) / out
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _with_suffix(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _write_json(data: Any, path: Path, outputs: List[Path]) -> None:
    outputs.append(path)
    path.write_text(json.dumps(data, indent=2))


def _write_csv(header: Sequence[str], rows: Sequence[Sequence[Any]], path: Path, outputs: List[Path]) -> None:
    outputs.append(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _format_validation_error(e: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in err['loc']) or 'value'}: {err['msg']}" for err in e.errors()
    )


def _add_vae_arguments(parser: argparse.ArgumentParser) -> None:
    defaults = VaeConfig()
    parser.add_argument("--mode", choices=[m.value for m in GenerativeMode], default=defaults.mode.value)
    parser.add_argument("--resolution", type=int, default=defaults.resolution)
    parser.add_argument("--theta-min", type=float, default=defaults.theta_min)
    parser.add_argument("--theta-max", type=float, default=defaults.theta_max)
    parser.add_argument("--complex-gains", action="store_true")
    parser.add_argument("--latent", type=int, default=defaults.latent_dim)
    parser.add_argument("--hidden", type=_int_list, default=defaults.hidden)
    parser.add_argument("--epochs", type=int, default=defaults.epochs)
    parser.add_argument("--batch", type=int, default=defaults.batch_size)
    parser.add_argument("--lr", type=float, default=defaults.learning_rate)
    parser.add_argument("--alpha-d", type=float, default=defaults.alpha_d)
    parser.add_argument("--alpha-s", type=float, default=defaults.alpha_s)
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--log-every", type=int, default=defaults.log_every)
    parser.add_argument("--progress", action="store_true", help="show a progress bar while training")


def _vae_config(args: argparse.Namespace) -> VaeConfig:
    return VaeConfig(
        mode=args.mode,
        latent_dim=args.latent,
        hidden=args.hidden,
        alpha_d=args.alpha_d,
        alpha_s=args.alpha_s,
        resolution=args.resolution,
        theta_min=args.theta_min,
        theta_max=args.theta_max,
        complex_gains=args.complex_gains,
        paths=args.paths,
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        log_every=args.log_every,
    )


# Subcommands
def cmd_gen_dataset(args: argparse.Namespace, outputs: List[Path]) -> RunInfo:
    spec = load_scenario(args.spec)
    if args.seed is not None:
        spec = ScenarioSpec.model_validate({**spec.model_dump(), "seed": args.seed})
    out = _output(args.out)
    dataset = generate_dataset(spec, args.count)
    outputs.extend([out, sidecar_path(out)])
    write_dataset(dataset, out)
    return {"spec": spec.model_dump(), "count": args.count}, spec.seed, {"spec": str(args.spec)}


def cmd_train(args: argparse.Namespace, outputs: List[Path]) -> RunInfo:
    config = _vae_config(args)
    dataset = read_dataset(args.dataset)
    out = _output(args.out)
    ckpt = genmodel.train(dataset, config, progress=args.progress)
    outputs.append(out)
    write_checkpoint(ckpt, out)
    _write_csv(["epoch", "loss"], [[i + 1, v] for i, v in enumerate(ckpt.history)], _with_suffix(out, ".loss.csv"), outputs)
    return config.model_dump(mode="json"), config.seed, {"dataset": str(args.dataset)}


def cmd_sample(args: argparse.Namespace, outputs: List[Path]) -> RunInfo:
    ckpt = read_checkpoint(args.model, kind=genmodel.CHECKPOINT_KIND)
    out = _output(args.out)
    sampled = genmodel.sample_channels(ckpt, args.count, args.seed)
    outputs.append(out)
    if sampled.dataset.params is not None:
        outputs.append(sidecar_path(out))
    write_dataset(sampled.dataset, out)
    return {"count": args.count, "model": ckpt.config}, args.seed, {"model": str(args.model)}


def cmd_extract_params(args: argparse.Namespace, outputs: List[Path]) -> RunInfo:
    ckpt = read_checkpoint(args.model, kind=genmodel.CHECKPOINT_KIND)
    out = _output(args.out)
    extracted = genmodel.extract_from_checkpoint(ckpt, args.count, args.seed, args.threshold)
    inputs = {"model": str(args.model)}
    if args.spec:
        spec = load_scenario(args.spec)
        recovery = genmodel.evaluate_recovery(extracted, spec)
        logger.info(f"{recovery:.1%} of dominant extracted paths fall inside the true angle ranges")
        inputs["spec"] = str(args.spec)
    records = [[p.model_dump() for p in sample] for sample in extracted]
    _write_json(records, out, outputs)
    config = {"count": args.count, "threshold": args.threshold, "model": ckpt.config}
    return config, args.seed, inputs


def cmd_metrics(args: argparse.Namespace, outputs: List[Path]) -> RunInfo:
    a = read_dataset(args.a)
    b = a if args.b == args.a else read_dataset(args.b)
    names = list(MetricName) if args.metric == "all" else [MetricName(args.metric)]
    results = metrics.compare(a, b, names)
    payload = [r.model_dump(mode="json") for r in results]
    _write_json(payload if args.metric == "all" else payload[0], _output(args.out), outputs)
    return {"metric": args.metric}, None, {"a": str(args.a), "b": str(args.b)}


def cmd_landscape(args: argparse.Namespace, outputs: List[Path]) -> RunInfo:
    reference_angles = args.theta_ref if len(args.theta_ref) == 2 else args.theta_ref * 2
    if len(reference_angles) != 2 or len(args.range) != 2:
        raise InvalidInputError("--theta-ref takes one or two angles and --range takes two bounds")
    reference = PathParams(gain=args.gain, theta_a=reference_angles[0], theta_d=reference_angles[1])
    out = _output(args.out)

    summaries = []
    for surface, summary in landscape.antenna_sweep(args.antennas, reference, args.grid, tuple(args.range), args.bins):
        rows = [
            [a, d, surface.values[i, j]]
            for i, a in enumerate(surface.theta_a_axis)
            for j, d in enumerate(surface.theta_d_axis)
        ]
        _write_csv(["theta_a", "theta_d", "loss"], rows, _with_suffix(out, f".n{summary.antennas}.csv"), outputs)
        summaries.append(summary.model_dump())
    _write_json(summaries, out, outputs)
    outputs.insert(0, outputs.pop())
    config = {"antennas": args.antennas, "grid": args.grid, "reference": reference.model_dump(), "range": args.range}
    return config, None, {}


def cmd_compress_eval(args: argparse.Namespace, outputs: List[Path]) -> RunInfo:
    config = CompressorConfig(
        code_dim=args.code_dim,
        hidden=args.hidden,
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
    )
    train_sets = {name: read_dataset(path) for name, path in args.train.items()}
    test_sets = {name: read_dataset(path) for name, path in args.test.items()}
    table = compressor.cross_eval(train_sets, test_sets, config)

    out = _output(args.out)
    _write_json(table.model_dump(), out, outputs)
    rows = [[train, *values] for train, values in zip(table.train_names, table.nmse)]
    _write_csv(["train\\test", *table.test_names], rows, _with_suffix(out, ".csv"), outputs)
    inputs = {f"train.{k}": v for k, v in args.train.items()}
    inputs.update({f"test.{k}": v for k, v in args.test.items()})
    return config.model_dump(), config.seed, inputs


def cmd_sweep(args: argparse.Namespace, outputs: List[Path]) -> RunInfo:
    config = _vae_config(args)
    kind = SweepKind(args.kind)
    inputs: Dict[str, str] = {}
    if kind == SweepKind.DATASET_SIZE:
        if not args.dataset:
            raise InvalidInputError("the size sweep needs --dataset")
        train, test = split(read_dataset(args.dataset), experiments.TRAIN_FRACTION, seed=args.seed)
        rows = experiments.dataset_size_sweep(train, test, config, args.fractions, args.samples)
        inputs["dataset"] = str(args.dataset)
    else:
        if not args.spec:
            raise InvalidInputError(f"the {kind.value} sweep needs --spec")
        spec = load_scenario(args.spec)
        inputs["spec"] = str(args.spec)
        if kind == SweepKind.RESOLUTION:
            rows = experiments.resolution_sweep(spec, args.resolutions, args.antennas, args.count, config, args.samples)
        else:
            rows = experiments.path_count_sweep(spec, args.path_counts, args.count, config, args.samples, args.threshold)

    out = _output(args.out)
    _write_json([r.model_dump(mode="json") for r in rows], out, outputs)
    fields = list(SweepRow.model_fields)
    _write_csv(fields, [[r.model_dump(mode="json")[f] for f in fields] for r in rows], _with_suffix(out, ".csv"), outputs)
    return {"kind": kind.value, "vae": config.model_dump(mode="json")}, config.seed, inputs


COMMANDS: Dict[str, Handler] = {
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "sample": cmd_sample,
    "extract-params": cmd_extract_params,
    "metrics": cmd_metrics,
    "landscape": cmd_landscape,
    "compress-eval": cmd_compress_eval,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chanvae", description="Generative mmWave MIMO channel toolkit")
    parser.add_argument("--log-level", default=None, help="overrides CHANVAE_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="sample a synthetic channel dataset from a scenario file")
    p.add_argument("--spec", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a generative model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_vae_arguments(p)

    p = sub.add_parser("sample", help="generate channels from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract-params", help="recover path parameters from generated channels")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=genmodel.DEFAULT_THRESHOLD)
    p.add_argument("--spec", default=None, help="scenario to score the recovered angles against")
    p.add_argument("--out", required=True)

    p = sub.add_parser("metrics", help="compare two channel datasets")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", choices=[m.value for m in MetricName] + ["all"], default="all")
    p.add_argument("--out", required=True)

    p = sub.add_parser("landscape", help="single-path loss surfaces for several array sizes")
    p.add_argument("--antennas", type=_int_list, default=[4, 16, 64])
    p.add_argument("--grid", type=int, default=landscape.DEFAULT_GRID)
    p.add_argument("--theta-ref", type=_float_list, default=[1.0])
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--range", type=_float_list, default=list(landscape.DEFAULT_RANGE))
    p.add_argument("--bins", type=int, default=landscape.DEFAULT_BINS)
    p.add_argument("--out", required=True)

    defaults = CompressorConfig()
    p = sub.add_parser("compress-eval", help="cross-evaluate channel compressors")
    p.add_argument("--train", type=_named_paths, required=True)
    p.add_argument("--test", type=_named_paths, required=True)
    p.add_argument("--code-dim", type=int, default=defaults.code_dim)
    p.add_argument("--hidden", type=_int_list, default=defaults.hidden)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--batch", type=int, default=defaults.batch_size)
    p.add_argument("--lr", type=float, default=defaults.learning_rate)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="dataset-size, resolution or path-count sweep")
    p.add_argument("--kind", choices=[k.value for k in SweepKind], required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--spec", default=None)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--fractions", type=_float_list, default=[0.1, 0.25, 0.5, 1.0])
    p.add_argument("--resolutions", type=_int_list, default=[16, 32, 64])
    p.add_argument("--antennas", type=_int_list, default=[16])
    p.add_argument("--path-counts", type=_int_list, default=[1, 2, 3])
    p.add_argument("--samples", type=int, default=None, help="generated channels per evaluation")
    p.add_argument("--threshold", type=float, default=genmodel.DEFAULT_THRESHOLD)
    p.add_argument("--out", required=True)
    _add_vae_arguments(p)

    return parser


def run(args: argparse.Namespace) -> int:
    """Run one parsed subcommand and return its exit code"""
    handler = COMMANDS[args.command]
    start = time.perf_counter()
    outputs: List[Path] = []
    try:
        with cleanup_on_failure(outputs):
            config, seed, inputs = handler(args, outputs)
            manifest = RunManifest(
                command=args.command,
                config=config,
                seed=seed,
                inputs=inputs,
                outputs=[str(p) for p in outputs],
                version=__version__,
                duration_seconds=time.perf_counter() - start,
            )
            target = outputs[0]
            outputs.append(write_manifest(manifest, target))
    except ValidationError as e:
        logger.error(f"{args.command} failed: {_format_validation_error(e)}")
        return InvalidInputError.exit_code
    except ToolkitError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return 4

    logger.info(f"{args.command} wrote {', '.join(str(p) for p in outputs)}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
