"""
netsynth command line.

    netsynth make-corpus --output data/sine
    netsynth train --dataset data/sine --model doppelganger --max-batches 2000
    netsynth generate --checkpoint runs/train/checkpoints/final.pt --count 1000 --output data/synth
    netsynth evaluate --real data/sine --synth data/synth --metrics autocorr,w1

Every command writes manifest.json into its run directory. Failures print one
line ``error: <ErrorClass>: <message>`` to stderr and exit with status 1.
"""
import argparse
import json
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import torch

from baselines.registry import create_model, load_model
from config.run_config import EvalSelection, RunConfig
from config.settings import NetSynthSettings
from dataset.corpus import make_sinusoid_corpus
from dataset.preprocess import decode_metadata
from dataset.schema import Dataset, load_dataset, load_metadata_rows, save_dataset, suggest_batch_param
from evaluation.downstream import AbabSplit, ClassificationTask, ForecastTask, evaluate_downstream, split_real
from evaluation.fidelity import MetricResult, run_fidelity_suite
from evaluation.privacy import attack_vs_trainsize, dp_ablation, membership_attack
from evaluation.report import EvalReport
from gan.checkpoint import load_checkpoint, save_checkpoint
from gan.doppelganger import DoppelGANgerModel
from gan.generation import conditional_sample, rejection_sample, retarget_metadata, sample
from utils.exceptions import ContractError, NetSynthError
from utils.figure_capture import FigureCapture
from utils.helpers import dataset_hash, seed_everything
from utils.logger import logger
from utils.reference_data import reference_data
from utils.retry_mechanism import retry_on_exception


def _csv_list(cast: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse(value: str) -> List[Any]:
        try:
            return [cast(item.strip()) for item in value.split(",") if item.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"invalid list '{value}': {e}") from e
    return parse


def _json_value(value: str) -> Any:
    try:
        return json.loads(value)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"invalid JSON '{value}': {e}") from e


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON run config; flags override its values")
    parser.add_argument("--output-dir", type=Path, help="Root of run directories")
    parser.add_argument("--run-name", help="Run directory name (default: <command>_<timestamp>)")
    parser.add_argument("--seed", type=int, help="Run seed (falls back to NETSYNTH_SEED, then 0)")


def _add_training_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", choices=["doppelganger", "ar", "rnn", "hmm", "naive_gan"])
    parser.add_argument("--max-batches", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--batch-param", type=int, help="S, time steps per recurrent pass")
    parser.add_argument("--auto-batch-param", action="store_true", help="Pick S so that at most 50 passes run")
    parser.add_argument("--no-auto-normalization", action="store_true")
    parser.add_argument("--aux-weight", type=float)
    parser.add_argument("--dtype", choices=["float32", "float64"])
    parser.add_argument("--dp-clip-norm", type=float)
    parser.add_argument("--dp-noise-multiplier", type=float)
    parser.add_argument("--checkpoint-every", type=int)
    parser.add_argument("--hmm-states", type=int)
    parser.add_argument("--ar-order", type=int)
    parser.add_argument("--show-progress", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netsynth", description="Metadata-conditioned time-series synthesis")
    commands = parser.add_subparsers(dest="command", required=True)

    corpus = commands.add_parser("make-corpus", help="Write the sinusoid benchmark corpus")
    corpus.add_argument("--output", type=Path, required=True)
    corpus.add_argument("--variant", default="default", help="Corpus preset from the reference values")
    corpus.add_argument("--n-samples", type=int)
    corpus.add_argument("--length", type=int)
    corpus.add_argument("--lengths", type=_csv_list(int), help="Comma-separated lengths to draw from")
    corpus.add_argument("--class-split", type=float)
    corpus.add_argument("--noise-std", type=float)
    corpus.add_argument("--with-timestamps", action="store_true")
    corpus.add_argument("--batch-param", type=int)
    _add_run_options(corpus)

    train_cmd = commands.add_parser("train", help="Fit a generator on a dataset")
    train_cmd.add_argument("--dataset", type=Path)
    _add_training_options(train_cmd)
    _add_run_options(train_cmd)

    generate = commands.add_parser("generate", help="Sample a synthetic dataset from a trained model")
    generate.add_argument("--checkpoint", type=Path, required=True)
    generate.add_argument("--count", type=int, required=True)
    generate.add_argument("--output", type=Path, required=True)
    generate.add_argument("--length", type=int, help="Generate exactly this many steps per sample")
    generate.add_argument("--fixed-metadata", type=_json_value, help="JSON list of metadata values to condition on")
    generate.add_argument(
        "--metadata-file", type=Path, help="CSV of metadata rows to condition on; --count samples per row"
    )
    generate.add_argument("--metadata-row", type=int, help="Condition on this 0-based row of --metadata-file only")
    generate.add_argument("--sample-categorical", action="store_true")
    _add_run_options(generate)

    evaluate = commands.add_parser("evaluate", help="Compare a synthetic dataset with a real one")
    evaluate.add_argument("--real", type=Path, required=True)
    evaluate.add_argument("--synth", type=Path, required=True)
    evaluate.add_argument("--metrics", type=_csv_list(str))
    evaluate.add_argument("--max-lag", type=int)
    evaluate.add_argument("--bins", type=int)
    evaluate.add_argument("--measurement")
    evaluate.add_argument("--metadata-field")
    evaluate.add_argument("--memorization-k", type=int)
    evaluate.add_argument("--downstream", action="store_true", help="Also run train-on-synthetic predictors")
    evaluate.add_argument("--predictors", type=_csv_list(str))
    evaluate.add_argument("--forecast-horizon", type=int, help="Forecast task instead of classification")
    evaluate.add_argument("--no-plots", action="store_true")
    _add_run_options(evaluate)

    attack = commands.add_parser("attack", help="Membership-inference audit")
    attack.add_argument("--checkpoint", type=Path, help="Attack this trained model")
    attack.add_argument("--members", type=Path)
    attack.add_argument("--non-members", type=Path)
    attack.add_argument("--corpus", type=Path, help="Train fresh models per size and attack each")
    attack.add_argument("--sizes", type=_csv_list(int))
    attack.add_argument("--seeds", type=_csv_list(int), default=[0])
    _add_training_options(attack)
    _add_run_options(attack)

    ablation = commands.add_parser("dp-ablation", help="Autocorrelation of DP-trained generators per noise level")
    ablation.add_argument("--dataset", type=Path)
    ablation.add_argument("--sigmas", type=_csv_list(float), required=True)
    ablation.add_argument("--clip-norm", type=float, default=1.0)
    ablation.add_argument("--max-lag", type=int, default=28)
    _add_training_options(ablation)
    _add_run_options(ablation)

    retarget = commands.add_parser("retarget", help="Retrain only the metadata generator")
    retarget.add_argument("--checkpoint", type=Path, required=True)
    retarget.add_argument("--target", type=Path, help="Dataset whose metadata is the new target")
    retarget.add_argument(
        "--target-probs", type=_json_value, help='Categorical target, e.g. {"class": {"A": 0.2, "B": 0.8}}'
    )
    retarget.add_argument("--rejection", action="store_true", help="Rejection-sample instead of retraining")
    retarget.add_argument("--count", type=int, default=1000, help="Samples written with --rejection")
    retarget.add_argument("--n-target", type=int, default=10000)
    retarget.add_argument("--max-batches", type=int)
    _add_run_options(retarget)
    return parser


class RunContext:
    """Resolved config, seed and artifact paths of one command invocation"""

    def __init__(self, command: str, args: argparse.Namespace, overrides: Optional[Dict[str, Any]] = None):
        base = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
        config = base.merged(overrides or {})
        if args.output_dir is not None:
            config = config.merged({"output_dir": str(args.output_dir)})
        seed = NetSynthSettings.resolve_seed(args.seed if args.seed is not None else config.seed)
        self.config = config.merged({"seed": seed, "train": {"seed": seed}})
        self.seed = seed
        self.command = command
        run_name = args.run_name or f"{command.replace('-', '_')}_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
        self.paths = NetSynthSettings.get_output_paths(run_name, str(self.config.output_dir))
        self.paths["root"].mkdir(parents=True, exist_ok=True)
        self.inputs: Dict[str, str] = {}
        seed_everything(seed)
        logger.log_run_start(command, seed)

    def record_input(self, name: str, path: Path) -> None:
        path = Path(path)
        self.inputs[name] = dataset_hash(path)

    @retry_on_exception()
    def write_manifest(self, argv: Sequence[str], outputs: Dict[str, Any]) -> Path:
        manifest = {
            "command": self.command,
            "argv": list(argv),
            "created": datetime.now().isoformat(timespec="seconds"),
            "version": NetSynthSettings.VERSION,
            "environment": NetSynthSettings.ENVIRONMENT,
            "seed": self.seed,
            "num_threads": NetSynthSettings.NUM_THREADS,
            "torch_version": torch.__version__,
            "config": self.config.snapshot(),
            "input_hashes": self.inputs,
            "outputs": {k: str(v) for k, v in outputs.items()},
        }
        path = self.paths["manifest"]
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(manifest, handle, indent=2, ensure_ascii=False)
        logger.log_artifact("manifest", str(path))
        return path


def _training_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    dp = None
    if args.dp_clip_norm is not None or args.dp_noise_multiplier is not None:
        dp = {"clip_norm": args.dp_clip_norm, "noise_multiplier": args.dp_noise_multiplier}
    return {
        "model": args.model,
        "hmm_states": args.hmm_states,
        "ar_order": args.ar_order,
        "network": {
            "batch_size": args.batch_size,
            "batch_param": args.batch_param,
            "aux_weight": args.aux_weight,
            "dtype": args.dtype,
            "auto_normalization": False if args.no_auto_normalization else None,
        },
        "train": {
            "max_batches": args.max_batches,
            "epochs": args.epochs,
            "checkpoint_every": args.checkpoint_every,
            "show_progress": True if args.show_progress else None,
            "dp": dp,
        },
    }


def _load_training_data(ctx: RunContext, args: argparse.Namespace, path: Optional[Path]) -> Dataset:
    path = path or ctx.config.dataset
    if path is None:
        raise ContractError("no dataset given (use --dataset or set 'dataset' in the config)")
    ds = load_dataset(path)
    ctx.record_input("dataset", Path(path))
    if getattr(args, "auto_batch_param", False):
        suggested = suggest_batch_param(ds.schema.max_length)
        logger.info(f"Using suggested batch parameter S={suggested}")
        ctx.config = ctx.config.merged({"network": {"batch_param": suggested}})
    return ds


def cmd_make_corpus(args: argparse.Namespace, argv: Sequence[str]) -> int:
    ctx = RunContext("make-corpus", args)
    if args.variant not in reference_data.corpus_variants:
        raise ContractError(f"unknown corpus variant '{args.variant}'")
    params = reference_data.get_corpus(args.variant)
    overrides = {
        "n_samples": args.n_samples,
        "length": args.length,
        "lengths": args.lengths,
        "class_split": args.class_split,
        "noise_std": args.noise_std,
    }
    params.update({k: v for k, v in overrides.items() if v is not None})
    ds = make_sinusoid_corpus(
        n_samples=params["n_samples"],
        length=params["length"],
        period=params["period"],
        amplitude=params["amplitude"],
        offsets=params["offsets"],
        noise_std=params["noise_std"],
        class_split=params["class_split"],
        lengths=params.get("lengths"),
        with_timestamps=args.with_timestamps,
        batch_param=args.batch_param,
        seed=ctx.seed,
    )
    save_dataset(ds, args.output)
    ctx.write_manifest(argv, {"dataset": args.output})
    return 0


def cmd_train(args: argparse.Namespace, argv: Sequence[str]) -> int:
    overrides = _training_overrides(args)
    overrides["dataset"] = str(args.dataset) if args.dataset else None
    ctx = RunContext("train", args, overrides)
    ds = _load_training_data(ctx, args, args.dataset)
    model = create_model(ctx.config, checkpoint_dir=ctx.paths["checkpoints"])
    model.fit(ds)
    outputs: Dict[str, Any] = {}
    if isinstance(model, DoppelGANgerModel):
        outputs["checkpoint"] = ctx.paths["checkpoints"] / "final.pt"
        outputs["train_log"] = model.train_log.to_csv(ctx.paths["train_log"])
    else:
        outputs["checkpoint"] = model.save(ctx.paths["checkpoints"] / f"{model.name}.pkl")
    ctx.write_manifest(argv, outputs)
    print(outputs["checkpoint"])
    return 0


def _conditioning_rows(args: argparse.Namespace, bundle) -> Optional[List[tuple]]:
    """Metadata rows from --fixed-metadata or --metadata-file, or None for unconditional sampling"""
    if args.metadata_row is not None and args.metadata_file is None:
        raise ContractError("--metadata-row needs --metadata-file")
    if args.metadata_file is None:
        return None if args.fixed_metadata is None else [tuple(args.fixed_metadata)]
    if args.fixed_metadata is not None:
        raise ContractError("--fixed-metadata and --metadata-file are mutually exclusive")
    rows = load_metadata_rows(args.metadata_file, bundle.layout.schema)
    if args.metadata_row is None:
        return rows
    if not 0 <= args.metadata_row < len(rows):
        raise ContractError(f"--metadata-row {args.metadata_row} outside the {len(rows)} rows of {args.metadata_file}")
    return [rows[args.metadata_row]]


def cmd_generate(args: argparse.Namespace, argv: Sequence[str]) -> int:
    ctx = RunContext("generate", args)
    model = load_model(args.checkpoint)
    ctx.record_input("checkpoint", args.checkpoint)
    if isinstance(model, DoppelGANgerModel):
        rows = _conditioning_rows(args, model.bundle)
        if args.metadata_file is not None:
            ctx.record_input("metadata_file", args.metadata_file)
        if rows is None:
            ds = sample(
                model.bundle, args.count, length_override=args.length, seed=ctx.seed,
                sample_categorical=args.sample_categorical,
            )
        else:
            parts = [
                conditional_sample(
                    model.bundle, row, args.count, seed=ctx.seed + index,
                    length_override=args.length, sample_categorical=args.sample_categorical,
                )
                for index, row in enumerate(rows)
            ]
            ds = Dataset(parts[0].schema, [s for part in parts for s in part.samples])
    else:
        if args.fixed_metadata is not None or args.metadata_file is not None or args.length is not None:
            raise ContractError(f"{model.name} supports neither conditioning nor --length")
        ds = model.sample(args.count, seed=ctx.seed)
    save_dataset(ds, args.output)
    ctx.write_manifest(argv, {"dataset": args.output})
    return 0


def cmd_evaluate(args: argparse.Namespace, argv: Sequence[str]) -> int:
    overrides = {
        "eval": {
            "metrics": args.metrics,
            "max_lag": args.max_lag,
            "bins": args.bins,
            "measurement": args.measurement,
            "metadata_field": args.metadata_field,
            "memorization_k": args.memorization_k,
            "downstream": True if args.downstream else None,
            "predictors": args.predictors,
        }
    }
    ctx = RunContext("evaluate", args, overrides)
    real, synth = load_dataset(args.real), load_dataset(args.synth)
    ctx.record_input("real", args.real)
    ctx.record_input("synth", args.synth)
    selection: EvalSelection = ctx.config.eval

    report = EvalReport(command="evaluate", metadata={"real": str(args.real), "synth": str(args.synth)})
    report.metrics.extend(run_fidelity_suite(real, synth, selection))
    if selection.downstream:
        a, a_prime = split_real(real, ctx.seed)
        b, b_prime = split_real(synth, ctx.seed)
        if args.forecast_horizon:
            task = ForecastTask(horizon=args.forecast_horizon, dim=selection.measurement or 0)
        else:
            field = selection.metadata_field or real.schema.metadata_names[0]
            task = ClassificationTask(field=field)
        split = AbabSplit(a=a, a_prime=a_prime, b=b, b_prime=b_prime)
        result = evaluate_downstream(split, task, selection.predictors, seed=ctx.seed)
        report.tables["downstream"] = result.to_dict()
    if not args.no_plots:
        report.capture_plots(FigureCapture(str(ctx.paths["plots"])))
    report.save_json(ctx.paths["report"])
    report.save_html(ctx.paths["report"].with_suffix(".html"))
    ctx.write_manifest(argv, {"report": ctx.paths["report"]})
    for metric in report.metrics:
        if metric.scalar is not None:
            print(f"{metric.name}\t{metric.scalar:.6g}")
    return 0


def cmd_attack(args: argparse.Namespace, argv: Sequence[str]) -> int:
    ctx = RunContext("attack", args, _training_overrides(args))
    report = EvalReport(command="attack")
    if args.corpus is not None:
        if not args.sizes:
            raise ContractError("--corpus needs --sizes")
        corpus = load_dataset(args.corpus)
        ctx.record_input("corpus", args.corpus)
        curve = attack_vs_trainsize(corpus, args.sizes, ctx.config.network, ctx.config.train, seeds=args.seeds)
        report.metrics.append(curve.to_metric())
        report.metadata["reference_success"] = {
            "large_training_set": reference_data.get_published("membership_success_large_train"),
            "small_training_set": reference_data.get_published("membership_success_small_train"),
        }
    else:
        if args.checkpoint is None or args.members is None or args.non_members is None:
            raise ContractError("attack needs --checkpoint, --members and --non-members (or --corpus and --sizes)")
        bundle = load_checkpoint(args.checkpoint)
        members, non_members = load_dataset(args.members), load_dataset(args.non_members)
        ctx.record_input("members", args.members)
        ctx.record_input("non_members", args.non_members)
        success = membership_attack(bundle, members, non_members)
        report.metrics.append(MetricResult(name="membership_attack", scalar=success))
        print(f"membership_attack\t{success:.6g}")
    report.capture_plots(FigureCapture(str(ctx.paths["plots"])))
    report.save_json(ctx.paths["report"])
    ctx.write_manifest(argv, {"report": ctx.paths["report"]})
    return 0


def cmd_dp_ablation(args: argparse.Namespace, argv: Sequence[str]) -> int:
    overrides = _training_overrides(args)
    overrides["dataset"] = str(args.dataset) if args.dataset else None
    ctx = RunContext("dp-ablation", args, overrides)
    corpus = _load_training_data(ctx, args, args.dataset)
    result = dp_ablation(
        corpus, args.sigmas, ctx.config.network, ctx.config.train, clip_norm=args.clip_norm, max_lag=args.max_lag
    )
    report = EvalReport(command="dp-ablation", metrics=result.to_metrics(), metadata=result.settings)
    curves = {"real": result.real_curve, **{f"sigma={s:g}": c for s, c in result.curves.items()}}
    report.plots.append(FigureCapture(str(ctx.paths["plots"])).capture_curves("dp_autocorrelation", curves))
    report.save_json(ctx.paths["report"])
    ctx.write_manifest(argv, {"report": ctx.paths["report"]})
    return 0


def _probability_rows(bundle, target_probs: Dict[str, Dict[str, float]], n: int, seed: int) -> List[tuple]:
    """Metadata rows drawn from the bundle with the given categorical fields redrawn from target_probs"""
    layout = bundle.layout
    generator = torch.Generator().manual_seed(seed)
    bundle.train(False)
    with torch.no_grad():
        encoded = bundle.gen_metadata(bundle.noise(n, bundle.config.noise_dim, generator=generator))
    rows = [list(row) for row in decode_metadata(layout, encoded.double().numpy())]
    rng = np.random.default_rng(seed)
    for field, probs in target_probs.items():
        position = layout.schema.metadata_names.index(layout.schema.metadata_field(field).name)
        categories = list(probs)
        weights = np.asarray([probs[c] for c in categories], dtype=np.float64)
        draws = rng.choice(len(categories), size=n, p=weights / weights.sum())
        for row, pick in zip(rows, draws):
            row[position] = categories[pick]
    return [tuple(row) for row in rows]


def cmd_retarget(args: argparse.Namespace, argv: Sequence[str]) -> int:
    ctx = RunContext("retarget", args, {"train": {"max_batches": args.max_batches}})
    bundle = load_checkpoint(args.checkpoint)
    ctx.record_input("checkpoint", args.checkpoint)
    if (args.target is None) == (args.target_probs is None):
        raise ContractError("retarget needs exactly one of --target and --target-probs")

    if args.rejection:
        if args.target_probs is None or len(args.target_probs) != 1:
            raise ContractError("--rejection needs --target-probs with a single field")
        field, probs = next(iter(args.target_probs.items()))
        ds, rate = rejection_sample(bundle, args.count, field, probs, seed=ctx.seed)
        output = ctx.paths["root"] / "dataset"
        save_dataset(ds, output)
        logger.info(f"Rejection sampling acceptance rate {rate:.3f}")
        ctx.write_manifest(argv, {"dataset": output, "acceptance_rate": rate})
        return 0

    if args.target is not None:
        target = load_dataset(args.target)
        ctx.record_input("target", args.target)
    else:
        target = _probability_rows(bundle, args.target_probs, args.n_target, ctx.seed)
    retargeted = retarget_metadata(bundle, target, ctx.config.train, n_target=args.n_target)
    checkpoint = save_checkpoint(retargeted, ctx.paths["checkpoints"] / "retargeted.pt")
    ctx.write_manifest(argv, {"checkpoint": checkpoint})
    print(checkpoint)
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, Sequence[str]], int]] = {
    "make-corpus": cmd_make_corpus,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "attack": cmd_attack,
    "dp-ablation": cmd_dp_ablation,
    "retarget": cmd_retarget,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        status = COMMANDS[args.command](args, argv)
        logger.log_run_end(args.command, "success")
        return status
    except (NetSynthError, OSError) as e:
        logger.log_run_end(args.command, "failed")
        message = " ".join(str(e).splitlines())
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
