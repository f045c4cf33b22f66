"""
Command-line entry point: ``sasv-fuse <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__, state
from .backends import ModelKind
from .config import (
    load_audio_config,
    load_pipeline_config,
    load_score_fusion_config,
    load_synthetic_config,
    save_config,
)
from .display import (
    det_chart,
    render_table,
    results_table,
    save_chart,
    summary_frame,
)
from .embstore import load_store, save_store
from .errors import SasvFuseError, SilentInputError, UsageError
from .metrics import (
    METRICS,
    NEGATIVES,
    EerReport,
    available_metrics,
    det_points,
    sasv_metrics,
)
from .pipeline import (
    compare_backends,
    read_scores,
    run_embedding_fusion,
    run_score_fusion,
)
from .protocol import TrialLabel, save_trials
from .synthetic import gen_synthetic
from .utils import sha256_file
from .vad import augment_codec, load_wav, save_wav, trim_silence

logger = logging.getLogger(__name__)

PROG = "sasv-fuse"
LOG_FORMAT = "sasv-fuse: %(levelname)s: %(message)s"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> Any:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(parser: argparse.ArgumentParser, config_help: str) -> None:
    parser.add_argument("--config", type=Path, default=None, help=config_help)
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="random seed; overrides the config's seed (config default 0)",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker cap; falls back to SASV_FUSE_THREADS, then the CPU count",
    )
    parser.add_argument(
        "--out-dir",
        type=Path,
        default=None,
        help="output directory; overrides the config's output_dir",
    )
    parser.add_argument(
        "--verbose", action="store_true", help="log progress at INFO level"
    )


def _run_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["backend"] = {"seed": args.seed}
    if args.out_dir is not None:
        overrides["output_dir"] = str(args.out_dir.resolve())
    return overrides


def _require_config(args: argparse.Namespace) -> Path:
    if args.config is None:
        raise UsageError(f"'{args.command}' needs --config")
    config: Path = args.config
    return config


def _out_path(args: argparse.Namespace, path: Path) -> Path:
    # relative output paths land in --out-dir
    base: Path = args.out_dir if args.out_dir is not None else Path(".")
    return path if path.is_absolute() else base / path


def _verbose(enabled: bool) -> None:
    if enabled:
        logging.getLogger().setLevel(logging.INFO)


def _parse_kinds(spec: str) -> List[ModelKind]:
    if spec == "all":
        return list(ModelKind)
    kinds = []
    for token in spec.split(","):
        try:
            kinds.append(ModelKind(token.strip()))
        except ValueError:
            raise UsageError(
                f"unknown backend '{token}' "
                f"(choose from {', '.join(k.value for k in ModelKind)} or 'all')"
            ) from None
    return kinds


# commands


def cmd_train_fusion(args: argparse.Namespace) -> int:
    cfg = load_pipeline_config(_require_config(args), _run_overrides(args))
    _verbose(cfg.logs.verbose)
    if args.backends is None:
        result = run_embedding_fusion(cfg, args.threads)
        table = results_table({cfg.backend.kind.value: result.reports})
    else:
        _, table = compare_backends(cfg, _parse_kinds(args.backends), args.threads)
    print(render_table(table))
    return 0


def cmd_fuse_scores(args: argparse.Namespace) -> int:
    cfg = load_score_fusion_config(_require_config(args), _run_overrides(args))
    _verbose(cfg.logs.verbose)
    result = run_score_fusion(cfg, args.threads)
    name = cfg.method if cfg.method == "sum" else cfg.backend.kind.value
    print(render_table(results_table({name: result.reports})))
    return 0


def _requested_metrics(spec: str, available: Sequence[str]) -> List[str]:
    if spec == "auto":
        return list(available)
    metrics = [m.strip() for m in spec.split(",")]
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise UsageError(f"unknown metric(s): {', '.join(unknown)}")
    return metrics


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.json is not None and len(args.scores) != 1:
        raise UsageError("--json needs exactly one --scores file")
    rows: Dict[str, Dict[str, EerReport]] = {}
    curves: Dict[str, Any] = {}
    for path in args.scores:
        scores = read_scores(path)
        requested = _requested_metrics(args.metrics, available_metrics(scores))
        report = sasv_metrics(scores, requested, args.pooling)
        report.seed = args.seed
        rows[path.name] = {"scores": report}
        if not curves:
            for metric in requested:
                curves[metric] = det_points(
                    scores.scores_for(TrialLabel.TARGET),
                    scores.scores_for(*NEGATIVES[metric]),
                )
    print(render_table(results_table(rows, partitions=("scores",))))
    if args.json is not None:
        target = _out_path(args, args.json)
        target.parent.mkdir(parents=True, exist_ok=True)
        (report,) = (r["scores"] for r in rows.values())
        target.write_text(report.to_json(), encoding="utf-8", newline="\n")
    if args.det_plot is not None:
        target = _out_path(args, args.det_plot)
        target.parent.mkdir(parents=True, exist_ok=True)
        save_chart(det_chart(curves), target)
    return 0


def cmd_gen_synth(args: argparse.Namespace) -> int:
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides["synthetic"] = {"seed": args.seed}
    cfg = load_synthetic_config(args.config, overrides)
    _verbose(cfg.logs.verbose)
    spec = cfg.synthetic
    out_dir: Path = args.out_dir if args.out_dir is not None else Path("synth")
    out_dir.mkdir(parents=True, exist_ok=True)

    data = gen_synthetic(spec)
    stores = {}
    for name, store in data.stores.items():
        save_store(store, out_dir / f"{name}.emb")
        stores[name] = f"{name}.emb"
    for partition, trials in data.trials.items():
        save_trials(trials, out_dir / f"{partition}.trials")
    save_config(
        {
            "seed": spec.seed,
            "output_dir": "run",
            "feature_spec": spec.feature_spec().model_dump(mode="json"),
            "backend": {"kind": args.backend},
            "stores": stores,
            "train_trials": "train.trials",
            "dev_trials": "dev.trials",
            "eval_trials": "eval.trials",
        },
        out_dir / "pipeline.json",
    )
    print(
        f"wrote {len(data.stores)} stores and "
        f"{sum(len(t) for t in data.trials.values())} trials to {out_dir}"
    )
    return 0


def cmd_vad_trim(args: argparse.Namespace) -> int:
    overrides: Dict[str, Any] = {}
    if args.out_dir is not None:
        overrides["output_dir"] = str(args.out_dir.resolve())
    cfg = load_audio_config(args.config, overrides)
    _verbose(cfg.logs.verbose)
    out_dir = Path(cfg.output_dir)
    source: Path = args.input
    if args.codec is not None:
        source = augment_codec(source, args.codec, args.bitrate, cfg.codec, out_dir)
    result = trim_silence(load_wav(source), cfg.vad)
    if result.all_silent:
        raise SilentInputError(f"{args.input}: every frame is below the threshold")
    output: Path = args.output or Path(f"{args.input.stem}.trimmed.wav")
    target = output if output.is_absolute() else out_dir / output
    target.parent.mkdir(parents=True, exist_ok=True)
    save_wav(result.waveform, target, args.subtype)
    manifest_path = target.with_name(f"{target.stem}.manifest.json")
    state.write_manifest(
        manifest_path,
        {
            "experiment": "vad_trim",
            "input": str(args.input),
            "input_sha256": sha256_file(args.input),
            "output": str(target),
            "output_sha256": sha256_file(target),
            "codec": args.codec,
            "bitrate": args.bitrate if args.codec is not None else None,
            "vad": cfg.vad.model_dump(mode="json"),
            "kept_frames": result.kept_frames,
            "total_frames": result.total_frames,
        },
    )
    print(
        f"{target}: kept {result.kept_frames}/{result.total_frames} frames, "
        f"{result.waveform.duration:.3f} s"
    )
    return 0


def cmd_inspect_store(args: argparse.Namespace) -> int:
    store = load_store(args.store)
    print(f"source: {store.source_name}")
    print(f"dim: {store.dim}")
    print(f"embeddings: {len(store)}")
    if len(store):
        norms = np.linalg.norm(store.matrix(), axis=1)
        print(render_summary(summary_frame({"l2_norm": norms.tolist()})))
        for utt_id in store.ids()[: args.head]:
            print(f"  {utt_id}")
    return 0


def render_summary(df: Any) -> str:
    text: str = df.to_string(float_format=lambda v: f"{v:.4f}")
    return text


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(
        prog=PROG,
        description="Fusion back-ends for spoofing-aware speaker verification.",
        formatter_class=fmt,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    commands: Dict[str, Callable[[argparse.Namespace], int]] = {}

    p = sub.add_parser(
        "train-fusion", help="embedding-level fusion", formatter_class=fmt
    )
    _common(p, "pipeline config (JSON or TOML); required")
    p.add_argument(
        "--backends",
        default=None,
        help="'all' or comma-separated kinds to compare "
        f"({', '.join(k.value for k in ModelKind)}); "
        "unset trains the config's backend",
    )
    commands["train-fusion"] = cmd_train_fusion

    p = sub.add_parser("fuse-scores", help="score-level fusion", formatter_class=fmt)
    _common(p, "score fusion config (JSON or TOML); required")
    commands["fuse-scores"] = cmd_fuse_scores

    p = sub.add_parser("evaluate", help="EERs of score files", formatter_class=fmt)
    _common(p, "unused; accepted for uniformity")
    p.add_argument(
        "--scores", type=Path, action="append", required=True, help="score file"
    )
    p.add_argument("--json", type=Path, default=None, help="write the EER report")
    p.add_argument(
        "--det-plot", type=Path, default=None, help="write a DET chart (.html/.json)"
    )
    p.add_argument(
        "--pooling",
        choices=["pooled", "balanced"],
        default="pooled",
        help="SASV negative pooling",
    )
    p.add_argument(
        "--metrics",
        default="auto",
        help="'auto' or comma-separated subset of sv,spf,sasv",
    )
    commands["evaluate"] = cmd_evaluate

    p = sub.add_parser(
        "gen-synth", help="write a synthetic dataset", formatter_class=fmt
    )
    _common(p, "config with a 'synthetic' section")
    p.add_argument(
        "--backend",
        choices=[k.value for k in ModelKind],
        default=ModelKind.GBDT.value,
        help="backend named in the generated pipeline config",
    )
    commands["gen-synth"] = cmd_gen_synth

    p = sub.add_parser("vad-trim", help="trim silence from a WAV", formatter_class=fmt)
    _common(p, "config with 'vad' and 'codec' sections")
    p.add_argument("--input", type=Path, required=True, help="input WAV")
    p.add_argument("--output", type=Path, default=None, help="output WAV")
    p.add_argument(
        "--codec", default=None, help="codec round trip before trimming (mp3, aac)"
    )
    p.add_argument("--bitrate", default="128k", help="codec bitrate")
    p.add_argument(
        "--subtype", choices=["PCM_16", "FLOAT"], default="PCM_16", help="output"
    )
    commands["vad-trim"] = cmd_vad_trim

    p = sub.add_parser(
        "inspect-store", help="summarize an EMB1 store", formatter_class=fmt
    )
    _common(p, "unused; accepted for uniformity")
    p.add_argument("--store", type=Path, required=True, help="EMB1 file")
    p.add_argument("--head", type=int, default=5, help="ids to list")
    commands["inspect-store"] = cmd_inspect_store

    parser.set_defaults(commands=commands)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"{PROG}: error [{e.module}]: {e}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format=LOG_FORMAT,
    )
    state.reset_manifest()
    try:
        code: int = args.commands[args.command](args)
        return code
    except SasvFuseError as e:
        if e.exit_code == UsageError.exit_code:
            parser.print_usage(sys.stderr)
        print(f"{PROG}: error [{e.module}]: {e}", file=sys.stderr)
        return e.exit_code
