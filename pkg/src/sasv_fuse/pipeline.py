"""
The two fusion experiments end to end.

Embedding fusion assembles per-trial feature vectors from embedding stores,
trains one back-end on the train partition and scores dev / eval. Score fusion
stacks the per-trial scores of several subsystems into a k-dimensional vector
and does the same. Both write score files, EER reports and a run manifest into
the configured output directory; a failed run leaves none of them behind.
"""

import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Dict,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import state
from .backends import FusionModel, ModelKind, TrainConfig, save_model, train
from .config import PipelineConfig, ScoreFusionConfig
from .display import results_table
from .embstore import EmbeddingStore, load_store
from .errors import (
    CoverageError,
    LeakageError,
    ProtocolParseError,
    ScoreFileError,
)
from .features import (
    LabeledMatrix,
    assemble_dataset,
    cosine,
    positive_rule,
)
from .metrics import EerReport, ScoreSet, available_metrics, sasv_metrics
from .protocol import (
    TrialList,
    TrialRecord,
    data_lines,
    parse_line,
    parse_record,
    read_trials,
)
from .utils import format_seconds, resolve_threads, sha256_file

logger = logging.getLogger(__name__)

SHOWN_MISMATCHES = 10


# score files


def write_scores(scores: ScoreSet, seed: Optional[int] = None) -> str:
    """``enroll_id test_id label score`` per line; scores in shortest repr."""
    header = "" if seed is None else f"# seed {seed}\n"
    return header + "".join(
        f"{trial.to_line()} {float(value)!r}\n" for trial, value in scores.entries
    )


def save_scores(
    scores: ScoreSet, path: Union[str, Path], seed: Optional[int] = None
) -> None:
    Path(path).write_text(write_scores(scores, seed), encoding="utf-8", newline="\n")


def parse_scores(text: str, source: str = "<scores>") -> ScoreSet:
    entries: List[Tuple[TrialRecord, float]] = []
    seen: Dict[Tuple[str, str], int] = {}
    for line_no, line in data_lines(text):
        try:
            fields = parse_line(line, line_no, n_fields=4)
            trial = parse_record(fields, line_no)
        except (ProtocolParseError, ValueError) as e:
            raise ScoreFileError(f"{source}: {e}") from None
        try:
            value = float(fields[3])
        except ValueError:
            raise ScoreFileError(
                f"{source}: line {line_no}: score {fields[3]!r} is not a number"
            ) from None
        if not math.isfinite(value):
            raise ScoreFileError(f"{source}: line {line_no}: non-finite score")
        if trial.key in seen:
            raise ScoreFileError(
                f"{source}: line {line_no}: trial {trial.enroll_id} "
                f"{trial.test_id} repeats line {seen[trial.key]}"
            )
        seen[trial.key] = line_no
        entries.append((trial, value))
    return ScoreSet(tuple(entries))


def read_scores(path: Union[str, Path]) -> ScoreSet:
    path = Path(path)
    if not path.exists():
        raise ScoreFileError(f"score file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ScoreFileError(f"cannot read {path}: {e}") from None
    return parse_scores(text, str(path))


# baselines


def cosine_scores(trials: TrialList, store: EmbeddingStore) -> ScoreSet:
    """Cosine similarity of enrollment and test embeddings from one store."""
    return ScoreSet.from_pairs(
        (trial, cosine(store.vector(trial.enroll_id), store.vector(trial.test_id)))
        for trial in trials
    )


def score_sum(
    train_columns: np.ndarray, columns: np.ndarray, normalize: bool = True
) -> np.ndarray:
    """
    Sum of subsystem scores per trial.

    With ``normalize`` every column is first z-normalized with the mean and
    standard deviation of the corresponding training column.
    """
    columns = np.asarray(columns, dtype=np.float64)
    if not normalize:
        return columns.sum(axis=1)
    train_columns = np.asarray(train_columns, dtype=np.float64)
    mean = train_columns.mean(axis=0)
    stddev = train_columns.std(axis=0)
    stddev[stddev == 0.0] = 1.0
    return ((columns - mean) / stddev).sum(axis=1)


# checks


def check_separation(train: TrialList, others: Mapping[str, TrialList]) -> None:
    """
    No identifier of dev / eval may appear in the training trials, whether as
    enrollment speaker or test utterance. Both roles feed the training matrix.
    """
    train_ids = train.test_ids()
    train_enrolls = train.enroll_ids()
    logger.info(
        "Train partition: %d enrollment ids, %d test ids",
        len(train_enrolls),
        len(train_ids),
    )
    for name, trials in others.items():
        ids = trials.test_ids()
        logger.info(
            "%s partition: %d enrollment ids, %d test ids",
            name,
            len(trials.enroll_ids()),
            len(ids),
        )
        shared = sorted(train_ids & ids)
        if shared:
            raise LeakageError(
                f"{len(shared)} {name} test utterances also occur in the train "
                f"partition: {', '.join(shared[:SHOWN_MISMATCHES])}"
            )
        shared = sorted(train_enrolls & trials.enroll_ids())
        if shared:
            raise LeakageError(
                f"{len(shared)} {name} enrollment ids also occur in the train "
                f"partition: {', '.join(shared[:SHOWN_MISMATCHES])}"
            )


def stack_scores(
    subsystems: Sequence[Tuple[str, ScoreSet]],
) -> Tuple[Tuple[TrialRecord, ...], np.ndarray]:
    """
    Stack per-trial scores into an (n, k) matrix, one column per subsystem.

    Rows follow the first subsystem's trial order. Every subsystem must score
    exactly the same trials with the same labels.
    """
    if not subsystems:
        raise CoverageError("no subsystem scores to stack")
    reference_name, reference = subsystems[0]
    trials = tuple(trial for trial, _ in reference.entries)
    if not trials:
        raise CoverageError(f"subsystem '{reference_name}' scores no trials")
    keys = {trial.key: trial.label for trial in trials}
    columns = []
    for name, scores in subsystems:
        lookup = {trial.key: (trial.label, value) for trial, value in scores.entries}
        diff = sorted(set(keys).symmetric_difference(lookup))
        if diff:
            shown = ", ".join(f"{e} {t}" for e, t in diff[:SHOWN_MISMATCHES])
            raise CoverageError(
                f"subsystems '{reference_name}' and '{name}' differ in "
                f"{len(diff)} trials: {shown}"
            )
        for key, label in keys.items():
            if lookup[key][0] is not label:
                raise CoverageError(
                    f"subsystem '{name}' labels trial {key[0]} {key[1]} "
                    f"'{lookup[key][0].value}', '{reference_name}' says "
                    f"'{label.value}'"
                )
        columns.append([lookup[trial.key][1] for trial in trials])
    return trials, np.array(columns, dtype=np.float64).T.reshape(len(trials), -1)


# scoring and outputs


def score_rows(
    model: FusionModel,
    rows: np.ndarray,
    chunk: int = 4096,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Score rows in fixed-size chunks; chunking is independent of ``threads``."""
    if rows.shape[0] == 0:
        return np.zeros(0)
    chunks = [rows[i : i + chunk] for i in range(0, rows.shape[0], chunk)]
    parts = Parallel(n_jobs=resolve_threads(threads), prefer="threads")(
        delayed(model.score_batch)(part) for part in chunks
    )
    return np.concatenate(parts)


@contextmanager
def output_guard(paths: List[Path]) -> Iterator[List[Path]]:
    """Remove every path appended to ``paths`` if the block raises."""
    try:
        yield paths
    except BaseException:
        for path in paths:
            if path.exists():
                path.unlink()
                logger.info("Removed partial output %s", path)
        raise


@dataclass
class RunResult:
    model: Optional[FusionModel]
    reports: Dict[str, EerReport]
    outputs: Dict[str, Path] = field(default_factory=dict)

    @property
    def dev(self) -> EerReport:
        return self.reports["dev"]

    @property
    def eval(self) -> Optional[EerReport]:
        return self.reports.get("eval")


def _evaluate(scores: ScoreSet, seed: int) -> EerReport:
    report = sasv_metrics(scores, available_metrics(scores))
    report.seed = seed
    return report


def _emit(
    out_dir: Path,
    seed: int,
    model: Optional[FusionModel],
    score_sets: Mapping[str, ScoreSet],
    manifest: Dict[str, object],
) -> RunResult:
    """Write model, score files, reports and manifest; all or nothing."""
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {name: _evaluate(scores, seed) for name, scores in score_sets.items()}
    outputs: Dict[str, Path] = {}
    with output_guard([]) as written:
        if model is not None:
            outputs["model"] = out_dir / "model.fmd"
            written.append(outputs["model"])
            save_model(model, outputs["model"])
        for name, scores in score_sets.items():
            outputs[f"{name}_scores"] = out_dir / f"{name}.scores"
            written.append(outputs[f"{name}_scores"])
            save_scores(scores, outputs[f"{name}_scores"], seed)
            outputs[f"{name}_report"] = out_dir / f"{name}_report.json"
            written.append(outputs[f"{name}_report"])
            outputs[f"{name}_report"].write_text(
                reports[name].to_json(), encoding="utf-8", newline="\n"
            )
        manifest_path = out_dir / "manifest.json"
        written.append(manifest_path)
        manifest = dict(manifest)
        manifest["seed"] = seed
        manifest["artifacts"] = {
            path.name: sha256_file(path) for path in outputs.values()
        }
        state.write_manifest(manifest_path, manifest)
    outputs["manifest"] = manifest_path
    return RunResult(model, reports, outputs)


def _id_sets(trials: Mapping[str, TrialList]) -> Dict[str, Dict[str, int]]:
    return {
        name: {
            "trials": len(t),
            "enroll_ids": len(t.enroll_ids()),
            "test_ids": len(t.test_ids()),
        }
        for name, t in trials.items()
    }


# embedding fusion


@dataclass(frozen=True)
class EmbeddingData:
    train: LabeledMatrix
    partitions: Dict[str, LabeledMatrix]
    trials: Dict[str, TrialList]


def prepare_embedding_data(cfg: PipelineConfig) -> EmbeddingData:
    """Load stores and trials, check partition separation, assemble matrices."""
    stores: Dict[str, EmbeddingStore] = {}
    for name in cfg.feature_spec.store_names():
        if name not in cfg.stores:
            raise CoverageError(f"feature spec uses store '{name}' with no path")
        stores[name] = load_store(cfg.stores[name])
    trials = {
        "train": read_trials(cfg.train_trials),
        "dev": read_trials(cfg.dev_trials),
    }
    if cfg.eval_trials is not None:
        trials["eval"] = read_trials(cfg.eval_trials)
    check_separation(
        trials["train"], {k: v for k, v in trials.items() if k != "train"}
    )
    positive = positive_rule(cfg.positive_labels)
    matrices = {
        name: assemble_dataset(t, stores, cfg.feature_spec, positive)
        for name, t in trials.items()
    }
    train_matrix = matrices.pop("train")
    return EmbeddingData(train_matrix, matrices, trials)


def _fit_and_emit(
    cfg: PipelineConfig,
    data: EmbeddingData,
    backend: TrainConfig,
    out_dir: Path,
    threads: Optional[int],
) -> RunResult:
    start = time.monotonic()
    logger.info(
        "Training %s on %d x %d", backend.kind.value, data.train.n, data.train.dim
    )
    model = train(data.train, backend, threads)
    elapsed = format_seconds(time.monotonic() - start)
    logger.info("Trained %s in %s", backend.kind.value, elapsed)
    # train scores too, so this run can be a score-fusion subsystem
    matrices = {"train": data.train, **data.partitions}
    score_sets = {
        name: ScoreSet.from_pairs(
            zip(
                matrix.trials,
                score_rows(model, matrix.rows, cfg.score_chunk, threads).tolist(),
            )
        )
        for name, matrix in matrices.items()
    }
    manifest: Dict[str, object] = {
        "experiment": "embedding_fusion",
        "config": cfg.model_dump(mode="json"),
        "backend": backend.echo(),
        "id_sets": _id_sets(data.trials),
    }
    return _emit(out_dir, cfg.seed, model, score_sets, manifest)


def run_embedding_fusion(
    cfg: PipelineConfig, threads: Optional[int] = None
) -> RunResult:
    """Assemble, train, score dev / eval and write every output."""
    return _fit_and_emit(
        cfg, prepare_embedding_data(cfg), cfg.backend, Path(cfg.output_dir), threads
    )


def compare_backends(
    cfg: PipelineConfig,
    kinds: Sequence[Union[str, ModelKind]],
    threads: Optional[int] = None,
) -> Tuple[Dict[str, RunResult], pd.DataFrame]:
    """
    Train one back-end per kind on the same matrices.

    Each kind writes into ``<output_dir>/<kind>``. Returns the run results and
    a table with one row per kind, columns (metric, partition).
    """
    data = prepare_embedding_data(cfg)
    results: Dict[str, RunResult] = {}
    for kind in kinds:
        backend = (
            cfg.backend
            if ModelKind(kind) is cfg.backend.kind
            else TrainConfig.for_kind(kind, seed=cfg.backend.seed)
        )
        name = backend.kind.value
        results[name] = _fit_and_emit(
            cfg, data, backend, Path(cfg.output_dir) / name, threads
        )
    return results, results_table(
        {name: result.reports for name, result in results.items()}
    )


# score fusion


def run_score_fusion(
    cfg: ScoreFusionConfig, threads: Optional[int] = None
) -> RunResult:
    """Stack subsystem scores, fit on train, evaluate dev / eval."""
    partitions = ["train", "dev"]
    if all(s.eval is not None for s in cfg.subsystems):
        partitions.append("eval")
    stacked: Dict[str, Tuple[Tuple[TrialRecord, ...], np.ndarray]] = {}
    for partition in partitions:
        sets = []
        for subsystem in cfg.subsystems:
            path = getattr(subsystem, partition)
            sets.append((subsystem.name, read_scores(path)))
        stacked[partition] = stack_scores(sets)
        logger.info(
            "Stacked %s scores: %d trials x %d subsystems",
            partition,
            *stacked[partition][1].shape,
        )
    check_separation(
        TrialList(stacked["train"][0]),
        {p: TrialList(stacked[p][0]) for p in partitions if p != "train"},
    )

    positive = positive_rule(cfg.positive_labels)
    train_trials, train_rows = stacked["train"]
    model: Optional[FusionModel] = None
    if cfg.method == "backend":
        labels = np.array([t.label in positive for t in train_trials], dtype=np.int8)
        data = LabeledMatrix(train_rows, labels, train_trials)
        model = train(data, cfg.backend, threads)

    score_sets: Dict[str, ScoreSet] = {}
    for partition in partitions:
        trials, rows = stacked[partition]
        if model is not None:
            fused = score_rows(model, rows, threads=threads)
        else:
            fused = score_sum(train_rows, rows)
        score_sets[partition] = ScoreSet.from_pairs(zip(trials, fused.tolist()))

    manifest: Dict[str, object] = {
        "experiment": "score_fusion",
        "config": cfg.model_dump(mode="json"),
        "subsystems": [s.name for s in cfg.subsystems],
        "id_sets": _id_sets({p: TrialList(stacked[p][0]) for p in partitions}),
    }
    return _emit(Path(cfg.output_dir), cfg.seed, model, score_sets, manifest)
