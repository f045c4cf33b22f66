"""
Seeded synthetic stand-in for ASV / CM embeddings and trial lists.

Speakers sit at cluster centers in the ASV space. Every bonafide test
utterance is a noisy copy of its speaker's center, every enrollment a
less noisy one. Spoofed utterances copy the claimed speaker's ASV center
(so ASV alone accepts them) and carry an offset in the CM space that bonafide
speech lacks.

In ``xor_mode`` the centers are sign codes closed under negation: the first
half of the speakers get the bit patterns of 0, 1, ... with a leading +1 and
the second half their negations. Flipping the sign of every ASV coordinate
then maps targets onto targets and nontargets onto nontargets, so any linear
score is symmetric about its intercept for both classes and cannot separate
them, while "same sign pattern" separates them perfectly.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveInt,
    model_validator,
)
from typing_extensions import Self

from .embstore import EmbeddingStore
from .features import FeaturePart, FeatureSpec
from .protocol import TrialLabel, TrialList, TrialRecord

logger = logging.getLogger(__name__)

PARTITIONS = ("train", "dev", "eval")
PREFIXES = {"train": "trn", "dev": "dev", "eval": "eval"}


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_speakers: PositiveInt = 4
    utterances_per_speaker: PositiveInt = 60
    dev_utterances_per_speaker: Optional[PositiveInt] = None
    eval_utterances_per_speaker: Optional[PositiveInt] = None
    spoof_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    asv_dim: PositiveInt = 2
    cm_dim: PositiveInt = 2
    asv_noise: NonNegativeFloat = 0.3
    enroll_noise: NonNegativeFloat = 0.05
    cm_noise: NonNegativeFloat = 0.5
    spoof_offset: float = 4.0
    center_scale: NonNegativeFloat = 1.0
    xor_mode: bool = True
    asv_store: str = "ecapa"
    cm_store: str = "aasist"
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_layout(self) -> Self:
        if self.n_speakers < 2:
            raise ValueError("n_speakers must be at least 2")
        if self.asv_store == self.cm_store:
            raise ValueError("asv_store and cm_store must differ")
        if self.xor_mode:
            if self.n_speakers % 2:
                raise ValueError("xor_mode needs an even n_speakers")
            if self.n_speakers > 2**self.asv_dim:
                raise ValueError(
                    f"xor_mode supports at most 2**asv_dim = {2**self.asv_dim} "
                    f"speakers, got {self.n_speakers}"
                )
        return self

    def utterances(self, partition: str) -> int:
        override = {
            "dev": self.dev_utterances_per_speaker,
            "eval": self.eval_utterances_per_speaker,
        }.get(partition)
        return override if override is not None else self.utterances_per_speaker

    def feature_spec(self) -> FeatureSpec:
        """ASV enrollment, ASV test and CM test parts, in that order."""
        return FeatureSpec(
            parts=(
                FeaturePart(store=self.asv_store, role="enroll", dim=self.asv_dim),
                FeaturePart(store=self.asv_store, role="test", dim=self.asv_dim),
                FeaturePart(store=self.cm_store, role="test", dim=self.cm_dim),
            )
        )


@dataclass(frozen=True)
class SyntheticData:
    stores: Dict[str, EmbeddingStore]
    trials: Dict[str, TrialList]


def speaker_codes(n_speakers: int, dim: int) -> np.ndarray:
    """Sign codes closed under negation, shape (n_speakers, dim)."""
    half = n_speakers // 2
    codes = np.ones((half, dim))
    for k in range(half):
        for b in range(dim - 1):
            bit = (k >> (dim - 2 - b)) & 1
            codes[k, b + 1] = 1.0 if bit else -1.0
    return np.vstack([codes, -codes])


def _centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.xor_mode:
        return spec.center_scale * speaker_codes(spec.n_speakers, spec.asv_dim)
    return rng.normal(0.0, spec.center_scale, size=(spec.n_speakers, spec.asv_dim))


def _partition(
    spec: SyntheticSpec,
    partition: str,
    centers: np.ndarray,
    rng: np.random.Generator,
    asv: EmbeddingStore,
    cm: EmbeddingStore,
) -> TrialList:
    prefix = PREFIXES[partition]
    n_utt = spec.utterances(partition)
    n_spoof = int(round(n_utt * spec.spoof_fraction))
    offset = np.full(spec.cm_dim, spec.spoof_offset / np.sqrt(spec.cm_dim))

    enroll_ids: List[str] = []
    bonafide: List[Tuple[str, int]] = []
    spoofed: List[Tuple[str, int]] = []
    for k, center in enumerate(centers):
        enroll_id = f"{prefix}_spk{k:02d}"
        asv.add(enroll_id, center + rng.normal(0.0, spec.enroll_noise, spec.asv_dim))
        enroll_ids.append(enroll_id)
        for u in range(n_utt):
            test_id = f"{enroll_id}_u{u:04d}"
            asv.add(test_id, center + rng.normal(0.0, spec.asv_noise, spec.asv_dim))
            cm.add(test_id, rng.normal(0.0, spec.cm_noise, spec.cm_dim))
            bonafide.append((test_id, k))
        for u in range(n_spoof):
            test_id = f"{enroll_id}_s{u:04d}"
            asv.add(test_id, center + rng.normal(0.0, spec.asv_noise, spec.asv_dim))
            cm.add(test_id, offset + rng.normal(0.0, spec.cm_noise, spec.cm_dim))
            spoofed.append((test_id, k))

    records: List[TrialRecord] = []
    for k, enroll_id in enumerate(enroll_ids):
        for test_id, speaker in bonafide:
            label = TrialLabel.TARGET if speaker == k else TrialLabel.NONTARGET
            records.append(TrialRecord(enroll_id, test_id, label))
        for test_id, speaker in spoofed:
            if speaker == k:
                records.append(TrialRecord(enroll_id, test_id, TrialLabel.SPOOF))
    return TrialList(tuple(records))


def gen_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Stores and train/dev/eval trial lists; fully determined by ``spec``."""
    rng = np.random.default_rng(spec.seed)
    centers = _centers(spec, rng)
    asv = EmbeddingStore(spec.asv_store, spec.asv_dim)
    cm = EmbeddingStore(spec.cm_store, spec.cm_dim)
    trials = {
        partition: _partition(spec, partition, centers, rng, asv, cm)
        for partition in PARTITIONS
    }
    for partition, trial_list in trials.items():
        logger.info(
            "Synthetic %s: %d trials (%s)",
            partition,
            len(trial_list),
            ", ".join(f"{lab.value}={n}" for lab, n in trial_list.counts.items()),
        )
    return SyntheticData({asv.source_name: asv, cm.source_name: cm}, trials)
