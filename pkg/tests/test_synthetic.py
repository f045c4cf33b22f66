# tests/test_synthetic.py
import numpy as np
import pytest
from pydantic import ValidationError

from sasv_fuse.protocol import TrialLabel
from sasv_fuse.synthetic import SyntheticSpec, gen_synthetic, speaker_codes


def test_codes_are_closed_under_negation():
    codes = speaker_codes(4, 2)
    assert codes.tolist() == [[1, -1], [1, 1], [-1, 1], [-1, -1]]
    assert len({tuple(c) for c in speaker_codes(8, 3)}) == 8, "Codes are distinct"


def test_trial_layout(xor_spec, xor_data):
    train = xor_data.trials["train"]
    n, u = xor_spec.n_speakers, xor_spec.utterances_per_speaker
    spoofs = int(round(u * xor_spec.spoof_fraction))
    assert train.counts[TrialLabel.TARGET] == n * u
    assert train.counts[TrialLabel.NONTARGET] == n * (n - 1) * u
    assert train.counts[TrialLabel.SPOOF] == n * spoofs
    dev = xor_data.trials["dev"]
    assert dev.counts[TrialLabel.TARGET] == n * xor_spec.dev_utterances_per_speaker


def test_partitions_share_no_utterances(xor_data):
    trials = xor_data.trials
    assert not trials["train"].test_ids() & trials["dev"].test_ids()
    assert not trials["dev"].test_ids() & trials["eval"].test_ids()
    assert all(t.startswith("trn_") for t in trials["train"].test_ids())


def test_same_seed_same_data():
    spec = SyntheticSpec(utterances_per_speaker=5, seed=21)
    first, second = gen_synthetic(spec), gen_synthetic(spec)
    assert first.stores == second.stores
    assert first.trials == second.trials
    other = gen_synthetic(spec.model_copy(update={"seed": 22}))
    assert other.stores != first.stores, "A new seed gives new embeddings"


def test_spoofs_carry_the_cm_offset(xor_spec, xor_data):
    cm = xor_data.stores[xor_spec.cm_store]
    spoof = np.stack([v for k, v in cm.items() if "_s" in k.split("_spk")[1]])
    bona = np.stack([v for k, v in cm.items() if "_u" in k.split("_spk")[1]])
    assert spoof.mean() > 2.0 and abs(bona.mean()) < 0.2


def test_spec_validation():
    with pytest.raises(ValidationError, match="even"):
        SyntheticSpec(n_speakers=3)
    with pytest.raises(ValidationError, match="at most"):
        SyntheticSpec(n_speakers=6, asv_dim=2)
    with pytest.raises(ValidationError, match="must differ"):
        SyntheticSpec(asv_store="x", cm_store="x")
    assert SyntheticSpec(n_speakers=3, xor_mode=False).n_speakers == 3
