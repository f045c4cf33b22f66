"""
Trial lists and label keys.

A trial file has one trial per line, three whitespace-separated columns::

    enroll_id test_id label

with ``label`` one of ``target``, ``nontarget`` or ``spoof``. Empty lines and
lines starting with ``#`` are skipped. LF and CRLF are accepted; LF is written.
"""

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import (
    Dict,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)

from .errors import ProtocolParseError, TrialFileError


class TrialLabel(str, Enum):
    TARGET = "target"
    NONTARGET = "nontarget"
    SPOOF = "spoof"

    @classmethod
    def parse(cls, token: str) -> "TrialLabel":
        try:
            return cls(token)
        except ValueError:
            raise ValueError(f"unknown label '{token}'") from None


def _valid_identifier(value: str) -> bool:
    return bool(value) and not any(ch.isspace() for ch in value)


@dataclass(frozen=True)
class TrialRecord:
    enroll_id: str
    test_id: str
    label: TrialLabel

    def __post_init__(self) -> None:
        for name in ("enroll_id", "test_id"):
            value = getattr(self, name)
            if not _valid_identifier(value):
                raise ValueError(f"invalid {name} {value!r}")

    @property
    def key(self) -> Tuple[str, str]:
        return (self.enroll_id, self.test_id)

    def to_line(self) -> str:
        return f"{self.enroll_id} {self.test_id} {self.label.value}"


@dataclass(frozen=True)
class TrialList:
    records: Tuple[TrialRecord, ...] = ()
    counts: Dict[TrialLabel, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        tally = Counter(r.label for r in self.records)
        object.__setattr__(self, "counts", {lab: tally[lab] for lab in TrialLabel})

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TrialRecord]:
        return iter(self.records)

    def __getitem__(self, index: int) -> TrialRecord:
        return self.records[index]

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord]) -> "TrialList":
        return cls(tuple(records))

    def filter(self, labels: Sequence[TrialLabel]) -> "TrialList":
        wanted = set(labels)
        return TrialList(tuple(r for r in self.records if r.label in wanted))

    def test_ids(self) -> Set[str]:
        return {r.test_id for r in self.records}

    def enroll_ids(self) -> Set[str]:
        return {r.enroll_id for r in self.records}


def parse_line(line: str, line_no: int, n_fields: int = 3) -> List[str]:
    """Split one data line, checking the column count."""
    fields = line.split()
    if len(fields) != n_fields:
        raise ProtocolParseError(
            f"expected {n_fields} fields, got {len(fields)}", line_no
        )
    return fields


def parse_record(fields: Sequence[str], line_no: int) -> TrialRecord:
    enroll_id, test_id, token = fields[0], fields[1], fields[2]
    try:
        label = TrialLabel.parse(token)
    except ValueError as e:
        raise ProtocolParseError(str(e), line_no) from None
    return TrialRecord(enroll_id, test_id, label)


def data_lines(text: str) -> Iterable[Tuple[int, str]]:
    """Yield ``(line_no, line)`` for every non-empty, non-comment line."""
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield line_no, line


def parse_trials(text: str) -> TrialList:
    """
    Parse a trial list.

    Repeated ``(enroll_id, test_id)`` pairs are kept when their labels agree;
    a repeated pair with a different label is rejected.
    """
    records: List[TrialRecord] = []
    seen: Dict[Tuple[str, str], TrialLabel] = {}
    for line_no, line in data_lines(text):
        record = parse_record(parse_line(line, line_no), line_no)
        previous: Optional[TrialLabel] = seen.get(record.key)
        if previous is not None and previous != record.label:
            raise ProtocolParseError(
                f"contradictory label '{record.label.value}' for "
                f"{record.enroll_id} {record.test_id} "
                f"(previously '{previous.value}')",
                line_no,
            )
        seen[record.key] = record.label
        records.append(record)
    return TrialList(tuple(records))


def write_trials(trials: TrialList) -> str:
    return "".join(f"{r.to_line()}\n" for r in trials.records)


def read_trials(path: Union[str, Path]) -> TrialList:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise TrialFileError(f"cannot read {path}: {e}") from None
    return parse_trials(text)


def save_trials(trials: TrialList, path: Union[str, Path]) -> None:
    Path(path).write_text(write_trials(trials), encoding="utf-8", newline="\n")
