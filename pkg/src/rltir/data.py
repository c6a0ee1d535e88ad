"""Dataset loading, per-user normalization, and the stream split protocol.

The split gives every enrolled user a training pool (30% of their rows as
genuine data plus impostor rows amounting to 20% of the final training
set, drawn from other enrolled users) and a test stream (the remaining
70% of their rows interleaved with an equal number of impostor rows,
which may come from subjects that are not yet enrolled). Held-out
subjects enter the stream later and trigger an enrollment event at their
first arrival.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

CMU_META_COLUMNS = ("subject", "sessionIndex", "rep")
CMU_EXPECTED_ROWS = 20400
CMU_EXPECTED_SUBJECTS = 51
CMU_EXPECTED_PER_SUBJECT = 400


class IngestError(ValueError):
    """A dataset file failed validation."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class DatasetInstance:
    instance_id: str
    subject_id: str
    session_index: int
    features: np.ndarray
    arrival_order: int


@dataclass
class MinMaxNormalizer:
    """Per-dimension min-max scaling fitted on a training pool."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "MinMaxNormalizer":
        rows = np.asarray(rows, dtype=float)
        return cls(lo=rows.min(axis=0), hi=rows.max(axis=0))

    @property
    def span(self) -> np.ndarray:
        span = self.hi - self.lo
        # constant dimensions map to 0 rather than dividing by zero
        return np.where(span > 0, span, 1.0)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lo) / self.span

    def state(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_state(cls, d: dict) -> "MinMaxNormalizer":
        return cls(np.asarray(d["lo"], dtype=float), np.asarray(d["hi"], dtype=float))


def _parse_float(value: str, row_number: int, column: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise IngestError(
            f"row {row_number}: column {column!r} has non-numeric value {value!r}"
        ) from None


def load_cmu_csv(path: str, expect_cmu_shape: bool = False) -> list[DatasetInstance]:
    """Load the public keystroke-timing table.

    Expects a header with subject, sessionIndex, rep followed by numeric
    timing features. With ``expect_cmu_shape`` the declared shape of the
    public file (20,400 rows, 51 subjects, 400 rows each) is enforced.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: file is empty") from None
        header = [c.strip() for c in header]
        for col in CMU_META_COLUMNS:
            if col not in header:
                raise IngestError(f"{path}: missing required column {col!r}")
        meta_idx = {col: header.index(col) for col in CMU_META_COLUMNS}
        feature_cols = [(i, name) for i, name in enumerate(header)
                        if name not in CMU_META_COLUMNS]
        if not feature_cols:
            raise IngestError(f"{path}: no feature columns found")

        instances = []
        for row_number, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IngestError(
                    f"row {row_number}: expected {len(header)} fields, got {len(row)}"
                )
            subject = row[meta_idx["subject"]].strip()
            session = int(_parse_float(row[meta_idx["sessionIndex"]], row_number, "sessionIndex"))
            rep = int(_parse_float(row[meta_idx["rep"]], row_number, "rep"))
            features = np.array(
                [_parse_float(row[i], row_number, name) for i, name in feature_cols]
            )
            instances.append(DatasetInstance(
                instance_id=f"{subject}-s{session}-r{rep}",
                subject_id=subject,
                session_index=session,
                features=features,
                arrival_order=len(instances),
            ))

    if expect_cmu_shape:
        subjects = {}
        for inst in instances:
            subjects[inst.subject_id] = subjects.get(inst.subject_id, 0) + 1
        if len(instances) != CMU_EXPECTED_ROWS:
            raise IngestError(
                f"{path}: expected {CMU_EXPECTED_ROWS} rows, found {len(instances)}"
            )
        if len(subjects) != CMU_EXPECTED_SUBJECTS:
            raise IngestError(
                f"{path}: expected {CMU_EXPECTED_SUBJECTS} subjects, found {len(subjects)}"
            )
        bad = {s: c for s, c in subjects.items() if c != CMU_EXPECTED_PER_SUBJECT}
        if bad:
            raise IngestError(f"{path}: per-subject row counts off: {bad}")
    return instances


def load_generic_csv(path: str, label_column: str) -> list[DatasetInstance]:
    """Load any labeled vector CSV; every non-label column is a feature."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: file is empty") from None
        header = [c.strip() for c in header]
        if label_column not in header:
            raise IngestError(f"{path}: label column {label_column!r} not found")
        label_idx = header.index(label_column)
        feature_cols = [(i, name) for i, name in enumerate(header) if i != label_idx]
        if not feature_cols:
            raise IngestError(f"{path}: no feature columns found")

        instances = []
        for row_number, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IngestError(
                    f"row {row_number}: expected {len(header)} fields, got {len(row)}"
                )
            features = np.array(
                [_parse_float(row[i], row_number, name) for i, name in feature_cols]
            )
            instances.append(DatasetInstance(
                instance_id=f"r{row_number}",
                subject_id=row[label_idx].strip(),
                session_index=0,
                features=features,
                arrival_order=len(instances),
            ))
    return instances


@dataclass
class StreamItem:
    """One test arrival: an instance presented under a claimed identity."""

    claimed_user: str
    instance: DatasetInstance
    label: int  # 0 genuine, 1 impostor
    position: int  # position within the claimed user's own stream


@dataclass
class UserSplit:
    user_id: str
    train_genuine: list
    train_impostor: list
    test_items: list
    enroll_at: int = 0  # global stream position at which the user enrolls
    is_late: bool = False

    def training_pool(self) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix and labels (0 genuine / 1 impostor) of the pool."""
        rows = [i.features for i in self.train_genuine] + \
               [i.features for i in self.train_impostor]
        labels = np.array([0] * len(self.train_genuine) + [1] * len(self.train_impostor))
        return np.stack(rows), labels


@dataclass
class SplitPlan:
    users: dict
    seed: int
    enrolled_initially: list = field(default_factory=list)
    late_enrollees: list = field(default_factory=list)

    def merged_stream(self):
        """Yield ("enroll", user_id) and ("instance", StreamItem, last) events.

        Streams advance together on a shared clock: item i of every active
        user arrives at tick enroll_at + i, ties broken by user id. ``last``
        marks the final item of a user's stream.
        """
        events = []
        for user_id, split in self.users.items():
            n = len(split.test_items)
            events.append((split.enroll_at, 0, user_id, None))
            for item in split.test_items:
                events.append((split.enroll_at + item.position, 1, user_id, item))
        events.sort(key=lambda e: (e[0], e[1], e[2]))
        last_position = {u: len(s.test_items) - 1 for u, s in self.users.items()}
        for tick, kind, user_id, item in events:
            if kind == 0:
                yield ("enroll", user_id)
            else:
                yield ("instance", item, item.position == last_position[user_id])

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "enrolled_initially": list(self.enrolled_initially),
            "late_enrollees": list(self.late_enrollees),
            "users": {
                u: {
                    "enroll_at": s.enroll_at,
                    "train_genuine": [i.instance_id for i in s.train_genuine],
                    "train_impostor": [i.instance_id for i in s.train_impostor],
                    "test_items": [
                        {"instance_id": it.instance.instance_id, "label": it.label}
                        for it in s.test_items
                    ],
                }
                for u, s in self.users.items()
            },
        }


def make_split(instances: list, enrolled_fraction: float = 1.0,
               seed: int = 0) -> SplitPlan:
    """Deterministic train/test split with mid-stream enrollments."""
    by_subject: dict[str, list] = {}
    for inst in instances:
        by_subject.setdefault(inst.subject_id, []).append(inst)

    usable = {}
    for subject in sorted(by_subject):
        rows = by_subject[subject]
        if len(rows) < 4:
            warnings.warn(f"subject {subject!r} has {len(rows)} rows (< 4); excluded",
                          stacklevel=2)
            continue
        usable[subject] = sorted(rows, key=lambda r: r.arrival_order)
    if len(usable) < 2:
        raise IngestError("the split protocol needs at least 2 usable subjects")

    rng = np.random.default_rng(seed)
    subjects = sorted(usable)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    n_enrolled = max(2, round_half_up(enrolled_fraction * len(subjects)))
    n_enrolled = min(n_enrolled, len(subjects))
    enrolled = sorted(order[:n_enrolled])
    late = sorted(order[n_enrolled:])

    # Per-subject genuine partition: 30% train / 70% test.
    train_genuine: dict[str, list] = {}
    test_genuine: dict[str, list] = {}
    for subject in subjects:
        rows = usable[subject]
        n_train = round_half_up(0.30 * len(rows))
        picks = set(rng.choice(len(rows), size=n_train, replace=False).tolist())
        train_genuine[subject] = [rows[i] for i in range(len(rows)) if i in picks]
        test_genuine[subject] = [rows[i] for i in range(len(rows)) if i not in picks]

    users: dict[str, UserSplit] = {}
    for subject in subjects:
        others_enrolled = [s for s in enrolled if s != subject]
        impostor_train_pool = [r for s in others_enrolled for r in usable[s]]
        n_imp = round_half_up(len(train_genuine[subject]) / 4.0)
        n_imp = min(n_imp, len(impostor_train_pool))
        picks = rng.choice(len(impostor_train_pool), size=n_imp, replace=False)
        train_impostor = [impostor_train_pool[int(i)] for i in sorted(picks.tolist())]
        used_ids = {r.instance_id for r in train_impostor}

        impostor_test_pool = [r for s in subjects if s != subject
                              for r in usable[s] if r.instance_id not in used_ids]
        n_test_imp = len(test_genuine[subject])
        if n_test_imp <= len(impostor_test_pool):
            picks = rng.choice(len(impostor_test_pool), size=n_test_imp, replace=False)
        else:
            warnings.warn(f"impostor pool for {subject!r} smaller than test set; "
                          "sampling with replacement", stacklevel=2)
            picks = rng.integers(0, len(impostor_test_pool), size=n_test_imp)
        test_impostor = [impostor_test_pool[int(i)] for i in picks.tolist()]

        # Interleave by session order, shuffled within a session.
        items = [(inst, 0) for inst in test_genuine[subject]] + \
                [(inst, 1) for inst in test_impostor]
        keys = rng.random(len(items))
        ordered = sorted(range(len(items)),
                         key=lambda j: (items[j][0].session_index, keys[j]))
        test_items = [
            StreamItem(claimed_user=subject, instance=items[j][0],
                       label=items[j][1], position=pos)
            for pos, j in enumerate(ordered)
        ]
        users[subject] = UserSplit(
            user_id=subject,
            train_genuine=train_genuine[subject],
            train_impostor=train_impostor,
            test_items=test_items,
            is_late=subject in late,
        )

    # Late enrollees join at evenly spaced points of the longest stream,
    # always strictly after it starts.
    if late:
        longest = max(len(users[s].test_items) for s in enrolled) if enrolled else 0
        for rank, subject in enumerate(late):
            users[subject].enroll_at = max(1, int((rank + 1) * longest / (len(late) + 1)))

    return SplitPlan(users=users, seed=seed,
                     enrolled_initially=enrolled, late_enrollees=late)


def synthetic_dataset(n_subjects: int = 8, sessions: int = 4, reps: int = 20,
                      dim: int = 12, seed: int = 0, noise: float = 0.05,
                      drift: float = 0.015) -> list[DatasetInstance]:
    """Per-subject Gaussian clusters with slow per-session drift.

    Stands in for hardware-captured activity data in structural tests and
    demos; never a source of externally reported numbers.
    """
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.25, 0.75, size=(n_subjects, dim))
    instances = []
    order = 0
    for s in range(n_subjects):
        subject = f"u{s:03d}"
        offset = np.zeros(dim)
        for session in range(1, sessions + 1):
            offset = offset + rng.normal(0.0, drift, size=dim)
            for rep in range(1, reps + 1):
                features = centers[s] + offset + rng.normal(0.0, noise, size=dim)
                instances.append(DatasetInstance(
                    instance_id=f"u{s:03d}-s{session}-r{rep}",
                    subject_id=subject,
                    session_index=session,
                    features=features,
                    arrival_order=order,
                ))
                order += 1
    return instances


def cmu_shaped_synthetic(seed: int = 0) -> list[DatasetInstance]:
    """A synthetic stand-in with the public keystroke dataset's shape."""
    return synthetic_dataset(n_subjects=51, sessions=8, reps=50, dim=31,
                             seed=seed, noise=0.05, drift=0.012)
