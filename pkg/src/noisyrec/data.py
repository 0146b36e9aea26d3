"""Interaction-log parsing, deterministic splitting, and test-set filtering.

Raw logs are line-oriented delimited text. Dense user/item indices are
assigned in first-appearance order and shared across splits, so entities
seen only in validation/test still own an embedding row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParseError
from .validation import check_ratios

SPLIT_NAMES = ("train", "validation", "test")

_DELIMITERS = {"tab": "\t", "comma": ",", "space": None}  # None = any whitespace


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    label: int
    timestamp: int | None = None
    aux: float | None = None


@dataclass(frozen=True)
class ColumnSchema:
    """Column order and delimiter of a raw interaction log.

    ``columns`` names each position; use "-" to skip a column. Must contain
    "user", "item" and "label". Optional names: "timestamp", "aux".
    """

    delimiter: str = "tab"
    columns: tuple = ("user", "item", "label", "timestamp")

    def __post_init__(self):
        for required in ("user", "item", "label"):
            if required not in self.columns:
                raise ValueError(f"schema is missing the '{required}' column")

    def split_line(self, line):
        sep = _DELIMITERS.get(self.delimiter, self.delimiter)
        return line.split(sep)


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ratios", check_ratios(self.ratios))
        if len(self.ratios) != 3:
            raise ValueError("exactly three split ratios are required")


@dataclass(frozen=True)
class TestFilter:
    """Cleanliness predicate applied to the test split only."""

    __test__ = False  # keep pytest from collecting this as a test class

    kind: str = "none"  # rating-equals | rating-greater-than | aux-at-least | none
    threshold: float = 0.0

    def __post_init__(self):
        kinds = ("rating-equals", "rating-greater-than", "aux-at-least", "none")
        if self.kind not in kinds:
            raise ValueError(f"unknown filter kind '{self.kind}'")


@dataclass
class InteractionDataset:
    """User/item/label triples with dense index maps.

    Index maps may be shared by several datasets (splits of one corpus);
    ``n_users``/``n_items`` therefore count the full entity universe, not
    just the entities present in this split's records.
    """

    users: np.ndarray
    items: np.ndarray
    labels: np.ndarray
    num_classes: int
    user_ids: list
    item_ids: list
    timestamps: np.ndarray | None = None
    aux: np.ndarray | None = None
    user_index: dict = field(default=None, repr=False)
    item_index: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.user_index is None:
            self.user_index = {u: k for k, u in enumerate(self.user_ids)}
        if self.item_index is None:
            self.item_index = {i: k for k, i in enumerate(self.item_ids)}

    def __len__(self):
        return len(self.labels)

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)

    def records(self):
        out = []
        for k in range(len(self)):
            out.append(
                InteractionRecord(
                    user_id=self.user_ids[self.users[k]],
                    item_id=self.item_ids[self.items[k]],
                    label=int(self.labels[k]),
                    timestamp=None if self.timestamps is None else int(self.timestamps[k]),
                    aux=None if self.aux is None else float(self.aux[k]),
                )
            )
        return out

    def subset(self, indices):
        """New dataset over a subset of records, sharing the index maps."""
        indices = np.asarray(indices, dtype=np.int64)
        return InteractionDataset(
            users=self.users[indices],
            items=self.items[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            user_ids=self.user_ids,
            item_ids=self.item_ids,
            timestamps=None if self.timestamps is None else self.timestamps[indices],
            aux=None if self.aux is None else self.aux[indices],
            user_index=self.user_index,
            item_index=self.item_index,
        )

    def with_labels(self, labels):
        """Copy of this dataset with a replaced label vector (noise injection)."""
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != self.labels.shape:
            raise ValueError("replacement labels must match the record count")
        out = self.subset(np.arange(len(self)))
        out.labels = labels
        return out

    def items_by_user(self):
        """Dict user index -> set of item indices interacted with here."""
        out = {}
        for u, i in zip(self.users.tolist(), self.items.tolist()):
            out.setdefault(u, set()).add(i)
        return out


def parse_interactions(lines, schema=None, num_classes=5):
    """Parse a raw interaction log into an InteractionDataset.

    ``lines`` is a string or an iterable of lines. Duplicate (user, item)
    pairs keep the last occurrence; the record stays at the position of the
    pair's first appearance. Dense indices follow first appearance.
    """
    if schema is None:
        schema = ColumnSchema()
    if isinstance(lines, str):
        lines = lines.splitlines()

    positions = {name: k for k, name in enumerate(schema.columns) if name != "-"}
    needed = max(positions[c] for c in ("user", "item", "label"))

    by_pair = {}
    user_ids, user_index = [], {}
    item_ids, item_index = [], {}

    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = schema.split_line(line)
        if len(parts) <= needed:
            raise ParseError(line_no, f"expected at least {needed + 1} columns, got {len(parts)}")
        uid = parts[positions["user"]].strip()
        iid = parts[positions["item"]].strip()
        if not uid or not iid:
            raise ParseError(line_no, "empty user or item id")
        try:
            label = int(parts[positions["label"]])
        except ValueError:
            raise ParseError(line_no, f"label '{parts[positions['label']]}' is not an integer") from None
        if not 1 <= label <= num_classes:
            raise ValueError(f"line {line_no}: label {label} outside 1..{num_classes}")

        timestamp = None
        if "timestamp" in positions and len(parts) > positions["timestamp"]:
            raw = parts[positions["timestamp"]].strip()
            if raw:
                try:
                    timestamp = int(raw)
                except ValueError:
                    raise ParseError(line_no, f"timestamp '{raw}' is not an integer") from None
        aux = None
        if "aux" in positions and len(parts) > positions["aux"]:
            raw = parts[positions["aux"]].strip()
            if raw:
                try:
                    aux = float(raw)
                except ValueError:
                    raise ParseError(line_no, f"aux value '{raw}' is not a number") from None

        if uid not in user_index:
            user_index[uid] = len(user_ids)
            user_ids.append(uid)
        if iid not in item_index:
            item_index[iid] = len(item_ids)
            item_ids.append(iid)
        # dict assignment keeps the first-seen position, stores the last value
        by_pair[(user_index[uid], item_index[iid])] = (label, timestamp, aux)

    n = len(by_pair)
    users = np.empty(n, dtype=np.int64)
    items = np.empty(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    timestamps = np.full(n, -1, dtype=np.int64)
    auxes = np.full(n, np.nan, dtype=np.float64)
    any_ts, any_aux = False, False
    for k, ((u, i), (label, ts, aux)) in enumerate(by_pair.items()):
        users[k], items[k], labels[k] = u, i, label
        if ts is not None:
            timestamps[k] = ts
            any_ts = True
        if aux is not None:
            auxes[k] = aux
            any_aux = True

    return InteractionDataset(
        users=users,
        items=items,
        labels=labels,
        num_classes=num_classes,
        user_ids=user_ids,
        item_ids=item_ids,
        timestamps=timestamps if any_ts else None,
        aux=auxes if any_aux else None,
        user_index=user_index,
        item_index=item_index,
    )


def _partition_sizes(n, ratios):
    # largest-remainder apportionment: sizes sum to n, each within 1 of n*r
    exact = [n * r for r in ratios]
    base = [int(np.floor(e)) for e in exact]
    remainder = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda k: (-(exact[k] - base[k]), k))
    for k in order[:remainder]:
        base[k] += 1
    return tuple(base)


def split_dataset(ds, spec=None):
    """Deterministic shuffled partition of a dataset into train/validation/test."""
    if spec is None:
        spec = SplitSpec()
    if len(ds) == 0:
        raise ValueError("cannot split an empty dataset")
    sizes = _partition_sizes(len(ds), spec.ratios)
    perm = np.random.default_rng(spec.seed).permutation(len(ds))
    train_idx = np.sort(perm[: sizes[0]])
    val_idx = np.sort(perm[sizes[0] : sizes[0] + sizes[1]])
    test_idx = np.sort(perm[sizes[0] + sizes[1] :])
    return ds.subset(train_idx), ds.subset(val_idx), ds.subset(test_idx)


def filter_test_set(test, flt):
    """Apply a cleanliness predicate to the test split; other splits untouched."""
    if flt is None or flt.kind == "none":
        return test
    if flt.kind == "rating-equals":
        mask = test.labels == int(flt.threshold)
    elif flt.kind == "rating-greater-than":
        mask = test.labels > flt.threshold
    else:  # aux-at-least
        if test.aux is None:
            raise ValueError("aux-at-least filter needs an aux column in the data")
        mask = np.nan_to_num(test.aux, nan=-np.inf) >= flt.threshold
    return test.subset(np.nonzero(mask)[0])


def save_splits(path, train, validation, test):
    """Write the canonical dataset dump: user<TAB>item<TAB>label<TAB>split."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user\titem\tlabel\tsplit\n")
        for name, ds in zip(SPLIT_NAMES, (train, validation, test)):
            for k in range(len(ds)):
                fh.write(
                    f"{ds.user_ids[ds.users[k]]}\t{ds.item_ids[ds.items[k]]}"
                    f"\t{int(ds.labels[k])}\t{name}\n"
                )


def load_splits(path, num_classes):
    """Read a canonical dump back into (train, validation, test).

    The three datasets share index maps built in file order, so the full
    entity universe is visible to each split.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "user\titem\tlabel\tsplit":
            raise ParseError(1, f"unexpected header '{header}'")
        rows = []
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(line_no, "expected 4 columns")
            if parts[3] not in SPLIT_NAMES:
                raise ParseError(line_no, f"unknown split '{parts[3]}'")
            rows.append(parts)

    full = parse_interactions(
        ["\t".join(r[:3]) for r in rows],
        ColumnSchema(delimiter="tab", columns=("user", "item", "label")),
        num_classes,
    )
    split_of = np.array([SPLIT_NAMES.index(r[3]) for r in rows], dtype=np.int64)
    out = []
    for s in range(3):
        out.append(full.subset(np.nonzero(split_of == s)[0]))
    return tuple(out)
