"""Drug feature tables, pair-vector construction, and fold splitting.

File formats
------------
features.jsonl     first line: {"modalities": [{"name": ..., "width": ...}, ...]}
                   then one record per drug/modality:
                   {"drug_id": str, "modality": str, "indices": [ascending ints]}
interactions.tsv   three tab-separated columns: drug_a, drug_b, event_id
events.tsv         optional: event_id <tab> human-readable name

A drug's dense vector concatenates its modalities in header order; a pair
vector concatenates drug_a's then drug_b's dense vector, so its width is
2 x sum(modality widths). Interactions are stored once per unordered pair;
expand_symmetric() emits both orderings with a shared origin id so fold
splits can keep mirrored orderings together.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    FeatureIndexError,
    ParseError,
    UnknownDrugError,
)


@dataclass(frozen=True)
class Modality:
    name: str
    width: int


class DrugFeatureTable:
    """Sparse binary per-drug features grouped by modality."""

    def __init__(self, modalities):
        if not modalities:
            raise ConfigError("at least one modality is required")
        names = [m.name for m in modalities]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate modality names: {names}")
        for m in modalities:
            if m.width <= 0:
                raise ConfigError(f"modality {m.name!r} has non-positive width")
        self.modalities = list(modalities)
        self._offsets = {}
        offset = 0
        for m in self.modalities:
            self._offsets[m.name] = offset
            offset += m.width
        self.drug_width = offset
        self.drugs = {}

    @property
    def pair_width(self):
        return 2 * self.drug_width

    def add_drug(self, drug_id):
        if drug_id not in self.drugs:
            self.drugs[drug_id] = {m.name: np.empty(0, dtype=np.int64)
                                   for m in self.modalities}

    def set_features(self, drug_id, modality, indices):
        widths = {m.name: m.width for m in self.modalities}
        if modality not in widths:
            raise ConfigError(f"unknown modality {modality!r} for drug {drug_id!r}")
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= widths[modality]):
            raise FeatureIndexError(
                f"drug {drug_id!r}, modality {modality!r}: index out of [0, {widths[modality]})"
            )
        self.add_drug(drug_id)
        self.drugs[drug_id][modality] = np.sort(idx)

    def dense_vector(self, drug_id):
        if drug_id not in self.drugs:
            raise UnknownDrugError(f"unknown drug id {drug_id!r}")
        vec = np.zeros(self.drug_width)
        for m in self.modalities:
            idx = self.drugs[drug_id][m.name]
            if idx.size:
                vec[self._offsets[m.name] + idx] = 1.0
        return vec


@dataclass(frozen=True)
class PairSample:
    """An ordered drug pair with its event class; origin identifies the
    unordered pair for fold grouping."""

    drug_a: str
    drug_b: str
    event: int
    origin: tuple = None

    def __post_init__(self):
        if self.drug_a == self.drug_b:
            raise ConfigError(f"self-pair {self.drug_a!r}")
        if self.origin is None:
            object.__setattr__(self, "origin", pair_origin(self.drug_a, self.drug_b))


def pair_origin(a, b):
    return (a, b) if a <= b else (b, a)


@dataclass
class PairDataset:
    """A feature table plus the base (unordered) labeled pairs."""

    table: DrugFeatureTable
    pairs: list
    n_classes: int


def load_drug_features(path):
    path = Path(path)
    with path.open() as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ParseError("empty features file", line=1)
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad header JSON: {exc}", line=1) from exc
        mods = header.get("modalities")
        if not isinstance(mods, list) or not mods:
            raise ParseError('header must declare {"modalities": [...]}', line=1)
        try:
            table = DrugFeatureTable([Modality(m["name"], int(m["width"])) for m in mods])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad modality declaration: {exc}", line=1) from exc
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad record JSON: {exc}", line=lineno) from exc
            try:
                drug_id, modality, indices = rec["drug_id"], rec["modality"], rec["indices"]
            except (KeyError, TypeError) as exc:
                raise ParseError(f"record missing field: {exc}", line=lineno) from exc
            if not isinstance(drug_id, str) or not isinstance(indices, list):
                raise ParseError("drug_id must be a string and indices a list", line=lineno)
            if any((not isinstance(i, int)) or isinstance(i, bool) for i in indices):
                raise ParseError("indices must be integers", line=lineno)
            if indices != sorted(indices) or len(set(indices)) != len(indices):
                raise ParseError("indices must be strictly ascending", line=lineno)
            try:
                table.set_features(drug_id, modality, indices)
            except (ConfigError, FeatureIndexError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return table


def write_drug_features(path, table):
    with Path(path).open("w") as fh:
        header = {"modalities": [{"name": m.name, "width": m.width}
                                 for m in table.modalities]}
        fh.write(json.dumps(header) + "\n")
        for drug_id in sorted(table.drugs):
            for m in table.modalities:
                idx = table.drugs[drug_id][m.name]
                rec = {"drug_id": drug_id, "modality": m.name,
                       "indices": [int(i) for i in idx]}
                fh.write(json.dumps(rec) + "\n")


def load_interactions(path, table=None):
    """Read (drug_a, drug_b, event_id) rows into PairSamples; returns
    (pairs, n_classes). Drug ids are checked against `table` when given."""
    pairs = []
    seen = {}
    max_event = -1
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(f"expected 3 tab-separated columns, got {len(cols)}", line=lineno)
            a, b, ev = cols
            try:
                event = int(ev)
            except ValueError as exc:
                raise ParseError(f"event_id {ev!r} is not an integer", line=lineno) from exc
            if event < 0:
                raise ParseError(f"event_id {event} is negative", line=lineno)
            if a == b:
                raise ParseError(f"self-pair {a!r}", line=lineno)
            if table is not None:
                for drug in (a, b):
                    if drug not in table.drugs:
                        raise ParseError(f"unknown drug id {drug!r}", line=lineno)
            origin = pair_origin(a, b)
            if origin in seen:
                raise ParseError(
                    f"duplicate pair {origin} (first at line {seen[origin]})", line=lineno
                )
            seen[origin] = lineno
            pairs.append(PairSample(a, b, event))
            max_event = max(max_event, event)
    return pairs, max_event + 1


def write_interactions(path, pairs):
    with Path(path).open("w") as fh:
        for p in pairs:
            fh.write(f"{p.drug_a}\t{p.drug_b}\t{p.event}\n")


def load_events(path):
    names = {}
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ParseError("expected event_id<TAB>name", line=lineno)
            try:
                names[int(cols[0])] = cols[1]
            except ValueError as exc:
                raise ParseError(f"event_id {cols[0]!r} is not an integer", line=lineno) from exc
    return names


def load_dataset(directory):
    """Load features.jsonl + interactions.tsv (+ optional events.tsv)."""
    directory = Path(directory)
    table = load_drug_features(directory / "features.jsonl")
    pairs, n_classes = load_interactions(directory / "interactions.tsv", table=table)
    events_path = directory / "events.tsv"
    if events_path.exists():
        names = load_events(events_path)
        if names:
            n_classes = max(n_classes, max(names) + 1)
    return PairDataset(table=table, pairs=pairs, n_classes=n_classes)


def build_pair_vector(table, drug_a, drug_b):
    """Concatenated dense vector [drug_a | drug_b], width 2 x drug width."""
    out = np.empty(table.pair_width)
    out[: table.drug_width] = table.dense_vector(drug_a)
    out[table.drug_width:] = table.dense_vector(drug_b)
    return out


def pair_matrix(table, samples):
    """Stack pair vectors for a sample list; returns (X, y)."""
    x = np.empty((len(samples), table.pair_width))
    y = np.empty(len(samples), dtype=np.int64)
    cache = {}
    for i, s in enumerate(samples):
        for drug in (s.drug_a, s.drug_b):
            if drug not in cache:
                cache[drug] = table.dense_vector(drug)
        x[i, : table.drug_width] = cache[s.drug_a]
        x[i, table.drug_width:] = cache[s.drug_b]
        y[i] = s.event
    return x, y


class PairVectorSource:
    """Lazy stand-in for the dense pair matrix: builds requested rows on the
    fly from the sparse table. Lets paper-scale datasets train in batches
    without materializing n x pair_width float64 up front."""

    def __init__(self, table, samples):
        self.table = table
        self.samples = list(samples)
        self.labels = np.array([s.event for s in self.samples], dtype=np.int64)
        self._cache = {}

    @property
    def shape(self):
        return (len(self.samples), self.table.pair_width)

    def _dense(self, drug):
        if drug not in self._cache:
            self._cache[drug] = self.table.dense_vector(drug)
        return self._cache[drug]

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            idx = np.arange(*idx.indices(len(self.samples)))
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        out = np.empty((idx.size, self.table.pair_width))
        half = self.table.drug_width
        for row, i in enumerate(idx):
            s = self.samples[i]
            out[row, :half] = self._dense(s.drug_a)
            out[row, half:] = self._dense(s.drug_b)
        return out


def expand_symmetric(pairs):
    """Emit both orderings of every pair; origin ids are preserved so the
    two orderings stay identifiable as one unordered pair."""
    out = []
    for p in pairs:
        out.append(p)
        out.append(PairSample(p.drug_b, p.drug_a, p.event, origin=p.origin))
    return out


@dataclass
class FoldSplit:
    """Assignment of unordered pairs to folds."""

    k: int
    assignment: dict = field(default_factory=dict)

    def fold_of(self, sample):
        return self.assignment[sample.origin]

    def train_samples(self, pairs, fold):
        return [p for p in pairs if self.assignment[p.origin] != fold]

    def test_samples(self, pairs, fold):
        return [p for p in pairs if self.assignment[p.origin] == fold]


def stratified_kfold(pairs, k, seed):
    """Stratify unordered pairs by event class into k folds.

    Per class the fold counts differ by at most one; members of small
    classes land in distinct folds; both orderings of a pair share a fold
    (assignment is keyed on the unordered origin). Deterministic under seed.
    """
    if k < 2:
        raise ConfigError(f"need k >= 2 folds, got {k}")
    if not pairs:
        raise ConfigError("no pairs to split")
    origins = {}
    for p in pairs:
        if p.origin in origins and origins[p.origin].event != p.event:
            raise ConfigError(f"conflicting events for pair {p.origin}")
        origins.setdefault(p.origin, p)
    if k > len(origins):
        raise ConfigError(f"k={k} exceeds the {len(origins)} distinct pairs")
    rng = np.random.default_rng(seed)
    by_class = {}
    for origin, p in sorted(origins.items()):
        by_class.setdefault(p.event, []).append(origin)
    assignment = {}
    load = np.zeros(k, dtype=np.int64)
    for event in sorted(by_class):
        members = by_class[event]
        order = rng.permutation(len(members))
        start = int(np.argmin(load))  # rotate so remainders balance total fold sizes
        for j, idx in enumerate(order):
            fold = (start + j) % k
            assignment[members[idx]] = fold
            load[fold] += 1
    return FoldSplit(k=k, assignment=assignment)
