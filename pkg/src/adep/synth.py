"""Desk-scale synthetic dataset generator with controllable imbalance.

Drugs are grouped into clusters; every cluster gets a random prototype bit
pattern per modality and each drug is its cluster prototype with every
position flipped independently with probability flip_prob. Event classes
are keyed on unordered cluster combos, so a pair's concatenated feature
vector carries its class signal and classes are learnably separable. Class
sizes follow counts proportional to (class_index + 1)^-imbalance_exponent.
"""

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .data import DrugFeatureTable, Modality, PairDataset, PairSample
from .errors import ConfigError

DEFAULT_MODALITIES = (("side_effects", 60), ("targets", 40), ("enzymes", 25))


@dataclass
class SynthConfig:
    n_drugs: int = 200
    n_classes: int = 8
    n_pairs: int = 4000
    imbalance_exponent: float = 1.5
    modality_widths: tuple = DEFAULT_MODALITIES
    bit_density: float = 0.2
    flip_prob: float = 0.05
    seed: int = 7

    def __post_init__(self):
        self.modality_widths = tuple((str(n), int(w)) for n, w in self.modality_widths)
        if self.n_drugs < 2 or self.n_classes < 2 or self.n_pairs < 1:
            raise ConfigError("n_drugs, n_classes, n_pairs must be positive (>= 2 drugs/classes)")
        if not 0.0 <= self.flip_prob < 0.5:
            raise ConfigError(f"flip_prob must be in [0, 0.5), got {self.flip_prob}")
        if not 0.0 < self.bit_density <= 1.0:
            raise ConfigError(f"bit_density must be in (0, 1], got {self.bit_density}")
        if self.imbalance_exponent < 0:
            raise ConfigError("imbalance_exponent must be >= 0")
        if any(w <= 0 for _, w in self.modality_widths):
            raise ConfigError("modality widths must be positive")
        max_pairs = self.n_drugs * (self.n_drugs - 1) // 2
        if self.n_pairs > max_pairs:
            raise ConfigError(
                f"{self.n_pairs} pairs requested but only {max_pairs} distinct pairs exist"
            )

    def to_dict(self):
        return {
            "n_drugs": self.n_drugs, "n_classes": self.n_classes,
            "n_pairs": self.n_pairs, "imbalance_exponent": self.imbalance_exponent,
            "modality_widths": [list(m) for m in self.modality_widths],
            "bit_density": self.bit_density, "flip_prob": self.flip_prob,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {f.name for f in cls.__dataclass_fields__.values()}
        if unknown:
            raise ConfigError(f"unknown synth config fields: {sorted(unknown)}")
        if "modality_widths" in d:
            d["modality_widths"] = tuple(tuple(m) for m in d["modality_widths"])
        return cls(**d)


@dataclass
class SynthResult:
    """Generated dataset plus the generator's internal structure (cluster
    membership and prototype positions) for learnability oracles."""

    dataset: PairDataset
    cluster_of_drug: dict
    prototypes: dict  # modality name -> cluster -> sorted index array
    class_combos: dict = field(default_factory=dict)  # class -> [(g1, g2), ...]


def class_pair_counts(n_pairs, n_classes, exponent):
    """Largest-remainder allocation of n_pairs over classes with weights
    (c+1)^-exponent; every class receives at least one pair."""
    weights = (np.arange(1, n_classes + 1, dtype=np.float64)) ** (-exponent)
    raw = n_pairs * weights / weights.sum()
    counts = np.floor(raw).astype(np.int64)
    remainder = raw - counts
    short = n_pairs - counts.sum()
    for idx in np.argsort(-remainder, kind="stable")[:short]:
        counts[idx] += 1
    for c in range(n_classes - 1, -1, -1):  # guarantee non-empty classes
        while counts[c] == 0:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[c] += 1
    return counts


def _cluster_count(n_classes):
    g = 2
    while g * (g + 1) // 2 < n_classes:
        g += 1
    return g


def gen_synthetic(config):
    """Build (table, pairs, n_classes) plus generation metadata; deterministic
    under config.seed."""
    rng = np.random.default_rng(config.seed)
    n_clusters = _cluster_count(config.n_classes)
    if config.n_drugs < 2 * n_clusters:
        raise ConfigError(
            f"{config.n_classes} classes need {n_clusters} clusters; "
            f"n_drugs={config.n_drugs} leaves fewer than 2 drugs per cluster"
        )

    drug_ids = [f"D{i:04d}" for i in range(config.n_drugs)]
    cluster_of_drug = {d: i % n_clusters for i, d in enumerate(drug_ids)}
    members = {g: [d for d in drug_ids if cluster_of_drug[d] == g]
               for g in range(n_clusters)}

    # Per-cluster prototype bits per modality.
    prototypes = {}
    for name, width in config.modality_widths:
        n_bits = max(1, round(width * config.bit_density))
        prototypes[name] = {
            g: np.sort(rng.choice(width, size=n_bits, replace=False))
            for g in range(n_clusters)
        }

    table = DrugFeatureTable([Modality(n, w) for n, w in config.modality_widths])
    for drug in drug_ids:
        g = cluster_of_drug[drug]
        for name, width in config.modality_widths:
            bits = np.zeros(width, dtype=bool)
            bits[prototypes[name][g]] = True
            if config.flip_prob > 0.0:
                bits ^= rng.random(width) < config.flip_prob
            table.set_features(drug, name, np.nonzero(bits)[0])

    # Classes own cluster combos; biggest classes grab the biggest pair pools.
    combos = list(combinations_with_replacement(range(n_clusters), 2))

    def pool_size(combo):
        g1, g2 = combo
        if g1 == g2:
            s = len(members[g1])
            return s * (s - 1) // 2
        return len(members[g1]) * len(members[g2])

    counts = class_pair_counts(config.n_pairs, config.n_classes, config.imbalance_exponent)
    combos_by_size = sorted(combos, key=lambda c: (-pool_size(c), c))
    classes_by_need = sorted(range(config.n_classes), key=lambda c: (-counts[c], c))
    class_combos = {c: [] for c in range(config.n_classes)}
    available = list(combos_by_size)
    for c in classes_by_need:
        got = 0
        while got < counts[c]:
            if not available:
                raise ConfigError(
                    "infeasible synthetic configuration: class pair pools exhausted "
                    f"(class {c} still needs {counts[c] - got} pairs)"
                )
            combo = available.pop(0)
            class_combos[c].append(combo)
            got += pool_size(combo)

    def combo_pairs(combo):
        g1, g2 = combo
        if g1 == g2:
            return [(a, b) for i, a in enumerate(members[g1])
                    for b in members[g1][i + 1:]]
        return [(a, b) for a in members[g1] for b in members[g2]]

    pairs = []
    for c in range(config.n_classes):
        pool = []
        for combo in class_combos[c]:
            pool.extend(combo_pairs(combo))
        take = rng.permutation(len(pool))[: counts[c]]
        for idx in sorted(take):
            a, b = pool[idx]
            pairs.append(PairSample(a, b, int(c)))

    dataset = PairDataset(table=table, pairs=pairs, n_classes=config.n_classes)
    return SynthResult(
        dataset=dataset,
        cluster_of_drug=cluster_of_drug,
        prototypes=prototypes,
        class_combos=class_combos,
    )


def event_names(n_classes):
    return {c: f"event_{c}" for c in range(n_classes)}
