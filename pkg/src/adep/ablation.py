"""Ablation harness: the full model, the model without its discriminator,
and classic classifiers on frozen autoencoder latents — all under identical
folds and seed.

The latent rows share one autoencoder-only training per fold (beta = gamma
= 0, alpha as configured); its eval-mode encoder featurizes the train and
held-out pair vectors for KNN / logistic regression / decision tree /
random forest.
"""

import time
from dataclasses import dataclass, field

from .baselines import BaselineHyper, fit_baseline, predict_baseline
from .data import expand_symmetric, pair_matrix, stratified_kfold
from .metrics import aggregate_reports, evaluate_predictions, render_metrics_table
from .training import train, train_fold

NEURAL_ROWS = ("adep", "adep_no_disc")
LATENT_ROWS = ("latent_knn", "latent_logreg", "latent_tree", "latent_forest")
ROW_LABELS = {
    "adep": "ADEP",
    "adep_no_disc": "ADEP (no discriminator)",
    "latent_knn": "KNN (latent)",
    "latent_logreg": "LR (latent)",
    "latent_tree": "DT (latent)",
    "latent_forest": "RF (latent)",
}


@dataclass
class AblationRow:
    name: str
    label: str
    fold_reports: list
    aggregate: dict
    histories: list = field(default_factory=list)
    models: list = field(default_factory=list)
    seconds: float = 0.0


@dataclass
class AblationResult:
    rows: list
    folds: list
    split: object

    def row(self, name):
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_table(self, averaging="default"):
        return render_metrics_table(
            [(row.label, row.aggregate) for row in self.rows], averaging)

    def to_dict(self):
        return {
            "folds": self.folds,
            "rows": [{
                "name": row.name,
                "label": row.label,
                "aggregate": row.aggregate,
                "fold_reports": [r.to_dict() for r in row.fold_reports],
                "seconds": row.seconds,
            } for row in self.rows],
        }


def run_ablation(config, arch, dataset, split=None, folds=None, baseline_hyper=None,
                 keep_models=False):
    """Six comparison rows over shared folds/seed; `folds` restricts which
    held-out folds are evaluated (default: all k)."""
    if split is None:
        split = stratified_kfold(dataset.pairs, config.k_folds, config.seed)
    if folds is None:
        folds = list(range(split.k))
    if baseline_hyper is None:
        baseline_hyper = BaselineHyper()

    collected = {name: AblationRow(name=name, label=ROW_LABELS[name],
                                   fold_reports=[], aggregate=None)
                 for name in NEURAL_ROWS + LATENT_ROWS}

    no_disc_config = config.replace(discriminator_enabled=False)
    ae_only_config = config.replace(beta=0.0, gamma=0.0, discriminator_enabled=False)

    for fold in folds:
        for name, fold_config in (("adep", config), ("adep_no_disc", no_disc_config)):
            row = collected[name]
            started = time.perf_counter()
            result = train_fold(fold_config, arch, dataset, split, fold)
            row.seconds += time.perf_counter() - started
            row.fold_reports.append(result.report)
            row.histories.append(result.history)
            if keep_models:
                row.models.append(result.model)

        # One autoencoder-only training feeds all four classic rows.
        train_samples = expand_symmetric(split.train_samples(dataset.pairs, fold))
        test_samples = expand_symmetric(split.test_samples(dataset.pairs, fold))
        x_train, y_train = pair_matrix(dataset.table, train_samples)
        x_test, y_test = pair_matrix(dataset.table, test_samples)
        ae_started = time.perf_counter()
        ae_model, _ = train(ae_only_config, arch, x_train, y_train,
                            n_classes=dataset.n_classes)
        ae_seconds = time.perf_counter() - ae_started
        z_train = ae_model.predict_latent(x_train)
        z_test = ae_model.predict_latent(x_test)
        for name, kind in (("latent_knn", "knn"), ("latent_logreg", "logreg"),
                           ("latent_tree", "tree"), ("latent_forest", "forest")):
            row = collected[name]
            started = time.perf_counter()
            model = fit_baseline(kind, z_train, y_train, dataset.n_classes,
                                 hyper=baseline_hyper, seed=config.seed)
            _, probs = predict_baseline(model, z_test)
            row.seconds += (time.perf_counter() - started) + ae_seconds / len(LATENT_ROWS)
            row.fold_reports.append(
                evaluate_predictions(y_test, probs, dataset.n_classes))

    rows = []
    for name in NEURAL_ROWS + LATENT_ROWS:
        row = collected[name]
        row.aggregate = aggregate_reports(row.fold_reports)
        rows.append(row)
    return AblationResult(rows=rows, folds=list(folds), split=split)
