"""Training loop for the composite objective, evaluation, and k-fold CV.

Two adversarial routings:

* joint       — one combined backward through alpha*AE + beta*CLS + gamma*ADV;
                gradients reach all four sub-networks, including the
                encoder through the real-sample discriminator term.
* alternating — per batch, a discriminator step on BCE(real=1, fake=0) with
                latents treated as constants, then a generator step on
                alpha*AE + beta*CLS + gamma*BCE(D(z_real), 1) with the
                discriminator frozen.

Zero-coefficient heads are skipped outright (no forward, no RNG draws), so
gamma=0 reduces both modes to the identical plain autoencoder+classifier
trajectory and alpha=beta=0 degenerations stay well-defined.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import expand_symmetric, pair_matrix, stratified_kfold
from .engine import Adam, bce_loss, mae_loss, nll_loss
from .errors import ConfigError, DivergenceError
from .metrics import aggregate_reports, evaluate_predictions
from .model import (
    AdepModel,
    ArchSpec,
    FakeLatentStrategy,
    LossCoefficients,
    combine_losses,
)

ADVERSARIAL_MODES = ("joint", "alternating")


@dataclass
class TrainConfig:
    alpha: float = 0.5
    beta: float = 1.0
    gamma: float = 1.0
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    adversarial_mode: str = "joint"
    fake_latent_strategy: str = "standard_normal"
    discriminator_enabled: bool = True
    k_folds: int = 5
    seed: int = 0
    early_stop_patience: int = None

    def __post_init__(self):
        LossCoefficients(self.alpha, self.beta, self.gamma)  # validates
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (BatchNorm needs 2 rows)")
        if self.adversarial_mode not in ADVERSARIAL_MODES:
            raise ConfigError(
                f"adversarial_mode must be one of {ADVERSARIAL_MODES}, got {self.adversarial_mode!r}"
            )
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1 when set")

    @property
    def coefficients(self):
        return LossCoefficients(self.alpha, self.beta, self.gamma)

    def to_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kwargs):
        return TrainConfig.from_dict({**self.to_dict(), **kwargs})


@dataclass
class EpochRecord:
    epoch: int
    ae_loss: float
    cls_loss: float
    adv_loss: float
    total: float
    disc_loss: float = None
    seconds: float = 0.0
    val_metrics: dict = None

    def to_json_obj(self):
        obj = {"epoch": self.epoch, "ae_loss": self.ae_loss, "cls_loss": self.cls_loss,
               "adv_loss": self.adv_loss, "total": self.total}
        if self.disc_loss is not None:
            obj["disc_loss"] = self.disc_loss
        if self.val_metrics is not None:
            obj["val_metrics"] = self.val_metrics
        return obj


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def to_jsonl(self):
        return "".join(json.dumps(r.to_json_obj(), sort_keys=True) + "\n"
                       for r in self.records)


def rng_streams(seed):
    """Independent generators for init / shuffling / dropout / fake latents.

    Kept as a public helper so an externally built network can replay the
    exact stream consumption of a training run.
    """
    init_ss, shuffle_ss, dropout_ss, fake_ss = np.random.SeedSequence(seed).spawn(4)
    return {
        "init": np.random.default_rng(init_ss),
        "shuffle": np.random.default_rng(shuffle_ss),
        "dropout": np.random.default_rng(dropout_ss),
        "fake": np.random.default_rng(fake_ss),
    }


def _epoch_batches(n, batch_size, shuffle_rng):
    perm = shuffle_rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        if idx.size < 2:  # BatchNorm cannot see a single-row batch
            continue
        yield idx


class _StepRunner:
    """Per-batch forward/backward for one adversarial mode."""

    def __init__(self, model, config):
        self.model = model
        self.config = config
        self.coeffs = config.coefficients
        self.strategy = FakeLatentStrategy(config.fake_latent_strategy)
        self.adv_active = config.discriminator_enabled and config.gamma != 0.0
        opt = dict(lr=config.learning_rate, beta1=config.adam_beta1,
                   beta2=config.adam_beta2, eps=config.adam_eps)
        if config.adversarial_mode == "alternating" and self.adv_active:
            self.gen_opt = Adam(model.generator_parameters(), **opt)
            self.disc_opt = Adam(model.discriminator_parameters(), **opt)
        else:
            self.gen_opt = Adam(model.named_parameters(), **opt)
            self.disc_opt = None

    def _heads_forward(self, xb, yb, rngs):
        """Shared encoder pass plus the non-adversarial heads (skipping
        zero-coefficient ones)."""
        model, coeffs = self.model, self.coeffs
        z = model.encode(xb, train=True, rng=rngs["dropout"])
        ae = cls = None
        if coeffs.alpha != 0.0:
            ae = mae_loss(model.decode(z, train=True, rng=rngs["dropout"]), xb)
        if coeffs.beta != 0.0:
            cls = nll_loss(model.classify(z, train=True, rng=rngs["dropout"]), yb)
        return z, ae, cls

    def _generator_backward(self, z, ae, cls, adv_grad_z):
        """Backprop the generator-side objective into encoder/decoder/classifier."""
        model, coeffs = self.model, self.coeffs
        gz = np.zeros_like(z) if adv_grad_z is None else adv_grad_z
        if cls is not None:
            gz = gz + model.classifier.backward(coeffs.beta * cls.grad)
        if ae is not None:
            gz = gz + model.decoder.backward(coeffs.alpha * ae.grad)
        model.encoder.backward(gz)

    def run(self, xb, yb, rngs):
        """One optimization step; returns (ae, cls, adv, total, disc_loss)."""
        model, coeffs = self.model, self.coeffs
        model.zero_grad()
        z, ae, cls = self._heads_forward(xb, yb, rngs)
        ae_v = ae.value if ae is not None else 0.0
        cls_v = cls.value if cls is not None else 0.0

        if not self.adv_active:
            total = combine_losses(coeffs, ae_v, cls_v, 0.0)
            self._check_finite(total)
            self._generator_backward(z, ae, cls, None)
            self.gen_opt.step(self.model.grads())
            return ae_v, cls_v, 0.0, total, None

        if self.strategy.variant == "empirical_moments":
            self.strategy.observe(z)
        z_fake = self.strategy.sample(z.shape[0], model.arch.latent, rngs["fake"])

        if self.config.adversarial_mode == "joint":
            real = bce_loss(model.discriminate(z, train=True), 1.0)
            fake = bce_loss(model.discriminate(z_fake, train=True), 0.0)
            adv_v = real.value + fake.value
            total = combine_losses(coeffs, ae_v, cls_v, adv_v)
            self._check_finite(total)
            model.discriminator.backward(coeffs.gamma * fake.grad)
            adv_gz = model.discriminator.backward(coeffs.gamma * real.grad)
            self._generator_backward(z, ae, cls, adv_gz)
            self.gen_opt.step(self.model.grads())
            return ae_v, cls_v, adv_v, total, None

        # Alternating: discriminator step first (latents constant) ...
        real = bce_loss(model.discriminate(z, train=True), 1.0)
        fake = bce_loss(model.discriminate(z_fake, train=True), 0.0)
        disc_v = real.value + fake.value
        self._check_finite(disc_v)
        model.discriminator.backward(fake.grad)
        model.discriminator.backward(real.grad)
        self.disc_opt.step({f"discriminator.{k}": g
                            for k, g in model.discriminator.grads().items()})
        model.discriminator.zero_grad()
        # ... then the generator step fools the updated discriminator.
        fool = bce_loss(model.discriminate(z, train=True), 1.0)
        adv_v = fool.value
        total = combine_losses(coeffs, ae_v, cls_v, adv_v)
        self._check_finite(total)
        adv_gz = model.discriminator.backward(coeffs.gamma * fool.grad)
        model.discriminator.zero_grad()  # frozen in this step
        self._generator_backward(z, ae, cls, adv_gz)
        self.gen_opt.step({k: g for k, g in self.model.grads().items()
                           if not k.startswith("discriminator.")})
        return ae_v, cls_v, adv_v, total, disc_v

    def _check_finite(self, value):
        if not np.isfinite(value):
            raise DivergenceError("non-finite loss")


def train(config, arch, x_train, y_train, x_val=None, y_val=None, n_classes=None,
          log_fn=None):
    """Train a fresh model on dense matrices; returns (model, history).

    Validation metrics are recorded per epoch only when a validation set is
    given; early stopping (on validation micro-F1) additionally needs
    config.early_stop_patience.
    """
    if n_classes is None:
        n_classes = arch.n_classes
    if arch.n_classes != n_classes:
        raise ConfigError("architecture n_classes disagrees with the dataset")
    if x_train.shape[1] != arch.input_dim:
        raise ConfigError(
            f"architecture input_dim {arch.input_dim} vs data width {x_train.shape[1]}"
        )
    rngs = rng_streams(config.seed)
    model = AdepModel(arch, rng=rngs["init"])
    runner = _StepRunner(model, config)
    history = TrainHistory()
    best_f1, stale = -np.inf, 0
    n = x_train.shape[0]
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        sums = np.zeros(4)
        disc_sum, batches = 0.0, 0
        for idx in _epoch_batches(n, config.batch_size, rngs["shuffle"]):
            try:
                ae_v, cls_v, adv_v, _, disc_v = runner.run(x_train[idx], y_train[idx], rngs)
            except DivergenceError as exc:
                raise DivergenceError("non-finite loss", epoch=epoch, batch=batches) from exc
            sums += (ae_v, cls_v, adv_v, 0.0)
            if disc_v is not None:
                disc_sum += disc_v
            batches += 1
        means = sums / max(batches, 1)
        record = EpochRecord(
            epoch=epoch,
            ae_loss=means[0], cls_loss=means[1], adv_loss=means[2],
            total=combine_losses(config.coefficients, means[0], means[1], means[2]),
            disc_loss=(disc_sum / batches
                       if runner.disc_opt is not None and batches else None),
            seconds=time.perf_counter() - started,
        )
        if x_val is not None:
            report = evaluate_model(model, x_val, y_val, n_classes)
            record.val_metrics = {"acc": report.acc, "f1_micro": report.f1_micro,
                                  "f1_macro": report.f1_macro}
        history.records.append(record)
        if log_fn is not None:
            log_fn(record)
        if (config.early_stop_patience is not None and x_val is not None):
            f1 = record.val_metrics["f1_micro"]
            if f1 > best_f1:
                best_f1, stale = f1, 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break
    return model, history


def evaluate_model(model, x, y, n_classes, batch_size=512, origins=None,
                   aggregate_pairs=False):
    """Eval-mode metrics report; optionally also averages the two orderings
    of each unordered pair (origins parallel to rows) before scoring."""
    probs = model.predict_proba(x, batch_size=batch_size)
    if aggregate_pairs:
        if origins is None:
            raise ConfigError("aggregate_pairs needs per-row origin ids")
        keys = {}
        for i, o in enumerate(origins):
            keys.setdefault(o, []).append(i)
        rows = sorted(keys)
        agg_probs = np.stack([probs[keys[o]].mean(axis=0) for o in rows])
        agg_y = np.array([y[keys[o][0]] for o in rows])
        return evaluate_predictions(agg_y, agg_probs, n_classes)
    return evaluate_predictions(y, probs, n_classes)


@dataclass
class FoldResult:
    fold: int
    model: AdepModel
    history: TrainHistory
    report: object
    seconds: float


DENSE_BYTES_LIMIT = 1 << 30  # above this the pair matrix stays lazy


def fold_matrices(dataset, split, fold):
    """(x_train, y_train, x_test, y_test) with both orderings expanded;
    falls back to lazy row sources when the dense matrix would be huge."""
    train_samples = expand_symmetric(split.train_samples(dataset.pairs, fold))
    test_samples = expand_symmetric(split.test_samples(dataset.pairs, fold))
    dense_bytes = 8 * len(train_samples) * dataset.table.pair_width
    if dense_bytes > DENSE_BYTES_LIMIT:
        from .data import PairVectorSource

        train_src = PairVectorSource(dataset.table, train_samples)
        test_src = PairVectorSource(dataset.table, test_samples)
        return train_src, train_src.labels, test_src, test_src.labels
    x_train, y_train = pair_matrix(dataset.table, train_samples)
    x_test, y_test = pair_matrix(dataset.table, test_samples)
    return x_train, y_train, x_test, y_test


def train_fold(config, arch, dataset, split, fold, with_validation=False, log_fn=None):
    """Train on every fold but `fold`, evaluate on `fold` (both orderings of
    each held-out pair scored as independent samples)."""
    x_train, y_train, x_test, y_test = fold_matrices(dataset, split, fold)
    started = time.perf_counter()
    if with_validation:
        model, history = train(config, arch, x_train, y_train,
                               x_val=x_test, y_val=y_test,
                               n_classes=dataset.n_classes, log_fn=log_fn)
    else:
        model, history = train(config, arch, x_train, y_train,
                               n_classes=dataset.n_classes, log_fn=log_fn)
    report = evaluate_model(model, x_test, y_test, dataset.n_classes)
    return FoldResult(fold=fold, model=model, history=history, report=report,
                      seconds=time.perf_counter() - started)


@dataclass
class CvResult:
    folds: list
    aggregate: dict


def run_cv(config, arch, dataset, split=None, threads=1):
    """k-fold cross-validation; fold trainings share nothing mutable, so
    they may run on a thread pool."""
    if split is None:
        split = stratified_kfold(dataset.pairs, config.k_folds, config.seed)
    folds = list(range(split.k))
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda f: train_fold(config, arch, dataset, split, f), folds))
    else:
        results = [train_fold(config, arch, dataset, split, f) for f in folds]
    aggregate = aggregate_reports([r.report for r in results])
    return CvResult(folds=results, aggregate=aggregate)
