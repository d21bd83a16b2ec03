"""The four-headed model: encoder, decoder, classifier, discriminator.

A single encoder forward produces the latent batch shared by all three
heads. The decoder reconstructs the (binary, [0,1]) pair vector under MAE,
the classifier emits log-probabilities under NLL, and the discriminator
scores latent batches as real vs randomly generated under BCE. The
composite objective is

    total = alpha * autoencoder_loss + beta * classifier_loss + gamma * adversarial_loss

with the adversarial term being the sum (not mean) of the real and fake BCE
terms.
"""

from dataclasses import dataclass, field

import numpy as np

from .engine import (
    BatchNorm,
    Dropout,
    Linear,
    LogSoftmax,
    ReLU,
    Sequential,
    Sigmoid,
    bce_loss,
    check_matrix,
    mae_loss,
    nll_loss,
)
from .engine.gradcheck import clear_caches, compare_gradients
from .errors import ConfigError, DegenerateBatchError, MissingStatisticsError

FAKE_LATENT_VARIANTS = ("standard_normal", "empirical_moments")


@dataclass
class ArchSpec:
    """Layer widths and dropout rates of the four sub-networks.

    production() pins the reference widths (enc 4096 -> latent 2048, heads
    512/256); mini() and the explicit constructor scale everything down for
    gradient checks and desk-scale runs.
    """

    input_dim: int
    n_classes: int
    enc_hidden: int = 4096
    latent: int = 2048
    cls_hidden1: int = 512
    cls_hidden2: int = 256
    disc_hidden1: int = 512
    disc_hidden2: int = 256
    enc_dropout1: float = 0.3
    enc_dropout2: float = 0.2
    dec_dropout: float = 0.3
    cls_dropout: float = 0.2

    def __post_init__(self):
        if self.input_dim <= 0:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        for name in ("enc_hidden", "latent", "cls_hidden1", "cls_hidden2",
                     "disc_hidden1", "disc_hidden2"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @classmethod
    def production(cls, input_dim, n_classes):
        return cls(input_dim=input_dim, n_classes=n_classes)

    @classmethod
    def mini(cls, input_dim=12, n_classes=3, dropout=False):
        """Tiny widths (enc 8 -> latent 4) for gradient checks and fast tests."""
        rates = dict(enc_dropout1=0.3, enc_dropout2=0.2, dec_dropout=0.3, cls_dropout=0.2)
        if not dropout:
            rates = {k: 0.0 for k in rates}
        return cls(
            input_dim=input_dim, n_classes=n_classes,
            enc_hidden=8, latent=4,
            cls_hidden1=4, cls_hidden2=3,
            disc_hidden1=4, disc_hidden2=3,
            **rates,
        )

    def without_dropout(self):
        return ArchSpec(**{**self.to_dict(), "enc_dropout1": 0.0, "enc_dropout2": 0.0,
                           "dec_dropout": 0.0, "cls_dropout": 0.0})

    def to_dict(self):
        return {
            "input_dim": self.input_dim, "n_classes": self.n_classes,
            "enc_hidden": self.enc_hidden, "latent": self.latent,
            "cls_hidden1": self.cls_hidden1, "cls_hidden2": self.cls_hidden2,
            "disc_hidden1": self.disc_hidden1, "disc_hidden2": self.disc_hidden2,
            "enc_dropout1": self.enc_dropout1, "enc_dropout2": self.enc_dropout2,
            "dec_dropout": self.dec_dropout, "cls_dropout": self.cls_dropout,
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls(1, 2).to_dict())
        if unknown:
            raise ConfigError(f"unknown architecture fields: {sorted(unknown)}")
        return cls(**d)


def build_encoder(arch, rng):
    return Sequential([
        Linear(arch.input_dim, arch.enc_hidden, rng),
        BatchNorm(arch.enc_hidden),
        ReLU(),
        Dropout(arch.enc_dropout1),
        Linear(arch.enc_hidden, arch.latent, rng),
        BatchNorm(arch.latent),
        ReLU(),
        Dropout(arch.enc_dropout2),
    ])


def build_decoder(arch, rng):
    return Sequential([
        Linear(arch.latent, arch.enc_hidden, rng),
        BatchNorm(arch.enc_hidden),
        ReLU(),
        Dropout(arch.dec_dropout),
        Linear(arch.enc_hidden, arch.input_dim, rng),
        Sigmoid(),
    ])


def build_classifier(arch, rng):
    return Sequential([
        Linear(arch.latent, arch.cls_hidden1, rng),
        BatchNorm(arch.cls_hidden1),
        ReLU(),
        Dropout(arch.cls_dropout),
        Linear(arch.cls_hidden1, arch.cls_hidden2, rng),
        BatchNorm(arch.cls_hidden2),
        ReLU(),
        Linear(arch.cls_hidden2, arch.n_classes, rng),
        LogSoftmax(),
    ])


def build_discriminator(arch, rng):
    return Sequential([
        Linear(arch.latent, arch.disc_hidden1, rng),
        BatchNorm(arch.disc_hidden1),
        ReLU(),
        Linear(arch.disc_hidden1, arch.disc_hidden2, rng),
        BatchNorm(arch.disc_hidden2),
        ReLU(),
        Linear(arch.disc_hidden2, 1, rng),
        Sigmoid(),
    ])


@dataclass
class LossCoefficients:
    alpha: float = 0.5
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")


def combine_losses(coeffs, ae, cls, adv):
    """The one composite-loss expression; every total in the package is
    computed through here so recombination checks are exact."""
    return coeffs.alpha * ae + coeffs.beta * cls + coeffs.gamma * adv


@dataclass
class LossBreakdown:
    autoencoder_loss: float
    classifier_loss: float
    adversarial_loss: float
    total: float


@dataclass
class FakeLatentStrategy:
    """How the discriminator's fake latent batches are generated.

    standard_normal draws i.i.d. N(0,1); empirical_moments matches the
    per-dimension mean/std of the most recently observed real latent batch
    (std guarded away from zero). Samples are detached: no gradient flows
    back through the observed moments.
    """

    variant: str = "standard_normal"
    _mean: np.ndarray = field(default=None, repr=False)
    _std: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.variant not in FAKE_LATENT_VARIANTS:
            raise ConfigError(
                f"unknown fake-latent variant {self.variant!r}; choices {FAKE_LATENT_VARIANTS}"
            )

    def observe(self, real_latent):
        real_latent = check_matrix(real_latent)
        if real_latent.shape[0] < 2:
            raise DegenerateBatchError("need >= 2 real latents to estimate moments")
        self._mean = real_latent.mean(axis=0)
        self._std = np.maximum(real_latent.std(axis=0), 1e-12)

    def sample(self, batch, latent_dim, rng):
        noise = rng.standard_normal((batch, latent_dim))
        if self.variant == "standard_normal":
            return noise
        if self._mean is None:
            raise MissingStatisticsError(
                "empirical_moments sampling requires observe() on a real batch first"
            )
        return self._mean + self._std * noise


def sample_fake_latent(strategy, batch, latent_dim, rng):
    return strategy.sample(batch, latent_dim, rng)


class AdepModel:
    """Parameter container plus the encode/decode/classify/discriminate passes."""

    def __init__(self, arch, rng=None, init_seed=0):
        if rng is None:
            rng = np.random.default_rng(init_seed)
        self.arch = arch
        self.encoder = build_encoder(arch, rng)
        self.decoder = build_decoder(arch, rng)
        self.classifier = build_classifier(arch, rng)
        self.discriminator = build_discriminator(arch, rng)

    def _subnets(self):
        return [
            ("encoder", self.encoder),
            ("decoder", self.decoder),
            ("classifier", self.classifier),
            ("discriminator", self.discriminator),
        ]

    def encode(self, x, train=False, rng=None):
        check_matrix(x, self.arch.input_dim, "encoder input")
        return self.encoder.forward(x, train=train, rng=rng)

    def decode(self, z, train=False, rng=None):
        check_matrix(z, self.arch.latent, "decoder input")
        return self.decoder.forward(z, train=train, rng=rng)

    def classify(self, z, train=False, rng=None):
        check_matrix(z, self.arch.latent, "classifier input")
        return self.classifier.forward(z, train=train, rng=rng)

    def discriminate(self, z, train=False, rng=None):
        check_matrix(z, self.arch.latent, "discriminator input")
        return self.discriminator.forward(z, train=train, rng=rng)

    def predict_proba(self, x, batch_size=512):
        """Eval-mode class probabilities, batched; x may be a dense matrix
        or any row source supporting shape and slicing."""
        n = x.shape[0]
        out = np.empty((n, self.arch.n_classes))
        for start in range(0, n, batch_size):
            chunk = check_matrix(x[start:start + batch_size], self.arch.input_dim)
            out[start:start + batch_size] = np.exp(self.classify(self.encode(chunk)))
        return out

    def predict_latent(self, x, batch_size=512):
        """Eval-mode latent codes, batched."""
        n = x.shape[0]
        out = np.empty((n, self.arch.latent))
        for start in range(0, n, batch_size):
            chunk = check_matrix(x[start:start + batch_size], self.arch.input_dim)
            out[start:start + batch_size] = self.encode(chunk)
        return out

    def named_parameters(self):
        out = []
        for prefix, net in self._subnets():
            out.extend(net.named_params(prefix + "."))
        return out

    def named_buffers(self):
        out = []
        for prefix, net in self._subnets():
            out.extend(net.named_buffers(prefix + "."))
        return out

    def generator_parameters(self):
        """Everything the generator-side step updates: encoder + decoder + classifier."""
        return [(n, p) for n, p in self.named_parameters()
                if not n.startswith("discriminator.")]

    def discriminator_parameters(self):
        return [(n, p) for n, p in self.named_parameters()
                if n.startswith("discriminator.")]

    def zero_grad(self):
        for _, net in self._subnets():
            net.zero_grad()

    def grads(self):
        out = {}
        for prefix, net in self._subnets():
            out.update(net.grads(prefix + "."))
        return out

    def compute_losses(self, x, labels, coeffs, strategy=None, train=False, rng=None):
        """All three loss components from one shared encoder pass.

        The training step skips zero-coefficient heads for RNG alignment;
        this public entry point always evaluates everything.
        """
        if strategy is None:
            strategy = FakeLatentStrategy()
        z = self.encode(x, train=train, rng=rng)
        ae = mae_loss(self.decode(z, train=train, rng=rng), x)
        cls = nll_loss(self.classify(z, train=train, rng=rng), labels)
        if strategy.variant == "empirical_moments":
            strategy.observe(z)
        z_fake = strategy.sample(z.shape[0], self.arch.latent, rng or np.random.default_rng())
        real = bce_loss(self.discriminate(z, train=train, rng=rng), 1.0)
        fake = bce_loss(self.discriminate(z_fake, train=train, rng=rng), 0.0)
        adv = real.value + fake.value
        if train:
            # public evaluation only; drop the pending backward caches
            for _, net in self._subnets():
                clear_caches(net)
        return LossBreakdown(
            autoencoder_loss=ae.value,
            classifier_loss=cls.value,
            adversarial_loss=adv,
            total=combine_losses(coeffs, ae.value, cls.value, adv),
        )


def composite_grad_check(arch=None, coeffs=None, mode="joint", seed=0, h=1e-5,
                         tolerance=1e-4, batch=4, mutate_model=None):
    """Finite-difference check of the full composite objective on a mini model.

    mode "joint": one combined backward; all four sub-networks are checked
    against the total. mode "alternating": the discriminator parameters are
    checked against the real/fake BCE step (latents treated as constants)
    and the generator parameters against alpha*AE + beta*CLS + gamma*fool
    with the discriminator frozen. Dropout must be disabled.

    mutate_model is a negative-control hook: it receives the freshly built
    model before checking (the verification suite injects a corrupted
    backward through it and asserts the check fails).
    """
    if arch is None:
        arch = ArchSpec.mini()
    arch = arch.without_dropout()
    if coeffs is None:
        coeffs = LossCoefficients()
    rng = np.random.default_rng(seed)
    model = AdepModel(arch, rng=rng)
    if mutate_model is not None:
        mutate_model(model)
    x = rng.random((batch, arch.input_dim))
    labels = rng.integers(0, arch.n_classes, size=batch)
    z_fake = rng.standard_normal((batch, arch.latent))

    def clear_all():
        for _, net in model._subnets():
            clear_caches(net)

    if mode == "joint":
        def total():
            z = model.encode(x, train=True)
            ae = mae_loss(model.decode(z, train=True), x).value
            cls = nll_loss(model.classify(z, train=True), labels).value
            adv = (bce_loss(model.discriminate(z, train=True), 1.0).value
                   + bce_loss(model.discriminate(z_fake, train=True), 0.0).value)
            clear_all()
            return combine_losses(coeffs, ae, cls, adv)

        model.zero_grad()
        z = model.encode(x, train=True)
        ae = mae_loss(model.decode(z, train=True), x)
        cls = nll_loss(model.classify(z, train=True), labels)
        real = bce_loss(model.discriminate(z, train=True), 1.0)
        fake = bce_loss(model.discriminate(z_fake, train=True), 0.0)
        model.discriminator.backward(coeffs.gamma * fake.grad)  # fake path: input grad discarded
        gz = model.discriminator.backward(coeffs.gamma * real.grad)
        gz = gz + model.classifier.backward(coeffs.beta * cls.grad)
        gz = gz + model.decoder.backward(coeffs.alpha * ae.grad)
        model.encoder.backward(gz)
        report = compare_gradients(model.grads(), total, model.named_parameters(),
                                   h=h, tolerance=tolerance)
        clear_all()
        return report

    if mode == "alternating":
        # Discriminator step: latents are constants, loss = BCE(real,1)+BCE(fake,0).
        def disc_objective():
            z = model.encode(x, train=True)
            value = (bce_loss(model.discriminate(z, train=True), 1.0).value
                     + bce_loss(model.discriminate(z_fake, train=True), 0.0).value)
            clear_all()
            return value

        model.zero_grad()
        z = model.encode(x, train=True)
        real = bce_loss(model.discriminate(z, train=True), 1.0)
        fake = bce_loss(model.discriminate(z_fake, train=True), 0.0)
        model.discriminator.backward(fake.grad)
        model.discriminator.backward(real.grad)
        disc_grads = {f"discriminator.{k}": g
                      for k, g in model.discriminator.grads().items()}
        # FD perturbs only discriminator params, so the encoder side is constant.
        report = compare_gradients(disc_grads, disc_objective,
                                   model.discriminator_parameters(), h=h,
                                   tolerance=tolerance)
        clear_all()

        # Generator step: discriminator frozen, fooling label 1 on real latents.
        def gen_objective():
            z = model.encode(x, train=True)
            ae = mae_loss(model.decode(z, train=True), x).value
            cls = nll_loss(model.classify(z, train=True), labels).value
            fool = bce_loss(model.discriminate(z, train=True), 1.0).value
            clear_all()
            return combine_losses(coeffs, ae, cls, fool)

        model.zero_grad()
        z = model.encode(x, train=True)
        ae = mae_loss(model.decode(z, train=True), x)
        cls = nll_loss(model.classify(z, train=True), labels)
        fool = bce_loss(model.discriminate(z, train=True), 1.0)
        gz = model.discriminator.backward(coeffs.gamma * fool.grad)
        gz = gz + model.classifier.backward(coeffs.beta * cls.grad)
        gz = gz + model.decoder.backward(coeffs.alpha * ae.grad)
        model.encoder.backward(gz)
        gen_grads = {k: g for k, g in model.grads().items()
                     if not k.startswith("discriminator.")}
        gen_report = compare_gradients(gen_grads, gen_objective,
                                       model.generator_parameters(), h=h,
                                       tolerance=tolerance)
        clear_all()
        report.per_param.update(gen_report.per_param)
        return report

    raise ConfigError(f"unknown adversarial mode {mode!r}")
