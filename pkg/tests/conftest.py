import numpy as np
import pytest

from adep.data import stratified_kfold
from adep.model import ArchSpec
from adep.synth import SynthConfig, gen_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def mini_arch():
    return ArchSpec.mini()


@pytest.fixture(scope="session")
def tiny_synth():
    """Small separable dataset shared by training-level tests."""
    config = SynthConfig(
        n_drugs=60, n_classes=4, n_pairs=400, imbalance_exponent=1.0,
        modality_widths=(("se", 30), ("tg", 20)), bit_density=0.2,
        flip_prob=0.02, seed=3,
    )
    return gen_synthetic(config)


@pytest.fixture(scope="session")
def tiny_split(tiny_synth):
    return stratified_kfold(tiny_synth.dataset.pairs, 5, seed=0)


@pytest.fixture
def tiny_arch(tiny_synth):
    ds = tiny_synth.dataset
    return ArchSpec(
        input_dim=ds.table.pair_width, n_classes=ds.n_classes,
        enc_hidden=64, latent=32, cls_hidden1=16, cls_hidden2=8,
        disc_hidden1=16, disc_hidden2=8,
    )
