import numpy as np
import pytest

from ltplab.controllers.datagen import LengthDistribution, TaskSpec, generate
from ltplab.controllers.encoder import EncoderModel, ModelConfig


@pytest.fixture
def tiny_config():
    return ModelConfig(num_layers=2, num_heads=2, d_model=16, d_ffn=32,
                       vocab_size=32, n_max=32, num_classes=2)


@pytest.fixture
def tiny_model(tiny_config):
    return EncoderModel(tiny_config, seed=0)


@pytest.fixture
def tiny_task():
    return TaskSpec(vocab_size=32, num_classes=2, n_signal=1, signal_fraction=0.1,
                    signal_vocab_per_class=4, n_max=32,
                    lengths=LengthDistribution(mean_log=2.5, sigma_log=0.3), seed=0)


@pytest.fixture
def tiny_data(tiny_task):
    return generate(tiny_task, 24, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TINY_OVERRIDES = [
    "data.train_size=40",
    "data.eval_size=24",
    "task.lengths.mean_log=2.5",
    "model.num_layers=2",
    "model.num_heads=2",
    "model.d_model=16",
    "model.d_ffn=32",
    "pretrain.epochs=1",
    "soft.epochs=1",
    "soft.temperature=0.05",
    "hard.epochs=1",
]


@pytest.fixture
def tiny_overrides():
    return list(TINY_OVERRIDES)
