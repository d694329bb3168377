import numpy as np
import pytest

from dualcvae.batch import SceneBatch
from dualcvae.data import SceneWindow
from dualcvae.encoder import EncoderConfig
from dualcvae.model import ModelConfig, SocialDualCVAE, Streams
from dualcvae.patterns import PatternConfig


def tiny_config(dropout: float = 0.0, num_patterns: int = 3) -> ModelConfig:
    return ModelConfig(
        encoder=EncoderConfig(embed_dim=4, num_heads=2, head_dim=2, lstm_hidden=4, pair_hidden=4,
                              dropout_rate=dropout),
        patterns=PatternConfig(num_patterns=num_patterns, temperature=0.1, hidden=4, context_dim=3),
        z_dim=2, latent_hidden=4, decoder_hidden=4, decoder_embed=3)


def toy_window(rng, n=2, t_obs=3, t_pred=3) -> SceneWindow:
    pos = np.cumsum(rng.uniform(-0.5, 0.5, (n, t_obs + t_pred, 2)), axis=1) + rng.uniform(-2, 2, (n, 1, 2))
    return SceneWindow(pos[:, :t_obs], pos[:, t_obs:], list(range(n)), scene="TOY")


def fixed_streams(seed: int = 7) -> Streams:
    return Streams(np.random.default_rng(seed), np.random.default_rng(seed + 1), np.random.default_rng(seed + 2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    return SocialDualCVAE(tiny_config(), np.random.default_rng(0))


@pytest.fixture
def toy_batch():
    r = np.random.default_rng(5)
    return SceneBatch.from_windows([toy_window(r, 2)])


# acceptance lines collected by tests/test_acceptance.py
RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
