import numpy as np
import pytest

from pcg_vae import dataset, vae

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_model():
    """Factory for a 6 -> 4 -> (2, 2) model with randomized parameters."""

    def make(beta=0.0, mode=vae.Mode.BETA_VAE, seed=0, hidden=(4,), scale=0.3):
        model = vae.init_model(beta, seed, mode, input_dim=6, hidden=hidden, latent_dim=2)
        rng = np.random.default_rng(1000 + seed)
        for k, v in model.params.items():
            model.params[k] = v + scale * rng.standard_normal(v.shape)
        for k, v in model.state.items():
            model.state[k] = v + 0.1 * np.abs(rng.standard_normal(v.shape))
        return model

    return make


def make_recording(samples, rid="r", label=dataset.Label.NORMAL, rate=2000, subset="synthetic"):
    return dataset.Recording(rid, subset, np.asarray(samples, dtype=float), rate, label)
