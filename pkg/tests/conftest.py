import numpy as np
import pytest

from glacnet.autodiff import Tensor


def central_diff(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Plain two-point central differences, perturbing ``x`` in place."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2 * h)
    return grad


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    return float((np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)).max())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def param(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def small_config(**overrides):
    """A few-second training config on the 32-dim synthetic features."""
    from glacnet.config import TrainConfig

    cfg = TrainConfig(epochs=2, batch_size=8)
    cfg.encoder.feature_dim = 32
    cfg.encoder.hidden_size = 8
    cfg.encoder.glocal_dim = 12
    cfg.encoder.dropout = 0.1
    cfg.decoder.embed_dim = 6
    cfg.decoder.max_len = 12
    cfg.sampler.n_samples = 20
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg.sync()
