import sys

import numpy as np
import pytest
import torch

from loadlens.dataset import SyntheticSpec, generate_synthetic
from loadlens.model import ModelConfig, AdditiveForecaster


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_synthetic():
    spec = SyntheticSpec(length=400, seed=3, seasonal={12: 1.0, 24: 0.3},
                         coupling={"temperature": 1.0}, noise_std=0.1)
    return generate_synthetic(spec)


def tiny_config(**kw):
    base = dict(kernels=(3, 5), P=16, T=4, feature_names=("a", "b", "c"), d_model=8,
                n_layers=1, n_heads=2, ff_dim=16, conv_channels=4, hidden=4, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def random_inputs(cfg, batch=5, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    shape = (batch, cfg.N, cfg.P)
    return (torch.randn(shape, generator=g, dtype=dtype),
            torch.randn(shape, generator=g, dtype=dtype),
            torch.randn((batch, cfg.P, len(cfg.feature_names)), generator=g, dtype=dtype))


def double_model(cfg):
    return AdditiveForecaster(cfg).double().eval()


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
