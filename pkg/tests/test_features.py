import numpy as np
import pytest
import torch

from loadlens.errors import IndexOutOfRange, ShapeMismatch
from loadlens.features import (
    FeatureEncoderBank,
    FeatureSignificance,
    combine_features,
    encode_feature,
    feature_significance,
)


def make_bank(k=3, hidden=4, seed=0):
    torch.manual_seed(seed)
    return FeatureEncoderBank([f"f{i}" for i in range(k)], hidden).double()


def test_shape_and_determinism(rng):
    bank = make_bank()
    w = rng.normal(size=12)
    a = encode_feature(bank, 1, w)
    assert a.shape == (12,)
    np.testing.assert_array_equal(a, encode_feature(bank, 1, w))
    np.testing.assert_array_equal(a, encode_feature(make_bank(), "f1", w))


def test_zero_parameters_give_zero_output(rng):
    bank = make_bank()
    with torch.no_grad():
        for p in (*bank.encoders[0].parameters(), *bank.heads[0].parameters()):
            p.zero_()
    np.testing.assert_array_equal(encode_feature(bank, 0, rng.normal(size=9)), 0.0)


def test_bad_index():
    bank = make_bank()
    with pytest.raises(IndexOutOfRange):
        encode_feature(bank, 3, np.zeros(4))
    with pytest.raises(IndexOutOfRange):
        encode_feature(bank, "nope", np.zeros(4))


def test_gamma_cases(rng):
    bank = make_bank()
    x = rng.normal(size=(10, 3))
    with torch.no_grad():
        bank.gamma.zero_()
    np.testing.assert_array_equal(combine_features(bank, x), 0.0)
    with torch.no_grad():
        bank.gamma.copy_(torch.tensor([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(combine_features(bank, x), encode_feature(bank, 1, x[:, 1]), atol=1e-15)
    with torch.no_grad():
        bank.gamma.copy_(torch.tensor([0.3, -0.2, 0.7]))
    once = combine_features(bank, x)
    with torch.no_grad():
        bank.gamma.mul_(2)
    np.testing.assert_allclose(combine_features(bank, x), 2 * once, atol=1e-14)


def test_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        combine_features(make_bank(), rng.normal(size=(10, 2)))


def test_exactly_linear_in_gamma(rng):
    bank = make_bank()
    x = rng.normal(size=(14, 3))
    base = combine_features(bank, x)
    eps = 1e-3
    for q in range(3):
        with torch.no_grad():
            bank.gamma[q] += eps
        moved = combine_features(bank, x)
        with torch.no_grad():
            bank.gamma[q] -= eps
        np.testing.assert_allclose(moved - base, eps * encode_feature(bank, q, x[:, q]), atol=1e-6)


def test_encoders_are_isolated(rng):
    bank = make_bank()
    x = torch.as_tensor(rng.normal(size=(4, 11, 3)))
    reps = bank.representations(x)
    y = x.clone()
    y[..., 2] += torch.as_tensor(rng.normal(size=(4, 11)))
    reps2 = bank.representations(y)
    torch.testing.assert_close(reps[..., :2], reps2[..., :2], rtol=0, atol=0)
    assert not torch.allclose(reps[..., 2], reps2[..., 2])


def test_gamma_gradient_matches_finite_differences(rng):
    for trial in range(5):
        bank = make_bank(seed=trial)
        with torch.no_grad():
            bank.gamma.copy_(torch.as_tensor(rng.normal(size=3)))
        x = torch.as_tensor(rng.normal(size=(3, 9, 3)))
        y = torch.as_tensor(rng.normal(size=(3, 9)))

        def loss():
            return ((bank(x) - y) ** 2).mean()

        bank.zero_grad()
        loss().backward()
        analytic = bank.gamma.grad.clone()
        h = 1e-6
        for q in range(3):
            with torch.no_grad():
                bank.gamma[q] += h
                up = float(loss())
                bank.gamma[q] -= 2 * h
                down = float(loss())
                bank.gamma[q] += h
            fd = (up - down) / (2 * h)
            assert abs(fd - float(analytic[q])) <= 1e-4 * max(abs(fd), abs(float(analytic[q]))) + 1e-10


def test_fresh_bank_initialization():
    sig = feature_significance(make_bank(k=4))
    assert sig.scores == {f"f{i}": 0.25 for i in range(4)}


def test_ranking_by_magnitude():
    scores = {"Temperature": -0.0328, "Dew": -0.0155, "Humidity": -0.3431, "Wind speed": -0.0252,
              "Calendar": -0.4016, "Cloud cover": -0.1839}
    ranking = FeatureSignificance(scores).ranking
    assert ranking[:3] == ["Calendar", "Humidity", "Cloud cover"]
    assert ranking[-1] == "Dew"
