import math

import numpy as np
import pytest

from ngp import _kernels
from ngp.data import Dataset, one_hot, restrict
from ngp.predictor import (PredictorSpec, TrainedPredictor, TrainingError, constant_baseline_loss,
                           evaluate_loss, fit, predict, subset_loss)

LINEAR = PredictorSpec(family="linear")
BACKENDS = sorted(_kernels.BACKENDS)


def xor_data(J=200, seed=0):
    g = np.random.default_rng(seed)
    X = g.choice([-1.0, 1.0], size=(J, 2)) + 0.1 * g.standard_normal((J, 2))
    t = np.sign(X[:, 0] * X[:, 1])
    return Dataset(X, t)


class TestSpec:
    def test_defaults(self):
        s = PredictorSpec()
        assert (s.family, s.hidden_units, s.epochs, s.learning_rate, s.batch_size) == \
            ("mlp", 500, 10, 0.01, 32)
        assert s.weight_decay == 1e-4 and s.momentum == 0.9

    @pytest.mark.parametrize("kw", [{"hidden_units": 0}, {"epochs": 0}, {"learning_rate": 0.0},
                                    {"loss": "hinge"}, {"family": "svm"}, {"weight_decay": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PredictorSpec(**kw)

    def test_from_dict_rejects_unknown(self):
        with pytest.raises((TypeError, ValueError)):
            PredictorSpec.from_dict({"hiden_units": 3})


class TestLinear:
    def test_exact_coefficient(self):
        x = np.linspace(-2, 2, 30)
        m = fit(LINEAR, Dataset(x.reshape(-1, 1), 3 * x), (0,))
        assert m.params["W"][0, 0] == pytest.approx(3.0, abs=1e-6)
        assert predict(m, [[2.0]])[0, 0] == pytest.approx(6.0, abs=1e-6)

    def test_normal_equations_oracle(self, rng):
        X = rng.standard_normal((40, 4))
        t = rng.standard_normal(40)
        m = fit(LINEAR, Dataset(X, t), (0, 1, 2, 3))
        A = np.column_stack([np.ones(40), X])
        beta = np.linalg.solve(A.T @ A, A.T @ t)
        np.testing.assert_allclose(m.params["b"], beta[:1], atol=1e-8)
        np.testing.assert_allclose(m.params["W"][:, 0], beta[1:], atol=1e-8)

    def test_ridge_shrinks_monotonically(self, rng):
        X = rng.standard_normal((50, 3))
        t = X @ [1.0, -2.0, 0.5] + 0.1 * rng.standard_normal(50)
        norms = [np.linalg.norm(fit(PredictorSpec(family="linear", ridge_lambda=lam),
                                    Dataset(X, t), (0, 1, 2)).params["W"])
                 for lam in (0.0, 0.1, 1.0, 10.0, 1e9)]
        assert all(a >= b for a, b in zip(norms, norms[1:]))
        assert norms[-1] < 1e-8

    def test_rejects_cross_entropy(self):
        d = Dataset(np.ones((4, 1)), one_hot([0, 1, 0, 1], 2))
        with pytest.raises(ValueError):
            fit(PredictorSpec(family="linear", loss="cross_entropy"), d, (0,))


class TestBiasOnly:
    def test_mean_target(self):
        m = fit(LINEAR, Dataset(np.zeros((3, 2)), [1.0, 2.0, 3.0]), ())
        out = predict(m, np.zeros((5, 0)))
        np.testing.assert_array_equal(out, 2.0)

    def test_same_output_everywhere_for_mlp_spec(self):
        m = fit(PredictorSpec(), Dataset(np.random.default_rng(1).normal(size=(6, 2)),
                                         np.arange(6.0)), ())
        out = predict(m, np.zeros((4, 0)))
        assert np.all(out == out[0])

    def test_class_frequency_logits(self):
        labels = np.repeat(np.arange(10), 5)
        d = Dataset(np.zeros((50, 1)), one_hot(labels, 10))
        loss = constant_baseline_loss(d, d, "cross_entropy")
        assert loss == pytest.approx(math.log(10), rel=1e-12)


class TestLosses:
    def model(self, loss="mean_square", q=1):
        spec = PredictorSpec(family="linear" if loss == "mean_square" else "mlp", loss=loss)
        return TrainedPredictor(spec, (), {"b": np.zeros(q)}, 0.0, q)

    def test_perfect_is_zero(self):
        m = fit(LINEAR, Dataset([[1.0], [2.0], [4.0]], [2.0, 4.0, 8.0]), (0,))
        assert evaluate_loss(m, Dataset([[3.0]], [6.0])) == pytest.approx(0.0, abs=1e-20)

    def test_constant_zero_prediction(self):
        assert evaluate_loss(self.model(), Dataset(np.zeros((2, 0)), [1.0, -1.0])) == 1.0

    def test_uniform_cross_entropy(self):
        d = Dataset(np.zeros((3, 0)), one_hot([0, 4, 9], 10))
        assert evaluate_loss(self.model("cross_entropy", 10), d) == pytest.approx(math.log(10))

    @pytest.mark.parametrize("train,val,expected", [([0, 0, 4, 4], [2, 2], 0.0),
                                                    ([0, 4], [0, 4], 4.0)])
    def test_constant_baseline(self, train, val, expected):
        tr = Dataset(np.zeros((len(train), 1)), np.array(train, dtype=float))
        va = Dataset(np.zeros((len(val), 1)), np.array(val, dtype=float))
        assert constant_baseline_loss(tr, va) == expected

    def test_cross_entropy_needs_one_hot(self):
        with pytest.raises(ValueError, match="one-hot"):
            evaluate_loss(self.model("cross_entropy", 2), Dataset(np.zeros((2, 0)),
                                                                 [[0.5, 0.5], [1, 0]]))

    def test_dimension_mismatch(self):
        m = fit(LINEAR, Dataset(np.ones((3, 2)) * [[1], [2], [3]], [1, 2, 3.0]), (0, 1))
        with pytest.raises(ValueError, match="columns"):
            predict(m, np.zeros((2, 3)))


class TestMlp:
    spec = PredictorSpec(hidden_units=32, epochs=60, learning_rate=0.05)

    def test_xor_beats_bias_only(self):
        d = xor_data()
        m = fit(self.spec, d, (0, 1), seed=3)
        base = fit(self.spec, d, ())
        assert evaluate_loss(m, d) < 0.5 * evaluate_loss(base, restrict(d, ()))

    def test_deterministic(self):
        d = xor_data()
        a, b = fit(self.spec, d, (0, 1), seed=5), fit(self.spec, d, (0, 1), seed=5)
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])
        assert a.training_loss == b.training_loss

    def test_classification_rows_sum_to_one(self):
        d = xor_data()
        d = Dataset(d.features, one_hot((d.targets[:, 0] > 0).astype(int), 2))
        spec = PredictorSpec(hidden_units=16, epochs=20, loss="cross_entropy")
        m = fit(spec, d, (0, 1), seed=0)
        probs = predict(m, np.random.default_rng(0).normal(size=(50, 2)) * 100)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_divergence_reports_iteration(self):
        d = Dataset(np.random.default_rng(0).normal(size=(64, 2)) * 1e3,
                    np.random.default_rng(1).normal(size=64) * 1e6)
        with pytest.raises(TrainingError, match="iteration"):
            fit(PredictorSpec(hidden_units=8, learning_rate=10.0, epochs=50), d, (0, 1))

    def test_json_round_trip(self):
        m = fit(PredictorSpec(hidden_units=4, epochs=2), xor_data(20), (1, 0), seed=1)
        back = TrainedPredictor.from_json(m.to_json())
        assert back.feature_set == (1, 0) and back.spec == m.spec
        X = np.random.default_rng(2).normal(size=(5, 2))
        np.testing.assert_array_equal(predict(back, X), predict(m, X))

    def test_subset_loss_restricts(self):
        d = xor_data(40)
        m = fit(PredictorSpec(hidden_units=4, epochs=1), d, (1,), seed=0)
        assert subset_loss(m, d) == evaluate_loss(m, restrict(d, (1,)))


def _params(rng, d=3, h=6, q=2):
    return (rng.normal(size=(d, h)), rng.normal(size=h) * 0.1,
            rng.normal(size=(h, q)), rng.normal(size=q) * 0.1)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("loss_code", [_kernels.MSE, _kernels.CROSS_ENTROPY])
class TestKernels:
    def test_gradient_matches_finite_differences(self, backend, loss_code):
        g = np.random.default_rng(7)
        X = g.normal(size=(5, 3))
        T = g.normal(size=(5, 2)) if loss_code == _kernels.MSE else one_hot([0, 1, 1, 0, 1], 2)
        params = list(_params(g))
        wd = 1e-2
        grad_fn = _kernels.BACKENDS[backend]["mlp_batch_grad"]
        _, *grads = grad_fn(X, T, *params, wd, loss_code)
        h = 1e-6
        for p, gp in zip(params, grads):
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = grad_fn(X, T, *params, wd, loss_code)[0]
                p[idx] = old - h
                down = grad_fn(X, T, *params, wd, loss_code)[0]
                p[idx] = old
                num[idx] = (up - down) / (2 * h)
            rel = np.linalg.norm(num - gp) / max(np.linalg.norm(num), 1e-12)
            assert rel < 1e-4

    def test_weight_decay_term_monotone(self, backend, loss_code):
        g = np.random.default_rng(0)
        X = g.normal(size=(5, 3))
        T = g.normal(size=(5, 2)) if loss_code == _kernels.MSE else one_hot([0, 1, 1, 0, 1], 2)
        params = _params(g)
        grad_fn = _kernels.BACKENDS[backend]["mlp_batch_grad"]
        objs = [grad_fn(X, T, *params, wd, loss_code)[0] for wd in (0.0, 1e-4, 1e-2, 1.0)]
        assert all(a <= b for a, b in zip(objs, objs[1:]))


@pytest.mark.parametrize("loss_code", [_kernels.MSE, _kernels.CROSS_ENTROPY])
def test_backends_agree(loss_code):
    g = np.random.default_rng(11)
    X = g.normal(size=(70, 3))
    T = g.normal(size=(70, 2)) if loss_code == _kernels.MSE else one_hot(g.integers(0, 2, 70), 2)
    order = np.stack([g.permutation(70) for _ in range(4)])
    out = {}
    for name, k in _kernels.BACKENDS.items():
        params = [p.copy() for p in _params(np.random.default_rng(3))]
        losses, bad = k["train_mlp"](X, T, *params, order, 0.01, 0.9, 1e-4, 32, loss_code)
        assert bad == -1
        out[name] = (losses, params)
    np.testing.assert_allclose(out["numba"][0], out["numpy"][0], rtol=1e-10)
    for a, b in zip(out["numba"][1], out["numpy"][1]):
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
