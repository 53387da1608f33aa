import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from asrlab import mlp
from asrlab.errors import DimensionMismatch, FormatError, LabelOutOfRange

from gradcheck import max_relative_error, random_network


def _toy(seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal([-1, -1], 0.4, (10, 2)), rng.normal([1, 1], 0.4, (10, 2))])
    return X, np.repeat([0, 1], 10)


def _logistic_accuracy(X, y):
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    s = 2 * y - 1

    def nll(w):
        return np.sum(np.logaddexp(0, -s * (A @ w)))

    w = minimize(nll, np.zeros(A.shape[1]), method="BFGS").x
    return np.mean((A @ w > 0) == (y == 1))


def test_config_validation():
    with pytest.raises(ValueError):
        mlp.MlpConfig(n_input=0, n_output=2)
    with pytest.raises(ValueError):
        mlp.MlpConfig(n_input=2, n_output=2, lr=0.0)


def test_init_range():
    m = mlp.init_model(mlp.MlpConfig(n_input=16, n_output=5, n_hidden=9, seed=1))
    assert np.all(np.abs(m.W1) <= 1 / 4) and np.all(np.abs(m.W2) <= 1 / 3)
    assert np.all(m.b1 == 0) and np.all(m.b2 == 0)


def test_forward_formula():
    rng = np.random.default_rng(0)
    m = mlp.MlpModel(rng.standard_normal((4, 3)), rng.standard_normal(4), rng.standard_normal((2, 4)),
                     rng.standard_normal(2))
    x = rng.standard_normal(3)
    h = 1 / (1 + np.exp(-(m.W1 @ x + m.b1)))
    z = m.W2 @ h + m.b2
    np.testing.assert_allclose(mlp.mlp_forward(m, x), np.exp(z) / np.exp(z).sum(), rtol=1e-13)


def test_zero_weights_uniform():
    m = mlp.MlpModel(np.zeros((3, 2)), np.zeros(3), np.zeros((4, 3)), np.zeros(4))
    np.testing.assert_array_equal(mlp.mlp_forward(m, [5.0, -2.0]), 0.25)


def test_equal_logits_half():
    m = mlp.MlpModel(np.ones((2, 2)), np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2))
    np.testing.assert_allclose(mlp.mlp_forward(m, [0.3, 0.3]), [0.5, 0.5], rtol=1e-15)


def test_forward_dimension_mismatch():
    m = mlp.init_model(mlp.MlpConfig(n_input=3, n_output=2))
    with pytest.raises(DimensionMismatch):
        mlp.mlp_forward(m, np.ones(4))
    with pytest.raises(DimensionMismatch):
        mlp.mlp_posteriors(m, np.ones((2, 4)))


@given(st.integers(0, 2 ** 31))
@settings(max_examples=200)
def test_posterior_rows_are_distributions(seed):
    rng = np.random.default_rng(seed)
    I, H, V = (int(v) for v in rng.integers(1, 12, 3))
    m = mlp.MlpModel(rng.normal(0, 3, (H, I)), rng.normal(0, 3, H), rng.normal(0, 3, (V, H)), rng.normal(0, 3, V))
    P = mlp.mlp_posteriors(m, rng.normal(0, 5, (7, I)))
    assert np.all(P >= 0)
    assert np.all(np.abs(P.sum(axis=1) - 1) <= 1e-12)


def test_posteriors_empty_and_single():
    m = mlp.init_model(mlp.MlpConfig(n_input=3, n_output=4, seed=2))
    assert mlp.mlp_posteriors(m, np.zeros((0, 3))).shape == (0, 4)
    x = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(mlp.mlp_posteriors(m, x[None, :])[0], mlp.mlp_forward(m, x))


def test_batch_equals_loop_bitwise():
    rng = np.random.default_rng(3)
    m = mlp.init_model(mlp.MlpConfig(n_input=6, n_output=5, n_hidden=11, seed=3))
    X = rng.standard_normal((40, 6))
    batch = mlp.mlp_posteriors(m, X)
    for i in range(40):
        np.testing.assert_array_equal(batch[i], mlp.mlp_forward(m, X[i]))


@pytest.mark.parametrize("seed", range(20))
def test_gradient_check(seed):
    model, X, y = random_network(seed)
    assert max_relative_error(model, X, y) <= 1e-4


def test_gradient_check_reference_shape():
    model = mlp.init_model(mlp.MlpConfig(n_input=3, n_output=3, n_hidden=4, seed=9))
    rng = np.random.default_rng(9)
    assert max_relative_error(model, rng.standard_normal((4, 3)), rng.integers(0, 3, 4)) <= 1e-4


def test_sgd_step_matches_gradient():
    # one online epoch over one sample equals a manual gradient step
    model, X, y = random_network(4)
    cfg = mlp.MlpConfig(n_input=model.n_input, n_output=model.n_output, n_hidden=model.n_hidden, lr=0.1,
                        epochs=1, standardize_inputs=False)
    _, grads = mlp.loss_and_grad(model, X[:1], y[:1])
    trained = mlp.mlp_train(X[:1], y[:1], cfg, model=model)
    for p, g, q in zip(model.params(), grads, trained.params()):
        np.testing.assert_allclose(q, p - 0.1 * g, atol=1e-14)


def test_separable_toy():
    X, y = _toy()
    assert _logistic_accuracy(X, y) == 1.0
    cfg = mlp.MlpConfig(n_input=2, n_output=2, n_hidden=8, lr=0.01, epochs=200, seed=0)
    m = mlp.mlp_train(X, y, cfg)
    assert mlp.training_accuracy(m, X, y) == 1.0
    assert len(m.loss_history) == 200
    assert all(np.isfinite(m.loss_history))
    assert m.loss_history[-1] < m.loss_history[0]


def test_separable_toy_raw_inputs():
    X, y = _toy()
    cfg = mlp.MlpConfig(n_input=2, n_output=2, n_hidden=8, lr=0.01, epochs=200, seed=0, standardize_inputs=False)
    m = mlp.mlp_train(X, y, cfg)
    assert mlp.training_accuracy(m, X, y) == 1.0
    assert m.loss_history[-1] < m.loss_history[0]


def test_singleton_memorized():
    cfg = mlp.MlpConfig(n_input=3, n_output=4, n_hidden=5, lr=0.5, epochs=200, seed=1)
    m = mlp.mlp_train(np.array([[0.2, -0.4, 1.0]]), [2], cfg)
    assert mlp.mlp_forward(m, [0.2, -0.4, 1.0])[2] >= 0.99


def test_standardization_folds_back():
    # the returned model must consume raw inputs: its loss on raw data equals the last recorded loss
    rng = np.random.default_rng(5)
    X = rng.uniform(0, 0.1, (30, 4)) + np.array([0.0, 5.0, -3.0, 0.0])
    y = rng.integers(0, 3, 30)
    m = mlp.mlp_train(X, y, mlp.MlpConfig(n_input=4, n_output=3, n_hidden=6, epochs=5, seed=5))
    assert mlp.mean_loss(m, X, y) == pytest.approx(m.loss_history[-1], rel=1e-10)


def test_constant_column_tolerated():
    X = np.hstack([np.ones((10, 1)), np.random.default_rng(0).standard_normal((10, 2))])
    m = mlp.mlp_train(X, np.arange(10) % 2, mlp.MlpConfig(n_input=3, n_output=2, epochs=3))
    assert all(np.all(np.isfinite(p)) for p in m.params())


def test_minibatch_mode():
    X, y = _toy()
    m = mlp.mlp_train(X, y, mlp.MlpConfig(n_input=2, n_output=2, n_hidden=8, lr=0.1, epochs=100, batch_size=4))
    assert mlp.training_accuracy(m, X, y) == 1.0


def test_label_out_of_range():
    with pytest.raises(LabelOutOfRange):
        mlp.mlp_train(np.zeros((2, 2)), [0, 2], mlp.MlpConfig(n_input=2, n_output=2))
    with pytest.raises(LabelOutOfRange):
        mlp.mlp_train(np.zeros((2, 2)), [-1, 0], mlp.MlpConfig(n_input=2, n_output=2))


def test_deterministic():
    X, y = _toy(1)
    cfg = mlp.MlpConfig(n_input=2, n_output=2, epochs=20, seed=4)
    a, b = mlp.mlp_train(X, y, cfg), mlp.mlp_train(X, y, cfg)
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)
    assert a.loss_history == b.loss_history


def test_model_roundtrip(tmp_path):
    m = mlp.init_model(mlp.MlpConfig(n_input=5, n_output=3, n_hidden=7, seed=2))
    m.loss_history = [1.5, 0.7]
    mlp.save_model(m, tmp_path / "m.model")
    back = mlp.load_model(tmp_path / "m.model")
    for p, q in zip(m.params(), back.params()):
        np.testing.assert_array_equal(p, q)
    mlp.write_loss_csv(m, tmp_path / "loss.csv")
    assert (tmp_path / "loss.csv").read_text().splitlines() == ["epoch,loss", "1,1.5", "2,0.7"]


def test_model_truncated(tmp_path):
    m = mlp.init_model(mlp.MlpConfig(n_input=5, n_output=3, n_hidden=7))
    mlp.save_model(m, tmp_path / "m.model")
    data = (tmp_path / "m.model").read_bytes()
    (tmp_path / "t.model").write_bytes(data[:-8])
    with pytest.raises(FormatError):
        mlp.load_model(tmp_path / "t.model")
