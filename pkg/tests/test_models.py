"""Adam, training loop, linear regression, k-NN, forest, checkpoints and the model registry."""

import math
import struct
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwacm import FormatError, InvalidArgument, NumericError
from uwacm import channel as ch
from uwacm import evaluation as E
from uwacm import experiments as X
from uwacm import models as M
from uwacm.models import checkpoint as ck
from uwacm.models.dense import DenseNet
from uwacm.models.forest import ForestHyper, best_split, fit_tree, rf_fit
from uwacm.models.knn import knn_fit, knn_predict, neighbors, select_k
from uwacm.models.linear import linreg_fit
from uwacm.models.lstm import LSTMNet
from uwacm.models.optim import AdamState, adam_step
from uwacm.models.training import TrainHyper, train


# ---------------------------------------------------------------- Adam

def adam_reference(theta, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Plain-float Adam on f(theta) = theta^2."""
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = 2.0 * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        out.append(theta)
    return out


@pytest.mark.parametrize("lr", [1e-3, 0.1])
def test_adam_matches_scalar_trajectory(lr):
    params = {"theta": np.array([1.0])}
    state = AdamState(lr=lr)
    ref = adam_reference(1.0, 10, lr=lr)
    for t in range(10):
        adam_step(state, params, {"theta": 2.0 * params["theta"]})
        assert abs(params["theta"][0] - ref[t]) < 1e-9
    assert state.t == 10


@pytest.mark.parametrize("theta0", [1.0, -3.0, 0.05, 250.0])
def test_adam_first_step_is_lr(theta0):
    lr = 1e-3
    params = {"theta": np.array([theta0])}
    adam_step(AdamState(lr=lr), params, {"theta": 2.0 * params["theta"]})
    step = abs(params["theta"][0] - theta0)
    assert abs(step - lr) < lr * 1e-6


def test_adam_first_step_eps_shrinkage():
    # for tiny gradients the step is lr * |g| / (|g| + eps), exactly
    g = 2e-3
    params = {"theta": np.array([g / 2])}
    adam_step(AdamState(lr=1e-3), params, {"theta": np.array([g])})
    assert abs(g / 2 - params["theta"][0]) == pytest.approx(1e-3 * g / (g + 1e-8), rel=1e-12)


def test_adam_zero_gradient_is_noop_and_nan_rejected():
    params = {"w": np.ones(3)}
    adam_step(AdamState(), params, {"w": np.zeros(3)})
    assert np.array_equal(params["w"], np.ones(3))
    with pytest.raises(NumericError):
        adam_step(AdamState(), params, {"w": np.array([0.0, np.nan, 0.0])})
    assert np.array_equal(params["w"], np.ones(3))


def test_adam_vector_matches_per_entry_scalar():
    start = np.array([1.0, -2.0, 0.5])
    params = {"w": start.copy()}
    state = AdamState(lr=0.01)
    for _ in range(7):
        adam_step(state, params, {"w": 2.0 * params["w"]})
    for j, s in enumerate(start):
        assert params["w"][j] == pytest.approx(adam_reference(s, 7, lr=0.01)[-1], abs=1e-12)


# ---------------------------------------------------------------- training

def small_problem(seed=0, n=40):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 6))
    return X, np.tanh(X @ rng.normal(size=(6, 3)))


def test_training_is_deterministic():
    X, Y = small_problem()
    curves = []
    weights = []
    for _ in range(2):
        net = DenseNet.build(6, [8], 3, np.random.default_rng(5))
        net, curve = train(net, X, Y, X, Y, TrainHyper(epochs=5, batch=8, seed=3))
        curves.append(curve.train_loss + curve.val_loss)
        weights.append(b"".join(p.tobytes() for p in net.params().values()))
    assert curves[0] == curves[1] and weights[0] == weights[1]


def test_training_reduces_loss_and_reports_epochs():
    X, Y = small_problem(1)
    seen = []
    net = DenseNet.build(6, [16], 3, np.random.default_rng(0))
    _, curve = train(net, X, Y, hyper=TrainHyper(epochs=30, lr=1e-2, batch=8),
                     on_epoch=lambda e, tr, va: seen.append(e))
    assert len(curve) == 30 and seen == list(range(1, 31))
    assert curve.train_loss[-1] < 0.2 * curve.train_loss[0]
    assert all(math.isnan(v) for v in curve.val_loss)
    assert [r[0] for r in curve.rows()] == list(range(1, 31))


def test_zero_epochs_leaves_weights():
    X, Y = small_problem()
    net = DenseNet.build(6, [4], 3, np.random.default_rng(0))
    before = {k: v.copy() for k, v in net.params().items()}
    _, curve = train(net, X, Y, hyper=TrainHyper(epochs=0))
    assert len(curve) == 0
    assert all(np.array_equal(before[k], v) for k, v in net.params().items())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_diverging_training_raises():
    X, Y = small_problem()
    net = DenseNet.build(6, [4], 3, np.random.default_rng(0))
    with pytest.raises(NumericError):
        train(net, X, Y * 1e200, hyper=TrainHyper(epochs=3, lr=1.0))


def test_training_rejects_bad_inputs():
    net = DenseNet.build(6, [4], 3, np.random.default_rng(0))
    with pytest.raises(InvalidArgument):
        train(net, np.zeros((0, 6)), np.zeros((0, 3)))
    with pytest.raises(InvalidArgument):
        train(net, np.zeros((4, 6)), np.zeros((3, 3)))


def test_lstm_trains_on_sequences():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(32, 3, 4))
    Y = X[:, 0, :2] * 0.5  # target depends on the oldest frame only
    net = LSTMNet.build(4, [12], 2, np.random.default_rng(1))
    _, curve = train(net, X, Y, hyper=TrainHyper(epochs=40, lr=1e-2, batch=8))
    assert curve.train_loss[-1] < 0.3 * curve.train_loss[0]


def test_linear_spec_trains_to_convergence_on_identity_channel():
    """A single linear layer fitted by Adam reaches < 1% training MAPE on the identity channel.

    The passband frames are band-limited (effective rank ~10 of 578), so the
    weak directions converge slowly; the run uses full-batch steps and a
    step-down learning-rate schedule, i.e. it is run to convergence.
    """
    ident = ch.ChannelConfig(None, ((0, 1.0),), noise_snr_db=None, seed=3)
    prep = X.prepare(None, 120, 3, window=1, channel_config=ident)
    tr = prep.parts[0]
    net = DenseNet.build(578, [], 578, np.random.default_rng(0))
    for lr in (1e-3, 3e-4, 1e-4, 3e-5):
        net, curve = train(net, tr.X, tr.Y, hyper=TrainHyper(epochs=2000, lr=lr, batch=len(tr.X)))
    assert curve.train_loss[-1] < curve.train_loss[0]
    assert E.evaluate(net, tr, prep.stats, timestamp="").mape_percent < 1.0


# ---------------------------------------------------------------- linear regression

def test_linreg_recovers_affine_map():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 5))
    W = rng.normal(size=(3, 5))
    b = rng.normal(size=3)
    p = linreg_fit(X, X @ W.T + b)
    assert np.allclose(p.W, W, atol=1e-10) and np.allclose(p.b, b, atol=1e-10)


def test_linreg_identity_and_doubling():
    X = np.random.default_rng(1).normal(size=(50, 4))
    p = linreg_fit(X, X)
    assert np.allclose(p.W, np.eye(4), atol=1e-10) and np.allclose(p.b, 0, atol=1e-12)
    q = linreg_fit(X, 2 * X + 1)
    assert np.allclose(q.predict(X), 2 * X + 1, atol=1e-10)


def test_ridge_matches_gradient_descent_oracle():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 8))
    Y = rng.normal(size=(50, 2))
    lam = 0.1
    p = linreg_fit(X, Y, ridge=lam)
    # independent oracle: gradient descent on the same objective (intercept unpenalised)
    W = np.zeros((2, 8))
    b = np.zeros(2)
    L = 2 * (np.linalg.norm(np.c_[X, np.ones(50)], 2) ** 2 + lam)
    for _ in range(20_000):
        r = X @ W.T + b - Y
        W -= (2 * r.T @ X + 2 * lam * W) / L
        b -= 2 * r.sum(axis=0) / L
    assert np.max(np.abs(p.W - W)) < 1e-5 and np.max(np.abs(p.b - b)) < 1e-5
    q = linreg_fit(X, Y, ridge=lam, method="lstsq")
    assert np.allclose(p.W, q.W, atol=1e-9)


def test_linreg_underdetermined_needs_ridge_or_lstsq():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(5, 12))
    with pytest.raises(InvalidArgument):
        linreg_fit(X, X)
    p = linreg_fit(X, X, method="lstsq")
    assert np.max(np.abs(p.predict(X) - X)) < 1e-10  # exact interpolation
    assert np.all(np.isfinite(linreg_fit(X, X, ridge=1e-3).W))


def test_linreg_singular_normal_equations():
    X = np.ones((20, 3))  # centred design is all zeros
    with pytest.raises(NumericError):
        linreg_fit(X, X)


def test_linreg_errors_and_windows():
    with pytest.raises(InvalidArgument):
        linreg_fit(np.zeros((3, 2)), np.zeros((3, 2)), ridge=-1)
    with pytest.raises(InvalidArgument):
        linreg_fit(np.zeros((3, 2)), np.zeros((3, 2)), method="qr")
    X = np.random.default_rng(0).normal(size=(30, 3))
    p = linreg_fit(X, X)
    seq = np.stack([X * 0 + 9, X], axis=1)
    assert np.allclose(p.predict(seq), p.predict(X))
    with pytest.raises(InvalidArgument):
        p.predict(np.zeros((2, 4)))


# ---------------------------------------------------------------- k-NN

def brute_neighbors(X, q, k):
    d = [(float(np.sum((x - q) ** 2)), i) for i, x in enumerate(X)]
    return [i for _, i in sorted(d)[:k]]


@pytest.mark.parametrize("k", [1, 3, 7])
def test_knn_matches_brute_force(k):
    rng = np.random.default_rng(k)
    X = rng.normal(size=(300, 6))
    Y = rng.normal(size=(300, 2))
    Q = rng.normal(size=(25, 6))
    store = knn_fit(X, Y, k)
    idx = neighbors(store, Q)
    for j, q in enumerate(Q):
        expect = brute_neighbors(X, q, k)
        assert list(idx[j]) == expect
        assert np.allclose(knn_predict(store, Q[j:j + 1])[0], Y[expect].mean(axis=0))


def test_knn_memorises_and_k_equals_n_is_mean():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 5))
    Y = rng.normal(size=(40, 5))
    assert np.array_equal(knn_predict(knn_fit(X, Y, 1), X), Y)
    out = knn_predict(knn_fit(X, Y, 40), rng.normal(size=(3, 5)))
    assert np.allclose(out, Y.mean(axis=0))


def test_knn_ties_prefer_lower_index():
    X = np.array([[1.0], [-1.0], [1.0], [3.0]])
    Y = np.array([[10.0], [20.0], [30.0], [40.0]])
    store = knn_fit(X, Y, 1)
    assert neighbors(store, np.array([[0.0]]))[0, 0] == 0
    assert neighbors(store, np.array([[1.0]]), k=2)[0].tolist() == [0, 2]


def test_knn_ties_survive_shortlist():
    # more exact duplicates than the shortlist margin
    X = np.vstack([np.zeros((100, 3)), np.ones((5, 3))])
    store = knn_fit(X, np.arange(105.0)[:, None], 3)
    assert neighbors(store, np.full((1, 3), 0.1))[0].tolist() == [0, 1, 2]


def test_knn_validation():
    with pytest.raises(InvalidArgument):
        knn_fit(np.zeros((3, 2)), np.zeros((3, 2)), 4)
    with pytest.raises(InvalidArgument):
        knn_fit(np.zeros((3, 2)), np.zeros((3, 2)), 0)
    store = knn_fit(np.zeros((3, 2)), np.zeros((3, 2)), 1)
    with pytest.raises(InvalidArgument):
        store.predict(np.zeros((1, 3)))


def test_select_k_uses_score():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 3))
    Y = X.copy()
    best, results = select_k(X, Y, X, Y, lambda a, f: float(np.mean((a - f) ** 2)))
    assert best.k == 1 and results[1] == 0.0 and set(results) == {1, 3, 5, 9}


# ---------------------------------------------------------------- forest

def test_best_split_matches_exhaustive_scan():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 1))
    Y = rng.normal(size=(30, 2))
    gain, j, thr = best_split(x, Y, 1)
    xs = np.sort(x[:, 0])
    best = None
    for a, b in zip(xs[:-1], xs[1:]):
        t = 0.5 * (a + b)
        L, R = Y[x[:, 0] <= t], Y[x[:, 0] > t]
        sse = ((L - L.mean(0)) ** 2).sum() + ((R - R.mean(0)) ** 2).sum()
        if best is None or sse < best[0]:
            best = (sse, t)
    total = ((Y - Y.mean(0)) ** 2).sum()
    assert thr == pytest.approx(best[1]) and gain == pytest.approx(total - best[0])


def test_depth_one_tree_is_a_threshold_split():
    x = np.linspace(0, 1, 20)[:, None]
    Y = np.where(x < 0.52, 1.0, 5.0)
    tree = fit_tree(x, Y, ForestHyper(max_depth=1, min_leaf=1, feature_fraction=1.0),
                    np.random.default_rng(0))
    assert tree.depth == 1
    assert np.array_equal(tree.predict(x), Y)


def test_forest_memorises_without_bootstrap():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 4))
    Y = rng.normal(size=(50, 3))
    f = rf_fit(X, Y, ForestHyper(n_trees=3, max_depth=None, min_leaf=1, feature_fraction=1.0,
                                 bootstrap=False))
    assert np.allclose(f.predict(X), Y)


def test_forest_predictions_within_label_range_and_depth():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 5))
    Y = rng.normal(size=(80, 2))
    f = rf_fit(X, Y, ForestHyper(n_trees=5, max_depth=3))
    out = f.predict(rng.normal(size=(30, 5)) * 10)
    assert np.all(out >= Y.min(axis=0) - 1e-12) and np.all(out <= Y.max(axis=0) + 1e-12)
    assert all(t.depth <= 3 for t in f.trees)


def test_forest_thread_count_does_not_change_result():
    X, Y = small_problem(3, 60)
    a = rf_fit(X, Y, ForestHyper(n_trees=4, seed=7), threads=1)
    b = rf_fit(X, Y, ForestHyper(n_trees=4, seed=7), threads=3)
    assert np.array_equal(a.predict(X), b.predict(X))


@pytest.mark.parametrize("bad", [dict(n_trees=0), dict(max_depth=0), dict(min_leaf=0),
                                 dict(feature_fraction=0.0)])
def test_forest_hyper_validation(bad):
    with pytest.raises(InvalidArgument):
        rf_fit(np.zeros((4, 2)), np.zeros((4, 2)), ForestHyper(**bad))


# ---------------------------------------------------------------- checkpoints

def fitted_models():
    X, Y = small_problem(5, 30)
    rng = np.random.default_rng(0)
    seq = np.stack([X, X], axis=1)
    return [
        (linreg_fit(X, Y, 1e-3), X),
        (knn_fit(X, Y, 3), X),
        (rf_fit(X, Y, ForestHyper(n_trees=2, max_depth=3)), X),
        (DenseNet.build(6, [5, 4], 3, rng, kind="dnn4"), X),
        (LSTMNet.build(6, [4, 4], 3, rng, kind="lstm2"), seq),
    ]


def test_checkpoint_round_trips_bitwise(tmp_path):
    for model, X in fitted_models():
        path = tmp_path / f"{model.kind}.uwam"
        ck.save(model, path, run={"seed": 3})
        back, run = ck.load_with_run(path)
        assert type(back) is type(model) and run == {"seed": 3}
        assert back.predict(X).tobytes() == model.predict(X).tobytes()
        assert not list(tmp_path.glob("*.tmp*"))


def test_checkpoint_layout():
    buf = ck.to_bytes("linreg", {"a": 1}, {"W": np.eye(2), "i": np.arange(3)})
    assert buf[:4] == b"UWAM" and struct.unpack_from("<I", buf, 4)[0] == 1
    assert struct.unpack("<Q", buf[-8:])[0] == sum(buf[:-8]) % 2**64
    kind, config, arrays = ck.from_bytes(buf)
    assert kind == "linreg" and config == {"a": 1}
    assert arrays["i"].dtype == np.int64 and np.array_equal(arrays["W"], np.eye(2))


def test_checkpoint_format_errors():
    buf = ck.to_bytes("knn", {}, {"X": np.ones((2, 2))})
    with pytest.raises(FormatError, match="magic"):
        ck.from_bytes(b"ABCD" + buf[4:])
    with pytest.raises(FormatError, match="version"):
        ck.from_bytes(buf[:4] + struct.pack("<I", 9) + buf[8:])
    with pytest.raises(FormatError, match="truncated"):
        ck.from_bytes(buf[:-12])
    with pytest.raises(FormatError):
        ck.from_bytes(buf + b"\0")
    flipped = bytearray(buf)
    flipped[-20] ^= 0x01
    with pytest.raises(FormatError, match="checksum"):
        ck.from_bytes(bytes(flipped))


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.text("abcxyz._", min_size=1, max_size=8),
                       st.tuples(st.integers(0, 3), st.integers(1, 4)), max_size=4))
def test_checkpoint_bytes_property(shapes):
    rng = np.random.default_rng(0)
    arrays = {k: rng.normal(size=s) for k, s in shapes.items()}
    _, _, back = ck.from_bytes(ck.to_bytes("x", {"n": len(arrays)}, arrays))
    assert back.keys() == arrays.keys()
    assert all(back[k].tobytes() == arrays[k].tobytes() and back[k].shape == arrays[k].shape
               for k in arrays)


# ---------------------------------------------------------------- registry

def test_registry_presets():
    assert M.model_names() == ["linreg", "knn", "rf", "mlp", "dnn4", "dnn6", "lstm2", "lstm6"]
    assert M.get_spec("lstm6").hidden == (320,) * 6 and M.get_spec("lstm6").sequence
    assert M.get_spec("dnn4", hidden=64).hidden == (64,) * 3
    assert M.get_spec("linreg", ridge=0.5).options["ridge"] == 0.5
    with pytest.raises(InvalidArgument, match="lstm2"):
        M.get_spec("transformer")


def test_fit_model_handles_frames_and_windows():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 2, 6))
    Y = X[:, -1] * 0.5

    W = SimpleNamespace(Xw=X[:30], Y=Y[:30])
    V = SimpleNamespace(Xw=X[30:], Y=Y[30:])

    hyper = TrainHyper(epochs=2, batch=8)
    for name in ("linreg", "knn", "rf", "mlp", "lstm2"):
        opts = {"n_trees": 2, "max_depth": 2} if name == "rf" else {}
        model, curve = M.fit_model(M.get_spec(name, hidden=4, **opts), W, V, hyper)
        assert model.predict(V.Xw).shape == V.Y.shape
        assert len(curve) == (2 if name in ("mlp", "lstm2") else 0)
    with pytest.raises(InvalidArgument):
        M.fit_model(M.get_spec("knn"), W, None, hyper)
