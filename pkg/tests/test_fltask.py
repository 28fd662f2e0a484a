import numpy as np
import pytest

from socflsim import fltask


def test_param_layout():
    assert fltask.param_count(10, 32) == 330
    params = fltask.init_params(10, 32)
    assert params.shape == (330,)
    assert not params.any()


def test_eval_set_is_label_balanced():
    rng = np.random.default_rng(0)
    means = fltask.make_class_means(rng, 4, 8, 1.0)
    x, y = fltask.make_eval_set(rng, means, 100, 0.5)
    assert x.shape == (100, 8)
    assert np.bincount(y, minlength=4).tolist() == [25, 25, 25, 25]


def test_shard_labels_follow_the_class_range():
    rng = np.random.default_rng(1)
    means = fltask.make_class_means(rng, 6, 8, 1.0)
    x, y = fltask.make_shard(rng, means, 64, 0.5, 1.0)
    assert x.shape == (64, 8) and y.shape == (64,)
    assert set(np.unique(y)) <= set(range(6))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for n in (1, 5, 16):       # n=1 covers the single-sample shard
        n_classes, n_features = 3, 4
        params = rng.normal(0, 0.5, fltask.param_count(n_classes, n_features))
        x = rng.normal(0, 1, (n, n_features))
        y = rng.integers(0, n_classes, n)
        _, grad = fltask.loss_and_grad(params, x, y, n_classes)
        eps = 1e-6
        for i in range(len(params)):
            up, dn = params.copy(), params.copy()
            up[i] += eps
            dn[i] -= eps
            fd = (fltask.loss_and_grad(up, x, y, n_classes)[0]
                  - fltask.loss_and_grad(dn, x, y, n_classes)[0]) / (2 * eps)
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_softmax_is_stable_for_large_logits():
    params = np.zeros(fltask.param_count(2, 2))
    params[0] = 1000.0
    x = np.array([[1000.0, 0.0]])
    loss, grad = fltask.loss_and_grad(params, x, np.array([1]), 2)
    assert np.isfinite(loss) and np.all(np.isfinite(grad))


def test_sgd_cycles_through_the_shard_deterministically():
    rng = np.random.default_rng(4)
    means = fltask.make_class_means(rng, 3, 4, 1.0)
    x, y = fltask.make_shard(rng, means, 5, 0.5, 1.0)
    params = fltask.init_params(3, 4)
    # two steps of batch 3 over 5 samples touch indices [0,1,2] then [3,4,0]
    a = fltask.sgd_steps(params, x, y, 2, 0.1, 3, 3)
    manual = params.copy()
    for idx in (np.array([0, 1, 2]), np.array([3, 4, 0])):
        _, g = fltask.loss_and_grad(manual, x[idx], y[idx], 3)
        manual = manual - 0.1 * g
    np.testing.assert_allclose(a, manual, rtol=1e-12)
    assert not params.any()    # input untouched
    np.testing.assert_array_equal(
        a, fltask.sgd_steps(params, x, y, 2, 0.1, 3, 3))


def test_training_separates_an_easy_task():
    rng = np.random.default_rng(5)
    means = fltask.make_class_means(rng, 4, 16, 4.0)
    x, y = fltask.make_shard(rng, means, 256, 100.0, 0.3)
    ex, ey = fltask.make_eval_set(rng, means, 200, 0.3)
    params = fltask.init_params(4, 16)
    params = fltask.sgd_steps(params, x, y, 300, 0.1, 16, 4)
    assert fltask.accuracy(params, ex, ey, 4) > 0.9


def test_fedavg_hand_case():
    a = (np.array([1.0, 3.0]), 1)
    b = (np.array([3.0, 5.0]), 3)
    np.testing.assert_allclose(fltask.fedavg_aggregate([a, b]), [2.5, 4.5])


def test_fedavg_matches_weighted_mean_oracle():
    rng = np.random.default_rng(6)
    for _ in range(200):
        k = int(rng.integers(1, 12))
        deltas = [rng.normal(0, 1, 7) for _ in range(k)]
        counts = [int(rng.integers(1, 500)) for _ in range(k)]
        got = fltask.fedavg_aggregate(list(zip(deltas, counts)))
        expect = np.average(np.stack(deltas), axis=0, weights=counts)
        np.testing.assert_allclose(got, expect, atol=1e-12)


def test_fedavg_validation():
    with pytest.raises(ValueError):
        fltask.fedavg_aggregate([])
    with pytest.raises(ValueError):
        fltask.fedavg_aggregate([(np.zeros(3), 1), (np.zeros(4), 1)])
    with pytest.raises(ValueError):
        fltask.fedavg_aggregate([(np.zeros(3), 0)])
