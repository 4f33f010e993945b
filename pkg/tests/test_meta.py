import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import leaf, numeric_grad, rel_err
from mzsr.autograd import Tensor, backward, mul, mul_scalar, sub
from mzsr.config import RunConfig
from mzsr.data import synthetic_corpus
from mzsr.meta import (
    SRTask,
    cfg_loss_weights,
    inner_adapt,
    meta_objective,
    meta_optimize,
    meta_train,
    pretrain,
    sample_task,
    step_loss_weights,
)
from mzsr.network import ArchDescriptor, ModelParams, build, param_count


class QuadTask:
    """Task-train loss 0.5 theta^2, task-test loss 0.5 (theta - c)^2."""

    def __init__(self, c=0.0):
        self.c = c

    def train_loss(self, params):
        (t,) = params
        return mul_scalar(mul(t, t), 0.5)

    def test_loss(self, params):
        (t,) = params
        d = sub(t, Tensor(self.c))
        return mul_scalar(mul(d, d), 0.5)


def meta_grad(theta, alpha, c=0.0, steps=1, first_order=False):
    p = [leaf(theta)]
    loss = meta_objective(p, [QuadTask(c)], alpha, steps, [0.0] * (steps - 1) + [1.0], first_order)
    return loss, backward(loss, p)[0].item()


TINY = RunConfig(depth=3, features=4, patch=16, pairs_per_split=2, task_batch=2, meta_iters=4,
                 pretrain_iters=3, unroll_steps=2, seed=3)


@pytest.fixture(scope="module")
def corpus():
    return synthetic_corpus(4, size=48, seed=0)


# ---- inner loop


def test_inner_adapt_scalar_steps():
    adapted, losses = inner_adapt([leaf(1.0)], QuadTask(), 0.1, 2)
    assert adapted[0][0].item() == pytest.approx(0.9, abs=1e-15)
    assert adapted[1][0].item() == pytest.approx(0.81, abs=1e-15)
    assert losses == pytest.approx([0.5, 0.405])


def test_inner_adapt_zero_lr():
    adapted, _ = inner_adapt([leaf(1.3)], QuadTask(), 0.0, 3)
    assert all(a[0].item() == 1.3 for a in adapted)


def test_inner_adapt_rejects_zero_steps():
    with pytest.raises(ValueError):
        inner_adapt([leaf(1.0)], QuadTask(), 0.1, 0)


# ---- meta-gradient on the scalar toy


def test_meta_objective_value_and_second_order_gradient():
    alpha, theta, c = 0.1, 1.0, 0.0
    loss, g = meta_grad(theta, alpha, c)
    assert loss.item() == pytest.approx(0.5 * ((1 - alpha) * theta - c) ** 2, abs=1e-15)
    assert abs(g - 0.81) <= 1e-9


def test_first_order_drops_the_inner_hessian():
    _, g = meta_grad(1.0, 0.1, first_order=True)
    assert abs(g - 0.9) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(
    alpha=st.floats(0.01, 0.9),
    theta=st.floats(-3, 3, allow_nan=False),
    c=st.floats(-3, 3, allow_nan=False),
)
def test_second_order_factor(alpha, theta, c):
    _, full = meta_grad(theta, alpha, c)
    _, first = meta_grad(theta, alpha, c, first_order=True)
    inner = (1 - alpha) * theta - c
    assert abs(full - (1 - alpha) * inner) <= 1e-9
    assert abs(first - inner) <= 1e-9


def test_meta_objective_alpha_zero_is_plain_test_loss():
    loss = meta_objective([leaf(0.7)], [QuadTask(0.2)], 0.0, 1, [1.0])
    assert loss.item() == pytest.approx(0.5 * 0.5**2, abs=1e-15)


def test_meta_objective_two_steps_closed_form():
    # theta_K = (1-a)^K theta, gradient (1-a)^K * ((1-a)^K theta - c)
    a, th, c = 0.2, 1.5, 0.3
    _, g = meta_grad(th, a, c, steps=2)
    assert abs(g - 0.64 * (0.64 * th - c)) <= 1e-12


def test_meta_objective_errors():
    with pytest.raises(ValueError):
        meta_objective([leaf(1.0)], [], 0.1, 1, [1.0])
    with pytest.raises(ValueError):
        meta_objective([leaf(1.0)], [QuadTask()], 0.1, 2, [1.0])


def test_meta_optimize_converges_to_fixed_point():
    alpha, c = 0.5, 1.0
    theta = meta_optimize(
        [leaf(0.0)], lambda it: [QuadTask(c)], iters=3000, alpha=alpha, beta=0.01, steps=1, weights=lambda it: [1.0]
    )
    assert abs(theta[0].item() - c / (1 - alpha)) < 1e-2


# ---- meta-gradient on a tiny conv network


def _tiny_task(rng):
    arch = ArchDescriptor(depth=2, features=2, in_channels=1, out_channels=1)
    params = build(arch, 11)
    x = rng.uniform(size=(2, 1, 5, 5))
    return arch, params, SRTask(
        kernel=None, mode="direct", scale=2,
        train_lr=x[:1], train_hr=x[:1] + 0.3 * rng.standard_normal((1, 1, 5, 5)),
        test_lr=x[1:], test_hr=x[1:] + 0.3 * rng.standard_normal((1, 1, 5, 5)),
    )


@pytest.mark.parametrize("steps", [1, 2])
def test_meta_gradient_matches_finite_differences(rng, steps):
    arch, params, task = _tiny_task(rng)
    assert param_count(params) <= 50
    alpha = 0.3
    weights = step_loss_weights(0, steps, 10)
    flat = np.concatenate([t.data.ravel() for t in params])
    shapes = [t.shape for t in params]

    def unflatten(v):
        out, i = [], 0
        for s in shapes:
            n = int(np.prod(s))
            out.append(leaf(v[i : i + n].reshape(s)))
            i += n
        return ModelParams(arch, tuple(out))

    def objective(v):
        return meta_objective(unflatten(v), [task], alpha, steps, weights).item()

    p = unflatten(flat)
    grads = backward(meta_objective(p, [task], alpha, steps, weights), list(p))
    analytic = np.concatenate([g.data.ravel() for g in grads])
    assert rel_err(analytic, numeric_grad(objective, flat)) <= 1e-4


# ---- loss weights


def test_loss_weights_schedule():
    np.testing.assert_allclose(step_loss_weights(0, 5, 100), [0.2] * 5)
    np.testing.assert_array_equal(step_loss_weights(100, 5, 100), [0, 0, 0, 0, 1])
    np.testing.assert_array_equal(step_loss_weights(250, 5, 100), [0, 0, 0, 0, 1])
    mid = step_loss_weights(50, 5, 100)
    np.testing.assert_allclose(mid[:-1], 0.1)
    assert mid[-1] == pytest.approx(0.6)


@given(it=st.integers(0, 10_000), k=st.integers(1, 8), horizon=st.floats(0, 5000))
def test_loss_weights_on_simplex(it, k, horizon):
    w = step_loss_weights(it, k, horizon)
    assert len(w) == k
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) <= 1e-12


def test_cfg_loss_weights_horizon_is_half_of_meta_iters():
    cfg = RunConfig(meta_iters=1000)
    np.testing.assert_allclose(cfg_loss_weights(0, cfg), [0.2] * 5)
    np.testing.assert_array_equal(cfg_loss_weights(500, cfg), [0, 0, 0, 0, 1])


# ---- tasks


def test_sample_task_shapes_and_ranges(corpus):
    task = sample_task(corpus, TINY, np.random.default_rng(0))
    for arr in (task.train_lr, task.train_hr, task.test_lr, task.test_hr):
        assert arr.shape == (2, 3, 16, 16)
    assert 0 <= task.kernel.theta <= np.pi
    assert 1 <= task.kernel.lambda2 <= task.kernel.lambda1 <= 2.5 * 2


def test_sample_task_deterministic(corpus):
    a = sample_task(corpus, TINY, np.random.default_rng(9))
    b = sample_task(corpus, TINY, np.random.default_rng(9))
    assert a.kernel == b.kernel
    assert a.train_lr.tobytes() == b.train_lr.tobytes()
    assert a.test_hr.tobytes() == b.test_hr.tobytes()


def test_sample_task_splits_are_disjoint(corpus):
    task = sample_task(corpus, TINY.replace(pairs_per_split=4), np.random.default_rng(1))
    for a in task.train_hr:
        for b in task.test_hr:
            assert not np.array_equal(a, b)


def test_sample_task_multi_scale(corpus):
    cfg = TINY.replace(scale_min=2, scale_max=4, patch=24)
    scales = {sample_task(corpus, cfg, np.random.default_rng(s)).scale for s in range(30)}
    assert scales == {2, 3, 4}


def test_task_order_does_not_change_objective(corpus):
    rng = np.random.default_rng(4)
    tasks = [sample_task(corpus, TINY, rng) for _ in range(3)]
    params = build(TINY.arch, 0)
    w = cfg_loss_weights(0, TINY)
    a = meta_objective(params, tasks, 0.01, 2, w).item()
    b = meta_objective(params, tasks[::-1], 0.01, 2, w).item()
    assert abs(a - b) < 1e-12


def test_corpus_errors():
    with pytest.raises(ValueError, match="empty"):
        pretrain([], TINY)
    with pytest.raises(ValueError, match="larger"):
        sample_task([np.zeros((8, 8, 3))], TINY, np.random.default_rng(0))


# ---- pretraining and meta-training loops


def test_pretrain_zero_iters_returns_init(corpus):
    cfg = TINY.replace(pretrain_iters=0)
    p = pretrain(corpus, cfg)
    for a, b in zip(p, build(cfg.arch, cfg.seed)):
        assert a.data.tobytes() == b.data.tobytes()


def test_pretrain_overfits_single_patch():
    patch = synthetic_corpus(1, size=16, seed=5)
    cfg = TINY.replace(features=16, pretrain_iters=500, pretrain_batch=1, pretrain_lr=1e-3)
    log = []
    pretrain(patch, cfg, progress=lambda it, loss: log.append(loss))
    assert log[-1] < 0.1 * log[0]


def test_pretrain_deterministic(corpus):
    a = pretrain(corpus, TINY)
    b = pretrain(corpus, TINY)
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a, b))


def test_meta_train_zero_iters_is_identity(corpus):
    theta_t = build(TINY.arch, 1)
    theta_m = meta_train(theta_t, corpus, TINY.replace(meta_iters=0))
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(theta_t, theta_m))


def test_meta_train_deterministic_and_checkpoints(corpus):
    theta_t = build(TINY.arch, 1)
    seen = []
    a = meta_train(theta_t, corpus, TINY, checkpoint=lambda it, p: seen.append(it))
    b = meta_train(theta_t, corpus, TINY)
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a, b))
    assert seen == [1, 2, 3, 4]
    assert any(x.data.tobytes() != y.data.tobytes() for x, y in zip(a, theta_t))
