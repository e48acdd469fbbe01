import numpy as np
import pytest
from numpy.testing import assert_allclose

from neural.layers import Parameter
from neural.optim import Adam
from volatility.errors import ShapeMismatch


def test_first_step_moves_by_learning_rate():
    p = Parameter("w", np.array([1.0, -2.0, 0.5]))
    opt = Adam([p], lr=0.01)
    opt.accumulate({"w": np.array([4.0, -0.5, 1e-3])})
    opt.step()
    assert_allclose(p.value, [0.99, -1.99, 0.49], atol=1e-6)


def test_minimises_quadratic():
    target = np.array([0.3, -1.2])
    p = Parameter("w", np.zeros(2))
    opt = Adam([p], lr=0.05)
    for _ in range(2000):
        opt.zero_grad()
        opt.accumulate({"w": 2.0 * (p.value - target)})
        opt.step()
    assert_allclose(p.value, target, atol=1e-3)


def test_accumulate_weights_and_ignores_unknown():
    p = Parameter("w", np.zeros(2))
    opt = Adam([p])
    opt.accumulate({"w": np.ones(2), "other": np.ones(5)}, weight=0.5)
    opt.accumulate({"w": np.ones(2)}, weight=0.5)
    assert_allclose(p.grad, [1.0, 1.0])
    opt.zero_grad()
    assert_allclose(p.grad, [0.0, 0.0])


def test_accumulate_shape_checked():
    opt = Adam([Parameter("w", np.zeros(2))])
    with pytest.raises(ShapeMismatch):
        opt.accumulate({"w": np.ones(3)})


def test_state_dict_restores_trajectory():
    def run(opt, p, steps):
        for _ in range(steps):
            opt.zero_grad()
            opt.accumulate({"w": np.sin(p.value) + 1.0})
            opt.step()

    a = Parameter("w", np.array([0.5, 1.5]))
    opt_a = Adam([a], lr=0.1)
    run(opt_a, a, 3)
    state = opt_a.state_dict()
    assert state["step"] == 3.0
    assert set(state) == {"step", "w.m", "w.v"}

    b = Parameter("w", a.value.copy())
    opt_b = Adam([b], lr=0.1)
    opt_b.load_state_dict(state)
    run(opt_a, a, 4)
    run(opt_b, b, 4)
    assert np.array_equal(a.value, b.value)


def test_rejects_non_positive_learning_rate():
    with pytest.raises(ValueError):
        Adam([Parameter("w", np.zeros(1))], lr=0.0)
