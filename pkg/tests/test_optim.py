import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glfpinn.autodiff import EvaluationError
from glfpinn.optim import AdamState, LbfgsState, adam_step, lbfgs_run

vec = arrays(np.float64, 5, elements=st.floats(-1e3, 1e3))


def test_adam_first_step_has_lr_magnitude():
    state = AdamState.zeros(4)
    g = np.array([3.0, -0.5, 1e-3, 20.0])
    new, st1 = adam_step(state, np.zeros(4), g)
    assert np.allclose(new, -1e-3 * g / (np.abs(g) + 1e-8))
    assert np.allclose(np.abs(new), 1e-3, rtol=1e-4)
    assert st1.t == 1


def test_adam_zero_gradient_and_determinism():
    state = AdamState.zeros(3)
    p = np.array([1.0, 2.0, 3.0])
    new, st1 = adam_step(state, p, np.zeros(3))
    assert np.array_equal(new, p) and st1.t == 1
    g = np.array([0.1, -0.2, 0.3])
    a = adam_step(st1, p, g)
    b = adam_step(st1, p, g)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1].v, b[1].v)


def test_adam_rejects_bad_gradients():
    with pytest.raises(EvaluationError):
        adam_step(AdamState.zeros(2), np.zeros(2), np.array([np.nan, 0.0]))
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros(2), np.zeros(2), np.zeros(3))


@given(vec, vec, vec)
def test_adam_odd_symmetry(p, g1, g2):
    state = AdamState.zeros(5)
    a, sa = adam_step(state, p, g1)
    a, sa = adam_step(sa, a, g2)
    b, sb = adam_step(state, -p, -g1)
    b, sb = adam_step(sb, b, -g2)
    assert np.array_equal(a, -b)
    assert np.all(sa.v >= 0)


def quadratic(target):
    def f(x):
        d = x - target
        return 0.5 * float(d @ d), d

    return f


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


def test_lbfgs_quadratic():
    rng = np.random.default_rng(0)
    target = rng.standard_normal(10)
    for _ in range(5):
        res = lbfgs_run(LbfgsState(), quadratic(target), rng.standard_normal(10) * 10, 50)
        assert np.linalg.norm(res.x - target) < 1e-8
        assert res.n_iter <= 3


def test_lbfgs_stationary_start():
    res = lbfgs_run(LbfgsState(), quadratic(np.ones(3)), np.ones(3), 10)
    assert res.n_iter == 0 and res.status == "gtol"


def test_lbfgs_rosenbrock():
    res = lbfgs_run(LbfgsState(), rosenbrock, np.array([-1.2, 1.0]), 100)
    assert res.f < 1e-10


def test_lbfgs_armijo_monotone_and_curvature():
    state = LbfgsState(c1=1e-4)
    res = lbfgs_run(state, rosenbrock, np.array([-1.2, 1.0]), 60)
    for alpha, f_old, f_new, slope in res.steps:
        assert f_new <= f_old + state.c1 * alpha * slope
    assert all(b <= a for a, b in zip(res.losses, res.losses[1:]))
    assert all(float(s @ y) > 0 for s, y in zip(state.s, state.y))
    assert len(state.s) <= state.history


def test_lbfgs_history_capacity_and_rejection():
    state = LbfgsState(history=2)
    for i in range(4):
        state.push(np.ones(2) * (i + 1), np.ones(2))
    assert len(state.s) == 2 and state.s[0][0] == 3
    assert not state.push(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))


def test_lbfgs_line_search_failure_is_flagged():
    # gradient that lies about the slope: no step can satisfy the Wolfe conditions
    def f(x):
        return float(x @ x), -x

    res = lbfgs_run(LbfgsState(max_ls_evals=5), f, np.ones(2), 10)
    assert res.status == "line_search_failed"
    assert res.f <= 2.0


def test_lbfgs_aux_comes_from_accepted_point():
    def f(x):
        v, g = quadratic(np.zeros(2))(x)
        return v, g, x.copy()

    res = lbfgs_run(LbfgsState(), f, np.array([1.0, -2.0]), 5)
    assert np.array_equal(res.aux, res.x)
