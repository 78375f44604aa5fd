import numpy as np

from sqlifuzz.optim import AdamState, adam_step


def test_zero_gradient_leaves_params_unchanged():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    state = AdamState.for_params(params, lr=1e-3)
    before = params["w"].copy()
    adam_step(params, {"w": np.zeros(3)}, state)
    assert np.array_equal(params["w"], before)


def test_first_step_moves_by_lr_sign():
    params = {"w": np.array([1.0, -2.0, 3.0, 0.5])}
    g = np.array([0.3, -1.7, 2.0, -0.01])
    state = AdamState.for_params(params, lr=1e-3)
    before = params["w"].copy()
    adam_step(params, {"w": g}, state)
    moved = params["w"] - before
    assert np.max(np.abs(moved - (-1e-3 * np.sign(g)))) < 1e-6


def test_defaults_match_recommended_settings():
    state = AdamState.for_params({"w": np.zeros(1)})
    assert state.beta1 == 0.9
    assert state.beta2 == 0.98
    assert state.eps == 1e-9


def test_converges_on_quadratic_bowl():
    # objective 0.5 * ||w - target||^2; optimum value 0
    target = np.array([3.0, -1.0, 0.5])
    params = {"w": np.zeros(3)}
    state = AdamState.for_params(params, lr=0.1)
    for _ in range(100):
        grads = {"w": params["w"] - target}
        adam_step(params, grads, state)
    value = 0.5 * float(np.sum((params["w"] - target) ** 2))
    assert value < 1e-4


def test_lr_scale_warmup():
    params = {"w": np.array([1.0])}
    state = AdamState.for_params(params, lr=1e-3)
    adam_step(params, {"w": np.array([1.0])}, state, lr_scale=0.5)
    assert abs((1.0 - params["w"][0]) - 0.5e-3) < 1e-9
