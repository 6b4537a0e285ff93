import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import complex_step_gradient, fd_gradient, reference_forward, relative_error, unflatten
from lps_lab.errors import NumericalError, ValidationError
from lps_lab.mlp import (
    AdamHyper,
    AdamState,
    NetSpec,
    ParamSet,
    TrainHyper,
    adam_step,
    forward,
    gradient,
    mse_loss,
    train_batch,
    train_run,
)
from lps_lab.poly_approx import relu_projection


def random_net(rng, activation="relu"):
    depth = int(rng.integers(2, 5))
    widths = (int(rng.integers(1, 3)),) + tuple(int(w) for w in rng.integers(1, 5, depth - 1))
    widths += (int(rng.integers(1, 3)),)
    spec = NetSpec(widths, activation)
    return spec, ParamSet.from_flat(spec, rng.normal(size=spec.num_params))


def test_forward_by_hand():
    # y = 3 relu(x) + relu(-2x) + 0.5
    spec = NetSpec((1, 2, 1))
    p = ParamSet([np.array([[1.0], [-2.0]]), np.array([[3.0, 1.0]])], [np.zeros(2), np.array([0.5])])
    assert forward(spec, p, 2.0)[0] == pytest.approx(3 * 2 + 0.5)
    assert forward(spec, p, -1.0)[0] == pytest.approx(2 + 0.5)


def test_forward_matches_reference_loop():
    rng = np.random.default_rng(0)
    for _ in range(20):
        spec, p = random_net(rng)
        x = rng.uniform(-1, 1, (7, spec.widths[0]))
        np.testing.assert_allclose(forward(spec, p, x), reference_forward(p.weights, p.biases, x), atol=1e-12)


def test_forward_single_vector_shape():
    spec = NetSpec((2, 3, 2))
    p = ParamSet.from_flat(spec, np.arange(spec.num_params, dtype=float) / 10)
    assert forward(spec, p, np.array([0.1, 0.2])).shape == (2,)
    assert forward(spec, p, np.zeros((5, 2))).shape == (5, 2)
    with pytest.raises(ValidationError):
        forward(spec, p, np.zeros((5, 3)))


def test_relu_derivative_at_zero_is_zero():
    spec = NetSpec((1, 1, 1))
    p = ParamSet([np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    g = gradient(spec, p, np.array([[0.0]]), np.array([[1.0]]))
    assert g.weights[0][0, 0] == 0 and g.biases[0][0] == 0


def test_relu_gradient_against_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(30):
        spec, p = random_net(rng)
        x = rng.uniform(-1, 1, (8, spec.widths[0]))
        y = rng.normal(size=(8, spec.widths[-1]))
        g = gradient(spec, p, x, y).flatten()
        fd = fd_gradient(lambda v: mse_loss(spec, ParamSet.from_flat(spec, v), x, y), p.flatten())
        assert relative_error(g, fd).max() < 1e-5


@pytest.mark.parametrize("name", ["tanh", "poly4"])
def test_smooth_gradient_against_complex_step(name):
    # Central differences are too noisy once a degree-4 activation is
    # composed a few times; the complex step is exact to rounding.
    poly = relu_projection(4)
    act = np.tanh if name == "tanh" else (lambda z: np.polynomial.polynomial.polyval(z, poly.monomial_coeffs))
    rng = np.random.default_rng(5)
    for _ in range(15):
        spec, p = random_net(rng, "tanh" if name == "tanh" else poly)
        x = rng.uniform(-1, 1, (8, spec.widths[0]))
        y = rng.normal(size=(8, spec.widths[-1]))

        def loss(v):
            r = reference_forward(*unflatten(spec.widths, v), x, act) - y
            return np.sum(r * r) / len(x)

        g = gradient(spec, p, x, y).flatten()
        cs = complex_step_gradient(loss, p.flatten())
        assert relative_error(g, cs, floor=1e-300).max() < 1e-9


def reference_adam(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return theta


def test_adam_step_matches_reference():
    spec = NetSpec((1, 2, 1))
    rng = np.random.default_rng(3)
    p = ParamSet.from_flat(spec, rng.normal(size=spec.num_params))
    grads = [rng.normal(size=spec.num_params) for _ in range(3)]
    state = AdamState.fresh(spec.num_params)
    cur = p
    for g in grads:
        state, cur = adam_step(state, cur, ParamSet.from_flat(spec, g), AdamHyper(lr=0.01))
    np.testing.assert_allclose(cur.flatten(), reference_adam(p.flatten(), grads, lr=0.01), rtol=1e-12)
    assert state.t == 3


def test_adam_first_step_is_lr_sign():
    spec = NetSpec((1, 1))
    p = ParamSet.zeros(spec)
    g = ParamSet([np.array([[4.0]])], [np.array([-0.5])])
    _, new = adam_step(AdamState.fresh(2), p, g)
    np.testing.assert_allclose(new.flatten(), [-1e-3, 1e-3], rtol=1e-6)


def test_adam_rejects_nonfinite_gradient():
    spec = NetSpec((1, 1))
    g = ParamSet([np.array([[np.nan]])], [np.zeros(1)])
    with pytest.raises(NumericalError):
        adam_step(AdamState.fresh(2), ParamSet.zeros(spec), g)


def test_linear_fit_converges():
    spec = NetSpec((1, 1))
    x = np.linspace(-1, 1, 21)
    report = train_run(spec, ParamSet.zeros(spec), (x, 2 * x + 1), TrainHyper(lr=0.05, steps=2000))
    assert report.final_loss < 1e-8
    assert not report.collapsed
    assert len(report.loss_history) == 2001
    assert report.loss_history[0] == pytest.approx(np.mean((2 * x + 1) ** 2))


def test_zero_network_collapses_on_abs():
    spec = NetSpec((1, 2, 1))
    x = np.linspace(-1, 1, 21)
    y = np.abs(x)
    rep = train_run(spec, ParamSet.zeros(spec), (x, y), TrainHyper(steps=50))
    # Dead hidden layer: only the output bias moves, towards mean(y).
    assert rep.collapsed
    assert rep.final_loss > np.var(y) - 1e-12


def test_nonfinite_run_is_diverged_and_isolated():
    spec = NetSpec((1, 2, 1))
    x = np.linspace(-1, 1, 5)
    good = ParamSet.from_flat(spec, np.full(spec.num_params, 0.3))
    bad = good.copy()
    bad.weights[1][0, 0] = np.inf
    reps = train_batch(spec, [good, bad], (x, x), TrainHyper(steps=20))
    alone = train_run(spec, good, (x, x), TrainHyper(steps=20))
    assert reps[1].diverged and reps[1].collapsed
    assert not reps[0].diverged
    assert reps[0].final_loss == alone.final_loss


def test_batch_equals_individual_runs():
    rng = np.random.default_rng(11)
    spec = NetSpec((1, 3, 3, 1))
    inits = [ParamSet.from_flat(spec, rng.normal(size=spec.num_params)) for _ in range(4)]
    x = np.linspace(-1, 1, 21)
    data = (x, np.sin(3 * x))
    hyper = TrainHyper(steps=200)
    batch = train_batch(spec, inits, data, hyper)
    for p, rep in zip(inits, batch):
        single = train_run(spec, p, data, hyper)
        np.testing.assert_array_equal(rep.loss_history, single.loss_history)


def test_netspec_validation():
    with pytest.raises(ValidationError):
        NetSpec((1,))
    with pytest.raises(ValidationError):
        NetSpec((1, 0, 1))
    with pytest.raises(ValidationError):
        NetSpec((1, 2, 1), "sigmoid")
    assert NetSpec((1, 2, 2, 1)).depth == 3
    assert NetSpec((1, 2, 2, 1)).num_params == 4 + 6 + 3


def test_paramset_check_rejects_shapes():
    spec = NetSpec((1, 2, 1))
    with pytest.raises(ValidationError):
        ParamSet.zeros(NetSpec((1, 3, 1))).check(spec)
    with pytest.raises(ValidationError):
        ParamSet.from_flat(spec, np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=2, max_size=6), st.integers(0, 2**32 - 1))
def test_flatten_roundtrip(widths, seed):
    spec = NetSpec(tuple(widths))
    v = np.random.default_rng(seed).normal(size=spec.num_params)
    p = ParamSet.from_flat(spec, v)
    p.check(spec)
    np.testing.assert_array_equal(p.flatten(), v)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_relu_net_is_positively_homogeneous_without_biases(seed, scale):
    # With zero biases, a ReLU net satisfies y(c x) = c y(x) for c > 0.
    rng = np.random.default_rng(seed)
    spec, p = random_net(rng)
    for b in p.biases:
        b[:] = 0
    x = rng.uniform(-1, 1, (4, spec.widths[0]))
    np.testing.assert_allclose(forward(spec, p, scale * x), scale * forward(spec, p, x), rtol=1e-9, atol=1e-12)
