import json

import numpy as np
import pytest

from conftest import central_difference, hand_net, reference_forward, reference_loss, relative_error
from nsr import nn
from nsr.exceptions import InvalidArgumentError, NumericInputError


def test_init_is_deterministic_and_has_four_linear_layers():
    a = nn.mlp_init([4, 64, 64, 64, 1], seed=0)
    b = nn.mlp_init([4, 64, 64, 64, 1], seed=0)
    assert a.params.tobytes() == b.params.tobytes()
    assert len(a.weights) == 4 and len(a.biases) == 4


def test_init_shapes_and_bounds():
    net = nn.mlp_init([2, 3], seed=7)
    assert net.weights[0].shape == (3, 2)
    assert net.biases[0].shape == (3,)
    big = nn.mlp_init([16, 32, 5], seed=1)
    for W, b in zip(big.weights, big.biases):
        bound = 1 / np.sqrt(W.shape[1])
        assert np.all(np.abs(W) <= bound) and np.all(np.abs(b) <= bound)
    assert not np.array_equal(big.params, nn.mlp_init([16, 32, 5], seed=2).params)


@pytest.mark.parametrize("dims", [[], [3], [3, 0, 1], [0, 2]])
def test_init_rejects_bad_dims(dims):
    with pytest.raises(InvalidArgumentError):
        nn.mlp_init(dims, seed=0)


def test_forward_zero_network_gives_zero():
    net = nn.Network([3, 5, 2])
    assert np.array_equal(nn.forward(net, [1.0, -2.0, 3.0]), np.zeros(2))


def test_forward_affine_case():
    net = hand_net([1, 1], [[[2.0]]], [[1.0]])
    assert nn.forward(net, [3.0]).tolist() == [7.0]


def test_forward_two_layer_relu_by_hand():
    # hidden = relu([1*x + 0.5, -2*x - 1]) at x = -1 -> relu([-0.5, 1]) = [0, 1]
    # out = 3*0 + (-4)*1 + 0.25 = -3.75
    net = hand_net([1, 2, 1], [[[1.0], [-2.0]], [[3.0, -4.0]]], [[0.5, -1.0], [0.25]])
    assert nn.forward(net, [-1.0]).tolist() == [-3.75]


def test_forward_tanh_output_by_hand():
    net = hand_net([2, 1], [[[0.5, -1.0]]], [[0.1]], "tanh")
    assert nn.forward(net, [2.0, 0.5])[0] == pytest.approx(np.tanh(0.5 * 2 - 0.5 + 0.1), abs=1e-15)


@pytest.mark.parametrize("act", ["identity", "tanh"])
def test_forward_matches_reference(rng, act):
    net = nn.mlp_init([6, 16, 16, 3], seed=3, output_activation=act)
    X = rng.normal(size=(40, 6))
    np.testing.assert_allclose(nn.forward(net, X), reference_forward(net, X), rtol=1e-13, atol=1e-15)


def test_forward_validates_input():
    net = nn.mlp_init([3, 4, 1], seed=0)
    with pytest.raises(InvalidArgumentError):
        nn.forward(net, [1.0, 2.0])
    with pytest.raises(NumericInputError):
        nn.forward(net, [1.0, np.nan, 0.0])


@pytest.mark.parametrize("kind", ["weighted_mse", "weighted_neg_mean"])
@pytest.mark.parametrize("act", ["identity", "tanh"])
def test_gradients_match_finite_differences(rng, kind, act):
    net = nn.mlp_init([3, 8, 6, 2], seed=11, output_activation=act)
    X = rng.normal(size=(3, 3))
    T = rng.normal(size=(3, 2)) if kind == "weighted_mse" else None
    w = rng.uniform(1, 3, size=3)
    grads, loss = nn.backward_weighted_scalar_loss(net, kind, X, T, w)
    assert loss == pytest.approx(reference_loss(net, kind, X, T, w), rel=1e-12)
    fd = central_difference(lambda: reference_loss(net, kind, X, T, w), net.params)
    err = relative_error(grads.flat, fd)
    assert np.mean(err < 1e-4) >= 0.99


def test_input_gradient_matches_finite_differences(rng):
    net = nn.mlp_init([4, 10, 3], seed=5, output_activation="tanh")
    X = rng.normal(size=(5, 4))
    G = rng.normal(size=(5, 3))
    _, cache = nn.forward_cache(net, X)
    _, dX = nn.backprop(net, cache, G, param_grads=False, input_grad=True)

    def f():
        return float(np.sum(G * reference_forward(net, X)))

    fd = central_difference(f, X.reshape(-1)).reshape(X.shape)
    np.testing.assert_allclose(dX, fd, rtol=1e-6, atol=1e-9)


def test_unit_weights_equal_unweighted_path(rng):
    net = nn.mlp_init([5, 16, 16, 2], seed=2)
    X, T = rng.normal(size=(32, 5)), rng.normal(size=(32, 2))
    for kind, targets in (("weighted_mse", T), ("weighted_neg_mean", None)):
        g1, l1 = nn.backward_weighted_scalar_loss(net, kind, X, targets, np.ones(32))
        g0, l0 = nn.backward_weighted_scalar_loss(net, kind, X, targets, None)
        assert g1.flat.tobytes() == g0.flat.tobytes() and l1 == l0


def test_weight_scaling_is_linear(rng):
    net = nn.mlp_init([5, 16, 16, 2], seed=4)
    X, T = rng.normal(size=(32, 5)), rng.normal(size=(32, 2))
    for kind, targets in (("weighted_mse", T), ("weighted_neg_mean", None)):
        base, _ = nn.backward_weighted_scalar_loss(net, kind, X, targets, np.ones(32))
        two, _ = nn.backward_weighted_scalar_loss(net, kind, X, targets, np.full(32, 2.0))
        three, _ = nn.backward_weighted_scalar_loss(net, kind, X, targets, np.full(32, 3.0))
        # scaling by a power of two is exact in binary floating point
        assert np.array_equal(two.flat, 2 * base.flat)
        np.testing.assert_allclose(three.flat, 3 * base.flat, rtol=1e-12, atol=0)


def test_backward_rejects_bad_inputs(rng):
    net = nn.mlp_init([2, 4, 1], seed=0)
    X = rng.normal(size=(3, 2))
    with pytest.raises(NumericInputError):
        nn.backward_weighted_scalar_loss(net, "weighted_mse", X, np.full((3, 1), np.nan), None)
    with pytest.raises(NumericInputError):
        nn.backward_weighted_scalar_loss(net, "weighted_neg_mean", X, None, [1.0, np.nan, 1.0])
    with pytest.raises(InvalidArgumentError):
        nn.backward_weighted_scalar_loss(net, "weighted_mse", X, None, None)
    with pytest.raises(InvalidArgumentError):
        nn.backward_weighted_scalar_loss(net, "weighted_neg_mean", X, None, [-1.0, 1.0, 1.0])


def test_relu_net_is_locally_linear(rng):
    net = nn.mlp_init([4, 12, 12, 2], seed=9)
    x = rng.normal(size=(1, 4))
    v = rng.normal(size=(1, 4))
    _, cache = nn.forward_cache(net, x)
    # Jacobian-vector product from the reverse pass, one output at a time
    jvp = np.empty(2)
    for k in range(2):
        e = np.zeros((1, 2))
        e[0, k] = 1.0
        _, dx = nn.backprop(net, cache, e, param_grads=False, input_grad=True)
        jvp[k] = (dx @ v.T)[0, 0]
    h = 1e-7
    delta = (reference_forward(net, x + h * v) - reference_forward(net, x))[0] / h
    np.testing.assert_allclose(delta, jvp, atol=1e-6)


def test_adam_first_step_scalar():
    net = hand_net([1, 1], [[[1.0]]], [[0.0]])
    grads = nn.Gradients(net.layer_dims, [1.0, 0.0])
    nn.adam_step(net, grads, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8)
    # independent evaluation of the textbook update
    m, v = 0.1 * 1.0, 0.001 * 1.0
    expected = 1.0 - 0.001 * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
    assert net.weights[0][0, 0] == pytest.approx(expected, abs=1e-15)
    assert net.weights[0][0, 0] == pytest.approx(0.999, abs=1e-9)
    assert net.biases[0][0] == 0.0 and net.step == 1


def test_adam_zero_gradient_and_determinism():
    net = nn.mlp_init([3, 4, 2], seed=1)
    before = net.params.copy()
    nn.adam_step(net, nn.Gradients(net.layer_dims), lr=1e-3)
    assert np.array_equal(net.params, before) and net.step == 1
    a, b = nn.mlp_init([3, 4, 2], seed=1), nn.mlp_init([3, 4, 2], seed=1)
    g = nn.Gradients(a.layer_dims, np.linspace(-1, 1, a.params.size))
    for _ in range(3):
        nn.adam_step(a, g, lr=1e-2)
        nn.adam_step(b, g, lr=1e-2)
    assert a.params.tobytes() == b.params.tobytes()


def test_adam_rejects_mismatch_and_bad_lr():
    net = nn.mlp_init([3, 4, 2], seed=1)
    with pytest.raises(InvalidArgumentError):
        nn.adam_step(net, nn.Gradients([3, 5, 2]), lr=1e-3)
    with pytest.raises(InvalidArgumentError):
        nn.adam_step(net, nn.Gradients(net.layer_dims), lr=0.0)


def test_soft_update():
    src = nn.mlp_init([2, 3, 1], seed=1)
    tgt = nn.mlp_init([2, 3, 1], seed=2)
    old = tgt.params.copy()
    nn.soft_update(tgt, src, 0.0)
    assert np.array_equal(tgt.params, old)
    nn.soft_update(tgt, src, 1.0)
    assert np.array_equal(tgt.params, src.params)
    a, b = hand_net([1, 1], [[[0.0]]], [[0.0]]), hand_net([1, 1], [[[1.0]]], [[1.0]])
    nn.soft_update(a, b, 0.05)
    assert a.weights[0][0, 0] == 0.05
    with pytest.raises(InvalidArgumentError):
        nn.soft_update(a, src, 0.5)
    with pytest.raises(InvalidArgumentError):
        nn.soft_update(a, b, 1.5)


def test_soft_update_is_exact_convex_combination(rng):
    src = nn.mlp_init([4, 8, 2], seed=3)
    tgt = nn.mlp_init([4, 8, 2], seed=4)
    expected = (1 - 0.05) * tgt.params + 0.05 * src.params
    nn.soft_update(tgt, src, 0.05)
    assert np.array_equal(tgt.params, expected)


def test_sgd_rescaling_leaves_update_unchanged(rng):
    """Scaling all weights by c and the SGD step size by 1/c gives the same step."""
    net = nn.mlp_init([3, 8, 1], seed=6)
    X, T = rng.normal(size=(16, 3)), rng.normal(size=(16, 1))
    w = rng.uniform(1, 3, size=16)
    g1, _ = nn.backward_weighted_scalar_loss(net, "weighted_mse", X, T, w)
    g4, _ = nn.backward_weighted_scalar_loss(net, "weighted_mse", X, T, 4 * w)
    a, b = net.copy(), net.copy()
    nn.sgd_step(a, g1, lr=0.1)
    nn.sgd_step(b, g4, lr=0.1 / 4)
    np.testing.assert_allclose(a.params, b.params, rtol=0, atol=1e-15)
    assert np.argmax(np.abs(a.params - net.params)) == np.argmax(np.abs(b.params - net.params))


def test_json_roundtrip_is_bit_exact(tmp_path):
    net = nn.mlp_init([3, 7, 2], seed=8, output_activation="tanh")
    nn.adam_step(net, nn.Gradients(net.layer_dims, np.full(net.params.size, 0.3)), lr=1e-3)
    path = tmp_path / "net.json"
    nn.save_network(net, path)
    back = nn.load_network(path)
    assert back.params.tobytes() == net.params.tobytes()
    assert back.adam_m.tobytes() == net.adam_m.tobytes()
    assert back.adam_v.tobytes() == net.adam_v.tobytes()
    assert back.step == 1 and back.output_activation == "tanh"
    doc = json.loads(path.read_text())
    assert doc["layer_dims"] == [3, 7, 2]
    assert np.array(doc["weights"][0]).shape == (7, 3)


def test_copy_is_independent():
    net = nn.mlp_init([2, 3, 1], seed=0)
    dup = net.copy()
    dup.params[0] += 1.0
    assert dup.params[0] != net.params[0]
