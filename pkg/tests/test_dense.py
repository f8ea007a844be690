import numpy as np
import pytest

from hmaxconv.dense import (
    DenseNet,
    dense_forward,
    dense_from_dict,
    dense_grad,
    dense_to_dict,
    identity_net,
    init_dense,
    load_dense,
    save_dense,
)
from hmaxconv.rng import RngState


def constant_net(bias, input_dim=2):
    return DenseNet(
        input_dim=input_dim,
        hidden_weights=[np.zeros((3, input_dim))],
        hidden_biases=[np.zeros(3)],
        out_weights=np.zeros(3),
        out_bias=bias,
    )


def single_relu():
    return DenseNet(
        input_dim=1,
        hidden_weights=[np.array([[1.0]])],
        hidden_biases=[np.zeros(1)],
        out_weights=np.array([1.0]),
        out_bias=0.0,
    )


def randomized(rng, input_dim, widths):
    net = init_dense(input_dim, widths, rng)
    for b in net.hidden_biases:
        b[:] = rng.uniform_array(-0.3, 0.3, b.shape)
    net.out_bias = rng.uniform(-0.2, 0.2)
    return net


def test_constant_network():
    net = constant_net(0.77)
    for x in ([0.0, 0.0], [5.0, -3.0]):
        assert dense_forward(net, np.array(x)) == 0.77


def test_single_relu():
    net = single_relu()
    assert dense_forward(net, np.array([2.0])) == 2.0
    assert dense_forward(net, np.array([-2.0])) == 0.0


def test_identity_pair_network():
    net = identity_net()
    for x in (-2.0, 0.0, 3.5):
        assert dense_forward(net, np.array([x])) == x


def test_shape_validation():
    with pytest.raises(ValueError, match="chain"):
        DenseNet(
            input_dim=2,
            hidden_weights=[np.zeros((3, 5))],
            hidden_biases=[np.zeros(3)],
            out_weights=np.zeros(3),
            out_bias=0.0,
        )
    net = constant_net(0.0)
    with pytest.raises(ValueError, match="input shape"):
        dense_forward(net, np.zeros(3))


def test_grad_constant_network_is_zero():
    net = constant_net(1.0)
    g = dense_grad(net, np.array([0.3, -0.4]))
    assert all(np.all(w == 0) for w in g.hidden_weights)
    assert np.all(g.out_weights == 0)
    assert g.out_bias == 1.0


def test_grad_single_relu_regions():
    net = single_relu()
    assert dense_grad(net, np.array([2.0])).input[0] == 1.0
    assert dense_grad(net, np.array([-2.0])).input[0] == 0.0


def _fd_check(net, x, upstream=1.0, h=1e-6, tol=1e-5):
    g = dense_grad(net, x, upstream)
    arrays = net.hidden_weights + net.hidden_biases + [net.out_weights]
    grads = g.hidden_weights + g.hidden_biases + [g.out_weights]
    worst = 0.0
    for arr, garr in zip(arrays, grads):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            fp = dense_forward(net, x)
            arr[idx] = orig - h
            fm = dense_forward(net, x)
            arr[idx] = orig
            fd = upstream * (fp - fm) / (2 * h)
            worst = max(worst, abs(fd - garr[idx]) / max(1.0, abs(fd)))
    assert worst <= tol, f"worst relative gradient error {worst}"


def test_grad_matches_finite_differences():
    rng = RngState(101)
    for trial in range(25):
        sub = rng.derive(trial)
        t = 1 + sub.below(4)
        widths = [1 + sub.below(8) for _ in range(1 + sub.below(3))]
        net = randomized(sub, t, widths)
        x = sub.uniform_array(-1, 1, (t,))
        _fd_check(net, x, upstream=sub.uniform(0.5, 2.0))


def test_input_gradient_matches_finite_differences():
    rng = RngState(55)
    net = randomized(rng, 3, [6, 4])
    x = rng.uniform_array(-1, 1, (3,))
    g = dense_grad(net, x)
    h = 1e-6
    for k in range(3):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        fd = (dense_forward(net, xp) - dense_forward(net, xm)) / (2 * h)
        assert abs(fd - g.input[k]) <= 1e-5 * max(1.0, abs(fd))


def test_positive_homogeneity():
    rng = RngState(7)
    net = randomized(rng, 3, [5, 4])
    net.out_bias = 0.0
    x = rng.uniform_array(-1, 1, (3,))
    base = dense_forward(net, x)
    alpha = 3.7
    scaled = net.copy()
    scaled.hidden_weights[0] *= alpha
    scaled.hidden_biases[0] *= alpha
    scaled.hidden_weights[1] /= alpha
    assert dense_forward(scaled, x) == pytest.approx(base, abs=1e-12)


def test_piecewise_linear_along_segment():
    rng = RngState(13)
    net = randomized(rng, 2, [5])
    # short segment; verified kink-free for this seed
    x0 = np.array([0.31, -0.22])
    direction = np.array([0.01, 0.017])
    f = lambda s: dense_forward(net, x0 + s * direction)
    f0, f1, fhalf = f(0.0), f(1.0), f(0.5)
    assert fhalf == pytest.approx((f0 + f1) / 2.0, abs=1e-10)


def test_serialization_roundtrip(tmp_path):
    rng = RngState(3)
    net = randomized(rng, 4, [6, 3])
    doc = dense_to_dict(net)
    back = dense_from_dict(doc)
    x = rng.uniform_array(-1, 1, (4,))
    assert dense_forward(back, x) == dense_forward(net, x)
    path = tmp_path / "net.json"
    save_dense(net, path)
    loaded = load_dense(path)
    assert dense_forward(loaded, x) == dense_forward(net, x)
    assert loaded.num_params() == net.num_params()
