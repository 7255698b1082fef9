"""Every analytic gradient vs the central finite-difference oracle.

All checks run the 64-bit path at h = 1e-3 with relative error < 1e-4,
on random shapes with every extent <= 5, across three seeds.  Inputs to
kinked ops (relu family, clamp) are nudged away from the kink so the
numeric derivative is well defined.
"""

import numpy as np
import pytest

from liquiform import tensor as T
from oracles.numgrad import central_diff, max_rel_err

SEEDS = [0, 1, 2]
TOL = 1e-4


def away_from_zero(x, margin=0.05):
    x = x.copy()
    small = np.abs(x) < margin
    x[small] += np.where(x[small] >= 0, margin, -margin)
    return x


def run_check(build, arrays):
    """Compare analytic grads of scalar build(*tensors) with the oracle."""
    tensors = [T.Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build(*tensors)
    assert loss.dtype == np.float64
    loss.backward()
    analytic = [tt.grad for tt in tensors]

    def f(*arrs):
        with T.no_grad():
            return build(*[T.Tensor(a.copy()) for a in arrs]).item()

    numeric = central_diff(f, [a.copy() for a in arrays])
    for i, (ga, gn) in enumerate(zip(analytic, numeric)):
        assert ga is not None, f"input {i} got no gradient"
        err = max_rel_err(ga, gn)
        assert err < TOL, f"input {i}: rel err {err:.3e}"


def projector(rng, shape):
    """Fixed random projection so the scalar loss exercises the whole Jacobian."""
    p = rng.standard_normal(shape)
    return lambda out: T.sum_all(T.mul(out, T.Tensor(p)))


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_arithmetic(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((3, 4))
    c = away_from_zero(rng.standard_normal((3, 4)), 0.3)  # divisor off zero
    proj = projector(rng, (3, 4))
    run_check(lambda x, y: proj(T.add(x, y)), [a, b])
    run_check(lambda x, y: proj(T.sub(x, y)), [a, b])
    run_check(lambda x, y: proj(T.mul(x, y)), [a, b])
    run_check(lambda x, y: proj(T.div(x, y)), [a, c])
    run_check(lambda x: proj(T.neg(x)), [a])
    run_check(lambda x: proj(T.scale(x, 1.7)), [a])
    run_check(lambda x: proj(T.square(x)), [a])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_broadcast(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((1, 3, 1))
    proj = projector(rng, (2, 3, 4))
    run_check(lambda x, y: proj(T.add(x, y)), [a, b])
    run_check(lambda x, y: proj(T.mul(x, y)), [a, b])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_reductions(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 5))
    run_check(lambda x: T.sum_all(x), [a])
    run_check(lambda x: T.mean_all(x), [a])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_activations(seed):
    rng = np.random.default_rng(seed)
    a = away_from_zero(rng.standard_normal((2, 3, 4)))
    proj = projector(rng, (2, 3, 4))
    run_check(lambda x: proj(T.relu(x)), [a])
    run_check(lambda x: proj(T.leaky_relu(x, 0.2)), [a])
    run_check(lambda x: proj(T.sigmoid(x)), [a])
    run_check(lambda x: proj(T.tanh(x)), [a])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_prelu(seed):
    rng = np.random.default_rng(seed)
    x = away_from_zero(rng.standard_normal((2, 3, 4, 4)))
    slope = 0.25 + 0.1 * rng.standard_normal(3)
    proj = projector(rng, (2, 3, 4, 4))
    run_check(lambda a, s: proj(T.prelu(a, s)), [x, slope])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_log_clamped(seed):
    rng = np.random.default_rng(seed)
    a = 0.5 + rng.random((3, 4))  # comfortably above the floor
    proj = projector(rng, (3, 4))
    run_check(lambda x: proj(T.log_clamped(x)), [a])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_clamp(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4))
    a[np.abs(a) < 0.05] = 0.5          # off the lower boundary
    a[np.abs(a - 1.0) < 0.05] = 0.5    # off the upper boundary
    proj = projector(rng, (3, 4))
    run_check(lambda x: proj(T.clamp(x, 0.0, 1.0)), [a])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_structural(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, 2, 3, 3))
    b = rng.standard_normal((2, 3, 3, 3))
    proj = projector(rng, (2, 5, 3, 3))
    run_check(lambda x, y: proj(T.concat_channels(x, y)), [a, b])
    proj2 = projector(rng, (2, 18))
    run_check(lambda x: proj2(T.flatten(x)), [a])
    proj3 = projector(rng, (4, 9))
    run_check(lambda x: proj3(T.reshape(x, (4, 9))), [a])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_dense(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 4))
    w = rng.standard_normal((4, 2))
    b = rng.standard_normal(2)
    proj = projector(rng, (3, 2))
    run_check(lambda xx, ww, bb: proj(T.dense(xx, ww, bb)), [x, w, b])


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_grad_conv2d(seed, stride, padding):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    ho = (5 + 2 * padding - 3) // stride + 1
    proj = projector(rng, (2, 3, ho, ho))
    run_check(lambda xx, ww, bb: proj(T.conv2d(xx, ww, bb, stride, padding)), [x, w, b])


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("stride,padding,output_padding", [(1, 1, 0), (2, 1, 1)])
def test_grad_conv2d_transpose(seed, stride, padding, output_padding):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 4, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(2)
    ho = (4 - 1) * stride - 2 * padding + 3 + output_padding
    proj = projector(rng, (2, 2, ho, ho))
    run_check(
        lambda xx, ww, bb: proj(
            T.conv2d_transpose(xx, ww, bb, stride, padding, output_padding)),
        [x, w, b])


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("train", [True, False])
def test_grad_batch_norm(seed, train):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 2, 4, 4))
    gamma = 1.0 + 0.1 * rng.standard_normal(2)
    beta = 0.1 * rng.standard_normal(2)
    proj = projector(rng, (3, 2, 4, 4))
    frozen = T.BatchNormState(2, dtype=np.float64)
    frozen.mean[:] = rng.standard_normal(2)
    frozen.var[:] = 1.0 + rng.random(2)

    def build(xx, gg, bb):
        state = T.BatchNormState(2, dtype=np.float64) if train else frozen
        return proj(T.batch_norm(xx, gg, bb, state, train=train))

    run_check(build, [x, gamma, beta])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_bilinear_upsample(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 3, 4))
    proj = projector(rng, (2, 2, 6, 8))
    run_check(lambda xx: proj(T.bilinear_upsample(xx, 2)), [x])


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_two_layer_conv_net(seed):
    # conv -> relu -> conv -> mean, checking parameters and the input
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 5, 5))
    w1 = rng.standard_normal((3, 2, 3, 3)) * 0.5
    b1 = rng.standard_normal(3) * 0.5
    w2 = rng.standard_normal((2, 3, 3, 3)) * 0.5
    b2 = rng.standard_normal(2) * 0.5

    def build(xx, aa, bb, cc, dd):
        h = T.relu(T.conv2d(xx, aa, bb, 1, 1))
        y = T.conv2d(h, cc, dd, 1, 1)
        return T.mean_all(T.square(y))

    run_check(build, [x, w1, b1, w2, b2])
