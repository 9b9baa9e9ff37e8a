"""Tensor substrate: forward semantics, backward correctness, gradcheck."""

import numpy as np
import pytest

from daac import autodiff as ad
from daac.autodiff import Tensor, conv1d, conv1d_transpose, concat, gradcheck
from daac.errors import ContractError, DimensionError, DomainError

RNG = np.random.default_rng(20240811)


def rand(*shape, scale=1.0):
    return RNG.normal(size=shape) * scale


# -- forward semantics -------------------------------------------------------


def test_softmax_uniform_on_constant_row():
    out = Tensor([0.0, 0.0, 0.0]).softmax(axis=-1)
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_softmax_rows_sum_to_one():
    x = Tensor(rand(5, 7, scale=3.0))
    s = x.softmax(axis=1)
    np.testing.assert_allclose(s.data.sum(axis=1), np.ones(5), atol=1e-12)


def test_cosine_similarity_identity():
    v = Tensor(rand(6))
    assert ad.cosine_similarity(v, v).item() == pytest.approx(1.0, abs=1e-12)


def test_cosine_similarity_zero_vector_raises():
    with pytest.raises(DomainError):
        ad.cosine_similarity(Tensor(np.zeros(4)), Tensor(np.ones(4))).item()


def test_dilated_conv_length_formula():
    # length 8, kernel 3, dilation 2, no padding -> 8 - 2*(3-1) = 4
    x = Tensor(rand(1, 1, 8))
    w = Tensor(rand(1, 1, 3))
    assert conv1d(x, w, dilation=2).shape == (1, 1, 4)


def test_conv_same_padding_preserves_length():
    x = Tensor(rand(2, 3, 17))
    w = Tensor(rand(4, 3, 3))
    for d in (1, 2, 4):
        out = conv1d(x, w, dilation=d, padding=d)
        assert out.shape == (2, 4, 17)


def test_conv_matches_naive_loops():
    m, cin, t, cout, k, dil, pad, stride = 2, 3, 11, 4, 3, 2, 2, 2
    x, w = rand(m, cin, t), rand(cout, cin, k)
    b = rand(cout, 1)
    out = conv1d(Tensor(x), Tensor(w), Tensor(b), stride=stride,
                 dilation=dil, padding=pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    span = dil * (k - 1) + 1
    L = (t + 2 * pad - span) // stride + 1
    ref = np.zeros((m, cout, L))
    for mi in range(m):
        for o in range(cout):
            for l in range(L):
                acc = b[o, 0]
                for c in range(cin):
                    for kk in range(k):
                        acc += w[o, c, kk] * xp[mi, c, l * stride + kk * dil]
                ref[mi, o, l] = acc
    np.testing.assert_allclose(out.data, ref, atol=1e-12)


def test_conv_transpose_inverts_stride_arithmetic():
    x = Tensor(rand(2, 3, 5))
    w = Tensor(rand(3, 2, 4))
    out = conv1d_transpose(x, w, stride=2, padding=1, output_length=10)
    assert out.shape == (2, 2, 10)


def test_non_finite_forward_raises():
    x = Tensor([700.0, 800.0])
    with pytest.raises(DomainError):
        x.exp()


def test_log_domain_error():
    with pytest.raises(DomainError):
        Tensor([1.0, 0.0]).log()


def test_division_by_zero_raises():
    with pytest.raises(DomainError):
        Tensor([1.0]) / Tensor([0.0])


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        Tensor(rand(2, 3)) @ Tensor(rand(4, 2))


def test_forward_deterministic():
    x = rand(4, 6)
    a = Tensor(x).softmax(axis=1).data
    b = Tensor(x).softmax(axis=1).data
    assert np.array_equal(a, b)


# -- backward ------------------------------------------------------------------


def test_backward_square():
    x = Tensor(np.array(3.0), requires_grad=True)
    (x * x).backward()
    assert x.grad == pytest.approx(6.0)


def test_backward_mean():
    x = Tensor(np.ones(4), requires_grad=True)
    x.mean().backward()
    np.testing.assert_allclose(x.grad, [0.25] * 4)


def test_backward_requires_scalar():
    x = Tensor(rand(3), requires_grad=True)
    with pytest.raises(ContractError):
        (x * x).backward()


def test_backward_accumulates_through_shared_node():
    x = Tensor(np.array(2.0), requires_grad=True)
    y = x * x
    (y + y).backward()  # d/dx 2x^2 = 4x
    assert x.grad == pytest.approx(8.0)


def test_no_grad_blocks_recording():
    x = Tensor(rand(3), requires_grad=True)
    with ad.no_grad():
        y = (x * x).sum()
    assert not y.requires_grad


# -- gradcheck over the registered op set ---------------------------------------
#
# Each factory freezes its constants so the checked function is pure.

def _case_add():
    c = Tensor(rand(4, 3))
    return lambda t: (t + c).sum(), (4, 3)

def _case_sub():
    c = Tensor(rand(4, 3))
    return lambda t: (t - c).sum(), (4, 3)

def _case_mul():
    c = Tensor(rand(4, 3))
    return lambda t: (t * c).sum(), (4, 3)

def _case_div():
    c = Tensor(np.abs(rand(4, 3)) + 1.0)
    return lambda t: (t / c).sum(), (4, 3)

def _case_div_denom():
    c = Tensor(rand(4, 3))
    return lambda t: (c / (t * t + 1.0)).sum(), (4, 3)

def _case_matmul():
    c = Tensor(rand(3, 2))
    return lambda t: (t @ c).sum(), (4, 3)

def _case_matmul_rhs():
    c = Tensor(rand(5, 4))
    return lambda t: (c @ t).sum(), (4, 3)

def _case_matmul_batched():
    return lambda t: (t @ t.transpose(0, 2, 1)).sum(), (2, 3, 4)

def _case_reshape():
    return lambda t: (t.reshape(6, 2) * t.reshape(6, 2)).sum(), (4, 3)

def _case_transpose():
    c = Tensor(rand(3, 4))
    return lambda t: (t.transpose(1, 0) * c).sum(), (4, 3)

def _case_exp():
    return lambda t: t.exp().sum(), (4, 3)

def _case_log():
    return lambda t: (t * t + 1.0).log().sum(), (4, 3)

def _case_sqrt():
    return lambda t: (t * t + 1.0).sqrt().sum(), (4, 3)

def _case_mean_axis():
    c = Tensor(rand(4))
    return lambda t: (t.mean(axis=1) * c).sum(), (4, 3)

def _case_sum_axis():
    c = Tensor(rand(3))
    return lambda t: (t.sum(axis=0) * c).sum(), (4, 3)

def _case_softmax():
    c = Tensor(rand(4, 3))
    return lambda t: (t.softmax(axis=1) * c).sum(), (4, 3)

def _case_relu():
    return lambda t: (t + 0.05).relu().sum(), (4, 3)

def _case_sigmoid():
    return lambda t: t.sigmoid().sum(), (4, 3)

def _case_mask():
    m = Tensor(RNG.integers(0, 2, (4, 3)).astype(float))
    return lambda t: (t * m).sum(), (4, 3)

def _case_concat():
    c = Tensor(rand(4, 6))
    return lambda t: (concat([t, t * 2.0], axis=1) * c).sum(), (4, 3)

def _case_conv1d():
    w, b = Tensor(rand(2, 3, 3)), Tensor(rand(2, 1))
    return lambda t: conv1d(t, w, b, dilation=2, padding=2).sum(), (2, 3, 8)

def _case_conv1d_strided():
    w = Tensor(rand(2, 3, 3))
    return lambda t: conv1d(t, w, stride=2, padding=1).sum(), (2, 3, 8)

def _case_conv1d_w():
    x = Tensor(rand(2, 3, 8))
    return lambda t: conv1d(x, t, dilation=1, padding=1).sum(), (2, 3, 3)

def _case_conv1d_transpose():
    w = Tensor(rand(3, 2, 3))
    return lambda t: conv1d_transpose(t, w, stride=2, padding=1,
                                      output_length=8).sum(), (2, 3, 4)

def _case_conv1d_transpose_w():
    x = Tensor(rand(2, 3, 4))
    return lambda t: conv1d_transpose(x, t, stride=2, padding=1,
                                      output_length=8).sum(), (3, 2, 3)

def _case_cosine():
    c = Tensor(rand(5))
    return lambda t: ad.cosine_similarity(t, c), (5,)

def _case_mse():
    c = Tensor(rand(3, 4))
    return lambda t: ad.mse(t, c), (3, 4)

def _case_bce():
    y = Tensor(RNG.integers(0, 2, (6,)).astype(float))
    return lambda t: ad.bce(t.sigmoid(), y), (6,)

def _case_bce_with_logits():
    y = Tensor(RNG.integers(0, 2, (6,)).astype(float))
    return lambda t: ad.bce_with_logits(t, y), (6,)

def _case_clip():
    return lambda t: (t.clip(-0.8, 0.8) * t.clip(-0.8, 0.8)).sum(), (4, 3)

def _case_masked_lse():
    m = np.array([[1, 0, 1], [0, 1, 1], [1, 1, 1], [1, 1, 0]])
    return lambda t: ad.masked_logsumexp(t, m, axis=1).sum(), (4, 3)


OP_FACTORIES = [v for k, v in sorted(globals().items()) if k.startswith("_case_")]


@pytest.mark.parametrize("factory", OP_FACTORIES,
                         ids=[f.__name__[6:] for f in
                              [v for k, v in sorted(globals().items())
                               if k.startswith("_case_")]])
def test_gradcheck_per_op(factory):
    worst = 0.0
    for trial in range(10):
        fn, shape = factory()
        point = Tensor(RNG.normal(size=shape))
        worst = max(worst, gradcheck(fn, point))
    assert worst < 1e-4, f"{factory.__name__}: max relative error {worst}"


def test_gradcheck_polynomial_is_tight():
    err = gradcheck(lambda t: (t * t).sum(), Tensor(rand(5)))
    assert err < 1e-7
