import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from codsketch.sketch_core import (
    ColumnPair,
    SketchConfig,
    cod_merge,
    cod_new,
    cod_result,
    cod_shrink,
    cod_sketch,
    cod_update,
    fd_new,
    fd_shrink,
    fd_sketch,
    fd_update,
    sketch_length_for,
)
from codsketch._validation import (
    ConfigMismatchError,
    DimensionError,
    EllTooLargeError,
    EllTooSmallError,
    NonFiniteError,
    OddEllError,
    SketchError,
)
from conftest import spec_norm


# ----------------------------------------------------------------- cod_new


def test_cod_new_zero_buffers():
    sk = cod_new(SketchConfig(ell=4, mx=10, my=20))
    assert sk.bx.shape == (10, 4) and sk.by.shape == (20, 4)
    assert not sk.bx.any() and not sk.by.any()
    assert sk.fill == 0 and sk.delta_log == [] and sk.columns_seen == 0


@pytest.mark.parametrize(
    "ell, mx, my, exc, msg",
    [
        (5, 10, 20, OddEllError, "ell must be even"),
        (12, 10, 20, EllTooLargeError, "ell exceeds min(mx,my)"),
        (0, 10, 20, EllTooSmallError, "at least 2"),
        (4, 0, 20, DimensionError, "mx"),
        (4, 10, -3, DimensionError, "my"),
    ],
)
def test_cod_new_rejects(ell, mx, my, exc, msg):
    with pytest.raises(exc, match=msg.replace("(", r"\(").replace(")", r"\)")):
        cod_new(SketchConfig(ell=ell, mx=mx, my=my))


# -------------------------------------------------------------- cod_update


def test_three_updates_are_stored_verbatim(rng):
    sk = cod_new(SketchConfig(4, 5, 6))
    X, Y = rng.standard_normal((5, 3)), rng.standard_normal((6, 3))
    for i in range(3):
        assert cod_update(sk, ColumnPair(X[:, i], Y[:, i])) is None
    assert sk.fill == 3
    np.testing.assert_array_equal(sk.bx[:, :3], X)
    np.testing.assert_array_equal(sk.by[:, :3], Y)
    assert not sk.bx[:, 3].any()


def test_fourth_update_shrinks(rng):
    sk = cod_new(SketchConfig(4, 5, 6))
    reports = [sk.update(rng.standard_normal(5), rng.standard_normal(6)) for _ in range(4)]
    assert reports[:3] == [None, None, None]
    assert reports[3] is not None
    assert sk.fill <= 2
    assert not sk.bx[:, 2:].any() and not sk.by[:, 2:].any()


def test_small_stream_meets_bound(rng):
    X, Y = rng.standard_normal((3, 6)), rng.standard_normal((4, 6))
    sk = cod_new(SketchConfig(2, 3, 4))
    for i in range(6):
        cod_update(sk, ColumnPair(X[:, i], Y[:, i]))
    err = spec_norm(X @ Y.T - sk.bx @ sk.by.T)
    assert err <= (2 / 2) * np.linalg.norm(X) * np.linalg.norm(Y) * (1 + 1e-9)


def test_update_rejects_bad_input():
    sk = cod_new(SketchConfig(2, 3, 4))
    with pytest.raises(DimensionError):
        sk.update(np.ones(4), np.ones(4))
    with pytest.raises(NonFiniteError):
        sk.update(np.array([1.0, np.nan, 0.0]), np.ones(4))
    with pytest.raises(NonFiniteError):
        sk.update(np.ones(3), np.array([1.0, np.inf, 0.0, 0.0]))
    assert sk.fill == 0 and sk.columns_seen == 0


def test_block_update_matches_column_updates(rng):
    X, Y = rng.standard_normal((7, 53)), rng.standard_normal((9, 53))
    a = cod_new(SketchConfig(4, 7, 9))
    for i in range(53):
        a.update(X[:, i], Y[:, i])
    b = cod_new(SketchConfig(4, 7, 9))
    b.update_block(X[:, :20], Y[:, :20])
    b.update_block(X[:, 20:], Y[:, 20:])
    np.testing.assert_array_equal(a.bx, b.bx)
    np.testing.assert_array_equal(a.by, b.by)
    assert a.delta_log == b.delta_log and a.fill == b.fill
    assert math.isclose(a.frob_x_sq, b.frob_x_sq, rel_tol=1e-12)


# -------------------------------------------------------------- cod_shrink


def _cod_with_spectrum(sigma):
    ell = len(sigma)
    sk = cod_new(SketchConfig(ell, ell + 1, ell + 2))
    root = np.sqrt(sigma)
    sk.bx[:ell, :] = np.diag(root)
    sk.by[:ell, :] = np.diag(root)
    sk.fill = ell
    return sk


def test_shrink_diag_4321():
    sk = _cod_with_spectrum([4.0, 3.0, 2.0, 1.0])
    rep = cod_shrink(sk)
    assert rep.delta == pytest.approx(3.0, rel=1e-14)
    np.testing.assert_allclose(rep.sigma, [4, 3, 2, 1], rtol=1e-14)
    assert rep.retained == 1 and sk.fill == 1
    expected = np.zeros((5, 6))
    expected[0, 0] = 1.0
    np.testing.assert_allclose(sk.bx @ sk.by.T, expected, atol=1e-14)
    assert sk.delta_log == [rep.delta]


def test_shrink_zero_buffers_is_noop():
    sk = cod_new(SketchConfig(4, 5, 6))
    sk.fill = 4
    rep = cod_shrink(sk)
    assert rep.delta == 0.0 and rep.retained == 0 and sk.fill == 0
    assert not sk.bx.any() and not sk.by.any()


def test_shrink_requires_full_buffer():
    sk = cod_new(SketchConfig(4, 5, 6))
    with pytest.raises(SketchError, match="full buffer"):
        cod_shrink(sk)


def test_shrink_median_is_position_half_ell(rng):
    sk = cod_new(SketchConfig(8, 10, 12))
    sk.update_block(rng.standard_normal((10, 7)), rng.standard_normal((12, 7)))
    rep = sk.update(rng.standard_normal(10), rng.standard_normal(12))
    assert rep.delta == rep.sigma[3]
    assert np.all(np.diff(rep.sigma) <= 0)
    assert rep.retained <= 4


def test_identical_buffers_shrink_like_fd(rng):
    B = rng.standard_normal((9, 6))
    cod = cod_new(SketchConfig(6, 9, 9))
    cod.bx[:], cod.by[:], cod.fill = B, B.copy(), 6
    fd = fd_new(6, 9)
    fd.dx[:], fd.fill = B, 6
    cod_shrink(cod)
    fd_shrink(fd)
    ref = fd.covariance()
    assert np.linalg.norm(cod.product() - ref) <= 1e-9 * np.linalg.norm(ref)


# -------------------------------------------------------------- cod_result


def test_result_of_fresh_sketch_is_zero():
    bx, by = cod_result(cod_new(SketchConfig(2, 3, 3)))
    assert not bx.any() and not by.any()


def test_result_is_exact_before_first_shrink(rng):
    X, Y = rng.standard_normal((6, 5)), rng.standard_normal((7, 5))
    sk = cod_sketch(X, Y, 6)
    bx, by = cod_result(sk)
    np.testing.assert_allclose(bx @ by.T, X @ Y.T, rtol=0, atol=1e-13)
    assert sk.delta_log == []


def test_result_error_within_delta_sum(rng):
    X, Y = rng.standard_normal((6, 4)), rng.standard_normal((7, 4))
    sk = cod_sketch(X, Y, 4)
    bx, by = cod_result(sk)
    assert len(sk.delta_log) == 1
    assert spec_norm(X @ Y.T - bx @ by.T) <= sk.delta_sum() * (1 + 1e-9)


def test_no_final_shrink_partial_buffer_returned(rng):
    X, Y = rng.standard_normal((6, 5)), rng.standard_normal((7, 5))
    sk = cod_sketch(X, Y, 4)
    # column 4 fills the buffer and shrinks; later columns sit raw in the buffer
    assert len(sk.delta_log) == 1
    bx, _ = cod_result(sk)
    assert sk.fill < 4
    np.testing.assert_array_equal(bx[:, sk.fill - 1], X[:, -1])


# --------------------------------------------------------------- cod_merge


def test_merge_with_empty(rng):
    X, Y = rng.standard_normal((8, 13)), rng.standard_normal((10, 13))
    a = cod_sketch(X, Y, 4)
    empty = cod_new(a.config)
    m = cod_merge(a, empty)
    # re-streaming at most ell-1 columns never triggers a shrink
    assert len(m.delta_log) == len(a.delta_log)
    np.testing.assert_allclose(m.product(), a.product(), atol=1e-12)
    assert m.columns_seen == 13
    assert m.frob_x_sq == a.frob_x_sq


def _merge_error(X, Y, ell, order):
    half = X.shape[1] // 2
    parts = [(X[:, :half], Y[:, :half]), (X[:, half:], Y[:, half:])]
    s = [cod_sketch(px, py, ell) for px, py in parts]
    m = cod_merge(s[order[0]], s[order[1]])
    return spec_norm(X @ Y.T - m.product()), m


def test_merge_two_halves_bound_both_orders(rng):
    X, Y = rng.standard_normal((8, 40)), rng.standard_normal((10, 40))
    bound = 2 / 4 * np.linalg.norm(X) * np.linalg.norm(Y)
    for order in ((0, 1), (1, 0)):
        err, m = _merge_error(X, Y, 4, order)
        assert err <= bound * (1 + 1e-9)
        assert err <= m.delta_sum() * (1 + 1e-9)
        assert m.delta_sum() <= m.theorem_bound() * (1 + 1e-9)
        assert m.theorem_bound() == pytest.approx(bound, rel=1e-12)


def test_merge_config_mismatch():
    with pytest.raises(ConfigMismatchError):
        cod_merge(cod_new(SketchConfig(2, 5, 5)), cod_new(SketchConfig(4, 5, 5)))


# ---------------------------------------------------------------------- FD


def test_fd_new():
    sk = fd_new(4, 10)
    assert sk.dx.shape == (10, 4) and not sk.dx.any()
    with pytest.raises(OddEllError):
        fd_new(3, 10)
    with pytest.raises(EllTooLargeError):
        fd_new(12, 10)


def test_fd_zero_stream_stays_zero():
    sk = fd_new(2, 5)
    for _ in range(9):
        fd_update(sk, np.zeros(5))
    assert not sk.dx.any()


def test_fd_bound_small(rng):
    X = rng.standard_normal((5, 20))
    sk = fd_sketch(X, 2)
    assert spec_norm(X @ X.T - sk.covariance()) <= 2 * np.linalg.norm(X) ** 2 / 2 * (1 + 1e-9)


def test_fd_shrink_diag_4321():
    sk = fd_new(4, 6)
    sk.dx[:4, :] = np.diag([4.0, 3.0, 2.0, 1.0])
    sk.fill = 4
    rep = fd_shrink(sk)
    assert rep.delta == pytest.approx(9.0, rel=1e-14)
    assert rep.retained == 1
    np.testing.assert_allclose(np.linalg.svd(sk.dx, compute_uv=False), [math.sqrt(7), 0, 0, 0], atol=1e-14)


def test_fd_update_rejects():
    sk = fd_new(2, 3)
    with pytest.raises(DimensionError):
        fd_update(sk, np.ones(4))
    with pytest.raises(NonFiniteError):
        fd_update(sk, np.array([np.nan, 0, 0]))


# --------------------------------------------------------- sketch_length_for


@pytest.mark.parametrize(
    "eps, mode, stats, expected",
    [
        (0.1, "frobenius", None, 10),
        (0.5, "spectral", {"sr_x": 1, "sr_y": 1}, 4),
        (0.25, "lowrank", {"sr_x": 1, "sr_y": 1, "norm_x": 1, "norm_y": 1, "sigma_k1": 1}, 32),
        (1 / 3, "frobenius", None, 4),
        (1.0, "frobenius", None, 2),
    ],
)
def test_sketch_length_for(eps, mode, stats, expected):
    assert sketch_length_for(eps, mode, stats) == expected


def test_sketch_length_for_errors():
    with pytest.raises(SketchError):
        sketch_length_for(0.0)
    with pytest.raises(SketchError):
        sketch_length_for(1.5)
    with pytest.raises(SketchError, match="stats"):
        sketch_length_for(0.5, "spectral")
    with pytest.raises(SketchError, match="missing"):
        sketch_length_for(0.5, "lowrank", {"sr_x": 1, "sr_y": 1})


# --------------------------------------------------------------- properties

dims = st.integers(2, 12)


@st.composite
def streams(draw):
    ell = draw(st.sampled_from([2, 4, 6, 8]))
    mx = draw(st.integers(ell, 14))
    my = draw(st.integers(ell, 14))
    n = draw(st.integers(0, 60))
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    scale = r.lognormal(0, 1, n)
    return ell, r.standard_normal((mx, n)) * scale, r.standard_normal((my, n)) * scale


@settings(max_examples=60, deadline=None)
@given(streams())
def test_delta_audit_every_prefix(case):
    ell, X, Y = case
    sk = cod_new(SketchConfig(ell, X.shape[0], Y.shape[0]))
    for i in range(X.shape[1]):
        rep = sk.update(X[:, i], Y[:, i])
        if rep is not None:
            # post-shrink zeros
            assert sk.fill <= ell // 2
            assert not sk.bx[:, ell // 2 :].any() and not sk.by[:, ell // 2 :].any()
        err = spec_norm(X[:, : i + 1] @ Y[:, : i + 1].T - sk.product())
        bound = sk.theorem_bound()
        assert err <= sk.delta_sum() * (1 + 1e-9) + 1e-9 * bound
        assert sk.delta_sum() <= bound * (1 + 1e-9)
        assert not sk.bx[:, sk.fill :].any() and not sk.by[:, sk.fill :].any()


@settings(max_examples=40, deadline=None)
@given(streams(), st.floats(0.1, 10.0))
def test_scale_equivariance(case, c):
    ell, X, Y = case
    base = cod_sketch(X, Y, ell).product() if X.shape[1] else np.zeros((X.shape[0], Y.shape[0]))
    scaled = cod_sketch(c * X, Y, ell).product() if X.shape[1] else np.zeros_like(base)
    assert np.linalg.norm(scaled - c * base) <= 1e-9 * max(np.linalg.norm(c * base), 1e-300)


def test_scale_equivariance_power_of_two_is_exact(rng):
    X, Y = rng.standard_normal((9, 50)), rng.standard_normal((11, 50))
    base = cod_sketch(X, Y, 4)
    scaled = cod_sketch(4.0 * X, Y, 4)
    assert scaled.delta_log == [4.0 * d for d in base.delta_log]
    np.testing.assert_allclose(scaled.product(), 4.0 * base.product(), rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8]))
def test_fd_reduction_property(seed, ell):
    r = np.random.default_rng(seed)
    X = r.standard_normal((int(r.integers(ell, 16)), int(r.integers(1, 80))))
    cod = cod_sketch(X, X.copy(), ell).product()
    fd = fd_sketch(X, ell).covariance()
    assert np.linalg.norm(cod - fd) <= 1e-9 * max(np.linalg.norm(fd), 1e-300)
