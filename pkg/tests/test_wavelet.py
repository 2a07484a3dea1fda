import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import LOW, dense_dwt3, dense_idwt3, high_taps
from wavereg.errors import ConfigurationError, ShapeError
from wavereg.wavelet import HIGH_BANDS, SUBBANDS, _analysis, dwt3, filter_bank, idwt3

KINDS = ("haar", "db2")
even_dim = st.sampled_from([4, 6, 8, 10, 12, 16])


def test_subband_labels():
    assert SUBBANDS == ("lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh")
    assert HIGH_BANDS == SUBBANDS[1:]


def test_haar_taps():
    fb = filter_bank("haar")
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(fb.low, [s, s], atol=1e-15)
    np.testing.assert_allclose(fb.high, [s, -s], atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_filter_bank_properties(kind):
    fb = filter_bank(kind)
    n = len(fb)
    assert n == {"haar": 2, "db2": 4}[kind]
    assert abs(np.linalg.norm(fb.low) - 1) < 1e-12
    assert abs(np.linalg.norm(fb.high) - 1) < 1e-12
    assert abs(np.dot(fb.low, fb.high)) < 1e-12
    for k in range(n):
        assert fb.high[k] == (-1) ** k * fb.low[n - 1 - k]
    np.testing.assert_allclose(fb.low, LOW[kind], atol=1e-15)
    np.testing.assert_allclose(fb.high, high_taps(kind), atol=1e-15)


def test_db2_double_shift_orthogonality_and_vanishing_moment():
    low = filter_bank("db2").low
    assert abs(np.dot(low[:2], low[2:])) < 1e-12
    n = len(low)
    assert abs(sum((-1) ** k * k * low[n - 1 - k] for k in range(n))) < 1e-12


def test_unknown_filter_kind():
    with pytest.raises(ConfigurationError):
        filter_bank("db4")


def test_constant_volume_haar():
    c = 1.7
    bands = dwt3(np.full((8, 8, 8), c), filter_bank("haar"))
    np.testing.assert_allclose(bands["lll"], c * 2 * np.sqrt(2), atol=1e-13)
    for k in HIGH_BANDS:
        np.testing.assert_allclose(bands[k], 0, atol=1e-13)


def test_impulse_haar():
    x = np.zeros((4, 4, 4))
    x[0, 0, 0] = 1
    for k, band in dwt3(x, filter_bank("haar")).items():
        nz = band[np.abs(band) > 1e-15]
        assert nz.size == 1, k
        assert abs(abs(nz[0]) - 2 ** -1.5) < 1e-15


@pytest.mark.parametrize("kind", KINDS)
def test_dwt3_matches_dense_matrix_oracle(rng, kind):
    x = rng.standard_normal((16, 16, 16))
    got = dwt3(x, filter_bank(kind))
    want = dense_dwt3(x, kind)
    for k in SUBBANDS:
        assert np.abs(got[k] - want[k]).max() < 1e-10


@pytest.mark.parametrize("kind", KINDS)
def test_idwt3_matches_dense_oracle(rng, kind):
    c = {k: rng.standard_normal((3, 4, 5)) for k in SUBBANDS}
    assert np.abs(idwt3(c, filter_bank(kind)) - dense_idwt3(c, kind)).max() < 1e-10


def test_idwt3_zero_and_constant():
    fb = filter_bank("haar")
    zeros = {k: np.zeros((2, 3, 4)) for k in SUBBANDS}
    assert not idwt3(zeros, fb).any()
    c = dict(zeros, lll=np.full((2, 3, 4), 2 * np.sqrt(2)))
    np.testing.assert_allclose(idwt3(c, fb), 1.0, atol=1e-14)


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=25, deadline=None)
@given(st.tuples(even_dim, even_dim, even_dim), st.integers(0, 2**32 - 1))
def test_perfect_reconstruction(kind, dims, seed):
    fb = filter_bank(kind)
    x = np.random.default_rng(seed).standard_normal(dims)
    assert np.abs(idwt3(dwt3(x, fb), fb) - x).max() < 1e-10


@pytest.mark.parametrize("kind", KINDS)
def test_perfect_reconstruction_32_cubed(rng, kind):
    fb = filter_bank(kind)
    x = rng.standard_normal((32, 32, 32))
    assert np.abs(idwt3(dwt3(x, fb), fb) - x).max() < 1e-10


@pytest.mark.parametrize("kind", KINDS)
def test_coefficient_round_trip(rng, kind):
    fb = filter_bank(kind)
    c = {k: rng.standard_normal((3, 4, 3, 5)) for k in SUBBANDS}
    back = dwt3(idwt3(c, fb), fb)
    assert max(np.abs(back[k] - c[k]).max() for k in SUBBANDS) < 1e-10


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=20, deadline=None)
@given(st.tuples(even_dim, even_dim, even_dim), st.integers(0, 2**32 - 1))
def test_parseval_and_adjoint(kind, dims, seed):
    fb = filter_bank(kind)
    r = np.random.default_rng(seed)
    x = r.standard_normal(dims)
    bands = dwt3(x, fb)
    energy = sum(float(np.sum(b * b)) for b in bands.values())
    assert abs(energy - np.sum(x * x)) <= 1e-9 * np.sum(x * x)

    y = {k: r.standard_normal(bands["lll"].shape) for k in SUBBANDS}
    lhs = sum(float(np.vdot(bands[k], y[k])) for k in SUBBANDS)
    rhs = float(np.vdot(x, idwt3(y, fb)))
    assert abs(lhs - rhs) <= 1e-9 * max(abs(lhs), abs(rhs), 1.0)


@pytest.mark.parametrize("kind", KINDS)
def test_axis_order_independence(rng, kind):
    fb = filter_bank(kind)
    x = rng.standard_normal((8, 10, 12))
    ref = dwt3(x, fb)
    for order in [(2, 1, 0), (1, 0, 2), (0, 2, 1)]:
        bands = {"": x}
        for ax in order:
            bands = {key + tag: _analysis(a, taps, ax) for key, a in bands.items()
                     for tag, taps in (("l", fb.low), ("h", fb.high))}
        for key, a in bands.items():
            label = [None] * 3
            for pos, ax in enumerate(order):
                label[ax] = key[pos]
            assert np.abs(a - ref["".join(label)]).max() < 1e-12


def test_multichannel_is_channelwise(rng):
    fb = filter_bank("db2")
    x = rng.standard_normal((3, 8, 8, 8))
    bands = dwt3(x, fb)
    for c in range(3):
        single = dwt3(x[c], fb)
        for k in SUBBANDS:
            np.testing.assert_array_equal(bands[k][c], single[k])


def test_dwt3_shape_errors():
    with pytest.raises(ShapeError):
        dwt3(np.zeros((8, 7, 8)), filter_bank("haar"))
    with pytest.raises(ShapeError):
        dwt3(np.zeros((2, 8, 8)), filter_bank("db2"))


def test_idwt3_shape_errors():
    fb = filter_bank("haar")
    c = {k: np.zeros((2, 2, 2)) for k in SUBBANDS}
    c["hhh"] = np.zeros((2, 2, 3))
    with pytest.raises(ShapeError):
        idwt3(c, fb)
    del c["hhh"]
    with pytest.raises(ShapeError):
        idwt3(c, fb)
