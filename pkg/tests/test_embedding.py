import numpy as np
import pytest
from hypothesis import given, strategies as st

from bprag.embedding import (
    FloatEmbedding,
    QuantizedEmbedding,
    ValidationError,
    choose_scale,
    compute_norms,
    low_nibble_values,
    msb_nibble,
    msb_nibble_values,
    quantize,
    quantize_values,
)

ALL_INT8 = np.arange(-127, 128)


def test_quantize_zero_vector():
    q = quantize(FloatEmbedding(np.zeros(512)), 0.01)
    assert q.values.dtype == np.int8
    assert not q.values.any()
    assert q.scale == 0.01


def test_quantize_saturates_exactly_at_127():
    q = quantize(FloatEmbedding(np.full(512, 1.27)), 0.01)
    assert (q.values == 127).all()


def test_quantize_clamps_and_excludes_minus_128():
    q = quantize(FloatEmbedding(np.array([5.0, -5.0, 0.0])), 0.01)
    assert q.values.tolist() == [127, -127, 0]


def test_round_half_away_from_zero():
    q = quantize(FloatEmbedding(np.array([0.5, -0.5, 1.5, -1.5, 0.49])), 1.0)
    assert q.values.tolist() == [1, -1, 2, -2, 0]


def test_quantization_error_bound(rng):
    vectors = rng.uniform(-1, 1, (100, 512))
    scale = np.abs(vectors).max() / 127
    worst = 0.0
    for v in vectors:
        q = quantize(FloatEmbedding(v), scale)
        worst = max(worst, np.abs(q.dequantize() - v).max())
    assert worst <= scale / 2 * (1 + 1e-9)


def test_non_finite_rejected():
    with pytest.raises(ValidationError):
        FloatEmbedding(np.array([1.0, np.nan]))
    with pytest.raises(ValidationError):
        FloatEmbedding(np.array([np.inf, 0.0]))


def test_bad_scale_rejected():
    with pytest.raises(ValidationError):
        quantize(FloatEmbedding(np.ones(4)), 0.0)
    with pytest.raises(ValidationError):
        QuantizedEmbedding(np.zeros(4), -1.0)


def test_dimension_limits():
    with pytest.raises(ValidationError):
        FloatEmbedding(np.zeros(4097))
    with pytest.raises(ValidationError):
        FloatEmbedding(np.zeros(0))


def test_choose_scale_examples():
    corpus = [FloatEmbedding(np.array([2.54, -1.0, 0.0])), FloatEmbedding(np.array([0.1, 0.2, -0.3]))]
    assert choose_scale(corpus) == pytest.approx(0.02)
    assert choose_scale([FloatEmbedding(np.array([1.0, -1.0, 0.0]))]) == pytest.approx(1 / 127)


def test_choose_scale_all_zero_is_error():
    with pytest.raises(ValidationError):
        choose_scale([FloatEmbedding(np.zeros(8))])
    with pytest.raises(ValidationError):
        choose_scale([])


def test_corpus_scale_never_clamps(rng):
    corpus = rng.standard_normal((50, 128)) * 3
    scale = choose_scale(corpus)
    unclamped = np.sign(corpus) * np.floor(np.abs(corpus / scale) + 0.5)
    assert np.abs(unclamped).max() == 127
    q = quantize_values(corpus, scale)
    assert np.array_equal(q, unclamped)
    # saturation only where the coordinate is the corpus peak
    peak = np.abs(corpus) == np.abs(corpus).max()
    assert np.array_equal(np.abs(q) == 127, peak | (np.abs(corpus / scale) >= 126.5))


def test_msb_nibble_examples():
    q = QuantizedEmbedding(np.array([127, -127, 16, -1, 0, 15, -16, -17]), 1.0)
    assert msb_nibble(q).values.tolist() == [7, -8, 1, -1, 0, 0, -1, -2]


def test_msb_nibble_matches_floor_division_exhaustively():
    assert (msb_nibble_values(ALL_INT8) == ALL_INT8 // 16).all()


def test_nibble_reconstruction_exhaustive():
    hi = msb_nibble_values(ALL_INT8).astype(int)
    lo = low_nibble_values(ALL_INT8).astype(int)
    assert lo.min() >= 0 and lo.max() <= 15
    assert (hi * 16 + lo == ALL_INT8).all()


def test_nibble_square_never_exceeds_int8_square():
    hi = msb_nibble_values(ALL_INT8).astype(int)
    assert (hi**2 <= ALL_INT8**2).all()


def test_norms_closed_form():
    assert compute_norms(QuantizedEmbedding(np.zeros(512), 1.0)) .sq_norm_int8 == 0
    rec = compute_norms(QuantizedEmbedding(np.full(512, 127), 1.0))
    assert rec.sq_norm_int8 == 8_258_048
    assert rec.sq_norm_int4 == 25_088


def test_norms_match_naive_loop(rng):
    values = rng.integers(-127, 128, 512)
    rec = compute_norms(QuantizedEmbedding(values, 1.0, id=9))
    assert rec.id == 9
    assert rec.sq_norm_int8 == sum(int(v) * int(v) for v in values)
    assert rec.sq_norm_int4 == sum((int(v) // 16) ** 2 for v in values)


@given(st.lists(st.integers(-127, 127), min_size=1, max_size=64))
def test_norm_bounds(values):
    rec = compute_norms(QuantizedEmbedding(np.array(values), 1.0))
    assert rec.sq_norm_int4 <= rec.sq_norm_int8
    assert rec.sq_norm_int8 <= len(values) * 127**2
    assert rec.sq_norm_int4 <= len(values) * 64


def test_embeddings_are_immutable():
    q = QuantizedEmbedding(np.zeros(4), 1.0)
    with pytest.raises(ValueError):
        q.values[0] = 3
