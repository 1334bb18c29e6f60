import numpy as np
import pytest

from ticlust.base.errors import DataError
from ticlust.base.preprocessing import (
    length_normalize,
    mean_subtract,
    pca_fit_transform,
    preprocess,
    stack_windows,
)
from ticlust.protocol import FeatureSequence


def test_mean_subtract_centers_columns():
    seq = FeatureSequence(data=[[1.0, 2.0], [3.0, 6.0]])
    out = mean_subtract(seq)
    np.testing.assert_allclose(out.data, [[-1.0, -2.0], [1.0, 2.0]])


def test_mean_subtract_is_idempotent():
    rng = np.random.default_rng(5)
    once = mean_subtract(FeatureSequence(data=3.0 + rng.standard_normal((100, 5))))
    assert np.abs(once.data.mean(axis=0)).max() < 1e-10
    np.testing.assert_allclose(mean_subtract(once).data, once.data, atol=1e-12)


def test_pca_output_is_centered_and_decorrelated():
    rng = np.random.default_rng(6)
    data = rng.standard_normal((100, 5)) @ rng.standard_normal((5, 5))
    model, out = pca_fit_transform(FeatureSequence(data=data), 5)
    assert np.abs(out.data.mean(axis=0)).max() < 1e-10
    cov = np.cov(out.data, rowvar=False)
    np.testing.assert_allclose(cov, np.diag(model.explained_variance), atol=1e-9 * model.explained_variance[0])


def test_pca_reconstruction_error_equals_dropped_variance():
    rng = np.random.default_rng(7)
    seq = FeatureSequence(data=rng.standard_normal((200, 6)) * [5.0, 3.0, 2.0, 1.0, 0.5, 0.2])
    full, _ = pca_fit_transform(seq, 6)
    model, out = pca_fit_transform(seq, 3)
    residual = np.sum((seq.data - model.inverse_transform(out.data)) ** 2)
    assert residual == pytest.approx(full.explained_variance[3:].sum() * (200 - 1), rel=1e-9)


def test_pca_recovers_dominant_axis():
    rng = np.random.default_rng(0)
    t = rng.standard_normal(200)
    data = np.column_stack([3.0 * t, 3.0 * t, 0.01 * rng.standard_normal(200)])
    model, out = pca_fit_transform(FeatureSequence(data=data), 1)
    axis = model.components[0]
    np.testing.assert_allclose(np.abs(axis), [1 / np.sqrt(2), 1 / np.sqrt(2), 0.0], atol=1e-2)
    assert out.dim == 1
    assert model.explained_variance[0] == pytest.approx(np.var(out.data[:, 0], ddof=1), rel=1e-8)


def test_pca_components_are_orthonormal_and_sign_fixed():
    rng = np.random.default_rng(1)
    model, _ = pca_fit_transform(FeatureSequence(data=rng.standard_normal((50, 5))), 3)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(3), atol=1e-10)
    pivots = np.argmax(np.abs(model.components), axis=1)
    assert np.all(model.components[np.arange(3), pivots] > 0)
    assert np.all(np.diff(model.explained_variance) <= 0)


def test_pca_full_rank_roundtrip():
    rng = np.random.default_rng(2)
    seq = FeatureSequence(data=rng.standard_normal((20, 4)))
    model, out = pca_fit_transform(seq, 4)
    np.testing.assert_allclose(model.inverse_transform(out.data), seq.data, atol=1e-10)


@pytest.mark.parametrize("d", [0, 4, 10])
def test_pca_dimension_out_of_range(d):
    # T=4 rows, n=6 columns: valid range is [1, 3]
    seq = FeatureSequence(data=np.arange(24, dtype=float).reshape(4, 6))
    with pytest.raises(DataError, match="out of range"):
        pca_fit_transform(seq, d)


def test_length_normalize_unit_rows():
    out = length_normalize(FeatureSequence(data=[[3.0, 4.0], [0.0, 2.0]]))
    np.testing.assert_allclose(out.data, [[0.6, 0.8], [0.0, 1.0]])


def test_length_normalize_is_idempotent():
    rng = np.random.default_rng(8)
    once = length_normalize(FeatureSequence(data=rng.standard_normal((50, 4))))
    np.testing.assert_allclose(length_normalize(once).data, once.data, atol=1e-12)


def test_length_normalize_zero_row():
    with pytest.raises(DataError, match="row 1") as info:
        length_normalize(FeatureSequence(data=[[1.0, 0.0], [0.0, 0.0]]))
    assert info.value.row == 1


def test_stack_windows_layout():
    seq = FeatureSequence(data=[[1.0, 10.0], [2.0, 20.0], [3.0, 30.0], [4.0, 40.0]])
    out = stack_windows(seq, 2)
    np.testing.assert_array_equal(
        out.data,
        [[1, 10, 2, 20], [2, 20, 3, 30], [3, 30, 4, 40]],
    )
    np.testing.assert_array_equal(out.extents(), [[0, 1], [1, 2], [2, 3]])


def test_stack_windows_identity_and_bounds():
    seq = FeatureSequence(data=np.ones((3, 2)))
    assert stack_windows(seq, 1) is seq
    with pytest.raises(DataError):
        stack_windows(seq, 4)


def test_stack_windows_keeps_frame_times():
    seq = FeatureSequence(data=np.ones((3, 1)), times=[[0.0, 0.5], [0.5, 2.0], [2.0, 2.5]])
    out = stack_windows(seq, 2)
    np.testing.assert_array_equal(out.times, [[0.0, 0.5], [0.5, 2.0]])


def test_preprocess_chain_order():
    rng = np.random.default_rng(4)
    seq = FeatureSequence(data=5.0 + rng.standard_normal((30, 4)))
    out = preprocess(seq, pca_dims=2, length_norm=True, window=3)
    assert out.n_rows == 28 and out.dim == 6
    # every stacked frame is unit-norm after length normalization
    frames = out.data.reshape(28, 3, 2)
    np.testing.assert_allclose(np.linalg.norm(frames, axis=2), 1.0)
