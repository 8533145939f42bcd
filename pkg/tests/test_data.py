"""Dataset handling, covariance factoring, fingerprints, and seeded draws."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import standardized_dataset
from lasso_gate.data import (
    Dataset,
    RngSpec,
    correlated_normals,
    factor_rows,
    fingerprint,
    load_dataset_csv,
    sample_covariance,
    save_dataset_csv,
    spectral_decompose,
    standardize,
)
from lasso_gate.errors import (
    ConstantColumn,
    DegenerateResponse,
    IoFailure,
    NotSymmetric,
)


def raw_dataset(seed=3, n=10, p=4):
    gen = np.random.default_rng(seed)
    return Dataset.from_arrays(
        5.0 * gen.standard_normal(n) + 2.0,
        3.0 * gen.standard_normal((n, p)) - 1.0,
    )


class TestStandardize:
    def test_moments(self):
        data = standardize(raw_dataset())
        assert data.standardized
        assert abs(data.y.mean()) < 1e-12
        assert abs(data.y.std(ddof=1) - 1.0) < 1e-12
        assert np.abs(data.x.mean(axis=0)).max() < 1e-12
        assert np.abs(data.x.std(axis=0, ddof=1) - 1.0).max() < 1e-12

    def test_idempotent_up_to_rounding(self):
        once = standardize(raw_dataset())
        twice = standardize(once)
        assert np.allclose(once.y, twice.y, atol=1e-12)
        assert np.allclose(once.x, twice.x, atol=1e-12)

    def test_constant_column_rejected_with_index(self):
        raw = raw_dataset()
        x = raw.x.copy()
        x[:, 2] = 4.25
        with pytest.raises(ConstantColumn) as err:
            standardize(Dataset.from_arrays(raw.y, x))
        assert err.value.column == 2
        assert "column 2" in str(err.value)

    def test_constant_response_rejected(self):
        raw = raw_dataset()
        with pytest.raises(DegenerateResponse):
            standardize(Dataset.from_arrays(np.full(raw.n, 1.5), raw.x))


class TestFromArrays:
    def test_shape_validation(self):
        gen = np.random.default_rng(0)
        with pytest.raises(ValueError):
            Dataset.from_arrays(gen.standard_normal(2), gen.standard_normal((2, 3)))
        with pytest.raises(ValueError):
            Dataset.from_arrays(gen.standard_normal(5), gen.standard_normal((6, 3)))
        with pytest.raises(ValueError):
            Dataset.from_arrays(gen.standard_normal(5), gen.standard_normal((5, 0)))
        with pytest.raises(ValueError):
            Dataset.from_arrays(
                gen.standard_normal((5, 1)), gen.standard_normal((5, 3))
            )

    def test_non_finite_rejected(self):
        gen = np.random.default_rng(1)
        y = gen.standard_normal(5)
        x = gen.standard_normal((5, 2))
        x[3, 1] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            Dataset.from_arrays(y, x)

    def test_claimed_standardization_is_checked(self):
        raw = raw_dataset()
        with pytest.raises(ValueError):
            Dataset.from_arrays(raw.y, raw.x, standardized=True)
        data = standardize(raw)
        again = Dataset.from_arrays(data.y, data.x, standardized=True)
        assert again.standardized


class TestSampleCovariance:
    def test_unit_diagonal_and_symmetry(self):
        data = standardized_dataset(21, 14, 5)
        c = sample_covariance(data)
        assert np.allclose(np.diag(c), 1.0, atol=1e-12)
        assert np.array_equal(c, c.T)
        assert np.abs(c).max() <= 1.0 + 1e-12

    def test_requires_standardized(self):
        with pytest.raises(ValueError, match="standardized"):
            sample_covariance(raw_dataset())


class TestSpectralDecompose:
    def test_reconstruction_and_orthonormality(self):
        c = sample_covariance(standardized_dataset(5, 20, 6))
        factor = spectral_decompose(c)
        rebuilt = factor.o @ np.diag(factor.d**2) @ factor.o.T
        assert np.allclose(rebuilt, c, atol=1e-10)
        assert np.allclose(factor.o.T @ factor.o, np.eye(6), atol=1e-10)
        assert np.all(np.diff(factor.d) <= 1e-12)

    def test_wide_data_rank_is_n_minus_one(self):
        # centering the columns removes one degree of freedom
        data = standardized_dataset(11, 12, 30)
        factor = spectral_decompose(sample_covariance(data))
        assert factor.source_rank == 11
        assert factor.d[11:].max() == 0.0

    def test_rejects_asymmetric(self):
        c = np.eye(4)
        c[0, 1] = 1e-3
        with pytest.raises(NotSymmetric):
            spectral_decompose(c)
        with pytest.raises(ValueError):
            spectral_decompose(np.ones((3, 2)))

    def test_identity_spectrum(self):
        factor = spectral_decompose(np.eye(7))
        assert np.allclose(factor.d, 1.0, atol=1e-14)
        assert factor.source_rank == 7


class TestSampling:
    def test_correlated_normals_deterministic(self):
        factor = spectral_decompose(np.eye(5))
        a = correlated_normals(factor, 8, RngSpec(42, 3))
        b = correlated_normals(factor, 8, RngSpec(42, 3))
        c = correlated_normals(factor, 8, RngSpec(42, 4))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        with pytest.raises(ValueError):
            correlated_normals(factor, 0, RngSpec(42, 0))

    def test_factor_rows_is_the_documented_transform(self):
        gen = np.random.default_rng(9)
        o, _ = np.linalg.qr(gen.standard_normal((4, 4)))
        d = np.array([2.0, 1.0, 0.5, 0.0])
        factor = spectral_decompose(o @ np.diag(d**2) @ o.T)
        spec = RngSpec(77, 0)
        rows = factor_rows(factor, spec.generator(), 6)
        z = spec.generator().standard_normal((6, 4))
        assert np.array_equal(rows, (z * factor.d) @ factor.o.T)

    def test_population_covariance_recovered(self):
        sigma = np.array([[1.0, 0.6, 0.2], [0.6, 1.0, 0.4], [0.2, 0.4, 1.0]])
        factor = spectral_decompose(sigma)
        x = correlated_normals(factor, 60_000, RngSpec(8, 0))
        emp = x.T @ x / x.shape[0]
        assert np.abs(emp - sigma).max() < 0.02


class TestFingerprint:
    def test_stable_and_hex(self):
        factor = spectral_decompose(np.eye(6))
        fp = fingerprint(factor, 15)
        assert fp == fingerprint(factor, 15)
        assert len(fp) == 16
        int(fp, 16)

    def test_sensitive_to_n_p_and_spectrum(self):
        base = fingerprint(spectral_decompose(np.eye(6)), 15)
        assert fingerprint(spectral_decompose(np.eye(6)), 16) != base
        assert fingerprint(spectral_decompose(np.eye(5)), 15) != base
        bumped = np.eye(6)
        bumped[0, 0] += 1e-3
        assert fingerprint(spectral_decompose(bumped), 15) != base

    def test_quantization_absorbs_float_noise(self):
        sigma = sample_covariance(standardized_dataset(31, 10, 4))
        jittered = sigma + np.eye(4) * 1e-9
        assert fingerprint(spectral_decompose(sigma), 10) == fingerprint(
            spectral_decompose(jittered), 10
        )

    def test_rotation_invariant(self):
        # factors sharing a spectrum are interchangeable for calibration
        d2 = np.array([3.0, 1.0, 0.25])
        gen = np.random.default_rng(13)
        q1, _ = np.linalg.qr(gen.standard_normal((3, 3)))
        q2, _ = np.linalg.qr(gen.standard_normal((3, 3)))
        f1 = spectral_decompose(q1 @ np.diag(d2) @ q1.T)
        f2 = spectral_decompose(q2 @ np.diag(d2) @ q2.T)
        assert fingerprint(f1, 9) == fingerprint(f2, 9)


class TestCsvRoundTrip:
    def test_exact_floats(self, tmp_path):
        data = standardized_dataset(19, 9, 3)
        path = tmp_path / "d.csv"
        save_dataset_csv(data, path)
        back = load_dataset_csv(path)
        assert np.array_equal(back.y, data.y)
        assert np.array_equal(back.x, data.x)
        header = path.read_text().splitlines()[0]
        assert header == "y,x1,x2,x3"

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_exact_floats_any_seed(self, tmp_path_factory, seed):
        data = standardized_dataset(seed, 5, 2)
        path = tmp_path_factory.mktemp("csv") / "d.csv"
        save_dataset_csv(data, path)
        back = load_dataset_csv(path)
        assert np.array_equal(back.y, data.y)
        assert np.array_equal(back.x, data.x)

    def test_load_errors(self, tmp_path):
        with pytest.raises(IoFailure):
            load_dataset_csv(tmp_path / "missing.csv")
        bad = tmp_path / "bad.csv"
        bad.write_text("y,x1\n1.0,2.0,3.0\n")
        with pytest.raises(ValueError, match="bad.csv:2"):
            load_dataset_csv(bad)
        bad.write_text("y,x1\n1.0,oops\n")
        with pytest.raises(ValueError, match="non-numeric"):
            load_dataset_csv(bad)
        bad.write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_dataset_csv(bad)
        bad.write_text("y\n1.0\n")
        with pytest.raises(ValueError, match="marker"):
            load_dataset_csv(bad)
        bad.write_text("y,x1\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_dataset_csv(bad)


class TestRngSpec:
    def test_substream_arithmetic(self):
        spec = RngSpec(123, 5)
        sub = spec.substream(7)
        assert (sub.seed, sub.stream) == (123, 12)
        with pytest.raises(ValueError):
            RngSpec(1, -1)

    def test_generator_determinism(self):
        a = RngSpec(99, 2).generator().standard_normal(4)
        b = RngSpec(99, 2).generator().standard_normal(4)
        assert np.array_equal(a, b)

    def test_streams_distinct_beyond_32_bits(self):
        # the stream index is split across two spawn-key words
        draws = {
            RngSpec(5, s).generator().integers(0, 2**63).item()
            for s in (0, 1, 2**32 - 1, 2**32, 2**32 + 1, 2**40)
        }
        assert len(draws) == 6

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**64 - 1), st.integers(0, 2**40))
    def test_generator_pure(self, seed, stream):
        spec = RngSpec(seed, stream)
        assert np.array_equal(
            spec.generator().standard_normal(3), spec.generator().standard_normal(3)
        )
