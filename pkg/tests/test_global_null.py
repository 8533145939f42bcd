"""End-to-end decision logic for the calibrated activation-count test."""

import numpy as np
import pytest

from lasso_gate.data import Dataset, RngSpec, sample_covariance, spectral_decompose, standardize
from lasso_gate.errors import FingerprintMismatch
from lasso_gate.global_null import append_outcome_csv, run_global_test
from lasso_gate.solver import fit_lasso


class TestDecisionRule:
    def test_reject_iff_count_strictly_exceeds_r(self, demo_raw, demo_table):
        for r in (0, 1, 2):
            outcome = run_global_test(
                demo_raw, r, 0.05, 400, RngSpec(9301, 0), table=demo_table, threads=1
            )
            assert outcome.r == r
            assert outcome.lambda_r == demo_table.entry_for(r).lambda_r
            assert outcome.reject == (outcome.u_observed > r)
            assert outcome.alpha == 0.05

    def test_outcome_matches_direct_fit(self, demo_raw, demo_table):
        outcome = run_global_test(
            demo_raw, 1, 0.05, 400, RngSpec(9301, 0), table=demo_table, threads=1
        )
        fit = fit_lasso(standardize(demo_raw), demo_table.entry_for(1).lambda_r)
        assert outcome.u_observed == fit.u
        assert outcome.fit.objective == fit.objective
        assert np.array_equal(outcome.fit.beta, fit.beta)

    def test_fingerprint_recorded(self, demo_raw, demo_table):
        outcome = run_global_test(
            demo_raw, 0, 0.05, 400, RngSpec(9301, 0), table=demo_table, threads=1
        )
        assert outcome.factor_fingerprint == demo_table.factor_fingerprint

    def test_strong_signal_rejects(self, demo_raw, demo_table):
        gen = np.random.default_rng(17)
        y = 2.0 * demo_raw.x[:, 0] + 0.1 * gen.standard_normal(demo_raw.n)
        spiked = Dataset.from_arrays(y, demo_raw.x.copy())
        # the spectrum fingerprint depends on x alone, so the table transfers
        outcome = run_global_test(
            spiked, 0, 0.05, 400, RngSpec(9301, 0), table=demo_table, threads=1
        )
        assert outcome.reject
        assert outcome.u_observed >= 1


class TestTableCompatibility:
    def test_mismatched_covariance_refused(self, demo_table):
        gen = np.random.default_rng(99)
        other = Dataset.from_arrays(
            gen.standard_normal(20), gen.standard_normal((20, 12))
        )
        with pytest.raises(FingerprintMismatch):
            run_global_test(
                other, 0, 0.05, 400, RngSpec(9301, 0), table=demo_table, threads=1
            )

    def test_mismatched_alpha_refused(self, demo_raw, demo_table):
        with pytest.raises(ValueError, match="alpha"):
            run_global_test(
                demo_raw, 0, 0.10, 400, RngSpec(9301, 0), table=demo_table, threads=1
            )

    def test_missing_r_refused(self, demo_raw, demo_table):
        with pytest.raises(ValueError, match="no entry"):
            run_global_test(
                demo_raw, 7, 0.05, 400, RngSpec(9301, 0), table=demo_table, threads=1
            )

    def test_negative_r_refused(self, demo_raw, demo_table):
        with pytest.raises(ValueError, match="non-negative"):
            run_global_test(
                demo_raw, -1, 0.05, 400, RngSpec(9301, 0), table=demo_table, threads=1
            )


class TestFreshCalibrationPath:
    def test_without_table_calibrates_from_sample_spectrum(self, demo_raw):
        outcome = run_global_test(
            demo_raw,
            0,
            0.05,
            150,
            RngSpec(9301, 0),
            threads=1,
            allow_small=True,
        )
        data = standardize(demo_raw)
        factor = spectral_decompose(sample_covariance(data))
        from lasso_gate.data import fingerprint

        assert outcome.factor_fingerprint == fingerprint(factor, data.n)
        assert outcome.lambda_r > 0.0
        assert outcome.reject == (outcome.u_observed > 0)


class TestOutcomeRecord:
    def test_append_writes_header_once(self, demo_raw, demo_table, tmp_path):
        path = tmp_path / "decisions.csv"
        first = run_global_test(
            demo_raw, 0, 0.05, 400, RngSpec(9301, 0), table=demo_table, threads=1
        )
        second = run_global_test(
            demo_raw, 2, 0.05, 400, RngSpec(9301, 0), table=demo_table, threads=1
        )
        append_outcome_csv(first, path)
        append_outcome_csv(second, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# lasso-gate test record")
        assert lines[1] == "r,lambda_r,u_observed,reject,alpha"
        assert len(lines) == 4
        r, lam, u, reject, alpha = lines[2].split(",")
        assert (int(r), float(lam)) == (0, first.lambda_r)
        assert int(u) == first.u_observed
        assert reject == ("1" if first.reject else "0")
        assert float(alpha) == 0.05
        assert lines[3].split(",")[0] == "2"
