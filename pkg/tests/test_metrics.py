import numpy as np
import pytest
from conftest import make_censored_dataset
from hypothesis import given, settings
from hypothesis import strategies as st

from plaft.data import Dataset
from plaft.errors import DimensionError
from plaft.metrics import (MetricsReport, Truth, c_statistic, evaluate_fit, mspe,
                           mspe_for_fit, repeated_split_c, selection_rates, sse)
from plaft.model import ModelSpec, fit


def brute_force_c(times, events, scores):
    """All-pairs enumeration oracle for the censored concordance index."""
    n = len(times)
    conc = 0.0
    comp = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if times[i] < times[j] and events[i]:
                pass
            elif times[i] == times[j] and events[i] and not events[j] and i != j:
                pass
            else:
                continue
            comp += 1
            if scores[i] < scores[j]:
                conc += 1.0
            elif scores[i] == scores[j]:
                conc += 0.5
    if comp == 0:
        return None, 0
    return conc / comp, comp


def random_censored_triple(rng, n):
    times = rng.choice(np.arange(1.0, n), size=n)  # forces some ties
    events = rng.uniform(size=n) < 0.6
    scores = np.round(rng.normal(size=n), 1)       # forces some score ties
    return times, events, scores


class TestCStatistic:
    def test_perfect_concordance(self):
        t = np.array([1.0, 2.0, 3.0, 4.0])
        ev = np.ones(4, dtype=bool)
        c, n_comp = c_statistic(t, ev, t.copy())
        assert c == 1.0 and n_comp == 6

    def test_constant_scores_give_half(self):
        t = np.array([1.0, 2.0, 3.0, 4.0])
        c, _ = c_statistic(t, np.ones(4, dtype=bool), np.zeros(4))
        assert c == 0.5

    def test_matches_brute_force_exactly(self, rng):
        for _ in range(25):
            n = int(rng.integers(5, 21))
            t, ev, s = random_censored_triple(rng, n)
            if not ev.any():
                continue
            got, got_n = c_statistic(t, ev, s)
            want, want_n = brute_force_c(t, ev, s)
            assert got_n == want_n
            assert got == want  # exact equality, same arithmetic

    def test_undefined_when_no_comparable_pair(self):
        t = np.array([1.0, 2.0])
        c, n_comp = c_statistic(t, np.zeros(2, dtype=bool), np.array([0.1, 0.2]))
        assert c is None and n_comp == 0

    def test_invariance_under_increasing_transforms(self, rng):
        t, ev, s = random_censored_triple(rng, 15)
        base, _ = c_statistic(t, ev, s)
        shifted, _ = c_statistic(t, ev, s + 13.7)
        exped, _ = c_statistic(t, ev, np.exp(s))
        assert base == shifted == exped

    def test_reversal_identity_without_ties(self, rng):
        t = rng.normal(size=12)
        ev = rng.uniform(size=12) < 0.7
        if ev.sum() == 0:
            ev[0] = True
        s = rng.normal(size=12)  # continuous: no ties a.s.
        a, _ = c_statistic(t, ev, s)
        b, _ = c_statistic(t, ev, -s)
        assert a + b == pytest.approx(1.0, abs=1e-12)

    def test_late_censored_subject_is_irrelevant(self, rng):
        t = np.array([1.0, 2.0, 3.0, 10.0])
        ev = np.array([True, True, False, False])
        s = rng.normal(size=4)
        c_full, n_full = c_statistic(t, ev, s)
        c_drop, n_drop = c_statistic(t[:3], ev[:3], s[:3])
        # dropping the censored subject with the largest time removes its
        # pairs; counts change but concordant/comparable differences match
        assert n_full - n_drop == 2  # pairs (1, 4) and (2, 4)
        conc_full = c_full * n_full
        conc_drop = c_drop * n_drop
        extra = float(s[0] < s[3]) + float(s[1] < s[3])
        assert conc_full == pytest.approx(conc_drop + extra)

    def test_tied_times_one_event_comparable(self):
        t = np.array([2.0, 2.0])
        ev = np.array([True, False])
        c, n_comp = c_statistic(t, ev, np.array([0.0, 1.0]))
        assert n_comp == 1 and c == 1.0
        c2, n2 = c_statistic(t, np.array([True, True]), np.array([0.0, 1.0]))
        assert n2 == 0 and c2 is None

    def test_size_validation(self):
        with pytest.raises(DimensionError):
            c_statistic([1.0], [True], [0.0])


class TestMspe:
    def test_perfect_fit_is_zero(self, rng):
        Z = rng.normal(size=(20, 3))
        phi = rng.normal(size=20)
        vt = rng.normal(size=3)
        assert mspe(phi, phi, vt, vt, Z) == (0.0, 0.0)

    def test_decomposition(self, rng):
        Z = rng.normal(size=(30, 2))
        phi_true = rng.normal(size=30)
        vt = np.array([0.5, -1.0])
        m1, m2 = mspe(phi_true + 0.3, phi_true, vt, vt, Z)
        assert m2 == 0.0 and m1 > 0.0

    def test_matches_direct_loop(self, rng):
        n_test = 50
        Z = rng.normal(size=(n_test, 4))
        phi_hat = rng.normal(size=n_test)
        phi_true = rng.normal(size=n_test)
        vt_hat = rng.normal(size=4)
        vt_true = rng.normal(size=4)
        m1, m2 = mspe(phi_hat, phi_true, vt_hat, vt_true, Z)
        acc1 = acc2 = 0.0
        for j in range(n_test):
            dz = float((vt_hat - vt_true) @ Z[j])
            acc1 += (phi_hat[j] - phi_true[j] + dz) ** 2
            acc2 += dz ** 2
        assert m1 == pytest.approx(acc1 / n_test, abs=1e-12)
        assert m2 == pytest.approx(acc2 / n_test, abs=1e-12)

    def test_mspe2_equals_mspe1_when_phi_matches(self, rng):
        ds = make_censored_dataset(rng, 30, d=2)
        fr = fit(ds, ModelSpec(nonlinear_covariates=(0,), n_knots=2))
        truth = Truth(np.ones(2), lambda c: fr.clinical_effect(c))
        m1, m2 = mspe_for_fit(fr, truth, ds)
        # phi_hat == phi_true (anchored identically): only the linear error
        assert m1 == pytest.approx(m2, rel=1e-10)


class TestSelectionRates:
    def test_oracle_selection(self):
        vt = np.array([1.0, 0.0, -2.0, 0.0])
        assert selection_rates(vt, vt) == (1.0, 0.0)

    def test_null_model(self):
        vt_true = np.array([1.0, 0.0, -2.0, 0.0])
        assert selection_rates(np.zeros(4), vt_true) == (1.0, 1.0)

    def test_random_supports_against_set_arithmetic(self, rng):
        for _ in range(10):
            true = rng.choice([0.0, 1.0], size=8) * rng.normal(size=8)
            hat = rng.choice([0.0, 1.0], size=8) * rng.normal(size=8)
            p_c, p_i = selection_rates(hat, true)
            zeros = {j for j in range(8) if true[j] == 0}
            nonzeros = set(range(8)) - zeros
            hat_zero = {j for j in range(8) if abs(hat[j]) < 1e-8}
            want_pc = len(hat_zero & zeros) / len(zeros) if zeros else None
            want_pi = len(hat_zero & nonzeros) / len(nonzeros) if nonzeros else None
            assert p_c == want_pc and p_i == want_pi

    def test_undefined_flags(self):
        p_c, p_i = selection_rates(np.zeros(3), np.array([1.0, 2.0, 3.0]))
        assert p_c is None and p_i == 1.0


class TestSse:
    def test_identical_vectors(self):
        assert sse(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0

    def test_unit_difference(self):
        assert sse(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == 1.0

    @given(st.integers(1, 12))
    @settings(max_examples=20, deadline=None)
    def test_random_against_dot_oracle(self, d):
        r = np.random.default_rng(d)
        a, b = r.normal(size=d), r.normal(size=d)
        want = sum((x - y) ** 2 for x, y in zip(a, b))
        assert sse(a, b) == pytest.approx(want, abs=1e-14, rel=1e-14)


class TestEvaluateAndSplits:
    def test_overfit_note_on_training_data(self, rng):
        ds = make_censored_dataset(rng, 25, d=2)
        fr = fit(ds, ModelSpec(nonlinear_covariates=(0,), n_knots=2))
        rep = evaluate_fit(fr, ds)
        assert any("training" in note for note in rep.notes)
        rep2 = evaluate_fit(fr, make_censored_dataset(rng, 25, d=2))
        assert not rep2.notes

    def test_truth_metrics_filled(self, rng):
        ds = make_censored_dataset(rng, 25, d=3, theta=[1.0, 0.0, 0.0])
        fr = fit(ds, ModelSpec(nonlinear_covariates=(0,), n_knots=2))
        truth = Truth(np.array([1.0, 0.0, 0.0]), lambda c: np.atleast_2d(c)[:, 0])
        rep = evaluate_fit(fr, ds, truth=truth)
        assert rep.mspe1 is not None and rep.sse is not None
        assert rep.p_c is not None and rep.p_i is not None

    def test_repeated_splits_detect_signal(self, rng):
        # informative model: mean validation c must exceed chance by 3 SEs
        n = 60
        Z = rng.normal(size=(n, 1))
        X = rng.uniform(-1, 1, size=(n, 1))
        T = X[:, 0] + 2.0 * Z[:, 0] + 0.3 * rng.normal(size=n)
        C = T + rng.uniform(0, 2, size=n) - 0.4
        ds = Dataset(np.minimum(T, C), T <= C, X, Z)
        fr = fit(ds, ModelSpec(nonlinear_covariates=(), standardize=False))
        mean_c, cs, undefined = repeated_split_c(ds, fr, repeats=60, seed=3)
        se = np.std(cs, ddof=1) / np.sqrt(len(cs))
        assert mean_c > 0.5 + 3 * se
        assert undefined == 0
        assert len(cs) + undefined == 60

    def test_report_serialization(self):
        rep = MetricsReport(c_statistic=0.7, comparable_pairs=10, mspe1=0.2)
        d = rep.as_dict()
        assert d["c_statistic"] == 0.7 and d["mspe1"] == 0.2 and d["sse"] is None
        assert "c_statistic" in rep.summary()
