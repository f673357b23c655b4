from pathlib import Path

import numpy as np
import pytest

from recobench.probe import (
    LinearProbe,
    ProbeResult,
    evaluate,
    fit_linear_probe,
    read_results_csv,
    relative_report,
    write_report_csv,
    write_report_svg,
    write_results_csv,
)

FIXTURES = Path(__file__).parent / "fixtures"


def separable_data(rng, n=200):
    x = np.vstack([rng.normal((-3.0, 0.0), 0.5, (n, 2)),
                   rng.normal((3.0, 0.0), 0.5, (n, 2))])
    y = np.array(["left"] * n + ["right"] * n)
    return x, y


class TestFit:
    def test_separable_classes_high_accuracy(self, rng):
        x, y = separable_data(rng)
        probe = fit_linear_probe(x, y)
        assert evaluate(probe, x, y).top1 >= 0.99

    def test_shuffled_labels_score_at_chance(self, rng):
        k = 4
        x = rng.normal(size=(2000, 8))
        y = rng.choice([f"c{i}" for i in range(k)], size=2000)
        probe = fit_linear_probe(x[:1000], y[:1000])
        result = evaluate(probe, x[1000:], y[1000:])
        sigma = np.sqrt((1 / k) * (1 - 1 / k) / 1000)
        assert abs(result.top1 - 1 / k) < 4 * sigma

    def test_duplicated_training_set_gives_same_weights(self, rng):
        x, y = separable_data(rng, n=100)
        single = fit_linear_probe(x, y)
        doubled = fit_linear_probe(np.vstack([x, x]), np.concatenate([y, y]))
        assert np.abs(single.weights - doubled.weights).max() < 1e-8

    def test_two_starts_reach_same_objective(self, rng):
        x, y = separable_data(rng, n=150)
        a = fit_linear_probe(x, y)
        b = fit_linear_probe(x, y, init=rng.normal(size=(3, 2)))
        assert abs(a.objective - b.objective) < 1e-8
        n_test = 300
        gap = abs(evaluate(a, x, y).top1 - evaluate(b, x, y).top1) * n_test
        assert gap <= 1.0

    def test_degenerate_features_warn_but_fit(self):
        x = np.ones((40, 3))
        y = np.array(["a", "b"] * 20)
        with pytest.warns(UserWarning, match="degenerate"):
            probe = fit_linear_probe(x, y)
        assert probe.weights.shape == (4, 2)

    def test_single_class_rejected(self, rng):
        with pytest.raises(ValueError, match="2 classes"):
            fit_linear_probe(rng.normal(size=(10, 2)), np.array(["a"] * 10))

    def test_non_finite_features_rejected(self):
        x = np.zeros((4, 2))
        x[0, 0] = np.inf
        with pytest.raises(ValueError, match="finite"):
            fit_linear_probe(x, np.array(["a", "a", "b", "b"]))


class TestEvaluate:
    def constant_probe(self):
        # scores always favor class index 0 ("a")
        w = np.zeros((3, 2))
        w[-1, 0] = 1.0
        return LinearProbe(classes=("a", "b"), weights=w, objective=0.0,
                           grad_norm=0.0, n_iter=0)

    def test_all_correct(self):
        probe = self.constant_probe()
        x = np.zeros((5, 2))
        assert evaluate(probe, x, np.array(["a"] * 5)).top1 == 1.0

    def test_all_wrong(self):
        probe = self.constant_probe()
        x = np.zeros((5, 2))
        assert evaluate(probe, x, np.array(["b"] * 5)).top1 == 0.0

    def test_tie_breaks_to_lowest_class_index(self):
        w = np.zeros((3, 2))  # all scores equal -> argmax picks class 0
        probe = LinearProbe(classes=("a", "b"), weights=w, objective=0.0,
                            grad_norm=0.0, n_iter=0)
        assert list(probe.predict(np.zeros((3, 2)))) == ["a", "a", "a"]

    def test_empty_test_set(self):
        with pytest.raises(ValueError, match="empty"):
            evaluate(self.constant_probe(), np.zeros((0, 2)), np.array([]))

    def test_top1_invariant_under_row_permutation(self, rng):
        x, y = separable_data(rng, n=50)
        probe = fit_linear_probe(x, y)
        perm = rng.permutation(len(y))
        assert evaluate(probe, x, y).top1 == evaluate(probe, x[perm], y[perm]).top1


class TestRelativeReport:
    def test_baseline_vs_itself_is_zero(self):
        results = [ProbeResult("m", 0.434, 100), ProbeResult("d", 0.389, 100)]
        report = relative_report(results, results)
        assert all(d == 0.0 for d in report.deltas_pp)
        assert report.average == 0.0

    def test_average_is_arithmetic_mean(self):
        base = [ProbeResult(r, 0.5, 10) for r in ("a", "b", "c")]
        cand = [ProbeResult("a", 0.52, 10), ProbeResult("b", 0.49, 10),
                ProbeResult("c", 0.55, 10)]
        report = relative_report(cand, base)
        assert report.average == pytest.approx(2.0, abs=1e-9)

    def test_antisymmetry(self):
        base = [ProbeResult("a", 0.41, 10), ProbeResult("b", 0.52, 10)]
        cand = [ProbeResult("a", 0.46, 10), ProbeResult("b", 0.47, 10)]
        fwd = relative_report(cand, base)
        rev = relative_report(base, cand)
        assert all(x == -y for x, y in zip(fwd.deltas_pp, rev.deltas_pp))

    def test_realm_mismatch_rejected(self):
        with pytest.raises(ValueError, match="same realm"):
            relative_report([ProbeResult("a", 0.5, 10)], [ProbeResult("b", 0.5, 10)])

    def test_fixture_deltas_reproduced_exactly(self):
        candidate = read_results_csv(FIXTURES / "candidate_results.csv")
        baseline = read_results_csv(FIXTURES / "baseline_results.csv")
        report = relative_report(candidate, baseline)
        expected_lines = (FIXTURES / "expected_deltas.csv").read_text().splitlines()[1:]
        expected = {line.split(",")[0]: float(line.split(",")[1]) for line in expected_lines}
        for realm, delta in zip(report.realms, report.deltas_pp):
            assert delta == expected[realm]


class TestSerialization:
    def test_results_csv_round_trip(self, tmp_path):
        results = [ProbeResult("m", 0.875, 40), ProbeResult("d", 0.4, 10)]
        path = tmp_path / "results.csv"
        write_results_csv(results, path)
        assert read_results_csv(path) == results

    def test_report_csv_and_svg(self, tmp_path):
        base = [ProbeResult("a", 0.41, 10), ProbeResult("b", 0.52, 10)]
        cand = [ProbeResult("a", 0.46, 10), ProbeResult("b", 0.47, 10)]
        report = relative_report(cand, base)
        write_report_csv(report, tmp_path / "deltas.csv")
        lines = (tmp_path / "deltas.csv").read_text().splitlines()
        assert lines[0] == "realm,delta_pp" and len(lines) == 3
        write_report_svg(report, tmp_path / "deltas.svg")
        svg = (tmp_path / "deltas.svg").read_text()
        assert svg.startswith("<svg") and svg.count("<rect") == 2
