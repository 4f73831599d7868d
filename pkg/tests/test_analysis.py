import itertools

import numpy as np
import pytest
from scipy import stats as sstats

from aeval.analysis import (RatingRow, RatingsTable, alpha_from_table,
                            build_analysis_report, correlate,
                            krippendorff_alpha, load_export, mushra_band,
                            parse_export_csv, ranking_permutations,
                            screen_raters, summarize, wilcoxon_signed_rank,
                            write_plot_csv)
from aeval.errors import DataError


def table_from(rows, demographics=None, complete=None):
    return RatingsTable(tuple(RatingRow(*r) for r in rows),
                        demographics or {}, complete or {})


class TestMushraBand:
    @pytest.mark.parametrize("score,label", [
        (0, "bad"), (19, "bad"), (20, "poor"), (39, "poor"), (40, "fair"),
        (59, "fair"), (60, "good"), (79, "good"), (80, "excellent"),
        (92, "excellent"), (100, "excellent"),
    ])
    def test_bands(self, score, label):
        assert mushra_band(score) == label

    def test_out_of_range(self):
        with pytest.raises(DataError):
            mushra_band(101)
        with pytest.raises(DataError):
            mushra_band(-1)


class TestScreenRaters:
    def test_boundary_inclusion(self):
        rows = []
        for rater, score in [("A", 90), ("B", 84), ("C", 85)]:
            # two reference ratings averaging to the target, plus filler
            rows.append((rater, "i1", "reference", score))
            rows.append((rater, "i2", "reference", score))
            rows.append((rater, "i1", "sysA", 50))
        # B rates 84/85.8 -> mean 84.9
        rows = [r for r in rows if r[0] != "B"]
        rows += [("B", "i1", "reference", 84), ("B", "i2", "reference", 85),
                 ("B", "i3", "reference", 85), ("B", "i4", "reference", 85),
                 ("B", "i5", "reference", 85), ("B", "i6", "reference", 85),
                 ("B", "i7", "reference", 85), ("B", "i8", "reference", 85),
                 ("B", "i9", "reference", 85), ("B", "i10", "reference", 85)]
        t = table_from(rows)
        out = screen_raters(t, 85)
        assert out["kept"] == ["A", "C"]
        assert [r["rater"] for r in out["removed"]] == ["B"]

    def test_all_perfect(self):
        t = table_from([("A", "i", "reference", 100),
                        ("B", "i", "reference", 100)])
        out = screen_raters(t, 85)
        assert out["kept"] == ["A", "B"] and out["removed"] == []

    def test_empty(self):
        out = screen_raters(table_from([]), 85)
        assert out == {"kept": [], "removed": []}

    def test_incomplete_removed_first(self):
        t = table_from([("A", "i", "reference", 100)], complete={"A": False})
        out = screen_raters(t, 85)
        assert out["kept"] == []
        assert out["removed"][0]["reason"] == "incomplete session"

    def test_no_reference_ratings(self):
        t = table_from([("A", "i", "sysA", 100)])
        out = screen_raters(t, 85)
        assert out["removed"][0]["reason"] == "no reference ratings"

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(0)
        rows = []
        for i in range(20):
            rows.append((f"r{i}", "i1", "reference", int(rng.integers(60, 101))))
        t = table_from(rows)
        kept_sets = [set(screen_raters(t, th)["kept"])
                     for th in range(60, 101, 5)]
        for lo, hi in zip(kept_sets, kept_sets[1:]):
            assert hi <= lo


def oracle_exact_wilcoxon(x, y):
    """Brute-force enumeration of all sign patterns."""
    d = np.asarray(x, float) - np.asarray(y, float)
    d = d[d != 0]
    n = len(d)
    ranks = sstats.rankdata(np.abs(d))
    w_obs = ranks[d > 0].sum()
    ws = []
    for signs in itertools.product([0, 1], repeat=n):
        ws.append(sum(r for r, s in zip(ranks, signs) if s))
    ws = np.array(ws)
    p_le = np.mean(ws <= w_obs + 1e-12)
    p_ge = np.mean(ws >= w_obs - 1e-12)
    return min(1.0, 2 * min(p_le, p_ge))


class TestWilcoxon:
    def test_identical(self):
        r = wilcoxon_signed_rank([3, 1, 4], [3, 1, 4])
        assert r.p_value == 1.0

    def test_spec_example(self):
        r = wilcoxon_signed_rank([1, 2, 3], [0, 0, 0])
        assert r.p_value == pytest.approx(0.25, abs=1e-12)
        assert r.method == "wilcoxon_signed_rank_exact"

    def test_exact_matches_enumeration_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.integers(0, 30, 12)
            y = rng.integers(0, 30, 12)
            got = wilcoxon_signed_rank(x, y)
            assert got.p_value == pytest.approx(oracle_exact_wilcoxon(x, y),
                                                abs=1e-9)

    def test_exact_with_ties_matches_oracle(self):
        x = [5, 5, 7, 9, 9, 9, 2, 2]
        y = [3, 3, 7, 4, 4, 4, 8, 8]
        got = wilcoxon_signed_rank(x, y)
        assert got.method == "wilcoxon_signed_rank_exact"
        assert got.p_value == pytest.approx(oracle_exact_wilcoxon(x, y),
                                            abs=1e-9)

    def test_normal_branch_vs_permutation(self):
        rng = np.random.default_rng(2)
        x = rng.integers(0, 100, 40)
        y = np.clip(x + rng.integers(-20, 25, 40), 0, 100)
        got = wilcoxon_signed_rank(x, y)
        assert got.method == "wilcoxon_signed_rank_normal"
        d = (x - y).astype(float)
        d = d[d != 0]
        ranks = sstats.rankdata(np.abs(d))
        w_obs = ranks[d > 0].sum()
        draws = rng.integers(0, 2, size=(100_000, len(ranks)))
        ws = draws @ ranks
        mu = ranks.sum() / 2
        p_hat = np.mean(np.abs(ws - mu) >= abs(w_obs - mu) - 1e-9)
        assert got.p_value == pytest.approx(p_hat, abs=0.02)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        x = rng.integers(0, 100, 15)
        y = rng.integers(0, 100, 15)
        assert wilcoxon_signed_rank(x, y).p_value == pytest.approx(
            wilcoxon_signed_rank(y, x).p_value, abs=1e-12)

    def test_errors(self):
        with pytest.raises(DataError):
            wilcoxon_signed_rank([1, 2], [1])
        with pytest.raises(DataError):
            wilcoxon_signed_rank([], [])


class TestKrippendorff:
    def test_perfect_agreement(self):
        assert krippendorff_alpha([[1, 2, 3], [1, 2, 3]]) == 1.0

    def test_hand_disagreement(self):
        # D_o = 10000, D_e = 20000/3 -> alpha = -0.5
        a = krippendorff_alpha([[0.0, 100.0], [100.0, 0.0]])
        assert a == pytest.approx(-0.5, abs=1e-9)

    def test_insufficient(self):
        m = np.full((2, 2), np.nan)
        m[0, 0] = 50
        with pytest.raises(DataError, match="insufficient"):
            krippendorff_alpha(m)

    def test_single_value_units_ignored(self):
        m = np.array([[1.0, 5.0, np.nan],
                      [1.0, np.nan, 7.0]])
        # only unit 0 is pairable and agrees
        assert krippendorff_alpha(m) == 1.0

    def test_agreement_with_unit_spread(self):
        # raters agree per unit while units differ: still 1.0
        m = np.array([[10.0, 90.0], [10.0, 90.0], [10.0, 90.0]])
        assert krippendorff_alpha(m) == 1.0

    def test_from_table(self):
        rows = [("r1", "i1", "sysA", 10), ("r2", "i1", "sysA", 10),
                ("r1", "i2", "sysA", 90), ("r2", "i2", "sysA", 90)]
        assert alpha_from_table(table_from(rows)) == 1.0


class TestCorrelate:
    def test_perfect_linear(self):
        out = correlate([1, 2, 3], [2, 4, 6])
        assert out["pearson_r"] == pytest.approx(1.0)
        assert out["spearman_rho"] == pytest.approx(1.0)
        assert out["r_squared"] == pytest.approx(1.0)

    def test_monotone_nonlinear(self):
        out = correlate([1, 2, 3], [1, 4, 9])
        assert out["spearman_rho"] == pytest.approx(1.0)
        assert out["pearson_r"] < 1.0

    def test_constant_input_null(self):
        out = correlate([1, 2, 3], [5, 5, 5])
        assert out["pearson_r"] is None
        assert "constant" in out["reason"]

    def test_against_scipy_oracle(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=50)
        x = 0.6 * y + rng.normal(size=50)
        out = correlate(y, x)
        pr = sstats.pearsonr(x, y)
        sr = sstats.spearmanr(x, y)
        lr = sstats.linregress(x, y)
        assert out["pearson_r"] == pytest.approx(pr.statistic, abs=1e-9)
        assert out["p_values"]["pearson"] == pytest.approx(pr.pvalue, abs=1e-9)
        assert out["spearman_rho"] == pytest.approx(sr.statistic, abs=1e-9)
        assert out["p_values"]["spearman"] == pytest.approx(sr.pvalue, abs=1e-9)
        assert out["r_squared"] == pytest.approx(lr.rvalue ** 2, abs=1e-9)

    def test_affine_invariance(self):
        rng = np.random.default_rng(5)
        y = rng.normal(size=30)
        x = rng.normal(size=30)
        base = correlate(y, x)["pearson_r"]
        scaled = correlate(3.0 * np.asarray(y) + 7.0, x)["pearson_r"]
        assert scaled == pytest.approx(base, abs=1e-12)

    def test_length_errors(self):
        with pytest.raises(DataError):
            correlate([1, 2], [1, 2])


class TestRankingPermutations:
    def test_single_strict_order(self):
        t = table_from([("r", "i", "sysA", 80), ("r", "i", "sysB", 60),
                        ("r", "i", "sysC", 40)])
        out = ranking_permutations(t, ["sysA", "sysB", "sysC"])
        assert out["orderings"]["sysA>sysB>sysC"] == 1
        assert sum(out["orderings"].values()) == 1
        assert out["tied"] == 0

    def test_tie_bucket(self):
        t = table_from([("r", "i", "sysA", 50), ("r", "i", "sysB", 50),
                        ("r", "i", "sysC", 40)])
        out = ranking_permutations(t, ["sysA", "sysB", "sysC"])
        assert out["tied"] == 1
        assert sum(out["orderings"].values()) == 0

    def test_pairwise_counts(self):
        rows = []
        # A beats B on 123 responses, B beats A on 99; C always last
        for i in range(123):
            rows += [(f"r{i}", "x", "sysA", 70), (f"r{i}", "x", "sysB", 60),
                     (f"r{i}", "x", "sysC", 10)]
        for i in range(123, 222):
            rows += [(f"r{i}", "x", "sysA", 60), (f"r{i}", "x", "sysB", 70),
                     (f"r{i}", "x", "sysC", 10)]
        out = ranking_permutations(table_from(rows), ["sysA", "sysB", "sysC"])
        assert out["pairwise"]["sysA>sysB"] == 123
        assert out["pairwise"]["sysB>sysA"] == 99
        assert out["orderings"]["sysA>sysB>sysC"] == 123
        assert out["orderings"]["sysB>sysA>sysC"] == 99

    def test_counts_sum_to_responses(self):
        rng = np.random.default_rng(6)
        rows = []
        for r in range(10):
            for i in range(5):
                for s in ("sysA", "sysB", "sysC"):
                    rows.append((f"r{r}", f"i{i}", s,
                                 int(rng.integers(0, 101))))
        out = ranking_permutations(table_from(rows), ["sysA", "sysB", "sysC"])
        assert sum(out["orderings"].values()) + out["tied"] == 50

    def test_unknown_system(self):
        t = table_from([("r", "i", "sysA", 10), ("r", "i", "sysB", 10),
                        ("r", "i", "sysC", 10)])
        with pytest.raises(DataError, match="unknown system"):
            ranking_permutations(t, ["sysA", "sysB", "sysZ"])


class TestSummarize:
    def test_uniform_scores(self):
        rows = [(r, i, c, 50)
                for r in ("r1", "r2") for i in ("i1", "i2")
                for c in ("reference", "anchor", "sysA")]
        out = summarize(table_from(rows))
        for cond in ("reference", "anchor", "sysA"):
            assert out["conditions"][cond]["mean"] == 50.0
        for test in out["pairwise_tests"]:
            assert test["p_value"] == 1.0

    def test_band_labels(self):
        rng = np.random.default_rng(7)
        rows = []
        means = {"reference": 92, "sysA": 53, "sysB": 53, "sysC": 29}
        for r in range(6):
            for i in range(4):
                for cond, mu in means.items():
                    score = int(np.clip(mu + rng.integers(-2, 3), 0, 100))
                    rows.append((f"r{r}", f"i{i}", cond, score))
        out = summarize(table_from(rows))
        assert out["conditions"]["reference"]["band"] == "excellent"
        assert out["conditions"]["sysA"]["band"] == "fair"
        assert out["conditions"]["sysB"]["band"] == "fair"
        assert out["conditions"]["sysC"]["band"] == "poor"

    def test_quartiles_ordered(self):
        rng = np.random.default_rng(8)
        rows = [("r1", f"i{i}", "sysA", int(rng.integers(0, 101)))
                for i in range(30)]
        out = summarize(table_from(rows))
        c = out["conditions"]["sysA"]
        assert c["q1"] <= c["median"] <= c["q3"]

    def test_demographic_breakdown(self):
        rows = [("r1", "i", "reference", 90), ("r1", "i", "sysA", 70),
                ("r2", "i", "reference", 95), ("r2", "i", "sysA", 40)]
        demo = {"r1": {"age_bracket": "18-24", "production_familiarity": "very",
                       "synthesis_knowledge": "slightly",
                       "equipment_spend": "over-750"},
                "r2": {"age_bracket": "25-50", "production_familiarity": "very",
                       "synthesis_knowledge": "slightly",
                       "equipment_spend": "under-100"}}
        out = summarize(table_from(rows, demographics=demo))
        ages = out["demographics"]["age_bracket"]
        assert set(ages) == {"18-24", "25-50"}
        assert ages["18-24"]["conditions"]["sysA"]["mean"] == 70.0
        fam = out["demographics"]["production_familiarity"]["very"]
        assert fam["conditions"]["reference"]["count"] == 2

    def test_empty_table_errors(self):
        with pytest.raises(DataError):
            summarize(table_from([]))


class TestExportIngestion:
    CSV = (
        "session,age_bracket,production_familiarity,synthesis_knowledge,"
        "equipment_spend,trial_index,item_id,condition,score,session_complete\n"
        "s1,18-24,very,slightly,over-750,0,item-00,reference,95,true\n"
        "s1,18-24,very,slightly,over-750,0,item-00,anchor,15,true\n"
        "s1,18-24,very,slightly,over-750,0,item-00,sysA,60,true\n"
    )

    def test_parse_csv(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(self.CSV)
        t = parse_export_csv(p)
        assert len(t.rows) == 3
        assert t.demographics["s1"]["age_bracket"] == "18-24"
        assert t.complete["s1"] is True

    def test_csv_error_has_line_number(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(self.CSV + "s1,x\n")
        with pytest.raises(DataError, match="line 5"):
            parse_export_csv(p)

    def test_csv_bad_score_line(self, tmp_path):
        p = tmp_path / "bad2.csv"
        bad_row = ("s2,18-24,very,slightly,over-750,0,item-00,sysA,high,true\n")
        p.write_text(self.CSV + bad_row)
        with pytest.raises(DataError, match="line 5"):
            parse_export_csv(p)

    def test_load_export_json(self, tmp_path):
        doc = {"sessions": [{
            "id": "s1",
            "demographics": {"age_bracket": "18-24"},
            "complete": False,
            "responses": [{"trial_index": 0, "item_id": "i",
                           "scores": {"reference": 90, "anchor": 10,
                                      "sysA": 55, "sysB": 45, "sysC": 35}}],
        }]}
        p = tmp_path / "e.json"
        p.write_text(__import__("json").dumps(doc))
        t = load_export(p)
        assert len(t.rows) == 5
        assert t.complete["s1"] is False

    def test_plot_csv(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(self.CSV)
        t = parse_export_csv(p)
        out = tmp_path / "plot.csv"
        write_plot_csv(out, t)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "condition,rater,item,score"
        assert len(lines) == 4


class TestBuildReport:
    def make_table(self):
        rng = np.random.default_rng(9)
        rows = []
        demo = {}
        complete = {}
        means = {"reference": 95, "anchor": 18, "sysA": 75, "sysB": 55,
                 "sysC": 35}
        for r in range(5):
            rater = f"good{r}"
            demo[rater] = {"age_bracket": "25-50",
                           "production_familiarity": "very",
                           "synthesis_knowledge": "moderately",
                           "equipment_spend": "250-500"}
            complete[rater] = True
            for i in range(6):
                for cond, mu in means.items():
                    score = int(np.clip(mu + rng.integers(-4, 5), 0, 100))
                    rows.append((rater, f"i{i}", cond, score))
        # one sloppy rater
        demo["bad0"] = demo["good0"]
        complete["bad0"] = True
        for i in range(6):
            for cond in means:
                rows.append(("bad0", f"i{i}", cond, 50))
        return table_from(rows, demo, complete)

    def test_screening_and_structure(self):
        report = build_analysis_report(self.make_table(), 85.0)
        assert report["kept_raters"] == 5
        assert [r["rater"] for r in report["screening"]["removed"]] == ["bad0"]
        assert report["krippendorff_alpha"] > 0.8
        orders = report["permutations"]["orderings"]
        assert max(orders, key=orders.get) == "sysA>sysB>sysC"
        assert report["correlations"]["reason"] == "no metrics report supplied"

    def test_no_kept_raters(self):
        t = table_from([("r", "i", "reference", 10)], complete={"r": True})
        report = build_analysis_report(t, 85.0)
        assert report["kept_raters"] == 0
        assert report["summary"] is None

    def test_correlations_join(self):
        t = self.make_table()
        metric_report = {"per_item": {
            "sysA": {f"i{i}": {"mse": 0.1 + 0.01 * i} for i in range(6)},
            "sysB": {f"i{i}": {"mse": 0.3 + 0.01 * i} for i in range(6)},
            "sysC": {f"i{i}": {"mse": 0.5 + 0.01 * i} for i in range(6)},
        }}
        report = build_analysis_report(t, 85.0, metric_report=metric_report)
        mse = report["correlations"]["mse"]
        assert mse["n"] == 18
        # higher mse was attached to lower-rated systems
        assert mse["pearson_r"] < -0.8

    def test_bonferroni(self):
        report = build_analysis_report(self.make_table(), 85.0,
                                       bonferroni=True)
        tests = report["summary"]["pairwise_tests"]
        assert all("p_value_bonferroni" in t for t in tests
                   if t["p_value"] is not None)
