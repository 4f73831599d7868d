"""Subjective-data pipeline: screening, descriptives, significance tests,
inter-rater agreement, ranking permutations, and metric/rating correlation.

All computations are pure over an immutable ratings table.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np
from scipy import stats as sstats

from .errors import DataError

REFERENCE = "reference"
ANCHOR = "anchor"
EXACT_WILCOXON_MAX_N = 25

BANDS = (
    (0, 20, "bad"),
    (20, 40, "poor"),
    (40, 60, "fair"),
    (60, 80, "good"),
    (80, 100, "excellent"),
)

DEMOGRAPHIC_FIELDS = (
    "age_bracket",
    "production_familiarity",
    "synthesis_knowledge",
    "equipment_spend",
)


@dataclass(frozen=True)
class RatingRow:
    rater: str
    item: str
    condition: str
    score: int


@dataclass(frozen=True)
class RatingsTable:
    """Slider ratings plus per-rater demographics and session completeness."""

    rows: tuple
    demographics: dict = field(default_factory=dict)
    complete: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for r in self.rows:
            if not 0 <= r.score <= 100:
                raise DataError(f"score out of range: {r.score}")
            key = (r.rater, r.item, r.condition)
            if key in seen:
                raise DataError(f"duplicate rating for {key}")
            seen.add(key)

    @property
    def raters(self):
        return sorted({r.rater for r in self.rows})

    @property
    def conditions(self):
        return sorted({r.condition for r in self.rows})

    def filter_raters(self, keep) -> "RatingsTable":
        keep = set(keep)
        return RatingsTable(
            tuple(r for r in self.rows if r.rater in keep),
            {k: v for k, v in self.demographics.items() if k in keep},
            {k: v for k, v in self.complete.items() if k in keep},
        )

    def scores_by(self, condition):
        return [r.score for r in self.rows if r.condition == condition]


def mushra_band(score) -> str:
    """Rating-scale label: [0,20) bad ... [80,100] excellent."""
    if not 0 <= score <= 100:
        raise DataError(f"score out of range: {score}")
    for lo, hi, label in BANDS:
        if lo <= score < hi:
            return label
    return "excellent"  # score == 100


def screen_raters(table: RatingsTable, threshold: float) -> dict:
    """Split raters into kept/removed.

    Incomplete sessions go first, then raters with no reference ratings,
    then raters whose mean reference score is strictly below the threshold
    (exactly at the threshold is kept).
    """
    kept, removed = [], []
    for rater in table.raters:
        if not table.complete.get(rater, True):
            removed.append({"rater": rater, "reason": "incomplete session"})
            continue
        ref = [r.score for r in table.rows
               if r.rater == rater and r.condition == REFERENCE]
        if not ref:
            removed.append({"rater": rater, "reason": "no reference ratings"})
            continue
        mean_ref = float(np.mean(ref))
        if mean_ref < threshold:
            removed.append({
                "rater": rater,
                "reason": f"reference average {mean_ref:.2f} below {threshold:g}",
            })
        else:
            kept.append(rater)
    return {"kept": kept, "removed": removed}


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank


@dataclass(frozen=True)
class StatTestResult:
    statistic: float
    p_value: float
    method: str


def _exact_signed_rank_p(ranks: np.ndarray, w_plus: float) -> float:
    # Distribution of W+ over all 2^n sign patterns, via the generating
    # polynomial in 2*rank units (average ranks are half-integral).
    scaled = np.rint(2.0 * ranks).astype(int)
    total = int(scaled.sum())
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in scaled:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[: dist.size - r]
        dist = dist + shifted
    dist /= 2.0 ** len(scaled)
    w2 = int(round(2.0 * w_plus))
    p_le = dist[: w2 + 1].sum()
    p_ge = dist[w2:].sum()
    return float(min(1.0, 2.0 * min(p_le, p_ge)))


def _normal_signed_rank_p(ranks: np.ndarray, w_plus: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(ranks, return_counts=True)
    var -= float(np.sum(counts.astype(float) ** 3 - counts)) / 48.0
    if var <= 0:
        return 1.0
    d = w_plus - mean
    d -= 0.5 * np.sign(d)  # continuity correction toward the mean
    z = d / math.sqrt(var)
    return float(min(1.0, math.erfc(abs(z) / math.sqrt(2.0))))


def wilcoxon_signed_rank(x, y) -> StatTestResult:
    """Two-sided paired signed-rank test.

    Zero differences are dropped. Up to 25 non-zero pairs the null is
    enumerated exactly; beyond that a normal approximation with tie and
    continuity corrections is used. All-zero differences give p = 1.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("paired samples must be equal-length vectors")
    if x.size == 0:
        raise DataError("empty input")
    diff = x - y
    diff = diff[diff != 0]
    if diff.size == 0:
        return StatTestResult(0.0, 1.0, "wilcoxon_signed_rank_exact")
    ranks = sstats.rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    if diff.size <= EXACT_WILCOXON_MAX_N:
        p = _exact_signed_rank_p(ranks, w_plus)
        method = "wilcoxon_signed_rank_exact"
    else:
        p = _normal_signed_rank_p(ranks, w_plus)
        method = "wilcoxon_signed_rank_normal"
    return StatTestResult(w_plus, p, method)


# ---------------------------------------------------------------------------
# Krippendorff alpha (interval metric)


def krippendorff_alpha(matrix) -> float:
    """Interval-metric alpha = 1 - D_o/D_e over the coincidence construction.

    `matrix` is raters x units with NaN marking missing scores. Units with
    fewer than two values are ignored.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise DataError("expected a raters x units matrix")
    d_obs_num = 0.0
    pooled = []
    n_pairable = 0
    for u in range(m.shape[1]):
        vals = m[:, u]
        vals = vals[~np.isnan(vals)]
        if vals.size < 2:
            continue
        mu = vals.size
        s, s2 = vals.sum(), np.sum(vals * vals)
        d_obs_num += 2.0 * (mu * s2 - s * s) / (mu - 1)
        pooled.append(vals)
        n_pairable += mu
    if n_pairable < 2:
        raise DataError("insufficient pairable values")
    d_obs = d_obs_num / n_pairable
    if d_obs == 0.0:
        return 1.0
    allv = np.concatenate(pooled)
    n = allv.size
    s, s2 = allv.sum(), np.sum(allv * allv)
    d_exp = 2.0 * (n * s2 - s * s) / (n * (n - 1))
    return float(1.0 - d_obs / d_exp)


def alpha_from_table(table: RatingsTable) -> float:
    """Alpha over (item, condition) units scored by each rater."""
    raters = table.raters
    units = sorted({(r.item, r.condition) for r in table.rows})
    if not raters or not units:
        raise DataError("insufficient pairable values")
    idx_r = {r: i for i, r in enumerate(raters)}
    idx_u = {u: j for j, u in enumerate(units)}
    m = np.full((len(raters), len(units)), np.nan)
    for r in table.rows:
        m[idx_r[r.rater], idx_u[(r.item, r.condition)]] = r.score
    return krippendorff_alpha(m)


# ---------------------------------------------------------------------------
# Correlation


def correlate(ratings, metric_values) -> dict:
    """Pearson r, Spearman rho (Pearson on average ranks), and OLS R^2.

    Returns null entries with a reason when an input is constant.
    """
    x = np.asarray(metric_values, dtype=np.float64)
    y = np.asarray(ratings, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("ratings and metric values must be equal-length vectors")
    n = x.size
    if n < 3:
        raise DataError("need at least 3 paired values")
    out = {"n": int(n), "pearson_r": None, "spearman_rho": None,
           "r_squared": None, "p_values": {}}
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        out["reason"] = "constant input: correlation undefined"
        return out

    def pearson(a, b):
        a = a - a.mean()
        b = b - b.mean()
        r = float(a @ b / math.sqrt((a @ a) * (b @ b)))
        r = max(-1.0, min(1.0, r))
        if abs(r) == 1.0:
            return r, 0.0
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        return r, float(2.0 * sstats.t.sf(abs(t), df=n - 2))

    out["pearson_r"], out["p_values"]["pearson"] = pearson(x, y)
    rho, p_s = pearson(sstats.rankdata(x), sstats.rankdata(y))
    out["spearman_rho"], out["p_values"]["spearman"] = rho, p_s

    # R^2 of ratings regressed on the metric (simple OLS).
    design = np.column_stack([x, np.ones(n)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    out["r_squared"] = float(1.0 - np.sum(resid ** 2) / ss_tot)
    return out


# ---------------------------------------------------------------------------
# Ranking permutations


def _responses_by_pair(table: RatingsTable):
    by_pair = {}
    for r in table.rows:
        by_pair.setdefault((r.rater, r.item), {})[r.condition] = r.score
    return by_pair


def ranking_permutations(table: RatingsTable, systems) -> dict:
    """Count strict orderings of the three systems per (rater, item).

    Responses with any tie between the three scores land in "tied" rather
    than being broken arbitrarily. Pairwise counts tally strict wins for
    every system pair.
    """
    systems = list(systems)
    if len(systems) != 3:
        raise DataError("ranking permutations need exactly 3 system names")
    known = set(table.conditions)
    for s in systems:
        if s not in known:
            raise DataError(f"unknown system name: {s}")
    orderings = {">".join(p): 0 for p in permutations(systems)}
    tied = 0
    pairwise = {f"{a}>{b}": 0 for a, b in permutations(systems, 2)}
    for scores in _responses_by_pair(table).values():
        for a, b in combinations(systems, 2):
            if a in scores and b in scores:
                if scores[a] > scores[b]:
                    pairwise[f"{a}>{b}"] += 1
                elif scores[b] > scores[a]:
                    pairwise[f"{b}>{a}"] += 1
        if not all(s in scores for s in systems):
            continue
        vals = [scores[s] for s in systems]
        if len(set(vals)) < 3:
            tied += 1
        else:
            order = sorted(systems, key=lambda s: -scores[s])
            orderings[">".join(order)] += 1
    return {"orderings": orderings, "tied": tied, "pairwise": pairwise}


# ---------------------------------------------------------------------------
# Descriptives and the full report


def _paired_scores(table: RatingsTable, cond_a: str, cond_b: str,
                   per_rater_means: bool = False):
    if per_rater_means:
        acc = {}
        for r in table.rows:
            if r.condition in (cond_a, cond_b):
                acc.setdefault((r.rater, r.condition), []).append(r.score)
        x, y = [], []
        for rater in {k[0] for k in acc}:
            a = acc.get((rater, cond_a))
            b = acc.get((rater, cond_b))
            if a and b:
                x.append(np.mean(a))
                y.append(np.mean(b))
        return x, y
    x, y = [], []
    for scores in _responses_by_pair(table).values():
        if cond_a in scores and cond_b in scores:
            x.append(scores[cond_a])
            y.append(scores[cond_b])
    return x, y


def _condition_descriptives(table: RatingsTable) -> dict:
    out = {}
    for cond in table.conditions:
        scores = np.array(table.scores_by(cond), dtype=np.float64)
        q1, med, q3 = np.percentile(scores, [25, 50, 75])
        mean = float(scores.mean())
        out[cond] = {
            "mean": mean,
            "median": float(med),
            "q1": float(q1),
            "q3": float(q3),
            "count": int(scores.size),
            "band": mushra_band(min(100.0, max(0.0, mean))),
        }
    return out


def _pairwise_tests(table: RatingsTable, per_rater_means: bool = False) -> list:
    results = []
    for a, b in combinations(table.conditions, 2):
        x, y = _paired_scores(table, a, b, per_rater_means)
        if not x:
            results.append({"a": a, "b": b, "n_pairs": 0, "statistic": None,
                            "p_value": None, "method": None,
                            "reason": "no paired responses"})
            continue
        res = wilcoxon_signed_rank(x, y)
        results.append({"a": a, "b": b, "n_pairs": len(x),
                        "statistic": res.statistic, "p_value": res.p_value,
                        "method": res.method})
    return results


def summarize(table: RatingsTable, per_rater_means: bool = False) -> dict:
    """Descriptive statistics plus demographic subgroup breakdowns.

    The table is expected to be screened already.
    """
    if not table.rows:
        raise DataError("empty ratings table")
    per_rater = {}
    for rater in table.raters:
        scores = [r.score for r in table.rows if r.rater == rater]
        per_rater[rater] = float(np.mean(scores))

    demographics = {}
    for fld in DEMOGRAPHIC_FIELDS:
        groups = {}
        for rater in table.raters:
            answer = table.demographics.get(rater, {}).get(fld)
            if answer is not None:
                groups.setdefault(answer, []).append(rater)
        if not groups:
            continue
        breakdown = {}
        for answer, raters in sorted(groups.items()):
            sub = table.filter_raters(raters)
            breakdown[answer] = {
                "raters": sorted(raters),
                "conditions": _condition_descriptives(sub),
                "pairwise_tests": _pairwise_tests(sub, per_rater_means),
            }
        demographics[fld] = breakdown

    return {
        "conditions": _condition_descriptives(table),
        "per_rater": per_rater,
        "pairwise_tests": _pairwise_tests(table, per_rater_means),
        "demographics": demographics,
    }


def build_analysis_report(table: RatingsTable, threshold: float,
                          metric_report: dict | None = None,
                          per_rater_means: bool = False,
                          bonferroni: bool = False) -> dict:
    """Screen, summarize, test, and (when possible) correlate."""
    screening = screen_raters(table, threshold)
    kept = table.filter_raters(screening["kept"])
    report = {
        "screening": {"threshold": threshold, **screening},
        "kept_raters": len(screening["kept"]),
    }
    if not kept.rows:
        report["summary"] = None
        report["krippendorff_alpha"] = None
        report["permutations"] = None
        report["correlations"] = {"reason": "no kept raters"}
        return report

    report["summary"] = summarize(kept, per_rater_means)
    if bonferroni:
        tests = report["summary"]["pairwise_tests"]
        m = sum(1 for t in tests if t["p_value"] is not None)
        for t in tests:
            if t["p_value"] is not None:
                t["p_value_bonferroni"] = min(1.0, t["p_value"] * m)
    try:
        report["krippendorff_alpha"] = alpha_from_table(kept)
    except DataError as exc:
        report["krippendorff_alpha"] = None
        report["krippendorff_reason"] = str(exc)

    systems = [c for c in kept.conditions if c not in (REFERENCE, ANCHOR)]
    if len(systems) == 3:
        report["permutations"] = ranking_permutations(kept, systems)
    else:
        report["permutations"] = None
        report["permutations_reason"] = (
            f"need exactly 3 system conditions, found {len(systems)}")

    report["correlations"] = _correlate_with_metrics(kept, metric_report)
    return report


def _correlate_with_metrics(table: RatingsTable, metric_report) -> dict:
    if not metric_report:
        return {"reason": "no metrics report supplied"}
    per_item = metric_report.get("per_item")
    if not per_item:
        return {"reason": "metrics report carries no per-item values"}
    # Mean rating per (condition, item) over kept raters.
    acc = {}
    for r in table.rows:
        acc.setdefault((r.condition, r.item), []).append(r.score)
    mean_rating = {k: float(np.mean(v)) for k, v in acc.items()}
    metric_names = sorted({m for items in per_item.values()
                           for vals in items.values() for m in vals})
    out = {}
    for metric in metric_names:
        xs, ys = [], []
        for cond, items in per_item.items():
            for item_id, vals in items.items():
                key = (cond, item_id)
                if metric in vals and key in mean_rating:
                    xs.append(vals[metric])
                    ys.append(mean_rating[key])
        if len(xs) < 3:
            out[metric] = {"reason": f"only {len(xs)} joined samples"}
            continue
        out[metric] = correlate(ys, xs)
    return out


# ---------------------------------------------------------------------------
# Study-export ingestion

EXPORT_COLUMNS = ("session", "age_bracket", "production_familiarity",
                  "synthesis_knowledge", "equipment_spend", "trial_index",
                  "item_id", "condition", "score", "session_complete")


def parse_export_csv(path) -> RatingsTable:
    rows, demographics, complete = [], {}, {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("export CSV is empty") from None
        if tuple(header) != EXPORT_COLUMNS:
            raise DataError(f"line 1: unexpected export header {header}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(EXPORT_COLUMNS):
                raise DataError(f"line {lineno}: expected {len(EXPORT_COLUMNS)} "
                                f"columns, got {len(rec)}")
            rater = rec[0]
            try:
                score = int(rec[8])
                trial_index = int(rec[5])
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            del trial_index  # validated, not carried in the table
            demographics[rater] = dict(zip(EXPORT_COLUMNS[1:5], rec[1:5]))
            complete[rater] = rec[9].strip().lower() in ("true", "1", "yes")
            rows.append(RatingRow(rater, rec[6], rec[7], score))
    return RatingsTable(tuple(rows), demographics, complete)


def parse_export_json(path) -> RatingsTable:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"export JSON: {exc}") from exc
    rows, demographics, complete = [], {}, {}
    for sess in doc.get("sessions", []):
        rater = sess["id"]
        demographics[rater] = sess.get("demographics", {})
        complete[rater] = bool(sess.get("complete"))
        for resp in sess.get("responses", []):
            for cond, score in resp["scores"].items():
                rows.append(RatingRow(rater, resp["item_id"], cond, int(score)))
    return RatingsTable(tuple(rows), demographics, complete)


def load_export(path) -> RatingsTable:
    with open(path, "rb") as fh:
        head = fh.read(1)
    if head in (b"{", b"["):
        return parse_export_json(path)
    return parse_export_csv(path)


def write_plot_csv(path, table: RatingsTable) -> None:
    """Per-condition rating distribution rows for external charting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "rater", "item", "score"])
        for r in sorted(table.rows, key=lambda r: (r.condition, r.rater, r.item)):
            writer.writerow([r.condition, r.rater, r.item, r.score])
