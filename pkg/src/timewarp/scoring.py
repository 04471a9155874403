"""Scoring of model prediction files: MCQA accuracy per split, quadruple
text/video/group scores, and binary-ordering grading with the 3-of-4 /
5-of-8 thresholds.

Unparsed and missing predictions count as incorrect (the protocols are
forced-choice; dropping them would inflate scores).
"""

import re
from dataclasses import dataclass, field

from .errors import DuplicatePrediction

_LETTERS = "ABCDE"


@dataclass(frozen=True)
class Prediction:
    item_id: str
    raw_response: str
    parsed_choice: object = None  # option index, "yes"/"no", or None (unparsed)


@dataclass(frozen=True)
class QuadruplePrediction:
    quad_id: str
    t1: int  # answer choice for the original video
    t2: int  # answer choice for the shuffled video
    v1: int  # video choice for the preferred answer
    v2: int  # video choice for the dispreferred answer

    def fields(self):
        return (self.t1, self.t2, self.v1, self.v2)


def parse_prediction(raw: str, item=None) -> Prediction:
    """Normalization ladder: exact option text -> leading letter (A-E) ->
    leading yes/no token -> unparsed.

    ``item`` may be a BenchmarkItem, an options sequence, or None (for
    yes/no order statements).
    """
    if hasattr(item, "options"):
        options = item.options
    elif isinstance(item, (list, tuple)):
        options = item
    else:
        options = None
    item_id = getattr(item, "id", "")
    text = raw.strip()
    if options:
        lowered = text.lower().rstrip(".")
        for i, opt in enumerate(options):
            if lowered == str(opt).strip().lower().rstrip("."):
                return Prediction(item_id, raw, i)
    m = re.match(r"^\(?([A-Ea-e])\)?[\.\):\s]", text + " ")
    if m and options:
        idx = _LETTERS.index(m.group(1).upper())
        if idx < len(options):
            return Prediction(item_id, raw, idx)
    m = re.match(r"^(yes|no)\b", text, re.IGNORECASE)
    if m:
        return Prediction(item_id, raw, m.group(1).lower())
    return Prediction(item_id, raw, None)


@dataclass
class AccuracyReport:
    overall: float = 0.0
    per_split: dict = field(default_factory=dict)
    gap_normal_minus_shuffled: float | None = None
    n_items: int = 0
    n_missing: int = 0
    n_unparsed: int = 0

    def as_dict(self):
        return {
            "overall": self.overall,
            "per_split": self.per_split,
            "gap_normal_minus_shuffled": self.gap_normal_minus_shuffled,
            "n_items": self.n_items,
            "n_missing": self.n_missing,
            "n_unparsed": self.n_unparsed,
        }


def score_mcqa(items, predictions) -> AccuracyReport:
    """Accuracy = correct/total x100 per split and overall.

    predictions: iterable of {"item_id", "response"}; duplicates are an
    error, missing predictions count incorrect and are reported.
    """
    by_id = {}
    for pred in predictions:
        pid = pred["item_id"]
        if pid in by_id:
            raise DuplicatePrediction(f"duplicate prediction for {pid}")
        by_id[pid] = pred["response"]

    report = AccuracyReport(n_items=len(items))
    split_counts = {}
    correct_total = 0
    for item in items:
        split_counts.setdefault(item.split, [0, 0])
        split_counts[item.split][1] += 1
        raw = by_id.get(item.id)
        if raw is None:
            report.n_missing += 1
            continue
        parsed = parse_prediction(raw, item.options)
        if parsed.parsed_choice is None or not isinstance(parsed.parsed_choice, int):
            report.n_unparsed += 1
            continue
        if parsed.parsed_choice == item.answer_index:
            split_counts[item.split][0] += 1
            correct_total += 1
    report.per_split = {
        split: round(100.0 * c / n, 4) if n else 0.0 for split, (c, n) in sorted(split_counts.items())
    }
    report.overall = round(100.0 * correct_total / len(items), 4) if items else 0.0
    if "normal" in report.per_split and "shuffled" in report.per_split:
        report.gap_normal_minus_shuffled = round(
            report.per_split["normal"] - report.per_split["shuffled"], 4
        )
    return report


def score_group(quads, truth) -> dict:
    """Quadruple matching scores (percent means).

    truth: mapping quad_id -> (t1, t2, v1, v2) correct assignments.
    text-correct needs both caption choices right, video-correct both video
    choices, group-correct both conditions jointly.
    """
    if not quads:
        return {"text": 0.0, "video": 0.0, "group": 0.0, "n": 0}
    text_ok = video_ok = group_ok = 0
    for quad in quads:
        t1, t2, v1, v2 = truth[quad.quad_id]
        text = quad.t1 == t1 and quad.t2 == t2
        video = quad.v1 == v1 and quad.v2 == v2
        text_ok += text
        video_ok += video
        group_ok += text and video
    n = len(quads)
    return {
        "text": round(100.0 * text_ok / n, 4),
        "video": round(100.0 * video_ok / n, 4),
        "group": round(100.0 * group_ok / n, 4),
        "n": n,
    }


def _statement_correct(statement, raw) -> bool:
    if raw is None:
        return False
    parsed = parse_prediction(raw)
    return parsed.parsed_choice == statement.label


@dataclass
class GradeReport:
    subcategory_pass_rates: dict = field(default_factory=dict)  # "category/subtype" -> rate
    category_pass_rates: dict = field(default_factory=dict)
    aggregate_subcategory_pass_rate: float = 0.0
    aggregate_category_pass_rate: float = 0.0
    n_videos: int = 0

    def as_dict(self):
        return {
            "subcategory_pass_rates": self.subcategory_pass_rates,
            "category_pass_rates": self.category_pass_rates,
            "aggregate_subcategory_pass_rate": self.aggregate_subcategory_pass_rate,
            "aggregate_category_pass_rate": self.aggregate_category_pass_rate,
            "n_videos": self.n_videos,
        }


def _group_statements(statements):
    """(video_path, category) -> subtype -> list of statements."""
    groups = {}
    for st in statements:
        groups.setdefault((st.video_path, st.category), {}).setdefault(st.subtype, []).append(st)
    return groups


def grade_order_probes(statements, predictions, subcategory_k: int = 3, category_k: int = 5) -> GradeReport:
    """Subcategory passes with >= subcategory_k of its 4 statements correct;
    a category passes with >= category_k of its 8. Categories missing a
    subtype are graded only at the subcategory level."""
    by_id = {p["item_id"]: p["response"] for p in predictions}
    groups = _group_statements(statements)

    sub_results = {}  # "category/subtype" -> [passes, total]
    cat_results = {}  # category -> [passes, total]
    videos = set()
    for (video, category), by_subtype in groups.items():
        videos.add(video)
        correct_in_category = 0
        complete = len(by_subtype) == len(("before", "after"))
        for subtype, sts in by_subtype.items():
            n_correct = sum(_statement_correct(st, by_id.get(st.id)) for st in sts)
            correct_in_category += n_correct
            key = f"{category}/{subtype}"
            sub_results.setdefault(key, [0, 0])
            sub_results[key][1] += 1
            sub_results[key][0] += n_correct >= subcategory_k
        if complete:
            cat_results.setdefault(category, [0, 0])
            cat_results[category][1] += 1
            cat_results[category][0] += correct_in_category >= category_k

    report = GradeReport(n_videos=len(videos))
    report.subcategory_pass_rates = {
        k: round(100.0 * p / n, 4) for k, (p, n) in sorted(sub_results.items())
    }
    report.category_pass_rates = {
        k: round(100.0 * p / n, 4) for k, (p, n) in sorted(cat_results.items())
    }
    total_p = sum(p for p, _ in sub_results.values())
    total_n = sum(n for _, n in sub_results.values())
    report.aggregate_subcategory_pass_rate = round(100.0 * total_p / total_n, 4) if total_n else 0.0
    cat_p = sum(p for p, _ in cat_results.values())
    cat_n = sum(n for _, n in cat_results.values())
    report.aggregate_category_pass_rate = round(100.0 * cat_p / cat_n, 4) if cat_n else 0.0
    return report


def strictness_sweep(statements, predictions, ks=(1, 2, 3, 4)) -> dict:
    """Aggregate subcategory pass rate for each required-correct threshold k."""
    return {
        k: grade_order_probes(statements, predictions, subcategory_k=k).aggregate_subcategory_pass_rate
        for k in ks
    }
