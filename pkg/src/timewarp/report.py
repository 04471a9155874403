"""Report rendering: aligned text tables plus matplotlib figures written
next to the JSON/JSONL outputs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

# Keep savefig byte-stable across runs.
_PNG_METADATA = {"Software": "timewarp"}


def text_table(headers, rows) -> str:
    """Aligned-column plain-text table."""
    cols = [[str(h)] + [str(r[i]) for r in rows] for i, h in enumerate(headers)]
    widths = [max(len(v) for v in col) for col in cols]
    lines = []
    header = "  ".join(h.ljust(w) for h, w in zip([str(h) for h in headers], widths))
    lines.append(header)
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def stats_table(stats: dict) -> str:
    """Dataset statistics in the layout of the reference tables:
    one quantitative row, one qualitative row."""
    quant = text_table(
        ["Total Videos", "Avg # of scenes", "Avg Scene Duration", "QA Pairs"],
        [[
            stats["total_videos"],
            f"{stats['avg_scenes_per_clip']:.2f}",
            f"{stats['avg_scene_duration_s']:.1f}s",
            stats["total_qa_pairs"],
        ]],
    )
    qual = text_table(
        ["Shuffled", "Reversed", "Over Budget", "Excluded (<2 scenes)"],
        [[stats["shuffled"], stats["reversed"], stats["over_budget"], stats["excluded_too_few_scenes"]]],
    )
    return quant + "\n" + qual


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def stats_figure(stats: dict, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.bar(["shuffled", "reversed"], [stats["shuffled"], stats["reversed"]], color=["#4878b0", "#d1605e"])
    ax1.set_title("Negative kinds")
    ax1.set_ylabel("videos")
    ax2.bar(
        ["videos", "QA pairs"],
        [stats["total_videos"], stats["total_qa_pairs"]],
        color=["#6aa56e", "#b8860b"],
    )
    ax2.set_title("Dataset size")
    fig.tight_layout()
    _save(fig, path)


def probe_grades_figure(grade: dict, sweep: dict, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    subs = grade["subcategory_pass_rates"]
    ax1.bar(range(len(subs)), list(subs.values()), color="#4878b0")
    ax1.set_xticks(range(len(subs)))
    ax1.set_xticklabels(list(subs.keys()), rotation=45, ha="right", fontsize=7)
    ax1.set_ylabel("pass rate (%)")
    ax1.set_ylim(0, 100)
    ax1.set_title("Subcategory pass rates (3-of-4)")
    ks = sorted(sweep)
    ax2.plot(ks, [sweep[k] for k in ks], marker="o", color="#d1605e")
    ax2.set_xlabel("required correct per 4")
    ax2.set_ylabel("pass rate (%)")
    ax2.set_ylim(0, 105)
    ax2.set_xticks(ks)
    ax2.set_title("Strictness sweep")
    fig.tight_layout()
    _save(fig, path)


def difficulty_figure(report: dict, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    hist = report["histogram"]
    ax.bar(range(len(hist)), list(hist.values()), color="#6aa56e")
    ax.set_xticks(range(len(hist)))
    ax.set_xticklabels(list(hist.keys()), rotation=45, ha="right", fontsize=7)
    ax.axvline(report["threshold"] * 10 - 0.5, color="#d1605e", linestyle="--", label="hard threshold")
    ax.set_ylabel("pairs")
    ax.set_title("Chosen/rejected similarity")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def mcqa_score_figure(report: dict, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    splits = report["per_split"]
    ax.bar(list(splits.keys()), list(splits.values()), color=["#4878b0", "#d1605e"][: len(splits)])
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    gap = report.get("gap_normal_minus_shuffled")
    title = "MCQA accuracy per split"
    if gap is not None:
        title += f" (gap {gap:+.2f})"
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
