"""Benchmark construction: MCQA items over normal and shuffled narratives,
plus binary temporal-ordering probes around the middle event of each video.

Probe categories are keyed by hop distance (near=1, moderately_far=2,
very_far>=3); the measured midpoint-to-midpoint time separation is recorded
and compared against each category's nominal seconds bin, but never decides
membership -- hop distance is checkable on any corpus, seconds bins are not.
"""

import json
import random
from dataclasses import dataclass

from .errors import ParseFailure
from .ioutil import derive_seed, stable_id
from .llmclient import GenRequest
from .permute import apply_permutation
from .preprocess import build_composite_caption, trim_video
from .promptkit import parse_mcqa, render_prompt

CATEGORIES = ("near", "moderately_far", "very_far")
SUBTYPES = ("before", "after")
# Nominal time-separation bins (seconds) per category, advisory only.
CATEGORY_TIME_BINS = {"near": (10.0, 20.0), "moderately_far": (20.0, 30.0), "very_far": (30.0, None)}


@dataclass(frozen=True)
class BenchmarkItem:
    id: str
    video_path: str
    split: str  # normal | shuffled
    question: str
    options: tuple
    answer_index: int
    perm_ref: str | None = None

    def as_dict(self):
        return {
            "id": self.id,
            "video_path": self.video_path,
            "split": self.split,
            "question": self.question,
            "options": list(self.options),
            "answer_index": self.answer_index,
            "perm_ref": self.perm_ref,
        }


@dataclass(frozen=True)
class OrderStatement:
    id: str
    video_path: str
    pair_id: str
    category: str
    subtype: str
    statement: str
    label: str  # yes | no
    hop_distance: int
    time_separation_s: float

    def as_dict(self):
        return {
            "id": self.id,
            "video_path": self.video_path,
            "pair_id": self.pair_id,
            "category": self.category,
            "subtype": self.subtype,
            "statement": self.statement,
            "label": self.label,
            "hop_distance": self.hop_distance,
            "time_separation_s": self.time_separation_s,
        }


def build_mcqa_benchmark(corpus, perms, gen, max_s: float = 105.0, min_scenes: int = 2, model_id="mock"):
    """Normal-split items from the original narrative; shuffled-split items
    re-keyed by asking the generator to select the option consistent with the
    permuted narrative. Returns (items, diagnostics)."""
    perm_by_id = {p.video_id: p for p in perms}
    items = []
    diagnostics = []
    for record in corpus:
        perm = perm_by_id.get(record.video_id)
        try:
            clip = trim_video(record, max_s=max_s, min_scenes=min_scenes)
        except Exception as exc:
            diagnostics.append(f"{record.video_id}: {exc}")
            continue
        original = build_composite_caption(record, clip.kept_scene_indices)
        prompt = render_prompt("mcqa_gen", {"composite_caption": original.rendered})
        try:
            parsed, drops = parse_mcqa(gen.generate(GenRequest(prompt=prompt, model_id=model_id)).text)
        except ParseFailure as exc:
            diagnostics.append(f"{record.video_id}: mcqa generation unparseable: {exc}")
            continue
        diagnostics.extend(f"{record.video_id}: {d}" for d in drops)
        video_path = f"media/{record.video_id}_original.mp4"
        for q_idx, item in enumerate(parsed):
            items.append(
                BenchmarkItem(
                    id=stable_id(record.video_id, item.question, "normal"),
                    video_path=video_path,
                    split="normal",
                    question=item.question,
                    options=item.options,
                    answer_index=item.answer_index,
                )
            )
            if perm is None:
                continue
            permuted_indices = apply_permutation(perm.pi, list(clip.kept_scene_indices))
            permuted = build_composite_caption(record, permuted_indices)
            select_prompt = render_prompt(
                "shuffled_option_select",
                {
                    "composite_caption": permuted.rendered,
                    "question": item.question,
                    "options": json.dumps(list(item.options), ensure_ascii=False),
                },
            )
            try:
                selected, _ = parse_mcqa(gen.generate(GenRequest(prompt=select_prompt, model_id=model_id)).text)
            except ParseFailure as exc:
                diagnostics.append(f"{record.video_id}: shuffled re-key unparseable: {exc}")
                continue
            if not selected:
                diagnostics.append(f"{record.video_id}: shuffled re-key produced no valid item")
                continue
            items.append(
                BenchmarkItem(
                    id=stable_id(record.video_id, item.question, "shuffled"),
                    video_path=f"media/{record.video_id}_{perm.kind}.mp4",
                    split="shuffled",
                    question=item.question,
                    options=tuple(selected[0].options),
                    answer_index=selected[0].answer_index,
                    perm_ref=stable_id(perm.video_id, perm.kind, str(perm.seed)),
                )
            )
    return items, diagnostics


def select_probe_videos(corpus, n: int = 500, min_captions: int = 4, seed: int = 0):
    """Deterministic seeded sample of videos with enough event captions."""
    eligible = [rec for rec in corpus if len(rec.scenes) >= min_captions]
    if not eligible:
        return [], f"no videos with >= {min_captions} captions"
    warning = None
    if n >= len(eligible):
        if n > len(eligible):
            warning = f"requested {n} probe videos, only {len(eligible)} eligible"
        return eligible, warning
    rng = random.Random(derive_seed(seed, "probe_videos"))
    idx = sorted(rng.sample(range(len(eligible)), n))
    return [eligible[i] for i in idx], warning


def _statement(a: str, b: str, word: str) -> str:
    return f"In the video, {a} happens {word} {b}."


def build_order_probes(record, seed: int = 0):
    """Four binary statements per sampled (middle event, partner) pair.

    For the true order A-earlier / B-later the statements and labels are:
    A before B (yes), A after B (no), B after A (yes -- reads as
    'B comes later', i.e. the truth-consistent labeling), B before A (no).
    Partners are sampled per category x subtype around the middle caption.

    Returns (statements, coverage) where coverage maps
    (category, subtype) -> "ok" | "omitted".
    """
    scenes = list(record.scenes)
    n = len(scenes)
    if n < 4:
        raise ValueError(f"{record.video_id}: order probes need >= 4 captions, got {n}")
    m = n // 2
    rng = random.Random(derive_seed(seed, "order_probes", record.video_id))
    video_path = f"media/{record.video_id}_original.mp4"

    def midpoint(i):
        return (scenes[i].start_s + scenes[i].end_s) / 2.0

    statements = []
    coverage = {}
    for category in CATEGORIES:
        for subtype in SUBTYPES:
            if category == "near":
                candidates = [m - 1] if subtype == "before" else [m + 1]
            elif category == "moderately_far":
                candidates = [m - 2] if subtype == "before" else [m + 2]
            else:
                candidates = list(range(0, m - 2)) if subtype == "before" else list(range(m + 3, n))
            candidates = [i for i in candidates if 0 <= i < n]
            if not candidates:
                coverage[(category, subtype)] = "omitted"
                continue
            partner = candidates[0] if len(candidates) == 1 else rng.choice(candidates)
            coverage[(category, subtype)] = "ok"
            earlier, later = (partner, m) if partner < m else (m, partner)
            a, b = scenes[earlier].caption, scenes[later].caption
            pair_id = stable_id(record.video_id, category, subtype)
            hop = abs(partner - m)
            sep = round(abs(midpoint(later) - midpoint(earlier)), 3)
            quads = (
                (_statement(a, b, "before"), "yes"),
                (_statement(a, b, "after"), "no"),
                (_statement(b, a, "after"), "yes"),
                (_statement(b, a, "before"), "no"),
            )
            for k, (text, label) in enumerate(quads):
                statements.append(
                    OrderStatement(
                        id=stable_id(pair_id, str(k)),
                        video_path=video_path,
                        pair_id=pair_id,
                        category=category,
                        subtype=subtype,
                        statement=text,
                        label=label,
                        hop_distance=hop,
                        time_separation_s=sep,
                    )
                )
    return statements, coverage


def time_bin_warnings(statements):
    """Statements whose measured separation falls outside the nominal bin."""
    warnings = []
    seen_pairs = set()
    for st in statements:
        if st.pair_id in seen_pairs:
            continue
        seen_pairs.add(st.pair_id)
        lo, hi = CATEGORY_TIME_BINS[st.category]
        if st.time_separation_s < lo or (hi is not None and st.time_separation_s > hi):
            warnings.append(
                f"{st.pair_id}: {st.category} separation {st.time_separation_s}s outside nominal "
                f"[{lo}, {hi if hi is not None else 'inf'}]s"
            )
    return warnings
