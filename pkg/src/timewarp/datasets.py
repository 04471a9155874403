"""Preference dataset assembly: explicit (shuffled-narrative) pairs, implicit
(self-generated hallucination) pairs, DPO->KTO decomposition, SFT export,
mixture merging, and the chosen/rejected similarity probe.

Record ids are content hashes of (video_id, question, source) so re-runs
dedupe naturally.
"""

import random
from collections import Counter
from dataclasses import dataclass, field

from .errors import MixtureUnderflow, ParseFailure
from .ioutil import derive_seed, read_jsonl, stable_id
from .llmclient import GenRequest
from .promptkit import parse_oe_qa, render_prompt

ANSWER_INSTRUCTION = "Answer based on what happens in the video."


@dataclass(frozen=True)
class PreferenceRecord:
    id: str
    video_path: str
    shuffled_video_path: str | None
    prompt: str
    chosen: str
    rejected: str
    source: str  # explicit | implicit_prompt | implicit_frame | external
    perm_kind: str = "none"  # none | shuffled | reversed
    perturbation: dict | None = None

    def as_dict(self):
        return {
            "id": self.id,
            "video_path": self.video_path,
            "shuffled_video_path": self.shuffled_video_path,
            "prompt": self.prompt,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "source": self.source,
            "perm_kind": self.perm_kind,
            "perturbation": self.perturbation,
        }


def preference_from_dict(obj: dict) -> PreferenceRecord:
    return PreferenceRecord(
        id=obj["id"],
        video_path=obj["video_path"],
        shuffled_video_path=obj.get("shuffled_video_path"),
        prompt=obj["prompt"],
        chosen=obj["chosen"],
        rejected=obj["rejected"],
        source=obj.get("source", "external"),
        perm_kind=obj.get("perm_kind", "none"),
        perturbation=obj.get("perturbation"),
    )


@dataclass(frozen=True)
class KtoRecord:
    id: str
    dpo_id: str
    video_path: str
    prompt: str
    completion: str
    label: bool
    origin: str  # original | shuffled

    def as_dict(self):
        return {
            "id": self.id,
            "dpo_id": self.dpo_id,
            "video_path": self.video_path,
            "prompt": self.prompt,
            "completion": self.completion,
            "label": self.label,
            "origin": self.origin,
        }


@dataclass(frozen=True)
class SftRecord:
    id: str
    video_path: str
    prompt: str
    response: str

    def as_dict(self):
        return {"id": self.id, "video_path": self.video_path, "prompt": self.prompt, "response": self.response}


def build_explicit_pairs(record, clip, perm, original_caption, permuted_caption, qa, gen,
                         video_path=None, shuffled_video_path=None, model_id="mock"):
    """One preference record per QA pair, rejected answers from the permuted narrative.

    Returns (records, diagnostics). QA pairs whose dispreferred answer fails
    to parse, or collapses onto the chosen answer, are skipped with a
    diagnostic.
    """
    video_path = video_path or f"media/{record.video_id}_original.mp4"
    shuffled_video_path = shuffled_video_path or f"media/{record.video_id}_{perm.kind}.mp4"
    records = []
    diagnostics = []
    for item in qa:
        prompt_text = render_prompt(
            "dispreferred_gen",
            {"composite_caption": permuted_caption.rendered, "question": item.question},
        )
        try:
            response = gen.generate(GenRequest(prompt=prompt_text, model_id=model_id))
            parsed, _ = parse_oe_qa(response.text)
        except ParseFailure as exc:
            diagnostics.append(f"{record.video_id}: dispreferred parse failure for {item.question!r}: {exc}")
            continue
        if not parsed:
            diagnostics.append(f"{record.video_id}: no valid dispreferred answer for {item.question!r}")
            continue
        rejected = parsed[0].answer
        if rejected == item.answer:
            diagnostics.append(f"{record.video_id}: chosen == rejected for {item.question!r}, dropped")
            continue
        records.append(
            PreferenceRecord(
                id=stable_id(record.video_id, item.question, "explicit"),
                video_path=video_path,
                shuffled_video_path=shuffled_video_path,
                prompt=f"{item.question} {ANSWER_INSTRUCTION}",
                chosen=item.answer,
                rejected=rejected,
                source="explicit",
                perm_kind=perm.kind,
            )
        )
    return records, diagnostics


def hallucination_template_id(record_index: int) -> str:
    return f"hallucination_{record_index % 7 + 1}"


def build_implicit_pairs(record, frames, subject_model, mode, spec=None,
                         perturbed_frames=None, record_index=0, video_path=None, model_id="mock"):
    """Self-generated preference pair: clean answer vs hallucination-induced one.

    mode="prompt": rejected comes from a hallucinating prompt on clean frames
    (template cycles 1..7 by record_index). mode="frame": rejected comes from
    the clean prompt on perturbed frames; spec and perturbed_frames required.
    """
    if mode not in ("prompt", "frame"):
        raise ValueError(f"unknown implicit mode {mode!r}")
    if mode == "frame" and (spec is None or not perturbed_frames):
        raise ValueError("mode='frame' requires a PerturbationSpec and rendered perturbed frames")
    video_path = video_path or f"media/{record.video_id}_original.mp4"
    frames = tuple(str(f) for f in frames)
    clean_prompt = render_prompt("mut_describe")
    chosen = subject_model.generate(
        GenRequest(prompt=clean_prompt, attachments=frames, model_id=model_id)
    ).text
    if mode == "prompt":
        bad_prompt = render_prompt(hallucination_template_id(record_index))
        rejected = subject_model.generate(
            GenRequest(prompt=bad_prompt, attachments=frames, model_id=model_id)
        ).text
        source = "implicit_prompt"
        perturbation = None
    else:
        rejected = subject_model.generate(
            GenRequest(prompt=clean_prompt, attachments=tuple(str(f) for f in perturbed_frames),
                       model_id=model_id)
        ).text
        source = "implicit_frame"
        perturbation = spec.as_dict()
    if chosen == rejected:
        return []
    return [
        PreferenceRecord(
            id=stable_id(record.video_id, mode, str(record_index), "implicit"),
            video_path=video_path,
            shuffled_video_path=None,
            prompt=clean_prompt,
            chosen=chosen,
            rejected=rejected,
            source=source,
            perm_kind="none",
            perturbation=perturbation,
        )
    ]


# Per parent DPO record: (origin, completion-field, label).
KTO_MATRIX = (
    ("original", "chosen", True),
    ("original", "rejected", False),
    ("shuffled", "rejected", True),
    ("shuffled", "chosen", False),
)


def dpo_to_kto(pairs):
    """Decompose each DPO record into exactly four labeled KTO records.

    The shuffled video flips the preference: what was rejected for the
    original narrative is the truthful answer for the shuffled one. Records
    without a shuffled video path (implicit records) are skipped with a
    diagnostic -- the construction needs both videos.
    """
    records = []
    diagnostics = []
    for pair in pairs:
        if not pair.shuffled_video_path:
            diagnostics.append(f"{pair.id}: no shuffled_video_path, not KTO-convertible")
            continue
        for origin, side, label in KTO_MATRIX:
            video = pair.video_path if origin == "original" else pair.shuffled_video_path
            completion = pair.chosen if side == "chosen" else pair.rejected
            records.append(
                KtoRecord(
                    id=stable_id(pair.id, origin, side),
                    dpo_id=pair.id,
                    video_path=video,
                    prompt=pair.prompt,
                    completion=completion,
                    label=label,
                    origin=origin,
                )
            )
    return records, diagnostics


def sample_kto(records, n: int, seed: int):
    """Deterministic sample of n KTO records without replacement."""
    records = list(records)
    if n > len(records):
        raise ValueError(f"cannot sample {n} from {len(records)} records")
    rng = random.Random(derive_seed(seed, "sample_kto"))
    idx = sorted(rng.sample(range(len(records)), n))
    return [records[i] for i in idx]


def merge_mixture(parts, seed: int):
    """Merge dataset parts with seeded per-part sampling.

    parts: list of (path, take) where take is an int or None for "all".
    Returns rows (dicts) each carrying a "part" provenance field (the part's
    file name); merged ids are unique (colliding ids are re-hashed with
    their part name). Output is sorted by id, so the result is
    order-insensitive in the parts list.
    """
    from pathlib import Path

    merged = []
    seen_ids = set()
    for path, take in parts:
        rows = read_jsonl(path)
        name = Path(path).name
        if take is not None:
            if take > len(rows):
                raise MixtureUnderflow(f"part {name}: take {take} > size {len(rows)}")
            rng = random.Random(derive_seed(seed, "mixture", name))
            keep = sorted(rng.sample(range(len(rows)), take))
            rows = [rows[i] for i in keep]
        for row in rows:
            row = dict(row)
            rid = str(row.get("id", stable_id(name, str(row))))
            if rid in seen_ids:
                rid = stable_id(name, rid)
            row["id"] = rid
            row["part"] = name
            seen_ids.add(rid)
            merged.append(row)
    merged.sort(key=lambda r: r["id"])
    return merged


def export_sft(pairs):
    """One SFT record per preference pair, response = chosen."""
    return [
        SftRecord(
            id=stable_id(pair.id, "sft"),
            video_path=pair.video_path,
            prompt=pair.prompt,
            response=pair.chosen,
        )
        for pair in pairs
    ]


def token_overlap(a: str, b: str) -> float:
    """Normalized token overlap: |A & B| / min(|A|, |B|) over word sets."""
    import re

    ta = set(re.findall(r"[a-z0-9']+", a.lower()))
    tb = set(re.findall(r"[a-z0-9']+", b.lower()))
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / min(len(ta), len(tb))


@dataclass
class DifficultyReport:
    threshold: float
    similarities: list = field(default_factory=list)  # (pair_id, similarity)
    hard_ids: list = field(default_factory=list)
    histogram: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "threshold": self.threshold,
            "n_pairs": len(self.similarities),
            "n_hard": len(self.hard_ids),
            "hard_ids": self.hard_ids,
            "histogram": self.histogram,
            "similarities": [{"id": i, "similarity": s} for i, s in self.similarities],
        }


def difficulty_probe(pairs, threshold: float = 0.6) -> DifficultyReport:
    """Flag pairs whose chosen/rejected texts are suspiciously similar.

    High overlap between the two sides is the failure mode associated with
    KTO underfitting: distinct but near-identical completions are too hard
    to learn from.
    """
    report = DifficultyReport(threshold=threshold)
    bins = Counter()
    for pair in pairs:
        sim = token_overlap(pair.chosen, pair.rejected)
        report.similarities.append((pair.id, round(sim, 6)))
        if sim > threshold:
            report.hard_ids.append(pair.id)
        bins[min(int(sim * 10), 9)] += 1
    report.histogram = {f"{b / 10:.1f}-{(b + 1) / 10:.1f}": bins.get(b, 0) for b in range(10)}
    return report
