"""Corpus ingestion: scene-annotated videos into a validated in-memory model.

Two input formats are supported:

* ``canonical-jsonl`` -- one JSON object per line, the format this pipeline
  defines and every downstream stage consumes:
  ``{"video_id", "media_path", "duration_s", "scenes": [{"start_s", "end_s",
  "caption"}]}``
* ``finevideo-json`` -- an adapter for FineVideo-style annotation dumps
  (a ``.json`` file or a directory of them). The per-scene caption field is
  selectable because annotation dumps carry several candidate text fields.

Invalid records are rejected individually with a structured diagnostic;
ingestion only fails outright when no valid record remains.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusError
from .ioutil import sha256_file, sha256_text

# Annotation timestamps are approximate; tolerate this much scene overlap.
OVERLAP_SLACK_S = 0.5
# duration_s may undershoot the last scene end by this much.
DURATION_SLACK_S = 1.0


@dataclass(frozen=True)
class Scene:
    index: int
    start_s: float
    end_s: float
    caption: str


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    media_path: str
    duration_s: float
    scenes: tuple

    def captions(self):
        return [s.caption for s in self.scenes]


@dataclass
class Corpus:
    records: list
    source_name: str
    manifest_digest: str

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def by_id(self, video_id: str) -> VideoRecord:
        for rec in self.records:
            if rec.video_id == video_id:
                return rec
        raise KeyError(video_id)


@dataclass(frozen=True)
class Diagnostic:
    video_id: str
    field: str
    reason: str

    def as_dict(self):
        return {"video_id": self.video_id, "field": self.field, "reason": self.reason}


@dataclass
class ValidationReport:
    total: int = 0
    passed: int = 0
    diagnostics: list = field(default_factory=list)

    @property
    def failed(self) -> int:
        return self.total - self.passed

    def as_dict(self):
        return {
            "total": self.total,
            "passed": self.passed,
            "failed": self.failed,
            "diagnostics": [d.as_dict() for d in self.diagnostics],
        }


def check_record(rec: VideoRecord) -> list:
    """Return every invariant violation for one record (empty list = valid)."""
    diags = []
    vid = rec.video_id
    if not vid or not str(vid).strip():
        diags.append(Diagnostic(str(vid), "video_id", "empty video_id"))
    if not rec.scenes:
        diags.append(Diagnostic(vid, "scenes", "record has no scenes"))
        return diags
    for sc in rec.scenes:
        if sc.start_s < 0:
            diags.append(Diagnostic(vid, "start_s", f"scene {sc.index}: start_s {sc.start_s} < 0"))
        if not sc.start_s < sc.end_s:
            diags.append(
                Diagnostic(vid, "end_s", f"scene {sc.index}: end_s {sc.end_s} must exceed start_s {sc.start_s}")
            )
        if not sc.caption.strip():
            diags.append(Diagnostic(vid, "caption", f"scene {sc.index}: caption is empty"))
    for prev, cur in zip(rec.scenes, rec.scenes[1:]):
        if prev.start_s > cur.start_s:
            diags.append(
                Diagnostic(vid, "scenes", f"scenes {prev.index},{cur.index} not sorted by start_s")
            )
        if prev.end_s > cur.start_s + OVERLAP_SLACK_S:
            diags.append(
                Diagnostic(vid, "scenes", f"scenes {prev.index},{cur.index} overlap beyond {OVERLAP_SLACK_S}s slack")
            )
    last_end = rec.scenes[-1].end_s
    if rec.duration_s < last_end - DURATION_SLACK_S:
        diags.append(
            Diagnostic(vid, "duration_s", f"duration_s {rec.duration_s} < last scene end {last_end} - {DURATION_SLACK_S}s")
        )
    return diags


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Report-only validation; never mutates the corpus."""
    report = ValidationReport(total=len(corpus.records))
    for rec in corpus.records:
        diags = check_record(rec)
        if diags:
            report.diagnostics.extend(diags)
        else:
            report.passed += 1
    return report


def record_to_dict(rec: VideoRecord) -> dict:
    return {
        "video_id": rec.video_id,
        "media_path": rec.media_path,
        "duration_s": rec.duration_s,
        "scenes": [
            {"start_s": s.start_s, "end_s": s.end_s, "caption": s.caption} for s in rec.scenes
        ],
    }


def record_from_dict(obj: dict) -> VideoRecord:
    scenes = tuple(
        Scene(index=i, start_s=float(s["start_s"]), end_s=float(s["end_s"]), caption=str(s["caption"]))
        for i, s in enumerate(obj.get("scenes", []))
    )
    return VideoRecord(
        video_id=str(obj["video_id"]),
        media_path=str(obj.get("media_path", "")),
        duration_s=float(obj["duration_s"]),
        scenes=scenes,
    )


def _parse_timestamp(value) -> float:
    """Accept seconds (number) or 'HH:MM:SS[.fff]' strings."""
    if isinstance(value, (int, float)):
        return float(value)
    parts = str(value).split(":")
    seconds = 0.0
    for part in parts:
        seconds = seconds * 60 + float(part)
    return seconds


def _finevideo_to_dict(obj: dict, caption_field: str) -> dict:
    """Map one FineVideo-style annotation object onto the canonical shape."""
    video_id = obj.get("video_id") or obj.get("original_video_filename") or obj.get("filename")
    meta = obj.get("content_metadata", obj)
    raw_scenes = meta.get("scenes", obj.get("scenes", []))
    scenes = []
    for raw in raw_scenes:
        ts = raw.get("timestamps", raw)
        start = ts.get("start_timestamp", ts.get("start_s"))
        end = ts.get("end_timestamp", ts.get("end_s"))
        if caption_field == "activities":
            acts = raw.get("activities", [])
            caption = "; ".join(
                a.get("description", "") if isinstance(a, dict) else str(a) for a in acts
            )
        else:
            caption = raw.get(caption_field) or raw.get("description") or raw.get("title") or ""
        scenes.append(
            {
                "start_s": _parse_timestamp(start) if start is not None else -1.0,
                "end_s": _parse_timestamp(end) if end is not None else -1.0,
                "caption": str(caption),
            }
        )
    duration = obj.get("duration_seconds", obj.get("duration_s"))
    if duration is None and scenes:
        duration = max(s["end_s"] for s in scenes)
    return {
        "video_id": str(video_id),
        "media_path": str(obj.get("media_path", obj.get("original_video_filename", ""))),
        "duration_s": float(duration if duration is not None else 0.0),
        "scenes": scenes,
    }


def _input_files(path: Path, suffixes) -> list:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix in suffixes)
        if not files:
            raise CorpusError(f"no {'/'.join(suffixes)} files under {path}")
        return files
    if not path.exists():
        raise CorpusError(f"corpus path does not exist: {path}")
    return [path]


def load_corpus(path, format: str = "canonical-jsonl", caption_field: str = "description") -> Corpus:
    """Ingest a corpus, rejecting invalid records with diagnostics.

    Raises CorpusError when the path is missing, the format is unknown, or
    zero valid records remain. The returned diagnostics live on the corpus
    as ``corpus.rejected`` (list of Diagnostic).
    """
    path = Path(path)
    raw_objs = []
    if format == "canonical-jsonl":
        files = _input_files(path, {".jsonl"})
        for fp in files:
            with open(fp, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        raw_objs.append(json.loads(line))
                    except json.JSONDecodeError as exc:
                        raw_objs.append(Diagnostic(f"{fp.name}:{lineno}", "json", str(exc)))
    elif format == "finevideo-json":
        files = _input_files(path, {".json"})
        for fp in files:
            with open(fp, encoding="utf-8") as fh:
                data = json.load(fh)
            objs = data if isinstance(data, list) else [data]
            for obj in objs:
                try:
                    raw_objs.append(_finevideo_to_dict(obj, caption_field))
                except (KeyError, TypeError, ValueError) as exc:
                    raw_objs.append(Diagnostic(fp.name, "schema", f"unmappable annotation: {exc}"))
    else:
        raise CorpusError(f"unknown corpus format: {format!r}")

    digest = sha256_text("\n".join(sha256_file(fp) for fp in files))

    records = []
    rejected = []
    seen_ids = set()
    for obj in raw_objs:
        if isinstance(obj, Diagnostic):
            rejected.append(obj)
            continue
        try:
            rec = record_from_dict(obj)
        except (KeyError, TypeError, ValueError) as exc:
            rejected.append(Diagnostic(str(obj.get("video_id", "?")), "schema", str(exc)))
            continue
        diags = check_record(rec)
        if rec.video_id in seen_ids:
            diags.append(Diagnostic(rec.video_id, "video_id", "duplicate video_id"))
        if diags:
            rejected.extend(diags)
            continue
        seen_ids.add(rec.video_id)
        records.append(rec)

    if not records:
        raise CorpusError(f"no valid records in {path} ({len(rejected)} diagnostics)")

    records.sort(key=lambda r: r.video_id)
    corpus = Corpus(records=records, source_name=path.name, manifest_digest=digest)
    corpus.rejected = rejected
    return corpus


def save_corpus(corpus: Corpus, path) -> None:
    """Serialize to canonical-jsonl (the load->save->load round-trip format)."""
    from .ioutil import write_jsonl

    write_jsonl(path, (record_to_dict(rec) for rec in corpus.records))
