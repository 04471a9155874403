"""Clip trimming and composite-caption construction.

Trimming keeps the longest scene prefix that ends within the duration cap
(default 105 s). When fewer than ``min_scenes`` scenes fit, the first
``min_scenes`` are kept anyway and the clip is flagged ``over_budget`` --
cutting inside a scene would break its internal coherence, so the cap is
waived instead. Videos with fewer than ``min_scenes`` scenes are excluded.
"""

import re
from dataclasses import dataclass

from .corpus import VideoRecord
from .errors import InvalidOrder, TooFewScenes

MAX_CLIP_S = 105.0
MIN_SCENES = 2


@dataclass(frozen=True)
class ClipSpec:
    video_id: str
    kept_scene_indices: tuple
    trim_end_s: float
    clip_duration_s: float
    over_budget: bool = False

    @property
    def n_scenes(self) -> int:
        return len(self.kept_scene_indices)

    def as_dict(self):
        return {
            "video_id": self.video_id,
            "kept_scene_indices": list(self.kept_scene_indices),
            "trim_end_s": self.trim_end_s,
            "clip_duration_s": self.clip_duration_s,
            "over_budget": self.over_budget,
        }


def clip_from_dict(obj: dict) -> ClipSpec:
    return ClipSpec(
        video_id=obj["video_id"],
        kept_scene_indices=tuple(obj["kept_scene_indices"]),
        trim_end_s=float(obj["trim_end_s"]),
        clip_duration_s=float(obj["clip_duration_s"]),
        over_budget=bool(obj.get("over_budget", False)),
    )


@dataclass(frozen=True)
class CompositeCaption:
    video_id: str
    ordered_captions: tuple  # of (scene_index, caption)
    rendered: str


def trim_video(record: VideoRecord, max_s: float = MAX_CLIP_S, min_scenes: int = MIN_SCENES) -> ClipSpec:
    if len(record.scenes) < min_scenes:
        raise TooFewScenes(f"{record.video_id}: {len(record.scenes)} scene(s), need {min_scenes}")
    kept = [s.index for s in record.scenes if s.end_s <= max_s]
    # kept is a prefix: scenes are sorted and non-overlapping, so once one
    # scene ends past the cap every later scene does too.
    if len(kept) >= min_scenes:
        end = record.scenes[len(kept) - 1].end_s
        trim_end = min(end, record.duration_s)
        return ClipSpec(record.video_id, tuple(kept), trim_end, trim_end, over_budget=False)
    end = record.scenes[min_scenes - 1].end_s
    trim_end = min(end, record.duration_s)
    return ClipSpec(record.video_id, tuple(range(min_scenes)), trim_end, trim_end, over_budget=True)


def _marker(position: int, total: int) -> str:
    if position == 0:
        return "First,"
    if position == total - 1 and total >= 3:
        return "Finally,"
    return "Then,"


def build_composite_caption(record: VideoRecord, order) -> CompositeCaption:
    """Concatenate scene captions in the given order with order markers.

    ``order`` maps output position -> source scene index and may cover a
    subset of the record's scenes (the kept prefix of its ClipSpec).
    """
    order = list(order)
    by_index = {s.index: s for s in record.scenes}
    if len(set(order)) != len(order) or any(i not in by_index for i in order):
        raise InvalidOrder(f"{record.video_id}: order {order} is not a subset-permutation of scene indices")
    pieces = []
    ordered = []
    for pos, idx in enumerate(order):
        caption = by_index[idx].caption
        ordered.append((idx, caption))
        pieces.append(f"{_marker(pos, len(order))} {caption}")
    return CompositeCaption(record.video_id, tuple(ordered), " ".join(pieces))


_MARKER_RE = re.compile(r"(?:^First, )|(?: Then, )|(?: Finally, )")


def parse_composite_caption(rendered: str) -> list:
    """Split a rendered composite caption back into its caption texts.

    Inverse of the fixed marker template, used by the mock generator and
    the round-trip tests. Assumes captions do not themselves contain the
    exact marker strings.
    """
    parts = [p for p in _MARKER_RE.split(rendered) if p]
    return parts


@dataclass
class StatsReport:
    total_videos: int = 0
    over_budget: int = 0
    excluded_too_few_scenes: int = 0
    avg_scenes_per_clip: float = 0.0
    avg_scene_duration_s: float = 0.0
    avg_clip_duration_s: float = 0.0
    total_qa_pairs: int = 0
    shuffled: int = 0
    reversed: int = 0

    def as_dict(self):
        return dict(self.__dict__)


def corpus_stats(clips, qa_counts=None, perm_kinds=None, excluded: int = 0) -> StatsReport:
    """Aggregate Table-1/Table-2 style dataset statistics.

    qa_counts: mapping video_id -> QA pair count; perm_kinds: mapping
    video_id -> {"shuffled","reversed"}.
    """
    clips = list(clips)
    report = StatsReport(total_videos=len(clips), excluded_too_few_scenes=excluded)
    if clips:
        report.over_budget = sum(1 for c in clips if c.over_budget)
        report.avg_scenes_per_clip = sum(c.n_scenes for c in clips) / len(clips)
        report.avg_clip_duration_s = sum(c.clip_duration_s for c in clips) / len(clips)
        total_scenes = sum(c.n_scenes for c in clips)
        report.avg_scene_duration_s = (
            sum(c.clip_duration_s for c in clips) / total_scenes if total_scenes else 0.0
        )
    if qa_counts:
        report.total_qa_pairs = sum(qa_counts.values())
    if perm_kinds:
        report.shuffled = sum(1 for k in perm_kinds.values() if k == "shuffled")
        report.reversed = sum(1 for k in perm_kinds.values() if k == "reversed")
    return report
