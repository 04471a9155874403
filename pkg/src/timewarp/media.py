"""Media edit planning: cut/concat, frame extraction, frame perturbations.

All edits are expressed as fully-resolved ffmpeg argument vectors inside a
MediaPlan; nothing is decoded in-process. Plans are deterministic given
their inputs, so they can be pinned as golden files, inspected, or executed
later. Cut-then-concat re-encodes with fixed codec settings (stream copy
would cut on keyframe boundaries that differ across inputs).
"""

import shutil
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import VideoRecord
from .errors import InvalidSpec, MediaMissing, StepFailed, ToolkitUnavailable
from .permute import ScenePermutation
from .preprocess import ClipSpec

TOOLKIT = "ffmpeg"
# Fixed re-encode settings for bit-stable concatenation.
ENCODE_ARGS = ["-c:v", "libx264", "-preset", "veryfast", "-crf", "23", "-pix_fmt", "yuv420p", "-an"]


@dataclass(frozen=True)
class CommandStep:
    tool: str
    argv: tuple
    purpose: str  # cut | concat | extract_frames | perturb

    def as_dict(self):
        return {"tool": self.tool, "argv": list(self.argv), "purpose": self.purpose}


@dataclass
class MediaPlan:
    video_id: str
    steps: list
    outputs: list
    dry_run: bool = False

    def as_dict(self):
        return {
            "video_id": self.video_id,
            "steps": [s.as_dict() for s in self.steps],
            "outputs": [str(p) for p in self.outputs],
            "dry_run": self.dry_run,
        }


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str  # downscale | color_distort
    downscale_factor: float = 0.0
    channel_map: tuple = ()
    hue_shift_deg: float = 0.0

    def validate(self):
        if self.kind == "downscale":
            if not 0.0 < self.downscale_factor < 1.0:
                raise InvalidSpec(f"downscale_factor {self.downscale_factor} outside (0, 1)")
            if self.channel_map or self.hue_shift_deg:
                raise InvalidSpec("downscale spec must not set color fields")
        elif self.kind == "color_distort":
            if self.downscale_factor:
                raise InvalidSpec("color_distort spec must not set downscale_factor")
            if sorted(self.channel_map) != [0, 1, 2]:
                raise InvalidSpec(f"channel_map {self.channel_map} is not a permutation of (0,1,2)")
            if self.channel_map == (0, 1, 2) and self.hue_shift_deg == 0.0:
                raise InvalidSpec("identity channel_map with 0 hue shift would be a no-op")
        else:
            raise InvalidSpec(f"unknown perturbation kind {self.kind!r}")

    def as_dict(self):
        return {
            "kind": self.kind,
            "downscale_factor": self.downscale_factor,
            "channel_map": list(self.channel_map),
            "hue_shift_deg": self.hue_shift_deg,
        }


def _step(argv, purpose) -> CommandStep:
    return CommandStep(TOOLKIT, tuple(str(a) for a in argv), purpose)


def plan_clip_render(record: VideoRecord, clip: ClipSpec, perm: ScenePermutation | None, out_dir) -> MediaPlan:
    """Cut kept scenes and concatenate them in permutation (or source) order."""
    if perm is not None and perm.video_id != record.video_id:
        raise ValueError(f"permutation for {perm.video_id} applied to {record.video_id}")
    if clip.video_id != record.video_id:
        raise ValueError(f"clip for {clip.video_id} applied to {record.video_id}")
    out_dir = Path(out_dir)
    dry_run = False
    if not record.media_path or not Path(record.media_path).exists():
        dry_run = True  # MediaMissing: still emit the plan, never executable

    scenes = {s.index: s for s in record.scenes}
    seg_paths = []
    steps = []
    for idx in clip.kept_scene_indices:
        sc = scenes[idx]
        seg = out_dir / f"{record.video_id}_seg{idx:03d}.mp4"
        seg_paths.append(seg)
        steps.append(
            _step(
                [TOOLKIT, "-y", "-ss", f"{sc.start_s:.3f}", "-t", f"{sc.end_s - sc.start_s:.3f}",
                 "-i", record.media_path, *ENCODE_ARGS, seg],
                "cut",
            )
        )
    order = list(perm.pi) if perm is not None else list(range(len(seg_paths)))
    ordered_segs = [seg_paths[p] for p in order]
    suffix = perm.kind if perm is not None else "original"
    out_path = out_dir / f"{record.video_id}_{suffix}.mp4"
    n = len(ordered_segs)
    filter_expr = "".join(f"[{i}:v]" for i in range(n)) + f"concat=n={n}:v=1:a=0[v]"
    concat_argv = [TOOLKIT, "-y"]
    for seg in ordered_segs:
        concat_argv += ["-i", seg]
    concat_argv += ["-filter_complex", filter_expr, "-map", "[v]", *ENCODE_ARGS, out_path]
    steps.append(_step(concat_argv, "concat"))
    return MediaPlan(record.video_id, steps, seg_paths + [out_path], dry_run=dry_run)


def frame_timestamps(duration_s: float, n_frames: int):
    """Midpoint-of-bin sampling: t_k = (k + 0.5) * D / n, avoids t=0 and t=D."""
    return [(k + 0.5) * duration_s / n_frames for k in range(n_frames)]


def plan_frame_extraction(clip_path, duration_s: float, n_frames: int = 10, out_dir=None,
                          source_exists=None) -> MediaPlan:
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    clip_path = Path(clip_path)
    if source_exists is None:
        source_exists = clip_path.exists()
    out_dir = Path(out_dir) if out_dir is not None else clip_path.parent
    stem = clip_path.stem
    steps = []
    outputs = []
    for k, t in enumerate(frame_timestamps(duration_s, n_frames)):
        out = out_dir / f"{stem}_frame{k:02d}.jpg"
        outputs.append(out)
        steps.append(
            _step([TOOLKIT, "-y", "-ss", f"{t:.3f}", "-i", clip_path, "-frames:v", "1", "-q:v", "2", out],
                  "extract_frames")
        )
    return MediaPlan(stem, steps, outputs, dry_run=not source_exists)


def _perturb_filter(spec: PerturbationSpec) -> str:
    if spec.kind == "downscale":
        f = spec.downscale_factor
        # Scale down then back up so the information loss survives.
        return f"scale=iw*{f}:ih*{f},scale=iw/{f}:ih/{f}"
    r, g, b = spec.channel_map
    src = ["r", "g", "b"]
    mix = ":".join(f"{dst}{src[ch]}=1" for dst, ch in zip(["r", "g", "b"], (r, g, b)))
    expr = f"colorchannelmixer={mix}"
    if spec.hue_shift_deg:
        expr += f",hue=h={spec.hue_shift_deg}"
    return expr


def plan_perturbation(frames, spec: PerturbationSpec, out_dir=None, dry_run=None) -> MediaPlan:
    """One perturb step per frame, writing *_perturbed siblings."""
    spec.validate()
    frames = [Path(p) for p in frames]
    if not frames:
        raise ValueError("frames list is empty")
    filter_expr = _perturb_filter(spec)
    steps = []
    outputs = []
    for frame in frames:
        dest_dir = Path(out_dir) if out_dir is not None else frame.parent
        out = dest_dir / f"{frame.stem}_perturbed{frame.suffix}"
        outputs.append(out)
        steps.append(_step([TOOLKIT, "-y", "-i", frame, "-vf", filter_expr, out], "perturb"))
    if dry_run is None:
        dry_run = not all(f.exists() for f in frames)
    return MediaPlan(frames[0].stem, steps, outputs, dry_run=dry_run)


@dataclass
class ExecutionReport:
    video_id: str
    statuses: list = field(default_factory=list)  # (purpose, status, seconds)

    def as_dict(self):
        return {
            "video_id": self.video_id,
            "steps": [{"purpose": p, "status": s, "seconds": d} for p, s, d in self.statuses],
        }


def execute_plan(plan: MediaPlan, cwd=None) -> ExecutionReport:
    """Run steps in order; a failure aborts the rest of this plan only."""
    report = ExecutionReport(plan.video_id)
    if plan.dry_run:
        report.statuses = [(s.purpose, "skipped", 0.0) for s in plan.steps]
        return report
    if shutil.which(TOOLKIT) is None:
        raise ToolkitUnavailable(f"{TOOLKIT} not found on PATH")
    base = Path(cwd) if cwd else Path(".")
    for out in plan.outputs:
        (base / out).parent.mkdir(parents=True, exist_ok=True)
    for step in plan.steps:
        t0 = time.monotonic()
        proc = subprocess.run(list(step.argv), capture_output=True, text=True, cwd=cwd)
        dt = time.monotonic() - t0
        if proc.returncode != 0:
            report.statuses.append((step.purpose, "failed", dt))
            raise StepFailed(f"{plan.video_id}: {step.purpose} exited {proc.returncode}", stderr=proc.stderr)
        report.statuses.append((step.purpose, "ok", dt))
    return report
