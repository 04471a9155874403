"""Deterministic synthetic corpora for hermetic runs and tests.

No media files are generated -- media paths point into a nonexistent
directory, which forces every media plan into dry-run mode.
"""

import random

from .corpus import Corpus, Scene, VideoRecord
from .ioutil import derive_seed, sha256_text

_SUBJECTS = (
    "a chef", "a cyclist", "a painter", "a dog", "a drummer", "a gardener",
    "a skater", "a barista", "a welder", "a juggler", "a climber", "a potter",
)
_ACTIONS = (
    "chops vegetables on a wooden board", "rides across a stone bridge",
    "mixes blue paint on a palette", "digs a hole near the fence",
    "taps a steady rhythm on the snare", "waters a row of tomato plants",
    "grinds down a metal rail", "steams milk for a latte",
    "joins two steel beams with sparks flying", "keeps four clubs in the air",
    "reaches for a distant hold", "shapes wet clay on the wheel",
    "wipes the counter with a cloth", "waves at the camera and smiles",
    "opens a box of tools", "stacks cups into a pyramid",
)


def _caption(rng: random.Random, used: set) -> str:
    while True:
        text = f"{rng.choice(_SUBJECTS)} {rng.choice(_ACTIONS)}"
        if text not in used:
            used.add(text)
            return text


def make_record(video_id: str, n_scenes: int, seed: int, scene_len_range=(5.0, 40.0)) -> VideoRecord:
    rng = random.Random(seed)
    used = set()
    scenes = []
    t = 0.0
    for i in range(n_scenes):
        length = round(rng.uniform(*scene_len_range), 1)
        scenes.append(Scene(index=i, start_s=round(t, 1), end_s=round(t + length, 1), caption=_caption(rng, used)))
        t += length
    return VideoRecord(
        video_id=video_id,
        media_path=f"fixture-media/{video_id}.mp4",
        duration_s=round(t, 1),
        scenes=tuple(scenes),
    )


def make_corpus(n_videos: int = 20, seed: int = 7, source_name: str = "synthetic") -> Corpus:
    """Synthetic corpus with varied scene counts.

    Scene counts cycle over {1, 2, 3, 4, 5, 7, 8, 9} so the corpus always
    contains single-scene videos (excluded by trimming), 2-scene videos
    (reversal-only), and >= 7-caption videos (full probe coverage). Some
    videos run past 105 s so trimming has work to do.
    """
    counts = (3, 2, 7, 4, 1, 8, 5, 9, 2, 7)
    records = []
    for i in range(n_videos):
        n_scenes = counts[i % len(counts)]
        # Stretch some videos so the last scenes fall past the trim cap
        # (and occasionally the first two, exercising over_budget).
        stretch = (5.0, 40.0) if i % 3 else (40.0, 70.0)
        records.append(
            make_record(f"vid{i:04d}", n_scenes, derive_seed(seed, f"vid{i:04d}"), stretch)
        )
    records.sort(key=lambda r: r.video_id)
    digest = sha256_text(f"{source_name}|{n_videos}|{seed}")
    return Corpus(records=records, source_name=source_name, manifest_digest=digest)


def make_external_preference_rows(n: int = 17000, seed: int = 11, prefix: str = "ext"):
    """External-style DPO rows (e.g. a ShareGPTVideo-shaped fixture part)."""
    rng = random.Random(derive_seed(seed, "external"))
    rows = []
    for i in range(n):
        rows.append(
            {
                "id": f"{prefix}-{i:06d}",
                "video_path": f"external/{prefix}_{i:06d}.mp4",
                "shuffled_video_path": None,
                "prompt": f"What is shown in clip {i}? Answer based on the video.",
                "chosen": f"The clip shows scene variant {rng.randrange(1000)}.",
                "rejected": f"The clip shows scene variant {rng.randrange(1000)} in reverse.",
                "source": "external",
                "perm_kind": "none",
                "perturbation": None,
            }
        )
    return rows
