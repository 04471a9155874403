"""Hard-negative scene orders: coherence-preserving shuffles and reversals.

A shuffle reorders whole scenes (never frames) and is required to differ
from both the identity and the full reversal, so the two negative kinds
stay disjoint. Sampling is a seeded Fisher-Yates shuffle with rejection of
the two excluded orders: uniform over admissible permutations, O(n) per
draw, and fast to terminate for n >= 3.
"""

import random
from dataclasses import dataclass

from .errors import NotShuffleable
from .ioutil import derive_seed
from .preprocess import ClipSpec


@dataclass(frozen=True)
class ScenePermutation:
    video_id: str
    kind: str  # "shuffled" | "reversed"
    pi: tuple  # output position -> source scene index
    seed: int

    def as_dict(self):
        return {"video_id": self.video_id, "kind": self.kind, "pi": list(self.pi), "seed": self.seed}


def perm_from_dict(obj: dict) -> ScenePermutation:
    return ScenePermutation(obj["video_id"], obj["kind"], tuple(obj["pi"]), int(obj["seed"]))


def apply_permutation(pi, items):
    """Reorder items so output position p holds items[pi[p]]."""
    if len(pi) != len(items):
        raise ValueError(f"permutation length {len(pi)} != item count {len(items)}")
    return [items[i] for i in pi]


def invert_permutation(pi):
    inv = [0] * len(pi)
    for pos, src in enumerate(pi):
        inv[src] = pos
    return tuple(inv)


def make_reverse(clip: ClipSpec) -> ScenePermutation:
    n = clip.n_scenes
    if n < 2:
        raise NotShuffleable(f"{clip.video_id}: need >= 2 scenes to reverse")
    return ScenePermutation(clip.video_id, "reversed", tuple(range(n - 1, -1, -1)), seed=0)


def make_shuffle(clip: ClipSpec, seed: int) -> ScenePermutation:
    """Uniform non-identity, non-reversal permutation of the kept scenes.

    With exactly 2 scenes the only non-identity order is the reversal,
    which is a different negative kind; callers should use make_reverse.
    """
    n = clip.n_scenes
    if n < 3:
        raise NotShuffleable(f"{clip.video_id}: {n} scenes; shuffle needs >= 3")
    rng = random.Random(seed)
    identity = tuple(range(n))
    reversal = tuple(range(n - 1, -1, -1))
    while True:
        pi = list(range(n))
        rng.shuffle(pi)  # Fisher-Yates
        pi = tuple(pi)
        if pi != identity and pi != reversal:
            return ScenePermutation(clip.video_id, "shuffled", pi, seed=seed)


def plan_negative_set(clips, shuffle_fraction: float, seed: int):
    """Assign exactly one permutation per eligible clip.

    2-scene clips always get the reversal; other clips are split between
    shuffled and reversed by a per-video coin with P(shuffled) =
    shuffle_fraction. Seeding is per-video (derive_seed(seed, video_id)) so
    results are independent of iteration or parallelization order.

    Returns (permutations, counts) with counts = {"shuffled": n, "reversed": m}.
    """
    if not 0.0 <= shuffle_fraction <= 1.0:
        raise ValueError(f"shuffle_fraction {shuffle_fraction} outside [0, 1]")
    perms = []
    counts = {"shuffled": 0, "reversed": 0}
    for clip in clips:
        if clip.n_scenes < 2:
            continue
        video_seed = derive_seed(seed, clip.video_id)
        if clip.n_scenes == 2:
            perm = make_reverse(clip)
        else:
            coin = random.Random(derive_seed(seed, clip.video_id, "kind")).random()
            if coin < shuffle_fraction:
                perm = make_shuffle(clip, video_seed)
            else:
                perm = make_reverse(clip)
        perms.append(perm)
        counts[perm.kind] += 1
    return perms, counts
