"""Acceptance gate: protocol-level constants and properties, one printed
pass/fail line per criterion. Everything runs hermetically with the mock
backend and synthetic fixtures."""

import filecmp
import itertools
import math
import random
import time

import pytest

from timewarp.corpus import save_corpus
from timewarp.datasets import (
    KTO_MATRIX,
    PreferenceRecord,
    difficulty_probe,
    dpo_to_kto,
    merge_mixture,
    sample_kto,
    token_overlap,
)
from timewarp.errors import TooFewScenes
from timewarp.fixtures import make_corpus, make_external_preference_rows
from timewarp.ioutil import sha256_file, write_jsonl
from timewarp.permute import apply_permutation, invert_permutation, make_reverse, make_shuffle
from timewarp.pipeline import STAGES, Pipeline, RunConfig
from timewarp.preprocess import ClipSpec, trim_video
from timewarp.scoring import QuadruplePrediction, grade_order_probes, score_group, strictness_sweep
from timewarp.verify import CategoricalToy, PolicyLogProbs, dpo_grad, dpo_loss, rlhf_objective


def _report(number, name):
    print(f"[acceptance {number}] {name}: PASS")


def test_acceptance_1_trimming():
    corpus = make_corpus(n_videos=50, seed=123)
    t0 = time.perf_counter()
    clips = []
    excluded = 0
    for record in corpus:
        try:
            clips.append(trim_video(record))
        except TooFewScenes:
            excluded += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    assert clips and excluded > 0
    assert excluded == sum(1 for r in corpus if len(r.scenes) < 2)
    for clip in clips:
        assert clip.n_scenes >= 2
        if not clip.over_budget:
            assert clip.clip_duration_s <= 105.0
    _report(1, "trimming respects the 105 s cap and 2-scene floor")


def test_acceptance_2_permutations(tmp_path, fixture_corpus_path):
    for n in range(3, 7):
        clip = ClipSpec(f"v{n}", tuple(range(n)), 10.0 * n, 10.0 * n)
        identity = tuple(range(n))
        reversal = tuple(range(n - 1, -1, -1))
        items = [f"caption {i}" for i in range(n)]
        for seed in range(300):
            pi = make_shuffle(clip, seed).pi
            assert sorted(pi) == list(identity)
            assert pi != identity and pi != reversal
            permuted = apply_permutation(pi, items)
            assert apply_permutation(invert_permutation(pi), permuted) == items
        rev = make_reverse(clip).pi
        assert apply_permutation(rev, apply_permutation(rev, items)) == items

    hashes = []
    for run in ("run1", "run2"):
        cfg = RunConfig(
            corpus_path=str(fixture_corpus_path), output_dir=str(tmp_path / run),
            seed=7, dry_run=True,
        )
        pipe = Pipeline(cfg)
        for stage in ("ingest", "trim", "permute"):
            pipe.run_stage(stage)
        hashes.append(sha256_file(tmp_path / run / "perms.jsonl"))
    assert hashes[0] == hashes[1]
    _report(2, "shuffles exclude identity/reversal; plan files are seed-deterministic")


def _dpo_fixture(n):
    return [
        PreferenceRecord(
            id=f"pair{i:05d}",
            video_path=f"media/v{i}_original.mp4",
            shuffled_video_path=f"media/v{i}_reversed.mp4",
            prompt=f"What happens after event {i}?",
            chosen=f"chosen {i}",
            rejected=f"rejected {i}",
            source="explicit",
            perm_kind="reversed",
        )
        for i in range(n)
    ]


def test_acceptance_3_kto_conversion():
    pairs = _dpo_fixture(7500)
    records, diags = dpo_to_kto(pairs)
    assert diags == []
    assert len(records) == 30000
    by_parent = {}
    for rec in records:
        by_parent.setdefault(rec.dpo_id, []).append(rec)
    matrix = set(KTO_MATRIX)
    for pair in pairs[:200]:
        quad = by_parent[pair.id]
        assert len(quad) == 4
        got = {
            (r.origin, "chosen" if r.completion == pair.chosen else "rejected", r.label)
            for r in quad
        }
        assert got == matrix
    sampled = sample_kto(records, 15000, seed=7)
    assert len(sampled) == 15000
    assert [r.id for r in sampled] == [r.id for r in sample_kto(records, 15000, seed=7)]
    _report(3, "7,500 DPO records decompose into 30,000 labeled KTO records")


def test_acceptance_4_mixture(tmp_path):
    external = tmp_path / "external.jsonl"
    explicit = tmp_path / "explicit.jsonl"
    implicit = tmp_path / "implicit.jsonl"
    write_jsonl(external, make_external_preference_rows(17000, seed=11))
    write_jsonl(explicit, (p.as_dict() for p in _dpo_fixture(8000)))
    implicit_rows = [dict(p.as_dict(), id=f"imp{i:05d}") for i, p in enumerate(_dpo_fixture(7600))]
    write_jsonl(implicit, implicit_rows)
    merged = merge_mixture([(external, None), (explicit, 7500), (implicit, 7500)], seed=5)
    assert len(merged) == 32000
    assert len({row["id"] for row in merged}) == 32000
    _report(4, "17k + 7.5k + 7.5k parts merge into 32,000 unique-id records")


def test_acceptance_5_group_scoring():
    t0 = time.perf_counter()
    truth = {"q": (0, 0, 0, 0)}
    text = video = group = 0
    for t1, t2, v1, v2 in itertools.product((0, 1), repeat=4):
        result = score_group([QuadruplePrediction("q", t1, t2, v1, v2)], truth)
        text += result["text"] == 100.0
        video += result["video"] == 100.0
        group += result["group"] == 100.0
    assert (text, video, group) == (4, 4, 1)

    rng = random.Random(20240506)
    n = 100000
    truth = {f"q{i}": tuple(rng.randrange(2) for _ in range(4)) for i in range(n)}
    quads = [
        QuadruplePrediction(f"q{i}", *(rng.randrange(2) for _ in range(4))) for i in range(n)
    ]
    result = score_group(quads, truth)
    assert abs(result["text"] - 25.0) < 0.5
    assert abs(result["video"] - 25.0) < 0.5
    assert abs(result["group"] - 6.25) < 0.5
    # Under independent uniform guessing the joint rate is 6.25%, not the
    # 12.5% a correlated-guessing model would produce; report, don't assert.
    print(
        f"[acceptance 5] note: random group rate {result['group']:.2f}% "
        f"(independence model 6.25%, correlated-model figure 12.5%)"
    )
    assert time.perf_counter() - t0 < 5.0
    _report(5, "quadruple scoring matches brute force and the 25%/25% random baseline")


def test_acceptance_6_order_probes():
    from timewarp.benchgen import CATEGORIES, build_order_probes

    corpus = make_corpus(n_videos=20, seed=7)
    rich = [r for r in corpus if len(r.scenes) >= 7]
    assert rich
    all_statements = []
    for record in rich:
        statements, coverage = build_order_probes(record, seed=3)
        assert all(v == "ok" for v in coverage.values())
        for category in CATEGORIES:
            in_cat = [s for s in statements if s.category == category]
            assert len(in_cat) == 8
        by_pair = {}
        for st in statements:
            by_pair.setdefault(st.pair_id, []).append(st.label)
        for labels in by_pair.values():
            assert sorted(labels) == ["no", "no", "yes", "yes"]
        all_statements.extend(statements)

    def predict(statements, n_correct_by_subtype):
        preds, seen = [], {}
        for st in statements:
            i = seen.setdefault((st.pair_id,), 0)
            seen[(st.pair_id,)] = i + 1
            ok = i < n_correct_by_subtype
            preds.append(
                {"item_id": st.id, "response": st.label if ok else ("no" if st.label == "yes" else "yes")}
            )
        return preds

    one_video = [s for s in all_statements if s.video_path == all_statements[0].video_path]
    near = [s for s in one_video if s.category == "near"]
    # 3 of 4 per subtype: subcategory passes, category (6/8) passes.
    report = grade_order_probes(near, predict(near, 3))
    assert set(report.subcategory_pass_rates.values()) == {100.0}
    assert report.category_pass_rates == {"near": 100.0}
    # 2 of 4 per subtype: 4/8 fails the category.
    report = grade_order_probes(near, predict(near, 2))
    assert report.category_pass_rates == {"near": 0.0}
    # 4 + 1 = 5/8 passes the category.
    before = [s for s in near if s.subtype == "before"]
    after = [s for s in near if s.subtype == "after"]
    preds = predict(before, 4) + predict(after, 1)
    assert grade_order_probes(near, preds).category_pass_rates == {"near": 100.0}

    all_no = [{"item_id": s.id, "response": "No"} for s in all_statements]
    sweep = strictness_sweep(all_statements, all_no)
    assert sweep[3] == 0.0
    assert sweep[1] == 100.0 and sweep[2] == 100.0
    values = [sweep[k] for k in (1, 2, 3, 4)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    _report(6, "order probes emit 8 statements per category and grade per thresholds")


def test_acceptance_7_loss_verification():
    t0 = time.perf_counter()
    zero = [PolicyLogProbs(-1.0, -1.0, -1.0, -1.0, 1.0) for _ in range(8)]
    assert abs(dpo_loss(zero) - math.log(2.0)) < 1e-12

    rng = random.Random(424242)
    fields = ("logp_w_theta", "logp_l_theta", "logp_w_ref", "logp_l_ref")
    h = 1e-5
    for _ in range(100):
        batch = [
            PolicyLogProbs(
                -rng.uniform(0.1, 5.0), -rng.uniform(0.1, 5.0),
                -rng.uniform(0.1, 5.0), -rng.uniform(0.1, 5.0),
                lam=rng.choice([0.1, 0.5, 1.0, 2.0]),
            )
            for _ in range(rng.randint(1, 5))
        ]
        grads = dpo_grad(batch)
        i = rng.randrange(len(batch))
        field = rng.choice(fields)
        ex = batch[i]

        def shifted(delta):
            values = {f: getattr(ex, f) for f in fields}
            values[field] = values[field] + delta
            return dpo_loss(batch[:i] + [PolicyLogProbs(lam=ex.lam, **values)] + batch[i + 1:])

        numeric = (shifted(h) - shifted(-h)) / (2 * h)
        assert grads[i][field] == pytest.approx(numeric, rel=1e-6, abs=1e-9)

    for _ in range(1000):
        k = rng.randint(2, 6)
        raw = [rng.uniform(0.01, 1.0) for _ in range(k)]
        p = tuple(x / sum(raw) for x in raw)
        rewards = tuple(rng.uniform(-2, 2) for _ in range(k))
        result = rlhf_objective(CategoricalToy(rewards, p, p), lam=rng.uniform(0.1, 3.0))
        assert result["kl"] == 0.0
        assert result["objective"] == result["expected_reward"]
        raw_q = [rng.uniform(0.01, 1.0) for _ in range(k)]
        q = tuple(x / sum(raw_q) for x in raw_q)
        assert rlhf_objective(CategoricalToy(rewards, p, q), lam=1.0)["kl"] >= -1e-12
    assert time.perf_counter() - t0 < 2.0
    _report(7, "loss anchors, analytic gradients, and KL properties verified")


def test_acceptance_8_end_to_end_hermetic(tmp_path):
    corpus_path = tmp_path / "corpus.jsonl"
    save_corpus(make_corpus(20, seed=7), corpus_path)
    t0 = time.perf_counter()
    outs = []
    for run in ("run_a", "run_b"):
        out = tmp_path / run
        cfg = RunConfig(corpus_path=str(corpus_path), output_dir=str(out), seed=7, dry_run=True)
        statuses = Pipeline(cfg).run_all()
        assert set(statuses) == set(STAGES)
        assert all(s == "ok" for s in statuses.values())
        outs.append(out)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0

    names_a = sorted(p.name for p in outs[0].iterdir())
    names_b = sorted(p.name for p in outs[1].iterdir())
    assert names_a == names_b
    for name in names_a:
        if name == "manifest.json":  # wall times differ between runs
            continue
        assert filecmp.cmp(outs[0] / name, outs[1] / name, shallow=False), name

    stats_text = (outs[0] / "stats.txt").read_text("utf-8")
    for header in ("Total Videos", "Avg # of scenes", "Avg Scene Duration",
                   "QA Pairs", "Shuffled", "Reversed"):
        assert header in stats_text
    _report(8, f"hermetic double run is byte-identical ({elapsed:.1f} s for both)")


def test_acceptance_9_difficulty_probe():
    positive = (
        "At the beginning of the video, the person is seen smiling and waving to the "
        "camera, which sets a friendly and engaging tone before she delves into her "
        "skincare routine."
    )
    negative = (
        "At the beginning of the video, the person is smiling and looking down before "
        "she starts discussing her skincare routine."
    )
    hard = PreferenceRecord(
        id="near-duplicate", video_path="v", shuffled_video_path=None, prompt="p",
        chosen=positive, rejected=negative, source="explicit",
    )
    easy = PreferenceRecord(
        id="disjoint", video_path="v", shuffled_video_path=None, prompt="p",
        chosen="a kite rises", rejected="two drums settle", source="explicit",
    )
    report = difficulty_probe([hard, easy])
    assert report.threshold == 0.6
    assert "near-duplicate" in report.hard_ids
    assert "disjoint" not in report.hard_ids
    assert token_overlap(easy.chosen, easy.rejected) == 0.0
    _report(9, "near-duplicate preference pairs are flagged hard at threshold 0.6")
