import pytest

from timewarp.benchgen import (
    CATEGORIES,
    build_mcqa_benchmark,
    build_order_probes,
    select_probe_videos,
    time_bin_warnings,
)
from timewarp.corpus import Scene, VideoRecord
from timewarp.permute import make_reverse
from timewarp.preprocess import trim_video


def _record(n, video_id="v1", scene_len=10.0):
    scenes = tuple(
        Scene(index=i, start_s=scene_len * i, end_s=scene_len * (i + 1), caption=f"event {i} takes place")
        for i in range(n)
    )
    return VideoRecord(video_id, "", scene_len * n, scenes)


class TestMcqaBenchmark:
    def _build(self, mock_client, n_scenes=3):
        record = _record(n_scenes)
        perm = make_reverse(trim_video(record))
        return build_mcqa_benchmark([record], [perm], mock_client)

    def test_both_splits_emitted(self, mock_client):
        items, diags = self._build(mock_client)
        assert diags == []
        splits = [i.split for i in items]
        assert splits.count("normal") == 2
        assert splits.count("shuffled") == 2

    def test_normal_answers_follow_source_order(self, mock_client):
        items, _ = self._build(mock_client)
        normal = [i for i in items if i.split == "normal"]
        for i, item in enumerate(normal):
            assert item.options[item.answer_index] == f"event {i + 1} takes place"
            assert 0 <= item.answer_index < len(item.options)

    def test_shuffled_items_rekeyed_to_permuted_narrative(self, mock_client):
        items, _ = self._build(mock_client)
        shuffled = [i for i in items if i.split == "shuffled"]
        # Reversed narrative [2, 1, 0]: the successor of event 0 wraps to
        # event 2, the successor of event 1 is event 0.
        keyed = {i.question: i.options[i.answer_index] for i in shuffled}
        assert keyed["What happens immediately after: event 0 takes place?"] == "event 2 takes place"
        assert keyed["What happens immediately after: event 1 takes place?"] == "event 0 takes place"

    def test_shuffled_items_reference_permutation_and_video(self, mock_client):
        items, _ = self._build(mock_client)
        for item in items:
            if item.split == "shuffled":
                assert item.perm_ref
                assert item.video_path.endswith("_reversed.mp4")
            else:
                assert item.perm_ref is None
                assert item.video_path.endswith("_original.mp4")

    def test_videos_without_permutation_get_normal_only(self, mock_client):
        items, _ = build_mcqa_benchmark([_record(3)], [], mock_client)
        assert {i.split for i in items} == {"normal"}

    def test_ids_unique(self, mock_client):
        items, _ = self._build(mock_client, n_scenes=5)
        assert len({i.id for i in items}) == len(items)


class TestSelectProbeVideos:
    def test_filters_by_caption_count(self, corpus):
        selected, _ = select_probe_videos(corpus, n=500, min_captions=4)
        assert all(len(r.scenes) >= 4 for r in selected)
        assert selected  # the fixture has plenty of 4+ caption videos

    def test_warning_when_not_enough_eligible(self, corpus):
        _, warning = select_probe_videos(corpus, n=500, min_captions=4)
        assert warning and "500" in warning

    def test_exact_fit_no_warning(self, corpus):
        eligible = [r for r in corpus if len(r.scenes) >= 4]
        selected, warning = select_probe_videos(corpus, n=len(eligible), min_captions=4)
        assert warning is None
        assert len(selected) == len(eligible)

    def test_sampling_is_deterministic(self, corpus):
        a, _ = select_probe_videos(corpus, n=3, min_captions=4, seed=5)
        b, _ = select_probe_videos(corpus, n=3, min_captions=4, seed=5)
        assert [r.video_id for r in a] == [r.video_id for r in b]
        assert len(a) == 3

    def test_no_eligible_videos(self):
        selected, warning = select_probe_videos([_record(2)], n=5, min_captions=4)
        assert selected == [] and warning


class TestOrderProbes:
    def test_seven_captions_full_coverage(self):
        # 7 captions, middle index 3: every category has both subtypes.
        statements, coverage = build_order_probes(_record(7))
        assert all(v == "ok" for v in coverage.values())
        assert len(statements) == 24  # 3 categories x 2 subtypes x 4 statements
        for category in CATEGORIES:
            in_cat = [s for s in statements if s.category == category]
            assert len(in_cat) == 8
            assert sum(1 for s in in_cat if s.label == "yes") == 4

    def test_each_pair_has_two_yes_two_no(self):
        statements, _ = build_order_probes(_record(9))
        pairs = {}
        for st in statements:
            pairs.setdefault(st.pair_id, []).append(st.label)
        for labels in pairs.values():
            assert sorted(labels) == ["no", "no", "yes", "yes"]

    def test_statement_quadruple_is_swap_closed(self):
        # The four statements of a pair are both orderings x both relation
        # words, labeled consistently with the true order.
        statements, _ = build_order_probes(_record(7))
        by_pair = {}
        for st in statements:
            by_pair.setdefault(st.pair_id, []).append(st)
        for quad in by_pair.values():
            texts = {(s.statement, s.label) for s in quad}
            befores = [s for s in quad if " happens before " in s.statement]
            afters = [s for s in quad if " happens after " in s.statement]
            assert len(befores) == 2 and len(afters) == 2
            assert {s.label for s in befores} == {"yes", "no"}
            assert {s.label for s in afters} == {"yes", "no"}
            assert len(texts) == 4

    def test_hop_distances_by_category(self):
        statements, _ = build_order_probes(_record(7))
        for st in statements:
            if st.category == "near":
                assert st.hop_distance == 1
            elif st.category == "moderately_far":
                assert st.hop_distance == 2
            else:
                assert st.hop_distance >= 3

    def test_four_captions_omit_unreachable_subtypes(self):
        # Middle index 2: no partner 2 hops after, nothing 3+ hops away.
        statements, coverage = build_order_probes(_record(4))
        assert coverage[("near", "before")] == "ok"
        assert coverage[("near", "after")] == "ok"
        assert coverage[("moderately_far", "before")] == "ok"
        assert coverage[("moderately_far", "after")] == "omitted"
        assert coverage[("very_far", "before")] == "omitted"
        assert coverage[("very_far", "after")] == "omitted"
        assert len(statements) == 12

    def test_too_few_captions_rejected(self):
        with pytest.raises(ValueError):
            build_order_probes(_record(3))

    def test_deterministic_per_seed(self):
        a, _ = build_order_probes(_record(9), seed=4)
        b, _ = build_order_probes(_record(9), seed=4)
        assert [s.as_dict() for s in a] == [s.as_dict() for s in b]

    def test_time_separation_recorded(self):
        statements, _ = build_order_probes(_record(7, scene_len=15.0))
        near = next(s for s in statements if s.category == "near")
        assert near.time_separation_s == pytest.approx(15.0)


class TestTimeBinWarnings:
    def test_out_of_bin_separation_warned(self):
        # 4-second scenes put near pairs at 4 s, below the nominal 10-20 s bin.
        statements, _ = build_order_probes(_record(7, scene_len=4.0))
        warnings = time_bin_warnings(statements)
        assert any("near" in w for w in warnings)

    def test_in_bin_separation_silent_for_near(self):
        statements, _ = build_order_probes(_record(7, scene_len=15.0))
        near_ids = {s.pair_id for s in statements if s.category == "near"}
        warnings = time_bin_warnings(statements)
        assert not any(w.split(":")[0] in near_ids for w in warnings)
