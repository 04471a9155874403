"""Pipeline orchestration: stage wiring, run manifest, resumability.

Every stage writes its outputs under the run's output directory and records
(input digests, output digests, seed, wall time) in ``manifest.json``.
Re-running a stage whose recorded input and output digests still match the
files on disk is a no-op; a digest mismatch (crashed or edited run)
regenerates the stage.
"""

import random
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import report, verify
from .benchgen import build_mcqa_benchmark, build_order_probes, select_probe_videos, time_bin_warnings
from .corpus import load_corpus, record_from_dict, save_corpus
from .datasets import (
    build_explicit_pairs,
    build_implicit_pairs,
    difficulty_probe,
    dpo_to_kto,
    export_sft,
    merge_mixture,
    preference_from_dict,
    sample_kto,
)
from .errors import ConfigError, StageDependencyMissing
from .ioutil import derive_seed, read_jsonl, sha256_file, sha256_text, write_json, write_jsonl
from .llmclient import GeneratorClient, HttpBackend, MockBackend
from .media import PerturbationSpec, execute_plan, plan_clip_render, plan_frame_extraction, plan_perturbation
from .permute import apply_permutation, perm_from_dict, plan_negative_set
from .preprocess import build_composite_caption, clip_from_dict, corpus_stats, trim_video
from .promptkit import parse_oe_qa, render_prompt
from .scoring import QuadruplePrediction, grade_order_probes, score_group, score_mcqa, strictness_sweep
from .benchgen import BenchmarkItem, OrderStatement
from .llmclient import GenRequest

STAGES = (
    "ingest", "trim", "permute", "render", "gen-explicit", "gen-implicit", "to-kto",
    "merge", "bench-mcqa", "bench-probes", "score-mcqa", "score-group", "grade-probes",
    "verify-loss", "stats",
)


@dataclass
class RunConfig:
    corpus_path: str
    corpus_format: str = "canonical-jsonl"
    caption_field: str = "description"
    output_dir: str = "out"
    seed: int = 0
    max_s: float = 105.0
    min_scenes: int = 2
    shuffle_fraction: float = 0.522
    n_frames: int = 10
    dry_run: bool = False
    backend_kind: str = "mock"
    endpoint: str = ""
    model_id: str = "mock"
    credential_env: str = "TIMEWARP_API_KEY"
    max_in_flight: int = 4
    cache_dir: str = ""
    mixture_parts: list = field(default_factory=list)  # [path, take|"all"] entries
    kto_sample_n: int = 0
    probe_n: int = 500
    probe_min_captions: int = 4
    downscale_factor: float = 0.25
    hue_shift_deg: float = 90.0

    @classmethod
    def from_toml(cls, path, **overrides):
        import tomli

        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        corpus = raw.get("corpus", {})
        run = raw.get("run", {})
        backend = raw.get("backend", {})
        cfg = cls(
            corpus_path=corpus.get("path", ""),
            corpus_format=corpus.get("format", "canonical-jsonl"),
            caption_field=corpus.get("caption_field", "description"),
            output_dir=run.get("output_dir", "out"),
            seed=int(run.get("seed", 0)),
            max_s=float(run.get("max_s", 105.0)),
            min_scenes=int(run.get("min_scenes", 2)),
            shuffle_fraction=float(run.get("shuffle_fraction", 0.522)),
            n_frames=int(run.get("n_frames", 10)),
            dry_run=bool(run.get("dry_run", False)),
            backend_kind=backend.get("kind", "mock"),
            endpoint=backend.get("endpoint", ""),
            model_id=backend.get("model_id", "mock"),
            credential_env=backend.get("credential_env", "TIMEWARP_API_KEY"),
            max_in_flight=int(backend.get("max_in_flight", 4)),
            cache_dir=backend.get("cache_dir", ""),
            mixture_parts=raw.get("mixture", {}).get("parts", []),
            kto_sample_n=int(raw.get("kto", {}).get("sample_n", 0)),
            probe_n=int(raw.get("probes", {}).get("n", 500)),
            probe_min_captions=int(raw.get("probes", {}).get("min_captions", 4)),
        )
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        if not cfg.corpus_path:
            raise ConfigError("config missing [corpus].path")
        return cfg


def _hash_bit(*parts: str) -> int:
    """Deterministic pseudo-random bit from content (machine-independent)."""
    return int(sha256_text("\x1f".join(parts))[:8], 16) & 1


def _hash_mod(n: int, *parts: str) -> int:
    return int(sha256_text("\x1f".join(parts))[:8], 16) % n


class Pipeline:
    """Executes the stage graph with manifest-based resumability."""

    # stage -> (input artifact names, output artifact names); artifact paths
    # are relative to the output dir except the raw corpus path.
    ARTIFACTS = {
        "ingest": ((), ("corpus.jsonl", "ingest_report.json")),
        "trim": (("corpus.jsonl",), ("clips.jsonl", "trim_report.json")),
        "permute": (("clips.jsonl",), ("perms.jsonl", "perm_counts.json")),
        "render": (("corpus.jsonl", "clips.jsonl", "perms.jsonl"), ("media_plans.json",)),
        "gen-explicit": (("corpus.jsonl", "clips.jsonl", "perms.jsonl"),
                         ("dpo_explicit.jsonl", "gen_explicit_report.json")),
        "gen-implicit": (("corpus.jsonl", "clips.jsonl"), ("dpo_implicit.jsonl",)),
        "to-kto": (("dpo_explicit.jsonl",), ("kto.jsonl", "kto_report.json")),
        "merge": (("dpo_explicit.jsonl", "dpo_implicit.jsonl"), ("merged.jsonl",)),
        "bench-mcqa": (("corpus.jsonl", "clips.jsonl", "perms.jsonl"), ("bench_mcqa.jsonl",)),
        "bench-probes": (("corpus.jsonl",), ("probes.jsonl", "probe_coverage.json")),
        "score-mcqa": (("bench_mcqa.jsonl",),
                       ("predictions_mcqa.jsonl", "score_mcqa.json", "score_mcqa.png")),
        "score-group": (("dpo_explicit.jsonl",), ("predictions_group.jsonl", "score_group.json")),
        "grade-probes": (("probes.jsonl",),
                         ("predictions_probes.jsonl", "grade_probes.json", "probe_grades.png")),
        "verify-loss": ((), ("verify_loss.json",)),
        "stats": (("clips.jsonl", "perm_counts.json", "dpo_explicit.jsonl", "dpo_implicit.jsonl",
                   "trim_report.json"),
                  ("stats.json", "stats.txt", "stats.png", "difficulty.json", "difficulty.png", "sft.jsonl")),
    }

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = self._load_manifest()
        self.client = self._make_client()

    def _make_client(self) -> GeneratorClient:
        if self.cfg.backend_kind == "mock":
            backend = MockBackend()
        elif self.cfg.backend_kind == "http_openai_compatible":
            if not self.cfg.endpoint:
                raise ConfigError("http backend requires [backend].endpoint")
            backend = HttpBackend(self.cfg.endpoint, self.cfg.credential_env)
        else:
            raise ConfigError(f"unknown backend kind {self.cfg.backend_kind!r}")
        cache_dir = self.cfg.cache_dir or None
        return GeneratorClient(backend, cache_dir=cache_dir, max_in_flight=self.cfg.max_in_flight)

    def _load_manifest(self) -> dict:
        import json

        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text("utf-8"))
        return {"seed": self.cfg.seed, "stages": {}}

    def _save_manifest(self):
        write_json(self.manifest_path, self.manifest)

    def path(self, name: str) -> Path:
        return self.out / name

    def _digests(self, names):
        out = {}
        for name in names:
            p = self.path(name)
            out[name] = sha256_file(p) if p.exists() else None
        return out

    def _input_paths(self, stage: str):
        names, _ = self.ARTIFACTS[stage]
        missing = [n for n in names if not self.path(n).exists()]
        if missing:
            producers = sorted(
                {s for s, (_, outs) in self.ARTIFACTS.items() if set(outs) & set(missing)}
            )
            raise StageDependencyMissing(
                f"stage {stage!r} needs {missing} (run {producers} first)"
            )
        return names

    def up_to_date(self, stage: str) -> bool:
        entry = self.manifest["stages"].get(stage)
        if entry is None:
            return False
        for name, digest in entry.get("inputs", {}).items():
            p = self.path(name)
            if not p.exists() or sha256_file(p) != digest:
                return False
        for name, digest in entry.get("outputs", {}).items():
            p = self.path(name)
            if not p.exists() or sha256_file(p) != digest:
                return False
        for fname, digest in entry.get("external", {}).items():
            if not Path(fname).exists() or sha256_file(fname) != digest:
                return False
        # Config knobs that feed the stage are part of the input digest.
        if entry.get("config_digest") != self._config_digest():
            return False
        return True

    def _config_digest(self) -> str:
        cfg = dict(self.cfg.__dict__)
        cfg.pop("output_dir", None)
        return sha256_text(repr(sorted(cfg.items())))

    def _external_digests(self, stage: str) -> dict:
        if stage != "ingest":
            return {}
        p = Path(self.cfg.corpus_path)
        if p.is_dir():
            files = sorted(str(f) for f in p.iterdir() if f.is_file())
        else:
            files = [str(p)] if p.exists() else []
        return {f: sha256_file(f) for f in files}

    def run_stage(self, stage: str) -> str:
        """Run one stage; returns 'ok' or 'skipped (up-to-date)'."""
        if stage not in self.ARTIFACTS:
            raise ConfigError(f"unknown stage {stage!r}")
        inputs = self._input_paths(stage)
        if self.up_to_date(stage):
            return "skipped (up-to-date)"
        t0 = time.monotonic()
        getattr(self, "stage_" + stage.replace("-", "_"))()
        wall = time.monotonic() - t0
        _, outputs = self.ARTIFACTS[stage]
        self.manifest["stages"][stage] = {
            "inputs": self._digests(inputs),
            "external": self._external_digests(stage),
            "outputs": self._digests(outputs),
            "seed": self.cfg.seed,
            "config_digest": self._config_digest(),
            "wall_time_s": round(wall, 3),
        }
        self._save_manifest()
        return "ok"

    def run_all(self):
        return {stage: self.run_stage(stage) for stage in STAGES}

    # -- loading helpers -------------------------------------------------

    def _records(self):
        return [record_from_dict(r) for r in read_jsonl(self.path("corpus.jsonl"))]

    def _clips(self):
        return [clip_from_dict(c) for c in read_jsonl(self.path("clips.jsonl"))]

    def _perms(self):
        return [perm_from_dict(p) for p in read_jsonl(self.path("perms.jsonl"))]

    def _clip_captions(self, record, clip, perm=None):
        order = list(clip.kept_scene_indices)
        if perm is not None:
            order = apply_permutation(perm.pi, order)
        return build_composite_caption(record, order)

    # -- stages ----------------------------------------------------------

    def stage_ingest(self):
        corpus = load_corpus(self.cfg.corpus_path, self.cfg.corpus_format, self.cfg.caption_field)
        save_corpus(corpus, self.path("corpus.jsonl"))
        write_json(
            self.path("ingest_report.json"),
            {
                "source": corpus.source_name,
                "manifest_digest": corpus.manifest_digest,
                "n_records": len(corpus),
                "n_rejected_diagnostics": len(corpus.rejected),
                "diagnostics": [d.as_dict() for d in corpus.rejected],
            },
        )

    def stage_trim(self):
        clips = []
        excluded = []
        for record in self._records():
            if len(record.scenes) < self.cfg.min_scenes:
                excluded.append(record.video_id)
                continue
            clips.append(trim_video(record, self.cfg.max_s, self.cfg.min_scenes))
        write_jsonl(self.path("clips.jsonl"), (c.as_dict() for c in clips))
        write_json(
            self.path("trim_report.json"),
            {
                "n_clips": len(clips),
                "n_over_budget": sum(c.over_budget for c in clips),
                "excluded_too_few_scenes": excluded,
            },
        )

    def stage_permute(self):
        perms, counts = plan_negative_set(self._clips(), self.cfg.shuffle_fraction, self.cfg.seed)
        perms.sort(key=lambda p: p.video_id)
        write_jsonl(self.path("perms.jsonl"), (p.as_dict() for p in perms))
        write_json(self.path("perm_counts.json"), counts)

    def stage_render(self):
        # All planned paths are relative to the output dir so the output
        # tree is byte-identical wherever the run lands; execution happens
        # with cwd = output dir.
        records = {r.video_id: r for r in self._records()}
        perms = {p.video_id: p for p in self._perms()}
        media_dir = Path("media")
        plans = []
        for clip in self._clips():
            record = records[clip.video_id]
            perm = perms.get(clip.video_id)
            original = plan_clip_render(record, clip, None, media_dir)
            plans.append(original)
            if perm is not None:
                plans.append(plan_clip_render(record, clip, perm, media_dir))
            clip_path = media_dir / f"{record.video_id}_original.mp4"
            frames_plan = plan_frame_extraction(
                clip_path, clip.clip_duration_s, self.cfg.n_frames,
                source_exists=(self.out / clip_path).exists(),
            )
            plans.append(frames_plan)
            spec = PerturbationSpec(kind="downscale", downscale_factor=self.cfg.downscale_factor)
            plans.append(plan_perturbation([str(p) for p in frames_plan.outputs], spec, dry_run=True))
        if not self.cfg.dry_run:
            for plan in plans:
                if not plan.dry_run:
                    execute_plan(plan, cwd=self.out)
        write_json(self.path("media_plans.json"), [p.as_dict() for p in plans])

    def _frame_paths(self, video_id: str, perturbed=False):
        suffix = "_perturbed" if perturbed else ""
        return [
            f"media/{video_id}_original_frame{k:02d}{suffix}.jpg"
            for k in range(self.cfg.n_frames)
        ]

    def stage_gen_explicit(self):
        records = {r.video_id: r for r in self._records()}
        clips = {c.video_id: c for c in self._clips()}
        pairs = []
        diagnostics = []
        qa_counts = {}
        for perm in self._perms():
            record = records[perm.video_id]
            clip = clips[perm.video_id]
            original = self._clip_captions(record, clip)
            permuted = self._clip_captions(record, clip, perm)
            prompt = render_prompt("oe_qa_gen", {"composite_caption": original.rendered})
            response = self.client.generate(GenRequest(prompt=prompt, model_id=self.cfg.model_id))
            qa, drops = parse_oe_qa(response.text)
            diagnostics.extend(f"{record.video_id}: {d}" for d in drops)
            qa_counts[record.video_id] = len(qa)
            recs, diags = build_explicit_pairs(
                record, clip, perm, original, permuted, qa, self.client,
                video_path=f"media/{record.video_id}_original.mp4",
                shuffled_video_path=f"media/{record.video_id}_{perm.kind}.mp4",
                model_id=self.cfg.model_id,
            )
            pairs.extend(recs)
            diagnostics.extend(diags)
        pairs.sort(key=lambda p: p.id)
        write_jsonl(self.path("dpo_explicit.jsonl"), (p.as_dict() for p in pairs))
        write_json(
            self.path("gen_explicit_report.json"),
            {"n_pairs": len(pairs), "qa_counts": qa_counts, "diagnostics": diagnostics},
        )

    def stage_gen_implicit(self):
        records = {r.video_id: r for r in self._records()}
        pairs = []
        spec = PerturbationSpec(kind="downscale", downscale_factor=self.cfg.downscale_factor)
        for index, clip in enumerate(self._clips()):
            record = records[clip.video_id]
            frames = self._frame_paths(record.video_id)
            mode = "prompt" if index % 2 == 0 else "frame"
            kwargs = {}
            if mode == "frame":
                kwargs = {"spec": spec, "perturbed_frames": self._frame_paths(record.video_id, True)}
            pairs.extend(
                build_implicit_pairs(
                    record, frames, self.client, mode, record_index=index,
                    video_path=f"media/{record.video_id}_original.mp4",
                    model_id=self.cfg.model_id, **kwargs,
                )
            )
        pairs.sort(key=lambda p: p.id)
        write_jsonl(self.path("dpo_implicit.jsonl"), (p.as_dict() for p in pairs))

    def stage_to_kto(self):
        pairs = [preference_from_dict(r) for r in read_jsonl(self.path("dpo_explicit.jsonl"))]
        records, diagnostics = dpo_to_kto(pairs)
        sampled_n = None
        if self.cfg.kto_sample_n and self.cfg.kto_sample_n <= len(records):
            records = sample_kto(records, self.cfg.kto_sample_n, self.cfg.seed)
            sampled_n = self.cfg.kto_sample_n
        write_jsonl(self.path("kto.jsonl"), (r.as_dict() for r in records))
        write_json(
            self.path("kto_report.json"),
            {"n_records": len(records), "sampled_n": sampled_n, "diagnostics": diagnostics},
        )

    def stage_merge(self):
        parts = []
        for entry in self.cfg.mixture_parts or [
            [str(self.path("dpo_explicit.jsonl")), "all"],
            [str(self.path("dpo_implicit.jsonl")), "all"],
        ]:
            path, take = entry
            parts.append((path, None if take in ("all", None) else int(take)))
        merged = merge_mixture(parts, self.cfg.seed)
        write_jsonl(self.path("merged.jsonl"), merged)

    def stage_bench_mcqa(self):
        records = self._records()
        clips = {c.video_id for c in self._clips()}
        corpus = [r for r in records if r.video_id in clips]
        items, _ = build_mcqa_benchmark(
            corpus, self._perms(), self.client,
            max_s=self.cfg.max_s, min_scenes=self.cfg.min_scenes, model_id=self.cfg.model_id,
        )
        items.sort(key=lambda i: (i.id, i.split))
        write_jsonl(self.path("bench_mcqa.jsonl"), (i.as_dict() for i in items))

    def stage_bench_probes(self):
        records = self._records()
        selected, warning = select_probe_videos(
            records, self.cfg.probe_n, self.cfg.probe_min_captions, self.cfg.seed
        )
        statements = []
        coverage = {}
        for record in selected:
            sts, cov = build_order_probes(record, self.cfg.seed)
            statements.extend(sts)
            coverage[record.video_id] = {f"{c}/{s}": v for (c, s), v in cov.items()}
        statements.sort(key=lambda s: s.id)
        write_jsonl(self.path("probes.jsonl"), (s.as_dict() for s in statements))
        write_json(
            self.path("probe_coverage.json"),
            {
                "warning": warning,
                "n_videos": len(selected),
                "coverage": coverage,
                "time_bin_warnings": time_bin_warnings(statements),
            },
        )

    def _bench_items(self):
        rows = read_jsonl(self.path("bench_mcqa.jsonl"))
        return [
            BenchmarkItem(
                id=r["id"], video_path=r["video_path"], split=r["split"], question=r["question"],
                options=tuple(r["options"]), answer_index=r["answer_index"], perm_ref=r.get("perm_ref"),
            )
            for r in rows
        ]

    def stage_score_mcqa(self):
        items = self._bench_items()
        # Hermetic prediction driver: a deterministic uniform guesser.
        predictions = [
            {"item_id": it.id, "response": "ABCDE"[_hash_mod(len(it.options), it.id, "mcqa-guess")]}
            for it in items
        ]
        write_jsonl(self.path("predictions_mcqa.jsonl"), predictions)
        result = score_mcqa(items, predictions)
        write_json(self.path("score_mcqa.json"), result.as_dict())
        report.mcqa_score_figure(result.as_dict(), self.path("score_mcqa.png"))

    def stage_score_group(self):
        rows = read_jsonl(self.path("dpo_explicit.jsonl"))
        truth = {r["id"]: (0, 0, 0, 0) for r in rows}
        quads = [
            QuadruplePrediction(
                quad_id=r["id"],
                t1=_hash_bit(r["id"], "t1"),
                t2=_hash_bit(r["id"], "t2"),
                v1=_hash_bit(r["id"], "v1"),
                v2=_hash_bit(r["id"], "v2"),
            )
            for r in rows
        ]
        write_jsonl(
            self.path("predictions_group.jsonl"),
            (
                {"quad_id": q.quad_id, "t1": q.t1, "t2": q.t2, "v1": q.v1, "v2": q.v2}
                for q in quads
            ),
        )
        write_json(self.path("score_group.json"), score_group(quads, truth))

    def _order_statements(self):
        rows = read_jsonl(self.path("probes.jsonl"))
        return [
            OrderStatement(
                id=r["id"], video_path=r["video_path"], pair_id=r["pair_id"], category=r["category"],
                subtype=r["subtype"], statement=r["statement"], label=r["label"],
                hop_distance=r["hop_distance"], time_separation_s=r["time_separation_s"],
            )
            for r in rows
        ]

    def stage_grade_probes(self):
        statements = self._order_statements()
        predictions = [
            {"item_id": st.id, "response": ("Yes" if _hash_bit(st.id, "probe-guess") else "No")}
            for st in statements
        ]
        write_jsonl(self.path("predictions_probes.jsonl"), predictions)
        grade = grade_order_probes(statements, predictions)
        sweep = strictness_sweep(statements, predictions)
        payload = {"grade": grade.as_dict(), "strictness_sweep": {str(k): v for k, v in sweep.items()}}
        write_json(self.path("grade_probes.json"), payload)
        report.probe_grades_figure(grade.as_dict(), sweep, self.path("probe_grades.png"))

    def stage_verify_loss(self):
        rng = random.Random(derive_seed(self.cfg.seed, "verify-loss"))
        batch = [
            verify.PolicyLogProbs(
                logp_w_theta=-rng.uniform(0.1, 5.0),
                logp_l_theta=-rng.uniform(0.1, 5.0),
                logp_w_ref=-rng.uniform(0.1, 5.0),
                logp_l_ref=-rng.uniform(0.1, 5.0),
                lam=rng.choice([0.1, 0.5, 1.0, 2.0]),
            )
            for _ in range(32)
        ]
        loss = verify.dpo_loss(batch)
        grads = verify.dpo_grad(batch)
        zero_margin = verify.dpo_loss([verify.PolicyLogProbs(-1.0, -1.0, -1.0, -1.0, 1.0)])
        write_json(
            self.path("verify_loss.json"),
            {
                "batch_size": len(batch),
                "loss": loss,
                "zero_margin_loss": zero_margin,
                "ln2": 0.6931471805599453,
                "grad_first_example": grads[0],
            },
        )

    def stage_stats(self):
        clips = self._clips()
        perm_counts = read_jsonl_or_json(self.path("perm_counts.json"))
        explicit = [preference_from_dict(r) for r in read_jsonl(self.path("dpo_explicit.jsonl"))]
        implicit = [preference_from_dict(r) for r in read_jsonl(self.path("dpo_implicit.jsonl"))]
        trim_report = read_jsonl_or_json(self.path("trim_report.json"))
        stats = corpus_stats(
            clips,
            qa_counts={"explicit": len(explicit), "implicit": len(implicit)},
            perm_kinds=None,
            excluded=len(trim_report.get("excluded_too_few_scenes", [])),
        )
        stats.shuffled = perm_counts.get("shuffled", 0)
        stats.reversed = perm_counts.get("reversed", 0)
        payload = stats.as_dict()
        write_json(self.path("stats.json"), payload)
        self.path("stats.txt").write_text(report.stats_table(payload), "utf-8")
        report.stats_figure(payload, self.path("stats.png"))
        diff = difficulty_probe(explicit + implicit)
        write_json(self.path("difficulty.json"), diff.as_dict())
        report.difficulty_figure(diff.as_dict(), self.path("difficulty.png"))
        sft = export_sft(explicit)
        write_jsonl(self.path("sft.jsonl"), (s.as_dict() for s in sft))


def read_jsonl_or_json(path):
    import json

    return json.loads(Path(path).read_text("utf-8"))
