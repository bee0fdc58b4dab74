"""Stage orchestration: synthesize -> augment -> build -> train -> distill -> evaluate -> report.

All artifacts of one configuration live under ``<out>/<digest>/`` where
``digest`` is computed from the configuration minus transport settings, so a
replay run lands in the same directory as the recording run.  The replay
cache is shared across digests at ``<out>/cache`` unless configured.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .builder import (
    BuildReport,
    Checkpoint,
    run_arc,
    augment_with_assistant,
    build_full,
    format_table,
    run_stage1,
    run_stage2,
    teacher_union,
    write_quarantine,
)
from .core import (
    Corpus,
    CotforgeError,
    check_corpus,
    ReasoningDataset,
    SentimentLabel,
    Split,
    load_corpus,
    load_dataset,
    save_dataset,
)
from .distill.losses import LossWeights
from .distill.model import ToyModel
from .distill.train import ASSISTANT, DESK_CONFIG, STUDENT, TrainConfig, config_dict, train
from .distill.vocab import EOS, Vocab, dataset_texts, encode_dataset, encode_example, prompt_ids
from .gateway import MOCK, TRANSPORTS, EndpointConfig, Gateway, make_transport
from .mock import SimulatedEndpoint
from .parsing import ArcFailure, ArcPolicy
from .prompts import EXPLAIN, load_templates

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STAGES = ("synthesize", "augment", "build", "train", "distill", "evaluate", "report")



class DependencyError(CotforgeError):
    def __init__(self, stage: str, missing: Path | str):
        self.stage = stage
        self.missing = str(missing)
        super().__init__(f"stage {stage!r} needs {self.missing}, which does not exist; run the producing stage first")


class NothingToReportError(CotforgeError):
    pass


# ------------------------------------------------------------------- config


@dataclass
class PipelineConfig:
    corpus_paths: list
    fine_grained: bool = False
    corpus_name: str = "corpus"
    teacher: EndpointConfig = field(default_factory=EndpointConfig)
    assistant: EndpointConfig = field(default_factory=lambda: EndpointConfig(model_name="qwen2.5-vl-7b"))
    templates_dir: str | None = None
    arc: ArcPolicy = field(default_factory=ArcPolicy)
    weights: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    assistant_dim: int = 16
    student_dim: int = 12
    max_prompt: int = 32
    max_chain: int = 48
    max_new_tokens: int = 48
    mock: dict = field(default_factory=dict)
    transport: str = MOCK
    cache_dir: str | None = None
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        d = copy.deepcopy(d)
        version = d.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise CotforgeError(f"unsupported config schema_version {version!r}; expected {SCHEMA_VERSION}")
        corpus = d.pop("corpus")
        paths = corpus.get("paths") or [corpus["path"]]
        # A mapping {split: path} pins every record in that file to the split.
        paths = {k: paths[k] for k in sorted(paths)} if isinstance(paths, dict) else list(paths)
        model = d.pop("model", {})
        cfg = cls(
            corpus_paths=paths,
            fine_grained=bool(corpus.get("fine_grained", False)),
            corpus_name=corpus.get("name", "corpus"),
            teacher=EndpointConfig.from_dict(d.pop("teacher", {})),
            assistant=EndpointConfig.from_dict(d.pop("assistant", {"model_name": "qwen2.5-vl-7b"})),
            templates_dir=d.pop("templates", None),
            arc=ArcPolicy(**d.pop("arc", {})),
            weights=LossWeights(**d.pop("weights", {})),
            train=TrainConfig(**d.pop("train", {})),
            mock=d.pop("mock", {}),
            transport=d.pop("transport", MOCK),
            cache_dir=d.pop("cache_dir", None),
            base_dir=str(base_dir),
            **{k: model[k] for k in ("assistant_dim", "student_dim", "max_prompt", "max_chain", "max_new_tokens")
               if k in model},
        )
        if d:
            raise CotforgeError(f"unknown config keys: {sorted(d)}")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "corpus": {"paths": self.corpus_paths, "fine_grained": self.fine_grained, "name": self.corpus_name},
            "teacher": asdict(self.teacher),
            "assistant": asdict(self.assistant),
            "templates": self.templates_dir,
            "arc": asdict(self.arc),
            "weights": asdict(self.weights),
            "train": asdict(self.train),
            "model": {"assistant_dim": self.assistant_dim, "student_dim": self.student_dim,
                      "max_prompt": self.max_prompt, "max_chain": self.max_chain,
                      "max_new_tokens": self.max_new_tokens},
            "mock": self.mock,
            "transport": self.transport,
            "cache_dir": self.cache_dir,
        }

    def resolve(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> None:
        if self.transport not in TRANSPORTS:
            raise CotforgeError(f"transport must be one of {TRANSPORTS}")
        if isinstance(self.corpus_paths, dict):
            bad = set(self.corpus_paths) - {s.value for s in Split}
            if bad:
                raise CotforgeError(f"unknown corpus splits: {sorted(bad)}")
        for p in self._paths():
            if not self.resolve(p).exists():
                raise CotforgeError(f"corpus file not found: {self.resolve(p)}")
        if self.templates_dir is not None and not self.resolve(self.templates_dir).is_dir():
            raise CotforgeError(f"template directory not found: {self.resolve(self.templates_dir)}")

    def _paths(self) -> list:
        return list(self.corpus_paths.values()) if isinstance(self.corpus_paths, dict) else list(self.corpus_paths)

    def digest(self) -> str:
        d = self.to_dict()
        for k in ("transport", "cache_dir"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


# --------------------------------------------------------------- run context


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _write_jsonl(path: Path, rows, digest: str, kind: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    _write_json(path.with_name(path.name + ".meta.json"), {"kind": kind, "config_digest": digest, "count": len(rows)})


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class Pipeline:
    def __init__(self, cfg: PipelineConfig, out: str | Path, transport: str | None = None, seed: int | None = None):
        if seed is not None:
            cfg = copy.deepcopy(cfg)
            cfg.train = TrainConfig(**{**asdict(cfg.train), "seed": seed})
        if transport is not None:
            cfg = copy.deepcopy(cfg)
            cfg.transport = transport
        cfg.validate()
        self.cfg = cfg
        self.root = Path(out)
        self.digest = cfg.digest()
        self.dir = self.root / self.digest
        self.cache_dir = Path(cfg.cache_dir) if cfg.cache_dir else self.root / "cache"
        self.timing: dict[str, float] = {}
        self._corpus = None
        self._gateways: dict[str, Gateway] = {}

    # -- shared resources

    @property
    def corpus(self):
        if self._corpus is None:
            samples = []
            paths = self.cfg.corpus_paths
            pairs = paths.items() if isinstance(paths, dict) else [(None, p) for p in paths]
            for split, p in pairs:
                part = load_corpus(self.cfg.resolve(p), self.cfg.fine_grained).samples
                wrong = [s.id for s in part if split is not None and s.split.value != split]
                if wrong:
                    raise CotforgeError(f"{p}: records {wrong[:5]} are not in split {split!r}")
                samples.extend(part)
            self._corpus = Corpus(check_corpus(samples, self.cfg.fine_grained), self.cfg.fine_grained)
        return self._corpus

    @property
    def templates(self):
        d = self.cfg.resolve(self.cfg.templates_dir) if self.cfg.templates_dir else None
        return load_templates(d, self.cfg.fine_grained)

    def gateway(self, which: str) -> Gateway:
        if which not in self._gateways:
            ep = self.cfg.teacher if which == "teacher" else self.cfg.assistant
            responder = None
            if self.cfg.transport == MOCK:
                opts = dict(self.cfg.mock.get(which, {}))
                opts.setdefault("salt", which)
                responder = SimulatedEndpoint(**opts)
            self._gateways[which] = Gateway(ep, make_transport(self.cfg.transport, ep, responder), self.cache_dir)
        return self._gateways[which]

    def path(self, *parts) -> Path:
        return self.dir.joinpath(*parts)

    def require(self, stage: str, *paths: Path) -> None:
        for p in paths:
            if not p.exists():
                raise DependencyError(stage, p)

    def _dataset_path(self, role: str) -> Path:
        return self.path("datasets", f"{role}.jsonl")

    def _save(self, ds: ReasoningDataset) -> None:
        ds = ds.with_role(ds.role, config_digest=self.digest)
        self._dataset_path(ds.role.value).parent.mkdir(parents=True, exist_ok=True)
        save_dataset(ds, self._dataset_path(ds.role.value), self.cfg.arc.max_attempts)

    def _stamp(self, path: Path, kind: str) -> None:
        """Sidecar carrying the config digest for files whose own format has no room for it."""
        _write_json(path.with_name(path.name + ".meta.json"), {"kind": kind, "config_digest": self.digest})

    def _load_report(self) -> BuildReport:
        p = self.path("build_report.json")
        if p.exists():
            d = json.loads(p.read_text(encoding="utf-8"))
            d.pop("config_digest", None)
            return BuildReport(**d)
        return BuildReport(corpus=self.cfg.corpus_name)

    def _save_report(self, rep: BuildReport) -> None:
        _write_json(self.path("build_report.json"), {**rep.to_dict(), "config_digest": self.digest})
        self.path("build_report.txt").write_text(rep.table() + f"config {self.digest}\n", encoding="utf-8")

    # -- stages

    def synthesize(self) -> BuildReport:
        train_samples = self.corpus.split(Split.TRAIN)
        gw = self.gateway("teacher")
        tpl = self.templates
        ck = self.path("checkpoints")
        ck.mkdir(parents=True, exist_ok=True)
        calls0 = gw.stats.calls
        s1 = run_stage1(train_samples, gw, tpl, self.cfg.arc, ck / "stage1.jsonl")
        s2 = run_stage2(s1.rejected, gw, tpl, self.cfg.arc, ck / "stage2.jsonl")
        teacher = teacher_union(s1.dataset, s2.dataset)
        for ds in (s1.dataset, s2.dataset, teacher):
            self._save(ds)
        refs = self._references(gw, tpl, ck)
        write_quarantine(s2.failures, self.path("quarantine.jsonl"))
        write_quarantine([f for f in refs if isinstance(f, ArcFailure)], self.path("references.quarantine.jsonl"))
        for name in ("quarantine.jsonl", "references.quarantine.jsonl"):
            self._stamp(self.path(name), "quarantine")
        for f in sorted(ck.glob("*.jsonl")):
            self._stamp(f, "checkpoint")
        rep = self._load_report()
        rep.corpus = self.cfg.corpus_name
        rep.n = len(train_samples)
        rep.n_t1, rep.n_t2 = len(s1.dataset), len(s2.dataset)
        rep.quarantined_stage1 = len(s1.failures)
        rep.quarantined_stage2 = rep.quarantine_count = len(s2.failures)
        rep.stage2_label_mismatches = s2.dataset.provenance.get("label_mismatches", 0)
        rep.n_teacher = len(teacher)
        rep.calls += gw.stats.calls - calls0
        rep.check()
        self._save_report(rep)
        return rep

    def _references(self, gw, tpl, ck):
        """Label-conditioned teacher reasoning for dev/test samples (evaluation references only)."""
        samples = sorted(self.corpus.split(Split.DEV) + self.corpus.split(Split.TEST), key=lambda s: s.id)
        results = run_arc(samples, EXPLAIN, gw, tpl, self.cfg.arc, None, Checkpoint(ck / "references.jsonl", "refs"))
        rows = [
            {"id": s.id, "split": s.split.value, "gold_label": s.gold_label.value, "reference": r.chain.as_text()}
            for s, r in results if not isinstance(r, ArcFailure)
        ]
        _write_jsonl(self.path("references.jsonl"), rows, self.digest, "references")
        return [r for _, r in results]

    def augment(self) -> BuildReport:
        gw = self.gateway("assistant")
        ck = self.path("checkpoints")
        ck.mkdir(parents=True, exist_ok=True)
        calls0 = gw.stats.calls
        res = augment_with_assistant(self.corpus.split(Split.TRAIN), gw, self.templates, self.cfg.arc,
                                     ck / "augment.jsonl")
        self._stamp(ck / "augment.jsonl", "checkpoint")
        self._save(res.dataset)
        rep = self._load_report()
        rep.assistant_accuracy = round(res.accuracy, 6)
        rep.n_a = len(res.dataset)
        rep.calls += gw.stats.calls - calls0
        self._save_report(rep)
        return rep

    def build(self) -> BuildReport:
        tp, ap = self._dataset_path("teacher_full"), self._dataset_path("assistant_aug")
        self.require("build", tp, ap)
        full = build_full(load_dataset(tp), load_dataset(ap))
        self._save(full)
        rep = self._load_report()
        rep.n_full = len(full)
        rep.n_teacher = len(load_dataset(tp))
        rep.n_a = len(load_dataset(ap))
        rep.check()
        self._save_report(rep)
        return rep

    def _vocab(self) -> Vocab:
        vp = self.path("vocab.json")
        if vp.exists():
            return Vocab.load(vp)
        fp = self._dataset_path("full")
        self.require("train", fp)
        vocab = Vocab.build(dataset_texts(load_dataset(fp)))
        vocab.save(vp)
        self._stamp(vp, "vocab")
        return vocab

    def _eval_examples(self, vocab: Vocab, split: Split):
        rp = self.path("references.jsonl")
        if not rp.exists():
            return [], []
        by_id = {s.id: s for s in self.corpus.samples}
        rows = [r for r in _read_jsonl(rp) if r["split"] == split.value]
        samples = [by_id[r["id"]] for r in rows]
        ex = [encode_example(s, r["reference"], vocab, max_prompt=self.cfg.max_prompt, max_chain=self.cfg.max_chain)
              for s, r in zip(samples, rows)]
        return samples, ex

    def _train_model(self, name: str, role: str, ds_path: Path, dim: int, weights: LossWeights,
                     assistant: ToyModel | None = None, out_dir: Path | None = None):
        out_dir = out_dir or self.path("models")
        vocab = self._vocab()
        data = encode_dataset(load_dataset(ds_path), vocab, max_prompt=self.cfg.max_prompt,
                              max_chain=self.cfg.max_chain)
        _, val = self._eval_examples(vocab, Split.DEV)
        model_seed = self.cfg.train.seed + (0 if role == ASSISTANT else 1)
        model = ToyModel(len(vocab), dim, seed=model_seed)
        result = train(model, data, self.cfg.train, weights, role, assistant, val_data=val or None)
        out_dir.mkdir(parents=True, exist_ok=True)
        cd = config_dict(self.cfg.train, weights)
        model.save(out_dir / f"{name}.bin", {"config_digest": self.digest, "role": role,
                                             "train_config_sha256": _sha(cd)})
        _write_jsonl(out_dir / f"{name}.log.jsonl", result.log, self.digest, f"{name}_training_log")
        self._write_predictions(name, model, vocab, out_dir)
        return model

    def _write_predictions(self, name: str, model: ToyModel, vocab: Vocab, out_dir: Path) -> None:
        samples, _ = self._eval_examples(vocab, Split.TEST)
        eos = vocab.id(EOS)
        rows = []
        for s in samples:
            pid = prompt_ids(s, vocab, self.cfg.max_prompt)
            label = SentimentLabel.from_index(model.predict_class(pid, len(pid)))
            gen = model.generate(pid, self.cfg.max_new_tokens, eos)
            rows.append({"id": s.id, "label": label.value, "reasoning": vocab.decode(gen)})
        _write_jsonl(out_dir / f"{name}.predictions.jsonl", rows, self.digest, "predictions")

    def train_assistant(self) -> None:
        tp = self._dataset_path("teacher_full")
        self.require("train", tp, self._dataset_path("full"))
        self._train_model("assistant", ASSISTANT, tp, self.cfg.assistant_dim, self.cfg.weights)

    def distill(self, weights: LossWeights | None = None, dataset_role: str = "full", out_dir: Path | None = None):
        ap = self.path("models", "assistant.bin")
        dp = self._dataset_path(dataset_role)
        self.require("distill", ap, dp)
        assistant, _ = ToyModel.load(ap)
        return self._train_model("student", STUDENT, dp, self.cfg.student_dim, weights or self.cfg.weights,
                                 assistant, out_dir)

    def evaluate(self, model_dir: Path | None = None) -> dict:
        model_dir = model_dir or self.path("models")
        pred = model_dir / "student.predictions.jsonl"
        gold = self.path("references.jsonl")
        self.require("evaluate", pred, gold)
        out = {}
        for name in ("assistant", "student"):
            p = model_dir / f"{name}.predictions.jsonl"
            if p.exists():
                out[name] = evaluate_files(p, gold, ("cls", "gen"), embed=self.gateway("teacher").embed)
        _write_json(model_dir / "eval_report.json", {"config_digest": self.digest, "models": out})
        return out

    def report(self) -> dict:
        return build_summary(self.dir, self.digest)

    def ablate(self) -> dict:
        """Student variants: soft labels off, and soft labels + augmentation off."""
        variants = {
            "lambda0": (self.cfg.weights.replace(lambda_kd=0.0), "full"),
            "wo_asst": (self.cfg.weights.replace(lambda_kd=0.0), "teacher_full"),
        }
        out = {}
        for name, (w, role) in variants.items():
            vdir = self.path("ablations", f"{name}-{_sha({'w': asdict(w), 'data': role})[:12]}")
            self.distill(w, role, vdir)
            out[name] = self.evaluate(vdir)["student"]
        return out

    def run(self, stages=STAGES) -> dict:
        unknown = set(stages) - set(STAGES) - {"ablate"}
        if unknown:
            raise CotforgeError(f"unknown stages: {sorted(unknown)}")
        self.dir.mkdir(parents=True, exist_ok=True)
        _write_json(self.path("config.json"), {**self.cfg.to_dict(), "config_digest": self.digest,
                                                "transport": None, "cache_dir": None})
        actions = {
            "synthesize": self.synthesize,
            "augment": self.augment,
            "build": self.build,
            "train": self.train_assistant,
            "distill": self.distill,
            "evaluate": self.evaluate,
            "ablate": self.ablate,
            "report": self.report,
        }
        summary = None
        for stage in list(STAGES[:-1]) + ["ablate", "report"]:
            if stage not in stages:
                continue
            t0 = time.perf_counter()
            log.info("stage %s", stage)
            res = actions[stage]()
            self.timing[stage] = round(time.perf_counter() - t0, 3)
            if stage == "report":
                summary = res
        _write_json(self.path("timing.json"), {"config_digest": self.digest, "seconds": self.timing})
        return summary or {}


def _sha(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------- evaluation


def evaluate_files(pred_path, gold_path, which=("cls", "gen"), embed=None) -> dict:
    """Join predictions and gold rows by id and compute the requested metric groups."""
    preds = {r["id"]: r for r in _read_jsonl(Path(pred_path))}
    gold = {r["id"]: r for r in _read_jsonl(Path(gold_path))}
    ids = sorted(set(preds) & set(gold))
    if not ids:
        raise CotforgeError("predictions and gold share no ids")
    cls_rep = gen_rep = None
    if "cls" in which:
        cls_rep = metrics.classification_metrics([gold[i]["gold_label"] for i in ids], [preds[i]["label"] for i in ids])
    if "gen" in which:
        gids = [i for i in ids if preds[i].get("reasoning") is not None and gold[i].get("reference")]
        if gids:
            gen_rep = metrics.generation_metrics([preds[i]["reasoning"] for i in gids],
                                                 [gold[i]["reference"] for i in gids], embed=embed, ids=gids)
    return {
        "headline": metrics.headline(cls_rep, gen_rep),
        "classification": cls_rep.to_dict() if cls_rep else None,
        "generation": gen_rep.to_dict() if gen_rep else None,
        "n": len(ids),
    }


def _cell(v) -> str:
    return "n/a" if v is None else (f"{v:.1f}" if isinstance(v, float) else str(v))


def build_summary(run_dir: Path, digest: str | None = None) -> dict:
    """Consolidate whatever artifacts exist into report.json and report.txt."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir() or not any(p.name != "config.json" for p in run_dir.iterdir()):
        raise NothingToReportError(f"nothing to report in {run_dir}")
    counts = None
    bp = run_dir / "build_report.json"
    if bp.exists():
        counts = json.loads(bp.read_text(encoding="utf-8"))
    model_rows = {}
    ep = run_dir / "models" / "eval_report.json"
    if ep.exists():
        for name, rep in json.loads(ep.read_text(encoding="utf-8"))["models"].items():
            model_rows[name] = rep["headline"]
    abl = run_dir / "ablations"
    if abl.is_dir():
        for vdir in sorted(abl.iterdir()):
            f = vdir / "eval_report.json"
            if f.exists():
                model_rows[f"student ({vdir.name.split('-')[0]})"] = json.loads(f.read_text(encoding="utf-8"))["models"]["student"]["headline"]
    if counts is None and not model_rows:
        raise NothingToReportError(f"nothing to report in {run_dir}")

    summary = {"config_digest": digest or run_dir.name, "counts": counts, "models": model_rows}
    text = []
    c = counts or {}
    text.append("Dataset statistics\n")
    text.append(format_table(
        ["Dataset", "Train", "Stage-1", "Stage-2", "Quarantine", "Teacher", "Asst acc", "Asst kept", "Train+"],
        [[c.get("corpus") or "-", _cell(c.get("n")), _cell(c.get("n_t1")), _cell(c.get("n_t2")),
          _cell(c.get("quarantined_stage2")), _cell(c.get("n_teacher")),
          _cell(None if c.get("assistant_accuracy") is None else 100 * c["assistant_accuracy"]),
          _cell(c.get("n_a")), _cell(c.get("n_full") or None)]]))
    names = sorted(model_rows) or ["-"]
    text.append("\nClassification\n")
    text.append(format_table(["Model", "Acc", "w-F1", "m-F1"],
                             [[n] + [_cell(model_rows.get(n, {}).get(k)) for k in ("Acc", "w-F1", "m-F1")]
                              for n in names]))
    gen_cols = ["Sim", "Meteor", "Bleu", "Rouge-L", "Dist-1", "Dist-2"]
    text.append("\nGenerated reasoning\n")
    text.append(format_table(["Model"] + gen_cols,
                             [[n] + [_cell(model_rows.get(n, {}).get(k)) for k in gen_cols] for n in names]))
    text.append(f"\nconfig {summary['config_digest']}\n")
    _write_json(run_dir / "report.json", summary)
    (run_dir / "report.txt").write_text("".join(text), encoding="utf-8")
    summary["text"] = "".join(text)
    return summary


# ---------------------------------------------------------------- fixtures


FIXTURE_WORDS = {
    "positive": ["great", "love", "happy", "win", "beautiful", "proud", "fun"],
    "negative": ["sad", "terrible", "lost", "crash", "angry", "broken", "pain"],
    "neutral": ["meeting", "schedule", "report", "weather", "bus", "office", "update"],
}
FILLER = ["today", "the", "city", "game", "photo", "team", "news", "morning", "street", "family"]


def make_fixture(n: int = 20, seed: int = 0, fine_grained: bool = False, split_sizes=(12, 4, 4)):
    """Small deterministic corpus whose lexicon cues mostly agree with the gold label."""
    from .core import Sample

    rng = np.random.default_rng(seed)
    splits = ["train"] * split_sizes[0] + ["dev"] * split_sizes[1] + ["test"] * split_sizes[2]
    splits = (splits + ["train"] * n)[:n]
    labels = ["negative", "neutral", "positive"]
    out = []
    for i in range(n):
        gold = labels[i % 3]
        cue = list(rng.choice(FIXTURE_WORDS[gold], 2, replace=False))
        if rng.random() < 0.2:  # conflicting cue: harder sample
            other = labels[(i + 1) % 3]
            cue[1] = str(rng.choice(FIXTURE_WORDS[other]))
        words = [str(w) for w in rng.choice(FILLER, 4)] + [str(c) for c in cue]
        rng.shuffle(words)
        out.append(Sample(
            id=f"s{i:03d}",
            text=" ".join(words),
            gold_label=gold,
            split=splits[i],
            image_ref=f"images/s{i:03d}.jpg",
            aspect=str(words[0]) if fine_grained else None,
        ))
    return out


def fixture_config(corpus_path: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "corpus": {"paths": [corpus_path], "fine_grained": False, "name": "fixture"},
        "teacher": {"model_name": "gpt-4o-mini", "max_in_flight": 4},
        "assistant": {"model_name": "qwen2.5-vl-7b", "max_in_flight": 4},
        "arc": {"max_attempts": 3},
        "weights": {"lambda_cls": 0.2, "lambda_rea": 0.8, "lambda_kd": 0.3, "tau": 2.0},
        "train": {**asdict(DESK_CONFIG), "grad_accumulation": 2, "max_epochs": 30},
        "model": {"assistant_dim": 16, "student_dim": 12, "max_prompt": 32, "max_chain": 48, "max_new_tokens": 40},
        "mock": {"teacher": {"flip_rate": 0.25, "defect_rate": 0.15},
                 "assistant": {"flip_rate": 0.3, "defect_rate": 0.1}},
        "transport": "mock",
    }
