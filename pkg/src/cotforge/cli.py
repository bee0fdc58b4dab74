"""``cotforge`` command line."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as P
from .builder import (
    BuildReport,
    augment_with_assistant,
    build_full,
    run_stage1,
    run_stage2,
    teacher_union,
    write_quarantine,
)
from .core import CotforgeError, load_corpus, load_dataset, save_corpus, save_dataset
from .gateway import TRANSPORTS, EndpointConfig, Gateway, make_transport
from .mock import SimulatedEndpoint
from .parsing import ArcPolicy
from .prompts import load_templates

def _common(top: bool) -> argparse.ArgumentParser:
    # Subcommand copies use SUPPRESS so they do not clobber flags given before the subcommand.
    d = {} if top else {"default": argparse.SUPPRESS}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="pipeline configuration (JSON)", **d)
    p.add_argument("--out", help="output directory (or file, for build/evaluate without --config)", **d)
    p.add_argument("--transport", choices=TRANSPORTS, help="override the configured transport", **d)
    p.add_argument("--stages", help="comma-separated stages to run (run command)", **d)
    p.add_argument("--seed", type=int, help="override the training seed", **d)
    p.add_argument("-v", "--verbose", action="store_true", **d)
    return p


def _endpoint_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--endpoint", help="base URL of an OpenAI-compatible endpoint")
    p.add_argument("--model", help="model name")
    p.add_argument("--cache-dir", help="request/response cache (required for replay)")
    p.add_argument("--max-in-flight", type=int, default=4)


def build_parser() -> argparse.ArgumentParser:
    common = _common(top=False)
    parser = argparse.ArgumentParser(prog="cotforge", description="Reasoning-chain synthesis and distillation pipeline.",
                                     parents=[_common(top=True)])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run the configured pipeline (all stages unless --stages)")

    p = sub.add_parser("init-fixture", parents=[common], help="write a small mock-mode corpus and config")
    p.add_argument("--n", type=int, default=20)

    p = sub.add_parser("synthesize", parents=[common], help="teacher reasoning synthesis")
    p.add_argument("--corpus", help="JSONL corpus (stage 2: the mispredicted samples)")
    p.add_argument("--stage", choices=("1", "2", "both"), default="both")
    p.add_argument("--fine-grained", action="store_true")
    p.add_argument("--max-attempts", type=int, default=3)
    p.add_argument("--quarantine-path")
    _endpoint_flags(p)

    p = sub.add_parser("augment", parents=[common], help="assistant augmentation on the train split")
    p.add_argument("--corpus")
    p.add_argument("--fine-grained", action="store_true")
    p.add_argument("--max-attempts", type=int, default=3)
    _endpoint_flags(p)

    p = sub.add_parser("build", parents=[common], help="merge teacher and assistant datasets")
    p.add_argument("--teacher")
    p.add_argument("--assistant")

    sub.add_parser("train", parents=[common], help="train the assistant model")
    sub.add_parser("distill", parents=[common], help="train the student with soft labels")

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against gold")
    p.add_argument("--pred")
    p.add_argument("--gold")
    p.add_argument("--metrics", default="cls,gen")
    _endpoint_flags(p)

    p = sub.add_parser("report", parents=[common], help="consolidate artifacts into tables")
    p.add_argument("--run-dir", help="a digest directory (when not using --config)")

    sub.add_parser("ablate", parents=[common], help="student variants without soft labels / augmentation")
    return parser


# ------------------------------------------------------------------ helpers


def _need(args, *names) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_")) in (None, "")]
    if missing:
        raise CotforgeError(f"{args.command} without --config needs " + ", ".join(f"--{n}" for n in missing))


def _gateway(args, default_model: str) -> Gateway:
    kw = {"model_name": args.model or default_model, "max_in_flight": args.max_in_flight}
    if args.endpoint:
        kw["base_url"] = args.endpoint
    cfg = EndpointConfig(**kw)
    kind = args.transport or "mock"
    responder = SimulatedEndpoint(salt=cfg.model_name) if kind == "mock" else None
    return Gateway(cfg, make_transport(kind, cfg, responder), args.cache_dir)


def _pipeline(args) -> P.Pipeline:
    if not args.config:
        raise CotforgeError(f"{args.command} needs --config")
    cfg = P.PipelineConfig.load(args.config)
    return P.Pipeline(cfg, args.out or "out", transport=args.transport, seed=args.seed)


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ----------------------------------------------------------------- commands


def cmd_run(args) -> int:
    stages = tuple(s.strip() for s in args.stages.split(",")) if args.stages else P.STAGES
    summary = _pipeline(args).run(stages)
    if "text" in summary:
        print(summary["text"], end="")
    return 0


def cmd_init_fixture(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(P.make_fixture(args.n, args.seed or 0), out / "corpus.jsonl")
    (out / "config.json").write_text(json.dumps(P.fixture_config("corpus.jsonl"), indent=2) + "\n")
    print(out / "config.json")
    return 0


def cmd_synthesize(args) -> int:
    if args.config:
        return _stage(args, "synthesize")
    _need(args, "corpus", "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(args.corpus, args.fine_grained)
    gw = _gateway(args, "gpt-4o-mini")
    tpl = load_templates(fine_grained=args.fine_grained)
    policy = ArcPolicy(max_attempts=args.max_attempts)
    quarantine = Path(args.quarantine_path) if args.quarantine_path else out / "quarantine.jsonl"
    rep = BuildReport(corpus=Path(args.corpus).stem)
    if args.stage == "2":
        s2 = run_stage2(corpus.samples, gw, tpl, policy, out / "stage2.ckpt.jsonl")
        save_dataset(s2.dataset, out / "teacher_stage2.jsonl", policy.max_attempts)
        write_quarantine(s2.failures, quarantine)
        _print({"teacher_stage2": len(s2.dataset), "quarantined": len(s2.failures), "calls": gw.stats.calls})
        return 0
    train = corpus.split("train")
    s1 = run_stage1(train, gw, tpl, policy, out / "stage1.ckpt.jsonl")
    save_dataset(s1.dataset, out / "teacher_stage1.jsonl", policy.max_attempts)
    save_corpus(s1.rejected, out / "mispredicted.jsonl")
    if args.stage == "1":
        _print({"teacher_stage1": len(s1.dataset), "mispredicted": len(s1.rejected), "calls": gw.stats.calls})
        return 0
    s2 = run_stage2(s1.rejected, gw, tpl, policy, out / "stage2.ckpt.jsonl")
    save_dataset(s2.dataset, out / "teacher_stage2.jsonl", policy.max_attempts)
    full = teacher_union(s1.dataset, s2.dataset)
    save_dataset(full, out / "teacher_full.jsonl", policy.max_attempts)
    write_quarantine(s2.failures, quarantine)
    rep.n, rep.n_t1, rep.n_t2 = len(train), len(s1.dataset), len(s2.dataset)
    rep.quarantined_stage1 = len(s1.failures)
    rep.quarantined_stage2 = rep.quarantine_count = len(s2.failures)
    rep.n_teacher = len(full)
    rep.calls = gw.stats.calls
    rep.check()
    (out / "build_report.json").write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    print(rep.table(), end="")
    return 0


def cmd_augment(args) -> int:
    if args.config:
        return _stage(args, "augment")
    _need(args, "corpus", "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(args.corpus, args.fine_grained)
    gw = _gateway(args, "qwen2.5-vl-7b")
    policy = ArcPolicy(max_attempts=args.max_attempts)
    res = augment_with_assistant(corpus.split("train"), gw, load_templates(fine_grained=args.fine_grained), policy,
                                 out / "augment.ckpt.jsonl")
    save_dataset(res.dataset, out / "assistant_aug.jsonl", policy.max_attempts)
    _print({"assistant_aug": len(res.dataset), "assistant_accuracy": res.accuracy, "calls": gw.stats.calls})
    return 0


def cmd_build(args) -> int:
    if args.config:
        return _stage(args, "build")
    _need(args, "teacher", "assistant", "out")
    full = build_full(load_dataset(args.teacher), load_dataset(args.assistant))
    save_dataset(full, args.out)
    _print({"full": len(full)})
    return 0


def cmd_evaluate(args) -> int:
    if args.config:
        return _stage(args, "evaluate")
    _need(args, "pred", "gold")
    which = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    bad = set(which) - {"cls", "gen"}
    if bad:
        raise CotforgeError(f"unknown metric groups: {sorted(bad)}")
    embed = _gateway(args, "gpt-4o-mini").embed if (args.transport or args.endpoint) else None
    rep = P.evaluate_files(args.pred, args.gold, which, embed=embed)
    if args.out:
        Path(args.out).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    _print(rep["headline"])
    return 0


def cmd_report(args) -> int:
    if args.config:
        return _stage(args, "report")
    _need(args, "run-dir")
    summary = P.build_summary(Path(args.run_dir))
    print(summary["text"], end="")
    return 0


def _stage(args, stage: str) -> int:
    summary = _pipeline(args).run((stage,))
    if stage == "report":
        print(summary["text"], end="")
    return 0


HANDLERS = {
    "run": cmd_run,
    "init-fixture": cmd_init_fixture,
    "synthesize": cmd_synthesize,
    "augment": cmd_augment,
    "build": cmd_build,
    "train": lambda a: _stage(a, "train"),
    "distill": lambda a: _stage(a, "distill"),
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "ablate": lambda a: _stage(a, "ablate"),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except P.DependencyError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (CotforgeError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
