import json
import subprocess
import sys

import pytest

from cotforge import cli
from cotforge import pipeline as P
from cotforge.core import save_corpus
from cotforge.gateway import CacheMissError


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixture")
    save_corpus(P.make_fixture(20, 0), d / "corpus.jsonl")
    (d / "config.json").write_text(json.dumps(P.fixture_config("corpus.jsonl")))
    return d


def load(fixture_dir, **over):
    cfg = P.PipelineConfig.load(fixture_dir / "config.json")
    for k, v in over.items():
        setattr(cfg, k, v)
    return cfg


def snapshot(run_dir):
    return {str(p.relative_to(run_dir)): p.read_bytes() for p in sorted(run_dir.rglob("*"))
            if p.is_file() and p.name != "timing.json"}


@pytest.fixture(scope="module")
def mock_run(fixture_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("mock")
    pl = P.Pipeline(load(fixture_dir), out)
    summary = pl.run(P.STAGES + ("ablate",))
    return pl, summary


def test_full_run_produces_all_tables(mock_run):
    pl, summary = mock_run
    text = (pl.dir / "report.txt").read_text()
    for title in ("Dataset statistics", "Classification", "Generated reasoning"):
        assert title in text
    assert set(summary["models"]) == {"assistant", "student", "student (lambda0)", "student (wo_asst)"}
    c = summary["counts"]
    assert c["n"] == 12 and c["n_t1"] + c["n_t2"] + c["quarantined_stage2"] == 12
    assert c["n_full"] == c["n_teacher"] + c["n_a"]


def _embedded_digest(path):
    from cotforge.distill.model import ToyModel

    if path.suffix == ".bin":
        return ToyModel.load(path)[1]["config_digest"]
    if path.suffix == ".json":
        d = json.loads(path.read_text())
        return d.get("config_digest") or d.get("provenance", {}).get("config_digest")
    if path.suffix == ".txt":
        return path.read_text().rstrip().rsplit(" ", 1)[-1]
    return None


def test_every_artifact_carries_the_digest(mock_run):
    pl, _ = mock_run
    files = [p for p in pl.dir.rglob("*") if p.is_file()]
    assert len(files) > 20
    for p in files:
        sidecar = p.with_name(p.name + ".meta.json")
        digest = _embedded_digest(p) if p.suffix in (".json", ".bin", ".txt") else None
        if digest is None and sidecar.exists():
            digest = _embedded_digest(sidecar)
        assert digest == pl.digest, p


def test_corpus_paths_per_split(fixture_dir, tmp_path):
    from cotforge.core import load_corpus

    samples = load_corpus(fixture_dir / "corpus.jsonl").samples
    paths = {}
    for split in ("train", "dev", "test"):
        save_corpus([s for s in samples if s.split.value == split], tmp_path / f"{split}.jsonl")
        paths[split] = f"{split}.jsonl"
    raw = json.loads((fixture_dir / "config.json").read_text())
    raw["corpus"] = {"paths": paths, "name": "fixture"}
    cfg = P.PipelineConfig.from_dict(raw, tmp_path)
    assert len(P.Pipeline(cfg, tmp_path / "out").corpus.samples) == len(samples)
    raw["corpus"]["paths"] = {"train": "train.jsonl", "dev": "test.jsonl"}
    cfg = P.PipelineConfig.from_dict(raw, tmp_path)
    with pytest.raises(P.CotforgeError, match="not in split 'dev'"):
        P.Pipeline(cfg, tmp_path / "out").corpus


def test_rerun_is_idempotent(mock_run):
    pl, _ = mock_run
    before = snapshot(pl.dir)
    P.Pipeline(pl.cfg, pl.root).run(P.STAGES + ("ablate",))
    assert snapshot(pl.dir) == before


def test_replay_reproduces_mock_run(mock_run, tmp_path):
    pl, _ = mock_run
    cfg = load_cfg = pl.cfg
    a = P.Pipeline(cfg, tmp_path / "a", transport="replay")
    a.cache_dir = pl.cache_dir
    a.run(P.STAGES)
    b = P.Pipeline(cfg, tmp_path / "b", transport="replay")
    b.cache_dir = pl.cache_dir
    b.run(P.STAGES)
    assert a.digest == pl.digest == load_cfg.digest()
    sa, sb = snapshot(a.dir), snapshot(b.dir)
    assert sa == sb
    orig = {k: v for k, v in snapshot(pl.dir).items() if not k.startswith("ablations")}
    assert {k: v for k, v in sa.items() if k != "report.json" and k != "report.txt"} == \
        {k: v for k, v in orig.items() if k not in ("report.json", "report.txt")}


def test_replay_without_cache_fails(fixture_dir, tmp_path):
    pl = P.Pipeline(load(fixture_dir), tmp_path, transport="replay")
    with pytest.raises(CacheMissError):
        pl.run(("synthesize",))


def test_missing_dependency_names_artifact(fixture_dir, tmp_path):
    pl = P.Pipeline(load(fixture_dir), tmp_path)
    with pytest.raises(P.DependencyError) as exc:
        pl.run(("evaluate",))
    assert "student.predictions.jsonl" in str(exc.value)
    with pytest.raises(P.DependencyError):
        pl.run(("build",))


def test_report_on_empty_directory(tmp_path):
    with pytest.raises(P.NothingToReportError):
        P.build_summary(tmp_path)


def test_digest_ignores_transport_but_not_weights(fixture_dir):
    base = load(fixture_dir)
    assert load(fixture_dir, transport="replay").digest() == base.digest()
    assert load(fixture_dir, weights=base.weights.replace(lambda_kd=0.0)).digest() != base.digest()


def test_config_schema_is_checked(fixture_dir):
    d = json.loads((fixture_dir / "config.json").read_text())
    with pytest.raises(Exception):
        P.PipelineConfig.from_dict({**d, "schema_version": 99}, fixture_dir)
    with pytest.raises(Exception):
        P.PipelineConfig.from_dict({**d, "surprise": 1}, fixture_dir)


def test_fixture_is_deterministic():
    assert P.make_fixture(20, 3) == P.make_fixture(20, 3)
    assert {s.split.value for s in P.make_fixture(20, 0)} == {"train", "dev", "test"}


# ---------------------------------------------------------------- CLI


def test_cli_lists_all_commands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("synthesize", "augment", "build", "train", "distill", "evaluate", "report", "ablate"):
        assert cmd in out


def test_cli_end_to_end(tmp_path, capsys):
    assert cli.main(["--out", str(tmp_path), "init-fixture"]) == 0
    cfg = str(tmp_path / "config.json")
    out = str(tmp_path / "runs")
    assert cli.main(["run", "--config", cfg, "--out", out, "--stages", "synthesize,augment,build"]) == 0
    assert cli.main(["evaluate", "--config", cfg, "--out", out]) == 3
    assert "student.predictions.jsonl" in capsys.readouterr().err
    for stage in ("train", "distill", "evaluate", "report"):
        assert cli.main([stage, "--config", cfg, "--out", out]) == 0
    assert "Generated reasoning" in capsys.readouterr().out


def test_cli_standalone_commands(tmp_path, capsys):
    save_corpus(P.make_fixture(20, 1), tmp_path / "c.jsonl")
    assert cli.main(["synthesize", "--corpus", str(tmp_path / "c.jsonl"), "--stage", "1",
                     "--out", str(tmp_path / "s1")]) == 0
    assert cli.main(["synthesize", "--corpus", str(tmp_path / "s1" / "mispredicted.jsonl"), "--stage", "2",
                     "--out", str(tmp_path / "s2"), "--quarantine-path", str(tmp_path / "q.jsonl")]) == 0
    assert (tmp_path / "q.jsonl").exists()
    assert cli.main(["synthesize", "--corpus", str(tmp_path / "c.jsonl"), "--out", str(tmp_path / "both"),
                     "--transport", "mock", "--cache-dir", str(tmp_path / "cache")]) == 0
    assert cli.main(["augment", "--corpus", str(tmp_path / "c.jsonl"), "--out", str(tmp_path / "aug")]) == 0
    assert cli.main(["build", "--teacher", str(tmp_path / "both" / "teacher_full.jsonl"),
                     "--assistant", str(tmp_path / "aug" / "assistant_aug.jsonl"),
                     "--out", str(tmp_path / "full.jsonl")]) == 0
    assert (tmp_path / "full.jsonl.meta.json").exists()
    # replaying the recorded synthesis reproduces it byte for byte
    assert cli.main(["synthesize", "--corpus", str(tmp_path / "c.jsonl"), "--out", str(tmp_path / "again"),
                     "--transport", "replay", "--cache-dir", str(tmp_path / "cache")]) == 0
    assert (tmp_path / "again" / "teacher_full.jsonl").read_bytes() == \
        (tmp_path / "both" / "teacher_full.jsonl").read_bytes()


def test_cli_evaluate_files(tmp_path, capsys):
    pred = tmp_path / "p.jsonl"
    gold = tmp_path / "g.jsonl"
    pred.write_text('{"id": "a", "label": "positive", "reasoning": "good day"}\n'
                    '{"id": "b", "label": "negative", "reasoning": "bad day"}\n')
    gold.write_text('{"id": "a", "gold_label": "positive", "reference": "a good day"}\n'
                    '{"id": "b", "gold_label": "neutral", "reference": "a plain day"}\n')
    assert cli.main(["evaluate", "--pred", str(pred), "--gold", str(gold), "--metrics", "cls",
                     "--out", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["headline"]["Acc"] == 50.0 and rep["generation"] is None
    assert cli.main(["evaluate", "--pred", str(pred), "--gold", str(gold), "--metrics", "bogus"]) == 1


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "cotforge.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "cotforge" in r.stdout
