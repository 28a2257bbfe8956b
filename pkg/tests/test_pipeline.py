import json
import shutil

import pytest

from painpoints import cli, config as cfgmod, pipeline as pl, report, synth
from painpoints.corpus import ConfigError, RawReview, write_jsonl


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    reviews, truth = synth.generate(synth.GeneratorSpec(docs_per_topic=60, seed=4))
    synth.write_corpus(reviews, truth, d / "c.jsonl")
    return d / "c.jsonl", d / "c.truth.jsonl"


@pytest.fixture(scope="module")
def full_run(small_corpus, tmp_path_factory):
    src, truth = small_corpus
    out = tmp_path_factory.mktemp("run")
    conf = cfgmod.parse("").with_overrides(input=src, truth=truth, output_dir=out)
    return conf, pl.run_pipeline(conf)


def test_config_defaults_and_overrides(tmp_path):
    conf = cfgmod.parse("")
    assert (conf.filter.min_tokens, conf.merge.s, conf.itm.tau, conf.extract.g) == (10, 0.1, 0.6, 3)
    assert (conf.extract.n_sentiment, conf.extract.n_per_topic, conf.itm.max_steps) == (30, 10, 100)
    assert (conf.itm.patience, conf.train.batch_size) == (2, 64)
    seeded = conf.with_overrides(seed=9)
    assert seeded.train.seed == seeded.itm.train.seed == 9
    assert seeded.digest() != conf.digest()
    assert conf.with_overrides(output_dir=tmp_path).digest() == conf.digest()
    (tmp_path / "p.ini").write_text("[pipeline]\ninput = data/c.jsonl\n[itm]\ntau = 0.5\n")
    loaded = cfgmod.load(tmp_path / "p.ini")
    assert loaded.input == tmp_path / "data" / "c.jsonl" and loaded.itm.tau == 0.5
    rules = cfgmod.parse("[filter]\nnormalization_rules =\n  teh => the\n  !+ => !\n")
    assert rules.filter.normalization_rules == (("teh", "the"), ("!+", "!"))


@pytest.mark.parametrize("text", [
    "[nope]\nx = 1\n", "[itm]\nspeed = 1\n", "[itm]\ntau = 2\n", "[train]\nepochs = many\n",
    "[itm]\nstop_metrics = npmi, accuracy\n", "[pipeline]\ntopic_scope = some\n", "no section",
    "[filter]\nnormalization_rules = just text\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        cfgmod.parse(text)


def test_default_config_file_is_parseable(tmp_path):
    assert cli.main(["default-config", str(tmp_path / "d.ini")]) == 0
    assert cfgmod.load(tmp_path / "d.ini").digest() == cfgmod.parse("").digest()


def test_missing_input_fails_before_any_stage(tmp_path):
    conf = cfgmod.parse("").with_overrides(input=tmp_path / "absent.jsonl", output_dir=tmp_path / "out")
    with pytest.raises(ConfigError, match="absent"):
        pl.run_pipeline(conf)
    assert not (tmp_path / "out").exists()


def test_full_run_produces_both_painpoint_kinds(full_run):
    conf, manifest = full_run
    assert manifest.failed_stage is None
    assert [s["name"] for s in manifest.stages] == list(pl.STAGES)
    data = json.loads((conf.output_dir / pl.REPORT_JSON).read_text())
    assert data["missing"] == []
    assert data["sentiment_painpoints"]["entries"]
    assert data["topic_painpoints"]
    m = data["metrics"]
    assert m["topics"]["final"]["n_topics"] <= m["topics"]["initial"]["n_topics"]
    assert "planted_recovery" in m["ground_truth"]
    saved = json.loads((conf.output_dir / pl.MANIFEST).read_text())
    assert saved["config_hash"] == conf.digest()


def test_stage_rerun_is_stable(full_run, tmp_path):
    conf, _ = full_run
    before = (conf.output_dir / pl.SUMMARIES_MERGED).read_bytes()
    pl.run_stage(conf, "topics-merge")
    assert (conf.output_dir / pl.SUMMARIES_MERGED).read_bytes() == before


def _table_blocks(md):
    block = []
    for line in md.splitlines() + [""]:
        if line.startswith("|"):
            block.append(line)
        elif block:
            yield block
            block = []


def test_markdown_tables_are_well_formed(full_run):
    conf, _ = full_run
    md = (conf.output_dir / pl.REPORT_MD).read_text()
    blocks = list(_table_blocks(md))
    assert blocks
    for rows in blocks:
        width = rows[0].replace("\\|", "").count("|")
        assert set(rows[1]) <= {"|", "-"}
        assert all(r.replace("\\|", "").count("|") == width for r in rows)


def test_report_json_round_trip(full_run):
    conf, _ = full_run
    text = (conf.output_dir / pl.REPORT_JSON).read_text()
    assert json.dumps(json.loads(text), indent=2, sort_keys=True) == text


def test_partial_run_reports_missing_sections(small_corpus, tmp_path):
    src, _ = small_corpus
    conf = cfgmod.parse("[pipeline]\nfigures = false\n").with_overrides(input=src, output_dir=tmp_path)
    pl.run_pipeline(conf, ("ingest", "preprocess", "train-sent", "report"))
    data = json.loads((tmp_path / pl.REPORT_JSON).read_text())
    assert set(data["missing"]) == set(report.SECTIONS)
    md = (tmp_path / pl.REPORT_MD).read_text()
    assert "_Stage missing: no topic pain points were extracted._" in md


def test_sentiment_only_report_rendering():
    data = {"config_hash": "x", "missing": ["topic_painpoints", "topic_summaries", "metrics"],
            "sentiment_painpoints": {"scope": "sentiment",
                                     "entries": [{"word": "battery", "frequency": 3, "examples": ["a"]}]},
            "topic_painpoints": None, "topic_summaries": None, "metrics": None}
    md = report.render_markdown(data, [])
    assert "| 1 | battery | 3 | a |" in md
    assert "_Stage missing: no topic pain points were extracted._" in md


def test_stage_needs_its_inputs(tmp_path):
    conf = cfgmod.parse("").with_overrides(output_dir=tmp_path)
    with pytest.raises(pl.StageError, match="itm"):
        pl.run_stage(conf, "itm")


def test_failed_stage_recorded_in_manifest(tmp_path):
    src = tmp_path / "pos.jsonl"
    write_jsonl(src, [RawReview(f"r{i}", f"great product number {i} works well every day for me",
                                "positive").to_dict() for i in range(20)])
    conf = cfgmod.parse("").with_overrides(input=src, output_dir=tmp_path / "out")
    with pytest.raises(pl.StageError, match="preprocess"):
        pl.run_pipeline(conf)
    saved = json.loads((tmp_path / "out" / pl.MANIFEST).read_text())
    assert saved["failed_stage"] == "preprocess"
    assert [s["status"] for s in saved["stages"]] == ["ok", "failed"]


def test_cli_exit_codes(tmp_path, capsys, small_corpus):
    src = tmp_path / "pos.jsonl"
    write_jsonl(src, [RawReview("r1", "fine fine fine fine fine fine fine fine fine fine", "positive").to_dict()])
    assert cli.main(["run", "-i", str(src), "-o", str(tmp_path / "o")]) == cli.EXIT_STAGE_FAILED
    assert "stage preprocess failed" in capsys.readouterr().err
    assert cli.main(["run", "-i", str(tmp_path / "missing.jsonl")]) == cli.EXIT_BAD_CONFIG
    assert cli.main(["run"]) == cli.EXIT_BAD_CONFIG
    (tmp_path / "bad.ini").write_text("[itm]\ntau = 0\n")
    assert cli.main(["itm", "-c", str(tmp_path / "bad.ini")]) == cli.EXIT_BAD_CONFIG
    assert cli.main(["synth", str(tmp_path / "s.jsonl"), "--docs-per-topic", "5"]) == 0
    assert (tmp_path / "s.truth.jsonl").is_file()
    copy = tmp_path / "c.jsonl"
    shutil.copy(small_corpus[0], copy)
    assert cli.main(["ingest", "-i", str(copy), "-o", str(tmp_path / "o2")]) == 0
    assert (tmp_path / "o2" / pl.REVIEWS).is_file()


def test_extract_with_external_annotations(full_run, tmp_path):
    from painpoints import chunker

    conf, _ = full_run
    out = tmp_path / "ann_run"
    shutil.copytree(conf.output_dir, out)
    doc = pl.Workspace(conf).kept()[0]
    analysis = chunker.analyze(doc.tokens)
    rows = ["\t".join(chunker.ANNOTATION_COLUMNS)]
    for i, (tok, tag) in enumerate(zip(analysis.tokens, analysis.tags)):
        c = analysis.chunk_at(i)
        kind, cid, head = (c.kind, f"c{c.start}", c.head) if c else ("O", "-", 0)
        rows.append(f"{doc.id}\t{i}\t{tok}\t{tag}\t{kind}\t{cid}\t{head}")
    (tmp_path / "ann.tsv").write_text("\n".join(rows) + "\n")
    ann_conf = conf.with_overrides(output_dir=out, annotations=tmp_path / "ann.tsv")
    pl.run_stage(ann_conf, "extract")
    # the annotation mirrors the built-in analysis, so results must not move
    assert (out / pl.PAINPOINTS_JSON).read_bytes() == (conf.output_dir / pl.PAINPOINTS_JSON).read_bytes()
    (tmp_path / "ann.tsv").write_text("\n".join(rows[:-1]) + "\n")
    with pytest.raises(pl.StageError, match=doc.id):
        pl.run_stage(ann_conf, "extract")
