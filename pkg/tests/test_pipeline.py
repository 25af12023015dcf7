import json
import logging

import pytest
from sklearn.base import clone

from relconstrain.constraints import cnf_satisfied
from relconstrain.lm import NGramLM
from relconstrain.pipeline import (
    SEP,
    ConstrainedSummarizer,
    ConstraintExtractor,
    DataError,
    PipelineConfig,
    QfsExample,
    attribution_inputs,
    evaluate_files,
    lm_sequence,
    load_dataset,
    parse_config,
    run_pipeline,
    satisfaction_rate,
    write_jsonl,
)
from relconstrain.text import StopList, tokenize

from conftest import FIXTURES, WATER_DOCUMENT, WATER_QUERY


def fixture_config(tmp_path, **overrides):
    text = (FIXTURES / "pipeline.cfg").read_text()
    paths = {name: str(FIXTURES / f"{name}.jsonl") for name in ("train", "dev", "test")}
    return parse_config(text, {**paths, "output_dir": str(tmp_path), **overrides})


@pytest.fixture(scope="module")
def fixture_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = fixture_config(out)
    return cfg, run_pipeline(cfg), out


def _write(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def test_load_dataset_ok(tmp_path):
    p = _write(tmp_path / "d.jsonl", [
        {"id": "a", "query": "q one", "document": "d one", "summary": "s"},
        {"id": 2, "query": "q two", "document": "d two", "summary": ""},
    ])
    data = load_dataset(p)
    assert [e.id for e in data] == ["a", "2"]
    assert data[1].summary == ""


def test_summary_field_is_required(tmp_path):
    with pytest.raises(DataError, match="missing field summary"):
        load_dataset(_write(tmp_path / "d.jsonl", [{"id": "a", "query": "q", "document": "d"}]))


@pytest.mark.parametrize("rows,message", [
    ([{"id": "a", "query": "q"}], "line 1: missing field document"),
    ([{"id": "a", "query": "q", "document": "d", "summary": ""}] * 2, "duplicate id"),
])
def test_load_dataset_errors(tmp_path, rows, message):
    with pytest.raises(DataError, match=message):
        load_dataset(_write(tmp_path / "d.jsonl", rows))


def test_load_dataset_bad_json_and_empty(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"id": "a", \n')
    with pytest.raises(DataError, match="line 1: invalid JSON"):
        load_dataset(p)
    p.write_text("")
    assert load_dataset(p) == []


def test_load_dataset_truncates(tmp_path, caplog):
    doc = " ".join(f"w{i}" for i in range(40))
    p = _write(tmp_path / "d.jsonl", [{"id": "a", "query": "q", "document": doc, "summary": ""}])
    with caplog.at_level(logging.WARNING):
        data = load_dataset(p, max_doc_tokens=10)
    assert len(tokenize(data[0].document)) == 10
    assert "truncat" in caplog.text


def test_attribution_roles():
    q, d = ["q1", "q2"], ["d1"]
    assert attribution_inputs(q, d, "document") == (q, d)
    assert attribution_inputs(q, d, "query") == (d, q)
    assert attribution_inputs(q, d, "both") == (q, q + d)
    with pytest.raises(ValueError):
        attribution_inputs(q, d, "summary")


def test_constraints_come_from_chosen_side():
    ex = QfsExample("t1", WATER_QUERY, WATER_DOCUMENT, "")
    stops = StopList.default()
    for source, side in (("document", ex.document), ("query", ex.query)):
        extractor = ConstraintExtractor(constraint_source=source).fit()
        selected = extractor.selected_tokens(ex)
        assert len(selected) == 3
        allowed = {t for t in tokenize(side) if t not in stops.stopwords and not stops.is_punctuation(t)}
        assert set(selected) <= allowed
        cnf = extractor.transform([ex])[0]
        assert [c.literals[0].tokens[0] for c in cnf.clauses] == selected


def test_all_stopword_document_gives_empty_cnf():
    ex = QfsExample("s", "the query", "the and of , .", "")
    assert len(ConstraintExtractor().fit().transform([ex])[0]) == 0


def test_estimator_params_and_clone():
    model = ConstrainedSummarizer(beam_width=7, lambda_=0.3)
    params = model.get_params()
    assert params["beam_width"] == 7 and params["lambda_"] == 0.3
    twin = clone(model)
    assert twin.get_params() == params and twin is not model
    assert clone(ConstraintExtractor(k_constraints=5)).k_constraints == 5
    assert NGramLM(order=2).set_params(smoothing_k=0.5).smoothing_k == 0.5


def test_lm_sequence():
    assert lm_sequence("Is it?", "Yes.") == ["is", "it", "?", SEP, "yes", "."]
    assert lm_sequence("q") == ["q", SEP]


def test_summarizer_decodes_fixture_example():
    train = load_dataset(FIXTURES / "train.jsonl")
    test = load_dataset(FIXTURES / "test.jsonl")
    model = ConstrainedSummarizer(lm_order=3, lm_smoothing_k=0.1, likelihood_keep=100).fit(train)
    decoded = model.decode(test[0])
    assert decoded.satisfied
    assert cnf_satisfied(decoded.cnf, decoded.tokens)
    assert SEP not in decoded.tokens
    row = decoded.row()
    assert set(row) == {"id", "prediction", "constraints", "satisfied", "cum_logprob"}
    assert model.predict(test[:2])[0] == decoded.text


def test_summarizer_requires_separator():
    lm = NGramLM(order=2).fit([["a", "b"]])
    with pytest.raises(ValueError, match="separator"):
        ConstrainedSummarizer().fit([], lm=lm)


def test_config_parsing():
    cfg = parse_config("beam-width = 5\nlambda = 0.5\n# c\nbaseline = no\n", {"max_len": "9", "dev": None})
    assert (cfg.beam_width, cfg.lambda_, cfg.max_len, cfg.baseline) == (5, 0.5, 9, False)
    for bad in ("nonsense", "colour = red", "baseline = maybe", "beam_width = x"):
        with pytest.raises(ValueError):
            parse_config(bad)
    with pytest.raises(ValueError, match="test dataset"):
        PipelineConfig(train="x").validate()
    with pytest.raises(FileNotFoundError):
        PipelineConfig(train="/no/such", test="/no/such").validate()


def test_pipeline_report(fixture_run):
    cfg, report, out = fixture_run
    assert report["report_version"] == 1
    assert report["n_examples"] == 20
    assert report["constrained"]["satisfaction_rate"] >= 0.95
    assert report["unconstrained"]["satisfaction_rate"] < report["constrained"]["satisfaction_rate"]
    for metric in ("r1", "r2", "rl"):
        assert set(report["constrained"][metric]) == {"p", "r", "f1"}
        assert set(report["paired_t_test"][metric]) == {"t_stat", "p_value", "df"}
    assert len(report["examples"]) == 20
    on_disk = json.loads((out / "report.json").read_text())
    assert on_disk["constrained"] == report["constrained"]
    preds = [json.loads(line) for line in (out / "predictions.jsonl").read_text().splitlines()]
    assert [p["id"] for p in preds] == [r["id"] for r in report["examples"]]


def test_evaluate_files_matches_report(fixture_run, tmp_path):
    cfg, report, out = fixture_run
    ev = evaluate_files(out / "predictions.jsonl", FIXTURES / "test.jsonl", out / "predictions_unconstrained.jsonl")
    assert ev["r1"]["f1"] == pytest.approx(report["constrained"]["r1"]["f1"])
    assert ev["compare"]["r1"]["f1"] == pytest.approx(report["unconstrained"]["r1"]["f1"])
    assert ev["paired_t_test"]["r1"]["t_stat"] == pytest.approx(report["paired_t_test"]["r1"]["t_stat"])
    write_jsonl(tmp_path / "short.jsonl", [{"id": "test-0000", "prediction": "x"}])
    with pytest.raises(DataError, match="missing ids"):
        evaluate_files(tmp_path / "short.jsonl", FIXTURES / "test.jsonl")


def test_pipeline_dev_split_without_baseline(tmp_path):
    cfg = fixture_config(tmp_path, test=str(FIXTURES / "dev.jsonl"), baseline="false")
    report = run_pipeline(cfg)
    assert report["n_examples"] == 8
    assert "unconstrained" not in report and "paired_t_test" not in report
    assert not (tmp_path / "predictions_unconstrained.jsonl").exists()


def test_zero_clause_examples_count_as_satisfied(tmp_path):
    test = _write(tmp_path / "t.jsonl", [{"id": "z", "query": "water: should water be regulated?",
                                           "document": "the , of .", "summary": "x"}])
    cfg = fixture_config(tmp_path / "out", test=str(test))
    report = run_pipeline(cfg)
    assert report["examples"][0]["n_clauses"] == 0
    assert report["constrained"]["satisfaction_rate"] == 1.0
    assert satisfaction_rate([]) == 1.0
    # a single example cannot be t-tested
    assert report["paired_t_test"]["r1"] is None


def test_pipeline_reruns_are_byte_identical(tmp_path):
    blobs = []
    for _ in range(2):
        run_pipeline(fixture_config(tmp_path, test=str(FIXTURES / "dev.jsonl")))
        blobs.append({f.name: f.read_bytes() for f in sorted(tmp_path.iterdir())})
    assert blobs[0].keys() == {"predictions.jsonl", "predictions_unconstrained.jsonl", "report.json"}
    assert blobs[0] == blobs[1]


def test_invalid_settings_are_rejected(tmp_path):
    with pytest.raises(ValueError, match="k_constraints"):
        run_pipeline(fixture_config(tmp_path, k_constraints="0"))
    with pytest.raises(ValueError, match="constraint_source"):
        run_pipeline(fixture_config(tmp_path, constraint_source="summary"))
