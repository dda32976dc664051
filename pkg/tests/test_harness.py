import json
from dataclasses import replace

import numpy as np
import pytest

from renal import DivergenceError, InvalidInputError, ObservationSequence
from renal import harness
from renal.embedding import TrainConfig
from renal.gof import BinSelectionConfig
from renal.harness import (
    PRESETS,
    AccuracyReport,
    ExperimentConfig,
    ablation_csv,
    draw,
    emit_report,
    parse_method,
    report_csv,
    run_experiment,
    run_lambda_ablation,
    run_trial,
    wilson_interval,
)
from renal.io import save_csv
from renal.rng import make_rng


def quick(null="se", alt="sc", **over):
    base = ExperimentConfig.preset("tpp", null, alt, trials=4, seed=1)
    return replace(base, train_cfg=replace(base.train_cfg, epochs=5), **over)


def quick_ts(null="arma1", alt="garch", **over):
    base = ExperimentConfig.preset("time_series", null, alt, trials=3, seed=2, length=300)
    return replace(base, train_cfg=replace(base.train_cfg, epochs=5), **over)


def test_presets():
    ts, tpp, stpp = PRESETS["time_series"], PRESETS["tpp"], PRESETS["stpp"]
    assert ts["hidden_dim"] == 6 and ts["train_cfg"].optimizer == "adam" and ts["train_cfg"].epochs == 100
    assert ts["train_cfg"].learning_rate == 0.001 and ts["bin_cfg"].candidate_bins == (2, 3, 4, 5, 6)
    assert tpp["hidden_dim"] == 4 and tpp["train_cfg"].learning_rate == 0.00025 and tpp["train_cfg"].epochs == 150
    assert stpp["train_cfg"].learning_rate == 0.0005 and stpp["train_cfg"].epochs == 200
    assert tpp["bin_cfg"].candidate_bins == tuple(range(2, 21)) and tpp["bin_cfg"].lam == 0.08


def test_parse_method():
    assert parse_method("renal") == ("renal", None)
    assert parse_method("EWD:10") == ("ewd", 10)
    assert parse_method("ewd(4)") == ("ewd", 4)
    assert parse_method("scott") == ("scott", None)
    for bad in ("ewd:1", "ewd", "ksd"):
        with pytest.raises(InvalidInputError):
            parse_method(bad)


def test_clone_trial_accepts():
    cfg = replace(quick_ts(), trials=1, clone_null=True)
    rep = run_experiment(cfg)
    h0 = [r for r in rep.per_trial if r["hypothesis"] == "H0"]
    assert len(h0) == 1 and h0[0]["statistic"] == 0.0 and h0[0]["reject"] is False
    assert rep.type1_accuracy == 1.0


def test_config_round_trip(tmp_path):
    cfg = quick(method="ewd:5", alpha=0.1, clone_null=True)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(p) == cfg


def test_config_from_preset_document():
    cfg = ExperimentConfig.from_dict({"preset": "tpp", "null_process": "se", "alt_process": "sc",
                                      "bin_cfg": {"lambda": 0.5}, "train_cfg": {"epochs": 3}})
    assert cfg.bin_cfg.lam == 0.5 and cfg.bin_cfg.candidate_bins == tuple(range(2, 21))
    assert cfg.train_cfg.epochs == 3 and cfg.train_cfg.optimizer == "sgd"
    assert cfg.hidden_dim == 4


@pytest.mark.parametrize("doc", [
    {"null_process": "se"},
    {"null_process": "se", "alt_process": "sc", "colour": 1},
    {"null_process": "se", "alt_process": "sc", "preset": "audio"},
    {"null_process": "se", "alt_process": "sc", "trials": 0},
    {"null_process": "se", "alt_process": "sc", "alpha": 1.5},
    {"null_process": "se", "alt_process": "nope"},
    {"null_process": "se", "alt_process": "sc", "method": "ksd"},
    {"null_process": "se", "alt_process": "sc", "bin_cfg": {"lambda": -1}},
    {"null_process": "se", "alt_process": "sc", "train_cfg": {"momentum": 0.9}},
])
def test_config_rejects(doc):
    with pytest.raises(InvalidInputError):
        ExperimentConfig.from_dict(doc)


def test_config_file_errors(tmp_path):
    with pytest.raises(InvalidInputError):
        ExperimentConfig.from_json(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text("[1, 2]")
    with pytest.raises(InvalidInputError):
        ExperimentConfig.from_json(p)


def test_accounting_and_recompute():
    cfg = quick(trials=5)
    rep = run_experiment(cfg)
    c = rep.counts()
    assert c["h0"] + c["h1"] + c["excluded"] == 2 * cfg.trials
    decided = [r for r in rep.per_trial if r["reject"] is not None]
    correct = sum((r["hypothesis"] == "H1") == r["reject"] for r in decided)
    assert rep.average_accuracy == pytest.approx(correct / len(decided))
    h0 = [r for r in decided if r["hypothesis"] == "H0"]
    assert rep.type1_accuracy == pytest.approx(sum(not r["reject"] for r in h0) / len(h0))


def test_report_json_canonical(tmp_path):
    rep = run_experiment(quick(trials=2))
    path = tmp_path / "r.json"
    emit_report(rep, path, tmp_path / "r.csv")
    text = path.read_text()
    doc = json.loads(text)
    assert json.dumps(doc, sort_keys=True, indent=2) + "\n" == text
    assert set(doc) == {"version", "config_echo", "type1_accuracy", "type2_accuracy",
                        "average_accuracy", "excluded_trials", "per_trial"}
    assert doc["config_echo"] == quick(trials=2).to_dict()
    for r in doc["per_trial"]:
        assert {"trial", "statistic", "dof", "p_value", "reject"} <= set(r)
    decided = [r for r in doc["per_trial"] if r["reject"] is not None]
    correct = sum((r["hypothesis"] == "H1") == r["reject"] for r in decided)
    assert doc["average_accuracy"] == correct / len(decided)
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "trial,hypothesis,statistic,dof,p_value,reject,error"
    assert len(rows) == 1 + len(doc["per_trial"])


def test_reproducible_across_workers():
    cfg = quick(trials=3)
    a = run_experiment(cfg).to_json()
    assert run_experiment(cfg).to_json() == a
    assert run_experiment(cfg, workers=2).to_json() == a
    assert run_experiment(replace(cfg, seed=2)).to_json() != a


def test_ablation_single_lambda_equals_experiment():
    cfg = quick(trials=2)
    (one,) = run_lambda_ablation(cfg, [0.3])
    direct = run_experiment(replace(cfg, bin_cfg=replace(cfg.bin_cfg, lam=0.3)))
    assert one.to_json() == direct.to_json()


def test_ablation_csv():
    reps = [AccuracyReport(1.0, 0.25, 0.625, [], {}, 0), AccuracyReport(None, 0.5, 0.5, [], {}, 2)]
    assert ablation_csv([0.001, 0.06], reps) == "lambda,type1,type2\n0.001,1.0,0.25\n0.06,,0.5\n"


def test_divergence_retried_once(monkeypatch):
    real = harness.train
    seeds = []

    def flaky(seq, hidden, cfg):
        seeds.append(cfg.seed)
        if len(seeds) == 1:
            raise DivergenceError(0, float("nan"))
        return real(seq, hidden, cfg)

    monkeypatch.setattr(harness, "train", flaky)
    recs = run_trial(quick_ts(), 0)
    assert len(seeds) == 2 and seeds[0] != seeds[1]
    assert all(r["reject"] is not None for r in recs)


def test_persistent_divergence_excluded(monkeypatch):
    def broken(seq, hidden, cfg):
        raise DivergenceError(3, float("inf"))

    monkeypatch.setattr(harness, "train", broken)
    rep = run_experiment(quick_ts(trials=2))
    assert rep.excluded_trials == 4 and rep.type1_accuracy is None and rep.average_accuracy is None
    assert all("DivergenceError" in r["error"] for r in rep.per_trial)
    json.loads(rep.to_json())


def test_insufficient_data_excluded():
    # STPP draws with the stated parameters are often too short to train on
    cfg = ExperimentConfig.preset("stpp", "stpp_std", "stpp_gau", trials=6)
    cfg = replace(cfg, train_cfg=replace(cfg.train_cfg, epochs=2))
    rep = run_experiment(cfg)
    assert rep.excluded_trials > 0
    assert rep.counts()["h0"] + rep.counts()["h1"] + rep.excluded_trials == 12


@pytest.mark.parametrize("method", ["mmd", "ewd:4", "scott"])
def test_other_methods(method):
    rep = run_experiment(quick_ts(method=method))
    assert rep.counts()["h0"] + rep.counts()["h1"] == 6
    dofs = {r["dof"] for r in rep.per_trial}
    assert (dofs == {None}) == (method == "mmd")


def test_csv_process_windows(tmp_path):
    from renal import generators as gen

    full = gen.PROCESSES["arma1"](0, 1000)
    path = tmp_path / "real.csv"
    save_csv(full, path)
    cfg = quick_ts(null=str(path), window_length=300)
    w = draw(cfg.null_process, cfg, 4, "null")
    assert w.n == 300
    start = int(np.searchsorted(full.timestamps, w.timestamps[0]))
    assert w.values.tobytes() == full.values[start:start + 300].tobytes()
    assert draw(cfg.null_process, cfg, 4, "null").same_as(w)
    assert not draw(cfg.null_process, cfg, 5, "null").same_as(w)
    m = draw({"csv": str(path), "kind": "event"}, cfg, 4, "null")
    assert m.kind == "event"
    assert m.same_as(ObservationSequence(w.timestamps, w.values, "event"))
    rep = run_experiment(replace(cfg, trials=2))
    assert rep.counts()["excluded"] == 0


def test_wilson_interval():
    lo, hi = wilson_interval(5, 10)
    assert lo == pytest.approx(0.2366, abs=1e-4) and hi == pytest.approx(0.7634, abs=1e-4)
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(0, 50)
    assert lo == 0.0 and 0 < hi < 0.1


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="RENAL barely separates SE from SC at desk scale; see criterion 6")
def test_tpp_average_beats_coin_flip():
    cfg = ExperimentConfig.preset("tpp", "se", "sc", trials=100)
    rep = run_experiment(cfg)
    decided = [r for r in rep.per_trial if r["reject"] is not None]
    coin = make_rng(cfg.seed, 99).random(len(decided)) < 0.5
    coin_acc = np.mean([(r["hypothesis"] == "H1") == c for r, c in zip(decided, coin)])
    assert rep.average_accuracy > 0.5
    assert rep.average_accuracy > coin_acc
    # the distinction should be clear, not a rounding margin
    lo, _ = wilson_interval(sum((r["hypothesis"] == "H1") == r["reject"] for r in decided), len(decided))
    assert lo > 0.5
