from __future__ import annotations

import json

import numpy as np
import pytest
import yaml

from twosided.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from twosided.metrics import REPORT_COLUMNS
from twosided.synthetic import bundled_dir
from twosided.trace import EpisodeTrace

DATA = [str(bundled_dir() / "synth3" / f"{s}.csv") for s in ("AAA", "BBB", "CCC")]
TINY = {
    "data": {"paths": DATA, "train_steps": 80, "test_steps": 30},
    "env": {"history": 12},
    "sppo": {"window": 40, "frontier_points": 5},
    "network": {"conv_filters": [4], "attention_heads": 1, "attention_dim": 4, "fc_widths": [8]},
    "sac": {"batch_size": 8},
    "train": {"episodes": 1, "max_updates": 5},
    "strategies": ["equal_weight", "sppo:MV"],
    "seed": 11,
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(yaml.safe_dump(TINY))
    return p


def run(cfg_path, out, *args):
    return main([args[0], "--config", str(cfg_path), "--out", str(out), *args[1:]])


def test_ingest_manifest_and_hash_stability(cfg_path, tmp_path):
    hashes = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert run(cfg_path, out, "ingest") == EXIT_OK
        man = json.loads((out / "manifest.json").read_text())
        assert man["m"] == 3 and man["interval_hours"] == 4 and man["source_interval_hours"] == 1
        assert man["symbols"] == ["AAA", "BBB", "CCC"]
        hashes.append(man["hash"])
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["seed"] == 11 and resolved["env"]["fee"] == 0.0005
    assert hashes[0] == hashes[1]


def test_short_file_is_data_error(tmp_path, capsys):
    short = tmp_path / "S.csv"
    short.write_text("unix,open,high,low,close\n" + "".join(f"{1672531200 + 3600 * i},1,1,1,1\n" for i in range(10)))
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({**TINY, "data": {"paths": [str(short)]}}))
    assert run(cfg, tmp_path / "o", "ingest") == EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_exit_codes(cfg_path, tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("env:\n  fee_typo: 1\n")
    assert run(bad, tmp_path / "o", "ingest") == EXIT_CONFIG
    assert run(cfg_path, tmp_path / "o", "backtest", "--strategy", "sppo:VaR") == EXIT_CONFIG
    missing = tmp_path / "m.yaml"
    missing.write_text(yaml.safe_dump({**TINY, "data": {"paths": ["nope.csv"]}}))
    assert run(missing, tmp_path / "o", "ingest") == EXIT_CONFIG
    # rl backtest without a checkpoint
    assert run(cfg_path, tmp_path / "o", "backtest", "--strategy", "rl:pnl") == EXIT_DATA
    assert run(cfg_path, tmp_path / "o", "train", "--strategy", "sppo:MV") == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "unknown key" in err and "checkpoint not found" in err


def test_equal_weight_backtest_is_constant_and_deterministic(cfg_path, tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert run(cfg_path, out, "backtest", "--strategy", "equal_weight") == EXIT_OK
    a, b = (o / "trace_equal_weight.csv" for o in outs)
    assert a.read_bytes() == b.read_bytes()
    tr = EpisodeTrace.from_csv(a)
    assert np.all(tr.weights[1:] == 1 / 3)
    rep = json.loads((outs[0] / "report_equal_weight.json").read_text())
    assert set(REPORT_COLUMNS) <= set(rep)


def test_sppo_backtest_report_has_all_columns(cfg_path, tmp_path):
    assert run(cfg_path, tmp_path, "backtest", "--strategy", "sppo:MV") == EXIT_OK
    rep = json.loads((tmp_path / "report_sppo_mv.json").read_text())
    assert set(REPORT_COLUMNS) <= set(rep)


def test_train_then_backtest_with_spec_mismatch(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert run(cfg_path, out, "train", "--strategy", "rl:pnl") == EXIT_OK
    assert (out / "checkpoint_rl_pnl.ckpt").is_file() and (out / "curve_rl_pnl.csv").is_file()
    assert run(cfg_path, out, "backtest", "--strategy", "rl:pnl") == EXIT_OK
    other = tmp_path / "wide.yaml"
    other.write_text(yaml.safe_dump({**TINY, "network": {**TINY["network"], "fc_widths": [16]}}))
    assert run(other, out, "backtest", "--strategy", "rl:pnl") == EXIT_DATA


def test_train_zero_episodes(cfg_path, tmp_path):
    assert run(cfg_path, tmp_path, "train", "--strategy", "rl:return", "--episodes", "0") == EXIT_OK
    assert (tmp_path / "curve_rl_return.csv").read_text().count("\n") == 1


def test_frontier_command(cfg_path, tmp_path):
    assert run(cfg_path, tmp_path, "frontier", "--measure", "MAD") == EXIT_OK
    lines = (tmp_path / "frontier_mad.csv").read_text().splitlines()
    assert lines[0] == "target_return,risk,w_AAA,w_BBB,w_CCC" and len(lines) >= 2
    assert run(cfg_path, tmp_path, "frontier", "--row", "100000") == EXIT_DATA


def test_compare_and_report(cfg_path, tmp_path, capsys):
    out = tmp_path / "o"
    assert run(cfg_path, out, "compare") == EXIT_OK
    rows = (out / "comparison.csv").read_text().splitlines()
    assert rows[0] == "strategy," + ",".join(REPORT_COLUMNS)
    assert [r.split(",")[0] for r in rows[1:]] == ["equal_weight", "sppo_mv"]
    assert (out / "hist_sppo_mv.csv").is_file() and (out / "distributions.json").is_file()
    assert run(cfg_path, out, "report") == EXIT_OK
    assert (out / "report.md").read_text().startswith("| Strategy |")

    trace = out / "trace_equal_weight.csv"
    same = out / "copy" / "trace_equal_weight.csv"
    same.parent.mkdir()
    same.write_bytes(trace.read_bytes())
    assert run(cfg_path, tmp_path / "p", "compare", "--traces", str(trace), str(same)) == EXIT_OK
    r1, r2 = (tmp_path / "p" / "comparison.csv").read_text().splitlines()[1:]
    assert r1 == r2

    capsys.readouterr()
    assert run(cfg_path, tmp_path / "q", "compare", "--traces", str(trace), str(tmp_path / "gone.csv")) == EXIT_DATA
    assert "gone.csv" in capsys.readouterr().err
    assert run(cfg_path, tmp_path / "r", "report", "--input", str(tmp_path / "none.csv")) == EXIT_DATA


def test_reuses_ingested_frames(cfg_path, tmp_path):
    ing = tmp_path / "ing"
    assert run(cfg_path, ing, "ingest") == EXIT_OK
    assert run(cfg_path, tmp_path / "a", "backtest", "--strategy", "sppo:MV", "--frames", str(ing)) == EXIT_OK
    assert run(cfg_path, tmp_path / "b", "backtest", "--strategy", "sppo:MV") == EXIT_OK
    assert (tmp_path / "a" / "trace_sppo_mv.csv").read_bytes() == (tmp_path / "b" / "trace_sppo_mv.csv").read_bytes()
    assert run(cfg_path, tmp_path / "c", "backtest", "--frames", str(tmp_path / "empty")) == EXIT_DATA
