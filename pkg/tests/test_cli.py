import os

import numpy as np
import pytest

from affinity_xrl.cli import EXIT_INVARIANT, EXIT_OK, EXIT_VALIDATION, SUMMARY_HEADER, main
from affinity_xrl.surrogate import MarkovSurrogate

FAST = "[train]\nepisodes = 1\nhidden = 8,8\n[explain]\nsample_seeds = 2\n"


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "fast.ini"
    cfg.write_text(FAST)
    out = root / "out"
    assert main(["run-all", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    return cfg, out


def listing(out):
    return sorted(os.path.relpath(os.path.join(d, f), out) for d, _, fs in os.walk(out) for f in fs)


def test_run_all_writes_the_layout(run_dir):
    _, out = run_dir
    files = set(listing(out))
    for k in ("stocks", "property", "interest", "luxury"):
        assert f"data/{k}_prices.csv" in files
    for agent in ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism"):
        for f in (f"checkpoints/{agent}.ckpt", f"logs/{agent}_train.csv", f"trajectories/{agent}.csv",
                  f"traces/{agent}.csv", f"surrogates/{agent}.json", f"reports/{agent}_fidelity.csv",
                  f"reports/{agent}_saliency.csv", f"dot/{agent}.dot", f"matrices/{agent}_agent.csv",
                  f"matrices/{agent}_surrogate.csv"):
            assert f in files
    summary = (out / "reports" / "summary.csv").read_text().splitlines()
    assert summary[0] == SUMMARY_HEADER and len(summary) == 6


def test_surrogate_files_are_stochastic(run_dir):
    _, out = run_dir
    sur = MarkovSurrogate.load(out / "surrogates" / "openness.json")
    np.testing.assert_allclose(sur.transition_matrix_.sum(axis=1), 1, atol=1e-9)


def test_rerun_skips_and_keeps_bytes(run_dir, capsys):
    cfg, out = run_dir
    before = {f: (out / f).read_bytes() for f in listing(out)}
    assert main(["run-all", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert "skipping" in capsys.readouterr().out
    assert {f: (out / f).read_bytes() for f in listing(out)} == before


def test_force_reproduces_bytes(run_dir, tmp_path):
    cfg, out = run_dir
    other = tmp_path / "again"
    assert main(["run-all", "--config", str(cfg), "--out", str(other)]) == EXIT_OK
    assert listing(other) == listing(out)
    for f in listing(out):
        assert (other / f).read_bytes() == (out / f).read_bytes(), f


def test_train_before_ingest_is_a_validation_error(tmp_path):
    assert main(["train", "--out", str(tmp_path / "empty")]) == EXIT_VALIDATION


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[data]\nsource = csv\nstocks_csv = missing.csv\n")
    assert main(["ingest", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    assert "data.stocks_csv" in capsys.readouterr().err


def test_corrupted_surrogate_fails_invariants(run_dir, tmp_path):
    import shutil
    cfg, out = run_dir
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    dot = copy / "dot" / "openness.dot"
    lines = dot.read_text().splitlines()
    lines.insert(-1, '  s0 -> s0 [label="0.90", prob="0.9"];')
    lines.insert(-1, '  s0 -> s0 [label="0.90", prob="0.9"];')
    lines.insert(-1, '  s0 [label="(0,0,0)"];')
    dot.write_text("\n".join(lines) + "\n")
    assert main(["explain", "--config", str(cfg), "--out", str(copy)]) == EXIT_INVARIANT


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(["fly"])
