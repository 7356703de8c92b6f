import csv
import json
import math

import pytest

from renewal_ldp import fixture_path
from renewal_ldp.cli import main
from renewal_ldp.legendre import fmt_real

from conftest import poisson_rate

POISSON = str(fixture_path("poisson.json"))
TWO_ATOM = str(fixture_path("two_atom.json"))
EXP_EXP = str(fixture_path("exp_reward.json"))


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _data_files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_rate_profile_matches_closed_form(tmp_path):
    out = tmp_path / "rp"
    grid = ",".join(str(0.25 * i) for i in range(1, 17))
    assert main(["rate-profile", "--model", POISSON, "--out", str(out), "--m-grid", grid]) == 0
    rows = _rows(out / "rate_profile.csv")
    assert max(abs(float(r["jbar"]) - poisson_rate(float(r["m"]))) for r in rows) < 1e-6
    # closed form as a separate artifact, checked through compare
    ref = tmp_path / "closed.csv"
    with open(ref, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "jbar"])
        w.writerows([r["m"], fmt_real(poisson_rate(float(r["m"])))] for r in rows)
    cmp_out = tmp_path / "cmp"
    argv = ["compare", str(out / "rate_profile.csv"), str(ref), "--atol", "1e-6", "--columns", "m,jbar", "--out", str(cmp_out)]
    assert main(argv) == 0
    rep = json.loads((cmp_out / "comparison.json").read_text())
    assert rep["pass"] and {e["column"] for e in rep["entries"]} == {"m", "jbar"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "rate-profile"
    assert manifest["config"]["exit_status"] == 0


def test_jbar_at_zero_is_theta0(tmp_path):
    assert main(["rate-profile", "--model", POISSON, "--out", str(tmp_path), "--m-grid", "0"]) == 0
    assert float(_rows(tmp_path / "rate_profile.csv")[0]["jbar"]) == 1.0


def test_compare_detects_difference(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["rate-profile", "--model", POISSON, "--out", str(a), "--m-grid", "0.5,1,2"])
    main(["rate-profile", "--model", POISSON, "--out", str(b), "--m-grid", "0.5,1,2.5"])
    assert main(["compare", str(a / "rate_profile.csv"), str(a / "rate_profile.csv")]) == 0
    assert main(["compare", str(a / "rate_profile.csv"), str(b / "rate_profile.csv"), "--atol", "1e-6"]) == 3
    # mismatched schemas
    main(["deviation-bound", "--model", POISSON, "--out", str(a), "--a", "1"])
    assert main(["compare", str(a / "rate_profile.json"), str(a / "deviation_bound.json")]) == 1


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", "--model", POISSON]) == 0
    assert main(["validate", "--model", str(fixture_path("bad_tau_zero.json"))]) == 1
    err = capsys.readouterr().err
    assert "positive" in err
    assert main(["validate", "--model", str(fixture_path("square_reward.json")), "--out", str(tmp_path)]) == 2
    assert main(["validate", "--model", str(fixture_path("hawkes_inhibiting.json"))]) == 0
    assert main(["validate", "--model", str(tmp_path / "missing.json")]) == 1


def test_entropy_oracle_two_atom(tmp_path):
    assert main(["entropy-oracle", "--model", TWO_ATOM, "--out", str(tmp_path), "--m-grid", "0.5,1.5"]) == 0
    rows = {float(r["m"]): r for r in _rows(tmp_path / "comparison.csv")}
    r = rows[1.5]
    assert r["result"] == "pass" and float(r["abs_diff"]) <= 1e-3
    assert float(r["oracle"]) == pytest.approx(math.log(2) + 0.75 * math.log(0.75) + 0.25 * math.log(0.25), abs=1e-6)


def test_entropy_oracle_rejects_continuous_law(tmp_path):
    assert main(["entropy-oracle", "--model", POISSON, "--out", str(tmp_path), "--m-grid", "1"]) == 2


def test_mc_tail_censored_exit(tmp_path):
    argv = ["mc-tail", "--model", POISSON, "--out", str(tmp_path), "--a", "8", "--t-grid", "5,10,15", "--n", "2000"]
    assert main(argv) == 3
    data = json.loads((tmp_path / "mc_tail.json").read_text())
    assert data["insufficient_events"] is True


def test_one_sided_compare(tmp_path):
    tail, bound = tmp_path / "tail", tmp_path / "bound"
    argv = ["mc-tail", "--model", POISSON, "--out", str(tail), "--a", "0.5", "--t-grid", "4,8,12,16", "--n", "50000"]
    assert main(argv) == 0
    assert main(["deviation-bound", "--model", POISSON, "--out", str(bound), "--a", "0.5"]) == 0
    out = tmp_path / "cmp"
    argv = ["compare", str(tail / "mc_tail.json"), str(bound / "deviation_bound.json"), "--rule", "one-sided", "--out", str(out)]
    assert main(argv) == 0
    rep = json.loads((out / "comparison.json").read_text())
    assert rep["slope"] <= rep["limit"]
    # swapped artifacts are a schema error
    argv = ["compare", str(bound / "deviation_bound.json"), str(tail / "mc_tail.json"), "--rule", "one-sided"]
    assert main(argv) == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"t": 12.0, "n_paths": 50, "seed": 5}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--model", POISSON, "--out", str(a), "--config", str(cfg)]) == 0
    assert main(["simulate", "--model", POISSON, "--out", str(b), "--t", "12", "--n-paths", "50", "--seed", "5"]) == 0
    assert _data_files(a) == _data_files(b)
    man = json.loads((a / "manifest.json").read_text())
    assert man["config"]["seed"] == 5 and man["config"]["n_paths"] == 50
    c = tmp_path / "c"
    assert main(["simulate", "--model", POISSON, "--out", str(c), "--config", str(cfg), "--seed", "6"]) == 0
    assert _data_files(c) != _data_files(a)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": "red"}))
    assert main(["simulate", "--model", POISSON, "--out", str(c), "--config", str(bad), "--t", "1"]) == 1


def test_single_path_artifacts(tmp_path):
    assert main(["simulate", "--model", TWO_ATOM, "--out", str(tmp_path), "--t", "7.5", "--seed", "3"]) == 0
    rows = _rows(tmp_path / "path.csv")
    summary = json.loads((tmp_path / "path_summary.json").read_text())
    assert summary["parent"]["M_t"] == len(rows)


def test_usage_errors(tmp_path):
    assert main(["simulate", "--model", POISSON, "--t", "5"]) == 1  # --out missing
    assert main(["mc-tail", "--model", POISSON, "--out", str(tmp_path)]) == 1  # --a missing
    assert main(["approx-rate", "--model", EXP_EXP, "--out", str(tmp_path), "--variant", "bogus:1", "--delta", "0.5", "--t-grid", "5,10"]) == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--t", "20", "--n-paths", "3000", "--variant", "truncate:2"],
        ["mc-tail", "--a", "0.5", "--t-grid", "5,10,15", "--n", "20000"],
        ["approx-rate", "--variant", "truncate:1", "--delta", "0.25", "--t-grid", "5,10,15", "--n", "20000"],
    ],
    ids=["simulate", "mc-tail", "approx-rate"],
)
def test_worker_count_byte_identical(tmp_path, argv):
    outs = []
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        assert main(argv + ["--model", EXP_EXP, "--out", str(out), "--seed", "13", "--workers", str(workers)]) == 0
        outs.append(_data_files(out))
    assert outs[0] == outs[1]


def test_hawkes_command(tmp_path):
    model = str(fixture_path("hawkes_inhibiting.json"))
    argv = ["hawkes", "--model", model, "--out", str(tmp_path), "--t-grid", "5,10,15", "--n", "5000", "--a", "0.2", "--no-bound"]
    assert main(argv) == 0
    summary = json.loads((tmp_path / "hawkes_summary.json").read_text())
    pairs = _rows(tmp_path / "hawkes_pairs.csv")
    assert summary["n_cycles"] == len(pairs)
    assert sum(float(r["w"]) for r in pairs) + summary["trailing_events"] == summary["n_events"]
    assert json.loads((tmp_path / "hawkes_tail.json").read_text())["estimate_based"] is True
