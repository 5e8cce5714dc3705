import csv
import json

import pytest

from pathloc.cli import main
from pathloc.errors import BudgetError
from pathloc.experiments import BENCHMARK_COLUMNS, MULTIPATH_COLUMNS, SWEEP_COLUMNS, THRESHOLD_COLUMNS, TRIAL_COLUMNS


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def graph_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("g")
    assert main(["--out-dir", str(d), "generate", "rgg", "--n", "400", "--r", "0.09", "--seed", "3"]) == 0
    return next(d.glob("graph-*.json"))


def header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def test_generate_is_deterministic(tmp_path, capsys):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "generate", "rgg", "--n", "300", "--r", "0.1", "--seed", "1")
    assert code == 0
    first = json.loads(out)
    code, out, _ = run(capsys, "--out-dir", tmp_path, "generate", "rgg", "--n", "300", "--r", "0.1", "--seed", "1")
    assert json.loads(out)["graph"] == first["graph"]
    assert len(list(tmp_path.glob("graph-*.json"))) == 1


def test_generate_from_edge_list(tmp_path, capsys):
    src = tmp_path / "e.txt"
    src.write_text("# toy\n10 11\n11 12\n")
    code, out, _ = run(capsys, "--out-dir", tmp_path, "generate", "edgelist", "--input", src)
    assert code == 0 and json.loads(out)["n"] == 3


def test_partition_square_and_hub(graph_file, tmp_path, capsys):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "partition", "square", "--graph", graph_file, "--B", "5")
    assert code == 0
    info = json.loads(out)
    assert info["m"] == 25
    lines = open(info["partition"]).read().splitlines()
    assert len(lines) == 400
    code, out, _ = run(capsys, "--out-dir", tmp_path, "partition", "hub", "--graph", graph_file, "--hub-k", "4", "--hub-c", "20")
    assert code == 0 and json.loads(out)["largestCluster"] <= 20
    # a written partition can be read back
    code, out, _ = run(
        capsys, "--out-dir", tmp_path, "simulate", "--graph", graph_file, "--partition-file", info["partition"],
        "--T", "20", "--trials", "2", "--snr", "4",
    )
    assert code == 0 and json.loads(out)["m"] == 25


def test_simulate_writes_trials_and_chains(graph_file, tmp_path, capsys):
    code, out, _ = run(
        capsys, "--out-dir", tmp_path, "--seed", "5", "simulate", "--graph", graph_file, "--B", "5",
        "--decoder", "multiscale", "--T", "30", "--snr", "4.5", "--trials", "3", "--chains", "2",
    )
    assert code == 0
    info = json.loads(out)
    assert header(info["trials"]) == TRIAL_COLUMNS
    assert len(info["chains"]) == 2
    assert header(info["chains"][0]) == ["t", "id", "truth"]
    summary = json.loads(open(info["chains"][0].replace(".csv", ".json")).read())
    assert isinstance(summary["connected"], bool) and summary["wallTimeMs"] > 0
    rows = list(csv.DictReader(open(info["trials"])))
    assert len(rows) == 3 and all(r["configDigest"] == info["configDigest"] for r in rows)
    # same flags, same digest, same rows
    first = open(info["trials"]).read()
    run(
        capsys, "--out-dir", tmp_path, "--seed", "5", "simulate", "--graph", graph_file, "--B", "5",
        "--decoder", "multiscale", "--T", "30", "--snr", "4.5", "--trials", "3", "--chains", "2",
    )
    again = open(info["trials"]).read()
    strip = lambda text: [line.rsplit(",", 2)[0] for line in text.splitlines()]  # noqa: E731
    assert strip(first) == strip(again)


def test_global_flags_accepted_after_subcommand(graph_file, tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--out-dir", tmp_path, "--seed", "2", "--graph", graph_file, "--T", "10", "--trials", "1", "--snr", "5")
    assert code == 0 and str(tmp_path) in json.loads(out)["trials"]


def test_bound_command(graph_file, tmp_path, capsys):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "bound", "--graph", graph_file, "--B", "5", "--T", "20", "--snr", "5", "--trials", "2")
    assert code == 0
    reports = json.load(open(json.loads(out)["bounds"]))
    kinds = {r["kind"] for r in reports}
    assert kinds == {"hammingSuper", "hammingFine", "destinationSuper", "destinationFine", "rggClosedForm"}
    assert all(r["value"] >= 0 for r in reports)


def test_sweep_and_threshold(graph_file, tmp_path, capsys):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "sweep", "--graph", graph_file, "--B", "4", "5", "--T", "20", "--snrs", "3", "6", "--trials", "4")
    assert code == 0
    path = json.loads(out)["csv"]
    assert header(path) == SWEEP_COLUMNS
    assert len(list(csv.DictReader(open(path)))) == 4
    code, out, _ = run(
        capsys, "--out-dir", tmp_path, "sweep", "--graph", graph_file, "--B", "5", "--T", "20", "--trials", "4",
        "--threshold", "hamming", "--no-bounds", "--bracket", "1", "10", "--resolution", "0.2",
    )
    assert code == 0
    assert header(json.loads(out)["csv"]) == THRESHOLD_COLUMNS


def test_threshold_unreachable_exits_3(graph_file, tmp_path, capsys):
    code, _, err = run(
        capsys, "--out-dir", tmp_path, "sweep", "--graph", graph_file, "--B", "5", "--T", "20", "--trials", "2",
        "--threshold", "hamming", "--no-bounds", "--bracket", "0.1", "0.2",
    )
    assert code == 3 and "widen" in err


def test_benchmark_and_multipath(graph_file, tmp_path, capsys):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "benchmark", "--graph", graph_file, "--B", "5", "--T", "30", "--repeats", "2")
    assert code == 0
    assert header(json.loads(out)["csv"]) == BENCHMARK_COLUMNS
    code, out, _ = run(capsys, "--out-dir", tmp_path, "--threads", "2", "multipath", "--graph", graph_file, "--B", "5", "--T", "20", "--snr", "5", "--k", "1", "2", "--trials", "2")
    assert code == 0
    rows = list(csv.DictReader(open(json.loads(out)["csv"])))
    assert header(json.loads(out)["csv"]) == MULTIPATH_COLUMNS and len(rows) == 2


def test_config_file_and_override(graph_file, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"graph": {"kind": "file", "path": str(graph_file)}, "T": 15, "trials": 2, "snrs": [5.0]}))
    code, out, _ = run(capsys, "--config", cfg, "--out-dir", tmp_path, "simulate", "--B", "5")
    assert code == 0
    rows = list(csv.DictReader(open(json.loads(out)["trials"])))
    assert rows[0]["T"] == "15" and rows[0]["m"] == "25"


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--graph", "does-not-exist.json"],
        ["simulate", "--snr", "-1"],
        ["simulate", "--T", "0"],
        ["partition", "file"],
    ],
)
def test_validation_errors_exit_2(argv, tmp_path, capsys):
    code, _, err = run(capsys, "--out-dir", tmp_path, *argv)
    assert code == 2 and err.startswith("error:")


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"T": 10, "nonsense": 1}')
    code, _, err = run(capsys, "--config", cfg, "simulate")
    assert code == 2 and "nonsense" in err


def test_budget_errors_exit_4(monkeypatch, tmp_path, capsys):
    def boom(args):
        raise BudgetError("too many walks")

    monkeypatch.setattr("pathloc.cli.cmd_benchmark", boom)
    import pathloc.cli as cli

    parser = cli.build_parser()
    args = parser.parse_args(["benchmark"])
    args.func = boom
    monkeypatch.setattr(cli, "build_parser", lambda: type("P", (), {"parse_args": lambda self, a: args})())
    assert cli.main([]) == 4


def test_help_documents_columns(capsys):
    with pytest.raises(SystemExit):
        main(["sweep", "--help"])
    assert "hammingCoarseMean" in capsys.readouterr().out
