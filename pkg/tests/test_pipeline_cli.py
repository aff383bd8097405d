import json
import subprocess
import sys

import pytest

from flowlens import __version__
from flowlens.cli import EXIT_ERROR, EXIT_MISSING_MODEL, main
from flowlens.errors import InvalidConfigError
from flowlens.pipeline import PipelineConfig, run_pipeline

PLANTED = {
    "n_users": 8,
    "n_domains": 6,
    "n_buildings": 4,
    "user_groups": [[0, 1, 2, 3], [4, 5, 6, 7]],
    "domain_groups": [[0, 1, 2], [3, 4, 5]],
    "location_groups": [[0, 1], [2, 3]],
    "cell_models": [
        {"user_group": 0, "domain_group": 0, "family": "POISSON", "params": {"rate": 2.0}},
        {"user_group": 1, "domain_group": 1, "family": "GAMMA", "params": {"shape": 2.0, "scale": 3.0}},
    ],
    "duration": 400,
    "seed": 3,
}


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    d = tmp_path_factory.mktemp("planted")
    (d / "planted.json").write_text(json.dumps(PLANTED))
    return d / "planted.json"


def small_config(tmp_path, planted, **over):
    cfg = {"out_dir": "out", "planted": str(planted), "k": 2, "l": 2, "n_init": 2, "layout_iters": 20}
    cfg.update(over)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def staged(tmp_path_factory, planted):
    """Every stage run one by one through the CLI."""
    d = tmp_path_factory.mktemp("staged")
    assert main(["generate", "--config", str(planted), "--out", str(d / "traces")]) == 0
    t = d / "traces"
    assert main(["ingest", "--flows", str(t / "flows.csv"), "--dhcp", str(t / "dhcp.csv"),
                 "--wlan", str(t / "wlan.csv"), "--domains", str(t / "domains.csv"), "--out", str(d)]) == 0
    for kind in ("domain", "building"):
        assert main(["fit", "--series", str(d), "--kind", kind, "--out", str(d / f"models_{kind}.json")]) == 0
    for mode in ("domain", "location"):
        assert main(["cocluster", "--flows", str(d / "enriched.jsonl"), "--mode", mode, "--k", "2", "--l", "2",
                     "--n-init", "2", "--out", str(d / f"cc_{mode}.json")]) == 0
    return d


def test_stages_write_their_outputs(staged):
    for name in ("enriched.jsonl", "series_domain.jsonl", "series_building.jsonl", "series_user.jsonl",
                 "drop_stats.json", "models_domain.json", "cc_domain.json", "cells_domain.jsonl",
                 "cells_location.jsonl"):
        assert (staged / name).stat().st_size > 0
    assert json.loads((staged / "drop_stats.json").read_text())["no_user"] == 0


def test_simgraph_stage(staged):
    assert main(["simgraph", "--series", str(staged / "series_domain.jsonl"), "--format", "json",
                 "--layout-iters", "10", "--out", str(staged / "graph")]) == 0
    assert list(staged.glob("graph*"))


def test_evaluate_stage(staged, capsys):
    code = main(["evaluate", "--series", str(staged),
                 "--models", str(staged / "models_domain.json"), str(staged / "models_building.json"),
                 "--cocluster", str(staged / "cc_domain.json"), str(staged / "cc_location.json"),
                 "--out", str(staged / "report.json"), "--text", str(staged / "report.txt")])
    assert code == 0
    rep = json.loads((staged / "report.json").read_text())
    assert rep["columns"] == ["DOMAIN", "LOCATION", "USER_DOMAIN_GROUPS", "USER_LOCATION_GROUPS"]
    assert "improvement" in capsys.readouterr().err


def test_missing_model_exit_code(staged, tmp_path):
    d = json.loads((staged / "cc_domain.json").read_text())
    d["cell_models"] = []
    (tmp_path / "cc_domain.json").write_text(json.dumps(d))
    (tmp_path / "cells_domain.jsonl").write_bytes((staged / "cells_domain.jsonl").read_bytes())
    code = main(["evaluate", "--series", str(staged), "--models", str(staged / "models_domain.json"),
                 "--cocluster", str(tmp_path / "cc_domain.json"), "--out", str(tmp_path / "r.json")])
    assert code == EXIT_MISSING_MODEL


def test_missing_input_exit_code(tmp_path):
    code = main(["ingest", "--flows", str(tmp_path / "nope.csv"), "--dhcp", "x", "--wlan", "y",
                 "--domains", "z", "--out", str(tmp_path)])
    assert code == EXIT_ERROR


def test_run_is_deterministic(tmp_path, planted):
    cfg = small_config(tmp_path, planted)
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    first = (out / "manifest.json").read_bytes()
    files = json.loads(first)["files"]
    assert "report.json" in files and "traces/flows.csv" in files
    assert all((out / name).exists() for name in files)
    assert main(["run", "--config", str(cfg), "--force"]) == 0
    assert (out / "manifest.json").read_bytes() == first


def test_seed_changes_the_traces(tmp_path, planted):
    digests = []
    for name, seed in (("a", None), ("b", 99)):
        (tmp_path / name).mkdir()
        manifest = run_pipeline(PipelineConfig.load(small_config(tmp_path / name, planted, seed=seed)))
        digests.append(json.loads(manifest.read_text())["files"]["traces/flows.csv"])
    assert digests[0] != digests[1]


def test_non_empty_out_dir_needs_force(tmp_path, planted):
    cfg = small_config(tmp_path, planted)
    (tmp_path / "out").mkdir()
    (tmp_path / "out" / "keep.txt").write_text("x")
    assert main(["run", "--config", str(cfg)]) == EXIT_ERROR
    assert (tmp_path / "out" / "keep.txt").exists()


def test_unknown_config_key(tmp_path, planted):
    with pytest.raises(InvalidConfigError):
        PipelineConfig.load(small_config(tmp_path, planted, kk=3))
    assert main(["run", "--config", str(small_config(tmp_path, planted, kk=3))]) == EXIT_ERROR


@pytest.mark.parametrize("over", [{"alpha": 1.5}, {"k": 0}, {"graph_formats": ["gexf"]}, {"metric": "packets"}])
def test_invalid_config_values(tmp_path, planted, over):
    with pytest.raises(InvalidConfigError):
        PipelineConfig.load(small_config(tmp_path, planted, **over)).validate()


def test_needs_traces_or_planted(tmp_path):
    with pytest.raises(InvalidConfigError):
        PipelineConfig.from_dict({"out_dir": "o", "flows": "f.csv"}).validate()
    with pytest.raises(InvalidConfigError):
        PipelineConfig.from_dict({"planted": "p.json"})


def test_relative_paths_follow_the_config_file(tmp_path):
    (tmp_path / "sub").mkdir()
    path = tmp_path / "sub" / "run.json"
    path.write_text(json.dumps({"out_dir": "out", "planted": "p.json", "flows": "/abs/f.csv"}))
    cfg = PipelineConfig.load(path)
    assert cfg.out_dir == str(tmp_path / "sub" / "out")
    assert cfg.planted == str(tmp_path / "sub" / "p.json")
    assert cfg.flows == "/abs/f.csv"


def test_missing_config_file(tmp_path):
    with pytest.raises(InvalidConfigError):
        PipelineConfig.load(tmp_path / "absent.json")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "flowlens", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert __version__ in res.stdout


def test_unknown_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
