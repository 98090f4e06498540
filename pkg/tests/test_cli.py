import filecmp
import os
import shutil
import subprocess
import sys

import pytest
import yaml

from distress_bench import cli
from distress_bench.errors import ManifestError, NumericalError
from distress_bench.manifest import RunManifest

HERE = os.path.dirname(__file__)
TINY = os.path.join(HERE, "data", "tiny.yaml")
GOLDEN = os.path.join(HERE, "golden")
REGEN = os.environ.get("DISTRESS_BENCH_REGEN_GOLDEN") == "1"

EXPECTED = {
    "synth": ["synth/panel.csv", "synth/panel.manifest.yaml"],
    "features": ["features/panel.csv", "features/build.csv"],
    "benchmark": ["benchmark/table2.csv", "benchmark/forecasts.csv", "benchmark/tuning.csv",
                  "benchmark/roc.csv", "benchmark/roc.png"],
    "importance": ["importance/importance.csv", "importance/ranking.csv",
                   "importance/heatmap.png"],
    "reduce": ["reduce/table4.csv"],
    "credit-sim": ["credit/table5.csv"],
    "report": ["report/table1.csv", "report/correlations.csv", "report/correlations.png",
               "report/defaults_by_year.csv"],
}


def write_manifest(tmp_path, **changes):
    with open(TINY) as fh:
        doc = yaml.safe_load(fh)
    doc.update(changes)
    path = tmp_path / "m.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    for cmd in EXPECTED:
        assert cli.main([cmd, "--manifest", TINY, "--out", str(out)]) == 0
    return out


@pytest.mark.parametrize("cmd", list(EXPECTED))
def test_command_outputs_exist(tiny_run, cmd):
    for rel in EXPECTED[cmd]:
        assert (tiny_run / rel).stat().st_size > 0


def golden_files():
    return sorted(rel for files in EXPECTED.values() for rel in files if rel.endswith(".csv"))


@pytest.mark.parametrize("rel", golden_files())
def test_outputs_match_golden(tiny_run, rel):
    target = os.path.join(GOLDEN, rel)
    if REGEN:
        os.makedirs(os.path.dirname(target), exist_ok=True)
        shutil.copyfile(tiny_run / rel, target)
    assert filecmp.cmp(tiny_run / rel, target, shallow=False), rel


def test_png_files_are_png(tiny_run):
    for rel in ("benchmark/roc.png", "importance/heatmap.png", "report/correlations.png"):
        assert (tiny_run / rel).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_table_layouts(tiny_run):
    t2 = (tiny_run / "benchmark/table2.csv").read_text().splitlines()
    assert t2[0] == "period,algorithm,structural,all"
    assert len(t2) == 1 + 2 * 4
    t4 = (tiny_run / "reduce/table4.csv").read_text().splitlines()
    assert t4[0] == "method,LASSO,XG Boost,RF Survival,NN3"
    assert [r.split(",")[0] for r in t4[1:]] == ["reduced_predictors", "pca"]
    shares = [float(r.split(",")[4]) for r in (tiny_run / "credit/table5.csv").read_text()
              .splitlines()[1:]]
    assert sum(shares) == pytest.approx(100.0, abs=0.05)


def test_invalid_key_exits_2_without_outputs(tmp_path, capsys):
    path = write_manifest(tmp_path, colour="blue")
    out = tmp_path / "out"
    assert cli.main(["benchmark", "--manifest", path, "--out", str(out)]) == 2
    assert not out.exists()
    err = capsys.readouterr().err
    assert err.startswith("distress-bench: error[manifest]:") and "colour" in err


def test_missing_manifest_and_bad_threads(tmp_path, capsys):
    assert cli.main(["report", "--manifest", str(tmp_path / "none.yaml")]) == 2
    assert cli.main(["report", "--manifest", TINY, "--threads", "0"]) == 2


def test_data_error_exits_3(tmp_path, capsys):
    path = write_manifest(tmp_path, data={"panel": "missing.manifest.yaml"})
    # a missing data manifest is a configuration problem
    assert cli.main(["report", "--manifest", path, "--out", str(tmp_path / "o")]) == 2
    (tmp_path / "p.manifest.yaml").write_text(
        "path: nowhere.csv\nfeatures: [{column: a, name: a, group: market}]\n")
    path = write_manifest(tmp_path, data={"panel": "p.manifest.yaml"})
    assert cli.main(["report", "--manifest", path, "--out", str(tmp_path / "o")]) == 3
    assert "error[data]" in capsys.readouterr().err


def test_numerical_error_exits_4(tmp_path, monkeypatch, capsys):
    def boom(run):
        raise NumericalError("solver diverged")
    monkeypatch.setitem(cli.HANDLERS, "report", boom)
    assert cli.main(["report", "--manifest", TINY, "--out", str(tmp_path)]) == 4
    assert capsys.readouterr().err.strip() == "distress-bench: error[numerical]: solver diverged"


def test_output_directory_resolution(tmp_path, monkeypatch):
    m = RunManifest.load(TINY)
    args = cli.build_parser().parse_args(["report", "--manifest", TINY])
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    assert cli.resolve_out(args, m) == os.path.normpath(os.path.join(HERE, "..", "out", "tiny"))
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.resolve_out(args, m) == str(tmp_path / "env")
    args = cli.build_parser().parse_args(["report", "--manifest", TINY, "--out", str(tmp_path)])
    assert cli.resolve_out(args, m) == str(tmp_path)


def test_threads_do_not_change_outputs(tmp_path):
    for threads in ("1", "3"):
        assert cli.main(["benchmark", "--manifest", TINY, "--threads", threads,
                         "--out", str(tmp_path / threads)]) == 0
    cmp = filecmp.dircmp(tmp_path / "1" / "benchmark", tmp_path / "3" / "benchmark")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "1" / "benchmark", tmp_path / "3" / "benchmark",
                                           cmp.common_files, shallow=False)
    assert not mismatch and not errors


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "distress_bench.cli", "synth", "--manifest", TINY,
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "distress_bench.cli", "fly", "--manifest", TINY],
                          capture_output=True, text=True)
    assert proc.returncode == 2


# ---------------------------------------------------------------------------
# manifest validation


@pytest.mark.parametrize("change,match", [
    ({"version": 2}, "version"),
    ({"algorithms": ["lasso", "svm"]}, "svm"),
    ({"algorithms": []}, "non-empty"),
    ({"grids": {"lasso": {"alpha": [1]}}}, "alpha"),
    ({"grids": {"lasso": {"lam": []}}}, "non-empty"),
    ({"stages": [{"name": "s", "groups": ["astrology"]}]}, "astrology"),
    ({"stages": [{"name": "s"}]}, "exactly one"),
    ({"years": {"first_data_year": 1995, "first_test_year": 1996, "last_test_year": 1999}},
     "first_data_year"),
    ({"periods": ["roaring_twenties"]}, "roaring"),
    ({"credit": {"k": 0.01, "k_by_year": {2000: 0.01}}}, "either"),
    ({"importance": {"on": "train"}}, "importance.on"),
    ({"reduce": {"pca_threshold": 1.5}}, "pca_threshold"),
    ({"data": {"raw": {"path": "x", "synthesize": {}}}}, "exactly one"),
    ({"data": {"synthetic": {"seed": 1, "base_hazard": 0.9}}}, "base_hazard"),
])
def test_manifest_rejections(tmp_path, change, match):
    with pytest.raises(ManifestError, match=match):
        RunManifest.load(write_manifest(tmp_path, **change))


def test_bundled_manifest_loads():
    m = RunManifest.load(os.path.join(HERE, "..", "configs", "synthetic.yaml"))
    assert len(m.algorithms) == 8 and [s.name for s in m.stages][-1] == "all"
