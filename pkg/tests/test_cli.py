import csv
import io
import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from drtecm import pipeline, synthetic
from drtecm.cli import EXIT_INVALID, EXIT_OK, EXIT_USAGE, main
from drtecm.config import PipelineConfig, load_config, parse_config_text
from drtecm.errors import ConfigurationError, DrtEcmWarning
from drtecm.io import format_eis_csv, format_ocv_csv, format_profile_csv, read_model
from drtecm.profiles import generate_dynamic_profile

BUNDLE = pipeline.bundled_dataset()
COMPARED = ["preprocessed.csv", "peaks.csv", "model.json", "rmse_report.csv"]


def run(*argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DrtEcmWarning)
        return main([str(a) for a in argv])


def outputs(d):
    d = Path(d)
    files = COMPARED + sorted(p.name for p in d.glob("sim_*.csv"))
    files += sorted("drt/" + p.name for p in (d / "drt").glob("*"))
    return {f: (d / f).read_bytes() for f in files}


@pytest.fixture(scope="module")
def run_all_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run_all")
    assert run("run-all", "--bundled", "--out", out) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def small_files(tmp_path_factory):
    """One 20 C spectrum set (3 SoC) with a series R||L, its OCV curve and a short profile."""
    d = tmp_path_factory.mktemp("small")
    model = synthetic.reference_model()
    spectra = [synthetic.spectrum(model, s, 20.0, inductance=20e-9, r_parallel=1e-3, cell_id="cell1")
               for s in (0.2, 0.5, 0.8)]
    (d / "eis.csv").write_text(format_eis_csv(spectra))
    (d / "ocv.csv").write_text(format_ocv_csv([synthetic.ocv_curve(20.0, cell_id="cell1")]))
    (d / "profile.csv").write_text(format_profile_csv(generate_dynamic_profile([0.5], temperature=20.0)))
    rng = np.random.default_rng(3)
    bad = [s.with_impedance(s.impedance * (1 + 0.02 * rng.uniform(-1, 1, len(s)))) for s in spectra]
    (d / "bad.csv").write_text(format_eis_csv(bad))
    return d


class TestRunAll:
    def test_model_and_report(self, run_all_dir):
        model = read_model((run_all_dir / "model.json").read_text())
        assert model.n_parameters == 13
        report = json.loads((run_all_dir / "report.json").read_text())
        assert report["n_parameters"] == 13
        assert len(report["validation"]) == 5
        assert all(r["rmse_mv"] < 5.0 for r in report["validation"])

    def test_manifest(self, run_all_dir):
        m = json.loads((run_all_dir / "manifest_run-all.json").read_text())
        assert m["config"]["lam"] == 1e-5
        assert m["tool_version"]
        assert any(k.endswith("eis.csv") for k in m["inputs"])

    def test_equals_manual_chain(self, run_all_dir, tmp_path):
        out = tmp_path
        eis, ocv = BUNDLE / "eis.csv", BUNDLE / "ocv.csv"
        assert run("validate", "--eis", eis, "--out", out) == EXIT_OK
        assert run("preprocess", "--eis", eis, "--out", out) == EXIT_OK
        assert run("drt", "--eis", out / "preprocessed.csv", "--ocv", ocv, "--out", out) == EXIT_OK
        assert run("extract", "--drt", out / "drt", "--out", out) == EXIT_OK
        assert run("build", "--peaks", out / "peaks.csv", "--ocv", ocv, "--out", out / "model.json") == EXIT_OK
        for name, prof, soc0, ref in pipeline.discover_profiles(BUNDLE):
            sim = out / f"sim_{name}.csv"
            assert run("simulate", "--model", out / "model.json", "--profile", prof, "--soc0", soc0,
                       "--out", sim) == EXIT_OK
            assert run("evaluate", "--sim", sim, "--ref", ref, "--name", name,
                       "--report", out / "rmse_report.csv") == EXIT_OK
        a, b = outputs(run_all_dir), outputs(out)
        assert a.keys() == b.keys()
        for k in a:
            assert a[k] == b[k], k

    def test_rerun_bit_identical_with_threads(self, run_all_dir, tmp_path, monkeypatch):
        monkeypatch.setenv(pipeline.THREADS_ENV, "4")
        assert run("run-all", "--bundled", "--out", tmp_path) == EXIT_OK
        assert outputs(run_all_dir) == outputs(tmp_path)
        assert (run_all_dir / "report.json").read_bytes() == (tmp_path / "report.json").read_bytes()


class TestExitCodes:
    def test_drt_on_raw_data(self, small_files, tmp_path):
        assert run("drt", "--eis", small_files / "eis.csv", "--out", tmp_path) == EXIT_USAGE

    def test_drt_allow_raw(self, small_files, tmp_path):
        assert run("drt", "--eis", small_files / "eis.csv", "--allow-raw", "--out", tmp_path) == EXIT_OK

    def test_simulate_needs_initial_state(self, run_all_dir, small_files, tmp_path):
        assert run("simulate", "--model", run_all_dir / "model.json", "--profile", small_files / "profile.csv",
                   "--out", tmp_path / "s.csv") == EXIT_USAGE

    def test_kk_failure(self, small_files, tmp_path):
        assert run("validate", "--eis", small_files / "bad.csv", "--out", tmp_path) == EXIT_INVALID
        assert run("validate", "--eis", small_files / "eis.csv", "--out", tmp_path / "ok") == EXIT_OK

    def test_run_all_kk_failure(self, small_files, tmp_path):
        assert run("run-all", "--eis", small_files / "bad.csv", "--ocv", small_files / "ocv.csv",
                   "--out", tmp_path) == EXIT_INVALID

    def test_missing_input(self, tmp_path):
        assert run("validate", "--eis", tmp_path / "nope.csv", "--out", tmp_path) == EXIT_USAGE

    def test_unknown_command(self):
        assert run("frobnicate") == EXIT_USAGE

    def test_bad_threads(self, small_files, tmp_path, monkeypatch):
        monkeypatch.setenv(pipeline.THREADS_ENV, "many")
        assert run("validate", "--eis", small_files / "eis.csv", "--out", tmp_path) == EXIT_USAGE
        monkeypatch.setenv(pipeline.THREADS_ENV, "0")
        assert run("validate", "--eis", small_files / "eis.csv", "--out", tmp_path) == EXIT_USAGE


@pytest.fixture(scope="module")
def preprocessed(small_files, tmp_path_factory):
    out = tmp_path_factory.mktemp("pre")
    assert run("preprocess", "--eis", small_files / "eis.csv", "--out", out) == EXIT_OK
    return out


class TestStages:
    def test_drt_echoes_lambda(self, preprocessed, small_files, tmp_path, capsys):
        code = run("drt", "--eis", preprocessed / "preprocessed.csv", "--ocv", small_files / "ocv.csv",
                   "--lambda", "1e-5", "--out", tmp_path)
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "drt_summary.json").read_text())
        assert summary["lambda"] == 1e-5
        assert json.loads(capsys.readouterr().out)["lambda"] == 1e-5

    def test_config_file_and_flag_override(self, preprocessed, tmp_path):
        cfg = tmp_path / "pipeline.cfg"
        cfg.write_text("# test config\nlam = 1e-3\npoints_per_decade = 8\n")
        out = tmp_path / "a"
        assert run("drt", "--eis", preprocessed / "preprocessed.csv", "--config", cfg, "--out", out) == EXIT_OK
        summary = json.loads((out / "drt_summary.json").read_text())
        assert summary["lambda"] == 1e-3
        manifest = json.loads((out / "manifest_drt.json").read_text())
        assert manifest["config"]["points_per_decade"] == 8
        out = tmp_path / "b"
        assert run("drt", "--eis", preprocessed / "preprocessed.csv", "--config", cfg, "--lambda", "1e-4",
                   "--out", out) == EXIT_OK
        assert json.loads((out / "drt_summary.json").read_text())["lambda"] == 1e-4

    def test_config_unknown_key(self, preprocessed, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("lamda = 1e-3\n")
        assert run("drt", "--eis", preprocessed / "preprocessed.csv", "--config", cfg,
                   "--out", tmp_path) == EXIT_USAGE

    def test_plot_writes_svg(self, small_files, tmp_path):
        pytest.importorskip("matplotlib")
        assert run("preprocess", "--eis", small_files / "eis.csv", "--out", tmp_path, "--plot") == EXIT_OK
        svg = (tmp_path / "nyquist.svg").read_text()
        assert svg.lstrip().startswith("<?xml") and "<svg" in svg

    def test_simulate_output_columns(self, run_all_dir, small_files, tmp_path):
        out = tmp_path / "sim.csv"
        assert run("simulate", "--model", run_all_dir / "model.json", "--profile", small_files / "profile.csv",
                   "--voc0", "3.7", "--ts", "2", "--out", out) == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert list(rows[0]) == list(pipeline.SIM_COLUMNS)
        assert float(rows[1]["time_s"]) == 2.0
        assert float(rows[0]["v_oc_v"]) == 3.7

    def test_evaluate_upserts(self, run_all_dir, tmp_path):
        sim = run_all_dir / "sim_dynamic_20C.csv"
        ref = BUNDLE / "reference_dynamic_20C.csv"
        report = tmp_path / "r.csv"
        for _ in range(2):
            assert run("evaluate", "--sim", sim, "--ref", ref, "--name", "x", "--report", report) == EXIT_OK
        assert run("evaluate", "--sim", sim, "--ref", ref, "--name", "y", "--report", report) == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(report.read_text())))
        assert [r["name"] for r in rows] == ["x", "y"]


class TestConfig:
    def test_defaults(self):
        c = PipelineConfig()
        assert c.lam == 1e-5
        assert c.ladder_size == 5
        assert c.inductance_mode == "subtract_rl"

    def test_parse_types(self):
        d = parse_config_text("lam = lcurve\nextension_decades = 1.5\npeak_count = 4  # inline\n")
        assert d == {"lam": "lcurve", "extension_decades": (1.5, 1.5), "peak_count": 4}

    @pytest.mark.parametrize("text", ["lam = -1", "inductance_mode = cut", "timestep = fast", "unknown = 1",
                                      "peak_count = many"])
    def test_rejects(self, text, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text(text + "\n")
        with pytest.raises(ConfigurationError):
            load_config(p)

    def test_override_wins(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("timestep = 2\nladder_size = 3\n")
        c = load_config(p, {"timestep": 0.5, "ladder_size": None})
        assert (c.timestep, c.ladder_size) == (0.5, 3)
