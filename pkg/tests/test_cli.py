import csv
import json
import shutil

import pytest

from qtorus.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from qtorus.config import ConfigError, parse_config
from qtorus.runner import MANIFEST, RunManifest, compare_baseline, run_experiment, sha256_file

MINIMAL = """
experiment: spectrum
map:
  matrix: [[2, 1], [3, 2]]
N: [64]
"""


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfig:
    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        assert cfg.experiment == "spectrum" and cfg.N == [64]
        assert cfg.seeds.lyapunov == 0 and cfg.seeds.states == 0
        assert cfg.map.build().linear.array.tolist() == [[2, 1], [3, 2]]

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="patrition: unknown key"):
            parse_config(MINIMAL + "patrition: {kind: halves}\n")

    def test_string_amplitude(self):
        with pytest.raises(ConfigError, match="map.kick.amplitude"):
            parse_config(MINIMAL.replace("matrix: [[2, 1], [3, 2]]", "kick: {amplitude: '0.05'}"))

    def test_non_symplectic_fails_semantic_check(self):
        with pytest.raises(ConfigError, match="map"):
            parse_config("experiment: spectrum\nmap: {matrix: [[2, 1], [1, 2]]}\n")

    def test_exponent_floats(self):
        cfg = parse_config(MINIMAL + "params: {prune: 1e-10}\nclock: {epsilon: 1E-1}\n")
        assert cfg.params.prune == 1e-10 and cfg.clock.epsilon == 0.1

    def test_malformed(self):
        with pytest.raises(ConfigError):
            parse_config("experiment: [unclosed")

    def test_resolved_has_defaults(self):
        resolved = parse_config(MINIMAL).resolved()
        assert resolved["clock"]["epsilon"] == 0.1
        assert resolved["partition"]["kind"] == "halves"

    def test_kick_table(self):
        spec = parse_config(
            "experiment: spectrum\nmap: {kick: {form: position, coefficients: {'1,0': 0.05, '-1,0': 0.05}}}\n"
        ).map.build()
        assert spec.kick.coefficients[(1, 0)] == 0.05


class TestRun:
    def test_spectrum_files_and_manifest(self, tmp_path):
        cfg = parse_config("experiment: spectrum\nN: [16, 32]\n")
        m = run_experiment(cfg, tmp_path / "out")
        assert m.ok
        files = {p.name for p in (tmp_path / "out").iterdir()}
        assert {"spectrum_N16.csv", "spectrum_N32.csv", MANIFEST, "config.resolved.yaml"} <= files
        # every other file is listed with its digest
        assert files - {MANIFEST} == set(m.files)
        for name, digest in m.files.items():
            assert sha256_file(tmp_path / "out" / name) == digest

    def test_determinism(self, tmp_path):
        cfg = parse_config("experiment: entropy-bound\nmap: {kick: {amplitude: 0.05}}\nN: [32]\n")
        a = run_experiment(cfg, tmp_path / "a")
        b = run_experiment(cfg, tmp_path / "b")
        assert a.files == b.files

    def test_eup_file_contract(self, tmp_path):
        cfg = parse_config(
            "experiment: eup\nmap: {kick: {amplitude: 0.05}}\nN: [128]\nparams: {random_states: 20}\n"
        )
        m = run_experiment(cfg, tmp_path)
        assert m.ok, [t.message for t in m.tasks]
        assert {"eup_level1.csv", "eup_level2.csv"} <= set(m.files)
        with open(tmp_path / "eup_level2.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 128
        assert min(float(r["slack"]) for r in rows) >= -1e-8

    def test_entropy_bound_trend(self, tmp_path):
        cfg = parse_config("experiment: entropy-bound\nmap: {kick: {amplitude: 0.05}}\nN: [64, 128]\n")
        m = run_experiment(cfg, tmp_path)
        assert {"entropy_bound_N64.csv", "entropy_bound_N128.csv", "entropy_bound_trend.json"} <= set(m.files)
        trend = json.loads((tmp_path / "entropy_bound_trend.json").read_text())
        assert trend

    def test_classical_entropy(self, tmp_path):
        cfg = parse_config(
            "experiment: classical-entropy\npartition: {kind: grid, nx: 2, nxi: 2}\n"
            "params: {samples: 50000, depth: 3}\n"
        )
        m = run_experiment(cfg, tmp_path)
        assert m.ok and "classical_entropy.csv" in m.files


class TestDiff:
    @pytest.fixture
    def run(self, tmp_path):
        cfg = parse_config("experiment: spectrum\nN: [16]\n")
        run_experiment(cfg, tmp_path / "run")
        return tmp_path / "run"

    def test_identical(self, run, tmp_path):
        shutil.copytree(run, tmp_path / "base")
        assert compare_baseline(run / MANIFEST, tmp_path / "base").ok

    def test_new_file(self, run, tmp_path):
        shutil.copytree(run, tmp_path / "base")
        (tmp_path / "base" / "spectrum_N16.csv").unlink()
        report = compare_baseline(run / MANIFEST, tmp_path / "base")
        assert [f.status for f in report.files if f.name == "spectrum_N16.csv"] == ["new"]

    def _perturb(self, path, delta):
        with open(path) as fh:
            rows = list(csv.reader(fh))
        rows[1][1] = repr(float(rows[1][1]) + delta)
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)

    def test_eigenphase_tolerance(self, run, tmp_path):
        shutil.copytree(run, tmp_path / "base")
        self._perturb(tmp_path / "base" / "spectrum_N16.csv", 5e-9)
        assert compare_baseline(run / MANIFEST, tmp_path / "base").ok
        self._perturb(tmp_path / "base" / "spectrum_N16.csv", 1e-6)
        assert not compare_baseline(run / MANIFEST, tmp_path / "base").ok

    def test_monte_carlo_columns_use_standard_error(self, tmp_path):
        cfg = parse_config(
            "experiment: classical-entropy\npartition: {kind: grid, nx: 2, nxi: 2}\n"
            "params: {samples: 20000, depth: 3}\n"
        )
        run_experiment(cfg, tmp_path / "a")
        b = parse_config(cfg.model_dump_json().replace('"sampling":0', '"sampling":1'))
        run_experiment(b, tmp_path / "b")
        report = compare_baseline(tmp_path / "a" / MANIFEST, tmp_path / "b")
        entropy = [f for f in report.files if f.name == "classical_entropy.csv"][0]
        assert entropy.status == "same", entropy.details


class TestMain:
    def test_validate(self, tmp_path, capsys):
        assert main(["validate", str(write(tmp_path, MINIMAL))]) == EXIT_OK
        assert "experiment: spectrum" in capsys.readouterr().out

    def test_config_error_exit(self, tmp_path, capsys):
        assert main(["validate", str(write(tmp_path, MINIMAL + "patrition: 1\n"))]) == EXIT_CONFIG
        assert "patrition" in capsys.readouterr().err
        assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG

    def test_run_and_diff(self, tmp_path):
        cfg = write(tmp_path, "experiment: spectrum\nN: [8]\n")
        assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == EXIT_OK
        shutil.copytree(tmp_path / "out", tmp_path / "base")
        assert main(["diff", str(tmp_path / "out" / MANIFEST), str(tmp_path / "base")]) == EXIT_OK
        (tmp_path / "base" / "spectrum_N8.csv").write_text("index,eigenphase,residual\n")
        assert main(["diff", str(tmp_path / "out" / MANIFEST), str(tmp_path / "base")]) == EXIT_NUMERIC

    def test_numeric_failure_exit(self, tmp_path):
        # an Egorov time beyond n_max fails inside the task
        cfg = write(tmp_path, "experiment: egorov\nN: [16]\nclock: {n_max: 2}\nparams: {t_list: [1, 5], frequency_cutoff: 1}\n")
        assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == EXIT_NUMERIC
        m = RunManifest.load(tmp_path / "out" / MANIFEST)
        assert not m.ok
