"""Configuration and CLI tests: units, INI parsing, CSV contracts, exits."""
import math
import pathlib

import pytest

from eepareto.cli import main
from eepareto.config import (
    ConfigurationError,
    dbm_to_watts,
    load_config,
    parse_power,
)
from eepareto.model import generate_channels
from eepareto.pareto import pc_zero_point

BASE = """\
[scenario]
links = 2
antennas = 2
eta = 0.38
circuit_power = 1 W
noise = 1 W
power_cap = 10 W
bandwidth = 1.0
seed = 0
cross_gain = 0.3

[sweep]
grid_size = 4
eps = 1e-6

[output]
prefix = run
"""


def write_config(tmp_path, text=BASE, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestUnits:
    def test_dbm_conversion(self):
        assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-15)
        assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-12)
        assert dbm_to_watts(43.0) == pytest.approx(19.952623149688797,
                                                   rel=1e-12)

    def test_parse_power_units(self):
        assert parse_power("294.5 W", "x") == 294.5
        assert parse_power("0 dBm", "x") == pytest.approx(1e-3)
        assert parse_power("1e-3 W", "x") == 1e-3
        assert parse_power("inf W", "x", allow_inf=True) == math.inf

    def test_parse_power_errors(self):
        with pytest.raises(ConfigurationError):
            parse_power("294.5", "x")  # missing unit
        with pytest.raises(ConfigurationError):
            parse_power("ten W", "x")
        with pytest.raises(ConfigurationError):
            parse_power("-3 W", "x")
        with pytest.raises(ConfigurationError):
            parse_power("inf W", "x")  # inf not allowed by default
        with pytest.raises(ConfigurationError):
            parse_power("0 W", "x", allow_zero=False)
        with pytest.raises(ConfigurationError):
            parse_power("3 J", "x")


class TestLoadConfig:
    def test_base_round_trip(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.scenario.links == 2
        assert cfg.scenario.antennas == (2, 2)
        assert cfg.scenario.circuit_power == 1.0
        assert cfg.scenario.power_cap == (10.0, 10.0)
        assert cfg.sweep.grid_size == 4
        assert cfg.prefix == "run"
        assert len(cfg.config_hash) == 16
        sc = cfg.scenario.build()
        assert sc.num_links == 2 and sc.power_caps == (10.0, 10.0)

    def test_shipped_profiles_parse(self):
        root = pathlib.Path(__file__).resolve().parents[1] / "profiles"
        desk = load_config(str(root / "desk.ini"))
        assert desk.verify.n_angle == 32 and desk.prefix == "desk"
        macro = load_config(str(root / "macrocell.ini"))
        assert macro.scenario.power_cap[0] == pytest.approx(
            19.952623149688797, rel=1e-12)
        assert macro.scenario.bandwidth == 5e6
        pcz = load_config(str(root / "pczero.ini"))
        assert pcz.scenario.circuit_power == 0.0
        assert pcz.sweep.eps == 1e-12

    def test_antenna_list_broadcast(self, tmp_path):
        cfg = load_config(write_config(
            tmp_path, BASE.replace("antennas = 2", "antennas = 2, 3")))
        assert cfg.scenario.antennas == (2, 3)

    def test_unknown_key_rejected(self, tmp_path):
        bad = BASE.replace("cross_gain = 0.3", "crossgain = 0.3")
        with pytest.raises(ConfigurationError):
            load_config(write_config(tmp_path, bad))

    def test_unknown_section_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(write_config(tmp_path, BASE + "\n[plotting]\nx = 1\n"))

    def test_missing_required_key_rejected(self, tmp_path):
        bad = BASE.replace("seed = 0\n", "")
        with pytest.raises(ConfigurationError):
            load_config(write_config(tmp_path, bad))

    def test_mismatched_list_length_rejected(self, tmp_path):
        bad = BASE.replace("antennas = 2", "antennas = 2, 2, 2")
        with pytest.raises(ConfigurationError):
            load_config(write_config(tmp_path, bad))

    def test_bad_eta_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(write_config(
                tmp_path, BASE.replace("eta = 0.38", "eta = 1.7")))

    def test_distributed_init_parsing(self, tmp_path):
        text = BASE + "\n[distributed]\ninit = 0.1, 0.2\nmax_rounds = 3\n"
        cfg = load_config(write_config(tmp_path, text))
        assert cfg.distributed.init == "0.1, 0.2"
        with pytest.raises(ConfigurationError):
            load_config(write_config(
                tmp_path, BASE + "\n[distributed]\ninit = mrt\n"))


def read_lines(path):
    with open(path, "rb") as fh:
        return fh.read().decode("utf-8").splitlines()


class TestSweepCommand:
    def test_row_counts_and_columns(self, tmp_path):
        cfg = write_config(tmp_path)
        out = str(tmp_path / "run")
        assert main(["sweep", "--config", cfg, "--out", out]) == 0
        lines = read_lines(out + "_boundary.csv")
        assert lines[0].startswith("# config=")
        assert "seed=0" in lines[0]
        header = lines[1].split(",")
        assert header[:4] == ["it_0_1", "it_1_0", "ee_0", "ee_1"]
        assert len(lines) == 2 + 16  # provenance, header, 4x4 grid
        closure = read_lines(out + "_closure.csv")
        assert closure[1] == lines[1]
        assert 1 <= len(closure) - 2 <= 16
        # closure rows are a subset of boundary rows
        assert set(closure[2:]) <= set(lines[2:])

    def test_byte_determinism(self, tmp_path):
        cfg = write_config(tmp_path)
        a = str(tmp_path / "a")
        b = str(tmp_path / "b")
        assert main(["sweep", "--config", cfg, "--out", a]) == 0
        assert main(["sweep", "--config", cfg, "--out", b]) == 0
        for suffix in ("_boundary.csv", "_closure.csv"):
            with open(a + suffix, "rb") as fa, open(b + suffix, "rb") as fb:
                assert fa.read() == fb.read()

    def test_seed_override_changes_the_data(self, tmp_path):
        cfg = write_config(tmp_path)
        a = str(tmp_path / "a")
        b = str(tmp_path / "b")
        assert main(["sweep", "--config", cfg, "--out", a]) == 0
        assert main(["sweep", "--config", cfg, "--seed", "9", "--out", b]) == 0
        la = read_lines(a + "_boundary.csv")
        lb = read_lines(b + "_boundary.csv")
        assert "seed=9" in lb[0]
        assert la[2:] != lb[2:]

    def test_zero_circuit_power_closure_is_one_row(self, tmp_path):
        text = BASE.replace("circuit_power = 1 W", "circuit_power = 0 W")
        text = text.replace("eps = 1e-6", "eps = 1e-12")
        text = text.replace("antennas = 2", "antennas = 3")
        text = text.replace("seed = 0", "seed = 3")
        cfg = write_config(tmp_path, text)
        out = str(tmp_path / "pcz")
        assert main(["sweep", "--config", cfg, "--out", out]) == 0
        assert len(read_lines(out + "_closure.csv")) == 3


class TestDistributedCommand:
    def test_trajectory_schema(self, tmp_path):
        text = BASE + "\n[distributed]\nmax_rounds = 120\n"
        cfg = write_config(tmp_path, text)
        out = str(tmp_path / "run")
        assert main(["distributed", "--config", cfg, "--out", out]) == 0
        lines = read_lines(out + "_trajectory.csv")
        assert lines[1].split(",") == [
            "round", "it_0_1", "it_1_0", "ee_0", "ee_1",
            "det_0_1", "delta_0_1", "converged",
        ]
        rows = [ln.split(",") for ln in lines[2:]]
        assert [r[0] for r in rows] == [str(i) for i in range(len(rows))]
        # converged is only flagged on the final row
        assert {r[-1] for r in rows[:-1]} <= {"0"}
        assert rows[-1][-1] == "1"

    def test_zero_delta_freezes_the_levels(self, tmp_path):
        text = BASE + "\n[distributed]\ndelta = 0 W\nmax_rounds = 3\n"
        cfg = write_config(tmp_path, text)
        out = str(tmp_path / "frozen")
        assert main(["distributed", "--config", cfg, "--out", out]) == 0
        lines = read_lines(out + "_trajectory.csv")
        rows = [ln.split(",") for ln in lines[2:]]
        assert len(rows) == 4
        assert len({(r[3], r[4]) for r in rows}) == 1


class TestSpecialCommand:
    def test_matches_the_analytic_point(self, tmp_path):
        text = BASE.replace("circuit_power = 1 W", "circuit_power = 0 W")
        text = text.replace("seed = 0", "seed = 3")
        text = text.replace("antennas = 2", "antennas = 3")
        cfg = write_config(tmp_path, text)
        out = str(tmp_path / "sp")
        assert main(["special", "--config", cfg, "--out", out]) == 0
        lines = read_lines(out + "_special.csv")
        assert lines[1] == "link,ee_bits_per_joule"
        sc = generate_channels(3, 2, (3, 3), cross_gain=0.3, noise=1.0,
                               power_caps=10.0, circuit_power=0.0,
                               amp_efficiency=0.38)
        point, _ = pc_zero_point(sc)
        got = [float(ln.split(",")[1]) for ln in lines[2:]]
        assert got == [point[0], point[1]]

    def test_rejects_positive_circuit_power(self, tmp_path):
        cfg = write_config(tmp_path)
        out = str(tmp_path / "sp")
        assert main(["special", "--config", cfg, "--out", out]) == 1


class TestVerifyCommand:
    VERIFY = (
        BASE
        + "\n[verify]\nn_angle = 16\nn_power = 16\ngrid_size = 6\n"
        + "instances = 2\neps = 1e-8\ncloud_tol = 0.1\n"
    )

    def test_all_checks_pass(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.VERIFY)
        out = str(tmp_path / "v")
        assert main(["verify", "--config", cfg, "--out", out]) == 0
        text = "\n".join(read_lines(out + "_verify.txt"))
        assert "FAIL" not in text
        for name in ("bisection-residual", "dual-grid", "projected-gradient",
                     "finite-difference", "cloud-dominance"):
            assert "PASS %s" % name in text

    def test_corrupted_tolerance_fails_with_replay(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.VERIFY.replace("eps = 1e-8",
                                                         "eps = 1.0"))
        out = str(tmp_path / "v")
        assert main(["verify", "--config", cfg, "--out", out]) == 3
        text = "\n".join(read_lines(out + "_verify.txt"))
        assert "FAIL bisection-residual" in text
        assert "replay:" in text

    def test_three_link_cloud_is_skipped(self, tmp_path, capsys):
        text = self.VERIFY.replace("links = 2", "links = 3")
        cfg = write_config(tmp_path, text)
        out = str(tmp_path / "v")
        assert main(["verify", "--config", cfg, "--out", out]) == 0
        text = "\n".join(read_lines(out + "_verify.txt"))
        assert "SKIP cloud-dominance" in text


class TestExitCodes:
    def test_missing_config_is_an_io_error(self, tmp_path):
        assert main(["sweep", "--config", str(tmp_path / "nope.ini")]) == 2

    def test_invalid_config_is_a_config_error(self, tmp_path):
        cfg = write_config(tmp_path, BASE + "\n[plotting]\nx = 1\n")
        assert main(["sweep", "--config", cfg]) == 1

    def test_unwritable_output_is_an_io_error(self, tmp_path):
        cfg = write_config(tmp_path)
        out = str(tmp_path / "no" / "such" / "dir" / "run")
        assert main(["sweep", "--config", cfg, "--out", out]) == 2

    def test_negative_seed_is_a_config_error(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["sweep", "--config", cfg, "--seed", "-1"]) == 1
