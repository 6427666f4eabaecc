"""Command-line behavior: commands, exit codes, files, determinism."""

import re
import subprocess
import sys
from collections import Counter

import numpy as np
import pytest

from hessflow.cli import main
from hessflow.monitors import MonitorRow, read_monitor_csv, write_monitor_csv
from hessflow.snapshot import read_snapshot

TORUS_RUN = """
[grid]
shape = 16 16
lengths = 6.283185307179586 6.283185307179586

[operator]
family = sigma_root
k = 2

[chi]
kind = scaled_identity
scale = 2.0

[psi]
kind = constant
value = 2.0

[phi_b]
kind = trig
amp = 0.05
freq = 1 1

[flow]
horizon = 0.05
dt = 0.01

[monitors]
sample_every = 1
snapshot_every = 2
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestSolveCommand:

    def test_solve_writes_csv_and_snapshots(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN)
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--out", out]) == 0
        assert "terminal event: horizon" in capsys.readouterr().out

        rows = read_monitor_csv(f"{out}/monitors.csv")
        assert [round(r.t, 10) for r in rows] == [0.01, 0.02, 0.03, 0.04, 0.05]
        snaps = sorted((tmp_path / "out").glob("snapshot_*.hfld"))
        assert [p.name for p in snaps] == [f"snapshot_{i:06d}.hfld"
                                           for i in range(4)]
        # snapshots carry the kept-state times
        tags = [read_snapshot(str(p)).time_tag for p in snaps]
        assert np.allclose(tags, [0.0, 0.02, 0.04, 0.05])

    def test_horizon_zero_one_snapshot_empty_body(self, tmp_path):
        cfg = write_cfg(tmp_path, TORUS_RUN.replace("horizon = 0.05",
                                                    "horizon = 0.0"))
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--out", out, "--quiet"]) == 0
        assert read_monitor_csv(f"{out}/monitors.csv") == []
        snaps = list((tmp_path / "out").glob("snapshot_*.hfld"))
        assert len(snaps) == 1

    def test_determinism_bit_identical_outputs(self, tmp_path):
        cfg = write_cfg(tmp_path, TORUS_RUN)
        out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["solve", "--config", cfg, "--out", out_a, "--quiet"]) == 0
        assert main(["solve", "--config", cfg, "--out", out_b, "--quiet"]) == 0
        for name in ["monitors.csv"] + [f"snapshot_{i:06d}.hfld"
                                        for i in range(4)]:
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, name

    def test_run_failure_exits_2(self, tmp_path, capsys):
        # log partial sums of an augmented Hessian with sums below one:
        # the exponential form needs F > 0 and fails on the first rhs
        bad = """
[grid]
shape = 8 8
lengths = 6.283185307179586 6.283185307179586

[operator]
family = log_psum
k = 1

[chi]
kind = scaled_identity
scale = 0.5

[psi]
kind = constant
value = 0.0

[phi_b]
kind = constant
value = 0.0

[flow]
form = exponential
horizon = 0.05
"""
        cfg = write_cfg(tmp_path, bad)
        assert main(["solve", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 2
        assert "exponential form needs f > 0" in capsys.readouterr().err

    def test_missing_config_flag_exits_1(self, tmp_path, capsys):
        assert main(["solve", "--out", str(tmp_path / "out")]) == 1
        assert "needs --config" in capsys.readouterr().err

    def test_bad_config_exits_1(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN.replace("k = 2", "k = 7"))
        assert main(["solve", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 1

    def test_missing_config_file_exits_1(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "absent.cfg"),
                     "--out", str(tmp_path / "out")]) == 1

    def test_quiet_suppresses_stdout(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN)
        main(["solve", "--config", cfg, "--out", str(tmp_path / "out"),
              "--quiet"])
        assert capsys.readouterr().out == ""

    def test_console_module_entry(self, tmp_path):
        cfg = write_cfg(tmp_path, TORUS_RUN.replace("horizon = 0.05",
                                                    "horizon = 0.0"))
        proc = subprocess.run(
            [sys.executable, "-m", "hessflow.cli", "solve", "--config", cfg,
             "--out", str(tmp_path / "out")],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "terminal event" in proc.stdout


class TestSteadyCommand:

    def test_steady_writes_field_and_summary_row(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN + "\n[steady]\ntol = 1e-9\n"
                                              "max_steps = 60\n")
        out = str(tmp_path / "out")
        assert main(["steady", "--config", cfg, "--out", out]) == 0
        assert "steady state after" in capsys.readouterr().out

        field = read_snapshot(f"{out}/steady_state.hfld")
        # chi = 2I alone solves the problem, so the field relaxes to flat
        assert np.ptp(field.values) < 1e-7
        rows = read_monitor_csv(f"{out}/monitors.csv")
        assert len(rows) == 1
        assert rows[0].sup_ut < 1e-9

    def test_steady_timeout_exits_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN + "\n[steady]\ntol = 1e-14\n"
                                              "max_steps = 1\n")
        assert main(["steady", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 2
        assert "no steady state" in capsys.readouterr().err

    def test_time_dependent_psi_exits_1(self, tmp_path):
        cfg = write_cfg(tmp_path, TORUS_RUN.replace(
            "kind = constant\nvalue = 2.0",
            "kind = trig\namp = 0.1\nfreq = 1 0\ndecay = 0.5\noffset = 2"))
        assert main(["steady", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 1


class TestCheckOperatorCommand:

    def test_structure_report_prints_and_passes(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN + "\n[structure]\n"
                                              "sample_budget = 400\n")
        assert main(["check-operator", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "structure report" in out
        assert "FAIL" not in out


class TestCertifyCommand:

    def test_concavity_gap_certifies(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN + "\n[certify]\nbeta = 0.1\n"
                                              "mu = 1 1\ngap_budget = 5000\n")
        assert main(["certify-cones", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "epsilon_hat=" in out and "violations=0" in out

    def test_linear_operator_empty_constraint_exits_3(self, tmp_path, capsys):
        # sum of eigenvalues has a constant normal, so no sampled point
        # ever qualifies and the certificate cannot assert a gap
        text = TORUS_RUN.replace("k = 2", "k = 1") + (
            "\n[certify]\nbeta = 0.1\nmu = 1 1\ngap_budget = 2000\n")
        cfg = write_cfg(tmp_path, text)
        assert main(["certify-cones", "--config", cfg]) == 3
        out = capsys.readouterr().out
        assert "empty_constraint=True" in out

    def test_parabolic_gap_certifies(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN + """
[certify]
levels = 0.0
anchors = 1 1 0
eps = 0.05
parabolic_budget = 20000
""")
        assert main(["certify-cones", "--config", cfg]) == 0
        assert "certified=True" in capsys.readouterr().out

    def test_empty_certify_section_exits_1(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN)
        assert main(["certify-cones", "--config", cfg]) == 1
        assert "nothing to run" in capsys.readouterr().err


class TestVerifySubsolutionCommand:

    def test_linear_subsolution_verifies(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN + "\n[subsolution]\n"
                                              "safety = 0.1\n")
        assert main(["verify-subsolution", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "satisfied" in out

    def test_unreachable_strictness_exits_3(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, TORUS_RUN + "\n[subsolution]\n"
                                              "safety = 0.1\n"
                                              "strict_delta = 0.5\n")
        assert main(["verify-subsolution", "--config", cfg]) == 3
        assert "violated" in capsys.readouterr().err


class TestReportCommand:

    def rows3(self):
        return [MonitorRow(t=0.0, sup_u=1.0, sup_grad_u=0.5, sup_hess_u=2.0,
                           sup_ut=0.1),
                MonitorRow(t=0.5, sup_u=1.2, sup_grad_u=0.6, sup_hess_u=2.2,
                           sup_ut=0.05),
                MonitorRow(t=1.0, sup_u=1.3, sup_grad_u=0.7, sup_hess_u=2.3,
                           sup_ut=0.02)]

    @staticmethod
    def circle_marker_uses(svg_text):
        """Count of data markers: uses of the lone curved (circle) def."""
        defs = dict(re.findall(r'<path id="(m[0-9a-f]+)" d="([^"]*)"',
                               svg_text))
        uses = Counter(re.findall(r'<use [^>]*href="#(m[0-9a-f]+)"',
                                  svg_text))
        circle_ids = [i for i, d in defs.items() if "C" in d]
        assert len(circle_ids) == 1
        return uses[circle_ids[0]]

    def test_three_row_csv_three_points_per_series(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        write_monitor_csv(str(out / "monitors.csv"), self.rows3())
        assert main(["report", "--out", str(out), "--quiet"]) == 0

        for column in ("supU", "supGradU", "supHessU", "supUt"):
            svg = (out / f"monitor_{column}.svg").read_text()
            assert self.circle_marker_uses(svg) == 3, column
        # all-empty optional columns produce no chart
        assert not (out / "monitor_W.svg").exists()
        assert not (out / "monitor_slack.svg").exists()

    def test_report_after_solve_renders_every_column(self, tmp_path):
        cfg = write_cfg(tmp_path, TORUS_RUN)
        out = str(tmp_path / "out")
        assert main(["solve", "--config", cfg, "--out", out, "--quiet"]) == 0
        assert main(["report", "--out", out, "--quiet"]) == 0
        svgs = sorted((tmp_path / "out").glob("monitor_*.svg"))
        assert [p.name for p in svgs] == ["monitor_supGradU.svg",
                                          "monitor_supHessU.svg",
                                          "monitor_supU.svg",
                                          "monitor_supUt.svg"]

    def test_missing_csv_exits_1(self, tmp_path, capsys):
        assert main(["report", "--out", str(tmp_path / "nowhere")]) == 1
        assert "no monitor CSV" in capsys.readouterr().err


class TestParserShape:

    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_command_required(self):
        with pytest.raises(SystemExit):
            main([])
