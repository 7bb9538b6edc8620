import json
import math
import subprocess
import sys

import pytest

from gtcrn.cli import main
from gtcrn.models import builtin_text, model_hash


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestSimulate:
    def test_csv_with_monotone_times(self, capsys):
        code, out, _ = run(capsys, "simulate", "--model", "purebirth", "--T", "1", "--seed", "7")
        assert code == 0
        rows = out.strip().splitlines()
        assert rows[0] == "t,channel,x1"
        times = [float(r.split(",")[0]) for r in rows[1:]]
        assert times == sorted(times) and times[-1] == 1.0

    def test_byte_identical_reruns(self, capsys):
        argv = ("simulate", "--model", "example8", "--T", "2", "--seed", "7")
        assert run(capsys, *argv)[1] == run(capsys, *argv)[1]

    def test_global_flags_before_subcommand(self, capsys):
        a = run(capsys, "--model", "example8", "--seed", "3", "simulate", "--T", "2")[1]
        b = run(capsys, "simulate", "--model", "example8", "--seed", "3", "--T", "2")[1]
        assert a == b

    def test_event_cap_exit_code(self, capsys):
        code, _, err = run(capsys, "simulate", "--model", "example7", "--T", "5", "--max-events", "10")
        assert code == 3 and "10 events" in err

    def test_json_summary(self, capsys):
        code, out, _ = run(capsys, "simulate", "--model", "decay", "--T", "100", "--format", "json")
        rec = json.loads(out)
        assert rec["schema"] == "gtcrn/1" and rec["command"] == "simulate"
        assert rec["result"]["final_state"] == {"S": 0} and rec["result"]["counts"] == {"R1": 8}
        assert rec["model_sha256"] == model_hash(builtin_text("decay"))

    def test_direct_algorithm(self, capsys):
        code, out, _ = run(capsys, "simulate", "--model", "example2", "--T", "1", "--algorithm", "direct")
        assert code == 0 and out.startswith("t,channel,x1,x2")


class TestEstimate:
    def test_gt_on_immigration(self, capsys):
        code, out, _ = run(capsys, "estimate", "--model", "immigration", "--param", "c", "--T", "1",
                           "--N", "20000", "--format", "json")
        rec = json.loads(out)
        res = rec["result"]
        assert code == 0 and res["method"] == "GT"
        assert abs(res["mean"] - 1.0) < 4 * res["stderr"]
        assert rec["config"]["N"] == 20000 and rec["config"]["param"] == "c"
        for key in ("model", "f", "target_param", "c_star", "T", "N", "mean", "variance", "stderr", "ci95",
                    "n_discarded", "seed", "method", "wallclock_s"):
            assert key in res

    def test_fd_central_agrees(self, capsys):
        gt = json.loads(run(capsys, "estimate", "--model", "immigration", "--param", "c", "--T", "1",
                            "--N", "20000")[1])["result"]
        fd = json.loads(run(capsys, "estimate", "--model", "immigration", "--param", "c", "--T", "1",
                            "--N", "20000", "--method", "fd-central", "--crn", "--seed", "1")[1])["result"]
        assert fd["method"] == "FD-central"
        assert abs(gt["mean"] - fd["mean"]) < 4 * math.hypot(gt["stderr"], fd["stderr"])

    def test_constant_observable(self, capsys):
        res = json.loads(run(capsys, "estimate", "--model", "example7", "--param", "c2", "--f", "1",
                             "--T", "1", "--N", "5000")[1])["result"]
        assert abs(res["mean"]) < 4 * res["stderr"]

    def test_refuses_uncertified_target(self, capsys):
        code, out, err = run(capsys, "estimate", "--model", "example6", "--param", "c2", "--T", "1", "--N", "100")
        assert code == 4 and out == "" and "--force" in err and "lp_bounded_direction" in err

    def test_force_overrides(self, capsys):
        code, out, _ = run(capsys, "estimate", "--model", "example6", "--param", "c2", "--T", "1", "--N", "200",
                           "--force")
        assert code == 0 and json.loads(out)["result"]["validity"] == "inconclusive"

    def test_thread_count_does_not_change_output(self, capsys):
        base = ("estimate", "--model", "example7", "--param", "c1", "--T", "1", "--N", "3000")
        a = json.loads(run(capsys, *base, "--threads", "1")[1])["result"]
        b = json.loads(run(capsys, *base, "--threads", "2")[1])["result"]
        assert a["mean"] == b["mean"] and a["variance"] == b["variance"]

    def test_text_format(self, capsys):
        code, out, _ = run(capsys, "estimate", "--model", "immigration", "--param", "R1", "--T", "1",
                           "--N", "1000", "--format", "text")
        assert code == 0 and out.startswith("GT estimate of d E[x1] / d c")


class TestCheck:
    def test_gene_expression_all_valid(self, capsys):
        code, out, _ = run(capsys, "check", "--model", "gene-expression", "--require-valid")
        reports = json.loads(out)["result"]
        assert code == 0 and [r["verdict"] for r in reports] == ["valid"] * 5

    def test_example6_ray(self, capsys):
        code, out, _ = run(capsys, "check", "--model", "example6", "--param", "c2", "--require-valid")
        (rep,) = json.loads(out)["result"]
        assert code == 4 and rep["verdict"] == "inconclusive"
        assert rep["certificate"]["xi"] == {"R2": "1/1", "R3": "1/1"}

    def test_lotka_volterra_death(self, capsys):
        code, out, _ = run(capsys, "check", "--model", "lotka-volterra", "--param", "delta1", "--format", "text")
        assert code == 0
        assert "VALID" in out and "R[R3] + R[R4] <= x0[S1] + R[R1] + R[R2]" in out
        assert "property 1 for R2: coupling" in out

    def test_attached_probes(self, capsys):
        code, out, _ = run(capsys, "check", "--model", "immigration", "--probe-N", "2000")
        (rep,) = json.loads(out)["result"]
        assert len(rep["probes"]) == 6 and all(p["status"] == "STABLE" for p in rep["probes"])


class TestProbe:
    def test_table(self, capsys):
        code, out, _ = run(capsys, "probe", "--model", "immigration", "--param", "c", "--T", "1", "--N", "20000",
                           "--grid", "1.5")
        header, row = out.strip().splitlines()
        cols = dict(zip(header.split("\t"), row.split("\t")))
        assert code == 0 and cols["status"] == "STABLE"
        assert abs(float(cols["estimate"]) - math.exp(0.5)) < 4 * float(cols["stderr"])

    def test_moment_of_constant(self, capsys):
        out = run(capsys, "probe", "--model", "example7", "--param", "c1", "--T", "1", "--N", "500",
                  "--kind", "moment", "--f", "1", "--format", "json")[1]
        (row,) = json.loads(out)["result"]
        assert row["estimate"] == 1.0

    def test_unstable_pure_birth(self, tmp_path, capsys):
        model = tmp_path / "pb.crn"
        model.write_text("[params] c = 1\n[species] S = 1\n[reactions]\nR1: S -> 2S @ c\n")
        out = run(capsys, "probe", "--model", str(model), "--param", "c", "--T", "1", "--N", "20000",
                  "--grid", "2", "--format", "csv")[1]
        assert out.strip().splitlines()[1].endswith("UNSTABLE")


class TestOracle:
    def test_pure_birth(self, capsys):
        code, out, _ = run(capsys, "oracle", "--x0", "1", "--c", str(math.log(2)), "--t", "1", "--k", "0,1",
                           "--eps", "0.5,0.7")
        res = json.loads(out)["result"]
        assert code == 0 and res["pmf"]["2"] == pytest.approx(0.25)
        assert res["exp_moment_finite"] == {"0.5": True, "0.7": False}

    def test_unit_rate(self, capsys):
        res = json.loads(run(capsys, "oracle", "--c", "1", "--eps", "0.4,0.5")[1])["result"]
        assert res["exp_moment_finite"] == {"0.4": True, "0.5": False}
        assert res["mean"] == pytest.approx(math.e) and res["exp_moment_threshold"] == pytest.approx(0.4587, abs=1e-4)

    def test_immigration(self, capsys):
        res = json.loads(run(capsys, "oracle", "--kind", "immigration", "--c", "2", "--x0", "5")[1])["result"]
        assert (res["mean"], res["variance"]) == pytest.approx((7.0, 2.0))


class TestErrors:
    @pytest.mark.parametrize("argv", [
        ("simulate", "--T", "1"),
        ("simulate", "--model", "no-such-model", "--T", "1"),
        ("estimate", "--model", "example7", "--param", "zeta", "--T", "1"),
        ("estimate", "--model", "example7", "--param", "c1", "--T", "1", "--f", "exp(x1)"),
        ("simulate", "--model", "example7", "--T", "-1"),
    ])
    def test_config_errors(self, capsys, argv):
        assert run(capsys, *argv)[0] == 2

    def test_model_parse_error_names_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.crn"
        bad.write_text("[params] c = 1\n[species] S = 0\n[reactions]\nR1: 0 -> Q @ c\n")
        code, _, err = run(capsys, "simulate", "--model", str(bad), "--T", "1")
        assert code == 2 and "line 4" in err

    def test_argparse_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["simulate", "--model", "example7"])
        assert info.value.code == 2

    def test_out_file(self, tmp_path, capsys):
        target = tmp_path / "traj.csv"
        code, out, _ = run(capsys, "simulate", "--model", "example7", "--T", "1", "--out", str(target))
        assert code == 0 and out == "" and target.read_text().startswith("t,channel,x1")


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gtcrn.cli", "oracle", "--kind", "decay", "--x0", "8",
                           "--d", str(math.log(2))], capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["result"]["mean"] == pytest.approx(4.0)
