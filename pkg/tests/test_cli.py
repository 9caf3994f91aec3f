import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from kmiter.cli import main
from kmiter.ppm import read_pgm, read_ppm, write_ppm
from kmiter.problems import synthetic_image


def invoke(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse(text):
    return list(csv.reader(io.StringIO(text)))


def test_feasibility_reflected(capsys):
    code, out, _ = invoke(capsys, "feasibility", "--regime", "reflected", "--beta-steps", "3")
    rows = parse(out)
    assert code == 0 and rows[0] == ["alpha", "beta", "lambda_bound"]
    np.testing.assert_allclose([float(r[2]) for r in rows[1:]], [1, 1 / 1.5, 0.5], rtol=1e-12)


def test_feasibility_general_row_count_and_hb_cap(capsys):
    _, out, _ = invoke(capsys, "feasibility", "--alpha-steps", "4", "--beta-steps", "5")
    assert len(parse(out)) == 1 + 20
    _, out, _ = invoke(capsys, "feasibility", "--regime", "hb", "--alpha-steps", "10")
    vals = {float(r[0]): float(r[2]) for r in parse(out)[1:]}
    assert vals[0.1] == pytest.approx(1.0) and vals[0.5] < 1


@pytest.mark.parametrize("argv", [
    ["feasibility", "--regime", "bogus"],
    ["feasibility", "--alpha-steps", "1"],
    ["feasibility", "--unknown-flag"],
    ["tightness", "--resolution", "5"],
    ["run", "--lambda", "1.5"],
    ["inpaint", "--rho", "2.5"],
])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_run_contraction_converges(capsys):
    code, out, err = invoke(capsys, "run", "--operator", "contraction", "--q", "0.5",
                            "--lambda", "0.5")
    rows = parse(out)
    assert code == 0 and rows[0] == ["k", "residual", "km_residual", "step_norm",
                                     "step_sq_sum", "dist"]
    assert float(rows[-1][1]) <= 1e-8 and len(rows) - 1 <= 70
    assert "stop_reason=tolerance" in err and err.startswith("# kmiter ")


def test_run_rotation_above_threshold(capsys):
    code, out, err = invoke(capsys, "run", "--operator", "rotation", "--alpha", "0",
                            "--beta", "1", "--lambda", "0.6", "--max-iter", "200")
    assert code == 0 and "converged=False" in err
    assert "warning: parameters not admissible" in err


def test_run_perturbed_converges(capsys):
    code, out, err = invoke(capsys, "run", "--perturb", "eps=1/k^2", "--tol", "1e-6",
                            "--max-iter", "10000")
    assert code == 0 and "stop_reason=tolerance" in err


def test_run_constant_sequence(capsys):
    code, out, _ = invoke(capsys, "run", "--operator", "constant-seq", "--alpha", "0.3",
                          "--beta", "0.3", "--lambda", "0.5", "--tol", "1e-300",
                          "--max-iter", "2000")
    assert code == 0 and float(parse(out)[-1][5]) < 1e-5


def test_run_divergence_exit_code(capsys):
    code, _, err = invoke(capsys, "run", "--operator", "rotation", "--alpha", "0.9",
                          "--beta", "1", "--lambda", "0.99", "--max-iter", "100000")
    assert code == 3 and "stop_reason=diverged" in err


def test_run_bad_perturbation_spec(capsys):
    code, _, err = invoke(capsys, "run", "--perturb", "eps=wobble")
    assert code == 2 and "error" in err


def test_output_file_routing_and_determinism(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        code, out, err = invoke(capsys, "run", "--alpha", "0.2", "--beta", "0.1", "-o", str(p))
        assert code == 0 and out.startswith("# kmiter ") and err == ""
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_tightness_small(capsys):
    code, out, err = invoke(capsys, "tightness", "--resolution", "10",
                            "--general-resolution", "10")
    rows = parse(out)
    assert code == 0 and rows[0] == ["regime", "alpha", "beta", "lambda_bound",
                                     "lambda_tilde", "gap"]
    assert len(rows) == 1 + 3 * 10 + 100
    assert min(float(r[5]) for r in rows[1:]) >= -1e-6
    assert parse(err)[0] == ["regime", "domain", "gap_l1", "gap_linf"]


def test_cournot_command(capsys):
    code, out, err = invoke(capsys, "cournot", "--variant", "hb")
    assert code == 0
    summary = parse(err.splitlines()[-1])[0]
    assert summary[0] == "hb" and summary[-1] == "true" and int(summary[4]) <= 800


def test_cournot_hb_not_slower_than_plain(capsys):
    iters = {}
    for v in ("none", "hb"):
        invoke_out = invoke(capsys, "cournot", "--variant", v, "--seed", "0")
        iters[v] = int(parse(invoke_out[2].splitlines()[-1])[0][4])
    assert iters["hb"] <= iters["none"]


def test_inpaint_nothing_erased(capsys):
    code, _, err = invoke(capsys, "inpaint", "--ratio", "0", "--size", "16")
    summary = parse(err.splitlines()[-1])[0]
    assert code == 0 and summary[-1] == "true" and int(summary[4]) <= 10


def test_inpaint_files(tmp_path, capsys):
    img = tmp_path / "in.ppm"
    write_ppm(img, synthetic_image(12))
    rec, mask = tmp_path / "rec.ppm", tmp_path / "mask.pgm"
    code, _, _ = invoke(capsys, "inpaint", "--image", str(img), "--ratio", "0.3",
                        "--recovered", str(rec), "--mask-out", str(mask), "--max-iter", "20")
    assert code == 0
    assert read_ppm(rec).shape == (12, 12, 3)
    assert int((read_pgm(mask) == 0).sum()) == int(0.3 * 144)


def test_inpaint_missing_image(tmp_path, capsys):
    code, _, err = invoke(capsys, "inpaint", "--image", str(tmp_path / "nope.ppm"))
    assert code == 1 and "nope.ppm" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "kmiter", "feasibility", "--regime",
                          "reflected", "--beta-steps", "2"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.splitlines()[-1] == "0,1,0.5"
