from __future__ import annotations

import json

import pytest

from bookend.cli import main
from bookend.integrals import save_fcidump


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def h2_path(tmp_path, h2):
    path = tmp_path / "h2.fcidump"
    save_fcidump(h2, path)
    return str(path)


def test_fci_reproduces_golden(capsys, h2_path, golden):
    code, out, _ = run(capsys, "fci", "--fcidump", h2_path)
    assert code == 0
    assert json.loads(out)["energy"] == pytest.approx(golden["h2"]["e_fci"], abs=1e-10)


def test_inspect(capsys, h2_path):
    code, out, _ = run(capsys, "fcidump", "inspect", h2_path)
    data = json.loads(out)
    assert code == 0 and data["n_orbitals"] == 2 and data["fci_dimension"] == 4


def test_csv_format_and_out_file(capsys, tmp_path):
    out = tmp_path / "hci.csv"
    code, _, _ = run(capsys, "hci", "--fcidump", "builtin:h2", "--epsilon", "1e-4",
                     "--format", "csv", "--out", str(out))
    assert code == 0
    assert out.read_text().splitlines()[0] == "epsilon,energy,dimension"
    assert (tmp_path / "hci_trace.csv").exists()
    assert (tmp_path / "hci_cutoffs.png").exists()


def test_mbar_identical_states_all_zero(capsys, tmp_path):
    path = tmp_path / "same.csv"
    path.write_text("state,sample,u_0,u_1\n0,0,0.5,0.5\n0,1,1.5,1.5\n1,0,0.2,0.2\n")
    code, out, _ = run(capsys, "mbar", "--ukn", str(path))
    assert code == 0
    assert json.loads(out)["free_energies"] == pytest.approx([0.0, 0.0], abs=1e-12)


def test_bookend_zero_corrections_echo(capsys):
    code, out, _ = run(capsys, "bookend", "--ddg-mm", "-3.25")
    assert code == 0 and json.loads(out)["ddg_corrected"] == -3.25


def test_ti_constant_means(capsys):
    code, out, _ = run(capsys, "ti", "--means", *["1"] * 7)
    assert json.loads(out)["delta"] == 1.001


def test_sample_then_sqd_then_extsqd(capsys, tmp_path):
    samples = tmp_path / "s.txt"
    assert run(capsys, "lucj", "sample", "--fcidump", "builtin:h4", "--exact", "--shots", "3000",
               "--seed", "2", "--out", str(samples))[0] == 0
    result = tmp_path / "sqd.json"
    code, _, _ = run(capsys, "sqd", "--fcidump", "builtin:h4", "--samples", str(samples),
                     "--batch-size", "200", "--out", str(result))
    assert code == 0
    data = json.loads(result.read_text())
    assert (tmp_path / "sqd_history.png").exists()
    code, out, _ = run(capsys, "extsqd", "--fcidump", "builtin:h4", "--wavefunction", str(result),
                       "--cutoff", "0")
    assert code == 0
    assert json.loads(out)["energy"] <= data["energy"] + 1e-10


def test_ensemble_archive_feeds_mbar(capsys, tmp_path):
    archive = tmp_path / "ladder.csv"
    assert run(capsys, "ensemble", "--samples", "500", "--seed", "1", "--out", str(archive))[0] == 0
    code, out, _ = run(capsys, "mbar", "--ukn", str(archive))
    assert code == 0 and len(json.loads(out)["free_energies"]) == 6


def test_seeded_commands_are_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for path in (a, b):
        run(capsys, "lucj", "sample", "--fcidump", "builtin:h2", "--shots", "100", "--noise", "0.1",
            "--seed", "9", "--out", str(path))
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize(
    "argv, code",
    [
        (["fci", "--fcidump", "does/not/exist"], 4),
        (["hci", "--fcidump", "builtin:h2", "--epsilon", "0"], 2),
        (["fci", "--fcidump", "builtin:nope"], 2),
        (["mbar", "--ukn", "MISSING.csv"], 4),
        (["bookend", "--ddg-mm", "nan"], 2),
        (["fci", "--fcidump", "builtin:h2", "--threads", "0"], 2),
    ],
)
def test_exit_codes(capsys, argv, code):
    assert run(capsys, *argv)[0] == code


def test_numeric_failure_exit_code(capsys, tmp_path):
    path = tmp_path / "u.csv"
    path.write_text("state,sample,u_0,u_1\n0,0,0.0,3.0\n1,0,2.0,0.0\n")
    code, _, err = run(capsys, "mbar", "--ukn", str(path), "--max-iter", "1", "--tol", "1e-30")
    assert code == 3 and "did not converge" in err


def test_validation_exit_code_for_bad_file(capsys, tmp_path):
    path = tmp_path / "bad.fcidump"
    path.write_text("&FCI NORB=2,NELEC=2,\n&END\n1.0 1 1 9 9\n")
    code, _, err = run(capsys, "fci", "--fcidump", str(path))
    assert code == 2 and "line 3" in err


def test_run_empty_stage_list(capsys, tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"schema_version": 1, "seed": 0, "stages": []}))
    code, _, err = run(capsys, "run", str(path), "--out", str(tmp_path / "o"))
    assert code == 2 and "stages" in err


def test_argparse_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as info:
        main(["fci"])
    assert info.value.code == 2
