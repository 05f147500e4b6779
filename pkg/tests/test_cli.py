from __future__ import annotations

import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from rosvd import matio, nist
from rosvd.cli import main
from rosvd.ledger import Ledger


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ROSVD_CONFIG", raising=False)
    rng = np.random.default_rng(4)
    for name in ("cover.png", "foreign.png"):
        Image.fromarray(rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)).save(tmp_path / name)
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    fields = dict(line.split(" = ", 1) for line in out.splitlines() if " = " in line)
    return code, fields, out, err


def test_device_new_and_sample_deterministic(work, capsys):
    assert run(capsys, "device", "new", "--seed", 9, "--out", "a.json")[0] == 0
    assert run(capsys, "device", "new", "--seed", 9, "--out", "b.json")[0] == 0
    assert (work / "a.json").read_bytes() == (work / "b.json").read_bytes()
    run(capsys, "device", "sample", "--device", "a.json", "--out", "a.rosv")
    run(capsys, "device", "sample", "--device", "b.json", "--out", "b.rosv")
    assert (work / "a.rosv").read_bytes() == (work / "b.rosv").read_bytes()
    assert matio.load_matrix(work / "a.rosv").shape == (64, 64)
    run(capsys, "device", "sample", "--device", "a.json", "--out", "a.csv", "--format", "csv", "--rep", 2)
    assert matio.matrix_from_csv((work / "a.csv").read_text()).shape == (64, 64)


def test_missing_config_and_usage_errors(work, capsys):
    assert run(capsys, "--config", "absent.toml", "device", "new", "--seed", 1, "--out", "x.json")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["device", "new"])
    assert exc.value.code == 2
    (work / "bad.toml").write_text("[sim]\nrows = 1\n")
    assert run(capsys, "--config", "bad.toml", "device", "new", "--seed", 1, "--out", "x.json")[0] == 2


def test_env_config_and_flag_override(work, capsys, monkeypatch):
    (work / "c.toml").write_text("[sim]\nrows = 16\ncols = 16\n")
    monkeypatch.setenv("ROSVD_CONFIG", str(work / "c.toml"))
    assert run(capsys, "device", "new", "--seed", 1, "--out", "x.json")[1]["shape"] == "16x16"
    assert run(capsys, "device", "new", "--seed", 1, "--out", "x.json", "--dims", "16x24")[1]["shape"] == "16x24"


def test_full_flow(work, capsys):
    run(capsys, "device", "new", "--seed", 42, "--out", "dev.json")
    code, reg, _, _ = run(capsys, "register", "--device", "dev.json", "--tx-limit", 1, "--journal", "j.tsv")
    assert code == 0 and reg["index"] == "0" and reg["prev_hash"] == "0" * 64
    assert run(capsys, "register", "--device", "dev.json", "--journal", "j.tsv")[0] == 3

    code, mark, _, _ = run(capsys, "mark", "--device", "dev.json", "--image", "cover.png", "--out", "m.png",
                           "--journal", "j.tsv")
    assert code == 0 and mark["kind"] == "mark" and float(mark["psnr_db"]) >= 51
    assert run(capsys, "mark", "--device", "dev.json", "--image", "cover.png", "--out", "m2.png",
               "--journal", "j.tsv")[0] == 4

    code, ver, _, _ = run(capsys, "verify", "--image", "m.png", "--journal", "j.tsv")
    assert code == 0 and ver["device_id"] == "dev-000000000000002a" and ver["integrity"] == "PASS"
    assert ver["auth_hash"] == reg["auth_hash"] == ver["auth_hash"].lower()

    code, tr, _, _ = run(capsys, "trace", "--auth-hash", reg["auth_hash"], "--journal", "j.tsv")
    assert code == 0 and tr["remaining_budget"] == "0"
    assert run(capsys, "trace", "--image", "m.png", "--journal", "j.tsv")[0] == 0
    assert run(capsys, "trace", "--auth-hash", "00" * 32, "--journal", "j.tsv")[0] == 6

    px = np.array(Image.open(work / "m.png"))
    px[40, 40, 2] ^= 1
    Image.fromarray(px).save(work / "tampered.png")
    code, t, _, err = run(capsys, "verify", "--image", "tampered.png", "--journal", "j.tsv")
    assert code == 5 and t["integrity"] == "FAIL" and "integrity" in err

    assert run(capsys, "verify", "--image", "foreign.png", "--journal", "j.tsv", "--dims", "64x64")[0] == 6

    assert run(capsys, "ledger", "verify", "--journal", "j.tsv")[0] == 0
    data = bytearray((work / "j.tsv").read_bytes())
    data[-5] ^= 1
    (work / "j.tsv").write_bytes(bytes(data))
    code, lv, _, _ = run(capsys, "ledger", "verify", "--journal", "j.tsv")
    assert code == 5 and lv["first_bad_index"] == "1"


def test_mark_refuses_drifted_device(work, capsys):
    run(capsys, "device", "new", "--seed", 1, "--out", "a.json", "--id", "shared")
    run(capsys, "device", "new", "--seed", 2, "--out", "b.json", "--id", "shared")
    run(capsys, "register", "--device", "a.json", "--journal", "j.tsv")
    code = run(capsys, "mark", "--device", "b.json", "--image", "cover.png", "--out", "m.png", "--journal", "j.tsv")[0]
    assert code == 6
    assert len(Ledger(work / "j.tsv").records()) == 1


def test_analyze_spectrum(work, capsys):
    matio.save_matrix(work / "z.rosv", np.zeros((3, 4)))
    code, _, out, _ = run(capsys, "analyze", "spectrum", "--matrix", "z.rosv")
    assert code == 0
    rows = [line.split("\t") for line in out.splitlines() if not line.startswith("#")]
    assert [float(v) for _, v in rows] == [0.0, 0.0, 0.0]
    run(capsys, "device", "new", "--seed", 3, "--out", "d.json")
    _, _, out, _ = run(capsys, "analyze", "spectrum", "--device", "d.json", "--csv", "--figure", "s.png")
    lines = out.splitlines()
    assert lines[0] == "index,singular_value" and len(lines) == 65
    assert (work / "s.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert run(capsys, "analyze", "spectrum")[0] == 2


def test_analyze_hamming(work, capsys):
    A = np.random.default_rng(0).standard_normal((16, 16))
    matio.save_matrix(work / "a.rosv", A)
    matio.save_matrix(work / "b.rosv", A)
    code, fields, out, _ = run(capsys, "analyze", "hamming", "--matrix", "a.rosv", "--matrix", "b.rosv")
    assert code == 0 and fields["group"] == "input" and float(fields["raw_avg"]) == 0.0
    run(capsys, "device", "new", "--seed", 1, "--out", "d1.json")
    run(capsys, "device", "new", "--seed", 2, "--out", "d2.json")
    _, _, out, _ = run(capsys, "analyze", "hamming", "--device", "d1.json", "--device", "d2.json", "--reps", 3,
                       "--csv", "--figure", "h.png")
    rows = [line.split(",") for line in out.splitlines()]
    assert rows[0] == ["group", "raw_avg", "processed_avg", "n_matrices"]
    assert [r[0] for r in rows[1:]] == ["same:dev-0000000000000001", "same:dev-0000000000000002", "cross"]
    assert (work / "h.png").exists()


def test_analyze_randomness(work, capsys):
    bits = np.random.default_rng(1).integers(0, 2, 200_000)
    nist.write_bitstream(work / "b.bin", bits)
    code, _, out, _ = run(capsys, "analyze", "randomness", "--bits", "b.bin", "--figure", "r.png")
    assert code == 0 and out == nist.format_suite_report(nist.run_suite(bits))
    run(capsys, "device", "new", "--seed", 1, "--out", "d.json")
    _, _, out, _ = run(capsys, "analyze", "randomness", "--device", "d.json", "--n-bits", 5000, "--csv",
                       "--tests", "frequency", "fft")
    rows = [line.split(",") for line in out.splitlines()]
    assert [r[0] for r in rows[1:]] == ["frequency", "fft"] and rows[1][1] == "5000"


def test_console_entry_points(work):
    for cmd in (["rosvd", "--help"], [sys.executable, "-m", "rosvd", "--help"]):
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0 and "analyze" in proc.stdout
