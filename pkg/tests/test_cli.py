import csv
import io
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from tokenlink import cli
from tokenlink.errors import ConfigError
from tokenlink.imageio import load_image, save_image

IMAGES = Path(cli.__file__).parent / "data" / "images"
ROCKET = str(IMAGES / "rocket.ppm")


def report(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines())


def test_transmit_writes_image_and_report(tmp_path, capsys):
    out = tmp_path / "r.png"
    assert cli.main(["transmit", "-i", ROCKET, "-o", str(out), "--snr-db", "6", "--seed", "3"]) == 0
    rep = report(capsys.readouterr().out)
    assert rep["mcs"] == "16QAM-1/3" and rep["tokens_sent"] == "84"
    assert load_image(out).shape == (256, 256, 3)


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "link.cfg"
    cfg.write_text(f"# link settings\ninput = {ROCKET}\nsnr_db = 1\ncbr = 0.003\nkey_count = 8\n")
    assert cli.main(["transmit", "--config", str(cfg)]) == 0
    rep = report(capsys.readouterr().out)
    assert rep["snr_db"] == "1.0" and rep["target_cbr"] == "0.003" and rep["mcs"] == "QPSK-1/3"
    assert cli.main(["transmit", "--config", str(cfg), "--snr-db", "11"]) == 0
    rep = report(capsys.readouterr().out)
    assert rep["snr_db"] == "11.0" and rep["mcs"] == "16QAM-3/4"


def test_fixed_mcs_override(capsys):
    assert cli.main(["transmit", "-i", ROCKET, "--modulation", "4", "--code-rate", "1/2", "--key-count", "32"]) == 0
    rep = report(capsys.readouterr().out)
    assert (rep["tokens_sent"], rep["symbols"], rep["tokens_budget"]) == ("128", "768", "96")


def test_sweep_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert cli.main(["sweep", "-i", ROCKET, "--axis", "snr_db", "--values", "1,6", "--trials", "2",
                     "--csv", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["snr_db"] for r in rows] == ["1.0", "6.0"]
    assert all(r["status"] == "ok" for r in rows)
    assert cli.main(["sweep", "-i", ROCKET, "--axis", "cbr", "--values", "0.002"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows[0]["target_cbr"] == "0.002"


@pytest.mark.parametrize(
    "argv, code",
    [
        (["transmit", "-i", ROCKET, "--cbr", "0.0001"], 4),
        (["transmit", "-i", "/nonexistent/x.ppm"], 3),
        (["transmit", "-i", ROCKET, "--modulation", "4"], 2),
        (["transmit", "-i", ROCKET, "--b-token", "11"], 2),
        (["transmit"], 2),
        (["transmit", "-i", ROCKET, "--mcs-table", "/nonexistent/table.txt"], 3),
    ],
)
def test_exit_codes(argv, code, capsys):
    assert cli.main(argv) == code
    assert "tokenlink:" in capsys.readouterr().err


def test_malformed_image_exit_code(tmp_path):
    bad = tmp_path / "bad.ppm"
    bad.write_bytes(b"P6\n2 2\n255\n\x00")
    assert cli.main(["transmit", "-i", str(bad)]) == 3


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("snr_db = 6\nbogus = 1\n")
    assert cli.main(["transmit", "--config", str(cfg), "-i", ROCKET]) == 2
    with pytest.raises(ConfigError, match="line 1|:1:"):
        cli.parse_config_text("no equals sign")
    with pytest.raises(ConfigError):
        cli.parse_config_text("snr_db = loud")


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        cli.main(["sweep", "-i", ROCKET, "--axis", "time", "--values", "1"])
    assert info.value.code == 2


def test_codebook_train(tmp_path, rng, capsys):
    paths = []
    for i in range(2):
        p = tmp_path / f"{i}.png"
        save_image(rng.random((256, 256, 3)), p)
        paths.append(str(p))
    out = tmp_path / "cb.rtcb"
    assert cli.main(["codebook-train", *paths, "-o", str(out), "--K", "64", "--stride", "128"]) == 0
    assert out.stat().st_size == 12 + 4 * 64 * 4
    assert cli.main(["codebook-train", *paths, "-o", str(out), "--K", "4096"]) == 2


def test_zeroout_train_and_eval(tmp_path, capsys):
    model = tmp_path / "m.rtae"
    assert cli.main(["train-zeroout", "-o", str(model), "--steps", "200"]) == 0
    out = capsys.readouterr().out
    assert "untrained_mse=" in out and "trained_mse=" in out
    assert cli.main(["eval-gradient", "--model", str(model), "--t-values", "4,16"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "t,mse" and [l.split(",")[0] for l in lines[1:]] == ["4", "16"]
    assert cli.main(["eval-gradient", "--model", str(tmp_path / "none.rtae")]) == 3


def test_mcs_calibrate(tmp_path, capsys):
    out = tmp_path / "table.txt"
    assert cli.main(["mcs-calibrate", "--candidates", "2:1/3,4:1/2", "--blocks", "10",
                     "--info-len", "128", "-o", str(out)]) == 0
    text = out.read_text()
    assert "-inf 2 1/3 QPSK-1/3" in text and "16QAM-1/2" in text
    assert cli.main(["transmit", "-i", ROCKET, "--mcs-table", str(out)]) == 0


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "tokenlink.cli", "transmit", "-i", ROCKET, "--snr-db", "inf",
                          "--cbr", "0.05"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert report(res.stdout)["post_fec_errors"] == "0"
