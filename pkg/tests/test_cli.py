import subprocess
import sys

import pytest

from symcorr import cli

FAST_POOL = "pool.tokens_per_layer = 4,16,64\npool.dim = 8\npool.n_low = 3\n"


def files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(FAST_POOL + "sweep.n_values = 1,2,5\nsweep.seeds = 2\n"
                    "gradcheck.points = 1\ntrain.steps = 5\n")
    return path


@pytest.mark.parametrize("command", list(cli.COMMANDS))
def test_commands_are_reproducible(command, config, tmp_path, capsys):
    outs = []
    for k in range(2):
        out = tmp_path / f"{command}{k}"
        args = [command, "--seed", "4", "--config", str(config), "--out", str(out)]
        assert cli.main(args) == 0
        outs.append(files(out))
    assert outs[0] and outs[0] == outs[1]


def test_commands_read_saved_episodes(config, tmp_path):
    assert cli.main(["synth", "--seed", "1", "--config", str(config), "--out", str(tmp_path / "s")]) == 0
    ep = tmp_path / "s" / "episode"
    for command in ("contrib", "prune", "segment"):
        assert cli.main([command, "--episode", str(ep), "--out", str(tmp_path / command)]) == 0
    assert (tmp_path / "segment" / "mask.pgm").read_bytes().startswith(b"P5\n8 8\n")


def test_dilution_outputs(config, tmp_path):
    assert cli.main(["dilution", "--config", str(config), "--out", str(tmp_path)]) == 0
    csv = (tmp_path / "dilution.csv").read_text().splitlines()
    assert csv[0] == "N,method,delta,miou,wall_ms"
    assert all(line.endswith(",") for line in csv[1:])
    assert (tmp_path / "dilution.svg").read_text().count("<polyline") == 3


def test_timing_flag_fills_wall_ms(config, tmp_path):
    assert cli.main(["dilution", "--timing", "--config", str(config), "--out", str(tmp_path)]) == 0
    assert not any(line.endswith(",") for line in (tmp_path / "dilution.csv").read_text().splitlines()[1:])


@pytest.mark.parametrize("text", ["pool.bogus = 1\n", "nosection = 1\n", "pool.n_low = -3\n",
                                  "pool.n_low = 0\npool.upper_bound = false\n", "forward.attention = dense\n"])
def test_contract_errors_exit_2(text, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_files_exit_2(tmp_path):
    assert cli.main(["synth", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 2
    assert cli.main(["segment", "--episode", str(tmp_path / "none"), "--out", str(tmp_path)]) == 2


def test_corrupt_episode_exit_2(config, tmp_path):
    cli.main(["synth", "--config", str(config), "--out", str(tmp_path)])
    (tmp_path / "episode" / "query.fts").write_bytes(b"FTS1\x01\x00")
    assert cli.main(["segment", "--episode", str(tmp_path / "episode"), "--out", str(tmp_path / "o")]) == 2


def test_internal_errors_exit_1(tmp_path, monkeypatch):
    def broken(run):
        raise RuntimeError("bug")

    monkeypatch.setitem(cli.COMMANDS, "synth", (broken, "x"))
    assert cli.main(["synth", "--out", str(tmp_path)]) == 1


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        cli.main(["frobnicate"])
    assert err.value.code == 2


def test_console_script_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "symcorr.cli", "gradcheck", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "max relative error" in proc.stdout
