import json
import xml.etree.ElementTree as ET
import subprocess
import sys

import pytest

from ldp_lab import __version__
from ldp_lab.cli import THREADS_ENV, main, provenance, resolve_threads
from ldp_lab.config import ConfigError, config_from_dict, emit_config, parse_config
from ldp_lab.harness import read_csv_rows
from ldp_lab.model import read_dataset

GOLDEN_MAXSENSE = ('{"U": 20000, "algorithm": "maxsense", "exact": false, "misclass": 0.05, "params": '
                   '{"K": 1, "L": 2, "N": 40, "U": 20000, "alpha": [1.0], "b": [[0.9, 0.1]], "beta": [0.5, 0.5], '
                   '"epsilon": 1.0, "theta": 1.0, "w": 8}, "seed": 3}')


# -- config ------------------------------------------------------------------------

def test_config_defaults():
    cfg = config_from_dict({"params": {"N": 10, "w": 2}})
    assert cfg.params["U"] == 1000 and cfg.params["beta"] == [0.5, 0.5]
    assert cfg.algorithm == "maxsense" and cfg.seed == 0 and cfg.U0 is None
    p = cfg.model()
    assert p.N == 10 and p.epsilon == 1.0


def test_config_errors_name_the_key():
    with pytest.raises(ConfigError, match="unknown key 'sede'"):
        config_from_dict({"params": {"N": 10, "w": 2}, "sede": 1})
    with pytest.raises(ConfigError, match="unknown key 'params.eps'"):
        config_from_dict({"params": {"N": 10, "w": 2, "eps": 1}})
    with pytest.raises(ConfigError, match="missing required key 'params.w'"):
        config_from_dict({"params": {"N": 10}})
    with pytest.raises(ConfigError, match="key 'trials': expected int, got str"):
        config_from_dict({"params": {"N": 10, "w": 2}, "trials": "5"})


def test_config_round_trip(tmp_path):
    cfg = config_from_dict({"params": {"N": 12, "w": 3, "epsilon": 2}, "seed": 9, "grid": {"U": [10, 20]}})
    path = tmp_path / "c.json"
    emit_config(cfg, path)
    back = parse_config(path)
    assert back == cfg and back.hash() == cfg.hash() and len(cfg.hash()) == 64
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError, match="JSON"):
        parse_config(tmp_path / "bad.json")


def test_provenance_lines():
    cfg = config_from_dict({"params": {"N": 12, "w": 3}})
    head = provenance(cfg, 5)
    assert head[0] == f"ldp-lab {__version__}"
    assert head[1] == f"config_sha256 {cfg.hash()}"
    assert head[2] == "seed 5" and head[3].startswith("config {")


def test_threads(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.setenv(THREADS_ENV, "x")
    with pytest.raises(ConfigError):
        resolve_threads(None)
    monkeypatch.delenv(THREADS_ENV)
    assert resolve_threads(None) >= 1
    with pytest.raises(ConfigError):
        resolve_threads(0)


# -- commands ----------------------------------------------------------------------

def test_golden_maxsense(capsys):
    assert main(["maxsense", "--N", "40", "--w", "8", "--U", "20000", "--seed", "3"]) == 0
    assert capsys.readouterr().out.strip() == GOLDEN_MAXSENSE
    assert main(["--seed", "3", "maxsense", "--N", "40", "--w", "8", "--U", "20000"]) == 0
    assert capsys.readouterr().out.strip() == GOLDEN_MAXSENSE


def test_config_file_with_override(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"params": {"N": 40, "w": 8, "U": 5}, "seed": 3}))
    emitted = tmp_path / "e.json"
    assert main(["maxsense", "--config", str(path), "--U", "20000", "--emit-config", str(emitted)]) == 0
    assert capsys.readouterr().out.strip() == GOLDEN_MAXSENSE
    assert parse_config(emitted).params["U"] == 20000


def test_exit_codes(tmp_path, capsys):
    assert main(["sweep", "--N", "10", "--w", "2"]) == 2
    assert "grid is empty" in capsys.readouterr().err
    assert main(["maxsense", "--N", "10", "--w", "20"]) == 2
    assert main(["maxsense", "--w", "2"]) == 2
    assert main(["nope"]) == 2
    (tmp_path / "c.json").write_text(json.dumps({"params": {"N": 10, "w": 2}, "typo": 1}))
    assert main(["maxsense", "--config", str(tmp_path / "c.json")]) == 2
    assert "unknown key 'typo'" in capsys.readouterr().err
    assert main(["maxsense", "--N", "10", "--w", "2", "--threads", "0"]) == 2


def test_threshold_not_bracketable_exit(tmp_path, capsys):
    c = tmp_path / "c.json"
    c.write_text(json.dumps({"params": {"N": 20, "w": 4, "b": [[0.5, 0.5]]}, "trials": 2, "U_cap": 400}))
    assert main(["threshold", "--config", str(c), "--U0", "50", "--threads", "1"]) == 3
    assert "not bracketable" in capsys.readouterr().err


def test_bounds_command(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bounds", "--max-n", "2", "--w", "1", "--epsilon", "0.5", "--kernels", "4",
                 "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "PASS" in text and "FAIL" not in text and "one-bit N=2" in text
    rows = read_csv_rows(out)
    assert len(rows) == 4 and all(r["passed"] == "1" for r in rows)
    assert out.read_text().startswith(f"# ldp-lab {__version__}\n")


def test_gen_writes_dataset(tmp_path):
    out = tmp_path / "d.txt"
    assert main(["gen", "--N", "8", "--U", "5", "--w", "2", "--seed", "4", "--out", str(out)]) == 0
    head, truth, pop = read_dataset(out)
    assert head["N"] == 8 and head["seed"] == 4 and head["tool"] == f"ldp-lab/{__version__}"
    assert len(head["config_sha256"]) == 64 and pop.items.shape == (5, 2)


def test_dumps(tmp_path, capsys):
    m, c, s = tmp_path / "m.csv", tmp_path / "c.csv", tmp_path / "s.txt"
    assert main(["pp", "--N", "8", "--w", "8", "--U", "300", "--dump-matrix", str(m)]) == 0
    assert main(["maxsense", "--N", "8", "--w", "2", "--U", "300", "--engine", "marginal",
                 "--dump-counts", str(c), "--dump-sketches", str(s)]) == 0
    capsys.readouterr()
    assert "i,j,count" in m.read_text()
    rows = read_csv_rows(c)
    assert len(rows) == 8 and set(rows[0]) == {"item", "B_i"}
    lines = [ln for ln in s.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 300
    sketch_total = sum(int(ln.split(",")[1]) for ln in lines)
    assert 0 < sketch_total < 300
    assert main(["pp", "--N", "8", "--w", "8", "--dump-matrix", str(tmp_path / "no" / "m.csv")]) == 2


def test_sweep_and_plot(tmp_path, capsys):
    c = tmp_path / "c.json"
    c.write_text(json.dumps({"params": {"N": 20, "w": 4}, "trials": 2, "grid": {"U": [100, 400, 1600]},
                             "seed": 1}))
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", str(c), "--threads", "1", "--out", str(out)]) == 0
    rows = read_csv_rows(out)
    assert [r["U"] for r in rows] == ["100", "400", "1600"]
    svg = tmp_path / "p.svg"
    assert main(["plot", "--input", str(out), "--out", str(svg), "--x", "U", "--y", "trials"]) == 0
    text = svg.read_text()
    assert ET.fromstring(text).tag.endswith("svg")
    assert "slope" in text and "config_sha256" in text
    assert "slope" in capsys.readouterr().out
    assert main(["plot", "--input", str(tmp_path / "none.csv"), "--out", str(svg)]) == 2


def test_baseline_command(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["baseline", "--scheme", "adaptive", "--N", "4", "8", "--runs", "50", "--out", str(out)]) == 0
    rows = read_csv_rows(out)
    assert [r["N"] for r in rows] == ["4", "8"]
    assert all(0.5 < float(r["normalized"]) < 1.5 for r in rows)
    assert main(["baseline", "--scheme", "coupon", "--N", "1"]) == 2


def test_version_and_module_entry():
    r = subprocess.run([sys.executable, "-m", "ldp_lab", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == f"ldp-lab {__version__}"


def test_plot_drops_non_positive(tmp_path, capsys):
    src = tmp_path / "t.csv"
    src.write_text("# hdr\nalgorithm,N,U_star\nmaxsense,10,0\nmaxsense,20,400\nmaxsense,40,1600\n"
                   "maxsense,80,6400\n")
    assert main(["plot", "--input", str(src), "--out", str(tmp_path / "p.svg")]) == 0
    out = capsys.readouterr()
    assert "dropped 1" in out.err and "slope 2.0000" in out.out
    src.write_text("algorithm,N,U_star\nmaxsense,10,0\n")
    assert main(["plot", "--input", str(src), "--out", str(tmp_path / "p.svg")]) == 2
