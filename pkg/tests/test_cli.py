import subprocess
import sys

import pytest

from samplefilter.cli import main


def test_dump_config_with_overrides(capsys):
    assert main(["dump-config", "--cap", "100", "--set", "kernel.sigma_c=5", "--no-crf"]) == 0
    out = capsys.readouterr().out
    assert "sampler.cap = 100" in out and "kernel.sigma_c = 5.0" in out and "pipeline.no_crf = true" in out


def test_config_error_exit_code(capsys):
    assert main(["dump-config", "--set", "kernel.sigma_c=-3"]) == 2
    assert main(["dump-config", "--set", "bogus"]) == 2


def test_missing_manifest_exit_code(tmp_path, capsys):
    rc = main(["parse", "--train", str(tmp_path / "x.txt"), "--query", str(tmp_path / "y.txt"), "--out", str(tmp_path)])
    assert rc == 2
    assert "not found" in capsys.readouterr().err


def test_synth_parse_eval(tmp_path, capsys):
    corpus = tmp_path / "c"
    assert main(["synth", "--out", str(corpus), "--train-count", "8", "--query-count", "2", "--size", "64"]) == 0
    out = tmp_path / "o"
    rc = main(["parse", "--train", str(corpus / "train.txt"), "--query", str(corpus / "query.txt"),
               "--out", str(out), "--no-crf", "--cap", "50", "--seed", "1", "--cell", "16", "--sigma-d-sample", "0.5"])
    assert rc == 0
    assert "per-pixel" in capsys.readouterr().out
    assert main(["eval", "--query", str(corpus / "query.txt"), "--pred", str(out),
                 "--palette", str(corpus / "palette.csv")]) == 0
    assert '"per_pixel"' in capsys.readouterr().out


def test_verify_and_bench_small(capsys):
    assert main(["verify", "--instances", "1", "--ns", "200", "--nq", "50"]) == 0
    assert "median" in capsys.readouterr().out
    assert main(["bench", "--ns", "1000", "2000", "--nq", "100", "--repeats", "1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("N_s,N_q,D,V,splat_ms,blur_ms,slice_ms")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "samplefilter.cli", "dump-config"], capture_output=True, text=True)
    assert r.returncode == 0 and "crf.w_app" in r.stdout
