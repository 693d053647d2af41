import json
import struct
import subprocess
import sys
import zlib

import numpy as np
import pytest

from mobilestyle import config as configs
from mobilestyle.cli import main
from mobilestyle.weights import load_weights, save_weights


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    configs.save_config(configs.tiny_mobile(64), root / "mobile.json")
    configs.save_config(configs.tiny_mobile(32, demod_mode="style"), root / "style.json")
    configs.save_config(configs.stylegan2_f(), root / "dense.json")
    configs.save_config(configs.mobile(), root / "mobile1024.json")
    assert main(["init", "--config", str(root / "mobile.json"), "--out", str(root / "w.msgw"), "--seed", "1"]) == 0
    return root


def _decode_png(data):
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    pos, idat, ihdr = 8, b"", None
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        kind, body = data[pos + 4:pos + 8], data[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length:pos + 12 + length])
        assert crc == zlib.crc32(kind + body) & 0xFFFFFFFF
        if kind == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", body)
        elif kind == b"IDAT":
            idat += body
        pos += 12 + length
    w, h = ihdr[:2]
    raw = zlib.decompress(idat)
    rows = [raw[y * (3 * w + 1):(y + 1) * (3 * w + 1)] for y in range(h)]
    assert all(r[0] == 0 for r in rows)
    return np.frombuffer(b"".join(r[1:] for r in rows), np.uint8).reshape(h, w, 3)


def test_init_writes_manifest(workspace):
    m = json.loads((workspace / "w.msgw.manifest.json").read_text())
    assert m["command"] == "init" and m["seed"] == 1
    assert m["outputs"] == [str(workspace / "w.msgw")]


def test_generate_one_png(workspace, tmp_path):
    assert main(["generate", "--weights", str(workspace / "w.msgw"), "--seed", "42", "--out-dir", str(tmp_path)]) == 0
    img = _decode_png((tmp_path / "seed000042.png").read_bytes())
    assert img.shape == (64, 64, 3)
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["seed"] == 42 and m["tool_version"]
    assert m["argv"][0] == "generate"


def test_generate_deterministic_across_runs_and_workers(workspace, tmp_path):
    w = str(workspace / "w.msgw")
    for name, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        assert main(["generate", "--weights", w, "--seed", "5", "--count", "3", "--workers", workers,
                     "--out-dir", str(tmp_path / name)]) == 0
    for seed in (5, 6, 7):
        f = f"seed{seed:06d}.png"
        a = (tmp_path / "a" / f).read_bytes()
        assert a == (tmp_path / "b" / f).read_bytes() == (tmp_path / "c" / f).read_bytes()


def test_generate_pyramid(workspace, tmp_path):
    assert main(["generate", "--weights", str(workspace / "w.msgw"), "--pyramid", "--out-dir", str(tmp_path)]) == 0
    for res in (8, 16, 32, 64):
        assert _decode_png((tmp_path / f"seed000000_level{res}.png").read_bytes()).shape == (res, res, 3)
    assert (tmp_path / "seed000000_level64.png").read_bytes() == (tmp_path / "seed000000.png").read_bytes()


def test_generate_missing_weights(tmp_path, capsys):
    assert main(["generate", "--weights", str(tmp_path / "nope.msgw"), "--out-dir", str(tmp_path)]) != 0
    assert "not found" in capsys.readouterr().err


def test_generate_config_mismatch(workspace, tmp_path):
    assert main(["generate", "--weights", str(workspace / "w.msgw"), "--config", str(workspace / "style.json"),
                 "--out-dir", str(tmp_path)]) != 0


def test_optimize_idempotent(workspace, tmp_path, capsys):
    once, twice = tmp_path / "f1.msgw", tmp_path / "f2.msgw"
    assert main(["optimize", "--weights-in", str(workspace / "w.msgw"), "--weights-out", str(once)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and report["max_abs_divergence"] <= 1e-9
    assert main(["optimize", "--weights-in", str(once), "--weights-out", str(twice)]) == 0
    assert once.read_bytes() == twice.read_bytes()
    assert load_weights(once).config.demod_mode == "fused"
    assert (tmp_path / "f1.msgw.manifest.json").exists()


def test_optimize_style_not_foldable(workspace, tmp_path, capsys):
    src = tmp_path / "s.msgw"
    assert main(["init", "--config", str(workspace / "style.json"), "--out", str(src)]) == 0
    assert main(["optimize", "--weights-in", str(src), "--weights-out", str(tmp_path / "o.msgw")]) == 2
    assert "not foldable" in capsys.readouterr().err
    assert not (tmp_path / "o.msgw").exists()


def test_count_json(workspace, capsys):
    assert main(["count", "--config", str(workspace / "dense.json"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert abs(data["total_params"] / 28.27e6 - 1) <= 0.05


def test_count_compare_table(workspace, capsys, tmp_path):
    man = tmp_path / "count.json"
    assert main(["count", "--config", str(workspace / "dense.json"), "--compare", str(workspace / "mobile1024.json"),
                 "--manifest", str(man)]) == 0
    out = capsys.readouterr().out
    assert "| Network" in out and "ratio" in out
    assert json.loads(man.read_text())["command"] == "count"


def test_bench(workspace, tmp_path, capsys):
    assert main(["bench", "--weights", str(workspace / "w.msgw"), "--iters", "1", "--warmup", "0",
                 "--fused-vs-unfused", "--out-dir", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "bench.manifest.json").read_text())
    assert set(m["timings"]) == {"unfused", "fused"}
    assert m["extra"]["threads"] == 1
    assert "Time (sec.)" in capsys.readouterr().out


def test_verify_all(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_verify_fault_injection(workspace, tmp_path, capsys):
    good = tmp_path / "fused.msgw"
    assert main(["optimize", "--weights-in", str(workspace / "w.msgw"), "--weights-out", str(good)]) == 0
    bad = load_weights(good)
    key = "synthesis.b8.conv_main.pw"
    arr = bad[key].copy()
    arr[0, 0, 0, 0] += 1e-3
    bad.params[key] = arr
    save_weights(bad, tmp_path / "bad.msgw")
    capsys.readouterr()
    assert main(["verify", "--suite", "fusion", "--weights", str(workspace / "w.msgw"),
                 "--fused", str(tmp_path / "bad.msgw")]) == 1
    assert "[FAIL] fusion" in capsys.readouterr().out


def test_console_entry_point(workspace):
    proc = subprocess.run([sys.executable, "-m", "mobilestyle", "count", "--config", str(workspace / "mobile.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "GMACs" in proc.stdout
