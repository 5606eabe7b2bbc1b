import json
import math

import numpy as np
import pytest

from isomlab import config as cfgmod
from isomlab.cli import main
from isomlab.manifest import RunManifest, append_manifest, read_manifests


def write_cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_default_gap_measure_shape():
    mu = cfgmod.default_gap_measure()
    assert len(mu.atoms) == 2
    assert np.allclose(mu.weights(), 0.5)
    vs = sorted(tuple(g.v) for g in mu.elements())
    assert vs == [(0.0, 0.0, 1.0), (1.0, 0.0, 0.0)]
    # config round-trip builds the same measure
    mu2 = cfgmod.parse_measure(cfgmod.default_gap_measure_config())
    assert np.allclose(mu.elements()[0].rot.matrix, mu2.elements()[0].rot.matrix)


def test_parse_rotation_forms():
    r1 = cfgmod.parse_rotation({"axis": [0, 0, 1], "angle": 0.5}, 3)
    r2 = cfgmod.parse_rotation(r1.matrix.tolist(), 3)
    assert np.allclose(r1.matrix, r2.matrix)
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.parse_rotation({"axis": [0, 0, 1]}, 3)
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.parse_rotation([[1, 0], [0.5, 1]], 2)


def test_validate_config_errors_name_field():
    with pytest.raises(cfgmod.ConfigError, match="weights sum"):
        cfgmod.validate_config({"measure": {"atoms": [
            {"weight": 0.9, "rotation": {"axis": [0, 0, 1], "angle": 1.0},
             "translation": [0, 0, 1]}]}})
    with pytest.raises(cfgmod.ConfigError, match="nope"):
        cfgmod.validate_config({"nope": 1})
    with pytest.raises(cfgmod.ConfigError, match="n"):
        cfgmod.validate_config({"n": 0})
    with pytest.raises(cfgmod.ConfigError, match="schema_version"):
        cfgmod.validate_config({"schema_version": 99})


def test_config_digest_stable_and_sensitive():
    a = cfgmod.validate_config({"seed": 1})
    b = cfgmod.validate_config({"seed": 1})
    c = cfgmod.validate_config({"seed": 2})
    assert cfgmod.config_digest(a) == cfgmod.config_digest(b)
    assert cfgmod.config_digest(a) != cfgmod.config_digest(c)


def test_manifest_append_only(tmp_path):
    path = tmp_path / "manifest.jsonl"
    m1 = RunManifest("walk", "abc", 1)
    m1.add_output("walk.csv")
    m1.finish()
    append_manifest(path, m1)
    append_manifest(path, RunManifest("llt", "def", 2))
    recs = read_manifests(path)
    assert len(recs) == 2
    assert recs[0]["command"] == "walk"
    assert recs[0]["run_id"] == "walk-abc-1"
    assert recs[0]["outputs"] == ["walk.csv"]


def test_unknown_subcommand_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["nosuch"])
    assert exc.value.code == 2


def test_malformed_config_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"measure": {"atoms": [
        {"weight": 0.9, "rotation": {"axis": [0, 0, 1], "angle": 1.0},
         "translation": [0, 0, 1]}]}})
    code = main(["--config", cfg, "--out-dir", str(tmp_path / "o"), "spectrum"])
    assert code == 2
    assert "weights sum" in capsys.readouterr().err


def test_walk_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, {"l": 5, "n": 2000})
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["--config", cfg, "--out-dir", str(out1), "walk"]) == 0
    assert main(["--config", cfg, "--out-dir", str(out2), "walk"]) == 0
    assert (out1 / "walk.csv").read_bytes() == (out2 / "walk.csv").read_bytes()
    assert ((out1 / "walk_endpoints.bin").read_bytes()
            == (out2 / "walk_endpoints.bin").read_bytes())


def test_walk_seed_changes_output(tmp_path):
    cfg = write_cfg(tmp_path, {"l": 5, "n": 2000})
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["--config", cfg, "--out-dir", str(out1), "walk"])
    main(["--config", cfg, "--seed", "9", "--out-dir", str(out2), "walk"])
    assert ((out1 / "walk_endpoints.bin").read_bytes()
            != (out2 / "walk_endpoints.bin").read_bytes())


def test_spectrum_identity_measure_flat_curve(tmp_path):
    cfg = write_cfg(tmp_path, {
        "symmetrize_power": 0, "r_grid": [0.5, 1.0], "lmax_cap": 8,
        "measure": {"atoms": [{"weight": 1.0,
                               "rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
                               "translation": [0, 0, 0]}]}})
    out = tmp_path / "o"
    code = main(["--config", cfg, "--out-dir", str(out), "spectrum"])
    # curve == 1 identically: fitted c is 0, so the gap check fails -> exit 1
    assert code == 1
    lines = (out / "spectrum.csv").read_text().strip().splitlines()
    assert lines[0].startswith("# manifest: spectrum-")
    for row in lines[2:]:
        assert abs(float(row.split(",")[1]) - 1.0) < 1e-10


def test_spectrum_default_passes_small_grid(tmp_path):
    cfg = write_cfg(tmp_path, {"symmetrize_power": 2, "r_grid": [0.4, 0.8],
                               "lmax_cap": 16})
    out = tmp_path / "o"
    assert main(["--config", cfg, "--out-dir", str(out), "spectrum"]) == 0
    assert (out / "spectrum.png").exists()
    recs = read_manifests(out / "manifest.jsonl")
    assert str(out / "spectrum.csv") in recs[0]["outputs"]


def test_selfsim_requires_ifs_and_rejects_fixed_point(tmp_path):
    cfg = write_cfg(tmp_path, {})
    assert main(["--config", cfg, "--out-dir", str(tmp_path / "o"),
                 "selfsim"]) == 2
    # single map has a fixed point: invariant violation
    bad = write_cfg(tmp_path, {"ifs": {"d": 3, "atoms": [
        {"weight": 1.0, "rotation": {"axis": [0, 0, 1], "angle": 1.0},
         "translation": [1, 0, 0], "lambda": 0.5}]}}, "bad.json")
    assert main(["--config", bad, "--out-dir", str(tmp_path / "o"),
                 "selfsim"]) == 2


def test_selfsim_bernoulli_run(tmp_path):
    cfg = write_cfg(tmp_path, {
        "r_grid": [0.125 + 2.0**j for j in range(3)],
        "ifs": {"d": 1, "atoms": [
            {"weight": 0.5, "rotation": [[1.0]], "translation": [1.0],
             "lambda": 0.5},
            {"weight": 0.5, "rotation": [[1.0]], "translation": [-1.0],
             "lambda": 0.5}]}})
    out = tmp_path / "o"
    assert main(["--config", cfg, "--out-dir", str(out), "selfsim"]) == 0
    lines = (out / "selfsim_decay.csv").read_text().strip().splitlines()
    # r, norm columns track |sinc| at the chosen radii
    for row in lines[2:]:
        r, norm = float(row.split(",")[0]), float(row.split(",")[1])
        expect = abs(math.sin(4 * math.pi * r) / (4 * math.pi * r))
        assert abs(norm - expect) < 1e-5


def test_threej_cache_env(tmp_path, monkeypatch):
    cache = tmp_path / "threej.pkl"
    monkeypatch.setenv("ISOMLAB_CACHE", str(cache))
    cfg = write_cfg(tmp_path, {"l": 2, "n": 2000})
    assert main(["--config", cfg, "--out-dir", str(tmp_path / "o"),
                 "walk"]) == 0
    assert cache.exists()
