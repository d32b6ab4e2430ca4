import csv
import subprocess
import sys

import numpy as np
import pytest

from brdfgrad.brdf import Kind
from brdfgrad.cli import gi_ray_counts, quadratic_fit, registry, run
from brdfgrad.decomp import Decomposition
from brdfgrad.render import read_pfm


def test_registry_contents():
    rows = {(r[0], r[1]): (r[2], r[3]) for r in registry()}
    assert rows[(Kind.IsoGGX, "alpha")][0] is Decomposition.Positivization
    assert rows[(Kind.AshikhminShirley, "nu")][0] is Decomposition.Product
    assert rows[(Kind.OrenNayar, "sigma")][0] is Decomposition.Mixture
    assert all(isinstance(r[3], str) and r[3] for r in registry())


def test_usage_errors(tmp_path, capsys):
    assert run([]) == 2
    assert run(["frobnicate"]) == 2
    assert run(["pdf-check"]) == 2
    assert run(["pdf-check", "--model", "Phong"]) == 2
    assert run(["demo-1d", "--sigma", "0"]) == 2
    assert run(["demo-1d", "--threads", "0"]) == 2
    assert run(["demo-1d", "--out", str(tmp_path / "nope" / "x.csv")]) == 2
    assert "does not exist" in capsys.readouterr().err


def test_config_errors_exit_two(tmp_path):
    assert run(["grad-image", "--scene", "builtin:teapot", "--target", "a.b"]) == 2
    assert run(["grad-image", "--scene", str(tmp_path / "missing.json"), "--target", "a.b"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["grad-image", "--scene", str(bad), "--target", "a.b"]) == 2
    assert run(["grad-image", "--scene", "builtin:ggx_sphere_env", "--target", "ball.kappa",
                "--spp", "1"]) == 2
    assert run(["grad-image", "--scene", "builtin:ggx_sphere_env", "--target", "ball.alpha",
                "--mis-light", "--spp", "1"]) == 2
    assert run(["invrend", "--setup", "teapot"]) == 2


def test_demo_1d(tmp_path, capsys):
    out = tmp_path / "demo.csv"
    assert run(["demo-1d", "--runs", "2000", "--out", str(out)]) == 0
    rows = {r["estimator"]: r for r in csv.DictReader(open(out))}
    assert float(rows["Positivization"]["variance"]) == 0.0
    assert float(rows["ZeltnerAntithetic"]["variance"]) == 0.0
    assert float(rows["BrdfSampling"]["variance"]) > 0.3
    assert "Positivization" in capsys.readouterr().out


def test_grad_check_subset(tmp_path):
    out = tmp_path / "g.csv"
    assert run(["grad-check", "--model", "IsoGGX", "--configs", "10", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert rows[0]["model"] == "IsoGGX" and float(rows[0]["max_rel_error"]) < 1e-4


def test_pdf_check_and_chi2_subset(tmp_path):
    assert run(["pdf-check", "--model", "HanrahanKrueger"]) == 0
    out = tmp_path / "c.csv"
    assert run(["chi2", "--model", "IsoGGX", "--samples", "30000", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert run(["chi2", "--model", "IsoGGX", "--samples", "1000"]) == 2
    assert len(rows) == 8 and all(0 <= float(r["chi2_p"]) <= 1 for r in rows)


def test_pdf_dump(tmp_path):
    out = tmp_path / "p.csv"
    assert run(["pdf-dump", "--model", "IsoGGX", "--param", "alpha", "--params", "alpha=0.3",
                "--lobe", "1", "--n-theta", "16", "--n-phi", "8", "--out", str(out)]) == 0
    assert len(list(csv.reader(open(out)))) == 16 * 8 + 1
    assert run(["pdf-dump", "--model", "IsoGGX", "--param", "alpha", "--lobe", "2"]) == 2
    assert run(["pdf-dump", "--model", "IsoGGX", "--param", "alpha", "--params", "alpha"]) == 2


def test_grad_image_writes_pfm(tmp_path):
    out = tmp_path / "g.pfm"
    assert run(["grad-image", "--scene", "builtin:hk_two_light", "--target", "ball.g",
                "--kind", "pos", "--spp", "1", "--out", str(out)]) == 0
    assert read_pfm(out).shape == (64, 64)


def test_variance_bench(tmp_path):
    from brdfgrad.render.library import ggx_sphere_env
    import json
    scene = tmp_path / "s.json"
    scene.write_text(json.dumps(ggx_sphere_env(8)))
    out = tmp_path / "v.csv"
    assert run(["variance-bench", "--scene", str(scene), "--target", "ball.alpha",
                "--kinds", "brdf,pos", "--spp", "1", "--runs", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["kind"] for r in rows] == ["BrdfSampling", "Positivization"]


def test_gi_ray_counts_quadratic():
    d = [1, 2, 3, 4]
    counts = gi_ray_counts(d)
    assert np.allclose(counts, [3, 7, 13, 21])
    coef, resid = quadratic_fit(d, counts)
    assert resid < 1e-9 and coef[0] == pytest.approx(1.0)


def test_invrend_small(tmp_path):
    out = tmp_path / "inv.csv"
    assert run(["invrend", "--setup", "logo", "--res", "8", "--iterations", "3", "--spp", "1",
                "--out", str(out)]) == 0
    assert len(list(csv.reader(open(out)))) == 5
    assert read_pfm(tmp_path / "inv_panel_g.pfm").shape == (8, 8)


def test_console_script_module():
    r = subprocess.run([sys.executable, "-m", "brdfgrad.cli", "demo-1d", "--runs", "100"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "BrdfSampling" in r.stdout
