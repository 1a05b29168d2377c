"""End-to-end pipeline driver tests on a fast closed-form system."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from semichord.cli import main

CONFIG = """\
[hamiltonian]
kind = "polynomial"
hbar = 1.0
masses = [1.0, 1.0]
label = "harmonic"
terms = [[0.5, [2, 0]], [0.5, [0, 2]]]

[grid]
lower = [-8.0, -8.0]
upper = [8.0, 8.0]
n = [64, 64]

[solve]
indices = [0, 1, 2]
seed = 0

[[sections]]
axes = ["xi_p1", "xi_p2"]
half_widths = [2.2, 2.2]
resolution = 64

[lqec]
routes = ["mc"]
sigma = 0.05
n_samples = 2000
seed = 5

[correlation]
anchors = [[0.0, 0.0]]
delta = 1.0
direction = [1.0, 0.0]
max_xi = 4.0
points = 60

[compare]
pairs = [[1, 2]]

[output]
dir = "out"
"""


@pytest.fixture(scope="module")
def project(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.toml"
    cfg.write_text(CONFIG)
    assert main(["solve", str(cfg)]) == 0
    return root


def _manifest_values(path: Path) -> dict:
    out = {}
    for line in path.read_text().splitlines():
        if line.startswith("#") or " = " not in line:
            continue
        key, _, val = line.partition(" = ")
        out[key] = val
    return out


def _tree_digest(root: Path) -> dict:
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_solve_writes_manifest_with_closed_form_energies(project):
    manifest = project / "out" / "solve_manifest.txt"
    assert manifest.exists()
    vals = _manifest_values(manifest)
    assert abs(float(vals["state_0000_energy"]) - 1.0) < 1e-6
    assert abs(float(vals["state_0001_energy"]) - 2.0) < 1e-6
    assert abs(float(vals["state_0002_energy"]) - 2.0) < 1e-6
    assert float(vals["state_0000_residual"]) < 1e-8
    assert vals["hamiltonian"] == "harmonic"


def test_solve_rerun_uses_cache_and_is_identical(project, capsys):
    manifest = project / "out" / "solve_manifest.txt"
    before = manifest.read_bytes()
    assert main(["solve", str(project / "run.toml")]) == 0
    out = capsys.readouterr().out
    assert "3 cached" in out and "0 computed" in out
    assert manifest.read_bytes() == before


def test_chord_writes_sections_and_images(project):
    assert main(["chord", str(project / "run.toml")]) == 0
    sections = project / "out" / "sections"
    for source in ("exact", "lqec_mc"):
        stem = f"state0000_xi_p1_xi_p2_{source}"
        assert (sections / f"{stem}.csv").exists()
        assert (sections / f"{stem}.re.png").exists()
        assert (sections / f"{stem}.mod.png").exists()
    from semichord.exports import read_section_csv

    data = read_section_csv(sections / "state0000_xi_p1_xi_p2_exact.csv")
    mid = len(data["u"]) // 2, len(data["v"]) // 2
    # chi(0) = 1; even resolution puts nodes half a step off the origin
    assert abs(data["values"][mid]) > 0.9
    assert np.abs(data["values"]).max() <= 1.0 + 1e-9


def test_chord_rerun_byte_identical(project):
    sections = project / "out" / "sections"
    before = _tree_digest(sections)
    assert main(["chord", str(project / "run.toml")]) == 0
    assert _tree_digest(sections) == before


def test_spots_pipeline_and_ellipsoid_row(project):
    assert main(["spots", str(project / "run.toml")]) == 0
    spots_dir = project / "out" / "spots"
    for source in ("exact", "lqec_mc"):
        stem = f"state0000_xi_p1_xi_p2_{source}"
        assert (spots_dir / f"{stem}_lines_real.csv").exists()
        assert (spots_dir / f"{stem}_lines_imag.csv").exists()
        assert (spots_dir / f"{stem}_spots.csv").exists()
        assert (spots_dir / f"{stem}_overlay.png").exists()
    rows = [
        ln.split(",")
        for ln in (spots_dir / "first_spot_summary.csv").read_text().splitlines()
        if ln and not ln.startswith("#") and not ln.startswith("state,")
    ]
    ell = {r[0]: float(r[3]) for r in rows if r[2] == "ellipsoid"}
    # ground-state covariance is (hbar/2) I, so the quadratic-form
    # crossing sits at 2 sqrt(hbar) on every axis
    assert ell["0"] == pytest.approx(2.0, abs=1e-6)
    exact_rows = [r for r in rows if r[2] == "exact"]
    assert len(exact_rows) == 3


def test_corr_curves_and_first_zero(project):
    assert main(["corr", str(project / "run.toml")]) == 0
    corr = project / "out" / "correlations"
    assert (corr / "state0000_anchor0_exact.csv").exists()
    assert (corr / "state0000_anchor0_lqec.csv").exists()
    rows = [
        ln.split(",")
        for ln in (corr / "first_zero_summary.csv").read_text().splitlines()
        if ln and not ln.startswith("#") and not ln.startswith("state,")
    ]
    by_state = {r[0]: r for r in rows}
    # the ground-state autocorrelation is a positive Gaussian
    assert by_state["0"][2] == "absent"
    # shell kernel along q1 crosses at (first J0 zero)/sqrt(2 m) / r_E
    assert float(by_state["0"][3]) == pytest.approx(2.404826 / np.sqrt(2.0), abs=5e-3)


def test_compare_on_degenerate_pattern_exits_config(project):
    # parity-symmetric states have real sections: spot mode "curves" is a
    # validation stop, not a crash
    assert main(["compare", str(project / "run.toml")]) == 2


def test_output_dir_and_seed_overrides(project, tmp_path):
    alt = tmp_path / "elsewhere"
    code = main(["solve", str(project / "run.toml"), "--output-dir", str(alt)])
    assert code == 0
    assert (alt / "solve_manifest.txt").exists()


def test_exit_codes(project, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("not [valid toml")
    assert main(["solve", str(bad)]) == 2
    assert main(["solve", str(tmp_path / "missing.toml")]) == 2

    # spots before chord: the dependency artifact is reported, not crashed
    fresh = tmp_path / "fresh.toml"
    fresh.write_text(CONFIG.replace('dir = "out"', 'dir = "fresh_out"'))
    assert main(["solve", str(fresh)]) == 0
    assert main(["spots", str(fresh)]) == 4

    lowres = tmp_path / "lowres.toml"
    lowres.write_text(
        CONFIG.replace("resolution = 64", "resolution = 16").replace(
            'dir = "out"', 'dir = "lowres_out"'
        )
    )
    assert main(["solve", str(lowres)]) == 0
    assert main(["chord", str(lowres)]) == 2

    badroute = tmp_path / "badroute.toml"
    badroute.write_text(CONFIG.replace('routes = ["mc"]', 'routes = ["magic"]'))
    assert main(["chord", str(badroute)]) == 2

    noidx = tmp_path / "noidx.toml"
    noidx.write_text(CONFIG.replace("indices = [0, 1, 2]", "indices = []"))
    assert main(["solve", str(noidx)]) == 2
