"""Command-line pipeline driver.

One TOML config describes the whole run (Hamiltonian, grid, states,
section planes, shell-approximation parameters, analysis radii); the
subcommand picks which stage to execute. Stages communicate through
files in the output directory, so reruns are incremental and two runs
with the same config are byte-identical.

Exit codes: 0 success, 2 config/validation error, 3 numerical failure,
4 missing dependency artifact.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import tomli

from . import __version__, analysis, exports
from .eigensolver import (
    CacheError,
    Eigenpair,
    GridSpec,
    GridTooSmallError,
    SolverConvergenceError,
    discretize,
    energy_for_index,
    load_eigenpair,
    solve,
    store_eigenpair,
)
from .hamiltonian import Chord, HamiltonianSpec, box_billiard, nelson, polynomial_spec
from .lqec import (
    QuadratureError,
    QuadratureSpec,
    TuningError,
    bessel_section,
    chord_bessel,
    ellipsoid_predictor,
    mc_section,
    sample_shell,
)
from .phasespace import ChordSection, SectionPlane, chord_section, covariance, section_evaluator

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISSING = 4


class ConfigError(ValueError):
    """Configuration failed validation before any computation."""


class MissingArtifactError(FileNotFoundError):
    """A required artifact from an earlier stage is absent."""


# ---------------------------------------------------------------------------
# config loading


class RunConfig:
    def __init__(self, raw: Dict, path: Path, outdir_override: Optional[str], seed_override: Optional[int]):
        self.raw = raw
        self.path = path
        out = outdir_override or self._get(["output", "dir"], "out")
        self.outdir = (path.parent / out).resolve() if not Path(out).is_absolute() else Path(out)
        self.seed_override = seed_override
        self.hash = exports.config_hash(raw)
        self.hbar = float(self._get(["hamiltonian", "hbar"], 1.0))
        if self.hbar <= 0:
            raise ConfigError("hamiltonian.hbar must be positive")
        self.spec = self._build_spec()
        self.grid = self._build_grid()
        self.indices = self._indices()

    def _get(self, keys: List[str], default=None, required: bool = False):
        node = self.raw
        for key in keys:
            if not isinstance(node, dict) or key not in node:
                if required:
                    raise ConfigError(f"missing config key {'.'.join(keys)}")
                return default
            node = node[key]
        return node

    def _build_spec(self) -> HamiltonianSpec:
        kind = self._get(["hamiltonian", "kind"], required=True)
        if kind == "nelson":
            return nelson(hbar=self.hbar)
        if kind == "box_billiard":
            lower = self._get(["hamiltonian", "lower"], (0.0, 0.0))
            upper = self._get(["hamiltonian", "upper"], (1.0, 1.0))
            return box_billiard(lower, upper)
        if kind == "polynomial":
            terms_raw = self._get(["hamiltonian", "terms"], required=True)
            masses = self._get(["hamiltonian", "masses"], (1.0, 1.0))
            try:
                terms = tuple((float(t[0]), tuple(int(e) for e in t[1])) for t in terms_raw)
            except (TypeError, IndexError) as exc:
                raise ConfigError(f"bad polynomial terms: {exc}") from exc
            label = self._get(["hamiltonian", "label"], "polynomial")
            return polynomial_spec(terms, masses=tuple(float(m) for m in masses), label=label)
        raise ConfigError(f"unknown hamiltonian kind {kind!r}")

    def _build_grid(self) -> GridSpec:
        lower = self._get(["grid", "lower"], required=True)
        upper = self._get(["grid", "upper"], required=True)
        n = self._get(["grid", "n"], required=True)
        try:
            return GridSpec(tuple(float(x) for x in lower), tuple(float(x) for x in upper), tuple(int(m) for m in n))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def _indices(self) -> List[int]:
        idx = self._get(["solve", "indices"], required=True)
        out = sorted(set(int(i) for i in idx))
        if not out or out[0] < 0:
            raise ConfigError("solve.indices must be non-negative integers")
        return out

    @property
    def solve_seed(self) -> int:
        if self.seed_override is not None:
            return self.seed_override
        return int(self._get(["solve", "seed"], 0))

    @property
    def lqec_seed(self) -> int:
        if self.seed_override is not None:
            return self.seed_override
        return int(self._get(["lqec", "seed"], 0))

    def sections(self) -> List[Dict]:
        secs = self._get(["sections"], [])
        if not isinstance(secs, list) or not secs:
            raise ConfigError("config needs at least one [[sections]] table")
        return secs

    def plane_of(self, sec: Dict) -> Tuple[SectionPlane, Tuple[float, float], Tuple[int, int]]:
        try:
            axes = tuple(sec["axes"])
            half = tuple(float(x) for x in sec["half_widths"])
            res_raw = sec["resolution"]
            res = tuple(int(r) for r in res_raw) if isinstance(res_raw, list) else (int(res_raw), int(res_raw))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad section table: {exc}") from exc
        offset = sec.get("offset")
        off_chord = None
        if offset is not None:
            off = [float(x) for x in offset]
            if len(off) != 4:
                raise ConfigError("section offset must have 4 components (xi_p1, xi_p2, xi_q1, xi_q2)")
            off_chord = Chord(xi_p=np.array(off[:2]), xi_q=np.array(off[2:]))
        try:
            plane = SectionPlane(axes=axes, offset=off_chord)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return plane, half, res

    def lqec_routes(self) -> List[str]:
        routes = self._get(["lqec", "routes"], [])
        bad = set(routes) - {"mc", "bessel"}
        if bad:
            raise ConfigError(f"unknown lqec routes {sorted(bad)}")
        return list(routes)

    def lqec_sigma(self, energy: float) -> float:
        sigma = self._get(["lqec", "sigma"])
        if sigma is not None:
            return float(sigma)
        rel = float(self._get(["lqec", "sigma_rel"], 0.0025))
        return rel * abs(energy)

    def quad_spec(self) -> QuadratureSpec:
        return QuadratureSpec(rel_tol=float(self._get(["lqec", "quad_rel_tol"], 1e-4)))

    def planck_radius(self) -> float:
        scale = float(self._get(["analysis", "radius_scale"], 1.0))
        return scale * math.sqrt(2.0 * math.pi * self.hbar)

    def spot_axis(self) -> Tuple[float, float]:
        ax = self._get(["analysis", "axis"], [1.0, 0.0])
        return float(ax[0]), float(ax[1])


def _load_config(path_str: str, seed: Optional[int], outdir: Optional[str]) -> RunConfig:
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return RunConfig(raw, path, outdir, seed)


# ---------------------------------------------------------------------------
# artifact paths


def _state_path(cfg: RunConfig, index: int) -> Path:
    key = exports.config_hash(
        {
            "hamiltonian": cfg.raw.get("hamiltonian"),
            "grid": cfg.raw.get("grid"),
            "seed": cfg.solve_seed,
        }
    )
    return cfg.outdir / "states" / f"{cfg.spec.label}_i{index:04d}_{key}.state"


def _section_path(cfg: RunConfig, index: int, plane: SectionPlane, source: str) -> Path:
    stem = f"state{index:04d}_{plane.axes[0]}_{plane.axes[1]}_{source}"
    return cfg.outdir / "sections" / (stem + ".csv")


def _load_state(cfg: RunConfig, index: int) -> Eigenpair:
    path = _state_path(cfg, index)
    if not path.exists():
        raise MissingArtifactError(
            f"no cached eigenstate for index {index} at {path}; run `semichord solve` first"
        )
    return load_eigenpair(path, expect_hbar=cfg.hbar, expect_label=cfg.spec.label)


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(cfg: RunConfig) -> int:
    (cfg.outdir / "states").mkdir(parents=True, exist_ok=True)
    missing = []
    pairs: Dict[int, Eigenpair] = {}
    for index in cfg.indices:
        path = _state_path(cfg, index)
        if path.exists():
            try:
                pairs[index] = load_eigenpair(path, expect_hbar=cfg.hbar, expect_label=cfg.spec.label)
                continue
            except CacheError:
                path.unlink()
        missing.append(index)

    if missing:
        k = max(missing) + 1
        hint = energy_for_index(cfg.spec, k, cfg.hbar)
        op = discretize(cfg.spec, cfg.grid, cfg.hbar, target_energy=hint)
        solved = solve(op, k, seed=cfg.solve_seed, energy_hint=hint)
        for index in missing:
            pair = solved[index]
            store_eigenpair(_state_path(cfg, index), pair)
            pairs[index] = pair

    entries: Dict[str, object] = {
        "hamiltonian": cfg.spec.label,
        "hbar": exports._fmt(cfg.hbar),
        "grid_lower": ";".join(exports._fmt(x) for x in cfg.grid.lower),
        "grid_upper": ";".join(exports._fmt(x) for x in cfg.grid.upper),
        "grid_n": ";".join(str(x) for x in cfg.grid.n),
        "solve_seed": cfg.solve_seed,
    }
    for index in cfg.indices:
        entries[f"state_{index:04d}_energy"] = exports._fmt(pairs[index].energy)
        entries[f"state_{index:04d}_residual"] = exports._fmt(pairs[index].residual)
    exports.write_manifest(cfg.outdir / "solve_manifest.txt", cfg.hash, entries)
    print(f"solved {len(cfg.indices)} states ({len(missing)} computed, {len(cfg.indices) - len(missing)} cached)")
    return EXIT_OK


def _write_section_artifacts(cfg: RunConfig, index: int, plane: SectionPlane, section: ChordSection) -> None:
    path = _section_path(cfg, index, plane, section.source)
    exports.write_section_csv(path, section, cfg.hash)
    exports.render_heatmap(
        path.with_suffix(".re.png"), section.u, section.v, section.values.real, cfg.hash, mode="diverging"
    )
    exports.render_heatmap(
        path.with_suffix(".mod.png"), section.u, section.v, np.abs(section.values), cfg.hash, mode="modulus"
    )


def cmd_chord(cfg: RunConfig) -> int:
    (cfg.outdir / "sections").mkdir(parents=True, exist_ok=True)
    routes = cfg.lqec_routes()
    samples: Dict[float, object] = {}
    for index in cfg.indices:
        pair = _load_state(cfg, index)
        for sec in cfg.sections():
            plane, half, res = cfg.plane_of(sec)
            exact = chord_section(pair.state, plane, half, res, source="exact")
            _write_section_artifacts(cfg, index, plane, exact)
            if "mc" in routes:
                sigma = cfg.lqec_sigma(pair.energy)
                key = (pair.energy, sigma)
                if key not in samples:
                    samples[key] = sample_shell(
                        cfg.spec,
                        pair.energy,
                        sigma,
                        int(cfg._get(["lqec", "n_samples"], 100000)),
                        cfg.lqec_seed,
                    )
                mc = mc_section(samples[key], plane, half, res, cfg.hbar)
                _write_section_artifacts(cfg, index, plane, mc)
            if "bessel" in routes:
                bes = bessel_section(
                    cfg.spec, pair.energy, plane, half, res, cfg.hbar, quad=cfg.quad_spec()
                )
                _write_section_artifacts(cfg, index, plane, bes)
    print(f"wrote chord sections for {len(cfg.indices)} states")
    return EXIT_OK


def _read_section(cfg: RunConfig, index: int, plane: SectionPlane, source: str) -> ChordSection:
    path = _section_path(cfg, index, plane, source)
    if not path.exists():
        raise MissingArtifactError(f"section artifact {path} missing; run `semichord chord` first")
    data = exports.read_section_csv(path)
    return ChordSection(plane, data["u"], data["v"], data["values"], cfg.hbar, source)


def _spots_of(cfg: RunConfig, index: int, plane: SectionPlane, source: str, pair: Optional[Eigenpair]):
    section = _read_section(cfg, index, plane, source)
    real = analysis.nodal_lines(section, "real")
    imag = analysis.nodal_lines(section, "imaginary")
    evaluator = None
    if source == "exact" and pair is not None:
        evaluator = section_evaluator(pair.state, plane)
    spots = analysis.blind_spots(real, imag, section, evaluator=evaluator)
    return section, real, imag, spots


def cmd_spots(cfg: RunConfig) -> int:
    (cfg.outdir / "spots").mkdir(parents=True, exist_ok=True)
    routes = cfg.lqec_routes()
    axis = cfg.spot_axis()
    summary_rows = []
    for index in cfg.indices:
        pair = _load_state(cfg, index)
        for sec_cfg in cfg.sections():
            plane, _, _ = cfg.plane_of(sec_cfg)
            stem = f"state{index:04d}_{plane.axes[0]}_{plane.axes[1]}"
            sources = ["exact"] + [f"lqec_{r}" for r in routes]
            for source in sources:
                section, real, imag, spots = _spots_of(cfg, index, plane, source, pair)
                exports.write_nodal_lines_csv(
                    cfg.outdir / "spots" / f"{stem}_{source}_lines_real.csv", real, cfg.hash
                )
                exports.write_nodal_lines_csv(
                    cfg.outdir / "spots" / f"{stem}_{source}_lines_imag.csv", imag, cfg.hash
                )
                exports.write_spots_csv(
                    cfg.outdir / "spots" / f"{stem}_{source}_spots.csv", spots, cfg.hash
                )
                exports.render_heatmap(
                    cfg.outdir / "spots" / f"{stem}_{source}_overlay.png",
                    section.u,
                    section.v,
                    np.abs(section.values),
                    cfg.hash,
                    mode="modulus",
                    polylines=real.polylines + imag.polylines,
                    spots=spots.points() if spots.mode == "points" else None,
                )
                if spots.mode == "points" and spots.spots:
                    dist = analysis.first_spot_on_axis(spots, axis)
                    summary_rows.append((index, f"{plane.axes[0]}/{plane.axes[1]}", source,
                                         "absent" if dist is None else exports._fmt(dist)))
                else:
                    summary_rows.append((index, f"{plane.axes[0]}/{plane.axes[1]}", source, "absent"))
            # quadratic-form estimate from the state's own covariance
            form = ellipsoid_predictor(covariance(pair.state), cfg.hbar)
            base = plane.base().as_vector()
            direction = plane.chord_at(axis[0], axis[1]).as_vector() - base
            try:
                crossing = form.axis_crossing(direction)
                summary_rows.append((index, f"{plane.axes[0]}/{plane.axes[1]}", "ellipsoid", exports._fmt(crossing)))
            except ValueError:
                summary_rows.append((index, f"{plane.axes[0]}/{plane.axes[1]}", "ellipsoid", "absent"))
    exports.write_csv(
        cfg.outdir / "spots" / "first_spot_summary.csv",
        exports.header_lines(cfg.hash, {"axis": f"{axis[0]};{axis[1]}"}),
        ("state", "plane", "method", "first_spot_distance"),
        summary_rows,
    )
    print(f"spot analysis written for {len(cfg.indices)} states")
    return EXIT_OK


def cmd_corr(cfg: RunConfig) -> int:
    (cfg.outdir / "correlations").mkdir(parents=True, exist_ok=True)
    anchors = cfg._get(["correlation", "anchors"], required=True)
    delta_raw = cfg._get(["correlation", "delta"], "sqrt_hbar")
    delta = math.sqrt(cfg.hbar) if delta_raw == "sqrt_hbar" else float(delta_raw)
    direction = cfg._get(["correlation", "direction"], [1.0, 0.0])
    max_xi = float(cfg._get(["correlation", "max_xi"], 4.0 * delta))
    n_pts = int(cfg._get(["correlation", "points"], 200))
    mags = np.linspace(0.0, max_xi, n_pts)
    summary = []
    for index in cfg.indices:
        pair = _load_state(cfg, index)
        for a_idx, anchor in enumerate(anchors):
            anchor = [float(x) for x in anchor]
            exact = analysis.correlation_exact(pair.state, anchor, delta, mags, direction=direction)
            lqec = analysis.correlation_lqec(cfg.spec, pair.energy, anchor, mags, cfg.hbar, direction=direction)
            stem = f"state{index:04d}_anchor{a_idx}"
            exports.write_correlation_csv(cfg.outdir / "correlations" / f"{stem}_exact.csv", exact, cfg.hash)
            exports.write_correlation_csv(cfg.outdir / "correlations" / f"{stem}_lqec.csv", lqec, cfg.hash)
            ze = exact.first_zero()
            zl = lqec.first_zero()
            summary.append(
                (
                    index,
                    a_idx,
                    "absent" if ze is None else exports._fmt(ze),
                    "absent" if zl is None else exports._fmt(zl),
                )
            )
    exports.write_csv(
        cfg.outdir / "correlations" / "first_zero_summary.csv",
        exports.header_lines(cfg.hash, {"delta": exports._fmt(delta)}),
        ("state", "anchor", "exact_first_zero", "lqec_first_zero"),
        summary,
    )
    print("correlation curves written")
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    (cfg.outdir / "compare").mkdir(parents=True, exist_ok=True)
    pairs_cfg = cfg._get(["compare", "pairs"], required=True)
    radius = cfg.planck_radius()
    sec_cfg = cfg.sections()[0]
    plane, _, _ = cfg.plane_of(sec_cfg)
    rows = []
    for pair_idx in pairs_cfg:
        ia, ib = int(pair_idx[0]), int(pair_idx[1])
        pa = _load_state(cfg, ia)
        pb = _load_state(cfg, ib)
        _, _, _, spots_a = _spots_of(cfg, ia, plane, "exact", pa)
        _, _, _, spots_b = _spots_of(cfg, ib, plane, "exact", pb)
        dist = analysis.pattern_distance(spots_a, spots_b, radius)
        decomp = analysis.eigenstate_overlap_decomposition(pa.state, pb.state, radius=radius)
        rows.append(
            (
                ia,
                ib,
                dist,
                decomp.total,
                decomp.inner,
                decomp.outer,
            )
        )
    exports.write_csv(
        cfg.outdir / "compare" / "pattern_table.csv",
        exports.header_lines(cfg.hash, {"radius": exports._fmt(radius), "plane": f"{plane.axes[0]}/{plane.axes[1]}"}),
        ("state_a", "state_b", "pattern_distance", "overlap_total", "overlap_inner", "overlap_outer"),
        rows,
    )
    print(f"comparison table written for {len(rows)} pairs")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


_COMMANDS = {
    "solve": cmd_solve,
    "chord": cmd_chord,
    "spots": cmd_spots,
    "corr": cmd_corr,
    "compare": cmd_compare,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="semichord",
        description="Chord functions of 2D eigenstates and their energy-shell approximations.",
    )
    parser.add_argument("--version", action="version", version=f"semichord {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve and cache the requested eigenstates"),
        ("chord", "compute and export chord sections (exact and shell routes)"),
        ("spots", "extract nodal lines, blind spots, and first-spot summaries"),
        ("corr", "exact and shell correlation curves"),
        ("compare", "pattern distances and overlap decompositions for state pairs"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override all seeds in the config")
        p.add_argument("--output-dir", default=None, help="override output.dir")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config, args.seed, args.output_dir)
        cfg.outdir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, tomli.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except CacheError as exc:
        print(f"cache error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (TuningError, QuadratureError, SolverConvergenceError, GridTooSmallError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
