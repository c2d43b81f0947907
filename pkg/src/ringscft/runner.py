"""Run configuration, single-element runs, sweeps and file output."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ringscft import __version__
from ringscft.basis import BasisSet, ChannelSpec, build_basis, desk_channels, paper_channels
from ringscft.observables import COLUMNS, density_on_grid, energy_report
from ringscft.quadrature import QuadGrid
from ringscft.reference import compare_reference, element_z, symbol
from ringscft.scf import ScfConfig, ScfResult, assign_pairs, scf_iterate
from ringscft.tensors import assemble_tensors

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def parse_channels(spec: str, spherical_only: bool = False) -> list[ChannelSpec]:
    """``desk``, ``full``, or ``l:count:c_min:c_max`` entries separated by ``;``."""
    spec = spec.strip()
    if spec == "desk":
        chans = desk_channels()
    elif spec == "full":
        chans = paper_channels()
    else:
        chans = []
        for part in filter(None, (p.strip() for p in spec.split(";"))):
            bits = part.split(":")
            if len(bits) != 4:
                raise ConfigError(f"bad channel spec {part!r}; expected l:count:c_min:c_max")
            try:
                chans.append(ChannelSpec(int(bits[0]), int(bits[1]), float(bits[2]), float(bits[3])))
            except ValueError as exc:
                raise ConfigError(f"bad channel spec {part!r}: {exc}") from exc
        if not chans:
            raise ConfigError("empty basis specification")
    if spherical_only:
        chans = [c for c in chans if c.l == 0]
    return chans


@dataclass(frozen=True)
class ExportGrid:
    """Product grid for density export: log radial x Gauss-Legendre theta x uniform phi."""

    n_r: int = 80
    r_min: float = 1e-4
    r_max: float = 20.0
    n_theta: int = 16
    n_phi: int = 32

    @classmethod
    def parse(cls, text: str) -> "ExportGrid":
        kw = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for part in filter(None, (p.strip() for p in text.split(","))):
            if "=" not in part:
                raise ConfigError(f"bad grid entry {part!r}; expected key=value")
            k, v = (s.strip() for s in part.split("=", 1))
            if k not in types:
                raise ConfigError(f"unknown grid key {k!r}")
            try:
                kw[k] = int(v) if types[k] in (int, "int") else float(v)
            except ValueError as exc:
                raise ConfigError(f"bad grid value {part!r}") from exc
        return cls(**kw)

    def quad(self, spherical: bool = False) -> QuadGrid:
        return QuadGrid.build(self.n_r, self.r_min, self.r_max, self.n_theta, self.n_phi, spherical=spherical)


@dataclass(frozen=True)
class RunConfig:
    element: str = "H"
    beta: float = 100.0
    g0: float = 0.1
    g0_per_pair: tuple | None = None
    tol: float = 1e-6
    max_iter: int = 3000
    mixing: float = 0.1
    seed: int = 0
    perturb: float = 1e-3
    spherical_only: bool = False
    init: str = "auto"
    anderson: int = 5
    basis: str = "desk"
    grid: str = ""
    out: str = "out"
    compare: bool = False
    heatmap: bool = True
    figures: bool = True
    iteration_log: bool = True
    slice_thetas: tuple = (90.0, 60.0, 30.0)
    slice_size: int = 161
    slice_extent: float = 3.0

    @property
    def Z(self) -> int:
        return element_z(self.element)

    def scf_config(self) -> ScfConfig:
        return ScfConfig(
            Z=self.Z, beta=self.beta, g0=self.g0, g0_per_pair=self.g0_per_pair, mixing_alpha=self.mixing,
            tol=self.tol, max_iter=self.max_iter, perturb_amplitude=self.perturb, perturb_seed=self.seed,
            spherical_only=self.spherical_only, anderson_depth=self.anderson, init=self.init,
        )

    def channels(self) -> list[ChannelSpec]:
        return parse_channels(self.basis, self.spherical_only)

    def export_grid(self) -> ExportGrid:
        return ExportGrid.parse(self.grid) if self.grid else ExportGrid()

    def validate(self) -> "RunConfig":
        try:
            self.scf_config().g0_list(len(assign_pairs(self.Z)))
            self.channels()
            self.export_grid()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self


def _coerce(name: str, value: str):
    f = {f.name: f for f in dataclasses.fields(RunConfig)}.get(name)
    if f is None:
        raise ConfigError(f"unknown config key {name!r}")
    default = f.default
    v = value.strip()
    try:
        if isinstance(default, bool):
            low = v.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(v)
            return low in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(v)
        if isinstance(default, float):
            return float(v)
        if name == "g0_per_pair":
            return tuple(float(x) for x in v.split(",") if x.strip()) or None
        if name == "slice_thetas":
            return tuple(float(x) for x in v.split(",") if x.strip())
        return v
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; keys use underscores or dashes."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        k, v = line.split("=", 1)
        k = k.strip().replace("-", "_")
        out[k] = _coerce(k, v)
    return out


def load_config(path=None, **overrides) -> RunConfig:
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values).validate()


# ---------------------------------------------------------------------------
# single run


@dataclass(eq=False)
class RunOutcome:
    config: RunConfig
    result: ScfResult
    report: object
    payload: dict
    out_dir: Path
    files: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.result.converged else EXIT_NOT_CONVERGED


def _basis_summary(basis: BasisSet) -> dict:
    return {
        "size": basis.size,
        "channels": [dataclasses.asdict(c) for c in basis.channels],
    }


def build_payload(cfg: RunConfig, result: ScfResult, report, timestamp: str | None = None) -> dict:
    payload = {
        "version": __version__,
        "element": symbol(cfg.Z),
        "Z": cfg.Z,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(cfg).items()},
        "basis": _basis_summary(result.tensors.basis),
        "converged": result.converged,
        "iterations": result.iterations,
        "residual": result.residual,
        "start": result.start,
        "alternatives": [
            {"start": s, "F": F, "converged": c, "iterations": n} for s, F, c, n in result.alternatives
        ],
        "energies": report.to_dict(),
    }
    if cfg.compare:
        payload["compare"] = compare_reference(cfg.Z, report.binding, cfg.spherical_only, report.ratio1, report.ratio2)
    payload["timestamp"] = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return payload


def _write_density_csvs(out: Path, result: ScfResult, grid: QuadGrid, files: list):
    r, th, ph = grid.points()
    pairs, total = density_on_grid(result, r, th, ph)
    for k, dens in enumerate(pairs, 1):
        path = out / f"pair_{k}.csv"
        _write_grid_csv(path, r, th, ph, dens)
        files.append(path)
    path = out / "total.csv"
    _write_grid_csv(path, r, th, ph, total)
    files.append(path)


def _write_grid_csv(path: Path, r, th, ph, dens):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "theta", "phi", "density"])
        for row in zip(r, th, ph, dens):
            w.writerow([f"{x:.12e}" for x in row])


def read_density_csv(path):
    """Columns (r, theta, phi, density) of an exported grid."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2], data[:, 3]


def integrate_density_csv(path) -> float:
    """Re-integrate an exported product grid, rebuilding its quadrature weights from the nodes."""
    r, th, ph, dens = read_density_csv(path)
    ru = np.unique(r)
    tu = np.unique(th)
    pu = np.unique(ph)
    spherical = len(tu) == 1 and len(pu) == 1
    grid = QuadGrid.build(len(ru), ru[0], ru[-1], len(tu), len(pu), spherical=spherical)
    if not np.allclose(grid.r, ru, rtol=1e-9):
        raise ValueError("radial nodes are not log-uniform")
    rr, tt, pp = grid.points()
    if not (np.allclose(rr, r, rtol=1e-9) and np.allclose(tt, th, atol=1e-9) and np.allclose(pp, ph, atol=1e-9)):
        raise ValueError("file is not an export product grid in the expected order")
    return grid.integrate(dens.reshape(grid.n_radial, grid.n_angular))


def _write_slices(out: Path, cfg: RunConfig, result: ScfResult, files: list):
    from ringscft.plotting import plot_theta_slices, theta_slice_points, to_gray, write_ppm

    slices = {}
    for deg in cfg.slice_thetas:
        th = math.radians(deg)
        _, _, r, phi = theta_slice_points(th, cfg.slice_extent, cfg.slice_size)
        pairs, total = density_on_grid(result, r.ravel(), np.full(r.size, th), phi.ravel())
        shape = r.shape
        slices[th] = pairs.reshape((-1,) + shape)
        tag = f"{deg:g}"
        if cfg.heatmap:
            for suffix, is_log in (("", False), ("_log", True)):
                path = out / f"slice_theta_{tag}{suffix}.ppm"
                write_ppm(path, to_gray(total.reshape(shape), log=is_log))
                files.append(path)
    if cfg.figures and slices:
        path = out / "pair_slices.png"
        plot_theta_slices(path, slices, cfg.slice_extent, title=f"{symbol(cfg.Z)} pair densities")
        files.append(path)


def _write_figures(out: Path, cfg: RunConfig, result: ScfResult, files: list):
    from ringscft.plotting import plot_convergence, plot_radial

    grid = QuadGrid.build(200, 1e-3, 20.0, 8 if not cfg.spherical_only else 1, 16, spherical=cfg.spherical_only)
    r, th, ph = grid.points()
    pairs, _ = density_on_grid(result, r, th, ph)
    prof = np.array([(p.reshape(grid.n_radial, grid.n_angular) @ grid.w_ang) * grid.r**2 for p in pairs])
    path = out / "radial_profiles.png"
    plot_radial(path, grid.r, prof, title=f"{symbol(cfg.Z)}")
    files.append(path)
    path = out / "convergence.png"
    plot_convergence(path, result.trace, title=f"{symbol(cfg.Z)} SCF history")
    files.append(path)


def _write_iteration_log(path: Path, result: ScfResult):
    with open(path, "w") as fh:
        fh.write(f"# start={result.start} converged={result.converged} iterations={result.iterations}\n")
        for s, F, c, n in result.alternatives:
            fh.write(f"# candidate start={s} F={F:.10f} converged={c} iterations={n}\n")
        fh.write("iteration,residual,free_energy\n")
        for it, res, F in result.trace:
            fh.write(f"{it},{res:.6e},{F:.12f}\n")


def run(cfg: RunConfig, timestamp: str | None = None, write: bool = True) -> RunOutcome:
    """Solve one element and write its artifacts into ``cfg.out``."""
    cfg.validate()
    basis = build_basis(cfg.channels())
    tensors = assemble_tensors(basis)
    result = scf_iterate(cfg.scf_config(), tensors)
    report = energy_report(result, QuadGrid.for_basis(basis, spherical=cfg.spherical_only))
    payload = build_payload(cfg, result, report, timestamp)
    out = Path(cfg.out)
    files: list = []
    if write:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        files.append(path)
        _write_density_csvs(out, result, cfg.export_grid().quad(cfg.spherical_only), files)
        if cfg.iteration_log:
            path = out / "iterations.log"
            _write_iteration_log(path, result)
            files.append(path)
        if cfg.heatmap or cfg.figures:
            _write_slices(out, cfg, result, files)
        if cfg.figures:
            _write_figures(out, cfg, result, files)
    return RunOutcome(config=cfg, result=result, report=report, payload=payload, out_dir=out, files=files)


def format_report(payload: dict, delimiter: str = ",") -> str:
    """Delimited decomposition table (one row per pair plus total)."""
    e = payload["energies"]
    head = ["row"] + list(COLUMNS)
    lines = [delimiter.join(head)]
    for p in e["pairs"]:
        lines.append(delimiter.join([f"pair{p['pair']}"] + [f"{p[c]:.6f}" for c in COLUMNS]))
    lines.append(delimiter.join(["total"] + [f"{e['total'][c]:.6f}" for c in COLUMNS]))
    lines.append(delimiter.join(["binding", f"{e['binding']:.7f}"]))
    lines.append(delimiter.join(["constraints", f"{e['constraints']['ratio1']:.5f}", f"{e['constraints']['ratio2']:.5f}"]))
    if "compare" in payload:
        c = payload["compare"]
        lines.append(delimiter.join(["reference", f"{c['reference_scft']:.7f}", f"{c['abs_diff_scft']:.2e}",
                                     f"hf_dev_pct={c['pct_dev_hf']:.6f}",
                                     f"hf_dev_pct_table={c['pct_dev_table']:.6f}"]))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# sweep


SWEEP_COLUMNS = ("element", "Z", "basis", "binding", "reference_scft", "hartree_fock", "pct_dev_hf",
                 "pct_dev_table", "ratio1", "ratio2", "converged", "iterations", "error")


def _sweep_one(cfg: RunConfig) -> dict:
    row = {"element": str(cfg.element), "basis": "sph" if cfg.spherical_only else "ang"}
    try:
        outcome = run(cfg)
        rep = outcome.report
        cmp_ = compare_reference(cfg.Z, rep.binding, cfg.spherical_only)
        row.update(
            element=symbol(cfg.Z), Z=cfg.Z, binding=rep.binding, reference_scft=cmp_["reference_scft"],
            hartree_fock=cmp_["hartree_fock"], pct_dev_hf=cmp_["pct_dev_hf"],
            pct_dev_table=cmp_["pct_dev_table"], ratio1=rep.ratio1,
            ratio2=rep.ratio2, converged=outcome.result.converged, iterations=outcome.result.iterations, error="",
        )
    except Exception as exc:  # one bad element must not sink the sweep
        log.exception("element %s failed", cfg.element)
        row.update(error=f"{type(exc).__name__}: {exc}")
    return row


def sweep(elements, template: RunConfig, out_dir, jobs: int = 1, both: bool = False) -> list[dict]:
    """Run each element into its own subdirectory and write sweep.csv / sweep.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = []
    for el in elements:
        variants = [False, True] if both else [template.spherical_only]
        for sph in variants:
            name = str(el) + ("_sph" if sph else "")
            configs.append(dataclasses.replace(template, element=str(el), spherical_only=sph, out=str(out_dir / name)))
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_one, configs))
    else:
        rows = [_sweep_one(c) for c in configs]
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in SWEEP_COLUMNS})
    (out_dir / "sweep.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return rows
