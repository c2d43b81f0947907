"""Command-line entry point.

    ringscft --element C --out runs/C
    ringscft --element C --spherical-only --compare
    ringscft sweep --elements H,He,Li --both --out runs/sweep
"""

from __future__ import annotations

import argparse
import logging
import sys

from ringscft.runner import (
    EXIT_CONFIG,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    ConfigError,
    format_report,
    load_config,
    run,
    sweep,
)


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--beta", type=float)
    p.add_argument("--g0", type=float)
    p.add_argument("--g0-per-pair", type=_float_list, dest="g0_per_pair", help="comma-separated g0 per pair")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--mixing", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--perturb", type=float)
    p.add_argument("--init", choices=("auto", "staggered", "hybrid", "uniform"))
    p.add_argument("--anderson", type=int, help="Anderson history depth (0 = plain linear mixing)")
    p.add_argument("--spherical-only", action="store_const", const=True, dest="spherical_only")
    p.add_argument("--basis", help="desk, full, or l:count:c_min:c_max;...")
    p.add_argument("--grid", help="density export grid, e.g. n_r=80,r_max=20,n_theta=16,n_phi=32")
    p.add_argument("--out", help="output directory")
    p.add_argument("--compare", action="store_const", const=True, help="compare with bundled reference values")
    p.add_argument("--no-figures", action="store_const", const=False, dest="figures")
    p.add_argument("--no-heatmap", action="store_const", const=False, dest="heatmap")
    p.add_argument("-v", "--verbose", action="store_true")


def _overrides(ns: argparse.Namespace) -> dict:
    keys = ("beta", "g0", "g0_per_pair", "tol", "max_iter", "mixing", "seed", "perturb", "init", "anderson",
            "spherical_only", "basis", "grid", "out", "compare", "figures", "heatmap")
    return {k: getattr(ns, k, None) for k in keys}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "sweep":
        return _sweep_main(argv[1:])
    p = argparse.ArgumentParser(prog="ringscft", description="Ring-polymer SCFT for neutral atoms H..Ne.")
    p.add_argument("-Z", "--element", help="element symbol or atomic number")
    _add_run_flags(p)
    ns = p.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if ns.element is None and ns.config is None:
        p.error("--element is required (or supply it in --config)")
    try:
        cfg = load_config(ns.config, element=ns.element, **_overrides(ns))
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outcome = run(cfg)
    print(format_report(outcome.payload))
    for f in outcome.files:
        print(f"# wrote {f}")
    if not outcome.result.converged:
        tail = ", ".join(f"{t[1]:.2e}" for t in outcome.result.trace[-10:])
        print(f"error: SCF did not converge in {outcome.result.iterations} iterations; last residuals: {tail}",
              file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _sweep_main(argv) -> int:
    p = argparse.ArgumentParser(prog="ringscft sweep", description="Run several elements.")
    p.add_argument("--elements", default="H,He,Li,Be,B,C,N,O,F,Ne", help="comma-separated symbols ('' for none)")
    p.add_argument("--both", action="store_true", help="run angular and spherical-only variants")
    p.add_argument("--jobs", type=int, default=1)
    _add_run_flags(p)
    ns = p.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    elements = [e.strip() for e in ns.elements.split(",") if e.strip()]
    try:
        over = _overrides(ns)
        out = over.pop("out") or "sweep"
        template = load_config(ns.config, **over)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = sweep(elements, template, out, jobs=ns.jobs, both=ns.both)
    keys = ("element", "basis", "binding", "reference_scft", "hartree_fock", "pct_dev_hf", "pct_dev_table",
            "ratio1", "ratio2", "converged", "error")
    print(",".join(keys))
    for r in rows:
        vals = [r.get(k, "") for k in keys]
        print(",".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in vals))
    failed = any(r.get("error") or not r.get("converged", False) for r in rows)
    return EXIT_NOT_CONVERGED if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
