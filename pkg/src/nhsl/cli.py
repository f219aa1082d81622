"""Command-line runner: ``nhsl <task> --config FILE [--out DIR] [--format csv|json] [--threads N]``."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import TASKS, ConfigError, RunConfig, parse_config, serialize
from .localization import ipr_scan, localization_transition
from .qwalk import (growth_rate, walk_dynamics, walk_gauge_scan, walk_ipr_summary,
                    walk_spectrum)
from .spectra import band_structure, flatband_analysis, scan_gauge

LOCK_NAME = ".nhsl.lock"


class OutputBusyError(RuntimeError):
    """Another run holds the lock on the output directory."""


@dataclass(frozen=True)
class RunManifest:
    config: str
    version: str
    duration_s: float
    checksums: dict

    def to_json(self) -> str:
        return json.dumps({"version": self.version, "duration_s": self.duration_s,
                           "checksums": self.checksums, "config": self.config},
                          indent=2, sort_keys=True) + "\n"


def fmt(x) -> str:
    """Shortest round-tripping decimal for a float."""
    return repr(float(x))


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) if isinstance(v, (int, np.integer)) else fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def json_rows(header, rows) -> str:
    data = [{h: (int(v) if isinstance(v, (int, np.integer)) else float(v)) for h, v in zip(header, row)}
            for row in rows]
    return json.dumps(data, indent=1) + "\n"


def spectrum_rows(ks, energies_by_band):
    """(k, l, re, im) rows, k-major."""
    rows = []
    for j, k in enumerate(ks):
        for l, band in enumerate(energies_by_band):
            rows.append((float(k), l, band[j].real, band[j].imag))
    return rows


def spectrum_json(rows) -> str:
    data = [{"k": k, "l": l, "re": re, "im": im} for k, l, re, im in rows]
    return json.dumps(data, indent=1) + "\n"


# ---------------------------------------------------------------------------
# pipelines: each returns {filename: text}
# ---------------------------------------------------------------------------


def _curve(config, stem, header, rows):
    if config.format == "json":
        return {f"{stem}.json": json_rows(header, rows)}
    return {f"{stem}.csv": csv_text(header, rows)}


def _summary(data) -> dict:
    return {"summary.json": json.dumps(data, indent=2, sort_keys=True) + "\n"}


def _single_h(config):
    if config.h_grid is not None:
        raise ConfigError(f"task {config.task!r} takes a single h, not h_grid")
    return config.h if config.h is not None else 0.0


def _spectrum(config, threads):
    h = _single_h(config)
    out = {}
    for M in config.M:
        bs = band_structure(config.lattice(M, h), config.Nk, threads=threads)
        rows = spectrum_rows(bs.k_grid, bs.bands)
        if config.format == "json":
            out[f"spectrum_M{M}.json"] = spectrum_json(rows)
        else:
            out[f"spectrum_M{M}.csv"] = csv_text(("k", "l", "re_e", "im_e"), rows)
    return out


def _scan_summary(scan):
    return {"hc_estimate": scan.hc_estimate, "transition_width": scan.transition_width,
            "onset_interval": list(scan.onset_interval) if scan.onset_interval else None}


def _scan(config, threads):
    out, summary = {}, {}
    for M in config.M:
        scan = scan_gauge(config.lattice(M), config.h_values(), config.Nk,
                          config.eps_lo, config.eps_hi, threads)
        out.update(_curve(config, f"scan_M{M}", ("h", "max_im"), zip(scan.h_grid, scan.max_im)))
        summary[str(M)] = _scan_summary(scan)
    out.update(_summary(summary))
    return out


def _ipr(config, threads):
    out, summary = {}, {}
    for M in config.M:
        sums = ipr_scan(config.lattice(M), config.h_values(), config.Nk, threads)
        rows = [(s.h, s.ipr_max, s.ipr_min, s.ipr_mean) for s in sums]
        out.update(_curve(config, f"ipr_M{M}", ("h", "ipr_max", "ipr_min", "ipr_mean"), rows))
        hl = localization_transition(sums, M) if len(sums) >= 5 else None
        summary[str(M)] = {"localization_transition": hl}
    out.update(_summary(summary))
    return out


def _flatband(config, threads):
    _single_h(config)
    family = config.lattice(config.M[-1])
    rep = flatband_analysis(family, config.band, config.M, origin=config.origin)
    rows = list(zip(rep.sizes.tolist(), rep.E0, rep.delta_exact, rep.delta_pert,
                    rep.rel_error, rep.mixing))
    out = _curve(config, "flatband", ("M", "e0", "delta_exact", "delta_pert", "rel_error", "mixing"), rows)
    out.update(_summary({"band": rep.l, "sigma_fit": rep.sigma_fit, "intercept": rep.intercept,
                         "sigma_pert": rep.sigma_pert, "gamma_m": rep.gamma_m, "rho": rep.rho}))
    return out


def _walk_spectrum(config, threads):
    h = _single_h(config)
    out = {}
    for M in config.M:
        sp = walk_spectrum(config.walk(M, h), config.Nk, threads=threads)
        rows = spectrum_rows(sp.k_grid, sp.energies.T)
        if config.format == "json":
            out[f"walk_spectrum_M{M}.json"] = spectrum_json(rows)
        else:
            out[f"walk_spectrum_M{M}.csv"] = csv_text(("k", "l", "re_e", "im_e"), rows)
    return out


def _walk_scan(config, threads):
    out, summary = {}, {}
    for M in config.M:
        family = config.walk(M)
        scan = walk_gauge_scan(family, config.h_values(), config.Nk,
                               config.eps_lo, config.eps_hi, threads)
        out.update(_curve(config, f"walk_scan_M{M}", ("h", "max_im"), zip(scan.h_grid, scan.max_im)))
        summary[str(M)] = _scan_summary(scan)
        if config.emit_vectors:
            rows = []
            for h in scan.h_grid:
                s = walk_ipr_summary(family.with_h(h), config.Nk, threads)
                rows.append((s.h, s.ipr_max, s.ipr_min, s.ipr_mean))
            out.update(_curve(config, f"walk_ipr_M{M}", ("h", "ipr_max", "ipr_min", "ipr_mean"), rows))
    out.update(_summary(summary))
    return out


def _walk_dynamics(config, threads):
    h = _single_h(config)
    out, summary = {}, {}
    for M in config.M:
        tr = walk_dynamics(config.walk(M, h), config.n0, config.m_max, keep_intensity=config.emit_vectors)
        rows = list(zip(tr.steps.tolist(), tr.power, tr.second_moment, tr.sigma))
        out.update(_curve(config, f"dynamics_M{M}", ("m", "power", "m2", "sigma"), rows))
        if config.emit_vectors:
            header = ["m"] + [f"n{n}" for n in range(M)]
            irows = [(m, *row) for m, row in enumerate(tr.intensity)]
            out.update(_curve(config, f"intensity_M{M}", header, irows))
        summary[str(M)] = {"late_growth_rate": growth_rate(tr), "max_sigma": float(tr.sigma.max()),
                           "final_log_power": float(tr.log_power[-1])}
    out.update(_summary(summary))
    return out


PIPELINES = {
    "spectrum": _spectrum, "scan": _scan, "ipr": _ipr, "flatband": _flatband,
    "walk-spectrum": _walk_spectrum, "walk-scan": _walk_scan, "walk-dynamics": _walk_dynamics,
}


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


class _Lock:
    def __init__(self, directory: Path):
        self.path = directory / LOCK_NAME

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputBusyError(f"{self.path} exists; another run owns this directory") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def run(config: RunConfig, out_dir=None, threads: int = 1) -> RunManifest:
    """Compute the configured task and write its files plus manifest.json.

    On failure a failure.json report lists what was written and the manifest
    is not written; the exception is re-raised.
    """
    out = Path(out_dir if out_dir is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    with _Lock(out):
        for stale in ("manifest.json", "failure.json"):
            (out / stale).unlink(missing_ok=True)
        t0 = time.perf_counter()
        written = []
        try:
            files = PIPELINES[config.task](config, threads)
            checksums = {}
            for name in sorted(files):
                data = files[name].encode()
                (out / name).write_bytes(data)
                written.append(name)
                checksums[name] = hashlib.sha256(data).hexdigest()
        except BaseException as exc:
            report = {"error": f"{type(exc).__name__}: {exc}", "written": written,
                      "task": config.task}
            (out / "failure.json").write_text(json.dumps(report, indent=2) + "\n")
            raise
        manifest = RunManifest(serialize(config), __version__,
                               round(time.perf_counter() - t0, 3), checksums)
        (out / "manifest.json").write_text(manifest.to_json())
        return manifest


def recipe_dir() -> Path:
    return Path(str(resources.files("nhsl") / "recipes"))


def list_recipes() -> list[Path]:
    return sorted(recipe_dir().glob("*.conf"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nhsl", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"nhsl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for task in TASKS:
        p = sub.add_parser(task, help=f"run the {task} pipeline")
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", help="output directory (default: the config's output key)")
        p.add_argument("--format", choices=("csv", "json"), help="override the config's format")
        p.add_argument("--threads", type=int, default=1, help="worker threads for k/h grids")
    rp = sub.add_parser("recipes", help="list the bundled figure configs")
    rp.add_argument("name", nargs="?", help="print this recipe instead of listing")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "recipes":
        if args.name:
            path = recipe_dir() / (args.name if args.name.endswith(".conf") else args.name + ".conf")
            if not path.exists():
                print(f"no recipe named {args.name!r}", file=sys.stderr)
                return 2
            sys.stdout.write(path.read_text())
        else:
            for path in list_recipes():
                print(path)
        return 0
    try:
        text = Path(args.config).read_text()
        config = parse_config(text, task=args.command)
        if args.format:
            config = replace(config, format=args.format)
    except (OSError, ConfigError) as exc:
        print(f"nhsl: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run(config, args.out, threads=args.threads)
    except OutputBusyError as exc:
        print(f"nhsl: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # numerical failure: report written next to the outputs
        print(f"nhsl: {config.task} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for name in sorted(manifest.checksums):
        print(name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
