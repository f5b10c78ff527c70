"""Command-line sweeps: rate curves, ensembles, scaling fits, Rabi tables and the phonon check.

Usage::

    fmqubit --config fig1a.json --out results/ [--seed N] [--threads N] [--method NAME]

``--config`` takes a path or the name of a bundled config (``fig1a``,
``fig1b``, ``figS1``, ``figS2``, ``ensemble``, ``scaling``, ``rabi``,
``phonon``). A ``manifest.json`` written by an earlier run is also
accepted and replays that run.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import CSV_COLUMNS
from .bath import (BathRealization, BathSpec, DriveParams, InvalidSpecError, TlsParams,
                   mixed_bath, sample_bath, single_tls_bath)
from .dynamics import IntegratorControls, rate_curve
from .ensemble import monte_carlo_stats, predicted_mean, predicted_variance, scaling_fit
from .gates import RabiDrive, effective_rabi, multiharmonic_recovery, rabi_table_csv, simulate_rabi
from .phonon_oracle import PhononBathSpec, golden_rule_rate, simulate_explicit

__all__ = ["ConfigError", "SweepConfig", "load_config", "run", "emit_plot_script", "main"]

log = logging.getLogger("fmqubit")

MODES = ("rate-curve", "ensemble", "scaling", "rabi", "phonon-oracle")
METHODS = ("analytic", "gamma099", "expfit")
BUNDLED = ("fig1a", "fig1b", "figS1", "figS2", "ensemble", "scaling", "rabi", "phonon")


class ConfigError(ValueError):
    """The configuration cannot be parsed or fails validation."""


def _bath_from_dict(d: dict) -> BathRealization:
    kind = d.get("kind", "spec")
    if kind == "spec":
        return sample_bath(BathSpec.from_dict(d["spec"]), int(d.get("realization", 0)))
    if kind == "single":
        return single_tls_bath([TlsParams(**t) for t in d["tls"]])
    if kind == "mixed":
        return mixed_bath(BathSpec.from_dict(d["spec"]), TlsParams(**d["strong"]),
                          int(d["position_index"]), int(d.get("realization", 0)))
    raise ConfigError(f"unknown bath kind {kind!r}")


@dataclass
class SweepConfig:
    """Validated run description; see the README for the JSON schema."""

    mode: str
    seed: int = 0
    bath: dict = field(default_factory=dict)
    drive: dict = field(default_factory=lambda: {"e0": 0.0, "omega": 1.0})
    e0_grid: dict | None = None
    amp_over_omega: list = field(default_factory=lambda: [0.0])
    method: str = "analytic"
    controls: dict = field(default_factory=dict)
    e_ref: float = 0.0
    extra_grids: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    rabi: dict = field(default_factory=dict)
    phonon: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.mode == "rate-curve":
            if self.e0_grid is None:
                raise ConfigError("rate-curve mode needs e0_grid")
            for g in [self.e0_grid, *self.extra_grids.values()]:
                if int(g["count"]) < 2 or not g["stop"] > g["start"]:
                    raise ConfigError("e0 grid needs count >= 2 and stop > start")
        if self.mode in ("rate-curve", "ensemble", "scaling") and not self.bath:
            raise ConfigError(f"{self.mode} mode needs a bath")
        if any(float(x) < 0 for x in self.amp_over_omega):
            raise ConfigError("amp_over_omega must be non-negative")
        # build once so invalid sub-specs fail at load time
        try:
            self.integrator()
            DriveParams(e0=float(self.drive.get("e0", 0.0)), omega=float(self.drive.get("omega", 1.0)))
            if self.mode == "rate-curve":
                self.realization()
            elif self.mode in ("ensemble", "scaling"):
                self.bath_spec()
        except (InvalidSpecError, KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"invalid sub-spec: {exc}") from exc

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "mode" not in d:
            raise ConfigError("config needs a mode")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def with_seed(self, seed: int) -> "SweepConfig":
        d = json.loads(json.dumps(self.to_dict()))
        d["seed"] = int(seed)
        if "spec" in d["bath"]:
            d["bath"]["spec"]["seed"] = int(seed)
        return SweepConfig.from_dict(d)

    def with_method(self, method: str) -> "SweepConfig":
        d = self.to_dict()
        d["method"] = method
        return SweepConfig.from_dict(d)

    def omega(self) -> float:
        return float(self.drive.get("omega", 1.0))

    def integrator(self) -> IntegratorControls:
        return IntegratorControls(**self.controls)

    def realization(self) -> BathRealization:
        return _bath_from_dict(self.bath)

    def bath_spec(self) -> BathSpec:
        if self.bath.get("kind", "spec") != "spec":
            raise ConfigError("ensemble modes need a bath of kind 'spec'")
        return BathSpec.from_dict(self.bath["spec"])

    def grid(self, g: dict) -> np.ndarray:
        return self.e_ref + np.linspace(float(g["start"]), float(g["stop"]), int(g["count"])) * self.omega()


def load_config(source: str) -> SweepConfig:
    """Parse a config from a path or a bundled name; manifests are unwrapped."""
    path = Path(source)
    try:
        if path.exists():
            text = path.read_text()
        elif source in BUNDLED:
            text = resources.files("fmqubit.configs").joinpath(f"{source}.json").read_text()
        else:
            raise ConfigError(f"no such config: {source}")
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in doc and "version" in doc:
        doc = doc["config"]
    try:
        return SweepConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _curves_csv(curves, e_ref) -> str:
    parts = [",".join(CSV_COLUMNS) + "\n"]
    parts += [c.to_csv(e_ref, header=False) for c in curves]
    return "".join(parts)


def _run_rate_curve(cfg: SweepConfig, workers: int, out: dict, meta: dict):
    bath = cfg.realization()
    controls = cfg.integrator()
    grids = {"rates": (cfg.e0_grid, cfg.amp_over_omega)}
    for name, g in cfg.extra_grids.items():
        grids[f"rates_{name}"] = (g, g.get("amp_over_omega", cfg.amp_over_omega))
    status = {}
    for stem, (g, amps) in grids.items():
        curves = []
        for x in amps:
            drive = DriveParams(e0=0.0, amp=float(x) * cfg.omega(), omega=cfg.omega())
            c = rate_curve(bath, drive, cfg.grid(g), cfg.method, controls, workers,
                           realization_id=int(cfg.bath.get("realization", 0)))
            curves.append(c)
            status[f"{stem}@{_fmt(float(x))}"] = c.status
        out[f"{stem}.csv"] = _curves_csv(curves, cfg.e_ref)
        out[f"{stem}.gp"] = emit_plot_script(out[f"{stem}.csv"], "rate-curve", f"{stem}.csv")
    meta["point_status"] = status
    meta["bath_fingerprint"] = bath.spec_fingerprint


def _run_ensemble(cfg: SweepConfig, workers: int, out: dict, meta: dict):
    spec = cfg.bath_spec()
    ens = cfg.ensemble
    n = int(ens.get("n_realizations", 2000))
    policy = ens.get("e0_policy", "uniform-spacing")
    rows, stats = [], []
    for x in cfg.amp_over_omega:
        drive = DriveParams(e0=float(cfg.drive.get("e0", 0.0)), amp=float(x) * cfg.omega(), omega=cfg.omega())
        st = monte_carlo_stats(spec, drive, policy, n, cfg.method, cfg.integrator(), workers)
        stats.append(json.loads(st.to_json()))
        rows.append([x, st.n_realizations, st.mean, st.variance, st.std_err_mean,
                     predicted_mean(spec), predicted_variance(spec, float(x))])
    head = "amp_over_omega,n,mean,variance,std_err,predicted_mean,predicted_variance\n"
    out["ensemble.csv"] = head + "".join(
        f"{_fmt(r[0])},{r[1]},{','.join(_fmt(v) for v in r[2:])}\n" for r in rows)
    out["stats.json"] = json.dumps(stats, indent=2) + "\n"


def _run_scaling(cfg: SweepConfig, workers: int, out: dict, meta: dict):
    spec = cfg.bath_spec()
    ens = cfg.ensemble
    drive = DriveParams(e0=float(cfg.drive.get("e0", 0.0)), omega=cfg.omega())
    fit = scaling_fit(spec, drive, cfg.amp_over_omega, int(ens.get("n_realizations", 2000)),
                      cfg.method, ens.get("e0_policy", "uniform-spacing"), cfg.integrator(), workers)
    out["scaling.csv"] = "amp_over_omega,sigma\n" + "".join(
        f"{_fmt(x)},{_fmt(s)}\n" for x, s in zip(fit.indices, fit.sigmas))
    out["scaling.json"] = json.dumps(fit.to_dict(), indent=2) + "\n"
    out["scaling.gp"] = emit_plot_script(out["scaling.csv"], "scaling", "scaling.csv",
                                         fit=(fit.slope, fit.intercept))


def _run_rabi(cfg: SweepConfig, workers: int, out: dict, meta: dict):
    r = cfg.rabi
    omega_r = float(r.get("omega_r", cfg.omega() / 50.0))
    e0 = float(r.get("e0", 20.0 * cfg.omega()))
    rows = []
    for m, x in r.get("cases", []):
        drive = DriveParams(e0=e0, amp=float(x) * cfg.omega(), omega=cfg.omega())
        res = simulate_rabi(drive, RabiDrive(omega_r, e0 + int(m) * cfg.omega()), r.get("horizon"))
        rows.append((m, x, effective_rabi(int(m), float(x), omega_r), res.frequency))
    if "multiharmonic" in r:
        mh = r["multiharmonic"]
        drive = DriveParams(e0=e0, amp=float(mh["x"]) * cfg.omega(), omega=cfg.omega())
        res = multiharmonic_recovery(drive, omega_r, int(mh.get("order", 8)), r.get("horizon"))
        meta["multiharmonic"] = {"x": mh["x"], "order": mh.get("order", 8),
                                 "measured": res.frequency, "target": omega_r}
    out["rabi.csv"] = rabi_table_csv(rows)


def _run_phonon(cfg: SweepConfig, workers: int, out: dict, meta: dict):
    p = cfg.phonon
    spec = PhononBathSpec(float(p.get("center", 0.0)), float(p["width"]), float(p["spacing"]), float(p["v"]))
    eps = float(p.get("epsilon", spec.center))
    res = simulate_explicit(spec, eps, float(p["horizon"]))
    gr = golden_rule_rate(spec, eps)
    doc = {"golden_rule_gamma": gr, "predicted_population_rate": 2 * gr, "fitted_population_rate": res.rate,
           "rel_err": res.rate / (2 * gr) - 1.0, "lamb_shift": res.lamb_shift,
           "norm_error": res.norm_error, "fit_window": list(res.window), "n_modes": spec.n_modes}
    out["phonon.json"] = json.dumps(doc, indent=2) + "\n"
    stride = max(1, len(res.times) // 2000)
    t, b = res.times[::stride], res.b[::stride]
    out["phonon_trajectory.csv"] = "t,re_a,im_a,abs_a,population\n" + "".join(
        f"{_fmt(ti)},{_fmt(bi.real)},{_fmt(bi.imag)},{_fmt(abs(bi))},{_fmt(abs(bi) ** 2)}\n"
        for ti, bi in zip(t, b))


_RUNNERS = {"rate-curve": _run_rate_curve, "ensemble": _run_ensemble, "scaling": _run_scaling,
            "rabi": _run_rabi, "phonon-oracle": _run_phonon}


def run(cfg: SweepConfig, out_dir: str | Path, workers: int = 1) -> dict:
    """Execute ``cfg`` and write its outputs plus ``manifest.json`` into ``out_dir``.

    Returns the manifest. Output files are written only after every
    computation has finished, one at a time.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, str] = {}
    meta: dict = {}
    _RUNNERS[cfg.mode](cfg, workers, outputs, meta)
    for name, text in outputs.items():
        (out_dir / name).write_text(text)
    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "outputs": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(outputs.items())},
        **meta,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, allow_nan=True) + "\n")
    return manifest


def emit_plot_script(csv_text: str, kind: str, csv_name: str, fit=None) -> str:
    """Gnuplot script for a results CSV.

    ``kind="rate-curve"`` overlays ``gamma_over_omega`` against
    ``e0_over_omega``, one line per ``amp_over_omega``; ``kind="scaling"``
    draws ``sigma`` against ``A/Omega`` on log-log axes, with the fitted
    power law when ``fit=(slope, intercept)`` is given.

    Raises
    ------
    ValueError
        If the CSV has no data rows or lacks the needed columns.
    """
    lines = [ln for ln in csv_text.strip().splitlines() if ln]
    if len(lines) < 2:
        raise ValueError("no results to plot")
    header = lines[0].split(",")
    base = csv_name.rsplit(".", 1)[0]
    if kind == "rate-curve":
        need = ["e0_over_omega", "gamma_over_omega", "amp_over_omega"]
        if any(c not in header for c in need):
            raise ValueError(f"rate-curve CSV lacks columns {need}")
        ix, iy, ia = (header.index(c) + 1 for c in need)
        amps = []
        for ln in lines[1:]:
            a = ln.split(",")[ia - 1]
            if a not in amps:
                amps.append(a)
        plots = ", \\\n     ".join(
            f"'{csv_name}' using (${ia}=={a} ? ${ix} : 1/0):{iy} with lines title 'A/Omega = {float(a):g}'"
            for a in amps)
        body = [
            "set xlabel '(E_0 - E^*)/Omega'",
            "set ylabel 'Gamma/Omega'",
            "set key top right",
            f"plot {plots}",
        ]
    elif kind == "scaling":
        if header[:2] != ["amp_over_omega", "sigma"]:
            raise ValueError("scaling CSV needs columns amp_over_omega, sigma")
        body = [
            "set logscale xy",
            "set xlabel 'A/Omega'",
            "set ylabel 'sigma/Omega'",
        ]
        plot = f"plot '{csv_name}' using 1:2 with points pt 7 title 'Monte Carlo'"
        if fit is not None:
            slope, intercept = fit
            body.append(f"f(x) = exp({intercept:.17g}) * x**({slope:.17g})")
            plot += f", f(x) with lines title sprintf('slope %.3f', {slope:.17g})"
        body.append(plot)
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    head = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        f"set output '{base}.png'",
    ]
    return "\n".join(head + body) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fmqubit", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="config path, bundled name or manifest.json")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--method", choices=METHODS, help="override the rate estimator")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.method is not None:
            cfg = cfg.with_method(args.method)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
    except (ConfigError, OSError) as exc:
        log.error("configuration error: %s", exc)
        return 1
    try:
        manifest = run(cfg, args.out, args.threads)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        log.error("numerical failure: %s", exc)
        return 2
    failed = sum(s != "ok" for st in manifest.get("point_status", {}).values() for s in st)
    if failed:
        log.warning("%d grid points have no rate (see point_status in the manifest)", failed)
    log.info("wrote %s", ", ".join(manifest["outputs"]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
