"""Command line driver: ``python -m bosonic2t <subcommand> [flags]``.

Every subcommand writes into ``--out`` and finishes with a manifest.json
that lists each emitted file with its SHA-256 and the config hash.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ..codes import make_encoding, quoctit_gram_analytic
from ..constellation import build_2t_basis, write_constellation_csv
from .config import (ConfigError, ExperimentConfig, code_dim, code_label, config_hash,
                     load_config, parse_code, parse_grid)
from .output import svg_heatmap, svg_lines, svg_scatter, write_csv, write_json, write_manifest
from .sweeps import (combined_from_config, comparison_table, cycle_time_bound, fit_power_law,
                     line_fidelity, qubit_equivalent, relative_infidelity, sweep_alpha, sweep_delta,
                     sweep_gamma)

log = logging.getLogger("bosonic2t")

SUBCOMMANDS = ("constellation", "gram", "encode", "sweep-alpha", "sweep-gamma", "sweep-delta",
               "fit", "combined", "table", "run")

ALPHA_HEADER = ["code", "alpha", "F", "infidelity", "status"]
GAMMA_HEADER = ["gamma", "min_infidelity", "alpha_opt", "F", "failed"]
DELTA_HEADER = ["delta", "min_infidelity", "alpha_opt", "F", "failed"]


# ------------------------------------------------------------- artifacts

def do_constellation(cfg: ExperimentConfig, out: Path, alpha: float) -> list[Path]:
    basis = build_2t_basis(alpha)
    csv_path = write_constellation_csv(basis, out / "constellation.csv")
    groups = {"mode 1": [(s.alpha1.real, s.alpha1.imag) for s in basis.states],
              "mode 2": [(s.alpha2.real, s.alpha2.imag) for s in basis.states]}
    svg = svg_scatter(out / "constellation.svg", groups, title=f"2T constellation, alpha={alpha:g}",
                      circles=(abs(alpha), abs(alpha) / math.sqrt(2)))
    return [csv_path, svg]


def do_gram(cfg: ExperimentConfig, out: Path, alpha: float) -> list[Path]:
    basis = build_2t_basis(alpha)
    g = basis.gram
    rows = [(i, j, g[i, j].real, g[i, j].imag) for i in range(len(g)) for j in range(len(g))]
    files = [write_csv(out / "gram.csv", ["i", "j", "re", "im"], rows)]
    eta, spec = quoctit_gram_analytic(alpha)
    num = np.linalg.eigvalsh(eta)
    files.append(write_csv(out / "quoctit_spectrum.csv", ["level", "lambda", "degeneracy"],
                           [(k + 1, lam, deg) for k, (lam, deg) in
                            enumerate(zip(spec.lambdas, spec.degeneracies))]))
    files.append(write_json(out / "quoctit_gram.json", {
        "alpha": alpha, "rho": [spec.rho.real, spec.rho.imag], "tau": [spec.tau.real, spec.tau.imag],
        "chi": [spec.chi.real, spec.chi.imag], "numeric_eigenvalues": num,
        "trace_identity_error": spec.trace_identity_error}))
    return files


def do_encode(cfg: ExperimentConfig, out: Path, alpha: float) -> list[Path]:
    enc = make_encoding(parse_code(cfg.code), alpha, cfg.seed)
    rows = [(k, s, enc.coeffs[s, k].real, enc.coeffs[s, k].imag)
            for k in range(enc.logical_dim) for s in range(enc.coeffs.shape[0])]
    files = [write_csv(out / "codewords.csv", ["logical", "state", "re", "im"], rows)]
    files.append(write_json(out / "encoding.json", {**enc.to_json(),
                                                   "orthonormality_error": enc.orthonormality_error()}))
    return files


def _alpha_rows(rows):
    return [{**r, "infidelity": 1 - r["F"] if np.isfinite(r["F"]) else float("nan")} for r in rows]


def do_sweep_alpha(cfg: ExperimentConfig, out: Path) -> list[Path]:
    codes = [cfg.code, *cfg.rivals]
    files, series, summary = [], {}, {}
    for code in codes:
        rows, best = sweep_alpha(cfg, code)
        rows = _alpha_rows(rows)
        name = "sweep_alpha.csv" if code == cfg.code else f"sweep_alpha_{_slug(code)}.csv"
        files.append(write_csv(out / name, ALPHA_HEADER, rows))
        series[code_label(code)] = ([r["alpha"] for r in rows], [r["infidelity"] for r in rows])
        summary[code_label(code)] = {"argmax_alpha": best}
    noise = f"delta={cfg.delta:g}" if cfg.delta is not None else f"gamma={cfg.gamma:g}"
    files.append(svg_lines(out / "sweep_alpha.svg", series, "alpha", "1 - F", noise, ylog=True))
    files.append(write_json(out / "sweep_alpha.json", summary))
    return files


def _sweep_param(cfg, out, which):
    codes = [cfg.code, *cfg.rivals]
    files, series = [], {}
    fn, header, grid = ((sweep_gamma, GAMMA_HEADER, "gamma") if which == "gamma"
                        else (sweep_delta, DELTA_HEADER, "delta"))
    for code in codes:
        rows = fn(cfg, code)
        name = f"sweep_{grid}.csv" if code == cfg.code else f"sweep_{grid}_{_slug(code)}.csv"
        files.append(write_csv(out / name, header, rows))
        series[code_label(code)] = ([r[grid] for r in rows], [r["min_infidelity"] for r in rows])
    files.append(svg_lines(out / f"sweep_{grid}.svg", series, grid, "min 1 - F", "", xlog=True, ylog=True))
    return files


def do_fit(cfg: ExperimentConfig, out: Path) -> list[Path]:
    rows, fits = [], {}
    for code in [cfg.code, *cfg.rivals]:
        table = sweep_gamma(cfg, code)
        try:
            fr = fit_power_law([r["gamma"] for r in table], [r["min_infidelity"] for r in table])
            fits[code_label(code)] = fr
            rows.append({"code": code_label(code), "a": fr.a, "b": fr.b, "residual": fr.residual,
                         "points": len(fr.grid)})
        except ValueError as exc:
            rows.append({"code": code_label(code), "a": float("nan"), "b": float("nan"),
                         "residual": float("nan"), "points": 0, "error": str(exc)})
    files = [write_csv(out / "fit.csv", ["code", "a", "b", "residual", "points"], rows)]
    if "2T-quoctit" in fits and "2T-qutrit" in fits:
        f8, f3 = fits["2T-quoctit"], fits["2T-qutrit"]
        g = np.geomspace(1e-3, 1e-1, 9)
        rel = [(x, relative_infidelity(1 - f8.predict(x), 1 - f3.predict(x))) for x in g]
        files.append(write_csv(out / "relative_infidelity.csv", ["gamma", "I_R"], rel))
    return files


def do_combined(cfg: ExperimentConfig, out: Path) -> list[Path]:
    surf = combined_from_config(cfg)
    d = code_dim(cfg.code)
    rows = [{"gamma": g, "delta": dl, "F": surf.F[i, j], "alpha_opt": surf.alpha_opt[i, j],
             "qubit_equivalent": qubit_equivalent(surf.F[i, j], d) if np.isfinite(surf.F[i, j]) else float("nan")}
            for i, g in enumerate(surf.gammas) for j, dl in enumerate(surf.deltas)]
    files = [write_csv(out / "combined.csv", ["gamma", "delta", "F", "alpha_opt", "qubit_equivalent"], rows)]
    ts = np.geomspace(1e-6, 1e-2, 41)
    line = []
    for T in ts:
        g = -math.expm1(-T / cfg.T1)
        line.append({"T": T, "gamma": g, "delta": T / cfg.Tphi, "F": line_fidelity(surf, T, cfg.T1, cfg.Tphi)})
    files.append(write_csv(out / "lifetime_line.csv", ["T", "gamma", "delta", "F"], line))
    bound = cycle_time_bound(surf, cfg.T1, cfg.Tphi, cfg.target)
    files.append(write_json(out / "cycle_time.json", {"T1": cfg.T1, "Tphi": cfg.Tphi, "target": cfg.target, **bound}))
    files.append(svg_heatmap(out / "combined.svg", surf.deltas, surf.gammas, surf.F, "delta", "gamma",
                             f"{code_label(cfg.code)} combined F",
                             line=[(r["delta"], r["gamma"]) for r in line]))
    return files


def do_table(cfg: ExperimentConfig, out: Path) -> list[Path]:
    codes = [cfg.code, *cfg.rivals] if cfg.rivals else default_rivals(cfg.code)
    rows = comparison_table(cfg, codes)
    header = ["gamma"] + [h for c in codes for h in (f"{code_label(c)} 1-F", f"{code_label(c)} alpha")] + ["best"]
    cap = "none" if cfg.alpha_cap is None else f"{cfg.alpha_cap:g}"
    return [write_csv(out / f"table_cap_{cap}.csv", header, rows)]


def default_rivals(code: str) -> list[str]:
    d = code_dim(code)
    return [code] + [f"[{d},{k * d}]-PSK" for k in (1, 2, 3)]


def _slug(code: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in code_label(code)).strip("_")


# ------------------------------------------------------------------- CLI

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bosonic2t", description="2T bosonic qudit experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="sectioned key = value file; flags override it")
        sp.add_argument("--code", help="2T-qutrit | 2T-quoctit | [d,n]-PSK | random:d")
        sp.add_argument("--psk", help="d,n: shorthand for the [d,n]-PSK code")
        sp.add_argument("--alpha", help="value, or a grid for sweeps")
        sp.add_argument("--gamma", help="value for sweep-alpha, or a grid")
        sp.add_argument("--delta", help="value for sweep-alpha (dephasing), or a grid")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trunc-N", type=int, dest="trunc_N")
        sp.add_argument("--restrict-alpha", type=float, dest="alpha_cap")
        sp.add_argument("--rivals", help="semicolon separated extra codes")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    over = {}
    if args.code:
        over["code"] = args.code
    if args.psk:
        d, n = (int(v) for v in args.psk.split(","))
        over["code"] = f"[{d},{n}]-PSK"
    for key in ("seed", "trunc_N", "alpha_cap", "workers", "out"):
        v = getattr(args, key)
        if v is not None:
            over[key] = v
    if args.rivals:
        over["rivals"] = tuple(r.strip() for r in args.rivals.split(";") if r.strip())
    sweep = args.command in ("sweep-alpha",)
    if args.alpha is not None and args.command not in ("constellation", "gram", "encode"):
        over["alphas"] = parse_grid(args.alpha)
    if args.gamma is not None:
        g = parse_grid(args.gamma)
        if sweep and len(g) == 1:
            over["gamma"] = g[0]
        else:
            over["gammas"] = g
    if args.delta is not None:
        g = parse_grid(args.delta)
        if sweep and len(g) == 1:
            over["delta"] = g[0]
        else:
            over["deltas"] = g
    if args.config:
        return load_config(args.config, over)
    return ExperimentConfig(**over)


def _single_alpha(args, default=1.5) -> float:
    if args.alpha is None:
        return default
    g = parse_grid(args.alpha)
    if len(g) != 1:
        raise ValueError("--alpha takes a single value here")
    return g[0]


def run_command(command: str, cfg: ExperimentConfig, out: Path, alpha: float = 1.5) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    if command == "constellation":
        return do_constellation(cfg, out, alpha)
    if command == "gram":
        return do_gram(cfg, out, alpha)
    if command == "encode":
        return do_encode(cfg, out, alpha)
    if command == "sweep-alpha":
        return do_sweep_alpha(cfg, out)
    if command == "sweep-gamma":
        return _sweep_param(cfg, out, "gamma")
    if command == "sweep-delta":
        return _sweep_param(cfg, out, "delta")
    if command == "fit":
        return do_fit(cfg, out)
    if command == "combined":
        return do_combined(cfg, out)
    if command == "table":
        return do_table(cfg, out)
    raise ValueError(f"unknown step {command!r}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    try:
        if args.command == "run":
            files = []
            for step in cfg.steps:
                if step not in SUBCOMMANDS or step == "run":
                    print(f"error: unknown step {step!r} in config", file=sys.stderr)
                    return 2
                files += run_command(step, cfg, out / step)
        else:
            single = args.command in ("constellation", "gram", "encode")
            files = run_command(args.command, cfg, out, _single_alpha(args) if single else 1.5)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    settings = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    manifest = write_manifest(out, config_hash(cfg), settings, files, {"command": args.command})
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
