"""Parameter sweeps, power-law fits and the combined loss x dephasing surface."""
from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from ..channels import lifetimes_to_rates
from ..codes import make_encoding
from ..conic_solver import SolverSettings
from ..fidelity_opt import fidelity_dephasing, fidelity_loss
from .config import ExperimentConfig, code_dim, code_label, parse_code

__all__ = [
    "FitResult", "CombinedSurface", "evaluate_loss", "evaluate_dephasing", "loss_grid",
    "dephasing_grid", "sweep_alpha", "sweep_gamma", "sweep_delta", "fit_power_law",
    "relative_infidelity", "qubit_equivalent", "combined_surface", "combined_from_config",
    "line_fidelity",
    "cycle_time_bound", "comparison_table", "clear_cache",
]

log = logging.getLogger(__name__)

_CACHE: dict = {}


def clear_cache():
    _CACHE.clear()


def _settings_key(s: SolverSettings):
    return tuple(sorted(asdict(s).items()))


# ------------------------------------------------------------ single points

def evaluate_loss(code: str, alpha: float, gamma: float, n_sdp: int = 0, seed: int = 0,
                  settings: SolverSettings | None = None) -> dict:
    """One loss point; failures are recorded in the row, never raised."""
    rec = {"code": code_label(code), "d": code_dim(code), "alpha": float(alpha),
           "gamma": float(gamma), "seed": int(seed), "n_sdp": int(n_sdp)}
    try:
        enc = make_encoding(parse_code(code), alpha, seed)
        f, alt = fidelity_loss(enc, gamma, n_sdp, settings)
        rec.update(F=f, status="ok")
        if alt is not None:
            rec["trajectory"] = [float(v) for v in alt.trajectory]
            rec["converged"] = all(dg.get("converged", True) for dg in alt.diagnostics)
    except Exception as exc:  # noqa: BLE001 - sweeps record and continue
        log.warning("loss point %s alpha=%g gamma=%g failed: %s", code, alpha, gamma, exc)
        rec.update(F=float("nan"), status=f"error: {exc}")
    return rec


def evaluate_dephasing(code: str, alphas: Iterable[float], delta: float, n_total: int,
                       norm_floor: float = 0.75, seed: int = 0,
                       settings: SolverSettings | None = None) -> list[dict]:
    """An alpha chain at fixed delta, each point warm started from the previous one."""
    rows, state = [], None
    for alpha in alphas:
        rec = {"code": code_label(code), "d": code_dim(code), "alpha": float(alpha),
               "delta": float(delta), "N": int(n_total), "seed": int(seed)}
        try:
            enc = make_encoding(parse_code(code), alpha, seed)
            f, info = fidelity_dephasing(enc, delta, n_total, settings=settings,
                                         norm_floor=norm_floor, warm_start=state)
            state = info.pop("state")
            rec.update(F=f, status="ok", captured_norm=info["captured_norm"],
                       support_dim=info["support_dim"],
                       converged=bool(info["solver"]["converged"]),
                       iterations=int(info["solver"]["iterations"]))
        except Exception as exc:  # noqa: BLE001
            log.warning("dephasing point %s alpha=%g delta=%g failed: %s", code, alpha, delta, exc)
            rec.update(F=float("nan"), status=f"error: {exc}")
        rows.append(rec)
    return rows


def _loss_task(args):
    return evaluate_loss(*args)


def _deph_task(args):
    return evaluate_dephasing(*args)


def _pool_map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        # map keeps task order, so aggregation does not depend on scheduling
        return list(ex.map(fn, tasks))


def loss_grid(cfg: ExperimentConfig, code: str, alphas, gammas) -> dict:
    """{(gamma, alpha): row} for every grid pair, memoized across calls."""
    skey = _settings_key(cfg.solver)
    out, todo = {}, []
    for g in gammas:
        for a in alphas:
            key = ("loss", parse_code(code), float(a), float(g), cfg.n_sdp, cfg.seed, skey)
            if key in _CACHE:
                out[(g, a)] = _CACHE[key]
            else:
                todo.append((key, (g, a), (code, a, g, cfg.n_sdp, cfg.seed, cfg.solver)))
    rows = _pool_map(_loss_task, [t for _, _, t in todo], cfg.workers)
    for (key, ga, _), row in zip(todo, rows):
        _CACHE[key] = row
        out[ga] = row
    return out


def dephasing_grid(cfg: ExperimentConfig, code: str, alphas, deltas) -> dict:
    """{(delta, alpha): row}; one warm-started alpha chain per delta."""
    n_total = cfg.truncation(code)
    skey = _settings_key(cfg.solver)
    out, todo = {}, []
    for dl in deltas:
        key = ("deph", parse_code(code), tuple(float(a) for a in alphas), float(dl), n_total,
               cfg.norm_floor, cfg.seed, skey)
        if key in _CACHE:
            rows = _CACHE[key]
            out.update({(dl, r["alpha"]): r for r in rows})
        else:
            todo.append((key, dl, (code, tuple(alphas), dl, n_total, cfg.norm_floor, cfg.seed,
                                   cfg.solver)))
    chains = _pool_map(_deph_task, [t for _, _, t in todo], cfg.workers)
    for (key, dl, _), rows in zip(todo, chains):
        _CACHE[key] = rows
        out.update({(dl, r["alpha"]): r for r in rows})
    return out


# ------------------------------------------------------------------ sweeps

def _best(rows):
    ok = [r for r in rows if r["status"] == "ok" and np.isfinite(r["F"])]
    if not ok:
        return None
    # ties resolve to the smallest alpha (rows arrive sorted by alpha)
    return max(ok, key=lambda r: r["F"])


def sweep_alpha(cfg: ExperimentConfig, code: str | None = None) -> tuple[list[dict], float | None]:
    """F on the alpha grid at cfg.gamma (loss) or cfg.delta (dephasing, when set)."""
    code = code or cfg.code
    alphas = cfg.alpha_grid(code)
    if cfg.delta is not None:
        grid = dephasing_grid(cfg, code, alphas, [cfg.delta])
        rows = [grid[(cfg.delta, a)] for a in alphas]
    else:
        grid = loss_grid(cfg, code, alphas, [cfg.gamma])
        rows = [grid[(cfg.gamma, a)] for a in alphas]
    best = _best(rows)
    return rows, (best["alpha"] if best else None)


def _minimize_rows(grid, params, alphas, name):
    table = []
    for p in params:
        rows = [grid[(p, a)] for a in alphas]
        best = _best(rows)
        if p == 0:
            table.append({name: 0.0, "min_infidelity": 0.0, "alpha_opt": float(alphas[0]),
                          "F": 1.0, "failed": 0})
            continue
        failed = sum(r["status"] != "ok" for r in rows)
        if best is None:
            table.append({name: float(p), "min_infidelity": float("nan"),
                          "alpha_opt": float("nan"), "F": float("nan"), "failed": failed})
        else:
            table.append({name: float(p), "min_infidelity": max(1.0 - best["F"], 0.0),
                          "alpha_opt": best["alpha"], "F": best["F"], "failed": failed})
    return table


def sweep_gamma(cfg: ExperimentConfig, code: str | None = None, capped: bool = True) -> list[dict]:
    """Per gamma: min over the (optionally capped) alpha grid of 1 - F."""
    code = code or cfg.code
    alphas = cfg.alpha_grid(code, capped)
    grid = loss_grid(cfg, code, alphas, cfg.gammas)
    return _minimize_rows(grid, cfg.gammas, alphas, "gamma")


def sweep_delta(cfg: ExperimentConfig, code: str | None = None, capped: bool = True) -> list[dict]:
    code = code or cfg.code
    alphas = cfg.alpha_grid(code, capped)
    grid = dephasing_grid(cfg, code, alphas, cfg.deltas)
    return _minimize_rows(grid, cfg.deltas, alphas, "delta")


# -------------------------------------------------------------------- fits

@dataclass
class FitResult:
    a: float
    b: float
    residual: float
    grid: tuple[float, ...]

    def predict(self, x):
        return self.a * np.asarray(x, dtype=float) ** self.b


def fit_power_law(x, infidelity) -> FitResult:
    """Least squares of log(1-F) = log a + b log x over points with 1-F > 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(infidelity, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 3:
        raise ValueError("need at least 3 points with positive infidelity")
    lx, ly = np.log(x[ok]), np.log(y[ok])
    (b, loga), res, *_ = np.polyfit(lx, ly, 1, full=True)
    resid = float(np.sqrt(res[0] / ok.sum())) if len(res) else 0.0
    return FitResult(float(np.exp(loga)), float(b), resid, tuple(float(v) for v in x[ok]))


def relative_infidelity(f8: float, f3: float) -> float:
    """(1 - F8) / (1 - F3^log3(8)); NaN (undefined) when F3 = 1."""
    for f in (f8, f3):
        if not 0 < f <= 1:
            raise ValueError("fidelities must lie in (0, 1]")
    denom = 1.0 - f3 ** (math.log(8) / math.log(3))
    if denom <= 0:
        log.warning("relative infidelity undefined for F3 = 1")
        return float("nan")
    return (1.0 - f8) / denom


def qubit_equivalent(f: float, d: int = 8) -> float:
    """F^(1/log2 d): the per-qubit fidelity carrying the same log2 d qubits."""
    return float(f ** (1.0 / math.log2(d)))


# --------------------------------------------------------------- combined

@dataclass
class CombinedSurface:
    gammas: tuple[float, ...]
    deltas: tuple[float, ...]
    alphas: tuple[float, ...]
    loss: np.ndarray       # [gamma, alpha] F
    dephasing: np.ndarray  # [delta, alpha] F
    F: np.ndarray          # [gamma, delta] max_alpha product
    alpha_opt: np.ndarray  # [gamma, delta]


def combined_surface(gammas, deltas, alphas, loss_f, deph_f) -> CombinedSurface:
    """F(gamma, delta) = max_alpha F_loss(gamma, alpha) F_deph(delta, alpha) on a common alpha grid."""
    loss_f = np.asarray(loss_f, dtype=float)
    deph_f = np.asarray(deph_f, dtype=float)
    if loss_f.shape != (len(gammas), len(alphas)) or deph_f.shape != (len(deltas), len(alphas)):
        raise ValueError("loss and dephasing tables must share the alpha grid")
    prod = loss_f[:, None, :] * deph_f[None, :, :]
    prod = np.where(np.isfinite(prod), prod, -np.inf)
    idx = np.argmax(prod, axis=2)
    f = np.take_along_axis(prod, idx[..., None], axis=2)[..., 0]
    return CombinedSurface(tuple(gammas), tuple(deltas), tuple(alphas), loss_f, deph_f, f,
                           np.asarray(alphas)[idx])


def combined_from_config(cfg: ExperimentConfig) -> CombinedSurface:
    """Loss and dephasing tables for cfg.code on its alpha grid, combined."""
    alphas = cfg.alpha_grid(cfg.code)
    lg = loss_grid(cfg, cfg.code, alphas, cfg.gammas)
    dg = dephasing_grid(cfg, cfg.code, alphas, cfg.deltas)
    lf = np.array([[lg[(g, a)]["F"] for a in alphas] for g in cfg.gammas])
    df = np.array([[dg[(d, a)]["F"] for a in alphas] for d in cfg.deltas])
    return combined_surface(cfg.gammas, cfg.deltas, alphas, lf, df)


def _interp_infidelity(x, grid, table):
    """log-log interpolation of 1 - F along axis 0, linear extrapolation at the ends."""
    lg = np.log(np.asarray(grid))
    li = np.log(np.clip(1.0 - table, 1e-300, None))
    lx = np.log(x)
    j = int(np.clip(np.searchsorted(lg, lx) - 1, 0, len(lg) - 2))
    w = (lx - lg[j]) / (lg[j + 1] - lg[j])
    return np.clip(np.exp((1 - w) * li[j] + w * li[j + 1]), 0.0, 1.0)


def line_fidelity(surface: CombinedSurface, T: float, T1: float, Tphi: float) -> float:
    """Combined F for a recovery cycle of length T given the mode lifetimes."""
    if T <= 0:
        return 1.0
    g, dl = lifetimes_to_rates(T, T1, Tphi)
    il = _interp_infidelity(g, surface.gammas, surface.loss)
    idp = _interp_infidelity(dl, surface.deltas, surface.dephasing)
    return float(np.max((1.0 - il) * (1.0 - idp)))


def cycle_time_bound(surface: CombinedSurface, T1: float, Tphi: float, target: float) -> dict:
    """Longest cycle time with combined F >= target along the lifetime line."""
    lo = min(surface.gammas[0] * T1, surface.deltas[0] * Tphi) * 1e-3
    hi = max(surface.gammas[-1] * T1, surface.deltas[-1] * Tphi) * 10
    h = lambda lt: line_fidelity(surface, math.exp(lt), T1, Tphi) - target  # noqa: E731
    if h(math.log(lo)) < 0 or h(math.log(hi)) > 0:
        return {"T": float("nan"), "gamma": float("nan"), "delta": float("nan"), "inside_grid": False}
    T = math.exp(brentq(h, math.log(lo), math.log(hi), xtol=1e-10))
    g, dl = lifetimes_to_rates(T, T1, Tphi)
    inside = surface.gammas[0] <= g <= surface.gammas[-1] and surface.deltas[0] <= dl <= surface.deltas[-1]
    return {"T": T, "gamma": g, "delta": dl, "inside_grid": bool(inside)}


# -------------------------------------------------------------- comparison

def comparison_table(cfg: ExperimentConfig, codes: list[str], capped: bool = True) -> list[dict]:
    """Rows per gamma with each code's min infidelity (and its alpha) side by side."""
    per_code = {c: sweep_gamma(cfg, c, capped) for c in codes}
    rows = []
    for i, g in enumerate(cfg.gammas):
        row = {"gamma": float(g)}
        for c in codes:
            label = code_label(c)
            row[f"{label} 1-F"] = per_code[c][i]["min_infidelity"]
            row[f"{label} alpha"] = per_code[c][i]["alpha_opt"]
        best = min(codes, key=lambda c: (np.nan_to_num(per_code[c][i]["min_infidelity"], nan=np.inf)))
        row["best"] = code_label(best)
        rows.append(row)
    return rows
