"""Acceptance criteria 1 to 10, one test and one PASS/FAIL summary line each.

Each test computes every sub-check, records the summary line, then asserts.
Heavy sweeps share the in-process sweep cache, so criterion 7 reuses the
alpha points criterion 6 already evaluated.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from bosonic2t.channels import (dephasing_fock, dephasing_kraus, dephasing_weights, loss_kraus_fock,
                                loss_superop, loss_weights)
from bosonic2t.codes import (apply_U, logical_U8, psk_encoding, quoctit_codewords,
                             quoctit_gram_analytic, quoctit_logical, qutrit_logical, random_encoding)
from bosonic2t.conic_solver import SolverSettings
from bosonic2t.constellation import build_2t_basis, circle_basis, fock_indices
from bosonic2t.fidelity_opt import alternate_optimize, loss_instance
from bosonic2t.harness.config import ExperimentConfig, load_config
from bosonic2t.harness.sweeps import (clear_cache, combined_from_config, cycle_time_bound,
                                      evaluate_dephasing, fit_power_law, sweep_gamma)
from oracles import loss_kraus, loss_weights_by_kraus, lowrank_kraus_search, overlap_bruteforce, psk_fock
from reference_values import U8_BLOCKS, reference_u8

ROOT = Path(__file__).resolve().parents[1]
FIT_GAMMAS = (3e-3, 1e-2, 3e-2, 1e-1)


def brute_codeword_gram(alpha, n_max=60):
    p = build_2t_basis(alpha).params
    ov = lambda s, t: overlap_bruteforce(p[s, 0], p[t, 0], n_max) * overlap_bruteforce(p[s, 1], p[t, 1], n_max)  # noqa: E731
    blocks = [np.flatnonzero(c) for c in quoctit_codewords().T]
    return np.array([[sum(ov(s, t) for s in a for t in b) for b in blocks] for a in blocks])


def nondecreasing(xs, tol=1e-6):
    return all(b >= a - tol for a, b in zip(xs, xs[1:]))


def fmt_list(xs, spec=".3g"):
    return "[" + ", ".join(format(x, spec) for x in xs) + "]"


# --------------------------------------------------------------- 1 and 2

def test_criterion_01_gram_pattern(acceptance):
    alphas = (0.5, 1.0, 1.5, 2.0, 3.0)
    t = time.perf_counter()
    analytic = [quoctit_gram_analytic(a)[0] for a in alphas]
    runtime = time.perf_counter() - t
    errs = [np.abs(eta - brute_codeword_gram(a)).max() for eta, a in zip(analytic, alphas)]
    ok = max(errs) <= 1e-10 and runtime < 1.0
    acceptance(1, ok, f"max |analytic - 9-term sums| = {max(errs):.1e} over alpha {alphas}; {runtime:.3f} s")
    assert ok


def test_criterion_02_quoctit_spectrum(acceptance):
    alphas = (0.5, 1.0, 1.5, 2.0, 3.0)
    t = time.perf_counter()
    worst_ev, worst_tr, degs = 0.0, 0.0, set()
    for a in alphas:
        eta, spec = quoctit_gram_analytic(a)
        num = np.sort(np.linalg.eigvalsh(eta))
        ana = np.sort(np.repeat(spec.lambdas, spec.degeneracies))
        l1, l2, l3, l4 = spec.lambdas
        worst_ev = max(worst_ev, np.abs(num - ana).max())
        worst_tr = max(worst_tr, abs(l1 + 2 * l2 + 2 * l3 + 3 * l4 - 8 * spec.rho))
        degs.add(tuple(spec.degeneracies))
    runtime = time.perf_counter() - t
    ok = worst_ev <= 1e-9 and worst_tr <= 1e-9 and degs == {(1, 2, 2, 3)} and runtime < 1.0
    acceptance(2, ok, f"eigenvalue err {worst_ev:.1e}, trace err {worst_tr:.1e}, degeneracies {sorted(degs)}; {runtime:.3f} s")
    assert ok


# -------------------------------------------------------------------- 3

def test_criterion_03_logical_bases(acceptance):
    t = time.perf_counter()
    alphas = (0.5, 0.8, 1.0, 1.5, 2.0, 2.5, 3.0)
    orth = max(max(qutrit_logical(a).orthonormality_error(), quoctit_logical(a).orthonormality_error())
               for a in alphas)
    zbar = np.diag(np.exp(-2j * np.pi * np.arange(3) / 3))
    z_err = ev_err = 0.0
    for a in alphas:
        enc = qutrit_logical(a)
        u = enc.coeffs.conj().T @ enc.basis.gram @ apply_U(enc.coeffs)
        # the quoted eigenvalues belong to the adjoint of |q> -> |lq>
        z_err = max(z_err, np.abs(u.conj().T - zbar).max())
        ev = np.linalg.eigvals(u.conj().T)
        ev_err = max(ev_err, np.abs(ev[:, None] - np.diag(zbar)[None, :]).min(axis=0).max())
    mask = np.zeros((8, 8), bool)
    for lo, hi in U8_BLOCKS:
        mask[lo:hi, lo:hi] = True
    u_err = 0.0
    for a in alphas:
        u8 = logical_U8(a)
        u_err = max(u_err, np.abs(u8.conj().T @ u8 - np.eye(8)).max(),
                    np.abs(np.linalg.matrix_power(u8, 3) - np.eye(8)).max(), np.abs(u8[~mask]).max())
    ref, ours = reference_u8(), logical_U8(1.5).conj().T
    entry_err = max(np.abs(ours[lo:hi, lo:hi] - ref[lo:hi, lo:hi]).max() for lo, hi in ((0, 1), (1, 3), (5, 8)))
    # the reference {3,4} block is not unitary; only its magnitudes can agree
    mag_err = np.abs(np.abs(ours[3:5, 3:5]) - np.abs(ref[3:5, 3:5])).max()
    row_err = np.abs(ours[5, 5:] - np.array([-0.5j, 0.5 + 0.5j, 0.5])).max()
    runtime = time.perf_counter() - t
    ok = (orth <= 1e-9 and z_err <= 1e-10 and ev_err <= 1e-10 and u_err <= 1e-10
          and entry_err <= 1e-10 and mag_err <= 1e-10 and row_err <= 1e-10 and runtime < 5.0)
    acceptance(3, ok, f"orthonormality {orth:.1e}, Zbar {max(z_err, ev_err):.1e}, U8 structure {u_err:.1e}, "
                      f"reference entries {max(entry_err, row_err):.1e} (block 3-4 magnitudes {mag_err:.1e}); {runtime:.2f} s")
    assert ok


# -------------------------------------------------------------------- 4

def test_criterion_04_channel_exactness(acceptance):
    t = time.perf_counter()
    basis = build_2t_basis(2.0)
    loss_err = np.abs(loss_weights(basis.params, 0.1) - loss_weights_by_kraus(basis.params, 0.1, l_max=40)).max()

    n, delta = 8, 0.05
    ch = dephasing_fock(n, delta)
    occ = ch.info["occupations"]
    levels = np.arange(n + 1, dtype=float)
    single = [np.sqrt(delta ** l / math.factorial(l)) * np.exp(-delta * levels ** 2 / 2) * levels ** l
              for l in range(60)]
    w1 = sum(np.outer(k, k) for k in single)
    ref = w1[occ[:, 0][:, None], occ[:, 0][None, :]] * w1[occ[:, 1][:, None], occ[:, 1][None, :]]
    deph_err = np.abs(ch.weights - ref).max()

    comp = max(loss_superop(basis, 0.1).completeness_error(),
               np.abs(sum(k.T @ k for k in loss_kraus_fock(40, 0.1, 40)) - np.eye(41)).max(),
               np.abs(sum(k @ k for k in dephasing_kraus(n, delta, 59)) - np.eye(n + 1)).max(),
               ch.completeness_error())
    kraus_err = max(np.abs(a - b).max() for a, b in zip(loss_kraus_fock(20, 0.1, 20), loss_kraus(20, 0.1, 20)))

    rng = np.random.default_rng(2024)
    semi = add = 0.0
    occ6 = fock_indices(6, 2)
    for _ in range(20):
        a, g1, g2 = rng.uniform(0.5, 2.0), rng.uniform(0, 0.6), rng.uniform(0, 0.6)
        p = circle_basis(4, a).params
        g = 1 - (1 - g1) * (1 - g2)
        semi = max(semi, np.abs(loss_weights(p, g1) * loss_weights(np.sqrt(1 - g1) * p, g2) - loss_weights(p, g)).max())
        d1, d2 = rng.uniform(0, 0.3, 2)
        add = max(add, np.abs(dephasing_weights(occ6, d1) * dephasing_weights(occ6, d2)
                              - dephasing_weights(occ6, d1 + d2)).max())
    runtime = time.perf_counter() - t
    ok = (loss_err <= 1e-10 and deph_err <= 1e-10 and comp <= 1e-9 and kraus_err <= 1e-12
          and semi <= 1e-12 and add <= 1e-12 and runtime < 10.0)
    acceptance(4, ok, f"loss {loss_err:.1e}, dephasing {deph_err:.1e}, completeness {comp:.1e}, "
                      f"semigroup {semi:.1e}, additivity {add:.1e}; {runtime:.2f} s")
    assert ok


# -------------------------------------------------------------------- 5

def test_criterion_05_sdp_correctness(acceptance):
    gamma = 0.05
    tight = SolverSettings(tol=1e-9, gap_tol=1e-10, rel_gap=1e-7, max_iter=50_000)
    diffs, monotone, runtime = [], True, 0.0
    for alpha in (1.0, 2.0):
        enc = psk_encoding(2, 2, alpha)
        _, pts = psk_fock(2, 2, alpha, 60)
        ref = lowrank_kraus_search(pts, loss_kraus(60, gamma, 25), 2, restarts=6)
        t = time.perf_counter()
        best = 0.0
        for seed in range(3):
            e, noise = loss_instance(random_encoding(2, enc.basis, seed), gamma, symmetric=False)
            out = alternate_optimize(e, noise, 300, tight, stop_delta=1e-11)
            best = max(best, out.fidelity)
            # raw half-step optima, before the keep-the-better rule, within each certified gap
            running = -np.inf
            for dg in out.diagnostics:
                monotone &= dg["objective"] >= running - dg["gap"] - 1e-9
                running = max(running, dg["objective"])
            monotone &= nondecreasing(out.trajectory, 0.0)
        runtime += time.perf_counter() - t
        diffs.append(abs(best - ref))
    ok = max(diffs) <= 1e-4 and monotone and runtime < 120
    acceptance(5, ok, f"|alternation - Kraus search| = {fmt_list(diffs, '.1e')} at alpha 1, 2; "
                      f"monotone {monotone}; {runtime:.0f} s")
    assert ok


# -------------------------------------------------------------------- 6

@pytest.fixture(scope="module")
def fit_config():
    return ExperimentConfig(gammas=FIT_GAMMAS)


def test_criterion_06_loss_curves(acceptance, fit_config):
    t = time.perf_counter()
    q8 = sweep_gamma(fit_config, "2T-quoctit")
    q3 = sweep_gamma(fit_config, "2T-qutrit")
    runtime = time.perf_counter() - t
    f8 = fit_power_law(FIT_GAMMAS, [r["min_infidelity"] for r in q8])
    f3 = fit_power_law(FIT_GAMMAS, [r["min_infidelity"] for r in q3])
    a8 = [r["alpha_opt"] for r in q8]
    a3 = [r["alpha_opt"] for r in q3]
    checks = {
        "quoctit b": 1.0 <= f8.b <= 1.35,
        "quoctit a": abs(f8.a / 1.459 - 1) <= 0.35,
        "qutrit b": 1.5 <= f3.b <= 2.0,
        "quoctit alpha_opt": all(1.8 <= a <= 2.3 for a in a8),
        "qutrit alpha_opt": all(1.3 <= a <= 1.7 for a in a3),
        "runtime": runtime < 1800,
    }
    failed = [k for k, v in checks.items() if not v]
    acceptance(6, not failed, f"quoctit a={f8.a:.3f} b={f8.b:.3f} alpha_opt={fmt_list(a8)}; "
                              f"qutrit b={f3.b:.3f} alpha_opt={fmt_list(a3)}; {runtime:.0f} s"
                              + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert not failed, failed


# -------------------------------------------------------------------- 7

def test_criterion_07_comparisons(acceptance):
    t = time.perf_counter()
    capped = ExperimentConfig(gammas=FIT_GAMMAS, alpha_cap=3.0)
    inf = lambda code, cfg, cap=True: [r["min_infidelity"] for r in sweep_gamma(cfg, code, cap)]  # noqa: E731
    failed, notes = [], []
    for code, rivals in (("2T-quoctit", ("[8,8]-PSK", "[8,16]-PSK", "[8,24]-PSK")),
                         ("2T-qutrit", ("[3,3]-PSK", "[3,6]-PSK", "[3,9]-PSK"))):
        ours = inf(code, capped)
        notes.append(f"{code} {fmt_list(ours)}")
        for r in rivals:
            theirs = inf(r, capped)
            lost = [g for g, a, b in zip(FIT_GAMMAS, ours, theirs) if not a < b]
            if lost:
                failed.append(f"{code} vs {r} at gamma {fmt_list(lost)}")
                notes.append(f"{r} {fmt_list(theirs)}")
    one = ExperimentConfig(gammas=(1e-2,))
    q8 = inf("2T-quoctit", one, False)[0]
    psk = {r: inf(r, one, False)[0] for r in ("[8,16]-PSK", "[8,24]-PSK")}
    if not min(psk.values()) < q8:
        failed.append("uncapped PSK does not beat the quoctit at gamma 1e-2")
    notes.append(f"uncapped gamma=1e-2: quoctit {q8:.3g}, " + ", ".join(f"{k} {v:.3g}" for k, v in psk.items()))
    runtime = time.perf_counter() - t
    if runtime >= 3600:
        failed.append("runtime")
    acceptance(7, not failed, "; ".join(notes) + f"; {runtime:.0f} s"
               + (f"; failing: {'; '.join(failed)}" if failed else ""))
    assert not failed, failed


# -------------------------------------------------------------------- 8

def test_criterion_08_dephasing_trends(acceptance):
    delta = 3e-2
    trend = {a: [evaluate_dephasing("2T-quoctit", (a,), delta, n)[0]["F"] for n in (8, 10, 12)]
             for a in (1.5, 2.0)}
    alphas = (1.5, 1.75, 2.0, 2.25, 2.5)
    peak_rows = evaluate_dephasing("2T-quoctit", alphas, delta, 16)
    fq = [r["F"] for r in peak_rows]
    i = int(np.argmax(fq))
    psk = {c: [r["F"] for r in evaluate_dephasing(c, alphas, delta, 40)] for c in ("[3,3]-PSK", "[8,8]-PSK")}
    checks = {
        "N trend": all(nondecreasing(v) for v in trend.values()),
        "interior peak": 0 < i < len(alphas) - 1 and 1.8 - 1e-9 <= alphas[i] <= 2.0 + 1e-9,
        "PSK nondecreasing": all(nondecreasing(v) for v in psk.values()),
    }
    failed = [k for k, v in checks.items() if not v]
    acceptance(8, not failed,
               "N=8,10,12 F: " + ", ".join(f"alpha {a}: {fmt_list(v, '.4f')}" for a, v in trend.items())
               + f"; N=16 peak at alpha {alphas[i]} F={fmt_list(fq, '.4f')}; "
               + ", ".join(f"{c} {fmt_list(v, '.4f')}" for c, v in psk.items())
               + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert not failed, failed


# -------------------------------------------------------------------- 9

def test_criterion_09_combined_model(acceptance):
    cfg = load_config(ROOT / "scripts" / "combined_quoctit.ini")
    surf = combined_from_config(cfg)
    f = surf.F
    mono = bool(np.all(np.diff(f, axis=0) <= 1e-9) and np.all(np.diff(f, axis=1) <= 1e-9))
    a = surf.alpha_opt
    spread = float((a.max() - a.min()) / (a.max() + a.min()))
    bound = cycle_time_bound(surf, cfg.T1, cfg.Tphi, cfg.target)
    T = bound["T"]
    checks = {"monotone": mono, "alpha spread": spread <= 0.15,
              "cycle time": np.isfinite(T) and 30e-6 <= T <= 120e-6}
    failed = [k for k, v in checks.items() if not v]
    acceptance(9, not failed, f"monotone {mono}; alpha_opt in [{a.min():g}, {a.max():g}] spread {spread:.1%}; "
                              f"F={cfg.target} crossing at T={T * 1e6:.1f} us (gamma {bound['gamma']:.3g}, "
                              f"delta {bound['delta']:.3g}) against 60 us"
                              + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert not failed, failed


# ------------------------------------------------------------------- 10

DETERMINISM_CONFIG = """\
[experiment]
code = 2T-qutrit
seed = 11
steps = constellation, gram, encode, sweep-alpha, sweep-gamma, sweep-delta, fit, combined, table

[grids]
alpha = 1.5, 2.0
gamma = 0.01, 0.03, 0.1
delta = 0.01, 0.05

[truncation]
n = 8
"""


def test_criterion_10_determinism(acceptance, tmp_path):
    cfg = tmp_path / "det.ini"
    cfg.write_text(DETERMINISM_CONFIG)
    runs = []
    for name in ("first", "second"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "bosonic2t", "run", "--config", str(cfg), "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        # a random code needs the seed to reproduce
        proc = subprocess.run([sys.executable, "-m", "bosonic2t", "sweep-gamma", "--code", "random:3", "--seed", "5",
                               "--alpha", "1.5", "--gamma", "0.01,0.1", "--out", str(out / "random")],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        runs.append({p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*.csv"))})
    clear_cache()
    same = runs[0] == runs[1]
    ok = same and len(runs[0]) >= 10
    acceptance(10, ok, f"{len(runs[0])} CSV files byte-identical across two runs: {same}")
    assert ok
