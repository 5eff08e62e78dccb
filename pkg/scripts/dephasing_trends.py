"""Dephasing trends of the 2T quoctit: truncation N and alpha at fixed delta.

    python3 scripts/dephasing_trends.py [out_dir]
"""
import sys
from pathlib import Path

from bosonic2t.harness.output import write_csv
from bosonic2t.harness.sweeps import evaluate_dephasing

DELTA = 3e-2
HEADER = ["code", "alpha", "delta", "N", "F", "captured_norm", "iterations", "status"]


def main(out: Path) -> None:
    rows = []
    for alpha in (1.5, 2.0):
        for n in (8, 10, 12):
            rows += evaluate_dephasing("2T-quoctit", (alpha,), DELTA, n)
    write_csv(out / "truncation_trend.csv", HEADER, rows)
    alphas = (1.5, 1.75, 2.0, 2.25, 2.5)
    rows = evaluate_dephasing("2T-quoctit", alphas, DELTA, 16)
    for code in ("[3,3]-PSK", "[8,8]-PSK"):
        rows += evaluate_dephasing(code, alphas, DELTA, 40)
    write_csv(out / "alpha_scan.csv", HEADER, rows)
    for r in rows:
        print(f"{r['code']:>12} alpha={r['alpha']:<5} N={r['N']:<3} F={r['F']:.6f}")


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/dephasing_trends")
    out.mkdir(parents=True, exist_ok=True)
    main(out)
