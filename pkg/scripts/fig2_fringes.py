"""Analytic fringes, Fisher sensitivity and Poisson dephasing for N_R = 25.

Writes fig2_fringes.csv (fixed N_R) and fig2_poisson.csv (Poisson N_R) and
prints the register purity at which the Poisson-loaded register matches 25
pure independent qubits.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from mixedmetro import analytic
from mixedmetro.units import TWO_PI


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/fig2")
    ap.add_argument("--n-r", type=int, default=25)
    ap.add_argument("--omega-hz", type=float, default=5326.0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n, omega = args.n_r, TWO_PI * args.omega_hz
    ts = np.linspace(1e-6, 750e-6, 751)
    with open(out / "fig2_fringes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "p_r", "sigma_z", "sensitivity_full", "sensitivity_classical"])
        for p_r in (0.0, 0.95):
            for t in ts:
                s = analytic.control_sigma_z(n, 1.0, p_r, omega * t)
                f = analytic.full_fisher(n, 1.0, p_r, omega, t)
                w.writerow([t, p_r, s, analytic.sensitivity(f, 1, omega), 1 / (omega * t * np.sqrt(n))])
    with open(out / "fig2_poisson.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "p_r", "sigma_z", "fisher_control"])
        for p_r in (0.0, 0.95):
            for t in ts:
                w.writerow([t, p_r, analytic.poisson_sigma_z(n, omega * t, 1.0, p_r),
                            analytic.poisson_control_fisher(n, omega * t, t, 1.0, p_r)])
    print(f"purity crossover at mean N_R = {n}, p_C = 1: p_R = {analytic.purity_crossover(n, 1.0):.3f}")
    print(f"purity crossover at mean N_R = {n}, p_C = 0.99: p_R = {analytic.purity_crossover(n, 0.99):.3f}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
