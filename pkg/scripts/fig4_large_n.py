"""Gate-contrast curves and the large-register sensitivity experiment.

Fits the contrast against register size at 10 kHz and 100 kHz, then runs
the Poisson-loaded experiment with losses over several seeds and reports
S_Q, S_C and their ratio. Also writes the nu -> infinity fringes.
"""

import argparse
import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from mixedmetro.estimation import dataset_sensitivity
from mixedmetro.experiment import ExperimentConfig, GateContrastModel, gate_contrast_curve, run_large_n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/fig4")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--scan", type=float, default=1.5e-2, help="half-width of the scan in units of omega0")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ExperimentConfig(mode="large_n_model", mean_n_r=25,
                           scan=tuple(np.linspace(-args.scan, args.scan, 41)))
    curves = {}
    for lw in (10e3, 100e3):
        g = gate_contrast_curve(9, lw, replace(cfg, seed=1))
        curves[lw] = g
        print(f"{lw:8.0f} Hz: contrasts {np.round(g.contrasts, 3).tolist()}")
        print(f"          fit {g.amplitude:.4f} exp(-{g.decay:.4f} N), N_R = 25 -> {g.contrast(25, 0.95):.3f}")
    for label, gates in (("fitted curve", curves[10e3]), ("perfect gates", GateContrastModel())):
        ratios, sq = [], []
        for s in range(args.seeds):
            _, _, rep = dataset_sensitivity(run_large_n(replace(cfg, seed=s), gates))
            ratios.append(rep.ratio)
            sq.append(rep.S_Q)
        print(f"{label}: S_C = {rep.S_C:.4e}, S_Q = {np.mean(sq):.3e}, "
              f"S_C/S_Q = {np.mean(ratios):.3f} +- {np.std(ratios):.3f}")
    with open(out / "fig4_fringes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta_omega_over_omega0", "curve_losses", "curve_no_losses", "perfect_no_losses"])
        no_loss = replace(cfg, ninf=True, large_n=replace(cfg.large_n, losses=False))
        a = run_large_n(replace(cfg, ninf=True), curves[10e3]).column("sigma_z_mean")
        b = run_large_n(no_loss, curves[10e3]).column("sigma_z_mean")
        c = run_large_n(no_loss, GateContrastModel()).column("sigma_z_mean")
        for row in zip(cfg.scan, a, b, c):
            w.writerow(row)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
