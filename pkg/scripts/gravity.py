"""Phase rate of a vertically split Rb-87 register and its sensitivity."""

import argparse

from mixedmetro.experiment import GRAVITY_PRESETS, gravity_omega
from mixedmetro.units import TWO_PI


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dz-um", type=float, nargs="+", default=[1.0, 2.5])
    args = ap.parse_args()
    for dz in args.dz_um:
        print(f"dz = {dz:5.2f} um: omega = 2 pi x {gravity_omega(dz) / TWO_PI:8.1f} Hz")
    for name, w in GRAVITY_PRESETS.items():
        print(f"preset {name}: 2 pi x {w / TWO_PI:.0f} Hz")


if __name__ == "__main__":
    main()
