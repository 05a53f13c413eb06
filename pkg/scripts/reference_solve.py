"""Solve the three-loan reference pool and print boundaries, values and checks."""
import argparse

import numpy as np

from bankcontract import PoolParams, build_all, check_assumptions, check_shape, hjb_residual


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--r", type=float, default=0.05)
    args = ap.parse_args()

    p = PoolParams.reference(r=args.r)
    print(check_assumptions(p).format())
    vf = build_all(p)
    print(f"\nregime {vf.regime}")
    for lv in vf.levels:
        worst = 0.0
        if lv.gamma > lv.b:
            u = np.linspace(lv.b, lv.gamma, 1001)[1:]
            worst = float(np.max(np.abs(hjb_residual(vf, lv.j, u))))
        print(f"j={lv.j} gamma={lv.gamma:.12f} vbar={lv.vbar:.12f} "
              f"v(gamma)={lv.v_gamma:.12f} max|residual|={worst:.2e}")
    rep = check_shape(vf)
    print("shape:", {j: {k: f"{v:.1e}" for k, v in props.items()} for j, props in rep.levels.items()})


if __name__ == "__main__":
    main()
