"""Free boundaries and total pool value as the discount rate goes to zero."""
import numpy as np

from bankcontract import PoolParams, build_all


def main():
    print(f"{'r':>10s} {'gamma_2':>10s} {'gamma_3':>10s} {'gamma_3+v_3':>12s} {'gap to first best':>18s}")
    for r in [0.2, 0.1, 0.05, 0.01, 1e-3, 1e-4, 1e-6, 0.0]:
        vf = build_all(PoolParams.reference(r=r))
        g = vf.gammas[-1]
        total = g + vf.eval(3, g)
        print(f"{r:10.1e} {vf.gammas[1]:10.6f} {g:10.6f} {total:12.6f} "
              f"{vf.derived.first_best - total:18.3e}")
    b = build_all(PoolParams.reference(r=0.0)).derived.b
    print("cumulative drops b_1 + ... + b_j:", np.cumsum(b))


if __name__ == "__main__":
    main()
