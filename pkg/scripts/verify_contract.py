"""Monte Carlo check that the contract delivers u0 to the bank and v_I(u0) to
investors, that deviations do not pay and that alternative policies do worse."""
import argparse

from bankcontract import ContractPolicy, PoolParams, SimConfig, build_all, deviation_utility, estimate
from bankcontract.policy import CapShiftPolicy, HarshPenaltyPolicy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    p = PoolParams.reference()
    vf = build_all(p)
    pol = ContractPolicy.from_value_functions(vf)
    b, g = vf.derived.b[-1], vf.gammas[-1]
    base = dict(n_paths=args.paths, seed=args.seed, workers=args.workers)

    print("promise keeping")
    for u0 in (b, 0.5 * (b + g), g):
        res = estimate(p, vf, pol, SimConfig(u0=u0, **base))
        print(f"  u0={u0:.4f} bank {res.mean_bank:.4f}+-{res.se_bank:.4f} "
              f"investor {res.mean_investor:.4f}+-{res.se_investor:.4f} "
              f"(target {vf.eval(3, u0):.4f})")

    print("deviations (u0 = gamma_I)")
    for shirk in ((1, 1, 1), (1, 2, 3)):
        res = deviation_utility(p, vf, pol, SimConfig(shirk=shirk, **base))
        print(f"  k={shirk} bank {res.mean_bank:.4f}+-{res.se_bank:.4f} vs {g:.4f}")

    print("alternative policies (u0 = gamma_I)")
    for name, alt in (("cap x1.1", CapShiftPolicy(vf.derived, vf.gammas, 1.1)),
                      ("cap x0.9", CapShiftPolicy(vf.derived, vf.gammas, 0.9)),
                      ("harsh", HarshPenaltyPolicy(vf.derived, vf.gammas))):
        res = estimate(p, vf, alt, SimConfig(u0=g, **base))
        print(f"  {name:<9s} investor {res.mean_investor:.4f}+-{res.se_investor:.4f} "
              f"vs optimum {vf.eval(3, g):.4f}")


if __name__ == "__main__":
    main()
