"""Sweep the always-survivor effect over the coupling degree rho.

The stochastic-monotonicity model indexes departures from deterministic
monotonicity by rho in [0, 1]: at rho=1 no unit is harmed by treatment, at
rho=0 potential survival statuses are independent. Since rho is not
identified from data, the honest output is a curve, not a number. This
demo fits the survival stages once, sweeps rho under both outcome-stage
variants, writes the two curves as CSV, and prints them side by side.

Run: python3 demos/sensitivity_sweep.py [out_prefix]
"""

import sys

from sacekit import SimulationSetting, fit_survival_sm, gen_dataset, sensitivity_sweep

N = 2000
GRID = [round(0.05 * k, 10) for k in range(21)]


def main(out_prefix="sensitivity"):
    data, _ = gen_dataset(SimulationSetting(n=N, delta1=1, delta2=1, seed=314))
    survival = fit_survival_sm(data)

    curve_er = sensitivity_sweep(data, GRID, assume_er=True, survival=survival)
    curve_ni = sensitivity_sweep(data, GRID, assume_er=False, survival=survival)

    for curve, tag in [(curve_er, "er"), (curve_ni, "ni")]:
        path = f"{out_prefix}_{tag}.csv"
        curve.to_csv(path)
        print(f"wrote {path}")
    print()

    print(f"{'rho':>5} {'harmed share':>13} {'effect (excl.)':>15} {'effect (no-int.)':>17}")
    for a, b in zip(curve_er.rows, curve_ni.rows):
        print(f"{a.rho:>5.2f} {a.harmed_mass:>13.4f} {a.effect:>15.4f} {b.effect:>17.4f}")
    print()

    effects = [r.effect for r in curve_er.rows]
    print(
        "exclusion-variant effect ranges over "
        f"[{min(effects):+.3f}, {max(effects):+.3f}] as rho walks the grid;"
    )
    print(
        "the harmed-stratum share falls to "
        f"{curve_er.rows[-1].harmed_mass:.4f} at rho=1, the no-harm limit."
    )
    print(
        "a conclusion that only holds on a sliver of this curve is a fragile"
        " conclusion; that is the point of reporting the whole sweep."
    )


if __name__ == "__main__":
    main(*sys.argv[1:2])
