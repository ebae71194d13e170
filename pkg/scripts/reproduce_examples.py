"""Solve the worked log-correlator cases and print solver output next to the closed forms.

    python3 scripts/reproduce_examples.py [--params c s]
"""

import argparse
import math

from isocomplexity.complexity import (
    ComplexityQuery,
    diverging_closed_form,
    fixed_index_closed_form_y,
    minima_closed_form,
    rate_ik,
    solve_complexity,
)
from isocomplexity.structure_function import FieldParams, make_builtin


def row(label, solved, closed):
    print(f"{label:<34} solver {solved: .10f}   closed form {closed: .10f}   diff {abs(solved - closed):.1e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--params", nargs=2, type=float, default=(1.0, 1.0), metavar=("C", "S"))
    args = parser.parse_args()
    D = make_builtin("log-correlator", args.params)

    print("== minima, unrestricted energy ==")
    for mu, r2 in [(1.0, math.inf), (2.0, math.inf), (1.0, 0.5), (2.0, 0.3), (0.0, 1.5)]:
        fp = FieldParams(D, mu)
        res = solve_complexity(ComplexityQuery(fp, "minima", r2=r2))
        cf = minima_closed_form(fp, r2)
        row(f"mu={mu} R2={r2} value", res.value, cf["value"])
        row("  rho0", res.optimizer[0], cf["rho"])
        row("  y0", res.optimizer[2], cf["y"])

    print("== fixed index ==")
    for mu, k in [(2.0, 1), (3.0, 2)]:
        fp = FieldParams(D, mu)
        res = solve_complexity(ComplexityQuery(fp, "fixed_index", k=k))
        row(f"mu={mu} k={k} y0 ({res.branch})", res.optimizer[2], fixed_index_closed_form_y(fp, k))

    print("== diverging index ==")
    for mu, gamma in [(1.0, 0.3), (2.0, 0.5)]:
        fp = FieldParams(D, mu)
        res = solve_complexity(ComplexityQuery(fp, "diverging_index", gamma=gamma))
        cf = diverging_closed_form(fp, gamma, math.inf)
        row(f"mu={mu} gamma={gamma} value", res.value, cf["value"])
        row("  u0", res.optimizer[1], cf["u"])

    print("== I_k at mu = 2 ==")
    fp = FieldParams(D, 2.0)
    print("  " + "  ".join(f"I_{k}={rate_ik(fp, k)[0]:.6f}" for k in range(6)))


if __name__ == "__main__":
    main()
