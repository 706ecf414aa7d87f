"""Solve the reference problem by exhaustion and print the ladder and the tail fit.

Run with ``python3 demos/exhaustion_decay.py [L] [M]``.
"""
import sys

from fracsub import ProblemSpec, make_coefficient, solve_global


def main(L=32.0, M=256):
    spec = ProblemSpec(L=L, M=M)
    u, ladder = solve_global(spec, make_coefficient(spec))
    print(f"N={spec.N} sigma={spec.sigma} alpha={spec.alpha} beta={spec.beta} L={spec.L} M={spec.M}")
    print("R      iters  residual    energy_gap  sup_u")
    for R, rep, sol in zip(ladder.radii, ladder.reports, ladder.solutions):
        print(f"{R:<6g} {rep.iterations:<6d} {rep.residual:<11.3e} {rep.relative_energy_gap:<11.3e} {sol.sup:.6f}")
    print("inner gaps:", ", ".join(f"{g:.3e}" for g in ladder.gaps))
    print(f"integral identity residual: {ladder.identity_residual:.3e}")
    fit = ladder.decay
    print(f"tail slope {fit.slope:.3f}, best admissible exponent {fit.exponent:.3f}")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(float(args[0]) if args else 32.0, int(args[1]) if len(args) > 1 else 256)
