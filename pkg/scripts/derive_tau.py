"""Regenerate the frozen RBT penalty in src/vio_integrity/constants.py.

Solves the stationarity condition for the default bound-holding target and
prints the value to paste into DEFAULT_TAU, together with the grid-search
verification of the minimizer.
"""

from vio_integrity import constants, metrics


def main() -> None:
    p_d = constants.DEFAULT_PD
    tau = metrics.solve_tau(p_d)
    check = metrics.verify_tau(p_d, tau)
    print(f"p_d            = {p_d!r}")
    print(f"ideal bound    = {metrics.ideal_bound(p_d)!r} sigma")
    print(f"tau            = {tau!r}")
    print(f"grid minimizer = {check.minimizer!r} (gap {check.gap:.3e})")
    print()
    print(f"constants.DEFAULT_TAU currently {constants.DEFAULT_TAU!r}")
    drift = abs(tau - constants.DEFAULT_TAU)
    print(f"drift vs frozen value: {drift:.3e}")


if __name__ == "__main__":
    main()
