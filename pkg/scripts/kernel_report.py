"""Run the kernel/generator invariant suite and print a summary table.

    python3 scripts/kernel_report.py [out.csv]
"""
import sys

from composite_spde import checks
from composite_spde.kernel import CompositeMedium, gaussian_bound_constants


def main():
    rows = checks.run_checks()
    width = max(len(r.check_name) for r in rows)
    for r in rows:
        flag = "ok  " if r.passed else "FAIL"
        print(f"{flag} {r.check_name:<{width}}  {r.medium_id:<28} err={r.max_abs_error:.2e} tol={r.tolerance:.0e}")
    if len(sys.argv) > 1:
        checks.write_checks_csv(rows, sys.argv[1])

    print("\nbound constants and literal-exponent counterexamples (1e4 samples):")
    for m in checks.DEFAULT_MEDIA + (CompositeMedium(4, 4),):
        b = gaussian_bound_constants(m)
        print(f"  {checks.medium_id(m):<28} lam={m.lam:+.3f} c1={b.c1:.3f} mass_bound={b.mass_bound:.3f} "
              f"violations={checks.literal_bound_violations(m)}")
    return 0 if all(r.passed for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
