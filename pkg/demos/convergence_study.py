"""Quick three-level refinement ladder on the pure-diffusion benchmark.

The error is the transport distance D_delta between the computed solution and
the exact cosine-series solution, maximized over five sample times, with
delta frozen at the finest level's h + sqrt(k).  With k coupled to h^2, the
theory predicts a combined rate of at least O(h + sqrt(k)) = O(h); smooth
data and exact references usually show more.

This scaled-down version (8 -> 32 cells per side) finishes in ~20 s.  The
acceptance suite runs the full 4-level ladders (16 -> 128 per side) for both
rate benchmarks; see tests/test_acceptance.py.
"""
from fvkr.harness import emit_report, get_case, run_ladder

res = run_ladder(get_case("diffusion-series"), levels=3, base_n=8)

print(f"case {res.case_name} ({res.delta_policy} delta, k = {res.coupling}"
      " * h^2)")
print("  level    n        h          k        D_delta       ratio   secs")
prev = None
for row in res.rows:
    n = round(1.0 / row.h * 2 ** 0.5)        # h = sqrt(2)/n on the square
    ratio = "" if prev is None else f"{prev / row.error:7.2f}"
    print(f"   {row.level}    {n:4d}   {row.h:.5f}   {row.k:.6f}   "
          f"{row.error:.6e} {ratio:>8s}  {row.runtime_s:5.1f}")
    prev = row.error

print(f"\nfitted slope in h: {res.rate_h:.3f}   (R^2 = {res.r2:.5f})")
print("per-level stability and variation monitors ride along:")
for row, stab, bv in zip(res.rows, res.stability, res.bv):
    rep = stab[2.0]
    print(f"   level {row.level}: L2 max {rep.lq_max:.6f} <= "
          f"{rep.lq_bound:.6f}, scaled time-BV {bv.s_time_scaled:.4f}")

files = emit_report(res, "demo_output")
print(f"\nwrote {' and '.join(files)}")
