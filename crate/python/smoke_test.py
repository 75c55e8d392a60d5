#!/usr/bin/env python3
"""Smoke test for the aoi_cache_py extension module.

Build and stage the module first:

    cargo build --release -p aoi-cache-py
    cp target/release/libaoi_cache_py.so python/aoi_cache_py.so

then run `python3 python/smoke_test.py` (or set PYTHONPATH to a directory
containing aoi_cache_py.so).
"""

import math
import sys

try:
    import aoi_cache_py as ac
except ImportError as exc:  # pragma: no cover
    sys.exit(f"aoi_cache_py is not importable ({exc}); see the build note above")


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    # Model construction and stationary distribution.
    chain = ac.two_mode_chain(0.9)
    assert chain.num_modes == 2
    approx(chain.stationary()[0], 0.5, 1e-10)

    file = ac.FileModel(chain, [0.2, 1.8])
    assert ac.age_upper_bound(file, 10.0) == 51

    # Per-file solve agrees with the value-iteration oracle.
    sol = ac.solve_per_file(file, 5.0)
    gain = ac.rvi_gain(file, 5.0, ac.age_upper_bound(file, 5.0))
    approx(sol.lagrangian_cost(), gain, 1e-6)
    policy = ac.extract_policy(sol)
    assert policy.thresholds() is not None
    a, d = ac.analytic_performance(policy, file)
    approx(a, sol.aoi_cost, 1e-7)
    approx(d, sol.download_fraction, 1e-7)

    # Known mixing scenario: 10 identical single-mode files, budget 3.
    unit = ac.FileModel(ac.PopularityChain([[1.0]]), [1.0])
    ensemble = ac.homogeneous_ensemble(10, 3, unit)
    result, relaxed = ac.solve_relaxed(ensemble)
    approx(result.mixing_coefficient, 0.6, 1e-8)
    approx(relaxed.analytic_aoi, 22.0, 1e-6)
    approx(relaxed.analytic_download_rate, 3.0, 1e-6)

    # The budget-capped policy never exceeds the bandwidth and stays above
    # the relaxed bound; the relaxed run tracks its analytics.
    report = ac.simulate(ensemble, "truncated", 200_000, 5_000, 7, relaxed=relaxed)
    assert report.max_downloads_in_any_slot <= 3
    assert report.avg_weighted_aoi >= relaxed.analytic_aoi - 0.5

    report = ac.simulate(
        ensemble, "relaxed", 200_000, 5_000, 7, relaxed=relaxed,
        record_candidate_sizes=True,
    )
    mean, var = report.candidate_stats
    approx(mean, 3.0, 0.1)
    assert var <= 1.05 * 10
    approx(report.avg_weighted_aoi, 22.0, 0.5)

    # Paper-style ensemble plus baselines.
    zipf = ac.zipf_ensemble(16, 1.5, 0.9, 4)
    _, zr = ac.solve_relaxed(zipf)
    sqrt_report = ac.simulate(zipf, "sqrt", 100_000, 2_000, 11)
    greedy_report = ac.simulate(zipf, "greedy", 100_000, 2_000, 11)
    assert sqrt_report.max_downloads_in_any_slot <= 4
    assert greedy_report.max_downloads_in_any_slot <= 4
    assert sqrt_report.avg_weighted_aoi > zr.analytic_aoi
    assert greedy_report.avg_weighted_aoi > zr.analytic_aoi

    # Oracle helpers are exposed too.
    taus, cost = ac.enumerate_thresholds(unit, 10.0, 11)
    assert taus == [4] and math.isclose(cost, 5.0, abs_tol=1e-9)

    print("aoi_cache_py smoke test: OK")


if __name__ == "__main__":
    main()
