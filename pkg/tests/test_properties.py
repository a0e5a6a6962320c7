"""At-scale properties: residuals without any dense matrix, complexity slopes,
and the bench/slope tooling on the full size sweep.

The wave number for the residual properties is 1.0: at omega = 2 pi on the
unit box the periodic auxiliary problem is asymptotically resonant (its
spectral gap closes like O(h^2)), which caps the attainable accuracy of the
three-step construction at large n regardless of implementation.  Small-grid
accuracy and all timing properties are checked at omega = 2 pi elsewhere.
"""

import itertools
import math
import time
import tracemalloc

import numpy as np

from helmfft import (Grid, build_operator_A, kron_apply, plan2d, plan3d,
                     solve2d, solve3d, tune_allocator)
from helmfft.cli import RunConfig, emit, fit_slope, read_records, run
from conftest import rand_field

tune_allocator()


def _residual(grid, omega, u, f):
    op = build_operator_A(grid, omega)
    return float(np.linalg.norm(kron_apply(op, u) - f) / np.linalg.norm(f))


def test_residual_at_scale_2d():
    for n in (513, 1025):
        grid = Grid((n, n))
        f = rand_field(grid, n)
        u = solve2d(plan2d(grid, 1.0), f, workers=2)
        assert _residual(grid, 1.0, u, f) <= 1e-9


def test_residual_at_scale_3d():
    grid = Grid((129, 129, 129))
    f = rand_field(grid, 129)
    u = solve3d(plan3d(grid, 1.0), f, workers=2)
    assert _residual(grid, 1.0, u, f) <= 1e-9


def test_direction_combination_residuals_3d():
    for shape in sorted(set(itertools.permutations((9, 9, 513)))):
        grid = Grid(shape)
        f = np.ones(grid.npoints, dtype=complex)
        f[: shape[0]] = 0.01
        u = solve3d(plan3d(grid, 1.0), f)
        assert _residual(grid, 1.0, u, f) <= 1e-9


def test_complexity_slope_2d_moderate_sizes():
    times = {}
    for n in (129, 257, 513, 1025):
        grid = Grid((n, n))
        plan = plan2d(grid, 2 * np.pi)
        f = np.ones(grid.npoints, dtype=complex)
        f[:n] = 0.01
        solve2d(plan, f, workers=2)
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            solve2d(plan, f, workers=2)
            best = min(best, time.perf_counter() - t0)
        times[n * n] = best
    xs = [math.log(N) for N in times]
    ys = [math.log(t) for t in times.values()]
    slope = float(np.polyfit(xs, ys, 1)[0])
    assert 0.9 <= slope <= 1.3, f"slope {slope}"


def test_cli_bench_sweep_and_slope_subcommand(tmp_path):
    cfg = RunConfig(mode="bench", d=2, rhs="paper", repeats=3,
                    sizes="257,513,1025,2049", threads=2)
    records = run(cfg)
    assert len(records) == 4
    solve_times = [r.solve_seconds for r in records]
    assert solve_times == sorted(solve_times)          # monotone in size
    path = str(tmp_path / "bench.csv")
    emit(records, "csv", path)
    slope = fit_slope(read_records(path))
    assert 0.9 <= slope <= 1.3, f"slope {slope}"


def test_solve_mode_allocates_no_dense_matrix():
    # Allocation spot check: solve-mode peak memory stays a small multiple of
    # the field size, nowhere near the N^2 of a dense matrix.
    grid = Grid((257, 257))
    plan = plan2d(grid, 2 * np.pi)
    f = rand_field(grid, 7)
    solve2d(plan, f, workers=2)
    tracemalloc.start()
    base = tracemalloc.get_traced_memory()[0]
    solve2d(plan, f, workers=2)
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    assert (peak - base) <= 32 * 16 * grid.npoints
