#!/usr/bin/env python3
"""Smoke test for the fiberwalk_py extension module.

Builds are expected at target/{release,debug}/libfiberwalk_py.so (or the
platform equivalent); run `cargo build -p fiberwalk-py` first, then
`python3 python/smoke_test.py`. With maturin installed you can instead
`maturin develop -m crates/py/Cargo.toml` and import fiberwalk_py directly.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path


def locate_module() -> Path:
    root = Path(__file__).resolve().parent.parent
    names = ["libfiberwalk_py.so", "libfiberwalk_py.dylib", "fiberwalk_py.dll"]
    for profile in ("release", "debug"):
        for name in names:
            candidate = root / "target" / profile / name
            if candidate.exists():
                return candidate
    sys.exit("build the extension first: cargo build -p fiberwalk-py")


def import_module():
    path = locate_module()
    staging = Path(tempfile.mkdtemp(prefix="fiberwalk_py_"))
    suffix = ".pyd" if path.suffix == ".dll" else ".so"
    shutil.copy2(path, staging / f"fiberwalk_py{suffix}")
    sys.path.insert(0, str(staging))
    import fiberwalk_py

    return fiberwalk_py


def close(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    fw = import_module()

    # tables and margins
    t = fw.Table([2, 2, 2], [1] * 8)
    assert t.margins(0) == [4, 4]
    assert t.grand_total() == 8

    # move counts: the distinct-index family and its corner-applicable slice
    assert fw.plane_move_count_3way(2, 2, 2) == 12
    assert fw.plane_move_count_3way(3, 3, 3) == 324
    assert fw.corner_applicable_count(2, 2, 2) == 3
    assert fw.corner_applicable_count(3, 3, 3) == 24
    # the connecting basis adds the slice swaps
    assert fw.move_count([2, 2, 2]) == 18
    for move in fw.basis_moves([2, 2]):
        signs = sorted(sign for _, sign in move)
        assert signs == [-1, -1, 1, 1]

    # fibers and conditional laws
    spec = fw.MarginSpec([[2, 2, 2], [2, 2, 2]])
    assert len(fw.enumerate_fiber(spec)) == 21
    heavy = fw.MarginSpec([[2, 1], [2, 1]])
    w = fw.fiber_weights(heavy, "hypergeometric")
    close(w[0], 2 / 3, 1e-12)
    close(w[1], 1 / 3, 1e-12)
    close(fw.uniform_vs_hypergeometric_tv(heavy), 1 / 6, 1e-12)
    connected, components = fw.connectivity(spec)
    assert connected and components == 1

    # sampling
    tv = fw.chain_tv(heavy, target="hypergeometric", steps=30000, seed=7)
    assert tv < 0.05, tv
    stats = fw.run_chain(spec, target="uniform", steps=2000, seed=1)
    assert stats["kept"] == 2000
    assert len(stats["corner_trace"]) == 2000

    # solver: constant margins force the constant expected table
    sym = fw.MarginSpec([[4, 4], [4, 4], [4, 4]])
    report = fw.solve_mle(sym)
    assert report["converged"]
    assert all(abs(z - 1.0) < 1e-9 for z in report["expected"]["data"])
    close(fw.psi_prime(math.log(2.0)), 1.0, 1e-14)

    # reduced heavy-corner system: exact symmetry at B = 1
    sol = fw.barvinok_solve(123, 1.0)
    close(sol["p"], 2.0 ** (1.0 / 3.0), 1e-12)
    close(sol["q"], 2.0 ** (1.0 / 3.0), 1e-12)

    # subcritical solve vs closed-form limit at finite n
    sol = fw.barvinok_solve(400, 1.2)
    lim = fw.limit_entries_3way(1.2)
    assert abs(sol["z111"] - lim["z111_level"]) < 5e-2
    close(lim["z221"], 1.2, 1e-12)

    # supercritical corner mass
    sol = fw.barvinok_solve(400, 2.5)
    slope = fw.limit_entries_3way(2.5)["z111_slope"]
    assert abs(sol["z111"] / 400**2 / slope - 1.0) < 0.02
    close(fw.critical_ratio_3way(), 1.0 / (2 ** (2 / 3) - 1), 1e-14)
    close(fw.critical_ratio_2way(1.0), 1.0 + math.sqrt(2.0), 1e-14)

    # typical table with constant margins is all ones
    typ = fw.typical_table_2way([5] * 5, [5] * 5)
    assert all(abs(z - 1.0) < 1e-9 for z in typ["data"])
    close(typ["objective"], 25 * 2 * math.log(2.0), 1e-8)

    print("fiberwalk_py smoke test: all checks passed")


if __name__ == "__main__":
    main()
