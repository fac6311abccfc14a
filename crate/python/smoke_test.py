#!/usr/bin/env python3
"""Smoke test for the aflab Python extension.

Build the module first:

    cargo build -p aflab-py --release --features extension-module

The script locates the built cdylib, exposes it as an importable module,
and exercises the main types and operations on the small symmetric bundle.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_aflab():
    try:
        import aflab  # noqa: F401  (already importable, e.g. installed)

        return aflab
    except ImportError:
        pass
    candidates = [
        REPO / "target" / "release" / "libaflab.so",
        REPO / "target" / "debug" / "libaflab.so",
        REPO / "target" / "release" / "libaflab.dylib",
        REPO / "target" / "debug" / "libaflab.dylib",
    ]
    built = next((c for c in candidates if c.exists()), None)
    if built is None:
        sys.exit(
            "libaflab not found; run "
            "`cargo build -p aflab-py --release --features extension-module` first"
        )
    stage = Path(tempfile.mkdtemp(prefix="aflab-py-"))
    suffix = ".so" if built.suffix == ".so" else ".so"
    shutil.copy2(built, stage / f"aflab{suffix}")
    sys.path.insert(0, str(stage))
    import aflab

    return aflab


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main():
    aflab = import_aflab()

    bundle = aflab.Bundle(2, 1, [1, 1], [2, 2], [[1, 1]])
    assert bundle.validate() == [], bundle.validate()

    consts = bundle.coupling_constants()
    assert consts["c"] == [1.0, 1.0]
    assert close(consts["rho"], 1.0)

    xi = bundle.find_xi()
    assert close(xi[0], 4.0 / 3.0, 1e-12) and close(xi[1], 4.0 / 3.0, 1e-12)
    assert bundle.find_v([0]) == [2.0, 0.0]

    assert close(bundle.lambda_bar([1.0, 1.0]), 7.0, 1e-12)
    assert close(bundle.lambda_bar_rate([1.0, 1.0]), -0.4, 1e-12)
    assert bundle.region_flags([1.0, 1.0]) == "++"

    spectrum = bundle.xi_spectrum()
    eigs = sorted(spectrum["report"]["eigenvalues"])
    assert close(eigs[0], -16.0 / 3.0, 1e-9) and close(eigs[1], 16.0 / 9.0, 1e-9)
    assert all(z > 0 for z in spectrum["negative_eigenvector"])

    sec = aflab.secular_eigen([2.0, 1.0], [1.0, 1.0])
    ref = aflab.reference_eigenvalues([2.0, 1.0], [1.0, 1.0])
    expect = [3.0 + math.sqrt(3.0), 3.0 - math.sqrt(3.0)]
    for got, oracle, want in zip(sec["eigenvalues"], ref, expect):
        assert close(got, want, 1e-10) and close(oracle, want, 1e-8)

    run = bundle.flow_tau(0.1, [1.0, 1.0], 100.0)
    assert run["termination"] == "ReachedSpan"
    assert run["monitors"]["lambda_nonincreasing"]
    last = run["samples"][-1]
    for b in last["b"]:
        assert 2.0 * last["tau"] + 1.0 - 1e-3 <= b <= 4.0 * last["tau"] + 1.0 + 1e-3

    xcheck = bundle.crosscheck_clocks(0.1, [1.0, 1.0], 50.0)
    assert xcheck["max_rel_dev"] < 1e-7, xcheck

    shot = bundle.trace_unstable()
    assert close(shot["a_rate"]["target"], 32.0 / 9.0, 1e-12)
    assert shot["a_rate"]["rel_err"] < 0.01
    assert shot["einstein_residual_rescaled"] < 1e-6

    tor = aflab.Bundle(3, 2, [1, 1, 1], [2, 2, 2], [[1, 1, 0], [0, 1, 1]])
    assert tor.admissible_initial([[0.001, 0.0], [0.0, 0.001]], [1.0, 1.0, 1.0])
    trun = tor.torus_flow([[0.001, 0.0], [0.0, 0.001]], [1.0, 1.0, 1.0], 50.0)
    assert trun["admissible_start"]
    assert trun["monitors"]["det_nondecreasing"]
    assert trun["monitors"]["hvh_dual_ok"]

    m3 = aflab.Bundle(3, 1, [1, 1, 1], [2, 2, 2], [[1, 1, 1]])
    tag = m3.classify_backward_limit([1.1, 0.9, 1.0])
    assert tag.startswith("v{"), tag

    ein = bundle.einstein_residual([[4.0 / 3.0]], [1.0, 1.0])
    assert ein < 1e-10, ein
    assert close(bundle.scalar_curvature([[1.0]], [1.0, 1.0]), 7.0, 1e-12)

    print("smoke test passed")


if __name__ == "__main__":
    main()
