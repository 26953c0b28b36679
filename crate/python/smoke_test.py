"""Smoke test for the pyquasishadow extension module.

Build the module and put it on the path, e.g.

    cargo build -p quasishadow-py --features extension-module --release
    cp target/release/libpyquasishadow.so python/pyquasishadow.so
    python3 python/smoke_test.py
"""

import json
import math
import sys

import pyquasishadow as qs


def main():
    f = qs.CatCircle(alpha=0.0)
    assert f.forward([0.5, 0.5, 0.0]) == [0.5, 0.0, 0.0]
    stable, center, unstable = f.splitting([0.1, 0.2, 0.3])
    assert center == [0.0, 0.0, 1.0]
    assert abs(unstable[0] / unstable[1] - (math.sqrt(5) + 1) / 2) < 1e-12

    orbit = qs.noisy_orbit(f, [0.1, 0.2, 0.3], 100, 1e-4, seed=1)
    assert len(orbit) == 201
    res = qs.shadow(f, orbit, first_index=-100)
    assert res["max_distance"] <= 5e-4, res["max_distance"]
    assert res["max_center_component"] <= 1e-10
    assert res["diagnostics"]["observed_contraction"] <= 0.5

    t3 = qs.shadow(f, orbit, first_index=-100, variant="tau3")
    t2 = qs.shadow(f, orbit, first_index=-100, variant="tau2")
    assert max(abs(a - b) for p, q in zip(t2["y"], t3["y"]) for a, b in zip(p, q)) < 1e-10

    n, gap = qs.near_return(f, [0.1, 0.2, 0.3], 5000, 1e-3)
    leaf = qs.close(f, [0.1, 0.2, 0.3])
    assert leaf["period"] == n and leaf["leaf_residual"] <= 1e-9

    g = qs.CatCircle(alpha=1e-3)
    h = qs.semiconjugacy(f, g, grid=3, half_width=30)
    assert h["max_displacement"] < 0.04 and h["residual"]["max"] <= 1e-9

    report = qs.run_experiment(json.dumps({"experiment": {"kind": "shadow"}}))
    assert report["passed"]

    try:
        qs.CatCircle(alpha=1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("alpha outside [0, 1) accepted")

    print("pyquasishadow", qs.__version__, "ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
