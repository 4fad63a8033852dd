"""Smoke tests for the _aimcsim extension module.

Run directly: python3 test_smoke.py [module_dir]
"""

import sys

if len(sys.argv) > 1:
    sys.path.insert(0, sys.argv[1])

import numpy as np

import _aimcsim as aimc


def test_ideal_mac_matches_numpy():
    phys = aimc.PhysicsSpec()
    phys.ideal_mode = True
    core = aimc.AnalogCore.make(1, aimc.VariationSpec(), phys)

    rng = np.random.default_rng(0)
    w = rng.integers(-63, 64, size=(64, 32))
    x = rng.integers(0, 32, size=64)
    got = aimc.run_mac(core, w, x, mode="signed")
    want = np.clip(np.round(0.002 * (w.T @ x)), -128, 127).astype(int)
    assert np.array_equal(got, want), (got[:8], want[:8])


def test_calibration_tightens_response_cv():
    core = aimc.AnalogCore.make(42)
    pre = aimc.stimulus_response_cv(core, reads=30, seed=2)
    aimc.calibrate(core, seed=3)
    post = aimc.stimulus_response_cv(core, reads=100, seed=4)
    assert pre > 0.20, pre
    assert post <= 0.07, post

    aimc.decalibrate(core, 1.0)
    flat = aimc.stimulus_response_cv(core, reads=100, seed=5)
    assert flat > 0.15, flat


def test_quantize_and_partition():
    w, scale = aimc.quantize_weights(np.array([[-1.0, 0.5, 1.0]], dtype=np.float32))
    assert abs(scale - 1.0 / 63) < 1e-12
    assert list(w[0]) == [-63, 32, 63]

    plan = aimc.partition_summary(784, 64)
    assert plan["row_tiles"] == 7 and plan["runs"] == 2


def test_model_cost_figures():
    dense = aimc.model_cost("dense")
    conv = aimc.model_cost("conv")
    assert dense["runs"] == 2 and dense["runtime_ms"] == 10.0 and dense["energy_mj"] == 3.0
    assert conv["runs"] == 8 and conv["runtime_ms"] == 40.0 and conv["energy_mj"] == 12.0


def test_characterize_shape():
    core = aimc.AnalogCore.make(7)
    aimc.calibrate(core, seed=7)
    rep = aimc.characterize(core, repeats=10, seed=8)
    assert rep["mean"].shape == (4, 512)
    # zero input level reads near baseline
    assert np.all(np.abs(rep["mean"][0]) <= 3.0)


def test_contract_violations_surface_as_python_errors():
    core = aimc.AnalogCore.make(1)
    try:
        aimc.run_mac(core, np.full((4, 4), 99), np.zeros(4, dtype=int))
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range weight must raise")


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"ok: {t.__name__}")
    print(f"{len(tests)} python smoke tests passed")
