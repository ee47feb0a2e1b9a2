#!/usr/bin/env python3
"""Smoke test of the born_mps_py extension module.

Builds nothing itself: it locates the cdylib produced by
`cargo build [--release] -p born-mps-py`, links it into a temp
directory under the importable module name, and runs a miniature
generate -> sample -> train -> evaluate pipeline.
"""

import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def locate_cdylib():
    candidates = [
        os.path.join(ROOT, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libborn_mps_py.so", "libborn_mps_py.dylib", "born_mps_py.dll")
    ]
    for path in candidates:
        if os.path.exists(path):
            return path
    sys.exit(
        "born_mps_py cdylib not found; run `cargo build --release -p born-mps-py` first"
    )


def import_module():
    src = locate_cdylib()
    tmp = tempfile.mkdtemp(prefix="born_mps_py_")
    ext = ".so" if not src.endswith(".dll") else ".pyd"
    shutil.copy2(src, os.path.join(tmp, "born_mps_py" + ext))
    sys.path.insert(0, tmp)
    import born_mps_py

    return born_mps_py


def main():
    bm = import_module()
    print(f"born_mps_py {bm.__version__}")

    # field-only chain: exact energy -N/2 and the all-up product state
    gs0 = bm.ground_state(gamma=1.0, h=1.0, sites=6, coupling=0.0)
    assert abs(gs0.energy + 3.0) < 1e-10, gs0.energy
    assert all(s == "000000" for s in gs0.sample(50, seed=1))

    # critical-point pipeline at N = 6
    gs = bm.ground_state(gamma=1.0, h=1.0, sites=6, boundary="open")
    print(f"ground state: E0 = {gs.energy:.8f}, gap = {gs.gap:.4f}")
    samples = gs.sample(4000, seed=42)
    entropy = bm.shannon_entropy(samples)

    model = bm.TensorTrain.near_identity(6, 2, "open", seed=9)
    assert model.parameter_count() == bm.parameter_count(6, 2, "open") == 2 * 4 + 4 * 8
    f_before = bm.fidelity(model, gs)
    trained, history = bm.train(
        model, samples, epochs=15, batch_size=100, learning_rate=0.02, shuffle_seed=9
    )
    f_after = bm.fidelity(trained, gs)
    nll = bm.nll(trained, samples)
    print(
        f"training: F {f_before:.4f} -> {f_after:.4f}, "
        f"NLL {history['epoch_dataset_nll'][0]:.4f} -> {nll:.4f} (S(T) = {entropy:.4f})"
    )
    assert f_after > 0.9, f_after
    assert nll >= entropy - 1e-9
    assert nll - entropy < 0.3

    # model distribution is a genuine probability distribution
    probs = trained.probabilities("z")
    assert abs(sum(probs) - 1.0) < 1e-9
    assert abs(trained.expectation([("z", 1)])) <= 1.0 + 1e-12

    # correlations of the trained model track the exact state
    g_model = trained.correlation_function(4)
    g_exact = gs.correlation_function(4)
    worst = max(abs(a[1] - b[1]) for a, b in zip(g_model, g_exact))
    print(f"correlations: max |G_model - G_exact| = {worst:.4f}")
    assert worst < 0.1

    # round-trip through the model file format
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.xytt")
        trained.save(path)
        loaded = bm.TensorTrain.load(path)
        assert abs(bm.fidelity_between(trained, loaded) - 1.0) < 1e-12

    # exponential fit on synthetic data recovers xi exactly
    pts = [(r, 0.8 * math.exp(-r / 2.0), 8) for r in range(1, 9)]
    amp, xi, residual = bm.fit_correlation_length(pts)
    assert abs(xi - 2.0) < 1e-9 and abs(amp - 0.8) < 1e-9 and residual < 1e-12

    print("smoke test OK")


if __name__ == "__main__":
    main()
