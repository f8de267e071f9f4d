"""Smoke test for the goldilocks_py extension.

Build first:  maturin develop -m crates/py/Cargo.toml
"""
import json
import math

import numpy as np

import goldilocks_py as g


def main():
    (a0, d0), = g.activate("lorentz-unbiased", [0.0])
    assert a0 == 0.0 and abs(d0 - (1 + 1 / math.pi)) < 1e-12

    rng = np.random.default_rng(0)
    m = rng.normal(size=(3, 5))
    p = np.array(g.pseudoinverse(m.tolist()))
    assert np.allclose(p, np.linalg.pinv(m), atol=1e-10)
    assert np.allclose(g.singular_values(m.tolist()), np.linalg.svd(m, compute_uv=False), atol=1e-10)

    mean, cov = g.propagate_moments([0.0], [[0.01]], [[1.0]], [0.0], "lorentz-unbiased")
    assert abs(cov[0][0] - 0.0173794) < 1e-7, cov

    assert g.invariant("lorentz", 1.0) == 1.0

    x, t = g.toy_dataset()
    assert len(x) == len(t) == 300

    cfg = json.dumps({"epochs": 50, "init_scale": 0.5})
    net, history = g.train_toy_experiment(cfg)
    assert len(history) == 51 and all(math.isfinite(l) for l, _ in history)
    again = g.Network.from_json(net.to_json())
    assert again.predict([0.3, -0.2]) == net.predict([0.3, -0.2])

    print("smoke test ok:", repr(net), "final error", history[-1][1])


if __name__ == "__main__":
    main()
