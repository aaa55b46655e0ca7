from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qformation import kernels
from qformation.formation import PerceptionModel, Streams, run_formation
from qformation.geometry import FormationState, PolarVec
from qformation.gossip import EdgeStream, GossipGraph, derive_rng, run_z
from qformation.quantizer import QuantizerConfig, angle_at, radius_at

compiled = pytest.mark.skipif(not kernels.compiled_available(), reason="extension not built")


def test_backend_selection():
    assert kernels.BACKEND in ("compiled", "python")
    assert kernels.get_backend("python").__name__.endswith("_pykernels")
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_env_var_forces_python():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "from qformation import kernels; print(kernels.BACKEND)"],
        env={"QFORMATION_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True,
        check=True)
    assert out.stdout.strip() == "python"


@compiled
@given(st.lists(st.integers(-50, 50), min_size=2, max_size=8), st.floats(0.51, 0.74),
       st.integers(0, 2 ** 31), st.booleans())
def test_z_backends_identical(z0, omega, seed, stop):
    g = GossipGraph.chain(len(z0))
    runs = [run_z(z0, g, omega, EdgeStream(g, derive_rng(seed)), 5000, stop_at_equilibrium=stop,
                  backend=kernels.get_backend(name)) for name in ("python", "compiled")]
    assert runs[0].t_con == runs[1].t_con
    assert np.array_equal(runs[0].trace, runs[1].trace)
    assert np.array_equal(runs[0].picks, runs[1].picks)


@compiled
@pytest.mark.parametrize("kind", ["exact", "bounded", "lognormal"])
@pytest.mark.parametrize("mean", ["signed", "literal"])
def test_y_backends_identical(kind, mean):
    cfg = QuantizerConfig(2.0, 8, angle_mean=mean)
    model = {"exact": PerceptionModel.exact(), "bounded": PerceptionModel.bounded(cfg),
             "lognormal": PerceptionModel("lognormal", {"sigma": 0.3, "sigma2": 0.1, "r0": 4.0,
                                                       "sigma_theta": 0.2})}[kind]
    rng = np.random.default_rng(1)
    for seed in range(5):
        n = 5
        targets = FormationState(PolarVec(radius_at(cfg, 2), angle_at(cfg, int(k)))
                                 for k in rng.integers(0, 8, n))
        y0 = FormationState(PolarVec(radius_at(cfg, int(kr)), angle_at(cfg, int(kt)))
                            for kr, kt in zip(rng.integers(0, 4, n), rng.integers(0, 8, n)))
        g = GossipGraph.chain(n)
        runs = [run_formation(y0, targets, cfg, g, model, Streams.from_seed(g, seed), 3000,
                              stop_at_target=False, backend=kernels.get_backend(name))
                for name in ("python", "compiled")]
        assert np.array_equal(runs[0].r, runs[1].r)
        assert np.array_equal(runs[0].theta, runs[1].theta)
        assert runs[0].t_con == runs[1].t_con
