import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.special import gammainc

from gpcde import kernels
from gpcde.construction import make_staircase
from gpcde.graph_sim import assign_capabilities, build_graph, sample_erasures

needs_compiled = pytest.mark.skipif("compiled" not in kernels.available_backends(),
                                    reason="extension not built")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return kernels.get_backend(request.param)


def test_tail_accuracy(backend):
    x = np.concatenate([np.linspace(0, 80, 801), [1e-8, 1e-4, 200.0]])
    for t in (1, 2, 5, 17, 40):
        ref = gammainc(t, x)
        got = backend.mixture_tail(x, [t], [1.0])
        assert np.allclose(got, ref, rtol=1e-11, atol=1e-300)


@needs_compiled
def test_mixture_tail_backends_agree():
    x = np.linspace(0, 60, 3001)
    a = kernels.get_backend("compiled").mixture_tail(x, [2, 5, 9], [0.2, 0.3, 0.5], 1)
    b = kernels.get_backend("python").mixture_tail(x, [2, 5, 9], [0.2, 0.3, 0.5], 1)
    assert np.max(np.abs(a - b)) < 1e-15


@needs_compiled
@pytest.mark.parametrize("c,stop", [(5.0, True), (8.5, True), (7.0, False)])
def test_de_loop_backends_agree(c, stop):
    B = make_staircase(25).eta * 0.5
    args = (B, np.ones(25), np.array([3, 4]), np.array([0.5, 0.5]), c, 500, 1e-9, 1e-13, stop, 3)
    a = kernels.get_backend("compiled").de_loop(*args)
    b = kernels.get_backend("python").de_loop(*args)
    assert a["verdict"] == b["verdict"] and a["n_iter"] == b["n_iter"] and a["iters"] == b["iters"]
    assert np.allclose(a["failure_fraction"], b["failure_fraction"], atol=1e-14)
    assert np.allclose(np.array(a["x"]), np.array(b["x"]), atol=1e-14)


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
def test_peel_flood_backends_agree(seed):
    g = assign_capabilities(build_graph(make_staircase(6), 60), 3)
    st = sample_erasures(g, 4.5, np.random.default_rng(seed))
    a = kernels.get_backend("compiled").peel_flood(g.cn_capability, st.ea, st.eb, g.n_cn, 12)
    b = kernels.get_backend("python").peel_flood(g.cn_capability, st.ea, st.eb, g.n_cn, 12)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(np.asarray(a[1], bool), np.asarray(b[1], bool)) and a[2] == b[2]


def test_use_backend_roundtrip():
    before = kernels.backend_name()
    kernels.use_backend("python")
    assert kernels.backend_name() == "python"
    kernels.use_backend(before)
    assert kernels.backend_name() == before
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_env_forces_fallback():
    env = {**os.environ, "GPCDE_BACKEND": "python"}
    out = subprocess.run([sys.executable, "-c", "from gpcde import kernels; print(kernels.backend_name())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
