import os
import subprocess
import sys

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from lpmfg import kernels


def random_chain(rng, K, n, na):
    raw = rng.random((3, K, n, na))
    raw /= raw.sum(axis=0)
    ps, pu, pd = raw
    for p in (ps, pu, pd):
        p[:, [0, -1]] = 0.0
    return ps, pu, pd


@given(seed=st.integers(0, 2**31), K=st.integers(1, 6), n=st.integers(3, 9), na=st.integers(1, 4))
def test_dp_backends_identical(seed, K, n, na):
    rng = np.random.default_rng(seed)
    ps, pu, pd = random_chain(rng, K, n, na)
    f, g = rng.normal(size=(K, n, na)), rng.normal(size=(K + 1, n))
    a = kernels.dp_backward_np(ps, pu, pd, f, g, 0.1)
    b = kernels.dp_backward_nb(ps, pu, pd, f, g, 0.1)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


@given(seed=st.integers(0, 2**31), K=st.integers(1, 6), n=st.integers(3, 9), na=st.integers(1, 4))
def test_push_forward_backends_identical_and_conservative(seed, K, n, na):
    rng = np.random.default_rng(seed)
    ps, pu, pd = random_chain(rng, K, n, na)
    m0 = rng.random(n)
    m0[[0, -1]] = 0
    m0 /= m0.sum()
    stop = rng.random((K, n))
    ctrl = rng.dirichlet(np.ones(na), (K, n))
    m1, mu1 = kernels.push_forward_np(m0, stop, ctrl, ps, pu, pd)
    m2, mu2 = kernels.push_forward_nb(m0, stop, ctrl, ps, pu, pd)
    assert np.array_equal(m1, m2) and np.array_equal(mu1, mu2)
    assert abs(mu1.sum() - 1.0) <= 1e-12
    assert np.all(m1.sum(axis=(1, 2)) <= 1 + 1e-12)


@given(seed=st.integers(0, 2**63), agents=st.lists(st.integers(0, 2**40), min_size=1, max_size=20),
       step=st.integers(0, 10**6), stream=st.integers(0, 3))
def test_uniform_streams_agree(seed, agents, step, stream):
    u = kernels.uniforms_np(seed, np.array(agents, dtype=np.uint64), step, stream)
    v = [kernels._uniform_nb(np.uint64(seed), np.uint64(a), step, stream) for a in agents]
    assert np.array_equal(u, np.array(v))
    assert np.all((0 <= u) & (u < 1))


def test_uniforms_look_uniform():
    u = kernels.uniforms_np(7, np.arange(200_000, dtype=np.uint64), 3, 1)
    assert abs(u.mean() - 0.5) < 0.005
    hist, _ = np.histogram(u, bins=10, range=(0, 1))
    assert hist.min() > 19_000 and hist.max() < 21_000
    w = kernels.uniforms_np(7, np.arange(200_000, dtype=np.uint64), 3, 2)
    assert abs(np.corrcoef(u, w)[0, 1]) < 0.01


@given(seed=st.integers(0, 2**31), n_agents=st.integers(1, 300))
def test_simulate_backends_identical(seed, n_agents):
    rng = np.random.default_rng(seed)
    K, n, na = 5, 7, 2
    ps, pu, pd = random_chain(rng, K, n, na)
    m0 = rng.random(n)
    m0[[0, -1]] = 0
    m0 /= m0.sum()
    stop = rng.random((K, n)) * 0.5
    ctrl = rng.dirichlet(np.ones(na), (K, n))
    f, g = rng.normal(size=(K, n, na)), rng.normal(size=(K + 1, n))
    a = kernels.simulate_np(np.uint64(seed), n_agents, m0, stop, ctrl, ps, pu, pd, f, g, 0.2)
    b = kernels.simulate_nb(np.uint64(seed), n_agents, m0, stop, ctrl, ps, pu, pd, f, g, 0.2)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    assert a[1].sum() == n_agents


def test_env_flag_selects_numpy_backend():
    code = "from lpmfg import kernels; print(kernels.BACKEND, kernels.simulate is kernels.simulate_np)"
    env = dict(os.environ, LPMFG_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]
    env["LPMFG_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numba", "False"]
