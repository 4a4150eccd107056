"""Hot loops: backward induction, forward propagation, agent simulation.

Each kernel has a numpy implementation (``*_np``) and a numba one
(``*_nb``); the public name is bound to one of them according to
``lpmfg._accel.USE_NUMBA``.  Both paths perform the same floating-point
operations in the same order, and the simulator draws its uniforms from a
counter-based hash, so the two backends produce identical results.

Transition tensors ``pu, pd, ps`` have shape ``(K, n, na)`` and hold the
probability of moving up one node, down one node and staying put.
Boundary rows are zero.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------- RNG

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
N_STREAMS = np.uint64(4)


def _splitmix_np(z):
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def uniforms_np(seed, agents, step, stream):
    """Uniforms in [0, 1) keyed by (seed, agent, step, stream)."""
    agents = np.asarray(agents, dtype=np.uint64)
    h = _splitmix_np(np.uint64(seed))
    h = _splitmix_np(h ^ agents)
    with np.errstate(over="ignore"):
        ctr = np.uint64(step) * N_STREAMS + np.uint64(stream)
    h = _splitmix_np(h ^ ctr)
    return (h >> _S11).astype(np.float64) * _INV53


@njit(cache=True)
def _splitmix_nb(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _uniform_nb(seed, agent, step, stream):
    h = _splitmix_nb(np.uint64(seed))
    h = _splitmix_nb(h ^ np.uint64(agent))
    ctr = np.uint64(step) * np.uint64(4) + np.uint64(stream)
    h = _splitmix_nb(h ^ ctr)
    return np.float64(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------- backward induction


def dp_backward_np(ps, pu, pd, f, g, dt):
    """Optimal stopping/control values on the chain.

    Returns ``(v, best, cont)``: values ``(K+1, n)``, the smallest maximising
    action index ``(K, n)`` (-1 on the boundary) and the best continuation
    value ``(K, n)`` (``-inf`` on the boundary).
    """
    K, n, na = f.shape
    v = np.empty((K + 1, n))
    best = np.full((K, n), -1, dtype=np.int64)
    cont = np.full((K, n), -np.inf)
    v[K] = g[K]
    for k in range(K - 1, -1, -1):
        vn = v[k + 1]
        c = (f[k, 1:-1] * dt + ps[k, 1:-1] * vn[1:-1, None]
             + pu[k, 1:-1] * vn[2:, None] + pd[k, 1:-1] * vn[:-2, None])
        j = np.argmax(c, axis=1)
        cb = c[np.arange(n - 2), j]
        best[k, 1:-1] = j
        cont[k, 1:-1] = cb
        v[k] = g[k]
        v[k, 1:-1] = np.maximum(g[k, 1:-1], cb)
    return v, best, cont


@njit(cache=True)
def dp_backward_nb(ps, pu, pd, f, g, dt):
    K, n, na = f.shape
    v = np.empty((K + 1, n))
    best = np.full((K, n), -1, dtype=np.int64)
    cont = np.full((K, n), -np.inf)
    for i in range(n):
        v[K, i] = g[K, i]
    for k in range(K - 1, -1, -1):
        v[k, 0] = g[k, 0]
        v[k, n - 1] = g[k, n - 1]
        for i in range(1, n - 1):
            bj = 0
            bc = -np.inf
            for j in range(na):
                c = (f[k, i, j] * dt + ps[k, i, j] * v[k + 1, i]
                     + pu[k, i, j] * v[k + 1, i + 1] + pd[k, i, j] * v[k + 1, i - 1])
                if c > bc:
                    bc = c
                    bj = j
            best[k, i] = bj
            cont[k, i] = bc
            v[k, i] = g[k, i] if g[k, i] >= bc else bc
    return v, best, cont


# ---------------------------------------------------------------- forward propagation


def advance_np(alive, ps, pu, pd):
    """Arrivals at the next node from per-action alive mass ``(n, na)``."""
    n = alive.shape[0]
    nxt = np.zeros(n)
    nxt += (alive * ps).sum(axis=1)
    nxt[1:] += (alive[:-1] * pu[:-1]).sum(axis=1)
    nxt[:-1] += (alive[1:] * pd[1:]).sum(axis=1)
    return nxt


def push_forward_np(m0, stop, ctrl, ps, pu, pd):
    """Flow generated by a randomised feedback policy on a fixed chain.

    ``stop[k, i]`` is the probability of stopping on arrival at ``(k, i)``,
    ``ctrl[k, i, :]`` the action distribution of those who continue.
    """
    K, n, na = ctrl.shape
    m = np.zeros((K, n, na))
    mu = np.zeros((K + 1, n))
    arr = np.asarray(m0, dtype=float).copy()
    for k in range(K):
        mu[k, 1:-1] = arr[1:-1] * stop[k, 1:-1]
        mu[k, 0] = arr[0]
        mu[k, -1] = arr[-1]
        alive = arr - mu[k]
        m[k] = alive[:, None] * ctrl[k]
        arr = advance_np(m[k], ps[k], pu[k], pd[k])
    mu[K] = arr
    return m, mu


@njit(cache=True)
def push_forward_nb(m0, stop, ctrl, ps, pu, pd):
    K, n, na = ctrl.shape
    m = np.zeros((K, n, na))
    mu = np.zeros((K + 1, n))
    arr = m0.copy()
    for k in range(K):
        nxt = np.zeros(n)
        mu[k, 0] = arr[0]
        mu[k, n - 1] = arr[n - 1]
        for i in range(1, n - 1):
            mu[k, i] = arr[i] * stop[k, i]
            alive = arr[i] - mu[k, i]
            for j in range(na):
                m[k, i, j] = alive * ctrl[k, i, j]
        # same accumulation order as advance_np: stay, then from below, then from above
        for i in range(n):
            s = 0.0
            for j in range(na):
                s += m[k, i, j] * ps[k, i, j]
            nxt[i] += s
        for i in range(n - 1):
            s = 0.0
            for j in range(na):
                s += m[k, i, j] * pu[k, i, j]
            nxt[i + 1] += s
        for i in range(1, n):
            s = 0.0
            for j in range(na):
                s += m[k, i, j] * pd[k, i, j]
            nxt[i - 1] += s
        arr = nxt
    for i in range(n):
        mu[K, i] = arr[i]
    return m, mu


# ---------------------------------------------------------------- agent simulation


def _sample_initial_np(m0, seed, agents):
    cdf = np.cumsum(m0)
    last = int(np.flatnonzero(m0 > 0)[-1])
    u = uniforms_np(seed, agents, 0, 3)
    return np.minimum(np.searchsorted(cdf, u, side="right"), last)


def simulate_np(seed, n_agents, m0, stop, ctrl, ps, pu, pd, f, g, dt):
    """Simulate ``n_agents`` independent players under a feedback policy.

    Returns integer counts ``(m_counts, mu_counts)`` and per-agent payoffs.
    Stream ids: 0 stop decision, 1 action, 2 move, 3 initial state.
    """
    K, n, na = ctrl.shape
    agents = np.arange(n_agents, dtype=np.uint64)
    state = _sample_initial_np(m0, seed, agents)
    alive = np.ones(n_agents, dtype=bool)
    payoff = np.zeros(n_agents)
    m_counts = np.zeros((K, n, na), dtype=np.int64)
    mu_counts = np.zeros((K + 1, n), dtype=np.int64)
    for k in range(K):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s = state[idx]
        u_stop = uniforms_np(seed, agents[idx], k, 0)
        stopping = u_stop < stop[k, s]
        st = idx[stopping]
        np.add.at(mu_counts[k], state[st], 1)
        payoff[st] += g[k, state[st]]
        alive[st] = False
        idx = idx[~stopping]
        s = state[idx]
        u_act = uniforms_np(seed, agents[idx], k, 1)
        cums = np.cumsum(ctrl[k, s], axis=1)
        j = np.minimum((u_act[:, None] >= cums).sum(axis=1), na - 1)
        np.add.at(m_counts[k], (s, j), 1)
        payoff[idx] += f[k, s, j] * dt
        u_mv = uniforms_np(seed, agents[idx], k, 2)
        down = pd[k, s, j]
        up = down + pu[k, s, j]
        s_new = s - (u_mv < down) + ((u_mv >= down) & (u_mv < up))
        state[idx] = s_new
        hit = (s_new == 0) | (s_new == n - 1)
        ex = idx[hit]
        np.add.at(mu_counts[k + 1], state[ex], 1)
        payoff[ex] += g[k + 1, state[ex]]
        alive[ex] = False
    idx = np.flatnonzero(alive)
    np.add.at(mu_counts[K], state[idx], 1)
    payoff[idx] += g[K, state[idx]]
    return m_counts, mu_counts, payoff


@njit(cache=True)
def simulate_nb(seed, n_agents, m0, stop, ctrl, ps, pu, pd, f, g, dt):
    K, n, na = ctrl.shape
    cdf = np.cumsum(m0)
    last = 0
    for i in range(n):
        if m0[i] > 0:
            last = i
    payoff = np.zeros(n_agents)
    m_counts = np.zeros((K, n, na), dtype=np.int64)
    mu_counts = np.zeros((K + 1, n), dtype=np.int64)
    for a in range(n_agents):
        u0 = _uniform_nb(seed, a, 0, 3)
        s = 0
        while s < n and cdf[s] <= u0:
            s += 1
        if s > last:
            s = last
        gone = False
        for k in range(K):
            if _uniform_nb(seed, a, k, 0) < stop[k, s]:
                mu_counts[k, s] += 1
                payoff[a] += g[k, s]
                gone = True
                break
            u = _uniform_nb(seed, a, k, 1)
            c = 0.0
            j = 0
            while j < na - 1:
                c += ctrl[k, s, j]
                if u < c:
                    break
                j += 1
            m_counts[k, s, j] += 1
            payoff[a] += f[k, s, j] * dt
            u = _uniform_nb(seed, a, k, 2)
            down = pd[k, s, j]
            up = down + pu[k, s, j]
            if u < down:
                s -= 1
            elif u < up:
                s += 1
            if s == 0 or s == n - 1:
                mu_counts[k + 1, s] += 1
                payoff[a] += g[k + 1, s]
                gone = True
                break
        if not gone:
            mu_counts[K, s] += 1
            payoff[a] += g[K, s]
    return m_counts, mu_counts, payoff


if USE_NUMBA:
    dp_backward = dp_backward_nb
    push_forward = push_forward_nb
    simulate = simulate_nb
else:
    dp_backward = dp_backward_np
    push_forward = push_forward_np
    simulate = simulate_np

BACKEND = "numba" if USE_NUMBA else "numpy"
