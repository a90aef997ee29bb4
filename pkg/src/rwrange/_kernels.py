"""Compiled walk kernels.

Random numbers come from a counter-based SplitMix64 stream.  Trial ``t``
of a run with master seed ``s`` uses the key ``mix(s XOR mix((t+1)*GAMMA))``
and draws ``mix(key + i*GAMMA)`` for ``i = 1, 2, ...``.  A trial's output
therefore depends only on ``(s, t)`` and the configuration, never on how
trials are scheduled across workers.
"""

import numba as nb
import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, nogil=True)
def trial_key(seed, trial):
    return mix64(seed ^ mix64((np.uint64(trial) + np.uint64(1)) * GAMMA))


@nb.njit(cache=True, nogil=True)
def below(r, k):
    """Map a 64-bit draw to ``0..k-1``."""
    return np.int64(((r >> _S32) * np.uint64(k)) >> _S32)


@nb.njit(cache=True, nogil=True)
def uniform(r):
    return np.float64(r >> _S11) * _INV53


@nb.njit(cache=True, nogil=True)
def graph_walks(indptr, indices, cumprob, start, horizons, seed, trial0, ntrials, out_range, out_final, out_first):
    """Walks on an explicit graph.

    ``cumprob`` holds per-row cumulative transition probabilities.  For each
    horizon ``h``: ``out_range[t, j] = |{S_0..S_{h-1}}|`` and
    ``out_final[t, j] = S_h``.  ``out_first[t]`` is the first return time to
    the start, or 0 if there is none up to the last horizon.
    """
    nv = indptr.shape[0] - 1
    stamp = np.zeros(nv, dtype=np.int64)
    hmax = horizons[horizons.shape[0] - 1]
    for t in range(ntrials):
        state = trial_key(seed, trial0 + t)
        mark = t + 1
        x = start
        stamp[x] = mark
        rng = 1
        hj = 0
        first = 0
        for s in range(1, hmax + 1):
            state += GAMMA
            u = uniform(mix64(state))
            k = indptr[x]
            last = indptr[x + 1] - 1
            while k < last and cumprob[k] <= u:
                k += 1
            x = indices[k]
            if x == start and first == 0:
                first = s
            while hj < horizons.shape[0] and horizons[hj] == s:
                out_range[t, hj] = rng
                out_final[t, hj] = x
                hj += 1
            if stamp[x] != mark:
                stamp[x] = mark
                rng += 1
        out_first[t] = first
    return 0


@nb.njit(cache=True, nogil=True)
def tree_walks(
    child_types,
    nchild,
    chain_types,
    chain_idx,
    horizons,
    seed,
    trial0,
    ntrials,
    max_nodes,
    out_range,
    out_depth,
    out_dist,
    out_home,
    out_first,
):
    """Walks on a lazily grown typed tree.

    The walk starts at depth ``D = len(chain_types) - 1``; ``chain_types[d]``
    is the type of its ancestor at depth ``d`` and ``chain_idx[d]`` the child
    slot leading from depth ``d`` toward the start.  Only visited vertices are
    materialized, so node count equals the range.  Returns -1 if ``max_nodes``
    is exceeded, else 0.  ``out_first`` is as in :func:`graph_walks`.
    """
    maxc = child_types.shape[1]
    children = np.full((max_nodes, maxc), -1, dtype=np.int32)
    ntype = np.empty(max_nodes, dtype=np.int32)
    parent = np.empty(max_nodes, dtype=np.int32)
    depth = np.empty(max_nodes, dtype=np.int32)
    dstart = np.empty(max_nodes, dtype=np.int32)
    D = chain_types.shape[0] - 1
    hmax = horizons[horizons.shape[0] - 1]
    for t in range(ntrials):
        state = trial_key(seed, trial0 + t)
        ntype[0] = chain_types[D]
        parent[0] = -1
        depth[0] = D
        dstart[0] = 0
        count = 1
        cur = 0
        rng = 1
        hj = 0
        first = 0
        for s in range(1, hmax + 1):
            state += GAMMA
            r = mix64(state)
            typ = ntype[cur]
            k = nchild[typ]
            deg = k + (1 if depth[cur] > 0 else 0)
            j = below(r, deg)
            new = False
            if j < k:
                nxt = children[cur, j]
                if nxt < 0:
                    if count >= max_nodes:
                        return -1
                    nxt = count
                    count += 1
                    ntype[nxt] = child_types[typ, j]
                    parent[nxt] = cur
                    depth[nxt] = depth[cur] + 1
                    dstart[nxt] = dstart[cur] + 1
                    children[cur, j] = nxt
                    new = True
            else:
                nxt = parent[cur]
                if nxt < 0:
                    if count >= max_nodes:
                        return -1
                    nxt = count
                    count += 1
                    d = depth[cur] - 1
                    ntype[nxt] = chain_types[d]
                    parent[nxt] = -1
                    depth[nxt] = d
                    dstart[nxt] = D - d
                    children[nxt, chain_idx[d]] = cur
                    parent[cur] = nxt
                    new = True
            cur = nxt
            if cur == 0 and first == 0:
                first = s
            while hj < horizons.shape[0] and horizons[hj] == s:
                out_range[t, hj] = rng
                out_depth[t, hj] = depth[cur]
                out_dist[t, hj] = dstart[cur]
                out_home[t, hj] = cur == 0
                hj += 1
            if new:
                rng += 1
        out_first[t] = first
        children[:count, :] = -1
    return 0


@nb.njit(cache=True, nogil=True)
def graph_steps(indptr, indices, cumprob, start, nsteps, seed, trial):
    """Single trajectory on an explicit graph, returned in full (tests only)."""
    path = np.empty(nsteps + 1, dtype=np.int64)
    state = trial_key(seed, trial)
    x = start
    path[0] = x
    for s in range(1, nsteps + 1):
        state += GAMMA
        u = uniform(mix64(state))
        k = indptr[x]
        last = indptr[x + 1] - 1
        while k < last and cumprob[k] <= u:
            k += 1
        x = indices[k]
        path[s] = x
    return path
