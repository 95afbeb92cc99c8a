"""Exact network simplex for dense transportation problems.

Solves  min sum_ij C[i, j] f[i, j]  subject to row sums a, column sums b,
f >= 0, with sum(a) == sum(b).  Design:

- initial basis from a row-scan greedy allocation (each source ships to the
  cheapest sink with remaining demand), completed to a spanning tree with
  zero-flow arcs between components;
- block pricing (most negative reduced cost within a rotating block of
  roughly sqrt(#arcs) arcs);
- the basis tree is kept in parent/child-list form; a pivot re-roots the
  subtree cut off by the leaving arc and shifts its potentials by the
  entering arc's reduced cost, so the per-pivot cost is proportional to the
  affected subtree, not the whole node set.

Degeneracy safety: the caller watches for the iteration-limit status and, if
hit, re-solves with deterministically perturbed masses, then transfers the
final basis back to the original data via ``flows_from_basis``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["solve_transport", "flows_from_basis", "OPTIMAL", "ITERATION_LIMIT"]

OPTIMAL = 0
ITERATION_LIMIT = 1
BROKEN_TREE = 2  # internal inconsistency; never expected


@njit(cache=True)
def _greedy_start(a, b, C, barc_i, barc_j, bflow):
    """Row-scan greedy basic solution, completed to a spanning tree.

    Fills the basic-arc arrays (length m+n-1) and returns True on success.
    """
    m = a.size
    n = b.size
    ra = a.copy()
    rb = b.copy()
    active = np.arange(n)
    n_active = n
    cnt = 0
    for i in range(m):
        while ra[i] > 0.0 and n_active > 0:
            # cheapest sink with remaining demand
            best = np.inf
            bp = -1
            for p in range(n_active):
                c = C[i, active[p]]
                if c < best:
                    best = c
                    bp = p
            j = active[bp]
            amt = ra[i] if ra[i] < rb[j] else rb[j]
            barc_i[cnt] = i
            barc_j[cnt] = j
            bflow[cnt] = amt
            cnt += 1
            ra[i] -= amt
            rb[j] -= amt
            if rb[j] <= 0.0:
                active[bp] = active[n_active - 1]
                n_active -= 1
            if ra[i] <= 0.0:
                break
    # union-find to count components and link them with zero-flow arcs
    N = m + n
    uf = np.arange(N)
    for t in range(cnt):
        x = barc_i[t]
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        y = m + barc_j[t]
        while uf[y] != y:
            uf[y] = uf[uf[y]]
            y = uf[y]
        if x != y:
            uf[y] = x
    # root component = component of source 0
    r0 = 0
    while uf[r0] != r0:
        r0 = uf[r0]
    # link every other component to source 0 with a zero-flow arc; sinks
    # first (every component normally holds one), then any stray sources
    # left over from floating-point remainders
    for k in range(m, N):
        x = k
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        if x == r0:
            continue
        if cnt >= m + n - 1:
            return False
        barc_i[cnt] = 0
        barc_j[cnt] = k - m
        bflow[cnt] = 0.0
        cnt += 1
        uf[x] = r0
    for s in range(1, m):
        x = s
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        if x == r0:
            continue
        if cnt >= m + n - 1:
            return False
        barc_i[cnt] = s
        barc_j[cnt] = 0
        bflow[cnt] = 0.0
        cnt += 1
        uf[x] = r0
    return cnt == m + n - 1


@njit(cache=True)
def _build_tree(m, n, barc_i, barc_j, C, parent, parc, depth, pot,
                first_child, next_sib, prev_sib, stack, head, nxt, adj_arc):
    """BFS from node 0 over the basic arcs; fills the whole tree state."""
    N = m + n
    for v in range(N):
        head[v] = -1
        first_child[v] = -1
        next_sib[v] = -1
        prev_sib[v] = -1
    for t in range(N - 1):
        s = barc_i[t]
        k = m + barc_j[t]
        nxt[2 * t] = head[s]
        adj_arc[2 * t] = t
        head[s] = 2 * t
        nxt[2 * t + 1] = head[k]
        adj_arc[2 * t + 1] = t
        head[k] = 2 * t + 1
    for v in range(N):
        parent[v] = -2
    parent[0] = -1
    parc[0] = -1
    depth[0] = 0
    pot[0] = 0.0
    stack[0] = 0
    count = 1
    ptr = 0
    while ptr < count:
        v = stack[ptr]
        ptr += 1
        e = head[v]
        while e != -1:
            t = adj_arc[e]
            s = barc_i[t]
            k = m + barc_j[t]
            w = k if v == s else s
            if parent[w] == -2:
                parent[w] = v
                parc[w] = t
                depth[w] = depth[v] + 1
                pot[w] = C[barc_i[t], barc_j[t]] - pot[v]
                # push-front into v's child list
                c = first_child[v]
                next_sib[w] = c
                if c != -1:
                    prev_sib[c] = w
                first_child[v] = w
                prev_sib[w] = -1
                stack[count] = w
                count += 1
            e = nxt[e]
    return count == N


@njit(cache=True)
def _solve(a, b, C, block, max_iter, price_tol):
    m = a.size
    n = b.size
    N = m + n
    nb = N - 1

    barc_i = np.empty(nb, np.int64)
    barc_j = np.empty(nb, np.int64)
    bflow = np.empty(nb, np.float64)
    if not _greedy_start(a, b, C, barc_i, barc_j, bflow):
        return BROKEN_TREE, 0.0, barc_i, barc_j, bflow, np.zeros(N), 0

    parent = np.empty(N, np.int64)
    parc = np.empty(N, np.int64)
    depth = np.empty(N, np.int64)
    pot = np.empty(N, np.float64)
    first_child = np.empty(N, np.int64)
    next_sib = np.empty(N, np.int64)
    prev_sib = np.empty(N, np.int64)
    stack = np.empty(N, np.int64)
    head = np.empty(N, np.int64)
    nxt = np.empty(2 * nb, np.int64)
    adj_arc = np.empty(2 * nb, np.int64)
    path_arc = np.empty(2 * N, np.int64)
    path_sign = np.empty(2 * N, np.int64)
    path_y = np.empty(2 * N, np.bool_)
    rnodes = np.empty(N, np.int64)
    rarcs = np.empty(N, np.int64)

    if not _build_tree(m, n, barc_i, barc_j, C, parent, parc, depth, pot,
                       first_child, next_sib, prev_sib, stack, head, nxt,
                       adj_arc):
        return BROKEN_TREE, 0.0, barc_i, barc_j, bflow, pot, 0

    n_arcs = m * n
    e0 = 0
    iters = 0
    while True:
        # --- pricing: most negative reduced cost in the first block that
        # contains one, scanning blocks cyclically from where we stopped ---
        best = -price_tol
        bi = -1
        bj = -1
        scanned = 0
        e = e0
        while scanned < n_arcs:
            stop = block if n_arcs - scanned > block else n_arcs - scanned
            for _ in range(stop):
                ii = e // n
                jj = e - ii * n
                rc = C[ii, jj] - pot[ii] - pot[m + jj]
                if rc < best:
                    best = rc
                    bi = ii
                    bj = jj
                e += 1
                if e == n_arcs:
                    e = 0
            scanned += stop
            if bi >= 0:
                break
        e0 = e
        if bi < 0:
            break  # optimal
        iters += 1
        if iters > max_iter:
            value = 0.0
            for t in range(nb):
                value += bflow[t] * C[barc_i[t], barc_j[t]]
            return ITERATION_LIMIT, value, barc_i, barc_j, bflow, pot, iters
        rc_e = best

        # --- cycle walk to the join node.  The entering arc carries +t from
        # source bi to sink m+bj; a tree arc traversed source->sink in cycle
        # direction gains t, the reverse loses t.  Walking up from bi we move
        # against the cycle direction, walking up from m+bj we move with it.
        x = bi
        y = m + bj
        np_cnt = 0
        while depth[x] > depth[y]:
            path_arc[np_cnt] = parc[x]
            path_sign[np_cnt] = -1 if x < m else 1
            path_y[np_cnt] = False
            np_cnt += 1
            x = parent[x]
        while depth[y] > depth[x]:
            path_arc[np_cnt] = parc[y]
            path_sign[np_cnt] = 1 if y < m else -1
            path_y[np_cnt] = True
            np_cnt += 1
            y = parent[y]
        while x != y:
            path_arc[np_cnt] = parc[x]
            path_sign[np_cnt] = -1 if x < m else 1
            path_y[np_cnt] = False
            np_cnt += 1
            x = parent[x]
            path_arc[np_cnt] = parc[y]
            path_sign[np_cnt] = 1 if y < m else -1
            path_y[np_cnt] = True
            np_cnt += 1
            y = parent[y]

        tmin = np.inf
        leave_p = -1
        for p in range(np_cnt):
            if path_sign[p] < 0 and bflow[path_arc[p]] < tmin:
                tmin = bflow[path_arc[p]]
                leave_p = p
        if leave_p < 0:
            value = 0.0
            for t in range(nb):
                value += bflow[t] * C[barc_i[t], barc_j[t]]
            return BROKEN_TREE, value, barc_i, barc_j, bflow, pot, iters
        leave = path_arc[leave_p]

        if tmin > 0.0:
            for p in range(np_cnt):
                t = path_arc[p]
                if path_sign[p] < 0:
                    bflow[t] -= tmin
                else:
                    bflow[t] += tmin
        bflow[leave] = 0.0

        # child side of the leaving arc
        zi = barc_i[leave]
        zk = m + barc_j[leave]
        z = zi if parc[zi] == leave else zk
        # the endpoint of the entering arc inside subtree(z): if the leaving
        # arc sat on the walk-up path from bi, that endpoint is bi
        u_in = bi if not path_y[leave_p] else m + bj

        # slot reuse: the leaving slot now holds the entering arc
        barc_i[leave] = bi
        barc_j[leave] = bj
        bflow[leave] = tmin
        u_out = (m + bj) if u_in == bi else bi

        # --- re-root subtree(z) at u_in: reverse the path u_in -> z ---
        cnt_r = 0
        v = u_in
        while v != z:
            rnodes[cnt_r] = v
            rarcs[cnt_r] = parc[v]
            cnt_r += 1
            v = parent[v]
        rnodes[cnt_r] = z
        cnt_r += 1
        # detach every path node from its old parent's child list
        for p in range(cnt_r):
            v = rnodes[p]
            pv = parent[v]
            pr = prev_sib[v]
            nx = next_sib[v]
            if pr == -1:
                first_child[pv] = nx
            else:
                next_sib[pr] = nx
            if nx != -1:
                prev_sib[nx] = pr
        # relink: u_in hangs under u_out via the entering slot, and the path
        # reverses (each former parent becomes the child of its former child)
        parent[u_in] = u_out
        parc[u_in] = leave
        c = first_child[u_out]
        next_sib[u_in] = c
        if c != -1:
            prev_sib[c] = u_in
        first_child[u_out] = u_in
        prev_sib[u_in] = -1
        for p in range(1, cnt_r):
            w = rnodes[p]
            pw = rnodes[p - 1]
            parent[w] = pw
            parc[w] = rarcs[p - 1]
            c = first_child[pw]
            next_sib[w] = c
            if c != -1:
                prev_sib[c] = w
            first_child[pw] = w
            prev_sib[w] = -1

        # --- walk the re-hung subtree: fix depths, shift potentials ---
        # (sources and sinks shift oppositely so u_i + v_j stays invariant
        # on arcs interior to the subtree)
        ds = rc_e if u_in < m else -rc_e
        stack[0] = u_in
        sp = 1
        while sp > 0:
            sp -= 1
            v = stack[sp]
            depth[v] = depth[parent[v]] + 1
            if v < m:
                pot[v] += ds
            else:
                pot[v] -= ds
            c = first_child[v]
            while c != -1:
                stack[sp] = c
                sp += 1
                c = next_sib[c]

    value = 0.0
    for t in range(nb):
        value += bflow[t] * C[barc_i[t], barc_j[t]]
    return OPTIMAL, value, barc_i, barc_j, bflow, pot, iters


def solve_transport(a, b, C, block=None, max_iter=None, price_tol=1e-11):
    """Solve the transportation problem.

    a, b : positive mass vectors with equal sums (caller's responsibility).
    C : dense (len(a), len(b)) cost matrix.

    Returns (status, value, arc_i, arc_j, flows, u, v, iters): the arc arrays
    list the m+n-1 basic arcs, u/v are dual potentials with u_i + v_j = C_ij
    on basic arcs (and <= up to price_tol everywhere at optimality); status
    is OPTIMAL (0) or ITERATION_LIMIT (1).
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    m, n = C.shape
    if a.size != m or b.size != n:
        raise ValueError("cost matrix shape does not match the mass vectors")
    if m == 0 or n == 0:
        raise ValueError("empty support")
    if block is None:
        block = int(min(m * n, max(256, int(np.sqrt(m * n)))))
    if max_iter is None:
        max_iter = 200 * (m + n) + 20_000
    status, value, barc_i, barc_j, bflow, pot, iters = _solve(
        a, b, C, block, max_iter, price_tol)
    if status == BROKEN_TREE:
        raise RuntimeError("network simplex lost the spanning-tree invariant")
    return status, value, barc_i, barc_j, bflow, pot[:m], pot[m:], iters


def flows_from_basis(arc_i, arc_j, a, b):
    """Exact basic flows on a given spanning tree for marginals (a, b).

    Leaf-stripping: repeatedly resolve the unique arc at a degree-1 node.
    Used to transfer an optimal basis found on perturbed data back to the
    original masses.  Returns the flow per arc (may be tiny-negative at
    degenerate arcs).
    """
    m = len(a)
    n = len(b)
    N = m + n
    nb = N - 1
    supply = np.concatenate([np.asarray(a, float), np.asarray(b, float)])
    deg = np.zeros(N, dtype=int)
    arcs_at = [[] for _ in range(N)]
    for t in range(nb):
        s = int(arc_i[t])
        k = m + int(arc_j[t])
        deg[s] += 1
        deg[k] += 1
        arcs_at[s].append(t)
        arcs_at[k].append(t)
    used = np.zeros(nb, dtype=bool)
    flow = np.zeros(nb)
    stack = [v for v in range(N) if deg[v] == 1]
    while stack:
        v = stack.pop()
        t = -1
        for cand in arcs_at[v]:
            if not used[cand]:
                t = cand
                break
        if t < 0:
            continue
        s = int(arc_i[t])
        k = m + int(arc_j[t])
        # flow conservation at the leaf: its only arc carries its imbalance
        flow[t] = supply[v]
        other = k if v == s else s
        supply[other] -= supply[v]
        supply[v] = 0.0
        used[t] = True
        deg[v] -= 1
        deg[other] -= 1
        if deg[other] == 1:
            stack.append(other)
    return flow
