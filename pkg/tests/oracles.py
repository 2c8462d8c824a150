"""Independent reference implementations used only by the tests."""

import itertools
from collections import Counter, deque

import numpy as np


def is_tree(m, edges):
    if len(edges) != m - 1:
        return False
    parent = list(range(m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def degree_hist(m, edges):
    deg = Counter()
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    return [deg[v] for v in range(m)]


def scan_bfs_properties(tree, lay):
    """O1, O2, telescoping and the BFS property by direct scan of the permutation."""
    order = lay.order
    m = len(order)
    pos = {v: i for i, v in enumerate(order)}
    if sorted(order) != list(range(m)):
        return False
    # parent of v_i (i > 0) must be the earliest-labelled neighbour
    kids = {i: [] for i in range(m)}
    for i in range(1, m):
        nb = [pos[w] for w in tree.adj[order[i]]]
        par = min(nb)
        if par >= i:
            return False
        kids[par].append(i)
    blocks = []
    for i in range(m):
        ks = sorted(kids[i])
        if ks:
            # O1: consecutive labels above i
            if ks != list(range(ks[0], ks[0] + len(ks))) or ks[0] <= i:
                return False
            blocks.append((i, ks))
    # O2: blocks ordered like their parents
    for (i1, k1), (i2, k2) in zip(blocks, blocks[1:]):
        if not (i1 < i2 and max(k1) < min(k2)):
            return False
    if set(lay.J) != {0} | {i for i, ks in blocks}:
        return False
    if sum(lay.d[i] for i in lay.J) != m - 1:
        return False
    if m > 1 and lay.ch[0] != 1:
        return False
    for j in lay.J:
        nxt = lay.suc[j]
        if nxt is not None and lay.ch[nxt] != lay.ch[j] + lay.d[j]:
            return False
        if lay.d[j] and list(range(lay.ch[j], lay.ch[j] + lay.d[j])) != sorted(kids[j]):
            return False
    return True


def components(m, edges, vertices):
    vs = set(vertices)
    adj = {v: [] for v in vs}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = set()
    count = 0
    for v in vs:
        if v in seen:
            continue
        count += 1
        q = deque([v])
        seen.add(v)
        while q:
            x = q.popleft()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    q.append(y)
    return count


def check_partition(tree, S, L, shared, k):
    es = set(tree.edges())
    se, le = set(S.edges), set(L.edges)
    if se & le or se | le != es:
        return False
    if set(S.vertices) & set(L.vertices) != {shared}:
        return False
    for part in (S, L):
        if len(part.edges) != len(part.vertices) - 1:
            return False
        if components(tree.m, part.edges, part.vertices) != 1:
            return False
        if any(a not in part.vertices or b not in part.vertices for a, b in part.edges):
            return False
    if k >= 1:
        return k + 1 <= len(S.vertices) <= 2 * k
    return len(S.vertices) == 1


def check_bare_paths(tree, paths, k):
    deg = tree.degrees()
    seen = set()
    for P in paths:
        if len(P) != k + 1:
            return False
        for a, b in zip(P, P[1:]):
            if b not in tree.adj[a]:
                return False
        if any(deg[x] != 2 for x in P[1:-1]):
            return False
        if seen & set(P) or len(set(P)) != len(P):
            return False
        seen |= set(P)
    return True


def brute_force_matching(demands, right, edges):
    """Exhaustive search over assignments; returns True iff feasible."""
    nb = {y: [z for z in right if (y, z) in edges] for y in demands}
    ys = list(demands)

    def rec(i, used):
        if i == len(ys):
            return True
        y = ys[i]
        for combo in itertools.combinations([z for z in nb[y] if z not in used], demands[y]):
            if rec(i + 1, used | set(combo)):
                return True
        return False

    return rec(0, frozenset())


def expansion_bitmask_oracle(n, adj_masks, W, d):
    """Full enumeration over subset bitmasks: E1 over all X, E2 over all disjoint pairs."""
    wmask = sum(1 << w for w in W)
    bound = len(W) / (2 * d)
    pop = [bin(x).count("1") for x in range(1 << n)]
    nbr = [0] * (1 << n)
    for x in range(1, 1 << n):
        low = x & -x
        nbr[x] = nbr[x ^ low] | adj_masks[low.bit_length() - 1]
    for x in range(1, 1 << n):
        if pop[x] < bound:
            if pop[(nbr[x] & ~x) & wmask] < d * pop[x]:
                return False
    lo = max(1, int(np.ceil(bound)))
    full = (1 << n) - 1
    for x in range(1, 1 << n):
        if pop[x] < lo:
            continue
        rest = full & ~x
        y = rest
        while y:
            if pop[y] >= lo and not (nbr[x] & y):
                return False
            y = (y - 1) & rest
    return True
