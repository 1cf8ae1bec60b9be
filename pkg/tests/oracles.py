"""Independent reference implementations used by the property and acceptance tests.

Nothing here calls into the package's query code; graphs are described as
plain edge lists.
"""

import itertools
import math
import random

from conftest import chain_graph

INF = math.inf


def random_edge_lists(seed, max_nodes=30, max_types=3, density=(0.1, 0.4)):
    rnd = random.Random(seed)
    n = rnd.randint(2, max_nodes)
    names = [f"v{i}" for i in range(n)]
    k = rnd.randint(1, max_types)
    p = rnd.uniform(*density)
    edges = []
    for t in range(k):
        for a, b in itertools.permutations(range(n), 2):
            # density spread over the edge types
            if rnd.random() < p / k:
                edges.append((f"e{t}", names[a], names[b]))
    return names, edges


def random_graph(seed, **kw):
    names, edges = random_edge_lists(seed, **kw)
    return chain_graph(names, edges), names, edges


def floyd_warshall(names, edges, allowed=None, directed=False):
    idx = {v: i for i, v in enumerate(names)}
    n = len(names)
    d = [[INF] * n for _ in range(n)]
    for i in range(n):
        d[i][i] = 0
    for lab, a, b in edges:
        if allowed is not None and lab not in allowed:
            continue
        d[idx[a]][idx[b]] = min(d[idx[a]][idx[b]], 1)
        if not directed:
            d[idx[b]][idx[a]] = min(d[idx[b]][idx[a]], 1)
    for k in range(n):
        dk = d[k]
        for i in range(n):
            dik = d[i][k]
            if dik == INF:
                continue
            di = d[i]
            for j in range(n):
                if dik + dk[j] < di[j]:
                    di[j] = dik + dk[j]
    return {(names[i], names[j]): d[i][j] for i in range(n) for j in range(n)}


def brute_force_label_max(scores, constraint, sizes):
    """Best objective over all labelings satisfying ``constraint(labels)``; None if none do."""
    best = None
    for labels in itertools.product(*[range(k) for k in sizes]):
        if constraint(labels):
            obj = math.fsum(scores[j][l] for j, l in enumerate(labels))
            if best is None or obj > best:
                best = obj
    return best


def pearson_definition(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)
