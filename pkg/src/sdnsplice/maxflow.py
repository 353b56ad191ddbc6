"""Dinic max-flow on small sparse graphs with floating-point capacities."""

from collections import deque

import numpy as np

EPS = 1e-12


class FlowGraph:
    def __init__(self, n):
        self.n = n
        self.adj = [[] for _ in range(n)]
        self.to = []
        self.cap = []

    def add_edge(self, u, v, cap, rev_cap=0.0):
        if cap < 0 or rev_cap < 0:
            raise ValueError("negative capacity")
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(cap))
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(float(rev_cap))

    def _levels(self, s, t, eps):
        level = [-1] * self.n
        level[s] = 0
        queue = deque([s])
        to, cap = self.to, self.cap
        while queue:
            u = queue.popleft()
            for e in self.adj[u]:
                v = to[e]
                if level[v] < 0 and cap[e] > eps:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level

    def max_flow(self, s, t, eps=EPS):
        to, cap, adj = self.to, self.cap, self.adj
        total = 0.0
        while True:
            level = self._levels(s, t, eps)
            if level[t] < 0:
                return total
            ptr = [0] * self.n
            path = []
            u = s
            while True:
                if u == t:
                    f = min(cap[e] for e in path)
                    for e in path:
                        cap[e] -= f
                        cap[e ^ 1] += f
                    total += f
                    # retreat to the tail of the first saturated edge
                    cut = next(i for i, e in enumerate(path) if cap[e] <= eps)
                    del path[cut:]
                    u = to[path[-1]] if path else s
                    continue
                edges = adj[u]
                while ptr[u] < len(edges):
                    e = edges[ptr[u]]
                    v = to[e]
                    if cap[e] > eps and level[v] == level[u] + 1:
                        break
                    ptr[u] += 1
                if ptr[u] < len(edges):
                    path.append(edges[ptr[u]])
                    u = to[edges[ptr[u]]]
                    continue
                if u == s:
                    break
                level[u] = -1
                e = path.pop()
                u = to[e ^ 1]
                ptr[u] += 1

    def sink_side(self, t, eps=EPS):
        """Boolean mask of nodes that can still reach ``t`` in the residual graph."""
        reach = np.zeros(self.n, dtype=bool)
        reach[t] = True
        queue = deque([t])
        to, cap = self.to, self.cap
        while queue:
            v = queue.popleft()
            for e in self.adj[v]:
                u = to[e]
                if not reach[u] and cap[e ^ 1] > eps:
                    reach[u] = True
                    queue.append(u)
        return reach
