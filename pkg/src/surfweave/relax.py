"""Elastic relaxation of a fabric graph: springs at rest length plus light bending."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import NonConvergence
from .loom import WARP, FabricGraph

BEND_WEIGHT = 1e-3
_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class RelaxedFabric:
    positions: np.ndarray  # (n, 3) mm
    energy: float
    iterations: int
    grad_norm: float  # max-abs gradient component at exit
    converged: bool
    graph: FabricGraph

    @property
    def n_nodes(self):
        return len(self.positions)


class SpringSystem:
    """Energy sum (|xa - xb| - L)^2 over edges, plus ``bend`` times
    |xa - 2 xb + xc|^2 over consecutive triples along rows and warps."""

    def __init__(self, n, edges, rest, triples=(), bend=BEND_WEIGHT):
        self.n = n
        self.ea = np.asarray([e[0] for e in edges], dtype=np.int64)
        self.eb = np.asarray([e[1] for e in edges], dtype=np.int64)
        self.rest = np.asarray(rest, dtype=float)
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.ta, self.tb, self.tc = t[:, 0], t[:, 1], t[:, 2]
        self.bend = float(bend)

    @classmethod
    def from_graph(cls, graph: FabricGraph, bend=BEND_WEIGHT):
        edges = [(e.a, e.b) for e in graph.edges]
        rest = [e.rest_length for e in graph.edges]
        return cls(len(graph.nodes), edges, rest, fabric_triples(graph), bend)

    def energy_grad(self, x):
        X = x.reshape(self.n, 3)
        d = X[self.ea] - X[self.eb]
        ln = np.sqrt((d * d).sum(axis=1))
        r = ln - self.rest
        E = float((r * r).sum())
        coef = 2.0 * r / np.maximum(ln, _EPS)
        # zero-rest edges stay smooth: 2 r d / |d| = 2 d exactly
        coef = np.where(self.rest == 0.0, 2.0, coef)
        f = coef[:, None] * d
        G = np.zeros_like(X)
        for k in range(3):
            G[:, k] = np.bincount(self.ea, f[:, k], self.n) - np.bincount(self.eb, f[:, k], self.n)
        if self.bend and len(self.ta):
            q = X[self.ta] - 2.0 * X[self.tb] + X[self.tc]
            E += self.bend * float((q * q).sum())
            h = 2.0 * self.bend * q
            for k in range(3):
                G[:, k] += (np.bincount(self.ta, h[:, k], self.n) + np.bincount(self.tc, h[:, k], self.n)
                            - 2.0 * np.bincount(self.tb, h[:, k], self.n))
        return E, G.ravel()

    def energy(self, x):
        return self.energy_grad(x)[0]


def fabric_triples(graph: FabricGraph):
    """Consecutive node triples along each row (in gap order) and each warp chain."""
    out = []
    for ids in graph.row_nodes().values():
        ids = sorted(ids, key=lambda n: graph.nodes[n][1])
        out += [(a, b, c) for a, b, c in zip(ids, ids[1:], ids[2:])]
    chains = {}
    for e in graph.edges:
        if e.kind == WARP:
            chains.setdefault(e.line, []).append((e.a, e.b))
    for links in chains.values():
        out += [(a, b, c) for (a, b), (b2, c) in zip(links, links[1:]) if b == b2]
    return out


def initial_positions(graph: FabricGraph, seed=0):
    p = graph.params
    rng = np.random.default_rng(seed)
    X = np.zeros((len(graph.nodes), 3))
    if len(graph.nodes):
        X[:, :2] = graph.positions_grid()
    noise = rng.uniform(-1.0, 1.0, X.shape)
    # one-signed z so the sheet buckles to a consistent side
    noise[:, 2] = np.abs(noise[:, 2])
    return X + noise * 0.01 * p.s_h


def relax(graph: FabricGraph, seed=0, method="lbfgs", tol=None, max_iter=200_000,
          bend=BEND_WEIGHT, x0=None, strict=False) -> RelaxedFabric:
    """Minimize the spring energy from a noisy planar grid start.

    ``method`` is "lbfgs" (scipy) or "gd" (gradient descent with backtracking).
    Stops once the largest gradient component is at most ``tol`` (default
    1e-8 * s_h). Hitting ``max_iter`` first warns with NonConvergence, or
    raises it when ``strict``.
    """
    tol = 1e-8 * graph.params.s_h if tol is None else tol
    system = SpringSystem.from_graph(graph, bend)
    X0 = initial_positions(graph, seed) if x0 is None else np.asarray(x0, float)
    if system.n == 0:
        return RelaxedFabric(np.zeros((0, 3)), 0.0, 0, 0.0, True, graph)
    if method == "gd":
        x, E, g, it = gradient_descent(system.energy_grad, X0.ravel(), tol, max_iter)
    elif method == "lbfgs":
        x, E, g, it = _lbfgs(system.energy_grad, X0.ravel(), tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    gmax = float(np.abs(g).max()) if g.size else 0.0
    ok = gmax <= tol
    if not ok:
        err = NonConvergence(f"stopped after {it} iterations with max gradient {gmax:.3g} > {tol:.3g}")
        if strict:
            raise err
        warnings.warn(str(err), RuntimeWarning, stacklevel=2)
    return RelaxedFabric(x.reshape(-1, 3), float(E), it, gmax, ok, graph)


def gradient_descent(fg, x, tol, max_iter, step=0.1):
    """Steepest descent with Armijo backtracking; energy never increases."""
    E, g = fg(x)
    it = 0
    while it < max_iter and np.abs(g).max() > tol:
        gg = float(g @ g)
        while True:
            xn = x - step * g
            En, gn = fg(xn)
            if En <= E - 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-20:
                return x, E, g, it
        x, E, g = xn, En, gn
        step *= 2.0
        it += 1
    return x, E, g, it


def _lbfgs(fg, x, tol, max_iter):
    # restarts guard against early exits on scipy's relative-decrease test
    it = 0
    for _ in range(20):
        res = minimize(fg, x, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter - it, "gtol": tol, "ftol": 0.0,
                                "maxcor": 20, "maxls": 50})
        it += int(res.nit)
        x = res.x
        E, g = fg(x)
        if np.abs(g).max() <= tol or it >= max_iter or res.nit == 0:
            break
    return x, E, g, it


def angle_deficit(positions, quads):
    """Sum of 2*pi minus incident quad corner angles, per vertex with four quads."""
    P = np.asarray(positions, float)
    total = {}
    count = {}
    for q in quads:
        for k in range(4):
            v, a, b = q[k], q[k - 1], q[(k + 1) % 4]
            u1, u2 = P[a] - P[v], P[b] - P[v]
            c = np.dot(u1, u2) / max(np.linalg.norm(u1) * np.linalg.norm(u2), _EPS)
            total[v] = total.get(v, 0.0) + float(np.arccos(np.clip(c, -1.0, 1.0)))
            count[v] = count.get(v, 0) + 1
    return {v: 2 * np.pi - s for v, s in total.items() if count[v] == 4}

