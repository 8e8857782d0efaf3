"""Regular vines: structure, pair-copula construction, density and sampling.

An edge ``(a, b | D)`` carries the copula of ``(U_{a|D}, U_{b|D})`` with ``a``
in the first copula argument. Evaluating the vine walks the trees in order and
caches every conditional distribution value ``u_{x|S}`` under the key
``(x, frozenset(S))``; each edge reads two cached values and writes its two
h-function outputs.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import paircop
from ._utils import PIT_EPS, clip_unit, weighted_tau_matrix, weighted_kendall_tau
from .marginals import MarginalModel


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    cond: frozenset = frozenset()

    @property
    def tree(self):
        return len(self.cond) + 1

    @property
    def complete(self):
        return self.cond | {self.a, self.b}

    def label(self):
        head = f"{self.a},{self.b}"
        if self.cond:
            return head + ";" + ",".join(str(c) for c in sorted(self.cond))
        return head


class RVineStructure:
    """Sequence of trees ``T_1 .. T_{d-1}`` given as lists of :class:`Edge`."""

    def __init__(self, d, trees):
        self.d = int(d)
        self.trees = [list(t) for t in trees]
        self.validate()

    @property
    def edges(self):
        return [e for t in self.trees for e in t]

    def validate(self):
        d = self.d
        if len(self.trees) != max(d - 1, 0):
            raise ValueError(f"expected {max(d - 1, 0)} trees, got {len(self.trees)}")
        prev_nodes = [frozenset([i]) for i in range(d)]
        for j, tree in enumerate(self.trees, start=1):
            if len(tree) != d - j:
                raise ValueError(f"tree {j} must have {d - j} edges")
            index = {s: k for k, s in enumerate(prev_nodes)}
            parent = list(range(len(prev_nodes)))

            def find(i):
                while parent[i] != i:
                    parent[i] = parent[parent[i]]
                    i = parent[i]
                return i

            for e in tree:
                if len(e.cond) != j - 1 or e.a == e.b or e.a in e.cond or e.b in e.cond:
                    raise ValueError(f"malformed edge {e.label()} in tree {j}")
                # proximity: both endpoints must be nodes (edges) of the previous tree
                n1, n2 = e.cond | {e.a}, e.cond | {e.b}
                if n1 not in index or n2 not in index:
                    raise ValueError(f"edge {e.label()} violates the proximity condition")
                r1, r2 = find(index[n1]), find(index[n2])
                if r1 == r2:
                    raise ValueError(f"tree {j} contains a cycle")
                parent[r1] = r2
            prev_nodes = [e.complete for e in tree]

    def order(self):
        """Peeling order used by the R-vine matrix (first entry = first peeled)."""
        trees = [list(t) for t in self.trees]
        remaining = set(range(self.d))
        order = []
        while len(remaining) > 1:
            top = trees[len(remaining) - 2]
            chosen = None
            for x in (top[0].a, top[0].b):
                ok = all(sum(x in (e.a, e.b) for e in t) == 1 for t in trees[:len(remaining) - 1])
                ok = ok and not any(x in e.cond for t in trees for e in t)
                if ok:
                    chosen = x
                    break
            if chosen is None:
                raise ValueError("structure admits no R-vine matrix ordering")
            order.append(chosen)
            remaining.discard(chosen)
            trees = [[e for e in t if chosen not in (e.a, e.b)] for t in trees]
        order.extend(remaining)
        return order

    def partners(self, x, earlier):
        """Edges that attach variable ``x`` to the already-sampled set ``earlier``.

        Returned in tree order; edge ``j`` has ``x`` conditioned and all other
        members in ``earlier``.
        """
        out = []
        for t in self.trees:
            for e in t:
                if x in (e.a, e.b) and (e.complete - {x}) <= earlier:
                    out.append(e)
        out.sort(key=lambda e: e.tree)
        return out

    def to_matrix(self):
        """Lower-triangular R-vine matrix with 1-based labels (0 = empty)."""
        d = self.d
        order = self.order()
        m = np.zeros((d, d), dtype=int)
        for i, x in enumerate(order):
            m[i, i] = x + 1
            later = set(order[i + 1:])
            for e in self.partners(x, later):
                y = e.b if e.a == x else e.a
                m[d - e.tree, i] = y + 1
        return m

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=int)
        d = m.shape[0]
        trees = [[] for _ in range(d - 1)]
        for i in range(d - 1):
            for k in range(i + 1, d):
                cond = frozenset(int(c) - 1 for c in m[k + 1:, i])
                e = Edge(int(m[i, i]) - 1, int(m[k, i]) - 1, cond)
                trees[e.tree - 1].append(e)
        return cls(d, trees)

    def relabel(self, perm):
        """Structure on relabelled variables: variable ``i`` becomes ``perm[i]``."""
        trees = [[Edge(perm[e.a], perm[e.b], frozenset(perm[c] for c in e.cond)) for e in t]
                 for t in self.trees]
        return RVineStructure(self.d, trees)


def _edge_inputs(cache, e):
    return cache[(e.a, e.cond)], cache[(e.b, e.cond)]


@dataclass
class VineCopula:
    structure: RVineStructure
    copulas: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = self.structure.edges
        missing = [e for e in edges if e not in self.copulas]
        for e in missing:
            self.copulas[e] = paircop.INDEPENDENCE
        extra = set(self.copulas) - set(edges)
        if extra:
            raise ValueError("copulas given for edges outside the structure")

    @property
    def d(self):
        return self.structure.d

    @property
    def n_params(self):
        return sum(c.n_params for c in self.copulas.values())

    def with_copulas(self, updates):
        new = dict(self.copulas)
        new.update(updates)
        return VineCopula(self.structure, new)

    def _walk(self, u, n_trees=None, density=True):
        u = clip_unit(np.atleast_2d(np.asarray(u, dtype=float)))
        if u.shape[1] != self.d:
            raise ValueError(f"expected {self.d} columns, got {u.shape[1]}")
        cache = {(i, frozenset()): u[:, i] for i in range(self.d)}
        ll = np.zeros(u.shape[0])
        trees = self.structure.trees if n_trees is None else self.structure.trees[:n_trees]
        for tree in trees:
            for e in tree:
                x, y = _edge_inputs(cache, e)
                c = self.copulas[e]
                if c.family == "independence":
                    h2, h1 = x, y
                else:
                    if density:
                        ll += c.logpdf(x, y)
                    h2 = clip_unit(c.hfunc2(x, y))
                    h1 = clip_unit(c.hfunc1(x, y))
                cache[(e.a, e.cond | {e.b})] = h2
                cache[(e.b, e.cond | {e.a})] = h1
        return ll, cache

    def logpdf(self, u):
        return self._walk(u)[0]

    def edge_inputs(self, u, tree):
        """Pseudo-observations entering each edge of ``tree`` (1-based)."""
        _, cache = self._walk(u, n_trees=tree - 1, density=False)
        return {e: _edge_inputs(cache, e) for e in self.structure.trees[tree - 1]}

    def loglik(self, u, w=None):
        ll = self.logpdf(u)
        if w is None:
            return float(np.sum(ll))
        keep = w > 0
        return float(np.dot(w[keep], ll[keep]))

    def rosenblatt(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        _, cache = self._walk(u, density=False)
        order = self.structure.order()[::-1]
        out = np.empty_like(u)
        seen = frozenset()
        for x in order:
            out[:, x] = cache[(x, seen)]
            seen = seen | {x}
        return out

    def inverse_rosenblatt(self, w):
        w = clip_unit(np.atleast_2d(np.asarray(w, dtype=float)))
        n, d = w.shape
        if d != self.d:
            raise ValueError(f"expected {self.d} columns, got {d}")
        order = self.structure.order()[::-1]
        cache = {}
        out = np.empty_like(w)
        earlier = set()
        for x in order:
            chain = self.structure.partners(x, earlier)
            # chain[j] links x to y_j given D_j, with D_{j+1} = D_j + {y_j}
            p = w[:, x]
            for e in reversed(chain):
                c = self.copulas[e]
                if e.a == x:
                    p = c.hinv2(p, cache[(e.b, e.cond)])
                else:
                    p = c.hinv1(p, cache[(e.a, e.cond)])
                p = clip_unit(p)
            cache[(x, frozenset())] = p
            out[:, x] = p
            for e in chain:
                c = self.copulas[e]
                ua, ub = cache[(e.a, e.cond)], cache[(e.b, e.cond)]
                cache[(e.a, e.cond | {e.b})] = clip_unit(c.hfunc2(ua, ub))
                cache[(e.b, e.cond | {e.a})] = clip_unit(c.hfunc1(ua, ub))
            earlier.add(x)
        return out

    def simulate(self, n, seed=None):
        rng = np.random.default_rng(seed)
        return self.inverse_rosenblatt(rng.uniform(size=(n, self.d)))

    def to_dict(self):
        return {
            "structure": self.structure.to_matrix().tolist() if self.d > 1 else [[1]],
            "edges": [{"conditioned": [e.a, e.b], "conditioning": sorted(e.cond),
                       "tree": e.tree, "paircopula": self.copulas[e].to_dict()}
                      for e in self.structure.edges],
        }

    @classmethod
    def from_dict(cls, doc, d=None):
        edges = doc.get("edges", [])
        if d is None:
            d = len(doc["structure"])
        trees = [[] for _ in range(max(d - 1, 0))]
        copulas = {}
        for item in edges:
            a, b = item["conditioned"]
            e = Edge(int(a), int(b), frozenset(int(c) for c in item["conditioning"]))
            trees[e.tree - 1].append(e)
            copulas[e] = paircop.PairCopula.from_dict(item["paircopula"])
        return cls(RVineStructure(d, trees), copulas)


def independence_vine(d):
    """C-vine rooted at 0, 1, ... with every pair copula set to independence."""
    trees = []
    for j in range(d - 1):
        cond = frozenset(range(j))
        trees.append([Edge(j, k, cond) for k in range(j + 1, d)])
    return VineCopula(RVineStructure(d, trees))


# -- structure selection -----------------------------------------------------------

def _max_spanning_tree(weights, allowed):
    """Prim's algorithm on a dense weight matrix; returns a list of index pairs."""
    m = weights.shape[0]
    in_tree = np.zeros(m, dtype=bool)
    in_tree[0] = True
    best = np.where(allowed[0], weights[0], -np.inf)
    link = np.zeros(m, dtype=int)
    pairs = []
    for _ in range(m - 1):
        cand = np.where(in_tree, -np.inf, best)
        j = int(np.argmax(cand))
        if not np.isfinite(cand[j]):
            raise ValueError("admissible graph is disconnected")
        pairs.append((int(link[j]), j))
        in_tree[j] = True
        upd = allowed[j] & (weights[j] > best) & ~in_tree
        best = np.where(upd, weights[j], best)
        link = np.where(upd, j, link)
    return pairs


def select_structure(us, w=None, kind="rvine", candidates=None, indep_test=True):
    """Select an R-vine or C-vine and its pair-copula families.

    Trees are built sequentially. An R-vine takes each tree as the maximum
    spanning tree of absolute weighted Kendall's tau among the pairs allowed by
    the proximity condition. A C-vine uses a star per tree, centred on the node
    with the largest sum of absolute taus. Every edge family comes from
    :func:`paircop.select_family` on the h-transformed pseudo-observations of
    the tree below.

    Parameters
    ----------
    us : ndarray of shape (n, d)
        Pseudo-observations in (0, 1).
    w : ndarray of shape (n,), optional
        Observation weights; zero-weight rows are ignored.
    kind : {"rvine", "cvine"}
    candidates : sequence of str, optional
        Pair-copula family ids; defaults to all families.
    """
    if kind not in ("rvine", "cvine"):
        raise ValueError("kind must be 'rvine' or 'cvine'")
    us = np.asarray(us, dtype=float)
    if us.ndim != 2:
        raise ValueError("us must be a 2-d array")
    if w is not None:
        w = np.asarray(w, dtype=float)
        keep = w > 0
        us, w = us[keep], w[keep]
        if np.all(w == w[0]):
            w = None
    n, d = us.shape
    if n < 2:
        raise ValueError("need at least two observations")
    if np.any(np.ptp(us, axis=0) == 0):
        raise ValueError("constant column in pseudo-observations")
    if n < 10 * d:
        warnings.warn(f"only {n} observations for a {d}-dimensional vine", stacklevel=2)
    us = clip_unit(us)
    if d == 1:
        return VineCopula(RVineStructure(1, []))

    cache = {(i, frozenset()): us[:, i] for i in range(d)}
    nodes = [frozenset([i]) for i in range(d)]
    trees = []
    copulas = {}
    for j in range(1, d):
        m = len(nodes)
        allowed = np.zeros((m, m), dtype=bool)
        taus = np.zeros((m, m))
        pair_edge = {}
        for p in range(m):
            for q in range(p + 1, m):
                shared = nodes[p] & nodes[q]
                if len(shared) != j - 1:
                    continue
                (a,) = nodes[p] - shared
                (b,) = nodes[q] - shared
                e = Edge(a, b, shared)
                x, y = _edge_inputs(cache, e)
                t = weighted_kendall_tau(x, y, w)
                allowed[p, q] = allowed[q, p] = True
                taus[p, q] = taus[q, p] = abs(t)
                pair_edge[(p, q)] = pair_edge[(q, p)] = e
        if kind == "cvine":
            root = int(np.argmax(np.where(allowed, taus, 0).sum(axis=1)))
            pairs = [(root, q) for q in range(m) if q != root]
        else:
            pairs = _max_spanning_tree(taus, allowed)
        tree = []
        for p, q in pairs:
            e = pair_edge[(p, q)]
            x, y = _edge_inputs(cache, e)
            c = paircop.select_family(x, y, w, candidates=candidates, indep_test=indep_test)
            copulas[e] = c
            tree.append(e)
            cache[(e.a, e.cond | {e.b})] = clip_unit(c.hfunc2(x, y))
            cache[(e.b, e.cond | {e.a})] = clip_unit(c.hfunc1(x, y))
        trees.append(tree)
        nodes = [e.complete for e in tree]
    return VineCopula(RVineStructure(d, trees), copulas)


def refit_parameters(vc, us, w=None, guarded=True):
    """Re-estimate pair-copula parameters with families and structure fixed.

    Edges are refitted tree by tree on pseudo-observations produced by the
    current parameters, each warm-started at its present value. With
    ``guarded=True`` a tree's update is kept only when the total weighted
    copula log-likelihood does not decrease, which makes this step monotone.
    """
    us = np.asarray(us, dtype=float)
    if w is not None:
        w = np.asarray(w, dtype=float)
    current = vc
    base = current.loglik(us, w)
    for j in range(1, vc.d):
        inputs = current.edge_inputs(us, j)
        updates = {}
        for e, (x, y) in inputs.items():
            c = current.copulas[e]
            if c.n_params == 0:
                continue
            try:
                fit = paircop.fit_weighted(c.family, x, y, w, rotation=c.rotation, init=c)
            except paircop.CopulaFitError as err:
                fit = err.model or c
            if paircop.weighted_loglik(fit, x, y, w) > paircop.weighted_loglik(c, x, y, w):
                updates[e] = fit
        if not updates:
            continue
        cand = current.with_copulas(updates)
        if not guarded:
            current = cand
            continue
        ll = cand.loglik(us, w)
        if ll >= base:
            current, base = cand, ll
    return current


def tau_matrix(us, w=None):
    return weighted_tau_matrix(np.asarray(us, dtype=float), w)


# -- vine distributions ------------------------------------------------------------

@dataclass
class VineDistribution:
    """Joint distribution from a vine copula and one marginal model per column."""

    copula: VineCopula
    margins: list

    def __post_init__(self):
        if len(self.margins) != self.copula.d:
            raise ValueError("number of margins must equal the copula dimension")

    @property
    def d(self):
        return self.copula.d

    @property
    def n_params(self):
        return sum(m.n_params for m in self.margins) + self.copula.n_params

    def pit(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.column_stack([m.cdf(x[:, p]) for p, m in enumerate(self.margins)])
        return clip_unit(u, PIT_EPS)

    def margin_logpdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.column_stack([m.logpdf(x[:, p]) for p, m in enumerate(self.margins)])

    def logpdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        marg = self.margin_logpdf(x).sum(axis=1)
        return marg + self.copula.logpdf(self.pit(x))

    def simulate(self, n, seed=None):
        u = clip_unit(self.copula.simulate(n, seed), PIT_EPS)
        return np.column_stack([m.ppf(u[:, p]) for p, m in enumerate(self.margins)])

    def rosenblatt(self, x):
        return self.copula.rosenblatt(self.pit(x))

    def to_dict(self):
        doc = self.copula.to_dict()
        doc["margins"] = [m.to_dict() for m in self.margins]
        return doc

    @classmethod
    def from_dict(cls, doc):
        margins = [MarginalModel.from_dict(m) for m in doc["margins"]]
        return cls(VineCopula.from_dict(doc, d=len(margins)), margins)


def log_density_copula(vc, u):
    return vc.logpdf(u)


def log_density_joint(vd, x):
    return vd.logpdf(x)


def simulate(vd, n, seed=None):
    return vd.simulate(n, seed)


def rosenblatt(vd, x):
    return vd.rosenblatt(x)
