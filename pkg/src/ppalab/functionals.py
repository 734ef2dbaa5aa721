"""Polynomial functionals as weighted contraction diagrams.

A functional is a finite sum of diagrams with FormalSeries coefficients. A
diagram is a set of vertices, each summed over all sites x with a density ρ(x)
(measure weights and constants absorbed) and carrying leg groups (A, c), each
contributing the factor ((Aφ)(x))^c, where A is a plain matrix or None for
the identity. Vertices are joined by edge matrices E(x_a, x_b) that multiply
the summand. Kernels are integral kernels w.r.t. the site weights, so a
contraction of a leg with map A against a leg with map B through K produces
the edge ``A K Bᵀ``.

All products (pointwise, ⋆, ·_T), the deformations α_w, Gaussian expectations
and connected correlators are realised by one matching enumerator over leg
classes; one pair costs ħ and λ^k when the kernel component has λ order k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as iproduct
from math import factorial

import numpy as np

from .series import FormalSeries, Orders

# ---------------------------------------------------------------------------
# matrix products with identity caching


_CACHE: dict = {}
_CACHE_LIMIT = 4000


def _cached(key, build, keep):
    hit = _CACHE.get(key)
    if hit is not None:
        return hit[0]
    if len(_CACHE) > _CACHE_LIMIT:
        _CACHE.clear()
    val = build()
    _CACHE[key] = (val, keep)
    return val


def clear_cache():
    _CACHE.clear()


def sandwich(A, K, B) -> np.ndarray:
    """A K Bᵀ with None meaning the identity."""

    def build():
        M = K if A is None else A @ K
        return M if B is None else M @ B.T

    return _cached(("s", id(A), id(K), id(B)), build, (A, K, B))


def compose(A, X):
    """Leg map of the pullback: φ ↦ A X φ."""
    if X is None:
        return A
    if A is None:
        return X
    return _cached(("c", id(A), id(X)), lambda: A @ X, (A, X))


def as_kernel_series(K) -> list:
    """Normalise a kernel argument to [(λ order, matrix), ...]."""
    if isinstance(K, list):
        return [(int(k), np.asarray(m)) for k, m in K]
    if hasattr(K, "matrix"):
        return [(0, K.matrix)]
    return [(0, np.asarray(K))]


def as_map_series(X) -> list:
    if isinstance(X, list):
        return [(int(k), m) for k, m in X]
    return [(0, X)]


# ---------------------------------------------------------------------------
# diagrams


@dataclass(frozen=True)
class Vertex:
    density: np.ndarray = field(repr=False)
    groups: tuple = ()  # ((map | None, count), ...)

    @property
    def degree(self) -> int:
        return sum(c for _, c in self.groups)


@dataclass(frozen=True)
class Diagram:
    vertices: tuple = ()
    edges: tuple = ()  # ((a, b, E), ...) with a < b, rows indexed by x_a

    @property
    def degree(self) -> int:
        return sum(v.degree for v in self.vertices)

    def classes(self) -> list:
        """Leg classes (vertex, group, map, count)."""
        return [(vi, gi, A, c) for vi, v in enumerate(self.vertices) for gi, (A, c) in enumerate(v.groups) if c > 0]

    def conj(self) -> "Diagram":
        vs = tuple(
            Vertex(np.conj(v.density), tuple((None if A is None else np.conj(A), c) for A, c in v.groups))
            for v in self.vertices
        )
        return Diagram(vs, tuple((a, b, np.conj(E)) for a, b, E in self.edges))


def _concat(diagrams) -> tuple:
    verts, edges, off = [], [], []
    n = 0
    for D in diagrams:
        off.append(n)
        verts.extend(D.vertices)
        edges.extend((a + n, b + n, E) for a, b, E in D.edges)
        n += len(D.vertices)
    return verts, edges, off


def _build(verts, edges, pairs) -> tuple:
    """Apply pairs [(v1, g1, A, v2, g2, B, K, n)] to (verts, edges); returns (Diagram, scalar)."""
    dens = [v.density for v in verts]
    counts = [[c for _, c in v.groups] for v in verts]
    emap: dict = {}
    for a, b, E in edges:
        emap[(a, b)] = emap[(a, b)] * E if (a, b) in emap else E
    for v1, g1, A, v2, g2, B, K, n in pairs:
        E = sandwich(A, K, B)
        if n > 1:
            E = E**n
        counts[v1][g1] -= n
        counts[v2][g2] -= n
        if v1 == v2:
            dens[v1] = dens[v1] * np.diagonal(E)
            continue
        if v1 > v2:
            v1, v2, E = v2, v1, E.T
        key = (v1, v2)
        emap[key] = emap[key] * E if key in emap else E
    new = [
        Vertex(dens[i], tuple((A, c) for (A, _), c in zip(v.groups, counts[i]) if c > 0)) for i, v in enumerate(verts)
    ]
    return _normalise(new, emap)


def _components(n: int, keys) -> list:
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in keys:
        parent[find(a)] = find(b)
    comps: dict = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)
    return list(comps.values())


def _normalise(verts, emap) -> tuple:
    """Fold leg-free connected components into a scalar factor."""
    scalar = 1.0 + 0j
    keep = []
    for comp in _components(len(verts), emap.keys()):
        if all(not verts[i].groups for i in comp):
            scalar *= _contract_component([verts[i].density[None, :] for i in comp], comp, emap)[0]
        else:
            keep.extend(comp)
    keep.sort()
    index = {old: new for new, old in enumerate(keep)}
    vs = tuple(verts[i] for i in keep)
    es = tuple((index[a], index[b], E) for (a, b), E in sorted(emap.items()) if a in index)
    return Diagram(vs, es), scalar


_LETTERS = "abcdefghijklmnoqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _contract_component(weights, comp, emap) -> np.ndarray:
    """Σ over sites of Π weights (each (P, N)) Π edges, for one connected component."""
    if len(comp) == 1:
        return weights[0].sum(axis=1)
    pos = {v: i for i, v in enumerate(comp)}
    ops, subs = [], []
    for i, w in enumerate(weights):
        ops.append(w)
        subs.append("p" + _LETTERS[i])
    for (a, b), E in emap.items():
        if a in pos and b in pos:
            ops.append(E)
            subs.append(_LETTERS[pos[a]] + _LETTERS[pos[b]])
    expr = ",".join(subs) + "->p"
    return np.einsum(expr, *ops, optimize="greedy")


def evaluate_diagram(D: Diagram, probes: np.ndarray, legcache: dict | None = None) -> np.ndarray:
    """Diagram value at each probe field (rows of ``probes``)."""
    P = probes.shape[0]
    if not D.vertices:
        return np.ones(P, dtype=complex)
    legcache = {} if legcache is None else legcache
    weights = []
    for v in D.vertices:
        w = np.broadcast_to(v.density, (P, v.density.size)).astype(complex)
        for A, c in v.groups:
            key = id(A)
            if key not in legcache:
                legcache[key] = (probes if A is None else probes @ A.T, A)
            w = w * legcache[key][0] ** c
        weights.append(w)
    emap = {(a, b): E for a, b, E in D.edges}
    out = np.ones(P, dtype=complex)
    for comp in _components(len(D.vertices), emap.keys()):
        out = out * _contract_component([weights[i] for i in comp], comp, emap)
    return out


# ---------------------------------------------------------------------------
# matching enumeration


def _enumerate(slots, caps, budget, full=False):
    """Yield (ns, multiplicity) for pair counts ns over ``slots``.

    slots: [(i, j, cost)] with class indices i <= j (i == j is a pair inside one
    class) and grade cost per pair. caps: class capacities. A pattern is kept if
    the total cost is <= budget and, with ``full``, every leg is used.
    """
    caps = list(caps)
    used = [0] * len(caps)
    ns = [0] * len(slots)
    last_use: dict = {}
    for s, (i, j, _) in enumerate(slots):
        last_use[i] = s
        last_use[j] = s

    def rec(s, spent):
        if s == len(slots):
            if full and any(u != c for u, c in zip(used, caps)):
                return
            mult = 1.0
            for c, u in zip(caps, used):
                mult *= factorial(c) // factorial(c - u)
            for (i, j, _), n in zip(slots, ns):
                if n:
                    mult /= factorial(n) * (2**n if i == j else 1)
            yield list(ns), mult
            return
        i, j, cost = slots[s]
        room = (caps[i] - used[i]) // 2 if i == j else min(caps[i] - used[i], caps[j] - used[j])
        if cost > 0:
            room = min(room, (budget - spent) // cost)
        for n in range(room + 1):
            ns[s] = n
            used[i] += n
            used[j] += n
            ok = True
            if full:
                # a class whose last slot has passed must be exhausted
                for cls in {i, j}:
                    if last_use[cls] == s and used[cls] != caps[cls]:
                        ok = False
            if ok:
                yield from rec(s + 1, spent + n * cost)
            used[i] -= n
            used[j] -= n
        ns[s] = 0

    if full:
        for c, cls in zip(caps, range(len(caps))):
            if c and cls not in last_use:
                return
    yield from rec(0, 0)


def _min_grade(c: FormalSeries, tol: float = 0.0):
    g = None
    for (a, n), v in c.items():
        if abs(v) > tol and (g is None or a + n < g):
            g = a + n
    return g


# ---------------------------------------------------------------------------
# functionals


class PolyFunctional:
    """Finite sum of (Diagram, FormalSeries) terms over a fixed site set."""

    __slots__ = ("terms", "orders", "n_sites")

    def __init__(self, terms, orders: Orders, n_sites: int):
        const, mag = None, None
        kept = []
        for D, c in terms:
            if not D.vertices:
                const = FormalSeries(c.orders, c.coeffs.copy()) if const is None else const + c
                mag = np.abs(c.coeffs) if mag is None else mag + np.abs(c.coeffs)
            elif not c.is_zero():
                kept.append((D, c))
        if const is not None:
            # cancellations down to round-off become exact zeros
            const.coeffs[np.abs(const.coeffs) <= 8 * np.finfo(float).eps * mag] = 0.0
            if not const.is_zero():
                kept.insert(0, (Diagram(), const))
        self.terms = kept
        self.orders = orders
        self.n_sites = int(n_sites)

    # construction ---------------------------------------------------------
    @classmethod
    def zero(cls, orders: Orders, n_sites: int):
        return cls([], orders, n_sites)

    @classmethod
    def constant(cls, orders: Orders, n_sites: int, value=1.0):
        c = value if isinstance(value, FormalSeries) else FormalSeries.monomial(orders, 0, 0, value)
        return cls([(Diagram(), c)], orders, n_sites)

    @classmethod
    def local(cls, orders: Orders, weights, h, power: int, coeff=None):
        """∫ h φ^power dμ with per-site weights."""
        w = np.asarray(weights, dtype=float)
        dens = np.asarray(h, dtype=complex) * w
        groups = ((None, int(power)),) if power > 0 else ()
        c = coeff if isinstance(coeff, FormalSeries) else FormalSeries.monomial(orders, 0, 0, 1.0 if coeff is None else coeff)
        return cls([(Diagram((Vertex(dens, groups),)), c)], orders, dens.size)

    @classmethod
    def linear(cls, orders: Orders, weights, f, coeff=None):
        """F_f(φ) = ⟨f, φ⟩."""
        return cls.local(orders, weights, f, 1, coeff)

    @classmethod
    def separable(cls, orders: Orders, weights, vectors, weight=1.0):
        """weight · Π_i ⟨v_i, φ⟩."""
        w = np.asarray(weights, dtype=float)
        vs = tuple(Vertex(np.asarray(v, dtype=complex) * w, ((None, 1),)) for v in vectors)
        c = FormalSeries.monomial(orders, 0, 0, weight)
        return cls([(Diagram(vs), c)], orders, w.size)

    def _like(self, terms) -> "PolyFunctional":
        return PolyFunctional(terms, self.orders, self.n_sites)

    # algebra ----------------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, PolyFunctional):
            other = PolyFunctional.constant(self.orders, self.n_sites, other)
        return self._like(self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return self._like([(D, -c) for D, c in self.terms])

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, s) -> "PolyFunctional":
        """Multiply by a number or a FormalSeries."""
        return self._like([(D, c * s) for D, c in self.terms])

    def shift(self, da: int = 0, dn: int = 0) -> "PolyFunctional":
        return self._like([(D, c.shift(da, dn)) for D, c in self.terms])

    __mul__ = scale
    __rmul__ = scale

    def conj(self) -> "PolyFunctional":
        """Involution F*(φ) = conj F(φ) for real φ."""
        return self._like([(D.conj(), c.conj()) for D, c in self.terms])

    @property
    def degree(self) -> int:
        return max((D.degree for D, _ in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def lambda_part(self, n: int) -> "PolyFunctional":
        """Terms of exact λ-order n."""
        out = []
        for D, c in self.terms:
            s = FormalSeries(c.orders)
            s.coeffs[:, n] = c.coeffs[:, n]
            out.append((D, s))
        return self._like(out)

    def min_lambda(self) -> int | None:
        ns = [n for _, c in self.terms for (a, n), v in c.items() if v != 0]
        return min(ns) if ns else None

    # evaluation ----------------------------------------------------------------
    def evaluate(self, probes, with_scale: bool = False):
        """Coefficient arrays at each probe: shape (P,) + orders.shape.

        With ``with_scale`` also returns Σ_terms |coefficient · diagram|, the
        natural size against which cancellations are judged.
        """
        probes = np.atleast_2d(np.asarray(probes))
        out = np.zeros((probes.shape[0],) + self.orders.shape, dtype=complex)
        mag = np.zeros(out.shape)
        legcache: dict = {}
        for D, c in self.terms:
            val = evaluate_diagram(D, probes, legcache)
            out += val[:, None, None] * c.coeffs[None]
            if with_scale:
                mag += np.abs(val)[:, None, None] * np.abs(c.coeffs)[None]
        return (out, mag) if with_scale else out

    def __call__(self, phi) -> FormalSeries:
        vals = phi.values if hasattr(phi, "values") else phi
        return FormalSeries(self.orders, self.evaluate(np.asarray(vals)[None, :])[0])

    def value_at_zero(self) -> FormalSeries:
        out = FormalSeries(self.orders)
        for D, c in self.terms:
            if D.degree == 0:
                out = out + c * complex(evaluate_diagram(D, np.zeros((1, self.n_sites)))[0])
        return out

    def __repr__(self):
        return f"PolyFunctional({len(self.terms)} terms, degree {self.degree})"


# ---------------------------------------------------------------------------
# products


def _budget(c: FormalSeries) -> int | None:
    g = _min_grade(c)
    return None if g is None else c.orders.grade_max - g


def _product_terms(D1, c1, D2, c2, kseries):
    """All cross contractions of D1 (left) with D2 (right) through the kernel series."""
    coeff = c1 * c2
    budget = _budget(coeff)
    if budget is None:
        return []
    cl1, cl2 = D1.classes(), D2.classes()
    verts, edges, off = _concat([D1, D2])
    classes = [(v, g, A, c) for v, g, A, c in cl1] + [(v + off[1], g, A, c) for v, g, A, c in cl2]
    n1 = len(cl1)
    slots, meta = [], []
    for i in range(n1):
        for j in range(n1, len(classes)):
            for k, K in kseries:
                slots.append((i, j, 1 + k))
                meta.append((i, j, k, K))
    out = []
    for ns, mult in _enumerate(slots, [c for *_, c in classes], budget):
        pairs = []
        da = dn = 0
        for n, (i, j, k, K) in zip(ns, meta):
            if n:
                vi, gi, A, _ = classes[i]
                vj, gj, B, _ = classes[j]
                pairs.append((vi, gi, A, vj, gj, B, K, n))
                da += n
                dn += k * n
        D, s = _build(verts, edges, pairs)
        c = coeff.shift(da, dn) * (mult * s)
        if not c.is_zero():
            out.append((D, c))
    return out


def contraction_product(F: PolyFunctional, G: PolyFunctional, K) -> PolyFunctional:
    """𝖬 ∘ exp(ħ Γ_K)(F ⊗ G) for a (λ-series of) kernel(s) K."""
    ks = as_kernel_series(K)
    terms = []
    for D1, c1 in F.terms:
        for D2, c2 in G.terms:
            terms.extend(_product_terms(D1, c1, D2, c2, ks))
    return F._like(terms)


def pointwise_product(F: PolyFunctional, G: PolyFunctional) -> PolyFunctional:
    return contraction_product(F, G, [])


def star_product(F: PolyFunctional, G: PolyFunctional, hadamard) -> PolyFunctional:
    """F ⋆ G with the two-point kernel Δ⁺."""
    return contraction_product(F, G, hadamard)


def time_ordered_product(F: PolyFunctional, G: PolyFunctional, feynman) -> PolyFunctional:
    """F ·_T G with the Feynman kernel Δ^F."""
    return contraction_product(F, G, feynman)


def commutator(F: PolyFunctional, G: PolyFunctional, hadamard) -> PolyFunctional:
    return star_product(F, G, hadamard) - star_product(G, F, hadamard)


def _alpha_terms(D, c, wseries, full=False):
    budget = _budget(c)
    if budget is None:
        return []
    classes = D.classes()
    slots, meta = [], []
    for i in range(len(classes)):
        for j in range(i, len(classes)):
            for k, W in wseries:
                slots.append((i, j, 1 + k))
                meta.append((i, j, k, W))
    if full and not classes:
        return [(D, c)]
    out = []
    verts = list(D.vertices)
    for ns, mult in _enumerate(slots, [cc for *_, cc in classes], budget, full=full):
        pairs = []
        da = dn = 0
        for n, (i, j, k, W) in zip(ns, meta):
            if n:
                vi, gi, A, _ = classes[i]
                vj, gj, B, _ = classes[j]
                pairs.append((vi, gi, A, vj, gj, B, W, n))
                da += n
                dn += k * n
        Dn, s = _build(verts, list(D.edges), pairs)
        cn = c.shift(da, dn) * (mult * s)
        if not cn.is_zero():
            out.append((Dn, cn))
    return out


def alpha(F: PolyFunctional, w) -> PolyFunctional:
    """α_w(F) = exp((ħ/2)⟨w, δ²/δφ²⟩) F: every partial matching, ħ w per pair."""
    ws = as_kernel_series(w)
    terms = []
    for D, c in F.terms:
        terms.extend(_alpha_terms(D, c, ws))
    return F._like(terms)


def contract_kernel(F: PolyFunctional, w) -> PolyFunctional:
    """⟨w, F⁽²⁾⟩ as a functional (ordered pairs, no ħ)."""
    ws = as_kernel_series(w)
    terms = []
    for D, c in F.terms:
        for Dn, cn in _alpha_terms(D, c.shift(-1, 0), ws):
            if Dn.degree == D.degree - 2:
                terms.append((Dn, cn * 2.0))
    return F._like(terms)


def gaussian_value(F: PolyFunctional, w) -> FormalSeries:
    """Sum over perfect matchings of each term's legs with kernel w (ħ per pair)."""
    ws = as_kernel_series(w)
    out = FormalSeries(F.orders)
    for D, c in F.terms:
        for Dn, cn in _alpha_terms(D, c, ws, full=True):
            out = out + cn * complex(evaluate_diagram(Dn, np.zeros((1, F.n_sites)))[0])
    return out


# ---------------------------------------------------------------------------
# derivatives and pullbacks


def derivative(F: PolyFunctional, psi) -> PolyFunctional:
    """Directional derivative ⟨F⁽¹⁾(φ), ψ⟩ = d/dε F(φ + εψ)|₀."""
    psi = np.asarray(psi.values if hasattr(psi, "values") else psi, dtype=complex)
    terms = []
    for D, c in F.terms:
        for vi, v in enumerate(D.vertices):
            for gi, (A, cnt) in enumerate(v.groups):
                if cnt == 0:
                    continue
                dens = v.density * cnt * (psi if A is None else A @ psi)
                groups = tuple((B, n - (1 if g == gi else 0)) for g, (B, n) in enumerate(v.groups))
                groups = tuple(gp for gp in groups if gp[1] > 0)
                verts = list(D.vertices)
                verts[vi] = Vertex(dens, groups)
                Dn, s = _normalise(verts, {(a, b): E for a, b, E in D.edges})
                terms.append((Dn, c * s))
    return F._like(terms)


def pullback(F: PolyFunctional, X, offset=None) -> PolyFunctional:
    """F ∘ (X + s): X a matrix or λ-series [(order, matrix | None), ...], s an optional constant field."""
    xs = as_map_series(X)
    parts = len(xs) + (offset is not None)
    terms = []
    for D, c in F.terms:
        budget = _budget(c)
        if budget is None:
            continue
        # expand each group multinomially over the map components
        options = []
        for v in D.vertices:
            per_group = []
            for A, cnt in v.groups:
                choices = []
                for split in _compositions(cnt, parts):
                    mult = factorial(cnt)
                    lam = 0
                    groups = []
                    fac = None
                    for (k, Xk), m in zip(xs, split):
                        if m:
                            mult //= factorial(m)
                            lam += k * m
                            groups.append((compose(A, Xk), m))
                    if offset is not None and split[-1]:
                        mult //= factorial(split[-1])
                        fac = (offset if A is None else A @ offset) ** split[-1]
                    choices.append((mult, lam, tuple(groups), fac))
                per_group.append(choices)
            options.append(per_group)
        flat = [ch for per_group in options for ch in per_group]
        for combo in iproduct(*flat):
            lam = sum(ch[1] for ch in combo)
            if lam > budget:
                continue
            mult = 1.0
            for ch in combo:
                mult *= ch[0]
            it = iter(combo)
            verts = []
            for v, per_group in zip(D.vertices, options):
                groups = []
                dens = v.density
                for _ in per_group:
                    ch = next(it)
                    groups.extend(ch[2])
                    if ch[3] is not None:
                        dens = dens * ch[3]
                verts.append(Vertex(dens, tuple(groups)))
            Dn, sc = _normalise(verts, {(a, b): E for a, b, E in D.edges})
            cn = c.shift(0, lam) * (mult * sc)
            if not cn.is_zero():
                terms.append((Dn, cn))
    return F._like(terms)


def _compositions(n: int, parts: int):
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# multi-entry expectations


def multi_entry_expectation(entries, cross, intra=None, connected: bool = False) -> FormalSeries:
    """Gaussian expectation of a product of entries with perfect matchings.

    entries: list of PolyFunctional. cross(a, b) returns the kernel (series)
    for a pair with a leg of entry a on the left and entry b on the right
    (a < b). intra is the kernel for pairs inside one entry (None: no such
    pairs). With ``connected`` only matchings whose entry graph is connected
    are kept (truncated correlation function).
    """
    orders = entries[0].orders
    n_sites = entries[0].n_sites
    total = FormalSeries(orders)
    crossk = {}
    for a in range(len(entries)):
        for b in range(a + 1, len(entries)):
            crossk[(a, b)] = as_kernel_series(cross(a, b))
    intrak = as_kernel_series(intra) if intra is not None else []
    zero = np.zeros((1, n_sites))
    for combo in iproduct(*[F.terms for F in entries]):
        coeff = FormalSeries.one(orders)
        for _, c in combo:
            coeff = coeff * c
        budget = _budget(coeff)
        if budget is None:
            continue
        diags = [D for D, _ in combo]
        verts, edges, off = _concat(diags)
        classes, owner = [], []
        for e, D in enumerate(diags):
            for v, g, A, cnt in D.classes():
                classes.append((v + off[e], g, A, cnt))
                owner.append(e)
        if sum(c for *_, c in classes) % 2:
            continue
        slots, meta = [], []
        for i in range(len(classes)):
            for j in range(i, len(classes)):
                ei, ej = owner[i], owner[j]
                ks = intrak if ei == ej else crossk[(ei, ej)]
                for k, K in ks:
                    slots.append((i, j, 1 + k))
                    meta.append((i, j, k, K))
        for ns, mult in _enumerate(slots, [c for *_, c in classes], budget, full=True):
            if connected and len(entries) > 1:
                links = [(owner[i], owner[j]) for n, (i, j, k, K) in zip(ns, meta) if n and owner[i] != owner[j]]
                if len(_components(len(entries), links)) != 1:
                    continue
            pairs = []
            da = dn = 0
            for n, (i, j, k, K) in zip(ns, meta):
                if n:
                    vi, gi, A, _ = classes[i]
                    vj, gj, B, _ = classes[j]
                    pairs.append((vi, gi, A, vj, gj, B, K, n))
                    da += n
                    dn += k * n
            D, s = _build(verts, edges, pairs)
            val = s * complex(evaluate_diagram(D, zero)[0])
            total = total + coeff.shift(da, dn) * (mult * val)
    return total


# ---------------------------------------------------------------------------
# comparison


def probe_fields(n_sites: int, n_probes: int = 3, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_probes, n_sites))


def _relative(a, b, scale) -> float:
    """max |a − b| / scale with scale the summed term magnitudes of both sides."""
    return float((np.abs(a - b) / np.maximum(scale, 1e-300)).max(initial=0.0))


def layer_residual(F: PolyFunctional, G: PolyFunctional, probes=None, seed: int = 0) -> float:
    """Coefficient-wise residual over all kept (ħ, λ) layers at probe fields.

    Each layer is measured relative to the summed magnitudes of the terms
    feeding it, so exact cancellations read as round-off and genuine
    mismatches read as O(1).
    """
    if probes is None:
        probes = probe_fields(F.n_sites, 3, seed)
    a, ma = F.evaluate(probes, with_scale=True)
    b, mb = G.evaluate(probes, with_scale=True)
    return _relative(a, b, ma + mb)


def series_residual(x: FormalSeries, y: FormalSeries, scale=None) -> float:
    s = np.abs(x.coeffs) + np.abs(y.coeffs) if scale is None else scale
    return _relative(x.coeffs, y.coeffs, s)


def unitarity_residual(F: PolyFunctional, G: PolyFunctional, hadamard, feynman, probes=None) -> float:
    """Unitarity of ·_T at second order: (F ·_T G)* + F* ·_T G* = F* ⋆ G* + G* ⋆ F*."""
    lhs = time_ordered_product(F, G, feynman).conj() + time_ordered_product(F.conj(), G.conj(), feynman)
    Fs, Gs = F.conj(), G.conj()
    rhs = star_product(Fs, Gs, hadamard) + star_product(Gs, Fs, hadamard)
    return layer_residual(lhs, rhs, probes)
