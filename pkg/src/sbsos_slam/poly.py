"""Sparse multivariate polynomials over integer variable ids.

A monomial is a canonical tuple of ``(var, exponent)`` pairs sorted by
variable id; a polynomial maps monomials to float coefficients.  This is
enough algebra to write down the SLAM cost terms and box constraints, take
Hessians, and check SOS-convexity of quadratics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .factor_graph import LandmarkFactor, RelPoseFactor, VariableIndex

PRUNE_TOL = 1e-14

Monomial = tuple[tuple[int, int], ...]
ONE: Monomial = ()


def monomial(*variables: int) -> Monomial:
    """Monomial of the product of ``variables`` (repeats raise the exponent)."""
    exps: dict[int, int] = {}
    for v in variables:
        exps[v] = exps.get(v, 0) + 1
    return tuple(sorted(exps.items()))


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    exps = dict(a)
    for v, e in b:
        exps[v] = exps.get(v, 0) + e
    return tuple(sorted(exps.items()))


def mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def mono_vars(m: Monomial) -> tuple[int, ...]:
    """Variables of ``m`` with multiplicity, e.g. ``x0^2 x3 -> (0, 0, 3)``."""
    return tuple(v for v, e in m for _ in range(e))


class Polynomial:
    """Immutable sparse polynomial with float coefficients."""

    __slots__ = ("_terms", "_degree", "_support")

    def __init__(self, terms: Mapping[Monomial, float] | None = None):
        clean = {}
        for m, c in (terms or {}).items():
            c = float(c)
            if abs(c) > PRUNE_TOL:
                clean[m] = c
        self._terms = clean
        self._degree = max((mono_degree(m) for m in clean), default=0)
        self._support = frozenset(v for m in clean for v, _ in m)

    @classmethod
    def constant(cls, value: float) -> Polynomial:
        return cls({ONE: value})

    @classmethod
    def variable(cls, var: int) -> Polynomial:
        return cls({((var, 1),): 1.0})

    @classmethod
    def linear(cls, coeffs: Mapping[int, float], const: float = 0.0) -> Polynomial:
        terms = {((v, 1),): c for v, c in coeffs.items()}
        terms[ONE] = terms.get(ONE, 0.0) + const
        return cls(terms)

    @property
    def terms(self) -> Mapping[Monomial, float]:
        return self._terms

    @property
    def degree(self) -> int:
        return self._degree

    @property
    def support(self) -> frozenset[int]:
        return self._support

    def coefficient(self, m: Monomial) -> float:
        return self._terms.get(m, 0.0)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def _combine(self, other: Polynomial, sign: float) -> Polynomial:
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + sign * c
        return Polynomial(out)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, k: float) -> Polynomial:
        return Polynomial({m: k * c for m, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        if not isinstance(other, Polynomial):
            return NotImplemented
        out: dict[Monomial, float] = {}
        for ma, ca in self._terms.items():
            for mb, cb in other._terms.items():
                m = mono_mul(ma, mb)
                out[m] = out.get(m, 0.0) + ca * cb
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0 or int(k) != k:
            raise ValueError("only nonnegative integer powers are supported")
        out = Polynomial.constant(1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def almost_equal(self, other: Polynomial, tol: float = 1e-12) -> bool:
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(m) - other.coefficient(m)) <= tol for m in keys)

    def eval(self, values) -> float:
        """Evaluate at ``values`` (a mapping or a dense vector indexed by var id)."""
        total = 0.0
        for m, c in self._terms.items():
            term = c
            for v, e in m:
                term *= values[v] ** e
            total += term
        return float(total)

    __call__ = eval

    def substitute(self, values: Mapping[int, float]) -> Polynomial:
        """Replace the listed variables by constants."""
        out: dict[Monomial, float] = {}
        for m, c in self._terms.items():
            keep = []
            for v, e in m:
                if v in values:
                    c *= values[v] ** e
                else:
                    keep.append((v, e))
            key = tuple(keep)
            out[key] = out.get(key, 0.0) + c
        return Polynomial(out)

    def shift(self, offsets: Mapping[int, float]) -> Polynomial:
        """``p(x + a)``: replace each listed ``x_v`` by ``x_v + a_v``."""
        out = Polynomial()
        for m, c in self._terms.items():
            term = Polynomial.constant(c)
            for v, e in m:
                a = offsets.get(v, 0.0)
                term = term * (Polynomial.variable(v) + a if a else Polynomial.variable(v)) ** e
            out = out + term
        return out

    def derivative(self, var: int) -> Polynomial:
        out: dict[Monomial, float] = {}
        for m, c in self._terms.items():
            exps = dict(m)
            e = exps.get(var, 0)
            if e == 0:
                continue
            if e == 1:
                del exps[var]
            else:
                exps[var] = e - 1
            key = tuple(sorted(exps.items()))
            out[key] = out.get(key, 0.0) + c * e
        return Polynomial(out)

    def __repr__(self):
        if not self._terms:
            return "Polynomial(0)"
        parts = []
        for m in sorted(self._terms, key=lambda m: (mono_degree(m), m)):
            name = "*".join(f"x{v}" + (f"^{e}" if e > 1 else "") for v, e in m) or "1"
            parts.append(f"{self._terms[m]:+.6g}*{name}")
        return "Polynomial(" + " ".join(parts) + ")"


def poly_sum(polys: Iterable[Polynomial]) -> Polynomial:
    out: dict[Monomial, float] = {}
    for p in polys:
        for m, c in p.terms.items():
            out[m] = out.get(m, 0.0) + c
    return Polynomial(out)


@dataclass(frozen=True)
class ConstraintPoly:
    """Box constraint ``0 <= g <= 1`` on the feasible set; ``offset`` is 1 or 2.

    ``g = offset - c^2 - s^2`` for the pose ``pose``.
    """

    g: Polynomial
    pose: int
    offset: int

    @property
    def support(self) -> frozenset[int]:
        return self.g.support


def _weighted_square(weight: float, residual: Polynomial) -> Polynomial:
    return (residual * residual).scale(weight)


def pose_cost_residuals(f: RelPoseFactor, index: VariableIndex) -> list[tuple[float, Polynomial]]:
    """The six weighted affine residuals whose squares make up one pose factor."""
    ci, si, xi, yi = index.pose(f.i)
    cj, sj, xj, yj = index.pose(f.j)
    L = Polynomial.linear
    cm, sm = f.c, f.s
    return [
        (f.w_rot2, L({cj: 1.0, ci: -cm, si: sm})),
        (f.w_rot2, L({sj: -1.0, ci: sm, si: cm})),
        (f.w_rot2, L({sj: 1.0, si: -cm, ci: -sm})),
        (f.w_rot2, L({cj: 1.0, si: sm, ci: -cm})),
        (f.w_x2, L({xj: 1.0, ci: -f.x, si: f.y, xi: -1.0})),
        (f.w_y2, L({yj: 1.0, si: -f.x, ci: -f.y, yi: -1.0})),
    ]


def build_pose_cost(f: RelPoseFactor, index: VariableIndex) -> Polynomial:
    return poly_sum(_weighted_square(w, r) for w, r in pose_cost_residuals(f, index))


def landmark_cost_residuals(f: LandmarkFactor, index: VariableIndex) -> list[tuple[float, Polynomial]]:
    ci, si, xi, yi = index.pose(f.i)
    lx, ly = index.landmark(f.ell)
    L = Polynomial.linear
    return [
        (f.w_x2, L({lx: 1.0, ci: -f.x, si: f.y, xi: -1.0})),
        (f.w_y2, L({ly: 1.0, si: -f.x, ci: -f.y, yi: -1.0})),
    ]


def build_landmark_cost(f: LandmarkFactor, index: VariableIndex) -> Polynomial:
    return poly_sum(_weighted_square(w, r) for w, r in landmark_cost_residuals(f, index))


def build_costs(graph) -> list[Polynomial]:
    """One polynomial per factor, pose factors first, in graph order."""
    index = graph.index
    return [build_pose_cost(f, index) for f in graph.edges] + [
        build_landmark_cost(f, index) for f in graph.land_edges
    ]


def build_constraints(n: int, index: VariableIndex | None = None) -> list[ConstraintPoly]:
    """``1 - c^2 - s^2`` and ``2 - c^2 - s^2`` for every pose (``2n`` in total)."""
    index = index or VariableIndex(n)
    out = []
    for i in range(n):
        c, s = index.pose(i)[:2]
        sq = Polynomial({((c, 2),): 1.0, ((s, 2),): 1.0})
        out.append(ConstraintPoly(1.0 - sq, i, 1))
        out.append(ConstraintPoly(2.0 - sq, i, 2))
    return out


def hessian(p: Polynomial, variables: Sequence[int] | None = None) -> tuple[tuple[int, ...], list[list[Polynomial]]]:
    """Matrix of second partial derivatives over ``variables`` (default: support)."""
    variables = tuple(sorted(p.support) if variables is None else variables)
    first = [p.derivative(v) for v in variables]
    H = [[first[a].derivative(v) for v in variables] for a in range(len(variables))]
    return variables, H


def constant_hessian(p: Polynomial, variables: Sequence[int] | None = None) -> tuple[tuple[int, ...], np.ndarray]:
    variables, H = hessian(p, variables)
    if p.degree > 2:
        raise ValueError(f"unsupported degree {p.degree}: Hessian is not constant")
    k = len(variables)
    out = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            out[a, b] = H[a][b].coefficient(ONE)
    return variables, out


def is_sos_convex(p: Polynomial, tol: float = 1e-9) -> tuple[bool, np.ndarray | None]:
    """SOS-convexity test for polynomials of degree at most two.

    The Hessian of a quadratic is constant, so it is an SOS matrix exactly when
    it is PSD.  On success also returns ``L`` with ``hessian = L @ L.T`` (rows
    ordered as the sorted support of ``p``).
    """
    if p.degree > 2:
        raise ValueError(f"unsupported degree {p.degree}: only quadratics are handled")
    _, H = constant_hessian(p)
    if H.size == 0:
        return True, np.zeros((0, 0))
    w, V = np.linalg.eigh(H)
    if w[0] < -tol * max(1.0, abs(w[-1])):
        return False, None
    keep = w > tol * max(1.0, abs(w[-1]))
    L = V[:, keep] * np.sqrt(w[keep])
    if L.shape[1] == 0:
        L = np.zeros((H.shape[0], 1))
    return True, L


def quadratic_form(p: Polynomial, variables: Sequence[int]) -> tuple[np.ndarray, np.ndarray, float]:
    """Return ``(Q, q, r)`` with ``p(x) = x'Qx + q'x + r`` over ``variables``."""
    if p.degree > 2:
        raise ValueError("not a quadratic")
    return quadratic_from_terms(p.terms, variables)


def quadratic_from_terms(terms: Mapping[Monomial, float], variables: Sequence[int]) -> tuple[np.ndarray, np.ndarray, float]:
    """``quadratic_form`` on raw coefficients, keeping values below the prune tolerance."""
    pos = {v: k for k, v in enumerate(variables)}
    n = len(variables)
    Q = np.zeros((n, n))
    q = np.zeros(n)
    r = 0.0
    for m, c in terms.items():
        vs = mono_vars(m)
        if len(vs) == 0:
            r += c
        elif len(vs) == 1:
            q[pos[vs[0]]] += c
        elif vs[0] == vs[1]:
            Q[pos[vs[0]], pos[vs[0]]] += c
        else:
            a, b = pos[vs[0]], pos[vs[1]]
            Q[a, b] += c / 2
            Q[b, a] += c / 2
    return Q, q, r


def monomials_up_to_degree_two(variables: Sequence[int]) -> list[Monomial]:
    """All monomials of degree <= 2 in ``variables``, graded then lexicographic."""
    vs = sorted(variables)
    out: list[Monomial] = [ONE]
    out += [((v, 1),) for v in vs]
    for a, va in enumerate(vs):
        for vb in vs[a:]:
            out.append(monomial(va, vb))
    return out
