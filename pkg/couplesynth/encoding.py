"""
Encoding of programs and coupling atoms into z3 formulas
"""
import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import z3

from .errors import EncodingError
from .syntax import (
    Assign, Bern, Binary, Call, Const, DistExpr, Expr, If, Ite, Opaque, Product, Return, Sample, Stmt,
    Type, Unary, UniformInt, Value, Var, VarId, While, dist_result_type, untag_dist,
)

logger = logging.getLogger(__name__)

# Largest finite domain whose quantifiers are expanded into ground instances
EXPANSION_LIMIT = 256

Lookup = Callable[[VarId], z3.ExprRef]
Apply = Callable[[Sequence[z3.ExprRef]], List[z3.ExprRef]]


def sort_of(t: Type) -> z3.SortRef:
    if t.kind == 'bool':
        return z3.BoolSort()
    if t.kind in ('int', 'range'):
        return z3.IntSort()
    if t.kind == 'real':
        return z3.RealSort()
    raise EncodingError(f"unsupported sort {t}")


def value_term(value: Value) -> z3.ExprRef:
    if isinstance(value, bool):
        return z3.BoolVal(value)
    if isinstance(value, int):
        return z3.IntVal(value)
    q = Fraction(value)
    return z3.RealVal(f"{q.numerator}/{q.denominator}")


def in_domain(term: z3.ExprRef, t: Type) -> z3.BoolRef:
    """Range axiom of a finite integer type, `true` for every other type"""
    if t.kind == 'range':
        return z3.And(term >= t.lo, term <= t.hi)
    return z3.BoolVal(True)


def symbol_name(v: VarId, version: str = '') -> str:
    return f"{v}{version}"


class Encoder:
    """
    Variable namespace and expression encoder shared by every copy of a task

    Variables are registered with their types (tagged names included); each
    (variable, version) pair maps to one z3 constant.
    """

    def __init__(self, symbols: Optional[Dict[VarId, Type]] = None):
        self.types: Dict[VarId, Type] = {}
        self.symbols: Dict[VarId, Type] = dict(symbols or {})
        self.logger = logging.getLogger('Encoder')

    def register(self, v: VarId, t: Type):
        if t.is_symbol:
            self.symbols[v.base] = t
            return
        known = self.types.get(v)
        if known is not None and known != t and sort_of(known) != sort_of(t):
            raise EncodingError(f"{v} declared as both {known} and {t}")
        self.types[v] = t

    def register_env(self, env: Dict[VarId, Type], tag: Optional[int]):
        for v, t in env.items():
            self.register(v if t.is_symbol else v.tagged(tag), t)

    def type_of(self, v: VarId) -> Type:
        if v in self.types:
            return self.types[v]
        raise EncodingError(f"no type known for {v}")

    def const(self, v: VarId, version: str = '') -> z3.ExprRef:
        return z3.Const(symbol_name(v, version), sort_of(self.type_of(v)))

    def consts(self, variables: Iterable[VarId], version: str = '') -> Dict[VarId, z3.ExprRef]:
        return {v: self.const(v, version) for v in variables}

    def function(self, fn: VarId) -> z3.FuncDeclRef:
        t = self.symbols.get(fn.base)
        if t is None or t.kind != 'fun':
            raise EncodingError(f"{fn} is not a function parameter")
        sorts = [sort_of(a) for a in t.args] + [sort_of(t.elem)]
        return z3.Function(fn.name, *sorts)

    def domain_axioms(self, terms: Dict[VarId, z3.ExprRef]) -> z3.BoolRef:
        return z3.And([in_domain(term, self.type_of(v)) for v, term in terms.items()])

    # expressions -------------------------------------------------------------

    def expr(self, e: Expr, lookup: Lookup) -> z3.ExprRef:
        if isinstance(e, Const):
            return value_term(e.value)
        if isinstance(e, Var):
            return lookup(e.var)
        if isinstance(e, Unary):
            arg = self.expr(e.arg, lookup)
            return z3.Not(arg) if e.op == 'not' else -arg
        if isinstance(e, Binary):
            left, right = self.expr(e.left, lookup), self.expr(e.right, lookup)
            if e.op == 'and':
                return z3.And(left, right)
            if e.op == 'or':
                return z3.Or(left, right)
            if e.op == '=':
                return left == right
            if e.op == '!=':
                return left != right
            if e.op == '<':
                return left < right
            if e.op == '<=':
                return left <= right
            if e.op == '>':
                return left > right
            if e.op == '>=':
                return left >= right
            if e.op == '+':
                return left + right
            if e.op == '-':
                return left - right
            if e.op == '*':
                return left * right
            raise EncodingError(f"unknown operator {e.op}")
        if isinstance(e, Ite):
            return z3.If(self.expr(e.cond, lookup), self.expr(e.then, lookup), self.expr(e.orelse, lookup))
        if isinstance(e, Call):
            return self.function(e.fn)(*[self.expr(a, lookup) for a in e.args])
        raise EncodingError(f"not an expression: {e!r}")

    # statements --------------------------------------------------------------

    def enc(self, stmts: Iterable[Stmt], lookup: Lookup) -> z3.BoolRef:
        """
        Relational encoding of loop-free SSA code

        Assignments become equalities, samples become `true`, conditionals
        guarded implications and sequences conjunctions.
        """
        parts: List[z3.BoolRef] = []
        for stmt in stmts:
            if isinstance(stmt, Assign):
                parts.append(lookup(stmt.target) == self.expr(stmt.expr, lookup))
            elif isinstance(stmt, Sample):
                continue
            elif isinstance(stmt, If):
                cond = self.expr(stmt.cond, lookup)
                parts.append(z3.Implies(cond, self.enc(stmt.then, lookup)))
                parts.append(z3.Implies(z3.Not(cond), self.enc(stmt.orelse, lookup)))
            elif isinstance(stmt, While):
                raise EncodingError("loop encountered; loops are encoded as transition relations")
            elif isinstance(stmt, Return):
                continue
        return z3.And(parts) if parts else z3.BoolVal(True)

    def symexec(self, stmts: Iterable[Stmt], store: Dict[VarId, z3.ExprRef]) -> Dict[VarId, z3.ExprRef]:
        """Symbolic execution of deterministic code; branches merge through ite"""
        store = dict(store)

        def lookup(v: VarId) -> z3.ExprRef:
            if v in store:
                return store[v]
            return self.const(v)

        for stmt in stmts:
            if isinstance(stmt, Assign):
                store[stmt.target] = self.expr(stmt.expr, lookup)
            elif isinstance(stmt, If):
                cond = self.expr(stmt.cond, lookup)
                then = self.symexec(stmt.then, store)
                orelse = self.symexec(stmt.orelse, store)
                for v in set(then) | set(orelse):
                    a, b = then.get(v), orelse.get(v)
                    if a is None or b is None:
                        store[v] = a if a is not None else b
                    elif a.eq(b):
                        store[v] = a
                    else:
                        store[v] = z3.If(cond, a, b)
            elif isinstance(stmt, Sample):
                raise EncodingError("sample left in deterministic code; hoist the program first")
            elif isinstance(stmt, While):
                raise EncodingError("nested loop encountered")
        return store


def enc_transition(encoder: Encoder, body: Sequence[Stmt], state: Sequence[VarId], samples: Sequence[VarId],
                   pre: Dict[VarId, z3.ExprRef], post: Dict[VarId, z3.ExprRef]) -> z3.BoolRef:
    """
    Transition relation of a hoisted loop body

    Sampled variables take their fresh (primed) values, every other state
    variable its value after the body; untouched variables keep their
    pre-state value.

    Args:
        encoder: Shared namespace
        body: Deterministic part of the loop body
        state: Variables of this copy
        samples: Variables of the body's front sample
        pre: Unprimed constants
        post: Primed constants

    Returns:
        Conjunction of post = f(pre) equalities
    """
    store = {v: pre[v] for v in state}
    for v in samples:
        store[v] = post[v]
    after = encoder.symexec(body, store)
    return z3.And([post[v] == after[v] for v in state if v not in samples] or [z3.BoolVal(True)])


def wp_assign(encoder: Encoder, stmts: Sequence[Stmt], rhs: Callable[[Lookup], z3.BoolRef],
              store: Dict[VarId, z3.ExprRef]) -> z3.BoolRef:
    """Substitute deterministic statements into a postcondition builder"""
    after = encoder.symexec(stmts, store)
    return rhs(lambda v: after[v] if v in after else encoder.const(v))


# ---------------------------------------------------------------------------
# Coupling atoms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingAtom:
    """dexp <f> dexp' between the left and right front samples"""
    lhs: Product
    rhs: Product
    fn_symbol: str = 'f'

    @property
    def arity(self) -> int:
        return len(self.lhs.components)


def component_types(d: Product) -> List[Type]:
    return [dist_result_type(c) for c in d.components]


def _finite_points(types: Sequence[Type]) -> Optional[List[Tuple[Value, ...]]]:
    size = 1
    for t in types:
        if not t.is_finite:
            return None
        size *= len(t.domain())
        if size > EXPANSION_LIMIT:
            return None
    return list(itertools.product(*(t.domain() for t in types)))


def pmf_term(d: DistExpr, x: z3.ExprRef, encoder: Encoder, lookup: Lookup) -> z3.ArithRef:
    """Probability mass of one component at term x"""
    if isinstance(d, Bern):
        p = encoder.expr(d.p, lookup)
        return z3.If(x, p, 1 - p)
    if isinstance(d, UniformInt):
        weight = z3.RealVal(f"1/{d.hi - d.lo + 1}")
        return z3.If(z3.And(x >= d.lo, x <= d.hi), weight, z3.RealVal(0))
    if isinstance(d, Opaque):
        raise EncodingError(f"opaque distribution {d.name} has no pmf; use elided mode")
    raise EncodingError(f"no pmf for {d!r}")


def product_pmf(d: Product, xs: Sequence[z3.ExprRef], encoder: Encoder, lookup: Lookup) -> z3.ArithRef:
    if not d.components:
        return z3.RealVal(1)
    factors = [pmf_term(c, x, encoder, lookup) for c, x in zip(d.components, xs)]
    result = factors[0]
    for factor in factors[1:]:
        result = result * factor
    return result


def has_opaque(d: Product) -> bool:
    return any(isinstance(c, Opaque) for c in d.components)


def _pmf_symbol(name: str, types: Sequence[Type]) -> z3.FuncDeclRef:
    return z3.Function(name, *[sort_of(t) for t in types], z3.RealSort())


def _swap(xs: Sequence, i: int, j: int) -> List:
    ys = list(xs)
    ys[i], ys[j] = ys[j], ys[i]
    return ys


def symmetry_transpositions(d: Product) -> List[Tuple[int, int]]:
    """Position pairs of syntactically identical components"""
    return [(i, j) for i, j in itertools.combinations(range(len(d.components)), 2)
            if d.components[i] == d.components[j]]


def shares_pmf(atom: CouplingAtom) -> bool:
    """Identical distributions on both sides, up to copy tags"""
    return untag_dist(atom.lhs) == untag_dist(atom.rhs)


def symmetry_axioms(atom: CouplingAtom, h: z3.FuncDeclRef, h_prime: z3.FuncDeclRef,
                    points: Optional[List[Tuple[Value, ...]]] = None) -> z3.BoolRef:
    """
    pmf symmetries justified by syntax alone

    Identical distributions on both sides share one pmf, and swapping two
    identical components of a product preserves the pmf.

    Args:
        atom: Coupling atom
        h: pmf symbol of the left side
        h_prime: pmf symbol of the right side
        points: Ground instances to use instead of quantifiers

    Returns:
        Conjunction of axioms (`true` if nothing can be justified)
    """
    types = component_types(atom.lhs)
    sides = [(atom.lhs, h)]
    axioms: List[z3.BoolRef] = []
    if shares_pmf(atom):
        if not h.eq(h_prime):
            axioms.append(_forall(types, points, lambda xs: h(*xs) == h_prime(*xs)))
    else:
        sides.append((atom.rhs, h_prime))
    for dist, symbol in sides:
        for i, j in symmetry_transpositions(dist):
            axioms.append(_forall(component_types(dist), points,
                                  lambda xs, i=i, j=j, symbol=symbol: symbol(*xs) == symbol(*_swap(xs, i, j))))
    return z3.And(axioms) if axioms else z3.BoolVal(True)


def _forall(types: Sequence[Type], points: Optional[List[Tuple[Value, ...]]],
            body: Callable[[List[z3.ExprRef]], z3.BoolRef], prefix: str = 'x') -> z3.BoolRef:
    """∀x over a finite product domain, ground-expanded when points are given"""
    if points is not None:
        return z3.And([body([value_term(v) for v in point]) for point in points] or [z3.BoolVal(True)])
    xs = [z3.Const(f"{prefix}!{k}", sort_of(t)) for k, t in enumerate(types)]
    guard = z3.And([in_domain(x, t) for x, t in zip(xs, types)])
    if not xs:
        return body([])
    return z3.ForAll(xs, z3.Implies(guard, body(xs)))


def eliminate_coupling(atom: CouplingAtom, apply: Apply, encoder: Encoder, left: Lookup, right: Lookup,
                       mode: str = 'full', expand: bool = True, symbolic_pmf: bool = False,
                       symmetric: Optional[bool] = None) -> z3.BoolRef:
    """
    Replace a coupling atom by first-order constraints on f

    The result is (pmf axioms) => (injectivity and codomain and monotonicity):
    f is injective on the left domain, maps into the right domain, and
    h(x) <= h'(f(x)) for every x.

    Args:
        atom: lhs <f> rhs
        apply: f as a function on tuples of terms
        encoder: Namespace for distribution parameters
        left: Lookup for the left copy's variables
        right: Lookup for the right copy's variables
        mode: 'full' defines h and h' by the pmfs; 'elided' leaves them free
        expand: Ground-expand quantifiers over small finite domains
        symbolic_pmf: In full mode, keep h and h' as declared symbols with
            defining axioms instead of inlining the pmf terms
        symmetric: Add symmetry axioms; defaults to True in elided mode

    Returns:
        Formula over the copies' variables and f

    Raises:
        EncodingError: full mode with an Opaque distribution
    """
    if mode not in ('full', 'elided'):
        raise EncodingError(f"unknown elision mode {mode}")
    if mode == 'full' and (has_opaque(atom.lhs) or has_opaque(atom.rhs)):
        raise EncodingError("opaque distributions can only be encoded in elided mode")
    if symmetric is None:
        symmetric = mode == 'elided'
    left_types = component_types(atom.lhs)
    right_types = component_types(atom.rhs)
    if [sort_of(t) for t in left_types] != [sort_of(t) for t in right_types]:
        raise EncodingError("coupling sides have different signatures")
    points = _finite_points(left_types) if expand else None
    right_points = _finite_points(right_types) if expand else None

    hypotheses: List[z3.BoolRef] = []
    if mode == 'full' and not symbolic_pmf:
        def h(*xs):
            return product_pmf(atom.lhs, xs, encoder, left)

        def h_prime(*xs):
            return product_pmf(atom.rhs, xs, encoder, right)
    else:
        h = _pmf_symbol(f"h_{atom.fn_symbol}", left_types)
        share = mode == 'elided' and symmetric and shares_pmf(atom)
        h_prime = h if share else _pmf_symbol(f"h_{atom.fn_symbol}'", right_types)
        if mode == 'full':
            hypotheses.append(_forall(left_types, points, lambda xs: h(*xs) == product_pmf(atom.lhs, xs, encoder, left)))
            hypotheses.append(_forall(right_types, right_points,
                                      lambda xs: h_prime(*xs) == product_pmf(atom.rhs, xs, encoder, right), 'y'))
        if symmetric:
            hypotheses.append(symmetry_axioms(atom, h, h_prime, points))

    obligations: List[z3.BoolRef] = []
    if points is not None:
        images = {point: apply([value_term(v) for v in point]) for point in points}
        for a, b in itertools.combinations(points, 2):
            obligations.append(z3.Or([fa != fb for fa, fb in zip(images[a], images[b])] or [z3.BoolVal(False)]))
        for point in points:
            image = images[point]
            obligations.append(z3.And([in_domain(y, t) for y, t in zip(image, right_types)] or [z3.BoolVal(True)]))
            obligations.append(h(*[value_term(v) for v in point]) <= h_prime(*image))
    else:
        xs = [z3.Const(f"x!{k}", sort_of(t)) for k, t in enumerate(left_types)]
        ys = [z3.Const(f"y!{k}", sort_of(t)) for k, t in enumerate(left_types)]
        guard_x = z3.And([in_domain(x, t) for x, t in zip(xs, left_types)])
        guard_y = z3.And([in_domain(y, t) for y, t in zip(ys, left_types)])
        fx, fy = apply(xs), apply(ys)
        if xs:
            distinct = z3.Or([x != y for x, y in zip(xs, ys)])
            obligations.append(z3.ForAll(xs + ys, z3.Implies(z3.And(guard_x, guard_y, distinct),
                                                             z3.Or([a != b for a, b in zip(fx, fy)]))))
            closure = z3.And([in_domain(y, t) for y, t in zip(fx, right_types)])
            obligations.append(z3.ForAll(xs, z3.Implies(guard_x, z3.And(closure, h(*xs) <= h_prime(*fx)))))
        else:
            obligations.append(h() <= h_prime())
    conclusion = z3.And(obligations) if obligations else z3.BoolVal(True)
    if hypotheses:
        return z3.Implies(z3.And(hypotheses), conclusion)
    return conclusion
