"""
Grammar of candidate coupling functions and its size-ordered enumeration
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import z3

from .semantics import eval_expr
from .syntax import Const as ConstExpr
from .syntax import Expr, Type, Value, Var, VarId, conj, eq, format_value, pretty_expr

Evaluate = Callable[[Expr], z3.ExprRef]


class CandidateFn:
    """A candidate f: tuples of values to tuples of values"""

    rule = 'abstract'

    def size(self) -> int:
        raise NotImplementedError("Subclasses must implement size")

    def apply(self, xs: Sequence[z3.ExprRef], evaluate: Evaluate) -> List[z3.ExprRef]:
        """
        Symbolic application

        Args:
            xs: Input terms
            evaluate: Encodes a condition or constant in the caller's context
        """
        raise NotImplementedError("Subclasses must implement apply")

    def call(self, values: Sequence[Value], env: Mapping[VarId, Value]) -> Tuple[Value, ...]:
        """Concrete application; `env` binds every variable a condition reads"""
        raise NotImplementedError("Subclasses must implement call")

    def render(self, inputs: Sequence[str]) -> str:
        """The function as a tuple expression over named inputs"""
        return '(' + ', '.join(self.components(list(inputs))) + ')'

    def components(self, inputs: List[str]) -> List[str]:
        raise NotImplementedError("Subclasses must implement components")

    @property
    def is_chain(self) -> bool:
        return False

    def conditions(self) -> List[Expr]:
        return []


@dataclass(frozen=True)
class Base(CandidateFn):
    rule = 'Base'

    def size(self) -> int:
        return 1

    def apply(self, xs, evaluate):
        return list(xs)

    def call(self, values, env):
        return tuple(values)

    def components(self, inputs):
        return list(inputs)

    @property
    def is_chain(self) -> bool:
        return True

    def __str__(self) -> str:
        return 'Base'


@dataclass(frozen=True)
class Swap(CandidateFn):
    """Exchange output positions i and j (1-based) of the inner function"""
    i: int
    j: int
    inner: CandidateFn
    rule = 'Swap'

    def size(self) -> int:
        return 1 + self.inner.size()

    def _swap(self, ys: List) -> List:
        ys = list(ys)
        ys[self.i - 1], ys[self.j - 1] = ys[self.j - 1], ys[self.i - 1]
        return ys

    def apply(self, xs, evaluate):
        return self._swap(self.inner.apply(xs, evaluate))

    def call(self, values, env):
        return tuple(self._swap(list(self.inner.call(values, env))))

    def components(self, inputs):
        return self._swap(self.inner.components(inputs))

    @property
    def is_chain(self) -> bool:
        return True

    def __str__(self) -> str:
        return f"Swap({self.i}, {self.j}, {self.inner})"


@dataclass(frozen=True)
class Neg(CandidateFn):
    """Negate boolean output position i (1-based) of the inner function"""
    i: int
    inner: CandidateFn
    rule = 'Neg'

    def size(self) -> int:
        return 1 + self.inner.size()

    def apply(self, xs, evaluate):
        ys = self.inner.apply(xs, evaluate)
        ys[self.i - 1] = z3.Not(ys[self.i - 1])
        return ys

    def call(self, values, env):
        ys = list(self.inner.call(values, env))
        ys[self.i - 1] = not ys[self.i - 1]
        return tuple(ys)

    def components(self, inputs):
        ys = self.inner.components(inputs)
        ys[self.i - 1] = f"not {ys[self.i - 1]}"
        return ys

    @property
    def is_chain(self) -> bool:
        return True

    def __str__(self) -> str:
        return f"Neg({self.i}, {self.inner})"


@dataclass(frozen=True)
class Cond(CandidateFn):
    cond: Expr
    then: CandidateFn
    orelse: CandidateFn
    rule = 'Cond'

    def size(self) -> int:
        return 1 + self.then.size() + self.orelse.size()

    def apply(self, xs, evaluate):
        c = evaluate(self.cond)
        return [z3.If(c, a, b) for a, b in zip(self.then.apply(xs, evaluate), self.orelse.apply(xs, evaluate))]

    def call(self, values, env):
        branch = self.then if eval_expr(env, self.cond) else self.orelse
        return branch.call(values, env)

    def components(self, inputs):
        c = pretty_expr(self.cond)
        return [a if a == b else f"ite({c}, {a}, {b})"
                for a, b in zip(self.then.components(inputs), self.orelse.components(inputs))]

    def conditions(self) -> List[Expr]:
        return [self.cond] + self.then.conditions() + self.orelse.conditions()

    def __str__(self) -> str:
        return f"Cond({pretty_expr(self.cond)}, {self.then}, {self.orelse})"


@dataclass(frozen=True)
class Const(CandidateFn):
    """Constant vector of literals or parameter constants"""
    values: Tuple[Expr, ...]
    rule = 'Const'

    def size(self) -> int:
        return 2

    def apply(self, xs, evaluate):
        return [evaluate(v) for v in self.values]

    def call(self, values, env):
        return tuple(eval_expr(env, v) for v in self.values)

    def components(self, inputs):
        return [pretty_expr(v) for v in self.values]

    def __str__(self) -> str:
        return f"Const({', '.join(pretty_expr(v) for v in self.values)})"


def normal_form(f: CandidateFn, arity: int) -> Tuple[Tuple[int, bool], ...]:
    """Signed permutation computed by a Swap/Neg chain: (source, negated) per output"""
    if isinstance(f, Base):
        return tuple((k, False) for k in range(arity))
    inner = list(normal_form(f.inner, arity))
    if isinstance(f, Swap):
        inner[f.i - 1], inner[f.j - 1] = inner[f.j - 1], inner[f.i - 1]
    elif isinstance(f, Neg):
        source, negated = inner[f.i - 1]
        inner[f.i - 1] = (source, not negated)
    return tuple(inner)


class CandidateEnumerator:
    """
    Breadth-first enumeration of the coupling-function grammar

    Candidates come out by AST size, ties broken by rule (Base < Swap < Neg <
    Cond < Const) and then by the order of their indices and subterms.
    Swap/Neg chains computing the same signed permutation are emitted once.

    Args:
        types: Types of the function's positions
        conds: Predicates a Cond may branch on
        consts: Vectors a Const may return
    """

    def __init__(self, types: Sequence[Type], conds: Sequence[Expr] = (), consts: Sequence[Tuple[Expr, ...]] = ()):
        self.types = list(types)
        self.arity = len(self.types)
        self.conds = list(conds)
        self.consts = [tuple(c) for c in consts if len(c) == self.arity]
        self._by_size: Dict[int, List[CandidateFn]] = {}
        self._seen_forms = set()
        self._swaps = [(i, j) for i in range(1, self.arity + 1) for j in range(i + 1, self.arity + 1)
                       if self.types[i - 1] == self.types[j - 1]]
        self._negs = [i for i in range(1, self.arity + 1) if self.types[i - 1].kind == 'bool']
        self.logger = logging.getLogger('CandidateEnumerator')

    def of_size(self, size: int) -> List[CandidateFn]:
        if size in self._by_size:
            return self._by_size[size]
        for smaller in range(1, size):
            self.of_size(smaller)
        found: List[CandidateFn] = []
        if size == 1:
            found.append(Base())
            self._seen_forms.add(normal_form(Base(), self.arity))
        else:
            chains = [f for f in self._by_size.get(size - 1, []) if f.is_chain]
            for i, j in self._swaps:
                for inner in chains:
                    self._add_chain(Swap(i, j, inner), found)
            for i in self._negs:
                for inner in chains:
                    self._add_chain(Neg(i, inner), found)
            found.extend(self._conds_of_size(size))
            if size == 2:
                found.extend(Const(c) for c in self.consts)
        self._by_size[size] = found
        self.logger.debug(f"size {size}: {len(found)} candidates")
        return found

    def _add_chain(self, f: CandidateFn, found: List[CandidateFn]):
        form = normal_form(f, self.arity)
        if form not in self._seen_forms:
            self._seen_forms.add(form)
            found.append(f)

    def _conds_of_size(self, size: int) -> Iterator[CandidateFn]:
        for c in self.conds:
            for left_size in range(1, size - 1):
                right_size = size - 1 - left_size
                for then in self._by_size.get(left_size, []):
                    if c in then.conditions():
                        continue
                    for orelse in self._by_size.get(right_size, []):
                        if then == orelse or c in orelse.conditions():
                            continue
                        yield Cond(c, then, orelse)

    def __iter__(self) -> Iterator[CandidateFn]:
        # sizes past 2 * largest + 1 could only be built from empty sizes
        size, largest = 1, 0
        while size <= 2 * largest + 1:
            found = self.of_size(size)
            if found:
                largest = size
            yield from found
            size += 1


def enumerate_candidates(types: Sequence[Type], conds: Sequence[Expr] = (),
                         consts: Sequence[Tuple[Expr, ...]] = (), limit: Optional[int] = None
                         ) -> Iterator[Tuple[int, CandidateFn]]:
    """
    Stream (1-based index, candidate) pairs in enumeration order

    Args:
        types: Types of the function's positions
        conds: Predicates for Cond
        consts: Vectors for Const
        limit: Stop after this many candidates
    """
    for index, f in enumerate(CandidateEnumerator(types, conds, consts), start=1):
        if limit is not None and index > limit:
            return
        yield index, f


def case_split(cases: Sequence[Tuple[Dict[VarId, Value], CandidateFn]]) -> CandidateFn:
    """
    One function for every parameter instance of a split proof

    Each instance's candidate is guarded by the parameter equalities of its
    instance; the last one is the fallback.
    """
    if not cases:
        raise ValueError("no cases to combine")
    result = cases[-1][1]
    for valuation, f in reversed(cases[:-1]):
        if f == result:
            continue
        guard = conj(eq(Var(v), ConstExpr(x)) for v, x in sorted(valuation.items()))
        result = Cond(guard, f, result)
    return result


def candidate_json(f: CandidateFn, inputs: Sequence[VarId]) -> Dict[str, object]:
    return {'ast': str(f), 'function': f.render([str(v) for v in inputs]), 'size': f.size()}


def describe_valuation(valuation: Mapping[VarId, Value]) -> str:
    return ', '.join(f"{v}={format_value(x)}" for v, x in sorted(valuation.items()))


def as_hole(f: CandidateFn, encoder) -> Callable:
    """f as a bundle hole: conditions and constants are read through the hole's lookup"""
    def hole(xs, lookup):
        return f.apply(xs, lambda e: encoder.expr(e, lookup))
    return hole
