"""
Exact-inference interpreter over rational distributions, and verdict checks
"""
import itertools
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from .config import UnrollPolicy
from .errors import CheckError, OracleError, UnrollBudgetError
from .syntax import (
    Assign, Bern, Binary, Call, Const, DistExpr, Expr, If, Ite, Opaque, Product, Program, Property,
    Return, Sample, Stmt, Unary, UniformInt, Value, Var, VarId, While,
)

logger = logging.getLogger(__name__)

BUILTINS: Dict[str, Callable] = {
    'and': lambda *args: all(args),
    'or': lambda *args: any(args),
    'xor': lambda a, b: a != b,
    'not': lambda a: not a,
    'eq': lambda a, b: a == b,
}


class State(Mapping):
    """Immutable valuation of program variables"""

    __slots__ = ('_data', '_hash')

    def __init__(self, data: Optional[Mapping] = None):
        self._data: Dict[VarId, Value] = dict(data or {})
        self._hash: Optional[int] = None

    def __getitem__(self, var: VarId) -> Value:
        return self._data[var]

    def __iter__(self) -> Iterator[VarId]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._data.items()))
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, State):
            return self._data == other._data
        return NotImplemented

    def __repr__(self) -> str:
        inner = ', '.join(f"{k}={v}" for k, v in sorted(self._data.items(), key=lambda kv: kv[0]))
        return f"State({inner})"

    def set(self, var: VarId, value: Value) -> 'State':
        data = dict(self._data)
        data[var] = value
        return State(data)

    def update(self, pairs: Iterable[Tuple[VarId, Value]]) -> 'State':
        data = dict(self._data)
        data.update(pairs)
        return State(data)

    def project(self, variables: Iterable[VarId]) -> 'State':
        return State({v: self._data[v] for v in variables if v in self._data})


@dataclass(frozen=True)
class Dist:
    """Finite distribution over hashable outcomes; masses are positive and sum to 1"""
    pmf: Dict[object, Fraction]

    def __getitem__(self, outcome) -> Fraction:
        return self.pmf.get(outcome, Fraction(0))


@dataclass(frozen=True)
class ResidualDist:
    """Output states of a truncated run plus the mass still inside the loop"""
    pmf: Dict[State, Fraction]
    residual: Fraction = Fraction(0)

    @property
    def total(self) -> Fraction:
        return sum(self.pmf.values(), Fraction(0)) + self.residual


@dataclass(frozen=True)
class Verdict:
    """
    Outcome of an exact property check

    Attributes:
        kind: e.g. 'Uniform' or 'NotUniform'
        holds: whether the property holds within the residual tolerance
        witness: offending values when it does not hold
        gap: probability gap at the witness
        residual: residual mass the verdict tolerated
        skipped: conditioning values of zero mass
    """
    kind: str
    holds: bool
    witness: Optional[tuple] = None
    gap: Optional[Fraction] = None
    residual: Fraction = Fraction(0)
    skipped: tuple = ()
    detail: Dict[str, object] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Expressions and distributions
# ---------------------------------------------------------------------------

def _call(fn, args: Sequence[Value]) -> Value:
    if isinstance(fn, tuple) and fn and fn[0] == 'builtin':
        return BUILTINS[fn[1]](*args)
    if callable(fn):
        return fn(*args)
    raise OracleError(f"cannot apply binding {fn!r}")


def eval_expr(s: Mapping, e: Expr, bindings: Optional[Mapping[str, object]] = None) -> Value:
    """
    Evaluate an expression exactly in a state

    Args:
        s: Variable valuation
        e: Expression
        bindings: Concrete meanings of fun parameters, by name

    Returns:
        bool, int or Fraction
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return s[e.var]
        except KeyError:
            raise OracleError(f"variable {e.var} is undefined in this state")
    if isinstance(e, Unary):
        value = eval_expr(s, e.arg, bindings)
        return (not value) if e.op == 'not' else -value
    if isinstance(e, Binary):
        if e.op == 'and':
            return bool(eval_expr(s, e.left, bindings)) and bool(eval_expr(s, e.right, bindings))
        if e.op == 'or':
            return bool(eval_expr(s, e.left, bindings)) or bool(eval_expr(s, e.right, bindings))
        left, right = eval_expr(s, e.left, bindings), eval_expr(s, e.right, bindings)
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
        raise OracleError(f"unknown operator {e.op}")
    if isinstance(e, Ite):
        branch = e.then if eval_expr(s, e.cond, bindings) else e.orelse
        return eval_expr(s, branch, bindings)
    if isinstance(e, Call):
        fn = (bindings or {}).get(e.fn.name)
        if fn is None:
            raise OracleError(f"function {e.fn.name} needs a concrete binding")
        return _call(fn, [eval_expr(s, a, bindings) for a in e.args])
    raise OracleError(f"not an expression: {e!r}")


def eval_dist(s: Mapping, d: DistExpr, bindings: Optional[Mapping[str, object]] = None) -> Dist:
    """
    Exact pmf of a distribution expression in a state

    Products yield tuples, one component per factor.

    Raises:
        OracleError: Bernoulli parameter outside [0, 1] or an unbound Opaque
    """
    if isinstance(d, Bern):
        p = Fraction(eval_expr(s, d.p, bindings))
        if not 0 <= p <= 1:
            raise OracleError(f"bern parameter {p} outside [0, 1]")
        pmf = {True: p, False: 1 - p}
        return Dist({k: v for k, v in pmf.items() if v > 0})
    if isinstance(d, UniformInt):
        size = d.hi - d.lo + 1
        return Dist({k: Fraction(1, size) for k in range(d.lo, d.hi + 1)})
    if isinstance(d, Opaque):
        bound = (bindings or {}).get(d.name.name)
        if not isinstance(bound, (Bern, UniformInt)):
            raise OracleError(f"opaque distribution {d.name.name} needs a concrete binding")
        return eval_dist(s, bound, bindings)
    if isinstance(d, Product):
        parts = [eval_dist(s, c, bindings).pmf for c in d.components]
        pmf: Dict[object, Fraction] = {}
        for combo in itertools.product(*(list(p.items()) for p in parts)):
            outcome = tuple(value for value, _ in combo)
            mass = Fraction(1)
            for _, m in combo:
                mass *= m
            pmf[outcome] = pmf.get(outcome, Fraction(0)) + mass
        return Dist(pmf)
    raise OracleError(f"not a distribution: {d!r}")


# ---------------------------------------------------------------------------
# Interpreter
# ---------------------------------------------------------------------------

class Interpreter:
    def __init__(self, program: Program, bindings: Optional[Mapping[str, object]] = None,
                 policy: Optional[UnrollPolicy] = None):
        """
        Distribution-transformer semantics for one program

        Args:
            program: Checked program
            bindings: Concrete meanings of dist and fun parameters
            policy: Loop truncation policy
        """
        self.program = program
        self.bindings = dict(bindings or {})
        self.policy = policy or UnrollPolicy()
        self.logger = logging.getLogger('Interpreter')
        self.residual = Fraction(0)
        self.iterations = 0

    def run(self, s0: Mapping) -> ResidualDist:
        self.residual = Fraction(0)
        self.iterations = 0
        final = self.exec_block(self.program.body, {State(s0): Fraction(1)})
        self.logger.debug(f"{self.program.name or 'program'}: {len(final)} output states, "
                          f"{self.iterations} iterations, residual {self.residual}")
        return ResidualDist(final, self.residual)

    def exec_block(self, stmts: Iterable[Stmt], dist: Dict[State, Fraction]) -> Dict[State, Fraction]:
        for stmt in stmts:
            if not dist:
                break
            dist = self.exec_stmt(stmt, dist)
        return dist

    def exec_stmt(self, stmt: Stmt, dist: Dict[State, Fraction]) -> Dict[State, Fraction]:
        result: Dict[State, Fraction] = {}

        def emit(state: State, mass: Fraction):
            result[state] = result.get(state, Fraction(0)) + mass

        if isinstance(stmt, Assign):
            for s, m in dist.items():
                emit(s.set(stmt.target, eval_expr(s, stmt.expr, self.bindings)), m)
        elif isinstance(stmt, Sample):
            for s, m in dist.items():
                for outcome, p in eval_dist(s, stmt.dist, self.bindings).pmf.items():
                    values = outcome if isinstance(stmt.dist, Product) else (outcome,)
                    emit(s.update(zip(stmt.targets, values)), m * p)
        elif isinstance(stmt, If):
            taken, other = self.split(dist, stmt.cond)
            for s, m in self.exec_block(stmt.then, taken).items():
                emit(s, m)
            for s, m in self.exec_block(stmt.orelse, other).items():
                emit(s, m)
        elif isinstance(stmt, While):
            return self.exec_loop(stmt, dist)
        elif isinstance(stmt, Return):
            return dist
        return result

    def split(self, dist: Dict[State, Fraction], cond: Expr):
        taken: Dict[State, Fraction] = {}
        other: Dict[State, Fraction] = {}
        for s, m in dist.items():
            (taken if eval_expr(s, cond, self.bindings) else other)[s] = m
        return taken, other

    def exec_loop(self, loop: While, dist: Dict[State, Fraction]) -> Dict[State, Fraction]:
        active, done = self.split(dist, loop.cond)
        executed = 0
        while active:
            mass = sum(active.values(), Fraction(0))
            if mass <= self.policy.residual_target or executed >= self.policy.max_iterations:
                break
            active = self.exec_block(loop.body, active)
            executed += 1
            active, exited = self.split(active, loop.cond)
            for s, m in exited.items():
                done[s] = done.get(s, Fraction(0)) + m
        self.iterations += executed
        remaining = sum(active.values(), Fraction(0))
        if remaining > self.policy.residual_ceiling:
            self.logger.error(f"Loop still holds mass {float(remaining):.3g} after {executed} iterations")
            raise UnrollBudgetError(f"unroll budget exhausted with residual {remaining}", residual=remaining)
        self.residual += remaining
        return done


def interpret(program: Program, s0: Mapping, policy: Optional[UnrollPolicy] = None,
              bindings: Optional[Mapping[str, object]] = None) -> ResidualDist:
    """
    Exact output distribution of a program from a concrete initial state

    Args:
        program: Checked program
        s0: Values of the value-carrying inputs
        policy: Loop truncation policy
        bindings: Concrete dist and fun parameters

    Returns:
        ResidualDist whose masses plus residual sum to exactly 1
    """
    return Interpreter(program, bindings, policy).run(s0)


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

Target = Union[VarId, Tuple[VarId, ...]]
Event = Union[Expr, Callable[[State], bool]]


def _value(s: State, v: Target):
    if isinstance(v, tuple):
        return tuple(s.get(x) for x in v)
    return s.get(v)


def marginal(d: ResidualDist, variables: Iterable[VarId]) -> ResidualDist:
    """Project a distribution onto a set of variables"""
    variables = list(variables)
    pmf: Dict[State, Fraction] = {}
    for s, m in d.pmf.items():
        key = s.project(variables)
        pmf[key] = pmf.get(key, Fraction(0)) + m
    return ResidualDist(pmf, d.residual)


def probability(d: ResidualDist, event: Event, bindings: Optional[Mapping[str, object]] = None) -> Fraction:
    """Mass of the output states satisfying an event"""
    total = Fraction(0)
    for s, m in d.pmf.items():
        holds = event(s) if callable(event) else eval_expr(s, event, bindings)
        if holds:
            total += m
    return total


def value_masses(d: ResidualDist, v: Target) -> Dict[object, Fraction]:
    masses: Dict[object, Fraction] = {}
    for s, m in d.pmf.items():
        key = _value(s, v)
        masses[key] = masses.get(key, Fraction(0)) + m
    return masses


def observed_domain(d: ResidualDist, v: Target) -> List:
    """Values a target takes, booleans as [True, False], others sorted"""
    values = list(value_masses(d, v))
    if values and all(isinstance(x, bool) for x in values):
        return [True, False]
    return sorted(values, key=lambda x: (str(type(x)), x))


def check_uniform(d: ResidualDist, v: Target, domain: Optional[Sequence] = None) -> Verdict:
    """
    Is the target uniform over its domain, up to the residual?

    Args:
        d: Output distribution
        v: Variable or tuple of variables
        domain: Declared support; defaults to the observed values

    Returns:
        Verdict with witness (least likely, most likely) and their gap on failure

    Raises:
        CheckError: the domain is empty
    """
    domain = list(domain) if domain is not None else observed_domain(d, v)
    if not domain:
        raise CheckError(f"uniformity of {v} over an empty domain")
    masses = value_masses(d, v)
    r = d.residual
    expected = (1 - r) / len(domain)
    probs = [(b, masses.get(b, Fraction(0))) for b in domain]
    outside = sum((m for b, m in masses.items() if b not in domain), Fraction(0))
    holds = outside <= r and all(abs(p - expected) <= r for _, p in probs)
    if holds:
        return Verdict('Uniform', True, residual=r)
    low = min(probs, key=lambda bp: bp[1])
    high = max(probs, key=lambda bp: bp[1])
    detail = {'outside_support': outside} if outside else {}
    return Verdict('NotUniform', False, (low[0], high[0]), high[1] - low[1], r, detail=detail)


def check_independent(d: ResidualDist, v: Target, w: Target, v_domain: Optional[Sequence] = None,
                      w_domain: Optional[Sequence] = None) -> Verdict:
    """Does the joint mass of (v, w) factor into the marginals for every value pair?"""
    v_domain = list(v_domain) if v_domain is not None else observed_domain(d, v)
    w_domain = list(w_domain) if w_domain is not None else observed_domain(d, w)
    pv, pw = value_masses(d, v), value_masses(d, w)
    joint = value_masses(d, (v, w) if not isinstance(v, tuple) else v + (w,))
    tolerance = 3 * d.residual
    witness, worst = None, Fraction(-1)
    for a in v_domain:
        for b in w_domain:
            key = (a, b) if not isinstance(v, tuple) else tuple(a) + (b,)
            gap = abs(joint.get(key, Fraction(0)) - pv.get(a, Fraction(0)) * pw.get(b, Fraction(0)))
            if gap > tolerance and gap > worst:
                witness, worst = (a, b), gap
    if witness is None:
        return Verdict('Independent', True, residual=d.residual)
    return Verdict('NotIndependent', False, witness, worst, d.residual)


def check_cond_independent(d: ResidualDist, v: VarId, w: VarId, c: VarId,
                           domains: Optional[Dict[VarId, Sequence]] = None) -> Verdict:
    """
    Conditional independence of v and w given each positive-mass value of c

    Conditioning values with zero mass are skipped and listed in the verdict.
    """
    domains = domains or {}
    v_domain = list(domains.get(v) or observed_domain(d, v))
    w_domain = list(domains.get(w) or observed_domain(d, w))
    c_domain = list(domains.get(c) or observed_domain(d, c))
    pc = value_masses(d, c)
    pvc = value_masses(d, (v, c))
    pwc = value_masses(d, (w, c))
    joint = value_masses(d, (v, w, c))
    tolerance = 3 * d.residual
    skipped = []
    witness, worst = None, Fraction(-1)
    for c0 in c_domain:
        mass = pc.get(c0, Fraction(0))
        if mass == 0:
            skipped.append(c0)
            continue
        for a in v_domain:
            for b in w_domain:
                lhs = joint.get((a, b, c0), Fraction(0)) * mass
                rhs = pvc.get((a, c0), Fraction(0)) * pwc.get((b, c0), Fraction(0))
                gap = abs(lhs - rhs)
                if gap > tolerance and gap > worst:
                    witness, worst = (a, b, c0), gap
    if skipped:
        logger.info(f"Skipped zero-mass conditions {skipped} for {c}")
    if witness is None:
        return Verdict('CondIndependent', True, residual=d.residual, skipped=tuple(skipped))
    return Verdict('NotCondIndependent', False, witness, worst, d.residual, tuple(skipped))


def check_equality(d1: ResidualDist, e1: Event, d2: ResidualDist, e2: Event,
                   bindings: Optional[Mapping[str, object]] = None) -> Verdict:
    """Are the two event probabilities equal up to the combined residual?"""
    p1, p2 = probability(d1, e1, bindings), probability(d2, e2, bindings)
    gap = abs(p1 - p2)
    tolerance = d1.residual + d2.residual
    detail = {'left': p1, 'right': p2}
    if gap <= tolerance:
        return Verdict('Equal', True, residual=tolerance, detail=detail)
    return Verdict('NotEqual', False, (p1, p2), gap, tolerance, detail=detail)


def check_property(program: Program, prop: Property, s0: Mapping, bindings: Optional[Mapping[str, object]] = None,
                   policy: Optional[UnrollPolicy] = None, other: Optional[Program] = None,
                   domains: Optional[Dict[VarId, Sequence]] = None) -> Verdict:
    """
    Run the oracle for one property at one concrete instantiation

    Args:
        program: Program under test
        prop: Property to check
        s0: Concrete inputs
        bindings: Concrete dist and fun parameters
        policy: Loop truncation policy
        other: Program measured by the right-hand event of an equality
        domains: Declared finite domains of the property's variables

    Returns:
        Verdict
    """
    domains = domains or {}
    d = interpret(program, s0, policy, bindings)
    if prop.kind == 'uniform':
        target = prop.targets[0] if len(prop.targets) == 1 else tuple(prop.targets)
        support = prop.support
        if support is not None and len(prop.targets) == 1:
            support = [point[0] for point in support]
        if support is None:
            support = _product_domain(prop.targets, domains) if domains else None
        return check_uniform(d, target, support)
    if prop.kind == 'independent':
        v, w = prop.targets
        return check_independent(d, v, w, domains.get(v), domains.get(w))
    if prop.kind == 'cond-independent':
        v, w, c = prop.targets
        return check_cond_independent(d, v, w, c, domains)
    d2 = interpret(other, s0, policy, bindings) if other is not None else d
    return check_equality(d, prop.events[0], d2, prop.events[1], bindings)


def _product_domain(targets: Sequence[VarId], domains: Dict[VarId, Sequence]):
    if any(t not in domains for t in targets):
        return None
    if len(targets) == 1:
        return list(domains[targets[0]])
    return [tuple(p) for p in itertools.product(*(domains[t] for t in targets))]


def dist_to_json(d: ResidualDist) -> Dict[str, object]:
    """Serialise a distribution with exact rationals as "num/den" strings"""
    entries = []
    for s, m in sorted(d.pmf.items(), key=lambda sm: repr(sm[0])):
        entries.append({
            'state': {str(k): _json_value(v) for k, v in sorted(s.items(), key=lambda kv: kv[0])},
            'mass': format_fraction(m),
        })
    return {'pmf': entries, 'residual': format_fraction(d.residual)}


def _json_value(v: Value):
    if isinstance(v, Fraction):
        return format_fraction(v)
    return v


def format_fraction(q) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"
