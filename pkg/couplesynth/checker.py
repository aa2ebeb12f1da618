"""
Static discipline: loop shape, single assignment, distribution inputs, types
"""
import logging
from fractions import Fraction
from typing import Dict, Iterable, Set

from .errors import CheckError
from .syntax import (
    BOOL, INT, REAL, Assign, Bern, Binary, Call, Const, DistExpr, Expr, If, Ite, Opaque, Product,
    Program, Return, Sample, Stmt, Type, Unary, Var, VarId, While, dist_components,
    dist_result_type, dist_vars, join_types,
)

logger = logging.getLogger(__name__)

TypeEnv = Dict[VarId, Type]


def _where(stmt) -> str:
    loc = getattr(stmt, 'loc', None)
    return f" (line {loc[0]})" if loc else ''


class TypeChecker:
    """Infers expression types against a growing environment"""

    def __init__(self, program: Program):
        self.program = program
        self.env: TypeEnv = {p.var: p.type for p in program.params}

    def lookup(self, v: VarId) -> Type:
        if v in self.env:
            return self.env[v]
        raise CheckError(f"unknown variable {v}")

    def expr(self, e: Expr) -> Type:
        if isinstance(e, Const):
            if isinstance(e.value, bool):
                return BOOL
            if isinstance(e.value, int):
                return INT
            return REAL
        if isinstance(e, Var):
            t = self.lookup(e.var)
            if t.is_symbol:
                raise CheckError(f"{e.var} is a {t.kind} parameter, not a value")
            return t
        if isinstance(e, Unary):
            t = self.expr(e.arg)
            if e.op == 'not':
                self.expect_bool(t, e)
                return BOOL
            self.expect_numeric(t, e)
            return INT if t.is_integral else REAL
        if isinstance(e, Binary):
            left, right = self.expr(e.left), self.expr(e.right)
            if e.op in ('and', 'or'):
                self.expect_bool(left, e)
                self.expect_bool(right, e)
                return BOOL
            if e.op in ('=', '!='):
                if join_types(left, right) is None:
                    raise CheckError(f"type mismatch: cannot compare {left} with {right}")
                return BOOL
            self.expect_numeric(left, e)
            self.expect_numeric(right, e)
            if e.op in ('<', '<=', '>', '>='):
                return BOOL
            return INT if left.is_integral and right.is_integral else REAL
        if isinstance(e, Ite):
            self.expect_bool(self.expr(e.cond), e)
            then, orelse = self.expr(e.then), self.expr(e.orelse)
            joined = join_types(then, orelse)
            if joined is None:
                raise CheckError(f"type mismatch: ite branches {then} and {orelse}")
            return INT if joined.kind == 'range' else joined
        if isinstance(e, Call):
            fn = self.lookup(e.fn)
            if fn.kind != 'fun':
                raise CheckError(f"{e.fn} is not a function parameter")
            if len(fn.args) != len(e.args):
                raise CheckError(f"{e.fn} expects {len(fn.args)} arguments, got {len(e.args)}")
            for expected, arg in zip(fn.args, e.args):
                if join_types(expected, self.expr(arg)) is None:
                    raise CheckError(f"type mismatch: argument of {e.fn} should be {expected}")
            return fn.elem
        raise CheckError(f"not an expression: {e!r}")

    def expect_bool(self, t: Type, e: Expr):
        if t.kind != 'bool':
            raise CheckError(f"type mismatch: expected bool, got {t}")

    def expect_numeric(self, t: Type, e: Expr):
        if not t.is_numeric:
            raise CheckError(f"type mismatch: expected a number, got {t}")

    def bind(self, v: VarId, t: Type, stmt):
        if v in self.env:
            joined = join_types(self.env[v], t)
            if joined is None:
                raise CheckError(f"type mismatch: {v} is {self.env[v]} but assigned {t}{_where(stmt)}")
            self.env[v] = joined
        else:
            self.env[v] = t

    def dist(self, d: DistExpr, stmt) -> None:
        if isinstance(d, Bern):
            self.expect_numeric(self.expr(d.p), d.p)
            if isinstance(d.p, Const) and not 0 <= Fraction(d.p.value) <= 1:
                raise CheckError(f"bern parameter {d.p.value} outside [0, 1]{_where(stmt)}")
        elif isinstance(d, Opaque):
            t = self.lookup(d.name)
            if t.kind != 'dist':
                raise CheckError(f"{d.name} is not a distribution parameter")
        elif isinstance(d, Product):
            for c in d.components:
                self.dist(c, stmt)


def check(program: Program) -> TypeEnv:
    """
    Verify a program's static discipline and infer variable types

    Args:
        program: Parsed program

    Returns:
        Map from every variable (parameters first) to its type

    Raises:
        CheckError: loop nesting, SSA violation, non-input distribution
            argument or type mismatch
    """
    _check_loop_shape(program)
    inputs = {p.var for p in program.params}
    _check_dist_inputs(program.body, inputs)
    _check_single_assignment(program, inputs)
    checker = TypeChecker(program)
    _type_stmts(checker, program.body)
    logger.debug(f"Checked {program.name or 'program'}: {len(checker.env)} variables")
    return checker.env


def _check_loop_shape(program: Program):
    loops = 0
    for i, stmt in enumerate(program.body):
        if isinstance(stmt, While):
            loops += 1
            if _contains_loop(stmt.body):
                raise CheckError(f"nested loop{_where(stmt)}")
        elif isinstance(stmt, If) and (_contains_loop(stmt.then) or _contains_loop(stmt.orelse)):
            raise CheckError(f"loop nested in a conditional{_where(stmt)}")
        elif isinstance(stmt, Return) and i != len(program.body) - 1:
            raise CheckError(f"return must be the last statement{_where(stmt)}")
    if loops > 1:
        raise CheckError(f"at most one loop is supported, found {loops}")
    for stmt in program.body:
        if isinstance(stmt, (If, While)) and _contains_return(stmt):
            raise CheckError(f"return inside a block{_where(stmt)}")


def _contains_loop(stmts: Iterable[Stmt]) -> bool:
    for stmt in stmts:
        if isinstance(stmt, While):
            return True
        if isinstance(stmt, If) and (_contains_loop(stmt.then) or _contains_loop(stmt.orelse)):
            return True
    return False


def _contains_return(stmt) -> bool:
    children = stmt.body if isinstance(stmt, While) else stmt.then + stmt.orelse
    for child in children:
        if isinstance(child, Return) or (isinstance(child, (If, While)) and _contains_return(child)):
            return True
    return False


def _check_dist_inputs(stmts: Iterable[Stmt], inputs: Set[VarId]):
    for stmt in stmts:
        if isinstance(stmt, Sample):
            outside = sorted(dist_vars(stmt.dist) - inputs)
            if outside:
                raise CheckError(f"distribution mentions non-input {outside[0]}{_where(stmt)}")
        elif isinstance(stmt, If):
            _check_dist_inputs(stmt.then, inputs)
            _check_dist_inputs(stmt.orelse, inputs)
        elif isinstance(stmt, While):
            _check_dist_inputs(stmt.body, inputs)


def _check_single_assignment(program: Program, inputs: Set[VarId]):
    """
    Every variable is written at most once along any path of each region

    The regions are the code before the loop, one loop iteration and the code
    after the loop. Loop-carried variables may be written before the loop and
    once per iteration; the code after the loop only introduces new names.
    """
    before, loop, after = split_at_loop(program.body)
    written = _assign_once(before, set(), inputs)
    carried: Set[VarId] = set()
    if loop is not None:
        carried = _assign_once(loop.body, set(), inputs)
    _assign_once(after, written | carried, inputs)


def split_at_loop(body):
    for i, stmt in enumerate(body):
        if isinstance(stmt, While):
            return tuple(body[:i]), stmt, tuple(body[i + 1:])
    return tuple(body), None, ()


def _assign_once(stmts: Iterable[Stmt], written: Set[VarId], inputs: Set[VarId]) -> Set[VarId]:
    written = set(written)
    for stmt in stmts:
        targets = ()
        if isinstance(stmt, Assign):
            targets = (stmt.target,)
        elif isinstance(stmt, Sample):
            targets = stmt.targets
            if len(set(targets)) != len(targets):
                raise CheckError(f"SSA violation: repeated sample target{_where(stmt)}")
        elif isinstance(stmt, If):
            then = _assign_once(stmt.then, written, inputs)
            orelse = _assign_once(stmt.orelse, written, inputs)
            written = then | orelse
            continue
        for v in targets:
            if v in inputs:
                raise CheckError(f"SSA violation: input {v} is assigned{_where(stmt)}")
            if v in written:
                raise CheckError(f"SSA violation: {v} assigned twice{_where(stmt)}")
            written.add(v)
    return written


def _type_stmts(checker: TypeChecker, stmts: Iterable[Stmt]):
    for stmt in stmts:
        if isinstance(stmt, Assign):
            checker.bind(stmt.target, checker.expr(stmt.expr), stmt)
        elif isinstance(stmt, Sample):
            checker.dist(stmt.dist, stmt)
            components = dist_components(stmt.dist)
            if len(components) != len(stmt.targets):
                raise CheckError(
                    f"sample of {len(stmt.targets)} variables from a product of {len(components)}{_where(stmt)}")
            for v, component in zip(stmt.targets, components):
                checker.bind(v, dist_result_type(component), stmt)
        elif isinstance(stmt, If):
            checker.expect_bool(checker.expr(stmt.cond), stmt.cond)
            _type_stmts(checker, stmt.then)
            _type_stmts(checker, stmt.orelse)
        elif isinstance(stmt, While):
            # guards may read variables first written in the body
            _type_stmts(checker, stmt.body)
            checker.expect_bool(checker.expr(stmt.cond), stmt.cond)
        elif isinstance(stmt, Return):
            for v in stmt.values:
                checker.lookup(v)


def value_type(env: TypeEnv, v: VarId) -> Type:
    """Type of a possibly tagged variable in an environment of untagged names"""
    if v in env:
        return env[v]
    if v.base in env:
        return env[v.base]
    raise CheckError(f"unknown variable {v}")
