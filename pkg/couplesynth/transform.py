"""
Program rewrites applied before constraint generation
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .errors import TransformError
from .parser import fold_int
from .syntax import (
    Assign, Binary, Const, Counter, DistExpr, Expr, If, Ite, Param, Product, Program, Return, Sample,
    Stmt, Unary, Var, VarId, While, assigned_vars, dist_components, expr_vars, rename_expr,
    rename_stmts, tag, tag_dist, untag_dist,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HoistedLoop:
    guard: Expr
    samples: Tuple[VarId, ...]
    dist: Product
    body: Tuple[Stmt, ...]
    counter: Optional[Counter] = None


@dataclass(frozen=True)
class HoistedProgram:
    """
    A program whose samples are merged into single vector samples

    Attributes:
        params: Parameters of the original program
        front: Variables of the front sample, in source order
        front_dist: Product distribution of the front sample
        rest: Deterministic code before the loop (all code when loop-free)
        loop: The loop with its own front sample, if any
        suffix: Deterministic code after the loop
        returns: Returned variables
    """
    params: Tuple[Param, ...]
    front: Tuple[VarId, ...]
    front_dist: Product
    rest: Tuple[Stmt, ...]
    loop: Optional[HoistedLoop] = None
    suffix: Tuple[Stmt, ...] = ()
    returns: Tuple[VarId, ...] = ()
    name: Optional[str] = None

    @property
    def has_loop(self) -> bool:
        return self.loop is not None

    @property
    def inputs(self) -> List[VarId]:
        return [p.var for p in self.params if not p.type.is_symbol]

    @property
    def symbols(self) -> Set[VarId]:
        return {p.var for p in self.params if p.type.is_symbol}

    def to_program(self) -> Program:
        body: List[Stmt] = []
        if self.front:
            body.append(Sample(self.front, self.front_dist))
        body.extend(self.rest)
        if self.loop is not None:
            loop_body: List[Stmt] = []
            if self.loop.samples:
                loop_body.append(Sample(self.loop.samples, self.loop.dist))
            loop_body.extend(self.loop.body)
            body.append(While(self.loop.guard, tuple(loop_body), self.loop.counter))
        body.extend(self.suffix)
        if self.returns:
            body.append(Return(self.returns))
        return Program(self.params, tuple(body), self.name)


def _split_samples(stmts: Sequence[Stmt], where: str) -> Tuple[List[VarId], List[DistExpr], List[Stmt]]:
    samples: List[VarId] = []
    dists: List[DistExpr] = []
    rest: List[Stmt] = []
    for stmt in stmts:
        if isinstance(stmt, Sample):
            samples.extend(stmt.targets)
            dists.extend(dist_components(stmt.dist))
        elif isinstance(stmt, If):
            if _has_sample(stmt.then) or _has_sample(stmt.orelse):
                raise TransformError(f"sampling inside a conditional {where} cannot be hoisted")
            rest.append(stmt)
        elif isinstance(stmt, Return):
            continue
        else:
            rest.append(stmt)
    return samples, dists, rest


def _has_sample(stmts: Sequence[Stmt]) -> bool:
    for stmt in stmts:
        if isinstance(stmt, Sample):
            return True
        if isinstance(stmt, If) and (_has_sample(stmt.then) or _has_sample(stmt.orelse)):
            return True
    return False


def _reads_before_sample(body: Sequence[Stmt]) -> Set[VarId]:
    """Sampled variables a loop body reads before it samples them"""
    seen: Set[VarId] = set()
    early: Set[VarId] = set()
    sampled = {v for stmt in body if isinstance(stmt, Sample) for v in stmt.targets}
    for stmt in body:
        if isinstance(stmt, Sample):
            seen.update(stmt.targets)
            continue
        reads: Set[VarId] = set()
        if isinstance(stmt, Assign):
            reads = expr_vars(stmt.expr)
        elif isinstance(stmt, If):
            reads = expr_vars(stmt.cond) | _stmt_reads(stmt.then) | _stmt_reads(stmt.orelse)
        early |= (reads & sampled) - seen
    return early


def _stmt_reads(stmts: Sequence[Stmt]) -> Set[VarId]:
    found: Set[VarId] = set()
    for stmt in stmts:
        if isinstance(stmt, Assign):
            found |= expr_vars(stmt.expr)
        elif isinstance(stmt, If):
            found |= expr_vars(stmt.cond) | _stmt_reads(stmt.then) | _stmt_reads(stmt.orelse)
    return found


def hoist(program: Program) -> HoistedProgram:
    """
    Merge every sample outside the loop into one front sample, and every
    sample inside the loop into one sample at the front of the body

    Args:
        program: Checked program

    Returns:
        HoistedProgram with the same output distribution

    Raises:
        TransformError: a sample under a conditional, or a loop body reading a
            sampled variable before sampling it
    """
    body = [s for s in program.body if not isinstance(s, Return)]
    loop_index = next((i for i, s in enumerate(body) if isinstance(s, While)), None)
    before = body if loop_index is None else body[:loop_index]
    after = [] if loop_index is None else body[loop_index + 1:]
    samples, dists, rest = _split_samples(before, 'before the loop')
    late_samples, late_dists, suffix = _split_samples(after, 'after the loop')
    samples += late_samples
    dists += late_dists
    loop = None
    if loop_index is not None:
        source = body[loop_index]
        early = _reads_before_sample(source.body)
        if early:
            raise TransformError(f"loop body reads {sorted(map(str, early))[0]} before sampling it")
        loop_samples, loop_dists, loop_rest = _split_samples(source.body, 'in the loop')
        loop = HoistedLoop(source.cond, tuple(loop_samples), Product(tuple(loop_dists)),
                           tuple(loop_rest), source.counter)
    hoisted = HoistedProgram(program.params, tuple(samples), Product(tuple(dists)), tuple(rest), loop,
                             tuple(suffix), program.returns, program.name)
    logger.debug(f"Hoisted {program.name or 'program'}: front arity {len(samples)}"
                 + (f", loop arity {len(loop.samples)}" if loop else ''))
    return hoisted


def _shared_params(left: Program, right: Program) -> Tuple[Param, ...]:
    params = list(left.params)
    for p in right.params:
        if p not in params:
            params.append(p)
    return tuple(params)


def sequence(first: Program, second: Program) -> Program:
    """
    Sequential composition of two variable-disjoint programs

    Raises:
        TransformError: the programs share a state variable
    """
    shared = {p.var for p in first.params if p.type.is_symbol}
    first_vars = (assigned_vars(first.body) | set(first.inputs)) - shared
    second_vars = (assigned_vars(second.body) | set(second.inputs)) - shared
    clash = first_vars & second_vars
    if clash:
        raise TransformError(f"programs share variable {sorted(map(str, clash))[0]}")
    body = [s for s in first.body if not isinstance(s, Return)]
    body += [s for s in second.body if not isinstance(s, Return)]
    returns = first.returns + second.returns
    if returns:
        body.append(Return(returns))
    name = f"{first.name or 'left'};{second.name or 'right'}"
    return Program(_shared_params(first, second), tuple(body), name)


def self_compose(program: Program, first: int = 1, second: int = 2) -> Program:
    """tag(p, 1); tag(p, 2)"""
    return sequence(tag(program, first), tag(program, second))


def _counter_bounds(loop: While) -> Tuple[Expr, Expr]:
    if loop.counter is None:
        raise TransformError("cross product needs counter-driven loops")
    return rename_expr(loop.counter.lo, lambda v: v.base), rename_expr(loop.counter.hi, lambda v: v.base)


def cross_product(first: Program, second: Program) -> Program:
    """
    Synchronise two single-loop programs into one loop running both bodies

    Both loops must come from `for` loops with syntactically identical bounds
    (up to copy tags), so they run the same number of iterations whenever the
    copies agree on their inputs.

    Raises:
        TransformError: non-counter loop, differing bounds or shared variables
    """
    sequence(first, second)
    loops = [p.find_loop() for p in (first, second)]
    if loops[0] is None or loops[1] is None:
        raise TransformError("cross product needs a loop in both programs")
    if _counter_bounds(loops[0]) != _counter_bounds(loops[1]):
        raise TransformError("iteration counts are not syntactically identical")
    parts = []
    for program, loop in zip((first, second), loops):
        body = [s for s in program.body if not isinstance(s, Return)]
        index = body.index(loop)
        parts.append((body[:index], loop, body[index + 1:]))
    (pre1, loop1, post1), (pre2, loop2, post2) = parts
    merged = While(loop1.cond, loop1.body + loop2.body, loop1.counter, loc=loop1.loc)
    hoisted_body = hoist(Program((), (merged,))).loop
    loop_body: List[Stmt] = []
    if hoisted_body.samples:
        loop_body.append(Sample(hoisted_body.samples, hoisted_body.dist))
    loop_body.extend(hoisted_body.body)
    body = pre1 + pre2 + [replace(merged, body=tuple(loop_body))] + post1 + post2
    returns = first.returns + second.returns
    if returns:
        body.append(Return(returns))
    return Program(_shared_params(first, second), tuple(body), f"{first.name or 'left'}x{second.name or 'right'}")


def unroll(program: Program, iterations: Optional[int] = None) -> Program:
    """
    Replace a counter-driven loop with literal bounds by straight-line copies

    Variables the body writes get one version per iteration, named
    `v[k]` after the counter value k; code after the loop reads the last one.

    Args:
        program: Checked program with a `for`-style loop
        iterations: Expected iteration count, checked against the bounds

    Raises:
        TransformError: bounds are not literal, the count disagrees, or the
            body writes a variable under a conditional
    """
    loop = program.find_loop()
    if loop is None:
        return program
    if loop.counter is None:
        raise TransformError("only counter-driven loops can be unrolled")
    lo, hi = fold_int(loop.counter.lo), fold_int(loop.counter.hi)
    if lo is None or hi is None:
        raise TransformError("loop bounds are not literal")
    count = max(0, hi - lo + 1)
    if iterations is not None and iterations != count:
        raise TransformError(f"loop runs {count} iterations, not {iterations}")
    counter = loop.counter.var
    body = [s for s in loop.body if not (isinstance(s, Assign) and s.target == counter)]
    for stmt in body:
        if isinstance(stmt, If) and (assigned_vars(stmt.then) | assigned_vars(stmt.orelse)):
            raise TransformError("cannot unroll a conditional assignment")
    versions: Dict[VarId, VarId] = {}
    unrolled: List[Stmt] = []
    for k in range(lo, hi + 1):
        for stmt in body:
            unrolled.append(_version_stmt(stmt, versions, counter, k))
    index = program.body.index(loop)
    before = [s for s in program.body[:index] if not (isinstance(s, Assign) and s.target == counter)]
    after = rename_stmts(program.body[index + 1:], lambda v: versions.get(v, v))
    return Program(program.params, tuple(before + unrolled) + after, program.name)


def _version_stmt(stmt: Stmt, versions: Dict[VarId, VarId], counter: VarId, k: int) -> Stmt:
    def read(e: Expr) -> Expr:
        return _substitute(e, {counter: Const(k)}, versions)

    def write(v: VarId) -> VarId:
        renamed = VarId(f"{v.name}[{k}]", v.tag)
        versions[v] = renamed
        return renamed

    if isinstance(stmt, Assign):
        expr = read(stmt.expr)
        return Assign(write(stmt.target), expr, loc=stmt.loc)
    if isinstance(stmt, Sample):
        dist = stmt.dist
        return Sample(tuple(write(v) for v in stmt.targets), dist, loc=stmt.loc)
    if isinstance(stmt, If):
        return If(read(stmt.cond), stmt.then, stmt.orelse, loc=stmt.loc)
    return stmt


def _substitute(e: Expr, values: Dict[VarId, Expr], versions: Dict[VarId, VarId]) -> Expr:
    if isinstance(e, Var):
        if e.var in values:
            return values[e.var]
        return Var(versions.get(e.var, e.var))
    if isinstance(e, Unary):
        return Unary(e.op, _substitute(e.arg, values, versions))
    if isinstance(e, Binary):
        return Binary(e.op, _substitute(e.left, values, versions), _substitute(e.right, values, versions))
    if isinstance(e, Ite):
        return Ite(_substitute(e.cond, values, versions), _substitute(e.then, values, versions),
                   _substitute(e.orelse, values, versions))
    return rename_expr(e, lambda v: versions.get(v, v))


PAD_PREFIX = 'pad$'


def pad_site(left: Tuple[VarId, ...], left_dist: Product, right: Tuple[VarId, ...], right_dist: Product,
             left_tag: Optional[int], right_tag: Optional[int], symbols: Set[VarId] = frozenset()):
    """
    Equalise the arity of two vector samples with dummy samples

    The shorter side is extended with fresh variables drawn from the
    distributions of the longer side's surplus components.

    Returns:
        (left, left_dist, right, right_dist) of equal arity
    """
    left_parts, right_parts = list(left_dist.components), list(right_dist.components)
    left, right = list(left), list(right)
    while len(left) < len(right):
        k = len(left)
        left.append(VarId(f"{PAD_PREFIX}{k + 1}", left_tag))
        left_parts.append(tag_dist(untag_dist(right_parts[k]), left_tag, symbols))
    while len(right) < len(left):
        k = len(right)
        right.append(VarId(f"{PAD_PREFIX}{k + 1}", right_tag))
        right_parts.append(tag_dist(untag_dist(left_parts[k]), right_tag, symbols))
    return tuple(left), Product(tuple(left_parts)), tuple(right), Product(tuple(right_parts))


def pad_samples(left: HoistedProgram, right: HoistedProgram, left_tag: Optional[int] = None,
                right_tag: Optional[int] = None) -> Tuple[HoistedProgram, HoistedProgram]:
    """Pad the front samples (and loop samples) of two hoisted programs to equal arity"""
    symbols = left.symbols | right.symbols
    front = pad_site(left.front, left.front_dist, right.front, right.front_dist, left_tag, right_tag, symbols)
    left = replace(left, front=front[0], front_dist=front[1])
    right = replace(right, front=front[2], front_dist=front[3])
    if left.loop is not None and right.loop is not None:
        site = pad_site(left.loop.samples, left.loop.dist, right.loop.samples, right.loop.dist,
                        left_tag, right_tag, symbols)
        left = replace(left, loop=replace(left.loop, samples=site[0], dist=site[1]))
        right = replace(right, loop=replace(right.loop, samples=site[2], dist=site[3]))
    return left, right
