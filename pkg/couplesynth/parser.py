"""
Parser for .cpl sources: property headers, oracle lines and programs
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, VisitError

from .errors import CoupleSynthError, ParseError
from .syntax import (
    BOOL, INT, REAL, Assign, Bern, Binary, Call, Const, Counter, DistExpr, Expr, If, Ite, Opaque,
    Param, Product, Program, Property, Return, Sample, Stmt, Task, Type, Unary, UniformInt, Var,
    VarId, While, dist_type, expr_vars, finite_range, fun_type,
)

logger = logging.getLogger(__name__)

GRAMMAR = r"""
    start: header* body

    header: PROP property                       -> prop_header
          | ORACLE binding ("," binding)*       -> oracle_header

    property: "uniform" target ("over" "{" value_tuple ("," value_tuple)* "}")?  -> uniform_prop
            | "independent" varname varname                                    -> independent_prop
            | "cond-independent" varname varname "given" varname                -> cond_independent_prop
            | "equal" "[" expr "]" "[" expr "]"                                 -> equal_prop

    target: varname                             -> single_target
          | "(" varname ("," varname)* ")"      -> tuple_target

    varname: NAME ("[" INT "]")?

    value_tuple: literal
               | "(" literal ("," literal)* ")"

    literal: "true"                             -> lit_true
           | "false"                            -> lit_false
           | int_lit
           | RATIONAL                           -> lit_rational

    int_lit: INT                                -> lit_int
           | "-" INT                            -> lit_neg_int

    binding: NAME "=" binding_value
    ?binding_value: literal
                  | "-" RATIONAL                -> lit_neg_rational
                  | "bern" "(" literal ")"      -> bern_value
                  | "uniformInt" "(" int_lit "," int_lit ")"  -> uniform_value
                  | BUILTIN                     -> builtin_value

    body: program
        | stmt*                                 -> bare_body

    program: "program" NAME "(" (param ("," param)*)? ")" block

    param: NAME ("@" INT)? ":" type

    type: "bool"                                -> bool_type
        | "int"                                 -> int_type
        | "real"                                -> real_type
        | "int" "[" int_lit ".." int_lit "]"    -> range_type
        | "dist" type                           -> dist_param_type
        | "fun" "(" type ("," type)* ")" "->" type  -> fun_param_type

    block: "{" stmt* "}"

    ?stmt: lvalue "<-" expr                     -> assign
         | lvalue ("," lvalue)* "~" dist        -> sample
         | "if" expr block ("else" block)?      -> if_stmt
         | "while" expr block                   -> while_stmt
         | "for" NAME "in" expr ".." expr block -> for_stmt
         | "return" "(" lvalue ("," lvalue)* ")" -> return_stmt
         | ";"                                  -> empty_stmt

    lvalue: NAME ("@" INT)?                     -> scalar_ref
          | NAME "[" expr "]" ("@" INT)?        -> array_ref

    dist: dist_atom ("*" dist_atom)*
    dist_atom: "bern" "(" expr ")"              -> bern
             | "uniformInt" "(" int_lit "," int_lit ")"  -> uniform_int
             | NAME "(" (expr ("," expr)*)? ")" -> unknown_dist
             | NAME                             -> dist_ref

    ?expr: or_expr
    ?or_expr: and_expr
            | or_expr "or" and_expr             -> or_
    ?and_expr: not_expr
             | and_expr "and" not_expr          -> and_
    ?not_expr: cmp_expr
             | "not" not_expr                   -> not_
    ?cmp_expr: sum_expr
             | sum_expr "=" sum_expr            -> eq
             | sum_expr "!=" sum_expr           -> ne
             | sum_expr "<" sum_expr            -> lt
             | sum_expr "<=" sum_expr           -> le
             | sum_expr ">" sum_expr            -> gt
             | sum_expr ">=" sum_expr           -> ge
    ?sum_expr: prod_expr
             | sum_expr "+" prod_expr           -> add
             | sum_expr "-" prod_expr           -> sub
    ?prod_expr: unary_expr
              | prod_expr "*" unary_expr        -> mul
    ?unary_expr: atom
               | "-" unary_expr                 -> neg
    ?atom: INT                                  -> int_const
         | RATIONAL                             -> rational_const
         | "true"                               -> true_const
         | "false"                              -> false_const
         | "ite" "(" expr "," expr "," expr ")" -> ite
         | NAME "(" (expr ("," expr)*)? ")"     -> call
         | lvalue
         | "(" expr ")"

    PROP.3: "prop:"
    ORACLE.3: "oracle:"
    BUILTIN.2: /(and|or|xor|not|eq)\b/
    RATIONAL.2: /\d+\/\d+/
    INT: /\d+/
    NAME: /[A-Za-z_][A-Za-z0-9_]*'*/
    COMMENT: /#[^\n]*/

    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

COMPARISONS = {'eq': '=', 'ne': '!=', 'lt': '<', 'le': '<=', 'gt': '>', 'ge': '>='}


# ---------------------------------------------------------------------------
# Intermediate nodes, resolved away before a Program is returned
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Name:
    name: str
    tag: Optional[int] = None


@dataclass(frozen=True)
class _ArrayRef:
    name: str
    index: Expr
    tag: Optional[int] = None


@dataclass(frozen=True)
class _DistRef:
    name: str


@dataclass(frozen=True)
class _For:
    var: str
    lo: Expr
    hi: Expr
    body: Tuple
    loc: Optional[Tuple[int, int]] = None


def _loc(meta) -> Optional[Tuple[int, int]]:
    if getattr(meta, 'empty', True):
        return None
    return (meta.line, meta.column)


class CplTransformer(Transformer):
    """Builds raw AST nodes; names stay unresolved until `_Resolver` runs"""

    # headers ---------------------------------------------------------------

    def start(self, children):
        return children[:-1], children[-1]

    def prop_header(self, children):
        return ('prop', children[1])

    def oracle_header(self, children):
        return ('oracle', dict(children[1:]))

    def binding(self, children):
        return (str(children[0]), children[1])

    def uniform_prop(self, children):
        target, support = children[0], children[1:]
        return ('uniform', target, tuple(support) if support else None)

    def independent_prop(self, children):
        return ('independent', tuple(children), None)

    def cond_independent_prop(self, children):
        return ('cond-independent', tuple(children), None)

    def equal_prop(self, children):
        return ('equal', (), tuple(children))

    def single_target(self, children):
        return (children[0],)

    def tuple_target(self, children):
        return tuple(children)

    def varname(self, children):
        if len(children) == 2:
            return f"{children[0]}[{int(children[1])}]"
        return str(children[0])

    def value_tuple(self, children):
        return tuple(children)

    def lit_true(self, _):
        return True

    def lit_false(self, _):
        return False

    def lit_int(self, children):
        return int(children[0])

    def lit_neg_int(self, children):
        return -int(children[0])

    def lit_rational(self, children):
        return Fraction(str(children[0]))

    def lit_neg_rational(self, children):
        return -Fraction(str(children[0]))

    def literal(self, children):
        return children[0]

    def bern_value(self, children):
        return Bern(Const(children[0]))

    def uniform_value(self, children):
        return UniformInt(children[0], children[1])

    def builtin_value(self, children):
        return ('builtin', str(children[0]))

    # programs --------------------------------------------------------------

    def bare_body(self, children):
        return (None, (), tuple(c for c in children if c is not None))

    def body(self, children):
        return children[0]

    def program(self, children):
        name = str(children[0])
        params = tuple(children[1:-1])
        return (name, params, children[-1])

    def param(self, children):
        tag = int(children[1]) if len(children) == 3 else None
        return Param(VarId(str(children[0]), tag), children[-1])

    def bool_type(self, _):
        return BOOL

    def int_type(self, _):
        return INT

    def real_type(self, _):
        return REAL

    def range_type(self, children):
        lo, hi = children
        if lo > hi:
            raise ParseError(f"empty range int[{lo}..{hi}]")
        return finite_range(lo, hi)

    def dist_param_type(self, children):
        return dist_type(children[0])

    def fun_param_type(self, children):
        return fun_type(children[:-1], children[-1])

    def block(self, children):
        return tuple(c for c in children if c is not None)

    # statements ------------------------------------------------------------

    @v_args(meta=True)
    def assign(self, meta, children):
        return Assign(children[0], children[1], loc=_loc(meta))

    @v_args(meta=True)
    def sample(self, meta, children):
        return Sample(tuple(children[:-1]), children[-1], loc=_loc(meta))

    @v_args(meta=True)
    def if_stmt(self, meta, children):
        orelse = children[2] if len(children) > 2 else ()
        return If(children[0], children[1], orelse, loc=_loc(meta))

    @v_args(meta=True)
    def while_stmt(self, meta, children):
        return While(children[0], children[1], loc=_loc(meta))

    @v_args(meta=True)
    def for_stmt(self, meta, children):
        return _For(str(children[0]), children[1], children[2], children[3], loc=_loc(meta))

    @v_args(meta=True)
    def return_stmt(self, meta, children):
        return Return(tuple(children), loc=_loc(meta))

    def empty_stmt(self, _):
        return None

    def scalar_ref(self, children):
        tag = int(children[1]) if len(children) == 2 else None
        return _Name(str(children[0]), tag)

    def array_ref(self, children):
        tag = int(children[2]) if len(children) == 3 else None
        return _ArrayRef(str(children[0]), children[1], tag)

    # distributions -----------------------------------------------------------

    def dist(self, children):
        if len(children) == 1:
            return children[0]
        return Product(tuple(children))

    def bern(self, children):
        return Bern(children[0])

    def uniform_int(self, children):
        lo, hi = children
        if lo > hi:
            raise ParseError(f"empty support uniformInt({lo}, {hi})")
        return UniformInt(lo, hi)

    @v_args(meta=True)
    def unknown_dist(self, meta, children):
        loc = _loc(meta) or (None, None)
        raise ParseError(f"unknown distribution {children[0]}", *loc)

    def dist_ref(self, children):
        return _DistRef(str(children[0]))

    # expressions -------------------------------------------------------------

    def or_(self, children):
        return Binary('or', children[0], children[1])

    def and_(self, children):
        return Binary('and', children[0], children[1])

    def not_(self, children):
        return Unary('not', children[0])

    def add(self, children):
        return Binary('+', children[0], children[1])

    def sub(self, children):
        return Binary('-', children[0], children[1])

    def mul(self, children):
        return Binary('*', children[0], children[1])

    def neg(self, children):
        arg = children[0]
        if isinstance(arg, Const) and not isinstance(arg.value, bool):
            return Const(-arg.value)
        return Unary('neg', arg)

    def int_const(self, children):
        return Const(int(children[0]))

    def rational_const(self, children):
        return Const(Fraction(str(children[0])))

    def true_const(self, _):
        return Const(True)

    def false_const(self, _):
        return Const(False)

    def ite(self, children):
        return Ite(children[0], children[1], children[2])

    def call(self, children):
        return Call(VarId(str(children[0])), tuple(children[1:]))


def _make_comparison(op):
    def build(self, children):
        return Binary(op, children[0], children[1])
    return build


for _rule, _op in COMPARISONS.items():
    setattr(CplTransformer, _rule, _make_comparison(_op))


_PARSER = Lark(GRAMMAR, parser='lalr', propagate_positions=True, maybe_placeholders=False)


# ---------------------------------------------------------------------------
# Resolution: arrays, for loops, distribution references, scoping
# ---------------------------------------------------------------------------

def fold_int(e: Expr) -> Optional[int]:
    """Evaluate a closed integer expression, None if it is not one"""
    if isinstance(e, Const) and isinstance(e.value, int) and not isinstance(e.value, bool):
        return e.value
    if isinstance(e, Unary) and e.op == 'neg':
        inner = fold_int(e.arg)
        return None if inner is None else -inner
    if isinstance(e, Binary) and e.op in ('+', '-', '*'):
        left, right = fold_int(e.left), fold_int(e.right)
        if left is None or right is None:
            return None
        return {'+': left + right, '-': left - right, '*': left * right}[e.op]
    return None


class _Resolver:
    """
    Turns raw transformer output into a Program

    Literal-bound `for` loops that index arrays by their counter are unrolled
    into straight-line code, renaming scalars they reassign to one version per
    iteration; every other `for` becomes a counter-driven `while`.
    """

    def __init__(self, params: Sequence[Param]):
        self.symbols: Dict[str, Type] = {p.var.name: p.type for p in params if p.type.is_symbol}
        self.versions: Dict[str, VarId] = {}

    def var(self, name: str, tag: Optional[int], env: Dict[str, int]) -> Expr:
        if tag is None and name in env:
            return Const(env[name])
        if tag is None and name in self.versions:
            return Var(self.versions[name])
        return Var(VarId(name, tag))

    def array_var(self, ref: _ArrayRef, env: Dict[str, int]) -> VarId:
        index = fold_int(self.expr(ref.index, env))
        if index is None:
            raise ParseError(f"array index of {ref.name} must be a literal or an unrolled loop counter")
        return VarId(f"{ref.name}[{index}]", ref.tag)

    def expr(self, e, env: Dict[str, int]) -> Expr:
        if isinstance(e, _Name):
            return self.var(e.name, e.tag, env)
        if isinstance(e, _ArrayRef):
            return Var(self.array_var(e, env))
        if isinstance(e, Const):
            return e
        if isinstance(e, Unary):
            arg = self.expr(e.arg, env)
            if e.op == 'neg' and isinstance(arg, Const) and not isinstance(arg.value, bool):
                return Const(-arg.value)
            return Unary(e.op, arg)
        if isinstance(e, Binary):
            return Binary(e.op, self.expr(e.left, env), self.expr(e.right, env))
        if isinstance(e, Ite):
            return Ite(self.expr(e.cond, env), self.expr(e.then, env), self.expr(e.orelse, env))
        if isinstance(e, Call):
            kind = self.symbols.get(e.fn.name)
            if kind is None or kind.kind != 'fun':
                raise ParseError(f"unknown function {e.fn.name}")
            return Call(e.fn, tuple(self.expr(a, env) for a in e.args))
        raise ParseError(f"unexpected expression {e!r}")

    def dist(self, d, env: Dict[str, int]) -> DistExpr:
        if isinstance(d, _DistRef):
            kind = self.symbols.get(d.name)
            if kind is None or kind.kind != 'dist':
                raise ParseError(f"unknown distribution {d.name}")
            return Opaque(VarId(d.name), kind.elem)
        if isinstance(d, Bern):
            return Bern(self.expr(d.p, env))
        if isinstance(d, Product):
            return Product(tuple(self.dist(c, env) for c in d.components))
        return d

    def target(self, t, env: Dict[str, int], version: Optional[int] = None) -> VarId:
        if isinstance(t, _ArrayRef):
            return self.array_var(t, env)
        if t.name in env:
            raise ParseError(f"cannot assign loop counter {t.name}")
        if version is not None and t.tag is None:
            renamed = VarId(f"{t.name}[{version}]")
            self.versions[t.name] = renamed
            return renamed
        return VarId(t.name, t.tag)

    def stmts(self, stmts, env: Dict[str, int], version: Optional[int] = None) -> List[Stmt]:
        result: List[Stmt] = []
        for stmt in stmts:
            if isinstance(stmt, Assign):
                expr = self.expr(stmt.expr, env)
                result.append(Assign(self.target(stmt.target, env, version), expr, loc=stmt.loc))
            elif isinstance(stmt, Sample):
                dist = self.dist(stmt.dist, env)
                targets = tuple(self.target(t, env, version) for t in stmt.targets)
                result.append(Sample(targets, dist, loc=stmt.loc))
            elif isinstance(stmt, If):
                if version is not None:
                    for written in _scalar_targets(stmt.then) | _scalar_targets(stmt.orelse):
                        line, column = stmt.loc or (None, None)
                        raise ParseError(f"cannot unroll conditional assignment to {written}", line, column)
                result.append(If(self.expr(stmt.cond, env), tuple(self.stmts(stmt.then, env, version)),
                                 tuple(self.stmts(stmt.orelse, env, version)), loc=stmt.loc))
            elif isinstance(stmt, While):
                result.append(While(self.expr(stmt.cond, env), tuple(self.stmts(stmt.body, env)), loc=stmt.loc))
            elif isinstance(stmt, _For):
                result.extend(self.for_loop(stmt, env))
            elif isinstance(stmt, Return):
                values = []
                for v in stmt.values:
                    resolved = self.expr(v, env)
                    values.append(resolved.var)
                result.append(Return(tuple(values), loc=stmt.loc))
        return result

    def for_loop(self, loop: _For, env: Dict[str, int]) -> List[Stmt]:
        lo = self.expr(loop.lo, env)
        hi = self.expr(loop.hi, env)
        lo_value, hi_value = fold_int(lo), fold_int(hi)
        if lo_value is not None and hi_value is not None and _indexes_by(loop.body, loop.var):
            unrolled: List[Stmt] = []
            for k in range(lo_value, hi_value + 1):
                unrolled.extend(self.stmts(loop.body, {**env, loop.var: k}, version=k))
            return unrolled
        counter = VarId(loop.var)
        body = tuple(self.stmts(loop.body, env))
        step = Assign(counter, Binary('+', Var(counter), Const(1)), loc=loop.loc)
        return [
            Assign(counter, lo, loc=loop.loc),
            While(Binary('<=', Var(counter), hi), body + (step,), Counter(counter, lo, hi), loc=loop.loc),
        ]


def _scalar_targets(stmts) -> Set[str]:
    found: Set[str] = set()
    for stmt in stmts:
        if isinstance(stmt, Assign) and isinstance(stmt.target, _Name):
            found.add(stmt.target.name)
        elif isinstance(stmt, Sample):
            found.update(t.name for t in stmt.targets if isinstance(t, _Name))
        elif isinstance(stmt, If):
            found |= _scalar_targets(stmt.then) | _scalar_targets(stmt.orelse)
    return found


def _indexes_by(stmts, counter: str) -> bool:
    """True when some array reference in the statements mentions `counter`"""

    def mentions(e) -> bool:
        if isinstance(e, _ArrayRef):
            return _mentions_name(e.index, counter) or mentions(e.index)
        if isinstance(e, Unary):
            return mentions(e.arg)
        if isinstance(e, Binary):
            return mentions(e.left) or mentions(e.right)
        if isinstance(e, Ite):
            return mentions(e.cond) or mentions(e.then) or mentions(e.orelse)
        if isinstance(e, Call):
            return any(mentions(a) for a in e.args)
        if isinstance(e, Bern):
            return mentions(e.p)
        if isinstance(e, Product):
            return any(mentions(c) for c in e.components)
        return False

    for stmt in stmts:
        if isinstance(stmt, Assign) and (mentions(stmt.target) or mentions(stmt.expr)):
            return True
        if isinstance(stmt, Sample) and (any(mentions(t) for t in stmt.targets) or mentions(stmt.dist)):
            return True
        if isinstance(stmt, If) and (mentions(stmt.cond) or _indexes_by(stmt.then, counter)
                                     or _indexes_by(stmt.orelse, counter)):
            return True
    return False


def _mentions_name(e, name: str) -> bool:
    if isinstance(e, _Name):
        return e.name == name and e.tag is None
    if isinstance(e, Unary):
        return _mentions_name(e.arg, name)
    if isinstance(e, Binary):
        return _mentions_name(e.left, name) or _mentions_name(e.right, name)
    return False


def check_scope(program: Program):
    """
    Reject reads of variables that are not definitely assigned

    Raises:
        ParseError: naming the first variable used before its definition
    """
    def require(variables, scope, loc):
        for v in sorted(variables):
            if v not in scope:
                line, column = loc or (None, None)
                raise ParseError(f"use before definition: {v}", line, column)

    def walk(stmts, scope: Set[VarId]) -> Set[VarId]:
        for stmt in stmts:
            if isinstance(stmt, Assign):
                require(expr_vars(stmt.expr), scope, stmt.loc)
                scope.add(stmt.target)
            elif isinstance(stmt, Sample):
                require(_dist_reads(stmt.dist), scope, stmt.loc)
                scope.update(stmt.targets)
            elif isinstance(stmt, If):
                require(expr_vars(stmt.cond), scope, stmt.loc)
                then_scope = walk(stmt.then, set(scope))
                else_scope = walk(stmt.orelse, set(scope))
                scope |= then_scope & else_scope
            elif isinstance(stmt, While):
                require(expr_vars(stmt.cond), scope, stmt.loc)
                walk(stmt.body, set(scope))
            elif isinstance(stmt, Return):
                require(stmt.values, scope, stmt.loc)
        return scope

    walk(program.body, {p.var for p in program.params})


def _dist_reads(d: DistExpr) -> Set[VarId]:
    if isinstance(d, Bern):
        return expr_vars(d.p)
    if isinstance(d, Opaque):
        return {d.name}
    if isinstance(d, Product):
        found: Set[VarId] = set()
        for c in d.components:
            found |= _dist_reads(c)
        return found
    return set()


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def _run_parser(text: str):
    try:
        return CplTransformer().transform(_PARSER.parse(text))
    except VisitError as e:
        if isinstance(e.orig_exc, CoupleSynthError):
            raise e.orig_exc
        raise ParseError(f"malformed source: {str(e.orig_exc)}")
    except UnexpectedEOF:
        raise ParseError("unexpected end of input")
    except UnexpectedCharacters as e:
        raise ParseError(f"unexpected character {e.char!r}", e.line, e.column)
    except UnexpectedInput as e:
        token = getattr(e, 'token', None)
        shown = f" {str(token)!r}" if token is not None else ''
        raise ParseError(f"syntax error at{shown}", e.line, e.column)


def _build_program(raw) -> Tuple[Program, _Resolver]:
    name, params, body = raw
    resolver = _Resolver(params)
    program = Program(tuple(params), tuple(resolver.stmts(body, {})), name)
    check_scope(program)
    return program, resolver


def parse(text: str) -> Program:
    """
    Parse a .cpl program; property and oracle headers are accepted and ignored

    Args:
        text: Source text

    Returns:
        Program with source locations on statements

    Raises:
        ParseError: syntax, unknown distribution or scoping errors
    """
    _, raw = _run_parser(text)
    return _build_program(raw)[0]


def parse_expr(text: str, program: Optional[Program] = None) -> Expr:
    """Parse a standalone event expression, e.g. for `--event` options"""
    headers, _ = _run_parser(f"prop: equal [{text}] [true]")
    resolver = _Resolver(program.params if program is not None else ())
    return resolver.expr(headers[0][1][2][0], {})


def parse_task(text: str, path: Optional[str] = None) -> Task:
    """
    Parse a .cpl file with its `prop:` header and optional `oracle:` lines

    Args:
        text: Source text
        path: Where the text came from, recorded on the task

    Returns:
        Task

    Raises:
        ParseError: on malformed input or a missing `prop:` header
    """
    headers, raw = _run_parser(text)
    program, resolver = _build_program(raw)
    props = [h[1] for h in headers if h[0] == 'prop']
    if len(props) != 1:
        raise ParseError(f"expected exactly one prop: header, found {len(props)}")
    oracle = tuple(h[1] for h in headers if h[0] == 'oracle')
    prop = _resolve_property(props[0], resolver)
    logger.debug(f"Parsed task {prop.describe()} for program {program.name}")
    return Task(program, prop, oracle, path=path)


def _resolve_property(raw, resolver: _Resolver) -> Property:
    kind, names, extra = raw

    def var(name: str) -> VarId:
        return resolver.versions.get(name, VarId(name))

    if kind == 'equal':
        events = tuple(resolver.expr(e, {}) for e in extra)
        return Property('equal', events=events)
    targets = tuple(var(n) for n in names)
    support = None
    if extra is not None:
        support = tuple(t if isinstance(t, tuple) else (t,) for t in extra)
        for point in support:
            if len(point) != len(targets):
                raise ParseError(f"support point {point} does not match target arity {len(targets)}")
    return Property(kind, targets, support)
