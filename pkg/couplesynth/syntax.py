"""
Abstract syntax of the probabilistic language, tagging and pretty printing
"""
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple, Union

Value = Union[bool, int, Fraction]


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Type:
    """
    Value types: bool, int, real, int[lo..hi], dist T, fun(T..) -> T

    Only `kind` is always set; the remaining fields belong to the
    parameterised kinds.
    """
    kind: str
    lo: Optional[int] = None
    hi: Optional[int] = None
    elem: Optional['Type'] = None
    args: Tuple['Type', ...] = ()

    @property
    def is_numeric(self) -> bool:
        return self.kind in ('int', 'real', 'range')

    @property
    def is_integral(self) -> bool:
        return self.kind in ('int', 'range')

    @property
    def is_finite(self) -> bool:
        return self.kind in ('bool', 'range')

    @property
    def is_symbol(self) -> bool:
        """dist and fun parameters are program-level symbols, not state"""
        return self.kind in ('dist', 'fun')

    def domain(self) -> List[Value]:
        if self.kind == 'bool':
            return [True, False]
        if self.kind == 'range':
            return list(range(self.lo, self.hi + 1))
        raise ValueError(f"type {self} has no finite domain")

    def __str__(self) -> str:
        if self.kind == 'range':
            return f"int[{self.lo}..{self.hi}]"
        if self.kind == 'dist':
            return f"dist {self.elem}"
        if self.kind == 'fun':
            return f"fun({', '.join(str(a) for a in self.args)}) -> {self.elem}"
        return self.kind


BOOL = Type('bool')
INT = Type('int')
REAL = Type('real')


def finite_range(lo: int, hi: int) -> Type:
    return Type('range', lo=lo, hi=hi)


def dist_type(elem: Type) -> Type:
    return Type('dist', elem=elem)


def fun_type(args: Iterable[Type], result: Type) -> Type:
    return Type('fun', elem=result, args=tuple(args))


def join_types(a: Type, b: Type) -> Optional[Type]:
    """Least common type of two assignable types, None if incompatible"""
    if a == b:
        return a
    if a.kind == 'bool' or b.kind == 'bool' or not (a.is_numeric and b.is_numeric):
        return None
    if a.kind == 'real' or b.kind == 'real':
        return REAL
    if a.kind == 'range' and b.kind == 'range':
        return finite_range(min(a.lo, b.lo), max(a.hi, b.hi))
    return INT


# ---------------------------------------------------------------------------
# Variables
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class VarId:
    """A program variable; `tag` names the self-composition copy (1..4)"""
    name: str
    tag: Optional[int] = None

    def tagged(self, tag: Optional[int]) -> 'VarId':
        return VarId(self.name, tag)

    @property
    def base(self) -> 'VarId':
        return VarId(self.name)

    def __str__(self) -> str:
        return self.name if self.tag is None else f"{self.name}@{self.tag}"


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: Value


@dataclass(frozen=True)
class Var:
    var: VarId


@dataclass(frozen=True)
class Unary:
    op: str  # 'not' | 'neg'
    arg: 'Expr'


@dataclass(frozen=True)
class Binary:
    op: str
    left: 'Expr'
    right: 'Expr'


@dataclass(frozen=True)
class Ite:
    cond: 'Expr'
    then: 'Expr'
    orelse: 'Expr'


@dataclass(frozen=True)
class Call:
    fn: VarId
    args: Tuple['Expr', ...]


Expr = Union[Const, Var, Unary, Binary, Ite, Call]

BOOL_OPS = ('and', 'or')
COMPARE_OPS = ('=', '!=', '<', '<=', '>', '>=')
ARITH_OPS = ('+', '-', '*')


def conj(parts: Iterable[Expr]) -> Expr:
    parts = list(parts)
    if not parts:
        return Const(True)
    result = parts[0]
    for part in parts[1:]:
        result = Binary('and', result, part)
    return result


def eq(left: Expr, right: Expr) -> Expr:
    return Binary('=', left, right)


# ---------------------------------------------------------------------------
# Distribution expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bern:
    p: Expr


@dataclass(frozen=True)
class UniformInt:
    lo: int
    hi: int


@dataclass(frozen=True)
class Opaque:
    name: VarId
    result: Type


@dataclass(frozen=True)
class Product:
    components: Tuple['DistExpr', ...]


DistExpr = Union[Bern, UniformInt, Opaque, Product]


def dist_components(d: DistExpr) -> Tuple[DistExpr, ...]:
    return d.components if isinstance(d, Product) else (d,)


def product_of(dists: Iterable[DistExpr]) -> Product:
    flat: List[DistExpr] = []
    for d in dists:
        flat.extend(dist_components(d))
    return Product(tuple(flat))


def dist_result_type(d: DistExpr) -> Type:
    if isinstance(d, Bern):
        return BOOL
    if isinstance(d, UniformInt):
        return finite_range(d.lo, d.hi)
    if isinstance(d, Opaque):
        return d.result
    raise ValueError("a product has one type per component")


# ---------------------------------------------------------------------------
# Statements and programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Assign:
    target: VarId
    expr: Expr
    loc: Optional[Tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Sample:
    targets: Tuple[VarId, ...]
    dist: DistExpr
    loc: Optional[Tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class If:
    cond: Expr
    then: Tuple['Stmt', ...]
    orelse: Tuple['Stmt', ...] = ()
    loc: Optional[Tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Counter:
    """Bounds of a loop produced from `for v in lo..hi`"""
    var: VarId
    lo: Expr
    hi: Expr


@dataclass(frozen=True)
class While:
    cond: Expr
    body: Tuple['Stmt', ...]
    counter: Optional[Counter] = None
    loc: Optional[Tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Return:
    values: Tuple[VarId, ...]
    loc: Optional[Tuple[int, int]] = field(default=None, compare=False, repr=False)


Stmt = Union[Assign, Sample, If, While, Return]


@dataclass(frozen=True)
class Param:
    var: VarId
    type: Type


@dataclass(frozen=True)
class Program:
    params: Tuple[Param, ...]
    body: Tuple[Stmt, ...]
    name: Optional[str] = None

    @property
    def inputs(self) -> List[VarId]:
        """Value-carrying inputs; dist and fun symbols excluded"""
        return [p.var for p in self.params if not p.type.is_symbol]

    @property
    def symbols(self) -> Dict[VarId, Type]:
        return {p.var: p.type for p in self.params if p.type.is_symbol}

    @property
    def returns(self) -> Tuple[VarId, ...]:
        for stmt in self.body:
            if isinstance(stmt, Return):
                return stmt.values
        return ()

    def find_loop(self) -> Optional[While]:
        for stmt in self.body:
            if isinstance(stmt, While):
                return stmt
        return None


# ---------------------------------------------------------------------------
# Traversals
# ---------------------------------------------------------------------------

def expr_vars(e: Expr) -> Set[VarId]:
    if isinstance(e, Var):
        return {e.var}
    if isinstance(e, Const):
        return set()
    if isinstance(e, Unary):
        return expr_vars(e.arg)
    if isinstance(e, Binary):
        return expr_vars(e.left) | expr_vars(e.right)
    if isinstance(e, Ite):
        return expr_vars(e.cond) | expr_vars(e.then) | expr_vars(e.orelse)
    if isinstance(e, Call):
        found = {e.fn}
        for arg in e.args:
            found |= expr_vars(arg)
        return found
    raise TypeError(f"not an expression: {e!r}")


def dist_vars(d: DistExpr) -> Set[VarId]:
    if isinstance(d, Bern):
        return expr_vars(d.p)
    if isinstance(d, Opaque):
        return {d.name}
    if isinstance(d, Product):
        found: Set[VarId] = set()
        for component in d.components:
            found |= dist_vars(component)
        return found
    return set()


def assigned_vars(stmts: Iterable[Stmt]) -> Set[VarId]:
    """Variables written anywhere in a statement list, samples included"""
    found: Set[VarId] = set()
    for stmt in stmts:
        if isinstance(stmt, Assign):
            found.add(stmt.target)
        elif isinstance(stmt, Sample):
            found.update(stmt.targets)
        elif isinstance(stmt, If):
            found |= assigned_vars(stmt.then) | assigned_vars(stmt.orelse)
        elif isinstance(stmt, While):
            found |= assigned_vars(stmt.body)
    return found


def sampled_vars(stmts: Iterable[Stmt]) -> List[VarId]:
    found: List[VarId] = []
    for stmt in stmts:
        if isinstance(stmt, Sample):
            found.extend(stmt.targets)
        elif isinstance(stmt, If):
            found.extend(sampled_vars(stmt.then) + sampled_vars(stmt.orelse))
        elif isinstance(stmt, While):
            found.extend(sampled_vars(stmt.body))
    return found


def predicates(stmts: Iterable[Stmt]) -> List[Expr]:
    """Branch and loop conditions in source order"""
    found: List[Expr] = []
    for stmt in stmts:
        if isinstance(stmt, If):
            found.append(stmt.cond)
            found.extend(predicates(stmt.then) + predicates(stmt.orelse))
        elif isinstance(stmt, While):
            found.append(stmt.cond)
            found.extend(predicates(stmt.body))
    return found


def constants(stmts: Iterable[Stmt]) -> List[Value]:
    """Literal constants appearing in expressions, first occurrence order"""
    found: List[Value] = []

    def visit(e: Expr):
        if isinstance(e, Const):
            if not any(type(v) is type(e.value) and v == e.value for v in found):
                found.append(e.value)
        elif isinstance(e, Unary):
            visit(e.arg)
        elif isinstance(e, Binary):
            visit(e.left)
            visit(e.right)
        elif isinstance(e, Ite):
            visit(e.cond)
            visit(e.then)
            visit(e.orelse)
        elif isinstance(e, Call):
            for arg in e.args:
                visit(arg)

    for stmt in stmts:
        if isinstance(stmt, Assign):
            visit(stmt.expr)
        elif isinstance(stmt, If):
            visit(stmt.cond)
            found_inner = constants(stmt.then) + constants(stmt.orelse)
            for v in found_inner:
                visit(Const(v))
        elif isinstance(stmt, While):
            visit(stmt.cond)
            for v in constants(stmt.body):
                visit(Const(v))
    return found


# ---------------------------------------------------------------------------
# Renaming and tagging
# ---------------------------------------------------------------------------

def rename_expr(e: Expr, fn: Callable[[VarId], VarId]) -> Expr:
    if isinstance(e, Var):
        return Var(fn(e.var))
    if isinstance(e, Const):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, rename_expr(e.arg, fn))
    if isinstance(e, Binary):
        return Binary(e.op, rename_expr(e.left, fn), rename_expr(e.right, fn))
    if isinstance(e, Ite):
        return Ite(rename_expr(e.cond, fn), rename_expr(e.then, fn), rename_expr(e.orelse, fn))
    if isinstance(e, Call):
        return Call(fn(e.fn), tuple(rename_expr(a, fn) for a in e.args))
    raise TypeError(f"not an expression: {e!r}")


def rename_dist(d: DistExpr, fn: Callable[[VarId], VarId]) -> DistExpr:
    if isinstance(d, Bern):
        return Bern(rename_expr(d.p, fn))
    if isinstance(d, Opaque):
        return Opaque(fn(d.name), d.result)
    if isinstance(d, Product):
        return Product(tuple(rename_dist(c, fn) for c in d.components))
    return d


def rename_stmts(stmts: Iterable[Stmt], fn: Callable[[VarId], VarId]) -> Tuple[Stmt, ...]:
    result: List[Stmt] = []
    for stmt in stmts:
        if isinstance(stmt, Assign):
            result.append(replace(stmt, target=fn(stmt.target), expr=rename_expr(stmt.expr, fn)))
        elif isinstance(stmt, Sample):
            result.append(replace(stmt, targets=tuple(fn(t) for t in stmt.targets),
                                  dist=rename_dist(stmt.dist, fn)))
        elif isinstance(stmt, If):
            result.append(replace(stmt, cond=rename_expr(stmt.cond, fn),
                                  then=rename_stmts(stmt.then, fn), orelse=rename_stmts(stmt.orelse, fn)))
        elif isinstance(stmt, While):
            counter = stmt.counter
            if counter is not None:
                counter = Counter(fn(counter.var), rename_expr(counter.lo, fn), rename_expr(counter.hi, fn))
            result.append(replace(stmt, cond=rename_expr(stmt.cond, fn),
                                  body=rename_stmts(stmt.body, fn), counter=counter))
        elif isinstance(stmt, Return):
            result.append(replace(stmt, values=tuple(fn(v) for v in stmt.values)))
    return tuple(result)


def tag(program: Program, index: int) -> Program:
    """
    Tag every state variable of a program with a copy index

    dist and fun parameters stay untagged: all copies share them.

    Args:
        program: Checked program
        index: Copy index

    Returns:
        Program whose variables carry `index`
    """
    shared = set(program.symbols)

    def retag(v: VarId) -> VarId:
        return v if v in shared or v.base in shared else v.tagged(index)

    params = tuple(Param(retag(p.var), p.type) for p in program.params)
    return Program(params, rename_stmts(program.body, retag), program.name)


def tag_expr(e: Expr, index: Optional[int], shared: Iterable[VarId] = ()) -> Expr:
    shared = set(shared)
    return rename_expr(e, lambda v: v if v in shared else v.tagged(index))


def tag_dist(d: DistExpr, index: Optional[int], shared: Iterable[VarId] = ()) -> DistExpr:
    shared = set(shared)
    return rename_dist(d, lambda v: v if v in shared else v.tagged(index))


def untag_dist(d: DistExpr) -> DistExpr:
    return rename_dist(d, lambda v: v.base)


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

def format_value(value: Value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return f"{value.numerator}/1"
        return f"{value.numerator}/{value.denominator}"
    return str(value)


def format_var(v: VarId) -> str:
    return str(v)


def pretty_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return format_value(e.value)
    if isinstance(e, Var):
        return format_var(e.var)
    if isinstance(e, Unary):
        inner = pretty_expr(e.arg)
        if not isinstance(e.arg, (Const, Var, Call, Ite)):
            inner = f"({inner})"
        return f"not {inner}" if e.op == 'not' else f"-{inner}"
    if isinstance(e, Binary):
        parts = []
        for side in (e.left, e.right):
            text = pretty_expr(side)
            if isinstance(side, Binary) or (isinstance(side, Unary) and side.op == 'not'):
                text = f"({text})"
            parts.append(text)
        return f"{parts[0]} {e.op} {parts[1]}"
    if isinstance(e, Ite):
        return f"ite({pretty_expr(e.cond)}, {pretty_expr(e.then)}, {pretty_expr(e.orelse)})"
    if isinstance(e, Call):
        return f"{format_var(e.fn)}({', '.join(pretty_expr(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def pretty_dist(d: DistExpr) -> str:
    if isinstance(d, Bern):
        return f"bern({pretty_expr(d.p)})"
    if isinstance(d, UniformInt):
        return f"uniformInt({d.lo}, {d.hi})"
    if isinstance(d, Opaque):
        return format_var(d.name)
    if isinstance(d, Product):
        return ' * '.join(pretty_dist(c) for c in d.components)
    raise TypeError(f"not a distribution: {d!r}")


def pretty_stmts(stmts: Iterable[Stmt], indent: int = 0) -> List[str]:
    pad = '  ' * indent
    lines: List[str] = []
    for stmt in stmts:
        if isinstance(stmt, Assign):
            lines.append(f"{pad}{format_var(stmt.target)} <- {pretty_expr(stmt.expr)}")
        elif isinstance(stmt, Sample):
            targets = ', '.join(format_var(t) for t in stmt.targets)
            lines.append(f"{pad}{targets} ~ {pretty_dist(stmt.dist)}")
        elif isinstance(stmt, If):
            lines.append(f"{pad}if {pretty_expr(stmt.cond)} {{")
            lines.extend(pretty_stmts(stmt.then, indent + 1))
            if stmt.orelse:
                lines.append(f"{pad}}} else {{")
                lines.extend(pretty_stmts(stmt.orelse, indent + 1))
            lines.append(f"{pad}}}")
        elif isinstance(stmt, While):
            if stmt.counter is not None and _is_counter_loop(stmt):
                c = stmt.counter
                lines.append(f"{pad}for {format_var(c.var)} in {pretty_expr(c.lo)}..{pretty_expr(c.hi)} {{")
                lines.extend(pretty_stmts(stmt.body[:-1], indent + 1))
            else:
                lines.append(f"{pad}while {pretty_expr(stmt.cond)} {{")
                lines.extend(pretty_stmts(stmt.body, indent + 1))
            lines.append(f"{pad}}}")
        elif isinstance(stmt, Return):
            lines.append(f"{pad}return ({', '.join(format_var(v) for v in stmt.values)})")
    return lines


def _is_counter_loop(loop: While) -> bool:
    """True when the loop still has the exact shape `for` desugars to"""
    c = loop.counter
    if not loop.body:
        return False
    last = loop.body[-1]
    return (isinstance(last, Assign) and last.target == c.var
            and last.expr == Binary('+', Var(c.var), Const(1))
            and loop.cond == Binary('<=', Var(c.var), c.hi))


def pretty(program: Program) -> str:
    """Render a program in .cpl syntax"""
    if program.name is None and not program.params:
        return '\n'.join(pretty_stmts(program.body)) + '\n'
    params = ', '.join(f"{format_var(p.var)}: {p.type}" for p in program.params)
    name = program.name or 'main'
    lines = [f"program {name}({params}) {{"]
    lines.extend(pretty_stmts(program.body, 1))
    lines.append('}')
    return '\n'.join(lines) + '\n'


# ---------------------------------------------------------------------------
# Properties and tasks
# ---------------------------------------------------------------------------

PROPERTY_KINDS = ('uniform', 'independent', 'cond-independent', 'equal')


@dataclass(frozen=True)
class Property:
    """
    A relational property to prove about a program's output distribution

    Attributes:
        kind: one of PROPERTY_KINDS
        targets: the uniform target vector, (v, w) or (v, w, c)
        support: declared support of a uniform target, None for the full domain
        events: (e1, e2) for 'equal'
    """
    kind: str
    targets: Tuple[VarId, ...] = ()
    support: Optional[Tuple[Tuple[Value, ...], ...]] = None
    events: Tuple[Expr, ...] = ()

    def describe(self) -> str:
        names = [str(v) for v in self.targets]
        if self.kind == 'uniform':
            target = names[0] if len(names) == 1 else f"({', '.join(names)})"
            return f"uniform {target}"
        if self.kind == 'independent':
            return f"independent {names[0]} {names[1]}"
        if self.kind == 'cond-independent':
            return f"cond-independent {names[0]} {names[1]} given {names[2]}"
        return f"equal [{pretty_expr(self.events[0])}] [{pretty_expr(self.events[1])}]"


# Oracle bindings: parameter name -> rational, int, bool, DistExpr or builtin name
OracleBinding = Dict[str, object]


@dataclass(frozen=True)
class Task:
    program: Program
    prop: Property
    oracle: Tuple[OracleBinding, ...] = ()
    second: Optional[Program] = None
    path: Optional[str] = None

    @property
    def other(self) -> Program:
        """The program the right-hand event of an equality is measured on"""
        return self.second if self.second is not None else self.program
