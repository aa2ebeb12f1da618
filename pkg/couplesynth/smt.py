"""
SMT-LIB rendering and solver backends
"""
import logging
import math
import os
import re
import shutil
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Union

import z3

from .config import DEFAULT_SOLVER_FLAGS, DEFAULT_TIME_LIMIT_FLAG, SolverConfig
from .errors import EncodingError, SolverUnavailableError

logger = logging.getLogger(__name__)

VALID = 'Valid'
INVALID = 'Invalid'
UNKNOWN = 'Unknown'
TIMEOUT = 'Timeout'
SOLVER_ERROR = 'SolverError'

# Seconds granted to the solver process beyond its own time limit before it is killed
KILL_GRACE = 2.0

KNOWN_LOGICS = {
    'QF_UF', 'QF_LIA', 'QF_LRA', 'QF_NIA', 'QF_NRA', 'QF_LIRA', 'QF_UFLIA', 'QF_UFLRA', 'QF_UFNIA',
    'QF_UFNRA', 'UF', 'LIA', 'LRA', 'NIA', 'NRA', 'UFLIA', 'UFLRA', 'UFNIA',
}

Formulas = Union[z3.BoolRef, Sequence[z3.BoolRef]]


@dataclass(frozen=True)
class SolverResult:
    """
    Outcome of a validity query

    Attributes:
        status: VALID, INVALID, UNKNOWN, TIMEOUT or SOLVER_ERROR
        model: Counter-model text when INVALID
        values: Constant assignments of the counter-model
        detail: Reason for UNKNOWN, stderr for SOLVER_ERROR
        elapsed: Wall-clock seconds
    """
    status: str
    model: Optional[str] = None
    values: Dict[str, str] = field(default_factory=dict)
    detail: str = ''
    elapsed: float = 0.0

    @property
    def valid(self) -> bool:
        return self.status == VALID


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _as_list(formulas: Formulas) -> List[z3.BoolRef]:
    if isinstance(formulas, z3.ExprRef):
        return [formulas]
    return list(formulas)


def _walk(formulas: Iterable[z3.ExprRef]):
    seen = set()
    stack = list(formulas)
    while stack:
        e = stack.pop()
        key = e.get_id()
        if key in seen:
            continue
        seen.add(key)
        yield e
        if z3.is_quantifier(e):
            stack.append(e.body())
        elif z3.is_app(e):
            stack.extend(e.children())


def declarations(formulas: Formulas) -> List[z3.FuncDeclRef]:
    """Uninterpreted constants and functions, sorted by name"""
    found: Dict[str, z3.FuncDeclRef] = {}
    for e in _walk(_as_list(formulas)):
        if z3.is_app(e) and e.decl().kind() == z3.Z3_OP_UNINTERPRETED:
            found.setdefault(e.decl().name(), e.decl())
    return [found[name] for name in sorted(found)]


def free_constants(formula: z3.ExprRef) -> List[z3.ExprRef]:
    return [d() for d in declarations(formula) if d.arity() == 0]


def detect_logic(formulas: Formulas) -> str:
    """Smallest standard logic covering the formulas, ALL if none fits"""
    quantified = functions = ints = reals = nonlinear = False
    for e in _walk(_as_list(formulas)):
        if z3.is_quantifier(e):
            quantified = True
            continue
        if z3.is_var(e):
            continue
        sort = e.sort().kind()
        ints = ints or sort == z3.Z3_INT_SORT
        reals = reals or sort == z3.Z3_REAL_SORT
        decl = e.decl()
        if decl.kind() == z3.Z3_OP_UNINTERPRETED and decl.arity() > 0:
            functions = True
            ints = ints or any(decl.domain(i).kind() == z3.Z3_INT_SORT for i in range(decl.arity()))
            reals = reals or any(decl.domain(i).kind() == z3.Z3_REAL_SORT for i in range(decl.arity()))
        if decl.kind() == z3.Z3_OP_MUL:
            nonlinear = nonlinear or sum(1 for c in e.children() if not _is_numeral(c)) > 1
        elif decl.kind() in (z3.Z3_OP_DIV, z3.Z3_OP_IDIV, z3.Z3_OP_MOD):
            nonlinear = nonlinear or not _is_numeral(e.children()[-1])
    arith = 'IRA' if ints and reals else 'IA' if ints else 'RA' if reals else ''
    name = '' if quantified else 'QF_'
    if functions or not arith:
        name += 'UF'
    if arith:
        name += ('N' if nonlinear else 'L') + arith
    return name if name in KNOWN_LOGICS else 'ALL'


def _is_numeral(e: z3.ExprRef) -> bool:
    if z3.is_int_value(e) or z3.is_rational_value(e):
        return True
    if z3.is_app(e) and e.decl().kind() == z3.Z3_OP_UMINUS:
        return _is_numeral(e.children()[0])
    if z3.is_app(e) and e.decl().kind() == z3.Z3_OP_TO_REAL:
        return _is_numeral(e.children()[0])
    return False


def to_smtlib(formulas: Formulas, logic: Optional[str] = None, comments: Optional[Sequence[str]] = None,
              get_model: bool = False, labels: Optional[Sequence[str]] = None) -> str:
    """
    Render assertions as a deterministic SMT-LIB 2 script

    Args:
        formulas: Closed formulas to assert
        logic: Logic name; detected when omitted
        comments: Header comment lines
        get_model: Ask for a model after check-sat
        labels: Comment printed before each assertion

    Returns:
        Script text ending in (check-sat)
    """
    formulas = _as_list(formulas)
    lines = [f"; {c}" for c in comments or ()]
    lines.append(f"(set-logic {logic or detect_logic(formulas)})")
    for decl in declarations(formulas):
        lines.append(decl.sexpr())
    for k, f in enumerate(formulas):
        if labels is not None and k < len(labels):
            lines.append(f"; {labels[k]}")
        lines.append(f"(assert {f.sexpr()})")
    lines.append('(check-sat)')
    if get_model:
        lines.append('(get-model)')
    return '\n'.join(lines) + '\n'


def close(formula: z3.BoolRef) -> z3.BoolRef:
    """Universally quantify the free constants of a formula"""
    consts = free_constants(formula)
    return z3.ForAll(consts, formula) if consts else formula


def to_chc(clauses: Dict[str, z3.BoolRef], comments: Optional[Sequence[str]] = None) -> str:
    """
    HORN-logic script of named loop clauses

    Each clause is closed over its constants; the invariant relation and the
    components of f stay declared functions.

    Raises:
        EncodingError: no clauses (loop-free bundles have no Horn form)
    """
    if not clauses:
        raise EncodingError("no loop clauses to export")
    names = list(clauses)
    closed = [close(clauses[name]) for name in names]
    return to_smtlib(closed, logic='HORN', comments=comments, labels=names)


_DEFINE = re.compile(r"\(define-fun\s+(\|[^|]*\||[^\s()]+)\s+\(\)\s+(\([^()]*\)|[^\s()]+)\s+(.*)\)\s*$", re.S)


def _toplevel(text: str) -> List[str]:
    """Balanced parenthesised expressions at nesting depth zero"""
    found, depth, start = [], 0, None
    for i, ch in enumerate(text):
        if ch == '(':
            if depth == 0:
                start = i
            depth += 1
        elif ch == ')' and depth > 0:
            depth -= 1
            if depth == 0:
                found.append(text[start:i + 1])
    return found


def parse_model(text: str) -> Dict[str, str]:
    """
    Constant assignments of a solver model

    Args:
        text: get-model output, with or without the enclosing (model ...) list

    Returns:
        Name (without |quotes|) -> value text; function definitions are skipped
    """
    values: Dict[str, str] = {}
    pending = _toplevel(text)
    while pending:
        item = pending.pop(0)
        if item.startswith('(define-fun'):
            match = _DEFINE.match(item)
            if match:
                values[match.group(1).strip('|')] = ' '.join(match.group(3).split())
        else:
            pending = _toplevel(item[1:-1]) + pending
    return values


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

class SolverBackend:
    """Validity checks with per-backend statistics"""

    name = 'abstract'

    def __init__(self, timeout: float):
        self.timeout = timeout
        self.counts: Dict[str, int] = {}
        self.elapsed = 0.0
        self._lock = threading.Lock()
        self.logger = logging.getLogger(self.__class__.__name__)

    def check_valid(self, formula: z3.BoolRef, timeout: Optional[float] = None) -> SolverResult:
        raise NotImplementedError("Subclasses must implement check_valid")

    def _record(self, result: SolverResult) -> SolverResult:
        with self._lock:
            self.counts[result.status] = self.counts.get(result.status, 0) + 1
            self.elapsed += result.elapsed
        if result.status in (TIMEOUT, SOLVER_ERROR):
            self.logger.warning(f"{self.name}: {result.status} {result.detail}".rstrip())
        return result

    def stats(self) -> Dict[str, object]:
        return {'backend': self.name, 'checks': sum(self.counts.values()), 'statuses': dict(self.counts),
                'solver_seconds': round(self.elapsed, 3)}


class InProcessBackend(SolverBackend):
    """z3 through its Python API, in the calling thread"""

    name = 'z3-api'

    def check_valid(self, formula: z3.BoolRef, timeout: Optional[float] = None) -> SolverResult:
        timeout = self.timeout if timeout is None else timeout
        start = time.time()
        solver = z3.Solver()
        solver.set(timeout=max(1, int(timeout * 1000)))
        solver.add(z3.Not(formula))
        answer = solver.check()
        elapsed = time.time() - start
        if answer == z3.unsat:
            return self._record(SolverResult(VALID, elapsed=elapsed))
        if answer == z3.sat:
            model = solver.model()
            values = {d.name(): str(model[d]) for d in model.decls() if d.arity() == 0}
            return self._record(SolverResult(INVALID, model.sexpr(), values, elapsed=elapsed))
        reason = solver.reason_unknown()
        status = TIMEOUT if reason in ('timeout', 'canceled') or elapsed >= timeout else UNKNOWN
        return self._record(SolverResult(status, detail=reason, elapsed=elapsed))


class SubprocessBackend(SolverBackend):
    """
    An SMT-LIB solver process per query

    The time limit is passed to the solver and enforced again by killing the
    process; a kill is reported as TIMEOUT.
    """

    name = 'smtlib-process'

    def __init__(self, path: str, args: Sequence[str] = (), timeout: float = 10.0,
                 flags: Sequence[str] = DEFAULT_SOLVER_FLAGS, time_limit_flag: str = DEFAULT_TIME_LIMIT_FLAG):
        super().__init__(timeout)
        self.path = path
        self.flags = list(flags)
        self.time_limit_flag = time_limit_flag
        self.args = list(args)
        self.logger.info(f"Using solver binary {path}")

    def command(self, timeout: float) -> List[str]:
        limit = [self.time_limit_flag.format(seconds=max(1, math.ceil(timeout)))] if self.time_limit_flag else []
        return [self.path] + self.flags + limit + self.args

    def render(self, formula: z3.BoolRef) -> str:
        return to_smtlib(z3.Not(formula), get_model=True)

    def check_valid(self, formula: z3.BoolRef, timeout: Optional[float] = None) -> SolverResult:
        return self.run_script(self.render(formula), timeout)

    def run_script(self, script: str, timeout: Optional[float] = None) -> SolverResult:
        """Run a rendered negated-formula script; safe to call from worker threads"""
        timeout = self.timeout if timeout is None else timeout
        start = time.time()
        try:
            completed = subprocess.run(self.command(timeout), input=script, capture_output=True, text=True,
                                       timeout=timeout + KILL_GRACE)
        except subprocess.TimeoutExpired:
            return self._record(SolverResult(TIMEOUT, detail='killed', elapsed=time.time() - start))
        except OSError as e:
            return self._record(SolverResult(SOLVER_ERROR, detail=str(e), elapsed=time.time() - start))
        elapsed = time.time() - start
        output = completed.stdout.strip()
        first, _, rest = output.partition('\n')
        first = first.strip()
        if first == 'unsat':
            return self._record(SolverResult(VALID, elapsed=elapsed))
        if first == 'sat':
            return self._record(SolverResult(INVALID, rest, parse_model(rest), elapsed=elapsed))
        if first == 'timeout':
            return self._record(SolverResult(TIMEOUT, detail='solver time limit', elapsed=elapsed))
        if first == 'unknown':
            return self._record(SolverResult(UNKNOWN, detail=rest, elapsed=elapsed))
        detail = (completed.stderr or output).strip()
        return self._record(SolverResult(SOLVER_ERROR, detail=detail, elapsed=elapsed))


def make_backend(config: SolverConfig) -> SolverBackend:
    """
    Select a backend from the solver configuration

    Raises:
        SolverUnavailableError: a configured solver path is not executable
    """
    if config.in_process or not config.path:
        logger.info("Using the in-process z3 backend")
        return InProcessBackend(config.timeout)
    resolved = shutil.which(config.path) or (config.path if os.access(config.path, os.X_OK) else None)
    if resolved is None:
        raise SolverUnavailableError(f"Solver binary not found or not executable: {config.path}")
    return SubprocessBackend(resolved, config.args, config.timeout, config.flags, config.time_limit_flag)


def check_valid(formula: z3.BoolRef, timeout: float = 10.0, backend: Optional[SolverBackend] = None) -> SolverResult:
    """Is the formula valid? Asserts its negation and reads the answer"""
    backend = backend or InProcessBackend(timeout)
    return backend.check_valid(formula, timeout)
