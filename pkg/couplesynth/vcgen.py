"""
Verification-condition bundles for coupling proofs

A bundle relates a left and a right execution in one namespace of tagged
variables. Each property kind only chooses the copies, the quantified
parameter constants and the right-hand side that the coupled executions
have to satisfy.
"""
import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import z3

from .checker import TypeEnv, check, value_type
from .encoding import (
    Apply, CouplingAtom, Encoder, Lookup, eliminate_coupling, enc_transition, has_opaque, in_domain,
    value_term, wp_assign,
)
from .errors import EncodingError, TransformError
from .semantics import eval_expr
from .syntax import (
    BOOL, Binary, Const, Expr, Program, Task, Type, Unary, Value, Var, VarId, assigned_vars, conj,
    constants, dist_result_type, eq, expr_vars, predicates, tag, tag_expr,
)
from .transform import HoistedProgram, PAD_PREFIX, cross_product, hoist, pad_samples, self_compose

logger = logging.getLogger(__name__)

PARAM_PREFIX = '$'

# f as a function of its inputs, given a lookup for every other variable
Hole = Callable[[Sequence[z3.ExprRef], Lookup], List[z3.ExprRef]]

CLAUSES_LOOP_FREE = ('main', 'coupling')
CLAUSES_LOOP = ('initiation', 'consecution', 'synchronization', 'coupling', 'property')


def param_vector(name: str, types: Sequence[Type]) -> Tuple[Tuple[VarId, Type], ...]:
    """Constants standing for one quantified value, one per target component"""
    if len(types) == 1:
        return ((VarId(f"{PARAM_PREFIX}{name}"), types[0]),)
    return tuple((VarId(f"{PARAM_PREFIX}{name}.{k + 1}"), t) for k, t in enumerate(types))


def is_param(v: VarId) -> bool:
    return v.name.startswith(PARAM_PREFIX)


def is_pad(v: VarId) -> bool:
    return v.name.startswith(PAD_PREFIX)


@dataclass(frozen=True)
class CouplingSite:
    """The sample statements f relates: left samples in, right samples out"""
    inputs: Tuple[VarId, ...]
    outputs: Tuple[VarId, ...]
    atom: CouplingAtom
    in_loop: bool = False

    @property
    def arity(self) -> int:
        return len(self.inputs)


@dataclass(eq=False)
class LoopFrame:
    """
    The five loop clauses with the invariant left open

    `pre` and `post` map every state variable of both copies to its constant
    before and after one iteration.
    """
    pre: Dict[VarId, z3.ExprRef]
    post: Dict[VarId, z3.ExprRef]
    assumption: z3.BoolRef
    initial: z3.BoolRef
    step: z3.BoolRef
    guards: Tuple[z3.BoolRef, z3.BoolRef]
    coupling: z3.BoolRef
    exit: z3.BoolRef
    graph: Tuple[z3.BoolRef, ...] = ()

    def prime(self, formula: z3.BoolRef) -> z3.BoolRef:
        pairs = [(self.pre[v], self.post[v]) for v in self.pre]
        return z3.substitute(formula, *pairs) if pairs else formula

    def clauses(self, invariant: z3.BoolRef) -> Dict[str, z3.BoolRef]:
        left_guard, right_guard = self.guards
        return {
            'initiation': z3.Implies(self.initial, invariant),
            'consecution': z3.Implies(z3.And(invariant, self.step), self.prime(invariant)),
            'synchronization': z3.Implies(z3.And(invariant, self.assumption), left_guard == right_guard),
            'coupling': z3.Implies(z3.And(invariant, self.assumption), self.coupling),
            'property': z3.Implies(z3.And(invariant, self.assumption, z3.Not(left_guard)), self.exit),
        }


@dataclass(frozen=True, eq=False)
class VCBundle:
    """
    A coupling proof obligation with f (and for loops the invariant) open

    Attributes:
        kind: Property kind
        encoder: Shared variable namespace
        left: Hoisted left side (one or two tagged copies)
        right: Hoisted right side, padded to the left's sample arity
        params: Quantified constants per name ('a', "a'", 'b', 'c')
        supports: Allowed values of a parameter vector, None for its type domain
        rhs: What the coupled executions must satisfy on exit
        side: Assumption on the parameters (a != a' for uniformity)
        premise: Input equalities between all copies
        site: Where f is applied
        conds: Predicates candidate functions may branch on
        consts: Value vectors candidate functions may return
        property_conds: Property atoms offered to candidates as conditions
        tag_map: Right copy tag -> left copy tag, for reading properties on the left
        reordered: Parameters are arguments of the synthesized function, so
            candidates may read them
        fixed: Parameter values fixed by a case split
    """
    kind: str
    encoder: Encoder
    left: HoistedProgram
    right: HoistedProgram
    params: Dict[str, Tuple[Tuple[VarId, Type], ...]]
    supports: Dict[str, Optional[Tuple[Tuple[Value, ...], ...]]]
    rhs: Expr
    side: Expr
    premise: Expr
    site: CouplingSite
    conds: Tuple[Expr, ...] = ()
    consts: Tuple[Tuple[Expr, ...], ...] = ()
    property_conds: Tuple[Expr, ...] = ()
    tag_map: Dict[Optional[int], Optional[int]] = field(default_factory=dict)
    reordered: bool = False
    fixed: Dict[VarId, Value] = field(default_factory=dict)

    @property
    def has_loop(self) -> bool:
        return self.left.has_loop

    @property
    def has_opaque(self) -> bool:
        return has_opaque(self.site.atom.lhs) or has_opaque(self.site.atom.rhs)

    @property
    def param_list(self) -> List[VarId]:
        return [v for vector in self.params.values() for v, _ in vector]

    @property
    def hole_params(self) -> List[VarId]:
        """Parameters f receives as leading arguments"""
        return self.param_list if self.reordered else []

    @property
    def input_types(self) -> List[Type]:
        return [self.encoder.type_of(v) for v in self.site.inputs]

    @property
    def output_types(self) -> List[Type]:
        return [self.encoder.type_of(v) for v in self.site.outputs]

    # terms -----------------------------------------------------------------

    def term(self, v: VarId, version: str = '') -> z3.ExprRef:
        if is_param(v):
            if v in self.fixed:
                return value_term(self.fixed[v])
            return self.encoder.const(v)
        return self.encoder.const(v, version)

    def lookup(self, version: str = '') -> Lookup:
        return lambda v: self.term(v, version)

    def expr(self, e: Expr, version: str = '') -> z3.ExprRef:
        return self.encoder.expr(e, self.lookup(version))

    def context(self, xs: Sequence[z3.ExprRef], version: str = '') -> Lookup:
        """Lookup seen by f: its own inputs are xs, everything else the current state"""
        positions = {v: k for k, v in enumerate(self.site.inputs)}

        def lookup(v: VarId) -> z3.ExprRef:
            if v in positions:
                return xs[positions[v]]
            return self.term(v, version)

        return lookup

    def applier(self, hole: Hole, version: str = '') -> Apply:
        return lambda xs: hole(list(xs), self.context(xs, version))

    def assumption(self) -> z3.BoolRef:
        """Input equalities, parameter domains and the side condition"""
        parts = [self.expr(self.premise), self.expr(self.side)]
        for name, vector in self.params.items():
            support = self.supports.get(name)
            if support is not None:
                parts.append(self.expr(_member([v for v, _ in vector], support)))
            for v, t in vector:
                parts.append(in_domain(self.term(v), t))
        return z3.And(parts)

    def _ranges(self, variables, version: str = '') -> List[z3.BoolRef]:
        return [in_domain(self.term(v, version), self.encoder.type_of(v)) for v in variables
                if self.encoder.type_of(v).kind == 'range']

    # clauses ---------------------------------------------------------------

    def eliminate(self, hole: Hole, mode: str = 'full', expand: bool = True, symbolic_pmf: bool = False,
                  symmetric: Optional[bool] = None) -> z3.BoolRef:
        return eliminate_coupling(self.site.atom, self.applier(hole), self.encoder, self.lookup(), self.lookup(),
                                  mode=mode, expand=expand, symbolic_pmf=symbolic_pmf, symmetric=symmetric)

    def loop_free_clauses(self, hole: Hole, mode: str = 'full', **options) -> Dict[str, z3.BoolRef]:
        if self.has_loop:
            raise EncodingError("bundle has a loop; use the loop frame")
        assumption = self.assumption()
        lookup = self.lookup()
        outs = [self.term(v) for v in self.site.outputs]
        image = self.applier(hole)([self.term(v) for v in self.site.inputs])
        hypotheses = [assumption]
        hypotheses.extend(out == y for out, y in zip(outs, image))
        hypotheses.append(self.encoder.enc(self.left.rest, lookup))
        hypotheses.append(self.encoder.enc(self.right.rest, lookup))
        hypotheses.extend(self._ranges(self.site.inputs + self.site.outputs))
        return {
            'main': z3.Implies(z3.And(hypotheses), self.expr(self.rhs)),
            'coupling': z3.Implies(assumption, self.eliminate(hole, mode, **options)),
        }

    def state(self, side: HoistedProgram) -> List[VarId]:
        """Loop-carried variables of one side, inputs first"""
        found: List[VarId] = list(side.inputs)
        body = list(side.rest)
        if side.loop is not None:
            found.extend(side.loop.samples)
            body.extend(side.loop.body)
        for v in sorted(assigned_vars(body), key=str):
            if v not in found:
                found.append(v)
        return found

    def loop_frame(self, hole: Hole, mode: str = 'full', **options) -> LoopFrame:
        return vc_loop(self, hole, mode, **options)

    def clauses(self, hole: Hole, mode: str = 'full', invariant: Optional[z3.BoolRef] = None,
                **options) -> Dict[str, z3.BoolRef]:
        """
        Instantiate every clause of the bundle

        Args:
            hole: Candidate or uninterpreted f
            mode: Coupling encoding, 'full' or 'elided'
            invariant: Loop invariant over the unprimed state (loops only)

        Returns:
            Clause name -> closed formula (free constants read universally)
        """
        if not self.has_loop:
            return self.loop_free_clauses(hole, mode, **options)
        if invariant is None:
            raise EncodingError("loop bundles need an invariant")
        return self.loop_frame(hole, mode, **options).clauses(invariant)

    # parameters ------------------------------------------------------------

    def parameter_instances(self, limit: int) -> Optional[List[Dict[VarId, Value]]]:
        """
        Every admissible parameter valuation, or None above `limit` or for
        an infinite domain
        """
        if not self.params:
            return [{}]
        choices = []
        count = 1
        for name, vector in self.params.items():
            support = self.supports.get(name)
            if support is None:
                if not all(t.is_finite for _, t in vector):
                    return None
                support = list(itertools.product(*(t.domain() for _, t in vector)))
            choices.append([dict(zip((v for v, _ in vector), point)) for point in support])
            count *= len(support)
            if count > limit * limit:
                return None
        instances = []
        for combo in itertools.product(*choices):
            valuation: Dict[VarId, Value] = {}
            for part in combo:
                valuation.update(part)
            if eval_expr(valuation, self.side):
                instances.append(valuation)
        return instances if len(instances) <= limit else None


def _with_params(look: Lookup, bundle: VCBundle) -> Lookup:
    return lambda v: bundle.term(v) if is_param(v) else look(v)


def _member(variables: Sequence[VarId], support) -> Expr:
    options = [conj(eq(Var(v), Const(x)) for v, x in zip(variables, point)) for point in support]
    result = options[0] if options else Const(False)
    for option in options[1:]:
        result = Binary('or', result, option)
    return result


def _vector_eq(variables: Sequence[VarId], params: Sequence[VarId]) -> Expr:
    return conj(eq(Var(v), Var(a)) for v, a in zip(variables, params))


def reorder_quantifiers(bundle: VCBundle) -> VCBundle:
    """
    Pull the synthesized function out of the parameter quantifier

    Turns forall a. exists f. forall X into exists g. forall a. forall X,
    where g takes the parameter constants as leading arguments: declared
    holes gain the parameter sorts (`hole_params`) and the candidate
    grammar may branch on and return the parameters. One function then
    serves every parameter value. Bundles without parameters are returned
    unchanged.
    """
    if not bundle.params or bundle.reordered:
        return bundle
    return with_candidate_material(replace(bundle, reordered=True))


def fix_parameters(bundle: VCBundle, values: Dict[VarId, Value]) -> VCBundle:
    """Bundle for one parameter instance of a case split; candidates may read the fixed values"""
    return with_candidate_material(replace(bundle, fixed=dict(values)))


def uninterpreted_hole(bundle: VCBundle, name: str = 'g') -> Hole:
    """f as declared functions g1..gn, over the parameters when reordered"""
    params = [bundle.term(v) for v in bundle.hole_params]
    domain = [p.sort() for p in params] + [bundle.encoder.const(v).sort() for v in bundle.site.inputs]
    functions = [z3.Function(f"{name}{k + 1}", *domain, bundle.encoder.const(v).sort())
                 for k, v in enumerate(bundle.site.outputs)]

    def hole(xs: Sequence[z3.ExprRef], lookup: Lookup) -> List[z3.ExprRef]:
        return [fn(*params, *xs) for fn in functions]

    return hole


def invariant_relation(bundle: VCBundle, frame: LoopFrame, name: str = 'I') -> z3.BoolRef:
    """Loop invariant as an application of a declared relation to the state"""
    terms = [bundle.term(v) for v in bundle.hole_params] + list(frame.pre.values())
    relation = z3.Function(name, *[t.sort() for t in terms], z3.BoolSort())
    return relation(*terms)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def _register_pads(encoder: Encoder, side: HoistedProgram):
    sites = [(side.front, side.front_dist)]
    if side.loop is not None:
        sites.append((side.loop.samples, side.loop.dist))
    for variables, dist in sites:
        for v, component in zip(variables, dist.components):
            if is_pad(v):
                encoder.register(v, dist_result_type(component))


def _input_premise(left: HoistedProgram, right: HoistedProgram) -> Expr:
    groups: Dict[str, List[VarId]] = {}
    for v in left.inputs + right.inputs:
        groups.setdefault(v.name, [])
        if v not in groups[v.name]:
            groups[v.name].append(v)
    parts = []
    for members in groups.values():
        parts.extend(eq(Var(members[0]), Var(other)) for other in members[1:])
    return conj(parts)


def _atoms(e: Expr) -> List[Expr]:
    """Maximal non-connective subformulas of a boolean expression"""
    if isinstance(e, Binary) and e.op in ('and', 'or'):
        return _atoms(e.left) + _atoms(e.right)
    if isinstance(e, Unary) and e.op == 'not':
        return _atoms(e.arg)
    if isinstance(e, Const):
        return []
    return [e]


def _dedupe(items):
    seen = []
    for item in items:
        if item not in seen:
            seen.append(item)
    return seen


def _site(left: HoistedProgram, right: HoistedProgram) -> CouplingSite:
    if left.has_loop:
        return CouplingSite(left.loop.samples, right.loop.samples,
                            CouplingAtom(left.loop.dist, right.loop.dist), in_loop=True)
    return CouplingSite(left.front, right.front, CouplingAtom(left.front_dist, right.front_dist))


def _check_shapes(left: HoistedProgram, right: HoistedProgram):
    if left.has_loop != right.has_loop:
        raise EncodingError("cannot synchronise a loop with loop-free code")
    if left.has_loop and (left.front or right.front):
        raise EncodingError("sampling outside the loop of a loop program is not supported")


def assemble(kind: str, env_by_tag: Dict[Optional[int], TypeEnv], left: Program, right: Program, rhs: Expr,
             params: Dict[str, Tuple[Tuple[VarId, Type], ...]], side: Expr = Const(True),
             supports: Optional[Dict[str, Optional[tuple]]] = None, property_conds: Sequence[Expr] = (),
             tag_map: Optional[Dict[Optional[int], Optional[int]]] = None) -> VCBundle:
    """
    Build a bundle from the composed left and right programs

    Args:
        kind: Property kind
        env_by_tag: Variable types of every copy, keyed by tag
        left: Left program (tagged copies already composed)
        right: Right program
        rhs: Exit condition over both sides and the parameters
        params: Quantified parameter vectors
        side: Assumption on the parameters
        supports: Declared supports of parameter vectors
        property_conds: Property atoms, on the left's names, candidates may test
        tag_map: How right tags read on the left

    Returns:
        VCBundle

    Raises:
        EncodingError: loop and loop-free sides, or samples outside a loop
    """
    try:
        hl, hr = hoist(left), hoist(right)
    except TransformError as e:
        raise EncodingError(str(e)) from e
    _check_shapes(hl, hr)
    left_tag = _first_tag(hl)
    right_tag = _first_tag(hr)
    hl, hr = pad_samples(hl, hr, left_tag, right_tag)

    symbols: Dict[VarId, Type] = {}
    for env in env_by_tag.values():
        symbols.update({v: t for v, t in env.items() if t.is_symbol})
    encoder = Encoder(symbols)
    for t, env in env_by_tag.items():
        encoder.register_env(env, t)
    _register_pads(encoder, hl)
    _register_pads(encoder, hr)
    for vector in params.values():
        for v, t in vector:
            encoder.register(v, t)

    site = _site(hl, hr)
    bundle = VCBundle(kind, encoder, hl, hr, dict(params), dict(supports or {}), rhs, side,
                      _input_premise(hl, hr), site, property_conds=tuple(property_conds),
                      tag_map=dict(tag_map or {}))
    bundle = with_candidate_material(bundle)
    logger.debug(f"Assembled {kind} bundle: arity {site.arity}, loop {bundle.has_loop}, "
                 f"{len(bundle.conds)} conditions, {len(bundle.consts)} constants")
    return bundle


def _first_tag(side: HoistedProgram) -> Optional[int]:
    for v in side.inputs + list(side.front) + list(side.loop.samples if side.loop else ()):
        return v.tag
    return None


def _allowed(bundle: VCBundle) -> set:
    allowed = set(bundle.site.inputs) | set(bundle.left.inputs)
    if bundle.reordered or bundle.fixed:
        allowed |= set(bundle.param_list)
    if bundle.has_loop:
        allowed |= set(bundle.state(bundle.left))
    return allowed


def with_candidate_material(bundle: VCBundle) -> VCBundle:
    """
    The bundle with its candidate grammar's predicates and constant vectors

    Conditions are the program's branch and loop predicates, the boolean
    loop state and the property's atoms, kept when f can evaluate them:
    over f's own inputs, the program inputs, inside a loop the state at the
    start of the iteration, and the parameters once they are arguments of f
    (reordered) or fixed by a case split.
    """
    allowed = _allowed(bundle)
    symbols = set(bundle.encoder.symbols)
    body = bundle.left.to_program().body
    pool: List[Expr] = list(predicates(body))
    if bundle.has_loop:
        for v in bundle.state(bundle.left):
            if v not in bundle.site.inputs and bundle.encoder.type_of(v) == BOOL and not is_pad(v):
                pool.append(Var(v))
    pool.extend(bundle.property_conds)
    conds = [c for c in _dedupe(pool)
             if not isinstance(c, Const) and (expr_vars(c) - symbols) <= allowed]

    types = bundle.input_types
    consts: List[Tuple[Expr, ...]] = []
    for vector in bundle.params.values():
        if not (allowed >= {v for v, _ in vector}):
            continue
        if len(vector) == len(types) and all(t.kind == s.kind or (t.is_integral and s.is_integral)
                                             for (_, t), s in zip(vector, types)):
            consts.append(tuple(Var(v) for v, _ in vector))
    for value in constants(body):
        if types and all(_fits(value, t) for t in types):
            consts.append(tuple(Const(value) for _ in types))
    return replace(bundle, conds=tuple(conds), consts=tuple(_dedupe(consts)))


def _fits(value: Value, t: Type) -> bool:
    if isinstance(value, bool):
        return t.kind == 'bool'
    if isinstance(value, int):
        return t.kind == 'int' or (t.kind == 'range' and t.lo <= value <= t.hi)
    return t.kind == 'real'


def _finite_type(env: TypeEnv, v: VarId, what: str) -> Type:
    t = value_type(env, v)
    if not t.is_finite:
        raise EncodingError(f"{what} {v} has infinite type {t}")
    return t


def _counter_driven(program: Program) -> bool:
    loop = program.find_loop()
    return loop is not None and loop.counter is not None


def _two_copies(program: Program, first: int, second: int) -> Program:
    """Both copies side by side; loops are run in lockstep"""
    if program.find_loop() is not None:
        if not _counter_driven(program):
            raise EncodingError("only counter-driven loops can be run in lockstep")
        return cross_product(tag(program, first), tag(program, second))
    return self_compose(program, first, second)


def vc_uniform(program: Program, targets: Sequence[VarId], support=None,
               env: Optional[TypeEnv] = None) -> VCBundle:
    """
    Uniformity of a (vector) target: P coupled with P@1 such that
    target = a <=> target@1 = a' for every a != a'

    Raises:
        EncodingError: a target with an infinite domain
    """
    env = env if env is not None else check(program)
    targets = tuple(targets)
    types = [_finite_type(env, v, 'uniformity target') for v in targets]
    a, b = param_vector('a', types), param_vector("a'", types)
    left_vars, right_vars = targets, tuple(v.tagged(1) for v in targets)
    a_vars, b_vars = [v for v, _ in a], [v for v, _ in b]
    rhs = Binary('=', _vector_eq(left_vars, a_vars), _vector_eq(right_vars, b_vars))
    side = Unary('not', _vector_eq(a_vars, b_vars))
    supports = {'a': support, "a'": support} if support is not None else {}
    conds = [_vector_eq(left_vars, a_vars), _vector_eq(left_vars, b_vars)]
    return assemble('uniform', {None: env, 1: env}, program, tag(program, 1), rhs, {'a': a, "a'": b},
                    side, supports, conds, {1: None})


def vc_independent(program: Program, v: VarId, w: VarId, env: Optional[TypeEnv] = None) -> VCBundle:
    """
    Independence of v and w: P coupled with P@1;P@2 such that
    (v = a and w = a') <=> (v@1 = a and w@2 = a')
    """
    env = env if env is not None else check(program)
    a = param_vector('a', [_finite_type(env, v, 'independence target')])
    b = param_vector("a'", [_finite_type(env, w, 'independence target')])
    (pa, _), (pb, _) = a[0], b[0]
    rhs = Binary('=', conj([eq(Var(v), Var(pa)), eq(Var(w), Var(pb))]),
                 conj([eq(Var(v.tagged(1)), Var(pa)), eq(Var(w.tagged(2)), Var(pb))]))
    conds = [eq(Var(v), Var(pa)), eq(Var(w), Var(pb))]
    return assemble('independent', {None: env, 1: env, 2: env}, program, _two_copies(program, 1, 2), rhs,
                    {'a': a, "a'": b}, Const(True), None, conds, {1: None, 2: None})


def vc_cond_independent(program: Program, v: VarId, w: VarId, c: VarId,
                        env: Optional[TypeEnv] = None) -> VCBundle:
    """
    Independence of v and w given c over four copies:
    (v@1 = a, w@1 = b, c@1 = c@2 = k) <=> (v@3 = a, w@4 = b, c@3 = c@4 = k)
    """
    env = env if env is not None else check(program)
    a = param_vector('a', [_finite_type(env, v, 'independence target')])
    b = param_vector('b', [_finite_type(env, w, 'independence target')])
    k = param_vector('c', [_finite_type(env, c, 'conditioning variable')])
    (pa, _), (pb, _), (pk, _) = a[0], b[0], k[0]

    def event(first: int, second: int, w_copy: int) -> List[Expr]:
        return [eq(Var(v.tagged(first)), Var(pa)), eq(Var(w.tagged(w_copy)), Var(pb)),
                eq(Var(c.tagged(first)), Var(pk)), eq(Var(c.tagged(second)), Var(pk))]

    left_event = event(1, 2, 1)
    rhs = Binary('=', conj(left_event), conj(event(3, 4, 4)))
    return assemble('cond-independent', {t: env for t in (1, 2, 3, 4)}, _two_copies(program, 1, 2),
                    _two_copies(program, 3, 4), rhs, {'a': a, 'b': b, 'c': k}, Const(True), None,
                    left_event, {3: 1, 4: 2})


def vc_equality(first: Program, e1: Expr, second: Program, e2: Expr,
                env1: Optional[TypeEnv] = None, env2: Optional[TypeEnv] = None) -> VCBundle:
    """Pr[e1 in first] = Pr[e2 in second] via e1@1 <=> e2@2"""
    env1 = env1 if env1 is not None else check(first)
    env2 = env2 if env2 is not None else check(second)
    shared = set(first.symbols) | set(second.symbols)
    left_event = tag_expr(e1, 1, shared)
    rhs = Binary('=', left_event, tag_expr(e2, 2, shared))
    conds = _atoms(left_event) + _atoms(tag_expr(e2, 1, shared))
    return assemble('equal', {1: env1, 2: env2}, tag(first, 1), tag(second, 2), rhs, {}, Const(True), None,
                    conds, {2: 1})


def vc_loop(bundle: VCBundle, hole: Hole, mode: str = 'full', **options) -> LoopFrame:
    """
    The five loop clauses of a single-loop bundle with the invariant open

    Both copies enter the loop after their loop-free prefixes, step in
    lockstep with the right samples given by f applied to fresh left
    samples, and leave through their suffixes, which the property clause
    reads backwards through `wp_assign`.

    Args:
        bundle: Bundle whose sides are in single-loop form
        hole: Candidate or uninterpreted f
        mode: Coupling encoding, 'full' or 'elided'

    Returns:
        LoopFrame; `frame.clauses(I)` instantiates the clauses for an invariant

    Raises:
        EncodingError: the bundle is loop-free
    """
    if not bundle.has_loop:
        raise EncodingError("bundle has no loop")
    left, right = bundle.left, bundle.right
    state = bundle.state(left) + bundle.state(right)
    pre = {v: bundle.term(v) for v in state}
    post = {v: bundle.term(v, "'") for v in state}
    assumption = z3.And([bundle.assumption()] + bundle._ranges(state))
    lookup = bundle.lookup()
    initial = z3.And(assumption, bundle.encoder.enc(left.rest, lookup), bundle.encoder.enc(right.rest, lookup))

    image = bundle.applier(hole)([post[v] for v in bundle.site.inputs])
    site = [post[v] == y for v, y in zip(bundle.site.outputs, image)]
    transitions = [
        enc_transition(bundle.encoder, left.loop.body, bundle.state(left), left.loop.samples, pre, post),
        enc_transition(bundle.encoder, right.loop.body, bundle.state(right), right.loop.samples, pre, post),
    ]
    guards = (bundle.expr(left.loop.guard), bundle.expr(right.loop.guard))
    step = z3.And([assumption, guards[0]] + site + transitions + bundle._ranges(state, "'"))

    exit_rhs = wp_assign(bundle.encoder, left.suffix + right.suffix,
                         lambda look: bundle.encoder.expr(bundle.rhs, _with_params(look, bundle)), dict(pre))
    current = bundle.applier(hole)([pre[v] for v in bundle.site.inputs])
    graph = tuple(pre[v] == y for v, y in zip(bundle.site.outputs, current))
    coupling = bundle.eliminate(hole, mode, **options)
    return LoopFrame(pre, post, assumption, initial, step, guards, coupling, exit_rhs, graph)


def vc_for_task(task: Task) -> VCBundle:
    """
    Dispatch on the property kind

    Raises:
        EncodingError: the property cannot be encoded
    """
    prop = task.prop
    env = check(task.program)
    if prop.kind == 'uniform':
        return vc_uniform(task.program, prop.targets, prop.support, env)
    if prop.kind == 'independent':
        return vc_independent(task.program, prop.targets[0], prop.targets[1], env)
    if prop.kind == 'cond-independent':
        v, w, c = prop.targets
        return vc_cond_independent(task.program, v, w, c, env)
    if prop.kind == 'equal':
        other = task.other
        env2 = env if task.second is None else check(other)
        return vc_equality(task.program, prop.events[0], other, prop.events[1], env, env2)
    raise EncodingError(f"unknown property kind {prop.kind}")


def enc(program: Program) -> z3.BoolRef:
    """Relational encoding of a loop-free program in its own namespace"""
    env = check(program)
    encoder = Encoder(program.symbols)
    encoder.register_env(env, None)
    return encoder.enc(program.body, lambda v: encoder.const(v))

