"""
Loop invariants for coupled loops

Invariants are conjunctions picked from tiered templates by Houdini-style
pruning: atoms an initial state or an iteration falsifies are dropped until
what remains is inductive. An optional tier hands the open invariant to
z3's Horn-clause engine instead.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import z3

from .candidates import CandidateFn, as_hole
from .smt import UNKNOWN, VALID, InProcessBackend, SolverBackend, SolverResult, close
from .syntax import BOOL, VarId, constants
from .vcgen import LoopFrame, VCBundle, invariant_relation, is_pad

TEMPLATE_TIERS = (1, 2, 3, 4)
CHC_TIER = 5
TIER_NAMES = {1: 'inputs', 2: 'relational', 3: 'guarded', 4: 'linear', CHC_TIER: 'chc'}
# Constant terms tried by the linear tier, smallest magnitude first
MAX_OFFSETS = 5


@dataclass
class InvariantAttempt:
    """
    Outcome of trying one tier for one coupling function

    Attributes:
        tier: Template tier, or CHC_TIER
        status: VALID when every loop clause holds under the invariant
        invariant: The conjunction tried, None if none was found
        atoms: Number of template atoms kept
        failed: Name of the first clause that did not hold
        results: Solver result per checked clause
    """
    tier: int
    status: str
    invariant: Optional[z3.BoolRef] = None
    atoms: int = 0
    failed: Optional[str] = None
    results: Dict[str, SolverResult] = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.status == VALID


def tiers_for(engine: str) -> List[int]:
    if engine == 'chc':
        return [CHC_TIER]
    if engine == 'both':
        return list(TEMPLATE_TIERS) + [CHC_TIER]
    return list(TEMPLATE_TIERS)


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------

def _state_pairs(bundle: VCBundle, frame: LoopFrame):
    left = [v for v in bundle.state(bundle.left) if not is_pad(v)]
    right = [v for v in bundle.state(bundle.right) if not is_pad(v)]
    for l, r in itertools.product(left, right):
        if frame.pre[l].sort() == frame.pre[r].sort():
            yield l, r


def _dedupe(atoms: Sequence[z3.BoolRef]) -> List[z3.BoolRef]:
    seen = set()
    kept = []
    for atom in atoms:
        key = atom.sexpr()
        if key not in seen and not z3.is_true(atom):
            seen.add(key)
            kept.append(atom)
    return kept


def _input_atoms(bundle: VCBundle, frame: LoopFrame) -> List[z3.BoolRef]:
    left_guard, right_guard = frame.guards
    return [z3.simplify(bundle.expr(bundle.premise)), left_guard == right_guard]


def _relational_atoms(bundle: VCBundle, frame: LoopFrame) -> List[z3.BoolRef]:
    left_guard = frame.guards[0]
    atoms: List[z3.BoolRef] = list(frame.graph)
    atoms.extend(z3.Implies(z3.Not(left_guard), g) for g in frame.graph)
    atoms.append(z3.Implies(z3.Not(left_guard), frame.exit))
    for l, r in _state_pairs(bundle, frame):
        a, b = frame.pre[l], frame.pre[r]
        atoms.append(a == b)
        if bundle.encoder.type_of(l) == BOOL:
            atoms.append(a == z3.Not(b))
    bounds = sorted({0} | {c for c in constants(bundle.left.to_program().body)
                           if isinstance(c, int) and not isinstance(c, bool)})
    for v in bundle.state(bundle.left) + bundle.state(bundle.right):
        if is_pad(v):
            continue
        t = bundle.encoder.type_of(v)
        term = frame.pre[v]
        if t == BOOL:
            atoms.extend([term, z3.Not(term)])
        elif t.is_integral:
            for k in bounds:
                atoms.extend([term >= k, term <= k])
    return atoms


def _offsets(bundle: VCBundle) -> List[int]:
    found = {0}
    for c in constants(bundle.left.to_program().body):
        if isinstance(c, int) and not isinstance(c, bool):
            found.update((c, -c))
    return sorted(found, key=lambda k: (abs(k), k))[:MAX_OFFSETS]


def _relations(lhs: z3.ArithRef, offset: int) -> Iterator[z3.BoolRef]:
    """lhs + e = 0, lhs + e <= 0 and -lhs + e <= 0"""
    def shifted(term):
        return term + offset if offset else term

    yield shifted(lhs) == 0
    yield shifted(lhs) <= 0
    yield shifted(-lhs) <= 0


def _linear_atoms(bundle: VCBundle, frame: LoopFrame) -> List[z3.BoolRef]:
    """
    c1*u + c2*v + e = 0 and c1*u + c2*v + e <= 0 over the integer state of
    both copies, with c1, c2 in {-1, 0, 1}

    Terms have at most two variables; single variables take every offset
    e from the program's integer constants, pairs only e = 0. Two-copy
    sums and differences c1*u + c2*v = c3*w + c4*z close the family.
    """
    def integral(variables: List[VarId]) -> List[VarId]:
        return [v for v in variables if not is_pad(v) and bundle.encoder.type_of(v).is_integral]

    left = integral(bundle.state(bundle.left))
    right = integral(bundle.state(bundle.right))
    terms = [frame.pre[v] for v in left + right]
    offsets = _offsets(bundle)
    atoms: List[z3.BoolRef] = []
    for t in terms:
        for e in offsets:
            atoms.extend(_relations(t, e))
    for s, t in itertools.combinations(terms, 2):
        for lhs in (s + t, s - t):
            atoms.extend(_relations(lhs, 0))
    for (a, b), (c, d) in itertools.product(itertools.combinations(left, 2), itertools.combinations(right, 2)):
        atoms.append(frame.pre[a] + frame.pre[b] == frame.pre[c] + frame.pre[d])
        atoms.append(frame.pre[a] - frame.pre[b] == frame.pre[c] - frame.pre[d])
    return atoms


def template_atoms(bundle: VCBundle, frame: LoopFrame, tier: int) -> List[z3.BoolRef]:
    """
    Candidate invariant atoms of a tier; each tier contains the previous one

    1. input equalities and agreement of the two loop guards
    2. the graph of f on the current samples, exit implications, equalities
       and negations between the copies' state, boolean literals and bounds
       from the program's integer constants
    3. tier 2 atoms guarded by a candidate condition or its negation
    4. linear equalities and inequalities over the integer state of both
       copies with coefficients in {-1, 0, 1}
    """
    atoms = _input_atoms(bundle, frame)
    if tier >= 2:
        atoms += _relational_atoms(bundle, frame)
    if tier >= 3:
        guarded = []
        for c in bundle.conds:
            test = bundle.expr(c)
            for atom in atoms:
                guarded.extend([z3.Implies(test, atom), z3.Implies(z3.Not(test), atom)])
        atoms += guarded
    if tier >= 4:
        atoms += _linear_atoms(bundle, frame)
    return _dedupe(atoms)


def enumerate_invariants(bundle: VCBundle, frame: LoopFrame) -> Iterator[z3.BoolRef]:
    """Unpruned template conjunctions, smallest tier first"""
    for tier in TEMPLATE_TIERS:
        atoms = template_atoms(bundle, frame, tier)
        yield z3.And(atoms) if atoms else z3.BoolVal(True)


# ---------------------------------------------------------------------------
# Engines
# ---------------------------------------------------------------------------

class HoudiniEngine:
    """
    Invariant search for one coupled loop at a time

    Pruning talks to z3 directly since it needs models; the surviving
    invariant is then checked clause by clause on the configured backend.

    Args:
        backend: Validity checks for the final clauses
        timeout: Seconds per solver call
    """

    def __init__(self, backend: SolverBackend, timeout: float = 10.0):
        self.backend = backend
        self.timeout = timeout
        self.logger = logging.getLogger('HoudiniEngine')

    def _solver(self) -> z3.Solver:
        solver = z3.Solver()
        solver.set(timeout=max(1, int(self.timeout * 1000)))
        return solver

    def prune(self, frame: LoopFrame, atoms: Sequence[z3.BoolRef]) -> Optional[List[z3.BoolRef]]:
        """
        Largest inductive subset of `atoms`

        Returns:
            The kept atoms (empty means `true`), None when the solver gave up
        """
        kept = list(atoms)
        while kept:
            solver = self._solver()
            solver.add(frame.initial, z3.Not(z3.And(kept)))
            answer = solver.check()
            if answer == z3.unsat:
                break
            if answer != z3.sat:
                return None
            model = solver.model()
            kept = [a for a in kept if z3.is_true(model.eval(a, model_completion=True))]
        while kept:
            conjunction = z3.And(kept)
            solver = self._solver()
            solver.add(conjunction, frame.step, z3.Not(frame.prime(conjunction)))
            answer = solver.check()
            if answer == z3.unsat:
                break
            if answer != z3.sat:
                return None
            model = solver.model()
            kept = [a for a in kept if z3.is_true(model.eval(frame.prime(a), model_completion=True))]
        return kept

    def horn(self, bundle: VCBundle, frame: LoopFrame) -> Optional[z3.BoolRef]:
        """The invariant z3's Horn engine finds for the open relation, if any"""
        relation = invariant_relation(bundle, frame)
        solver = z3.SolverFor('HORN')
        solver.set(timeout=max(1, int(self.timeout * 1000)))
        try:
            for clause in frame.clauses(relation).values():
                solver.add(close(clause))
            if solver.check() != z3.sat:
                return None
            return solver.model().eval(relation)
        except z3.Z3Exception as e:
            self.logger.debug(f"Horn engine rejected the clauses: {str(e)}")
            return None

    def check(self, frame: LoopFrame, invariant: z3.BoolRef) -> InvariantAttempt:
        """Check every loop clause under an invariant, stopping at the first failure"""
        attempt = InvariantAttempt(tier=0, status=VALID, invariant=invariant)
        for name, clause in frame.clauses(invariant).items():
            result = self.backend.check_valid(clause, self.timeout)
            attempt.results[name] = result
            if not result.valid:
                attempt.status = result.status
                attempt.failed = name
                break
        return attempt

    def attempt(self, bundle: VCBundle, frame: LoopFrame, tier: int) -> InvariantAttempt:
        """
        Try one tier for a fixed coupling function

        Returns:
            InvariantAttempt whose status is VALID when the loop proof closes
        """
        atoms = 0
        if tier == CHC_TIER:
            invariant = self.horn(bundle, frame)
        else:
            candidates = template_atoms(bundle, frame, tier)
            kept = self.prune(frame, candidates)
            if kept is None:
                self.logger.debug(f"Pruning gave up on tier {TIER_NAMES[tier]}")
                return InvariantAttempt(tier, UNKNOWN)
            invariant = z3.And(kept) if kept else z3.BoolVal(True)
            atoms = len(kept)
            self.logger.debug(f"Tier {TIER_NAMES[tier]}: kept {atoms} of {len(candidates)} atoms")
        if invariant is None:
            return InvariantAttempt(tier, UNKNOWN)
        result = self.check(frame, invariant)
        result.tier = tier
        result.atoms = atoms
        return result


def _frame(bundle: VCBundle, f: CandidateFn, mode: str) -> LoopFrame:
    return bundle.loop_frame(as_hole(f, bundle.encoder), mode)


def houdini(bundle: VCBundle, f: CandidateFn, tier: int = 3, timeout: float = 10.0,
            mode: str = 'full') -> Optional[z3.BoolRef]:
    """
    Strongest inductive sub-conjunction of a template tier under f

    Returns:
        The invariant, None when the solver gave up
    """
    frame = _frame(bundle, f, mode)
    kept = HoudiniEngine(InProcessBackend(timeout), timeout).prune(frame, template_atoms(bundle, frame, tier))
    if kept is None:
        return None
    return z3.And(kept) if kept else z3.BoolVal(True)


def solve_chc(bundle: VCBundle, f: CandidateFn, timeout: float = 10.0, mode: str = 'full') -> Optional[z3.BoolRef]:
    """Invariant from z3's Horn engine for the loop coupled by f, if it finds one"""
    return HoudiniEngine(InProcessBackend(timeout), timeout).horn(bundle, _frame(bundle, f, mode))
