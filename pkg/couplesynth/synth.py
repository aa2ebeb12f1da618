"""
Guess-and-check synthesis of coupling proofs

Candidate coupling functions are enumerated by size and plugged into the
property's verification-condition bundle; the first candidate (and loop
invariant) whose clauses the solver proves valid wins. Every success is
re-checked against the exact interpreter before it is reported.
"""
import itertools
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from multiprocessing.pool import ThreadPool
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import z3

from .candidates import (
    CandidateEnumerator, CandidateFn, Const, Cond, Neg, Swap, as_hole, candidate_json, case_split,
    describe_valuation,
)
from .checker import check, value_type
from .config import REPORT_SCHEMA, SynthConfig, load_config
from .errors import EncodingError, OracleError, SoundnessError
from .invariants import TIER_NAMES, HoudiniEngine, tiers_for
from .semantics import check_property, format_fraction
from .smt import (
    INVALID, TIMEOUT, UNKNOWN, VALID, SolverBackend, SolverResult, SubprocessBackend, close, make_backend,
)
from .syntax import Bern, Task, Type, UniformInt, Value, VarId, pretty_dist
from .vcgen import VCBundle, fix_parameters, reorder_quantifiers, vc_for_task

# Defaults tried for unbound integer inputs by the oracle
DEFAULT_ORACLE_INTS = (1, 2, 3)
MAX_ORACLE_INSTANCES = 32
# Rejected candidates listed in a failure report
MAX_REPORTED_REJECTIONS = 50

INCONCLUSIVE = (UNKNOWN, TIMEOUT)


def instantiate(bundle: VCBundle, f: CandidateFn, invariant: Optional[z3.BoolRef] = None,
                mode: str = 'full') -> z3.BoolRef:
    """
    The closed formula stating that f (and the invariant) prove the bundle

    Args:
        bundle: Verification conditions with f open
        f: Candidate coupling function
        invariant: Loop invariant, required for loop bundles
        mode: Coupling encoding, 'full' or 'elided'

    Raises:
        EncodingError: f does not fit the bundle's sample signature, or a
            loop bundle without an invariant
    """
    check_signature(f, bundle.input_types)
    clauses = bundle.clauses(as_hole(f, bundle.encoder), mode, invariant)
    return close(z3.And(list(clauses.values())))


def check_signature(f: CandidateFn, types: Sequence[Type]):
    """Raise EncodingError when f's indices or constants do not fit the given positions"""
    if isinstance(f, Swap):
        if not (1 <= f.i < f.j <= len(types)) or types[f.i - 1] != types[f.j - 1]:
            raise EncodingError(f"sort mismatch: cannot swap positions {f.i} and {f.j}")
        check_signature(f.inner, types)
    elif isinstance(f, Neg):
        if not 1 <= f.i <= len(types) or types[f.i - 1].kind != 'bool':
            raise EncodingError(f"sort mismatch: position {f.i} is not boolean")
        check_signature(f.inner, types)
    elif isinstance(f, Cond):
        check_signature(f.then, types)
        check_signature(f.orelse, types)
    elif isinstance(f, Const) and len(f.values) != len(types):
        raise EncodingError(f"sort mismatch: constant of arity {len(f.values)} for {len(types)} samples")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class Attempt:
    """One checked candidate; the failing clause and its counter-model when rejected"""
    index: int
    candidate: CandidateFn
    status: str
    clause: Optional[str] = None
    values: Dict[str, str] = field(default_factory=dict)
    invariant: Optional[z3.BoolRef] = None
    tier: Optional[int] = None

    def to_json(self) -> Dict[str, object]:
        entry = {'index': self.index, 'candidate': str(self.candidate), 'status': self.status}
        if self.clause:
            entry['clause'] = self.clause
        if self.values:
            entry['counterexample'] = dict(sorted(self.values.items()))
        return entry


@dataclass
class InstanceProof:
    valuation: Dict[VarId, Value]
    attempt: Attempt
    mode: str


@dataclass
class OracleCheck:
    instance: Dict[str, object]
    verdict: str
    holds: Optional[bool]
    witness: Optional[tuple] = None
    gap: Optional[Fraction] = None
    residual: Fraction = Fraction(0)

    def to_json(self) -> Dict[str, object]:
        entry = {'instance': {k: _json_binding(v) for k, v in self.instance.items()},
                 'verdict': self.verdict, 'holds': self.holds,
                 'residual': format_fraction(self.residual)}
        if self.witness is not None:
            entry['witness'] = [_json_binding(w) for w in self.witness]
        if self.gap is not None:
            entry['gap'] = format_fraction(self.gap)
        return entry


def _json_binding(value):
    if isinstance(value, tuple):
        return [_json_binding(v) for v in value]
    if isinstance(value, (bool, int)):
        return value
    if isinstance(value, Fraction):
        return format_fraction(value)
    return str(value)


@dataclass
class ProofReport:
    """
    A proof the solver validated and the oracle did not refute

    Attributes:
        task: Task file or program name
        kind: Property kind
        prop: Property as written
        candidate: The coupling function (case split over instances when split)
        inputs: Left samples the function reads
        index: Candidate index; the largest over parameter instances
        strategy: 'split' or 'symbolic'
        instances: Per-instance proofs
        stats: Solver statistics
        oracle: Exact cross-check verdicts
        elapsed: Wall-clock seconds
    """
    task: str
    kind: str
    prop: str
    candidate: CandidateFn
    inputs: Tuple[VarId, ...]
    index: int
    strategy: str
    instances: List[InstanceProof]
    stats: Dict[str, object] = field(default_factory=dict)
    oracle: List[OracleCheck] = field(default_factory=list)
    elapsed: float = 0.0

    status = 'proved'

    @property
    def invariants(self) -> List[str]:
        found = []
        for proof in self.instances:
            if proof.attempt.invariant is not None:
                text = str(proof.attempt.invariant)
                if text not in found:
                    found.append(text)
        return found

    @property
    def modes(self) -> List[str]:
        return sorted({proof.mode for proof in self.instances})

    def to_json(self) -> Dict[str, object]:
        invariants = self.invariants
        return {
            'schema': REPORT_SCHEMA,
            'status': self.status,
            'task': self.task,
            'kind': self.kind,
            'property': self.prop,
            'strategy': self.strategy,
            'elision': self.modes[0] if len(self.modes) == 1 else self.modes,
            'coupling': candidate_json(self.candidate, self.inputs),
            'index': self.index,
            'invariant': (invariants[0] if len(invariants) == 1 else invariants) if invariants else None,
            'instances': [{
                'parameters': describe_valuation(p.valuation),
                'candidate': str(p.attempt.candidate),
                'index': p.attempt.index,
                'elision': p.mode,
                'tier': TIER_NAMES.get(p.attempt.tier) if p.attempt.tier else None,
            } for p in self.instances],
            'oracle': [check.to_json() for check in self.oracle],
            'stats': self.stats,
            'elapsed': round(self.elapsed, 3),
        }


@dataclass
class Failure:
    """
    No confirmed proof

    Attributes:
        reason: 'budget-exhausted', 'timeout', or 'unconfirmed' when the
            solver proved a candidate the oracle could not check at any
            instantiation or found inconclusive at one
        tried: Candidates checked for the failing instance
        instance: Parameter valuation that failed, if split
        rejected: Rejected candidates with counter-models
        inconclusive: Checks that ended Unknown or Timeout
    """
    task: str
    kind: str
    prop: str
    reason: str
    tried: int
    strategy: str
    instance: Dict[VarId, Value] = field(default_factory=dict)
    rejected: List[Attempt] = field(default_factory=list)
    inconclusive: int = 0
    stats: Dict[str, object] = field(default_factory=dict)
    oracle: List[OracleCheck] = field(default_factory=list)
    elapsed: float = 0.0
    candidate: Optional[CandidateFn] = None

    status = 'failed'

    def to_json(self) -> Dict[str, object]:
        payload = {
            'schema': REPORT_SCHEMA,
            'status': self.status,
            'task': self.task,
            'kind': self.kind,
            'property': self.prop,
            'reason': self.reason,
            'strategy': self.strategy,
            'tried': self.tried,
            'instance': describe_valuation(self.instance),
            'inconclusive': self.inconclusive,
            'rejected': [a.to_json() for a in self.rejected[:MAX_REPORTED_REJECTIONS]],
            'oracle': [check.to_json() for check in self.oracle],
            'stats': self.stats,
            'elapsed': round(self.elapsed, 3),
        }
        if self.candidate is not None:
            payload['candidate'] = str(self.candidate)
        return payload


@dataclass
class SearchResult:
    found: Optional[Attempt]
    tried: int
    rejected: List[Attempt]
    inconclusive: int
    mode: str
    timed_out: bool = False


# ---------------------------------------------------------------------------
# Synthesizer
# ---------------------------------------------------------------------------

class Synthesizer:
    """
    Enumerate-and-check driver for one configuration

    Args:
        config: Budget, timeouts, strategy and solver selection
        backend: Solver backend; built from the config when omitted
    """

    def __init__(self, config: Optional[SynthConfig] = None, backend: Optional[SolverBackend] = None):
        self.config = config or load_config()
        self.backend = backend or make_backend(self.config.solver)
        self.engine = HoudiniEngine(self.backend, self.config.timeout_per_check)
        self.deadline = float('inf')
        self.logger = logging.getLogger('Synthesizer')
        self.logger.info(f"Synthesizer ready: budget {self.config.budget}, "
                         f"{self.config.timeout_per_check}s per check, backend {self.backend.name}")

    # entry -----------------------------------------------------------------

    def synthesize(self, task: Task) -> Union[ProofReport, Failure]:
        """
        Search for a coupling proof of the task's property

        Returns:
            ProofReport when the solver proved a candidate and the oracle
            confirmed it at every instantiation; Failure when the budget or
            the total timeout runs out, or the oracle could not confirm

        Raises:
            EncodingError: the property cannot be encoded
            SoundnessError: the solver accepted a proof the oracle refutes
        """
        start = time.time()
        self.deadline = start + self.config.total_timeout
        name = task.path or task.program.name or 'program'
        bundle = vc_for_task(task)
        strategy, instances = self._strategy(bundle)
        self.logger.info(f"{name}: {task.prop.describe()} ({strategy}, arity {bundle.site.arity}, "
                         f"loop {bundle.has_loop})")

        proofs: List[InstanceProof] = []
        for valuation in instances:
            target = fix_parameters(bundle, valuation) if strategy == 'split' else reorder_quantifiers(bundle)
            result = self._search(target)
            if result.found is None:
                failure = Failure(name, task.prop.kind, task.prop.describe(),
                                  'timeout' if result.timed_out else 'budget-exhausted', result.tried,
                                  strategy, valuation, result.rejected, result.inconclusive)
                failure.oracle = self.cross_check(task)
                failure.stats = self.backend.stats()
                failure.elapsed = time.time() - start
                self.logger.info(f"{name}: no proof ({failure.reason}) after {result.tried} candidates"
                                 + (f" at {describe_valuation(valuation)}" if valuation else ''))
                return failure
            self.logger.info(f"{name}: candidate {result.found.index} {result.found.candidate} proves "
                             f"{describe_valuation(valuation) or 'all parameters'} ({result.mode})")
            proofs.append(InstanceProof(valuation, result.found, result.mode))

        if strategy == 'split':
            candidate = case_split([(p.valuation, p.attempt.candidate) for p in proofs])
        else:
            candidate = proofs[0].attempt.candidate
        report = ProofReport(name, task.prop.kind, task.prop.describe(), candidate, bundle.site.inputs,
                             max(p.attempt.index for p in proofs), strategy, proofs)
        report.oracle = self.cross_check(task)
        refuted = [c for c in report.oracle if c.holds is False]
        if refuted:
            self.logger.error(f"{name}: solver proof refuted by the oracle at {refuted[0].instance}")
            raise SoundnessError(f"{name}: candidate {candidate} was proven valid but the oracle reports "
                                 f"{refuted[0].verdict} at {refuted[0].instance}")
        if not report.oracle or any(c.holds is None for c in report.oracle):
            self.logger.warning(f"{name}: candidate {candidate} was proven valid but the oracle could not "
                                f"confirm it ({len(report.oracle)} checks)")
            failure = Failure(name, task.prop.kind, task.prop.describe(), 'unconfirmed', report.index, strategy,
                              candidate=candidate)
            failure.oracle = report.oracle
            failure.stats = self.backend.stats()
            failure.elapsed = time.time() - start
            return failure
        report.stats = self.backend.stats()
        report.elapsed = time.time() - start
        return report

    def _strategy(self, bundle: VCBundle) -> Tuple[str, List[Dict[VarId, Value]]]:
        if self.config.strategy == 'symbolic' or not bundle.params:
            return 'symbolic', [{}]
        instances = bundle.parameter_instances(self.config.max_parameter_instances)
        if instances is None:
            if self.config.strategy == 'split':
                self.logger.warning("Too many parameter instances to split; searching symbolically")
            return 'symbolic', [{}]
        return 'split', instances

    def _modes(self, bundle: VCBundle) -> List[str]:
        if self.config.elision != 'auto':
            return [self.config.elision]
        return ['elided'] if bundle.has_opaque else ['full', 'elided']

    def _search(self, bundle: VCBundle) -> SearchResult:
        """Search each elision mode in turn; a later mode only runs when an earlier one was inconclusive"""
        result = None
        for mode in self._modes(bundle):
            result = self._search_loop(bundle, mode) if bundle.has_loop else self._search_loop_free(bundle, mode)
            if result.found is not None or result.timed_out or not result.inconclusive:
                return result
            self.logger.info(f"{result.inconclusive} inconclusive checks in {mode} mode; retrying elided")
        return result

    def candidates(self, bundle: VCBundle) -> Iterator[Tuple[int, CandidateFn]]:
        """The bundle's candidate stream, cut at the budget"""
        stream = CandidateEnumerator(bundle.input_types, bundle.conds, bundle.consts)
        return itertools.islice(enumerate(stream, start=1), self.config.budget)

    def _out_of_time(self) -> bool:
        return time.time() > self.deadline

    # loop-free -------------------------------------------------------------

    def _clauses(self, bundle: VCBundle, f: CandidateFn, mode: str) -> Dict[str, z3.BoolRef]:
        return bundle.loop_free_clauses(as_hole(f, bundle.encoder), mode)

    def _check_clauses(self, clauses: Dict[str, z3.BoolRef]) -> Tuple[str, Optional[str], SolverResult]:
        result = SolverResult(VALID)
        for name, clause in clauses.items():
            result = self.backend.check_valid(clause, self.config.timeout_per_check)
            if not result.valid:
                return result.status, name, result
        return VALID, None, result

    def _search_loop_free(self, bundle: VCBundle, mode: str) -> SearchResult:
        if self.config.jobs > 1 and isinstance(self.backend, SubprocessBackend):
            return self._search_parallel(bundle, mode)
        rejected: List[Attempt] = []
        inconclusive = tried = 0
        for index, f in self.candidates(bundle):
            if self._out_of_time():
                return SearchResult(None, tried, rejected, inconclusive, mode, timed_out=True)
            tried = index
            try:
                status, clause, result = self._check_clauses(self._clauses(bundle, f, mode))
            except EncodingError as e:
                self.logger.error(f"Candidate {index} {f}: {str(e)}")
                rejected.append(Attempt(index, f, "EncodingError", f"encoding: {e}"))
                continue
            self.logger.debug(f"Candidate {index} {f}: {status}" + (f" ({clause})" if clause else ''))
            attempt = Attempt(index, f, status, clause, dict(result.values))
            if status == VALID:
                return SearchResult(attempt, tried, rejected, inconclusive, mode)
            if status in INCONCLUSIVE:
                inconclusive += 1
            rejected.append(attempt)
        return SearchResult(None, tried, rejected, inconclusive, mode)

    def _search_parallel(self, bundle: VCBundle, mode: str) -> SearchResult:
        """
        Check batches of `jobs` candidates concurrently

        Scripts are rendered on the calling thread since z3 terms are not
        thread-safe; workers only run solver processes. Results are joined
        in enumeration order, so the least-indexed valid candidate wins.
        """
        backend: SubprocessBackend = self.backend
        rejected: List[Attempt] = []
        inconclusive = tried = 0
        stream = self.candidates(bundle)

        def run(job):
            results = []
            for name, script in job:
                result = backend.run_script(script, self.config.timeout_per_check)
                results.append((name, result))
                if not result.valid:
                    break
            return results

        with ThreadPool(self.config.jobs) as pool:
            while True:
                batch = list(itertools.islice(stream, self.config.jobs))
                if not batch:
                    break
                if self._out_of_time():
                    return SearchResult(None, tried, rejected, inconclusive, mode, timed_out=True)
                jobs = []
                for index, f in batch:
                    try:
                        clauses = self._clauses(bundle, f, mode)
                    except EncodingError as e:
                        self.logger.error(f"Candidate {index} {f}: {str(e)}")
                        rejected.append(Attempt(index, f, "EncodingError", f"encoding: {e}"))
                        jobs.append(None)
                        continue
                    jobs.append([(name, backend.render(clause)) for name, clause in clauses.items()])
                runnable = [job for job in jobs if job is not None]
                outcomes = iter(pool.map(run, runnable))
                for (index, f), job in zip(batch, jobs):
                    tried = index
                    if job is None:
                        continue
                    results = next(outcomes)
                    name, result = results[-1]
                    self.logger.debug(f"Candidate {index} {f}: {result.status}")
                    if result.valid:
                        return SearchResult(Attempt(index, f, VALID), tried, rejected, inconclusive, mode)
                    if result.status in INCONCLUSIVE:
                        inconclusive += 1
                    rejected.append(Attempt(index, f, result.status, name, dict(result.values)))
        return SearchResult(None, tried, rejected, inconclusive, mode)

    # loops -----------------------------------------------------------------

    def _dovetail(self, budget: int, tiers: Sequence[int]) -> Iterator[Tuple[int, int]]:
        """(candidate index, tier) pairs ordered by index + tier position"""
        for total in range(2, budget + len(tiers) + 1):
            for position, tier in enumerate(tiers, start=1):
                index = total - position
                if 1 <= index <= budget:
                    yield index, tier

    def _search_loop(self, bundle: VCBundle, mode: str) -> SearchResult:
        tiers = tiers_for(self.config.invariant_engine)
        stream = self.candidates(bundle)
        fetched: List[CandidateFn] = []
        frames: Dict[int, object] = {}
        pruned: Dict[int, Attempt] = {}
        rejected: List[Attempt] = []
        inconclusive = tried = 0

        for index, tier in self._dovetail(self.config.budget, tiers):
            while len(fetched) < index:
                nxt = next(stream, None)
                if nxt is None:
                    break
                fetched.append(nxt[1])
            if index > len(fetched) or index in pruned:
                continue
            if self._out_of_time():
                return SearchResult(None, tried, rejected, inconclusive, mode, timed_out=True)
            f = fetched[index - 1]
            tried = max(tried, index)
            if index not in frames:
                frames[index] = bundle.loop_frame(as_hole(f, bundle.encoder), mode)
                frame = frames[index]
                coupling = self.backend.check_valid(z3.Implies(frame.assumption, frame.coupling),
                                                    self.config.timeout_per_check)
                if coupling.status == INVALID:
                    self.logger.debug(f"Candidate {index} {f}: not a coupling")
                    pruned[index] = Attempt(index, f, INVALID, 'coupling', dict(coupling.values))
                    rejected.append(pruned[index])
                    continue
            attempt = self.engine.attempt(bundle, frames[index], tier)
            self.logger.debug(f"Candidate {index} {f}, tier {TIER_NAMES[tier]}: {attempt.status}"
                              + (f" ({attempt.failed})" if attempt.failed else ''))
            if attempt.found:
                return SearchResult(Attempt(index, f, VALID, invariant=attempt.invariant, tier=tier),
                                    tried, rejected, inconclusive, mode)
            if attempt.status in INCONCLUSIVE:
                inconclusive += 1
            if tier == tiers[-1]:
                failed = attempt.results.get(attempt.failed) if attempt.failed else None
                rejected.append(Attempt(index, f, attempt.status, attempt.failed,
                                        dict(failed.values) if failed else {}))
        return SearchResult(None, tried, rejected, inconclusive, mode)

    # oracle ----------------------------------------------------------------

    def oracle_instances(self, task: Task) -> List[Tuple[Dict[VarId, Value], Dict[str, object]]]:
        """
        Concrete (inputs, bindings) pairs for the exact cross-check

        `oracle:` lines of the task come first; unbound inputs take the
        configured defaults. Tasks with unbound dist or fun parameters and
        no oracle lines have no instances.
        """
        program = task.program
        types = {p.var: p.type for p in program.params}
        inputs = program.inputs
        symbols = list(program.symbols)
        lines = list(task.oracle) or [{}]
        instances = []
        for line in lines:
            if any(v.name not in line for v in symbols):
                continue
            choices = []
            for v in inputs:
                if v.name in line:
                    choices.append([line[v.name]])
                else:
                    choices.append(self._defaults(v, types[v]))
            bindings = {v.name: line[v.name] for v in symbols}
            for combo in itertools.product(*choices):
                instances.append((dict(zip(inputs, combo)), bindings))
                if len(instances) >= MAX_ORACLE_INSTANCES:
                    return instances
        return instances

    def _defaults(self, v: VarId, t: Type) -> List[Value]:
        if v.name in self.config.oracle_params:
            return list(self.config.oracle_params[v.name])
        if t.kind == 'real':
            return list(self.config.oracle_values)
        if t.kind == 'int':
            return list(DEFAULT_ORACLE_INTS)
        return t.domain()

    def cross_check(self, task: Task) -> List[OracleCheck]:
        """Run the exact oracle at every concrete instantiation"""
        env = check(task.program)
        domains = {}
        for v in task.prop.targets:
            t = value_type(env, v)
            if t.is_finite:
                domains[v] = t.domain()
        checks = []
        for s0, bindings in self.oracle_instances(task):
            shown: Dict[str, object] = {str(v): x for v, x in s0.items()}
            shown.update({k: _describe_binding(b) for k, b in bindings.items()})
            try:
                verdict = check_property(task.program, task.prop, s0, bindings, self.config.unroll,
                                         task.other, domains)
            except OracleError as e:
                self.logger.warning(f"Oracle inconclusive at {shown}: {str(e)}")
                checks.append(OracleCheck(shown, 'Inconclusive', None))
                continue
            checks.append(OracleCheck(shown, verdict.kind, verdict.holds, verdict.witness, verdict.gap,
                                      verdict.residual))
        if not checks:
            self.logger.warning("No concrete instantiation for the oracle cross-check")
        return checks


def _describe_binding(binding) -> str:
    if isinstance(binding, tuple) and binding and binding[0] == 'builtin':
        return binding[1]
    if isinstance(binding, (Bern, UniformInt)):
        return pretty_dist(binding)
    return str(binding)


def synthesize(task: Task, config: Optional[SynthConfig] = None,
               backend: Optional[SolverBackend] = None) -> Union[ProofReport, Failure]:
    """Run one synthesis with a fresh Synthesizer"""
    return Synthesizer(config, backend).synthesize(task)
