"""
Tests for the synthesis driver
"""
import json
import logging
import os
import random
from fractions import Fraction
from pathlib import Path

import pytest

from conftest import random_program
from couplesynth.candidates import Base, Const, Neg, Swap
from couplesynth.config import REPORT_SCHEMA, load_config
from couplesynth.errors import EncodingError, SoundnessError
from couplesynth.parser import parse_task
from couplesynth.smt import VALID, InProcessBackend, SolverBackend, SolverResult, SubprocessBackend
from couplesynth.synth import Failure, OracleCheck, ProofReport, Synthesizer, check_signature, synthesize
from couplesynth.syntax import BOOL, INT, Const as Literal, VarId
from couplesynth.vcgen import fix_parameters, vc_for_task

CORPUS = Path(__file__).parent / 'corpus'
INDEPENDENT_FLIPS = "prop: independent x y\nx ~ bern(1/2)\ny ~ bern(1/2)\nreturn (x, y)"


@pytest.fixture(autouse=True)
def setup_logging():
    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


@pytest.fixture
def synthesizer():
    config = load_config(in_process=True, budget=40, timeout_per_check=20.0)
    return Synthesizer(config, InProcessBackend(config.timeout_per_check))


def corpus_task(name: str):
    return parse_task((CORPUS / name).read_text(), name)


class AlwaysValid(SolverBackend):
    """A backend that accepts every formula"""

    name = 'always-valid'

    def check_valid(self, formula, timeout=None):
        return self._record(SolverResult(VALID))


class TestProofs:
    def test_independent_flips(self, synthesizer):
        report = synthesizer.synthesize(parse_task(INDEPENDENT_FLIPS))

        assert isinstance(report, ProofReport)
        assert report.candidate == Swap(2, 4, Base())
        assert report.index == 6
        assert report.strategy == 'split'
        assert all(check.holds for check in report.oracle)

    def test_faircoin(self, synthesizer):
        report = synthesizer.synthesize(corpus_task('faircoin.cpl'))

        assert isinstance(report, ProofReport)
        assert report.candidate.call((True, False), {}) == (False, True)
        assert report.index == 2
        assert report.invariants
        assert {p.attempt.tier for p in report.instances} == {2}
        assert len(report.oracle) == 3
        assert all(check.verdict == 'Uniform' for check in report.oracle)

    def test_report_json(self, synthesizer):
        report = synthesizer.synthesize(parse_task(INDEPENDENT_FLIPS, 'flips.cpl'))

        payload = report.to_json()

        assert payload['schema'] == REPORT_SCHEMA
        assert payload['status'] == 'proved'
        assert payload['task'] == 'flips.cpl'
        assert payload['property'] == 'independent x y'
        assert payload['coupling']['ast'] == 'Swap(2, 4, Base)'
        assert payload['invariant'] is None
        assert payload['stats']['checks'] > 0
        json.dumps(payload)


class TestFailures:
    @pytest.mark.parametrize('name', ['biased.cpl', 'gap.cpl', 'copy.cpl'])
    def test_negative_controls(self, name):
        config = load_config(in_process=True, budget=12)
        result = synthesize(corpus_task(name), config, InProcessBackend(config.timeout_per_check))

        assert isinstance(result, Failure)
        assert result.reason == 'budget-exhausted'
        assert 0 < result.tried <= 12
        assert result.rejected
        assert all(check.holds is False for check in result.oracle)

    def test_failure_json(self):
        config = load_config(in_process=True, budget=3)
        result = synthesize(corpus_task('biased.cpl'), config, InProcessBackend(config.timeout_per_check))

        payload = result.to_json()

        assert payload['status'] == 'failed'
        assert payload['reason'] == 'budget-exhausted'
        assert payload['oracle'][0]['verdict'] == 'NotUniform'
        assert payload['oracle'][0]['gap'] == '1/2'
        json.dumps(payload)

    def test_refuted_proof_is_a_soundness_error(self):
        config = load_config(in_process=True, budget=5)

        with pytest.raises(SoundnessError, match="oracle"):
            Synthesizer(config, AlwaysValid(1.0)).synthesize(corpus_task('biased.cpl'))

    def test_total_timeout(self):
        config = load_config(in_process=True, budget=40, total_timeout=0.0)
        result = synthesize(corpus_task('biased.cpl'), config, InProcessBackend(5.0))

        assert isinstance(result, Failure)
        assert result.reason == 'timeout'

    def test_unconfirmed_proof_is_a_failure(self, synthesizer, monkeypatch):
        monkeypatch.setattr(synthesizer, 'cross_check', lambda task: [])

        result = synthesizer.synthesize(parse_task(INDEPENDENT_FLIPS))

        assert isinstance(result, Failure)
        assert result.reason == 'unconfirmed'
        assert result.candidate == Swap(2, 4, Base())
        assert result.tried == 6
        payload = result.to_json()
        assert payload['reason'] == 'unconfirmed'
        assert payload['candidate'] == 'Swap(2, 4, Base)'

    def test_inconclusive_oracle_does_not_confirm(self, synthesizer, monkeypatch):
        monkeypatch.setattr(synthesizer, 'cross_check', lambda task: [OracleCheck({}, 'Inconclusive', None)])

        result = synthesizer.synthesize(parse_task(INDEPENDENT_FLIPS))

        assert isinstance(result, Failure)
        assert result.reason == 'unconfirmed'
        assert result.oracle[0].holds is None


class TestSignatures:
    def test_fitting_candidates(self):
        check_signature(Neg(1, Swap(1, 2, Base())), [BOOL, BOOL])
        check_signature(Const((Literal(True), Literal(3))), [BOOL, INT])

    @pytest.mark.parametrize('f, types', [
        (Swap(1, 3, Base()), [BOOL, BOOL]),
        (Swap(1, 2, Base()), [BOOL, INT]),
        (Neg(2, Base()), [BOOL, INT]),
        (Const((Literal(True),)), [BOOL, BOOL]),
    ])
    def test_mismatches(self, f, types):
        with pytest.raises(EncodingError, match="sort mismatch"):
            check_signature(f, types)


class TestOracle:
    def test_task_oracle_lines(self, synthesizer):
        instances = synthesizer.oracle_instances(corpus_task('ballot.cpl'))

        assert len(instances) == 4
        assert instances[0] == ({VarId('n'): 2, VarId('na'): 1}, {})

    def test_default_values(self, synthesizer):
        instances = synthesizer.oracle_instances(corpus_task('lastflips.cpl'))

        assert len(instances) == 3 * 3
        assert {s0[VarId('p')] for s0, _ in instances} == {Fraction(1, 2), Fraction(1, 3), Fraction(3, 4)}

    def test_command_line_bindings(self):
        config = load_config(in_process=True, oracle_params={'p': [Fraction(1, 5)]})

        instances = Synthesizer(config, InProcessBackend(5.0)).oracle_instances(corpus_task('faircoin.cpl'))

        assert instances == [({VarId('p'): Fraction(1, 5)}, {})]

    def test_symbols_need_oracle_lines(self, synthesizer):
        source = (CORPUS / 'bayes.cpl').read_text()
        task = parse_task('\n'.join(line for line in source.splitlines() if not line.startswith('oracle:')))

        assert synthesizer.oracle_instances(task) == []
        assert synthesizer.cross_check(task) == []

    def test_cross_check(self, synthesizer):
        checks = synthesizer.cross_check(corpus_task('biased.cpl'))

        assert len(checks) == 1
        assert checks[0].verdict == 'NotUniform'
        assert checks[0].gap == Fraction(1, 2)


class TestDovetail:
    def test_order(self, synthesizer):
        pairs = list(synthesizer._dovetail(3, [1, 2]))

        assert pairs == [(1, 1), (2, 1), (1, 2), (3, 1), (2, 2), (3, 2)]


class TestParallelSearch:
    def test_encoding_errors_are_rejections(self, tmp_path, monkeypatch):
        solver = tmp_path / 'solver'
        solver.write_text("#!/bin/sh\ncat > /dev/null\necho unsat\n")
        os.chmod(solver, 0o755)
        config = load_config(solver_path=str(solver), jobs=2, budget=4, timeout_per_check=5.0)
        synthesizer = Synthesizer(config, SubprocessBackend(str(solver), timeout=5.0))
        clauses = synthesizer._clauses

        def failing_base(bundle, f, mode):
            if isinstance(f, Base):
                raise EncodingError("no clauses for Base")
            return clauses(bundle, f, mode)

        monkeypatch.setattr(synthesizer, '_clauses', failing_base)
        bundle = vc_for_task(parse_task(INDEPENDENT_FLIPS))
        _, instances = synthesizer._strategy(bundle)

        result = synthesizer._search_loop_free(fix_parameters(bundle, instances[0]), 'full')

        assert result.found is not None
        assert result.found.index == 2
        assert [attempt.status for attempt in result.rejected] == ['EncodingError']
        assert result.rejected[0].candidate == Base()


@pytest.fixture
def corpus_synthesizer():
    config = load_config(in_process=True, budget=500, timeout_per_check=20.0)
    return Synthesizer(config, InProcessBackend(config.timeout_per_check))


@pytest.mark.slow
class TestCorpusProofs:
    def test_fairdie(self, corpus_synthesizer):
        report = corpus_synthesizer.synthesize(corpus_task('fairdie.cpl'))

        assert isinstance(report, ProofReport)
        assert report.oracle
        assert all(check.verdict == 'Uniform' for check in report.oracle)

    def test_noisysum(self, corpus_synthesizer):
        report = corpus_synthesizer.synthesize(corpus_task('noisysum.cpl'))

        assert isinstance(report, ProofReport)
        assert report.index <= 50
        assert all(check.holds for check in report.oracle)

    def test_lastflips(self, corpus_synthesizer):
        report = corpus_synthesizer.synthesize(corpus_task('lastflips.cpl'))

        assert isinstance(report, ProofReport)
        assert len(report.oracle) == 3 * 3
        assert all(check.holds for check in report.oracle)

    def test_bayes_needs_elision(self, corpus_synthesizer):
        report = corpus_synthesizer.synthesize(corpus_task('bayes.cpl'))

        assert isinstance(report, ProofReport)
        assert report.index <= 50
        assert set(report.modes) == {'elided'}
        assert all(check.holds for check in report.oracle)

    def test_bayes_without_oracle_lines_is_unconfirmed(self, corpus_synthesizer):
        source = (CORPUS / 'bayes.cpl').read_text()
        task = parse_task('\n'.join(line for line in source.splitlines() if not line.startswith('oracle:')))

        result = corpus_synthesizer.synthesize(task)

        assert isinstance(result, Failure)
        assert result.reason == 'unconfirmed'
        assert result.candidate is not None

    def test_ballot(self, corpus_synthesizer):
        report = corpus_synthesizer.synthesize(corpus_task('ballot.cpl'))

        assert isinstance(report, ProofReport)
        assert report.index <= 50
        assert report.invariants
        assert len(report.oracle) == 4
        assert all(check.holds for check in report.oracle)


def random_property(rng: random.Random, names) -> str:
    if len(names) == 1:
        return f"uniform {names[0]}"
    v, w = rng.sample(names, 2)
    return rng.choice([f"uniform {v}", f"independent {v} {w}", f"equal [{v}] [{w}]"])


@pytest.mark.slow
class TestRandomPrograms:
    @pytest.mark.parametrize('seed', range(4))
    def test_proofs_agree_with_the_oracle(self, seed):
        rng = random.Random(seed)
        config = load_config(in_process=True, budget=30, timeout_per_check=10.0)
        synthesizer = Synthesizer(config, InProcessBackend(config.timeout_per_check))
        for _ in range(50):
            source, names = random_program(rng)
            task = parse_task(f"prop: {random_property(rng, names)}\n{source}")
            truth = synthesizer.cross_check(task)

            result = synthesizer.synthesize(task)

            assert truth, source
            if isinstance(result, ProofReport):
                assert all(check.holds for check in truth), source
                assert all(check.holds for check in result.oracle), source
            if any(check.holds is False for check in truth):
                assert isinstance(result, Failure), source
