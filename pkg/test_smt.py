"""
Tests for SMT-LIB rendering and the solver backends
"""
import itertools
import logging
import os
import random

import pytest
import z3

from couplesynth.config import SOLVER_FLAGS_ENV, SolverConfig, load_config
from couplesynth.errors import EncodingError, SolverUnavailableError
from couplesynth.smt import (
    INVALID, SOLVER_ERROR, UNKNOWN, VALID, InProcessBackend, SubprocessBackend, check_valid, close, declarations,
    detect_logic, make_backend, parse_model, to_chc, to_smtlib,
)

MODEL = """(model
  (define-fun x () Int
    5)
  (define-fun |p@1| () Real (/ 1.0 3.0))
  (define-fun y () Int (- 3))
  (define-fun f ((x!0 Int)) Int 0)
)"""


@pytest.fixture(autouse=True)
def setup_logging():
    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


@pytest.fixture
def fake_solver(tmp_path):
    """Write an executable that ignores its input and prints `output`"""
    def make(output: str) -> str:
        path = tmp_path / 'solver'
        path.write_text("#!/bin/sh\ncat > /dev/null\ncat <<'EOF'\n" + output + "\nEOF\n")
        os.chmod(path, 0o755)
        return str(path)
    return make


class TestRendering:
    def test_script_shape(self):
        x = z3.Int('x')

        script = to_smtlib(x > 0, comments=['demo'])

        assert script.startswith('; demo\n(set-logic QF_LIA)\n')
        assert '(declare-fun x () Int)' in script
        assert '(assert (> x 0))' in script
        assert script.endswith('(check-sat)\n')

    def test_model_request(self):
        assert to_smtlib(z3.Bool('b'), get_model=True).endswith('(check-sat)\n(get-model)\n')

    def test_rendering_is_deterministic(self):
        a, b = z3.Ints('a b')

        assert to_smtlib([a < b, b < 3]) == to_smtlib([a < b, b < 3])
        assert [d.name() for d in declarations([b < 3, a < b])] == ['a', 'b']

    def test_detect_logic(self):
        x, y = z3.Ints('x y')
        p, q = z3.Reals('p q')
        f = z3.Function('f', z3.IntSort(), z3.IntSort())

        assert detect_logic(z3.Bool('b')) == 'QF_UF'
        assert detect_logic(x + 2 * y > 0) == 'QF_LIA'
        assert detect_logic(p * q > 0) == 'QF_NRA'
        assert detect_logic(f(x) > 0) == 'QF_UFLIA'
        assert detect_logic(z3.ForAll([x], x + y > 0)) == 'LIA'
        assert detect_logic(z3.ToReal(x) < p) == 'QF_LIRA'

    def test_close(self):
        x = z3.Int('x')

        assert z3.is_quantifier(close(x > 0))
        assert close(z3.BoolVal(True)).eq(z3.BoolVal(True))

    def test_horn_export(self):
        inv = z3.Function('inv', z3.IntSort(), z3.BoolSort())
        x = z3.Int('x')

        script = to_chc({'initiation': z3.Implies(x == 0, inv(x))})

        assert '(set-logic HORN)' in script
        assert '; initiation' in script
        assert '(declare-fun inv (Int) Bool)' in script

    def test_horn_export_needs_clauses(self):
        with pytest.raises(EncodingError, match="no loop clauses"):
            to_chc({})


class TestModels:
    def test_constants_are_read(self):
        values = parse_model(MODEL)

        assert values == {'x': '5', 'p@1': '(/ 1.0 3.0)', 'y': '(- 3)'}

    def test_bare_definitions(self):
        assert parse_model("(define-fun b () Bool false)") == {'b': 'false'}

    def test_empty(self):
        assert parse_model('') == {}


class TestInProcess:
    def test_valid(self):
        x = z3.Int('x')

        result = check_valid(z3.Implies(x > 1, x > 0))

        assert result.status == VALID
        assert result.valid

    def test_invalid_with_counter_model(self):
        x = z3.Int('x')

        result = InProcessBackend(5.0).check_valid(x > 0)

        assert result.status == INVALID
        assert int(result.values['x']) <= 0
        assert result.model

    def test_stats(self):
        backend = InProcessBackend(5.0)
        x = z3.Int('x')
        backend.check_valid(x == x)
        backend.check_valid(x > 0)

        stats = backend.stats()

        assert stats['backend'] == 'z3-api'
        assert stats['checks'] == 2
        assert stats['statuses'] == {VALID: 1, INVALID: 1}


class TestSubprocess:
    def test_unsat_is_valid(self, fake_solver):
        backend = SubprocessBackend(fake_solver('unsat'), timeout=5.0)

        assert backend.check_valid(z3.Bool('b')).status == VALID

    def test_sat_carries_the_model(self, fake_solver):
        backend = SubprocessBackend(fake_solver('sat\n' + MODEL), timeout=5.0)

        result = backend.check_valid(z3.Int('x') > 0)

        assert result.status == INVALID
        assert result.values['x'] == '5'

    def test_unknown(self, fake_solver):
        backend = SubprocessBackend(fake_solver('unknown'), timeout=5.0)

        assert backend.check_valid(z3.Bool('b')).status == UNKNOWN

    def test_garbage_is_a_solver_error(self, fake_solver):
        backend = SubprocessBackend(fake_solver('(error "line 1: bad")'), timeout=5.0)

        result = backend.check_valid(z3.Bool('b'))

        assert result.status == SOLVER_ERROR
        assert 'bad' in result.detail

    def test_command_carries_the_time_limit(self, fake_solver):
        backend = SubprocessBackend(fake_solver('unsat'), args=['-v:0'], timeout=2.5)

        assert backend.command(2.5)[-2:] == ['-T:3', '-v:0']

    def test_configured_flags(self, fake_solver):
        backend = SubprocessBackend(fake_solver('unsat'), timeout=2.0, flags=['--lang', 'smt2', '--incremental'],
                                    time_limit_flag='--tlimit-per={seconds}000')

        assert backend.command(2.0)[1:] == ['--lang', 'smt2', '--incremental', '--tlimit-per=2000']

    def test_no_time_limit_flag(self, fake_solver):
        backend = SubprocessBackend(fake_solver('unsat'), timeout=2.0, flags=['--in'], time_limit_flag='')

        assert backend.command(2.0)[1:] == ['--in']


class TestSelection:
    def test_in_process(self):
        assert isinstance(make_backend(SolverConfig(in_process=True)), InProcessBackend)

    def test_no_path_means_in_process(self):
        assert isinstance(make_backend(SolverConfig()), InProcessBackend)

    def test_executable_path(self, fake_solver):
        backend = make_backend(SolverConfig(path=fake_solver('unsat'), timeout=3.0))

        assert isinstance(backend, SubprocessBackend)
        assert backend.timeout == 3.0

    def test_missing_binary(self, tmp_path):
        with pytest.raises(SolverUnavailableError, match="not found"):
            make_backend(SolverConfig(path=str(tmp_path / 'no-such-solver')))

    def test_flags_reach_the_backend(self, fake_solver):
        config = SolverConfig(path=fake_solver('unsat'), flags=('--smt2',), time_limit_flag='')

        assert make_backend(config).command(1.0)[1:] == ['--smt2']

    def test_flags_from_the_environment(self, monkeypatch):
        monkeypatch.setenv(SOLVER_FLAGS_ENV, '--smt2 --quiet')

        assert load_config(in_process=True).solver.flags == ('--smt2', '--quiet')

    def test_default_flags(self, monkeypatch):
        monkeypatch.delenv(SOLVER_FLAGS_ENV, raising=False)

        assert load_config(in_process=True).solver.flags == ('-smt2', '-in')


OPERATORS = ('not', 'and', 'or', 'implies', 'eq')


def random_formula(rng: random.Random, names, depth: int):
    if depth == 0 or rng.random() < 0.25:
        return ('var', rng.choice(names))
    op = rng.choice(OPERATORS)
    if op == 'not':
        return (op, random_formula(rng, names, depth - 1))
    return (op, random_formula(rng, names, depth - 1), random_formula(rng, names, depth - 1))


def to_z3(tree):
    op, *args = tree
    if op == 'var':
        return z3.Bool(args[0])
    terms = [to_z3(a) for a in args]
    return {'not': lambda a: z3.Not(a), 'and': lambda a, b: z3.And(a, b), 'or': lambda a, b: z3.Or(a, b),
            'implies': lambda a, b: z3.Implies(a, b), 'eq': lambda a, b: a == b}[op](*terms)


def evaluate(tree, values) -> bool:
    op, *args = tree
    if op == 'var':
        return values[args[0]]
    terms = [evaluate(a, values) for a in args]
    return {'not': lambda a: not a, 'and': lambda a, b: a and b, 'or': lambda a, b: a or b,
            'implies': lambda a, b: (not a) or b, 'eq': lambda a, b: a == b}[op](*terms)


class TestValidityAgainstTruthTables:
    @pytest.mark.parametrize('seed', range(10))
    def test_valid_exactly_when_no_row_falsifies(self, seed):
        rng = random.Random(seed)
        backend = InProcessBackend(10.0)
        for _ in range(20):
            names = [f"b{k}" for k in range(rng.randint(1, 8))]
            tree = random_formula(rng, names, 4)
            rows = itertools.product([False, True], repeat=len(names))
            falsified = any(not evaluate(tree, dict(zip(names, row))) for row in rows)

            result = backend.check_valid(to_z3(tree))

            assert result.status == (INVALID if falsified else VALID), tree
            assert backend.check_valid(to_z3(('or', tree, ('not', tree)))).status == VALID
