"""
Tests for the .cpl parser
"""
import logging
from fractions import Fraction
from pathlib import Path

import pytest

from couplesynth.errors import ParseError
from couplesynth.parser import parse, parse_expr, parse_task
from couplesynth.syntax import (
    BOOL, REAL, Bern, Binary, Const, Opaque, Sample, UniformInt, Unary, Var, VarId, While, pretty,
)

CORPUS = Path(__file__).parent / 'corpus'


@pytest.fixture(autouse=True)
def setup_logging():
    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def read(name: str) -> str:
    return (CORPUS / name).read_text()


class TestPrograms:
    def test_faircoin_shape(self):
        program = parse(read('faircoin.cpl'))

        assert program.name == 'faircoin'
        assert [(p.var, p.type) for p in program.params] == [(VarId('p'), REAL)]
        assert program.returns == (VarId('x'),)
        loop = program.find_loop()
        assert isinstance(loop, While)
        assert loop.counter is None
        assert loop.cond == Binary('=', Var(VarId('x')), Var(VarId('y')))

    def test_bare_body_without_program_header(self):
        program = parse("x ~ bern(1/2)\ny <- not x")

        assert program.name is None
        assert program.params == ()
        sample = program.body[0]
        assert isinstance(sample, Sample)
        assert sample.dist == Bern(Const(Fraction(1, 2)))
        assert program.body[1].expr == Unary('not', Var(VarId('x')))

    def test_comments_are_ignored(self):
        program = parse("# heading\nx ~ bern(1/2) # trailing\n")

        assert len(program.body) == 1

    def test_vector_sample_and_uniform_int(self):
        program = parse("x, y ~ bern(1/3) * uniformInt(1, 6)")

        sample = program.body[0]
        assert sample.targets == (VarId('x'), VarId('y'))
        assert sample.dist.components == (Bern(Const(Fraction(1, 3))), UniformInt(1, 6))

    def test_literal_for_loop_over_arrays_is_unrolled(self):
        program = parse(read('noisysum.cpl'))

        assert program.find_loop() is None
        sampled = [v for s in program.body if isinstance(s, Sample) for v in s.targets]
        assert sampled == [VarId('noise[1]'), VarId('noise[2]'), VarId('noise[3]')]

    def test_symbolic_for_loop_becomes_counter_loop(self):
        program = parse(read('lastflips.cpl'))

        loop = program.find_loop()
        assert loop is not None
        assert loop.counter.var == VarId('i')
        assert loop.counter.hi == Var(VarId('n'))

    def test_dist_parameter_is_opaque(self):
        program = parse("program p(mu: dist bool) { x ~ mu\n return (x) }")

        assert program.symbols == {VarId('mu'): program.params[0].type}
        assert program.body[0].dist == Opaque(VarId('mu'), BOOL)

    def test_tagged_names_round_trip_through_pretty(self):
        program = parse("program p(n: int) { x ~ bern(1/2)\n return (x) }")

        assert 'program p(n: int)' in pretty(program)
        assert 'x ~ bern(1/2)' in pretty(program)


class TestErrors:
    def test_syntax_error_has_location(self):
        with pytest.raises(ParseError) as error:
            parse("x ~ bern(1/2)\ny <- <- 3")

        assert error.value.line == 2

    def test_unknown_distribution(self):
        with pytest.raises(ParseError, match="unknown distribution"):
            parse("x ~ poisson")

    def test_unknown_function(self):
        with pytest.raises(ParseError, match="unknown function"):
            parse("x ~ bern(1/2)\ny <- g(x)")

    def test_task_needs_one_property(self):
        with pytest.raises(ParseError, match="prop"):
            parse_task("x ~ bern(1/2)")

    def test_support_arity_mismatch(self):
        with pytest.raises(ParseError, match="arity"):
            parse_task("prop: uniform (x, y) over {true}\nx ~ bern(1/2)\ny ~ bern(1/2)")


class TestTasks:
    def test_uniform_property(self):
        task = parse_task(read('faircoin.cpl'), 'faircoin.cpl')

        assert task.prop.kind == 'uniform'
        assert task.prop.targets == (VarId('x'),)
        assert task.prop.support is None
        assert task.path == 'faircoin.cpl'
        assert task.oracle == ()

    def test_uniform_with_support(self):
        task = parse_task(read('fairdie.cpl'))

        assert task.prop.targets == (VarId('x'), VarId('y'), VarId('z'))
        assert len(task.prop.support) == 6
        assert (True, True, True) not in task.prop.support

    def test_equality_events(self):
        task = parse_task(read('gap.cpl'))

        assert task.prop.kind == 'equal'
        left, right = task.prop.events
        assert left == Binary('and', Var(VarId('x')), Var(VarId('y')))
        assert right == Var(VarId('x'))

    def test_oracle_lines(self):
        task = parse_task(read('ballot.cpl'))

        assert len(task.oracle) == 4
        assert task.oracle[0] == {'n': 2, 'na': 1}

    def test_oracle_bindings_for_symbols(self):
        task = parse_task(read('bayes.cpl'))

        assert task.prop.kind == 'cond-independent'
        first = task.oracle[0]
        assert first['mu'] == Bern(Const(Fraction(1, 2)))
        assert first['f'] == ('builtin', 'and')

    def test_parse_expr_resolves_against_program(self):
        program = parse(read('gap.cpl'))

        e = parse_expr("x and not y", program)

        assert e == Binary('and', Var(VarId('x')), Unary('not', Var(VarId('y'))))
