"""
Tests for the program rewrites
"""
import logging
from fractions import Fraction
from pathlib import Path

import pytest

from couplesynth.checker import check
from couplesynth.errors import TransformError
from couplesynth.parser import parse
from couplesynth.semantics import interpret, value_masses
from couplesynth.syntax import Bern, Const, Product, Return, Sample, VarId, While, tag
from couplesynth.transform import (
    PAD_PREFIX, cross_product, hoist, pad_samples, self_compose, sequence, unroll,
)

CORPUS = Path(__file__).parent / 'corpus'
HALF = Bern(Const(Fraction(1, 2)))


@pytest.fixture(autouse=True)
def setup_logging():
    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


class TestHoist:
    def test_front_samples_are_merged(self):
        program = parse("x ~ bern(1/2)\nz <- not x\ny ~ bern(1/3)\nreturn (z, y)")

        hoisted = hoist(program)

        assert hoisted.front == (VarId('x'), VarId('y'))
        assert hoisted.front_dist == Product((HALF, Bern(Const(Fraction(1, 3)))))
        assert len(hoisted.rest) == 1
        assert hoisted.loop is None
        assert hoisted.returns == (VarId('z'), VarId('y'))

    def test_loop_samples_are_merged(self):
        hoisted = hoist(parse((CORPUS / 'faircoin.cpl').read_text()))

        assert hoisted.front == ()
        assert hoisted.loop.samples == (VarId('x'), VarId('y'))
        assert len(hoisted.loop.dist.components) == 2
        assert len(hoisted.rest) == 2

    def test_hoisting_keeps_the_distribution(self):
        program = parse("x ~ bern(1/3)\ny <- x\nz ~ bern(1/2)\nw <- y and z")

        before = value_masses(interpret(program, {}), VarId('w'))
        after = value_masses(interpret(hoist(program).to_program(), {}), VarId('w'))

        assert before == after

    def test_sample_under_conditional(self):
        program = parse("x ~ bern(1/2)\nif x { y ~ bern(1/2) } else { y <- false }")

        with pytest.raises(TransformError, match="conditional"):
            hoist(program)

    def test_loop_reading_sample_before_drawing_it(self):
        program = parse("x <- false\ny <- false\nwhile not y { z <- x\n x ~ bern(1/2)\n y <- x }")

        with pytest.raises(TransformError, match="before sampling"):
            hoist(program)


class TestComposition:
    def test_self_compose_tags_both_copies(self):
        program = parse("program p(n: int) { x ~ bern(1/2)\n return (x) }")

        composed = self_compose(program)

        samples = [s for s in composed.body if isinstance(s, Sample)]
        assert [s.targets for s in samples] == [(VarId('x', 1),), (VarId('x', 2),)]
        assert composed.returns == (VarId('x', 1), VarId('x', 2))
        assert isinstance(composed.body[-1], Return)
        assert [p.var for p in composed.params] == [VarId('n', 1), VarId('n', 2)]

    def test_sequence_rejects_shared_variables(self):
        program = parse("x ~ bern(1/2)")

        with pytest.raises(TransformError, match="share variable"):
            sequence(program, program)

    def test_dist_symbols_are_shared(self):
        program = parse("program p(mu: dist bool) { x ~ mu\n return (x) }")

        composed = self_compose(program)

        assert list(composed.symbols) == [VarId('mu')]
        check(composed)

    def test_cross_product_runs_loops_in_lockstep(self):
        program = parse((CORPUS / 'lastflips.cpl').read_text())

        product = cross_product(tag(program, 1), tag(program, 2))

        loop = product.find_loop()
        assert isinstance(loop, While)
        sample = loop.body[0]
        assert sample.targets == (VarId('x', 1), VarId('y', 1), VarId('x', 2), VarId('y', 2))
        assert sum(isinstance(s, While) for s in product.body) == 1

    def test_cross_product_needs_counter_loops(self):
        program = parse((CORPUS / 'faircoin.cpl').read_text())

        with pytest.raises(TransformError, match="counter"):
            cross_product(tag(program, 1), tag(program, 2))

    def test_cross_product_needs_equal_bounds(self):
        first = parse("x <- false\nfor i in 1..3 { x ~ bern(1/2) }\nreturn (x)")
        second = parse("x <- false\nfor i in 1..4 { x ~ bern(1/2) }\nreturn (x)")

        with pytest.raises(TransformError, match="not syntactically identical"):
            cross_product(tag(first, 1), tag(second, 2))


class TestUnroll:
    def test_literal_bounds(self):
        program = parse("x <- false\nfor i in 1..3 { x ~ bern(1/2) }\nreturn (x)")

        unrolled = unroll(program)

        assert unrolled.find_loop() is None
        targets = [s.targets[0] for s in unrolled.body if isinstance(s, Sample)]
        assert targets == [VarId('x[1]'), VarId('x[2]'), VarId('x[3]')]
        assert unrolled.returns == (VarId('x[3]'),)

    def test_iteration_count_is_checked(self):
        program = parse("x <- false\nfor i in 1..3 { x ~ bern(1/2) }\nreturn (x)")

        with pytest.raises(TransformError, match="3 iterations"):
            unroll(program, iterations=4)

    def test_symbolic_bounds(self):
        program = parse((CORPUS / 'lastflips.cpl').read_text())

        with pytest.raises(TransformError, match="not literal"):
            unroll(program)

    def test_while_loops_cannot_be_unrolled(self):
        program = parse((CORPUS / 'faircoin.cpl').read_text())

        with pytest.raises(TransformError, match="counter-driven"):
            unroll(program)


class TestPadding:
    def test_shorter_side_gets_dummy_samples(self):
        left = hoist(parse("x ~ bern(1/2)"))
        right = hoist(parse("a ~ bern(1/2)\nb ~ bern(1/3)"))

        padded_left, padded_right = pad_samples(left, right)

        assert padded_left.front == (VarId('x'), VarId(f"{PAD_PREFIX}2"))
        assert padded_left.front_dist.components[1] == Bern(Const(Fraction(1, 3)))
        assert padded_right.front == right.front
