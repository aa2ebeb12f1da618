"""
Tests for the formula encoding of programs and couplings
"""
import logging
import random
from fractions import Fraction
from pathlib import Path

import pytest
import z3

from conftest import random_program
from couplesynth.encoding import (
    CouplingAtom, Encoder, eliminate_coupling, pmf_term, shares_pmf, sort_of, symmetry_transpositions,
    value_term,
)
from couplesynth.errors import EncodingError
from couplesynth.parser import parse
from couplesynth.semantics import interpret
from couplesynth.smt import INVALID, VALID, check_valid
from couplesynth.syntax import BOOL, INT, REAL, Bern, Const, Opaque, Product, VarId, dist_type, finite_range
from couplesynth.vcgen import enc

HALF = Bern(Const(Fraction(1, 2)))
THIRD = Bern(Const(Fraction(1, 3)))
CORPUS = Path(__file__).parent / 'corpus'


@pytest.fixture(autouse=True)
def setup_logging():
    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def coupling(lhs, rhs, apply, mode='full'):
    encoder = Encoder()
    return eliminate_coupling(CouplingAtom(Product(lhs), Product(rhs)), apply, encoder, encoder.const,
                              encoder.const, mode)


def swap(xs):
    return [xs[1], xs[0]]


class TestTerms:
    def test_sorts(self):
        assert sort_of(BOOL) == z3.BoolSort()
        assert sort_of(INT) == z3.IntSort()
        assert sort_of(finite_range(1, 6)) == z3.IntSort()
        assert sort_of(REAL) == z3.RealSort()
        with pytest.raises(EncodingError):
            sort_of(dist_type(BOOL))

    def test_rational_values(self):
        term = value_term(Fraction(1, 3))

        assert z3.is_true(z3.simplify(term == z3.RealVal('1/3')))

    def test_bernoulli_mass(self):
        encoder = Encoder()

        mass = pmf_term(THIRD, z3.BoolVal(False), encoder, encoder.const)

        assert z3.is_true(z3.simplify(mass == z3.RealVal('2/3')))

    def test_unregistered_variable(self):
        with pytest.raises(EncodingError, match="no type known"):
            Encoder().const(VarId('x'))


class TestPrograms:
    def test_assignments_become_equalities(self):
        formula = enc(parse("x ~ bern(1/2)\ny <- not x"))
        x, y = z3.Bool('x'), z3.Bool('y')

        assert check_valid(z3.Implies(formula, y == z3.Not(x))).status == VALID

    def test_conditionals_become_guarded_implications(self):
        formula = enc(parse("x ~ bern(1/2)\nif x { n <- 1 } else { n <- 2 }"))
        x, n = z3.Bool('x'), z3.Int('n')

        assert check_valid(z3.Implies(z3.And(formula, z3.Not(x)), n == 2)).status == VALID
        assert check_valid(z3.Implies(formula, n == 1)).status == INVALID

    def test_loops_are_rejected(self):
        with pytest.raises(EncodingError):
            enc(parse((CORPUS / 'faircoin.cpl').read_text()))

    @pytest.mark.parametrize('seed', range(5))
    def test_samples_pin_every_reachable_state(self, seed):
        rng = random.Random(seed)
        for _ in range(20):
            source, names = random_program(rng, fair=True)
            program = parse(source)
            formula = enc(program)
            flips = [n for n in names if n.startswith('s')]

            states = list(interpret(program, {}).pmf)

            assert len(states) == 2 ** len(flips)
            for state in states:
                values = {str(v): x for v, x in state.items()}
                drawn = z3.And([z3.Bool(n) == values[n] for n in flips])
                pinned = z3.And([z3.Bool(n) == values[n] for n in names])
                assert check_valid(z3.Not(z3.And(formula, drawn))).status == INVALID, source
                assert check_valid(z3.Implies(z3.And(formula, drawn), pinned)).status == VALID, source


class TestCouplings:
    def test_swap_of_identical_coins(self):
        assert check_valid(coupling((HALF, HALF), (HALF, HALF), swap)).status == VALID

    def test_swap_of_different_coins(self):
        assert check_valid(coupling((THIRD, HALF), (THIRD, HALF), swap)).status == INVALID

    def test_negating_a_fair_coin(self):
        negate = lambda xs: [z3.Not(xs[0])]

        assert check_valid(coupling((HALF,), (HALF,), negate)).status == VALID
        assert check_valid(coupling((THIRD,), (THIRD,), negate)).status == INVALID

    def test_constant_function_is_not_injective(self):
        constant = lambda xs: [z3.BoolVal(True)]

        assert check_valid(coupling((HALF,), (HALF,), constant)).status == INVALID

    def test_elided_mode_uses_symmetry(self):
        mu = Opaque(VarId('mu'), BOOL)

        assert check_valid(coupling((mu, mu), (mu, mu), swap, 'elided')).status == VALID
        assert check_valid(coupling((mu,), (mu,), lambda xs: [z3.Not(xs[0])], 'elided')).status == INVALID

    def test_opaque_needs_elided_mode(self):
        mu = Opaque(VarId('mu'), BOOL)

        with pytest.raises(EncodingError, match="elided"):
            coupling((mu,), (mu,), lambda xs: list(xs))

    def test_symmetries(self):
        assert symmetry_transpositions(Product((HALF, HALF, THIRD))) == [(0, 1)]
        assert shares_pmf(CouplingAtom(Product((HALF,)), Product((HALF,))))
        assert not shares_pmf(CouplingAtom(Product((HALF,)), Product((THIRD,))))
