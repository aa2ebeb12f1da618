"""
Tests for the exact interpreter and the verdict checks
"""
import logging
from fractions import Fraction
from pathlib import Path

import pytest

from couplesynth.config import UnrollPolicy
from couplesynth.errors import CheckError, OracleError, UnrollBudgetError
from couplesynth.parser import parse, parse_task
from couplesynth.semantics import (
    check_cond_independent, check_equality, check_independent, check_property, check_uniform,
    dist_to_json, eval_expr, interpret, marginal, probability, value_masses,
)
from couplesynth.syntax import Bern, Const, VarId

CORPUS = Path(__file__).parent / 'corpus'
P = VarId('p')
X = VarId('x')
Y = VarId('y')


@pytest.fixture(autouse=True)
def setup_logging():
    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def load(name: str):
    return parse_task((CORPUS / name).read_text(), name)


class TestInterpreter:
    def test_masses_sum_to_one(self):
        program = parse("x ~ bern(1/3)\ny ~ bern(1/2)\nz <- x and y")

        d = interpret(program, {})

        assert d.residual == 0
        assert d.total == 1
        assert probability(d, lambda s: s[VarId('z')]) == Fraction(1, 6)

    def test_faircoin_residual_after_fixed_unrolling(self):
        task = load('faircoin.cpl')

        d = interpret(task.program, {P: Fraction(1, 3)}, UnrollPolicy.fixed(50))

        assert d.residual == Fraction(5, 9) ** 50
        assert d.total == 1
        masses = value_masses(d, X)
        assert masses[True] == masses[False]

    def test_faircoin_is_fair_for_every_bias(self):
        task = load('faircoin.cpl')

        for p in (Fraction(1, 2), Fraction(1, 3), Fraction(3, 4)):
            d = interpret(task.program, {P: p})
            assert check_uniform(d, X).holds

    def test_unroll_budget(self):
        task = load('faircoin.cpl')
        policy = UnrollPolicy(max_iterations=3)

        with pytest.raises(UnrollBudgetError) as error:
            interpret(task.program, {P: Fraction(1, 2)}, policy)

        assert error.value.residual == Fraction(1, 2) ** 3

    def test_conditionals_split_mass(self):
        program = parse("x ~ bern(1/4)\nif x { y <- 1 } else { y <- 2 }")

        d = interpret(program, {})

        assert value_masses(d, Y) == {1: Fraction(1, 4), 2: Fraction(3, 4)}

    def test_uniform_int(self):
        d = interpret(parse("d ~ uniformInt(1, 4)"), {})

        assert value_masses(d, VarId('d')) == {k: Fraction(1, 4) for k in range(1, 5)}

    def test_opaque_distribution_needs_binding(self):
        program = parse("program p(mu: dist bool) { x ~ mu }")

        with pytest.raises(OracleError):
            interpret(program, {})
        d = interpret(program, {}, bindings={'mu': Bern(Const(Fraction(1, 5)))})
        assert value_masses(d, X)[True] == Fraction(1, 5)

    def test_function_bindings(self):
        task = load('bayes.cpl')
        bindings = task.oracle[0]

        d = interpret(task.program, {}, bindings=bindings)

        assert probability(d, lambda s: s[VarId('w')]) == Fraction(1, 4)
        assert probability(d, lambda s: s[VarId("w'")]) == Fraction(3, 4)

    def test_marginal(self):
        d = interpret(parse("x ~ bern(1/2)\ny ~ bern(1/2)"), {})

        m = marginal(d, [X])

        assert len(m.pmf) == 2

    def test_eval_expr(self):
        program = parse("x ~ bern(1/2)\ny <- ite(x, 3, 4) * 2")

        assert eval_expr({X: True}, program.body[1].expr) == 6

    def test_dist_to_json(self):
        d = interpret(parse("x ~ bern(1/3)"), {})

        payload = dist_to_json(d)

        assert payload['residual'] == '0'
        assert sorted(e['mass'] for e in payload['pmf']) == ['1/3', '2/3']


class TestVerdicts:
    def test_biased_coin_is_not_uniform(self):
        task = load('biased.cpl')
        d = interpret(task.program, {})

        verdict = check_uniform(d, X)

        assert not verdict.holds
        assert verdict.kind == 'NotUniform'
        assert verdict.witness == (True, False)
        assert verdict.gap == Fraction(1, 2)

    def test_declared_support(self):
        task = load('fairdie.cpl')
        d = interpret(task.program, {})
        target = (X, Y, VarId('z'))

        assert check_uniform(d, target, task.prop.support).holds
        assert not check_uniform(d, target, task.prop.support[:3]).holds

    def test_empty_domain(self):
        d = interpret(load('biased.cpl').program, {})

        with pytest.raises(CheckError, match="empty domain"):
            check_uniform(d, X, [])

    def test_independent_samples(self):
        d = interpret(parse("x ~ bern(1/3)\ny ~ bern(1/2)"), {})

        assert check_independent(d, X, Y).holds

    def test_copy_is_dependent(self):
        task = load('copy.cpl')
        d = interpret(task.program, {})

        verdict = check_independent(d, X, Y)

        assert not verdict.holds
        assert verdict.gap == Fraction(1, 4)

    def test_equality_gap(self):
        task = load('gap.cpl')
        d = interpret(task.program, {})

        verdict = check_equality(d, task.prop.events[0], d, task.prop.events[1])

        assert not verdict.holds
        assert verdict.gap == Fraction(1, 4)
        assert verdict.witness == (Fraction(1, 4), Fraction(1, 2))

    def test_conditional_independence(self):
        task = load('bayes.cpl')
        for bindings in task.oracle:
            d = interpret(task.program, {}, bindings=bindings)
            verdict = check_cond_independent(d, VarId('w'), VarId("w'"), Y)
            assert verdict.holds

    def test_zero_mass_conditions_are_skipped(self):
        d = interpret(parse("x ~ bern(1/2)\ny ~ bern(1/2)\nc <- true"), {})

        verdict = check_cond_independent(d, X, Y, VarId('c'), {VarId('c'): [True, False]})

        assert verdict.holds
        assert verdict.skipped == (False,)

    def test_ballot_reflection(self):
        task = load('ballot.cpl')
        for line in task.oracle:
            s0 = {VarId('n'): line['n'], VarId('na'): line['na']}
            verdict = check_property(task.program, task.prop, s0)
            assert verdict.holds, line

    def test_noisy_sum_components_are_independent(self):
        task = load('noisysum.cpl')

        verdict = check_property(task.program, task.prop, {P: Fraction(1, 3)})

        assert verdict.holds
