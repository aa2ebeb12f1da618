"""
Tests for verification-condition generation
"""
import logging
from pathlib import Path

import pytest
import z3

from couplesynth.candidates import Base, Swap, as_hole
from couplesynth.errors import EncodingError
from couplesynth.parser import parse_task
from couplesynth.smt import INVALID, VALID, check_valid
from couplesynth.synth import instantiate
from couplesynth.syntax import Binary, Var, VarId, expr_vars
from couplesynth.vcgen import (
    CLAUSES_LOOP, CLAUSES_LOOP_FREE, fix_parameters, invariant_relation, is_pad, is_param,
    reorder_quantifiers, uninterpreted_hole, vc_for_task, vc_loop,
)

CORPUS = Path(__file__).parent / 'corpus'
X, Y = VarId('x'), VarId('y')
INDEPENDENT_FLIPS = "prop: independent x y\nx ~ bern(1/2)\ny ~ bern(1/2)\nreturn (x, y)"


@pytest.fixture(autouse=True)
def setup_logging():
    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def bundle_for(name: str):
    return vc_for_task(parse_task((CORPUS / name).read_text(), name))


class TestUniform:
    def test_faircoin_bundle(self):
        bundle = bundle_for('faircoin.cpl')

        assert bundle.kind == 'uniform'
        assert bundle.has_loop
        assert bundle.site.inputs == (X, Y)
        assert bundle.site.outputs == (X.tagged(1), Y.tagged(1))
        assert bundle.param_list == [VarId('$a'), VarId("$a'")]
        assert all(is_param(v) for v in bundle.param_list)
        assert Binary('=', Var(X), Var(Y)) in bundle.conds

    def test_parameter_instances_exclude_equal_values(self):
        bundle = bundle_for('faircoin.cpl')

        instances = bundle.parameter_instances(64)

        assert len(instances) == 2
        assert all(i[VarId('$a')] != i[VarId("$a'")] for i in instances)

    def test_declared_support_limits_instances(self):
        bundle = bundle_for('fairdie.cpl')

        instances = bundle.parameter_instances(64)

        assert len(instances) == 6 * 5
        assert bundle.parameter_instances(10) is None

    def test_infinite_target(self):
        task = parse_task("prop: uniform n\nx ~ bern(1/2)\nn <- ite(x, 1, 2)")

        with pytest.raises(EncodingError, match="infinite type"):
            vc_for_task(task)


class TestIndependence:
    def test_left_side_is_padded(self):
        bundle = vc_for_task(parse_task(INDEPENDENT_FLIPS))

        assert bundle.site.arity == 4
        assert bundle.site.inputs[:2] == (X, Y)
        assert all(is_pad(v) for v in bundle.site.inputs[2:])
        assert bundle.site.outputs == (X.tagged(1), Y.tagged(1), X.tagged(2), Y.tagged(2))

    def test_swap_proves_independence(self):
        bundle = vc_for_task(parse_task(INDEPENDENT_FLIPS))

        assert check_valid(instantiate(bundle, Swap(2, 4, Base()))).status == VALID
        assert check_valid(instantiate(bundle, Base())).status == INVALID

    def test_counted_loops_run_in_lockstep(self):
        bundle = bundle_for('lastflips.cpl')

        assert bundle.has_loop
        assert bundle.site.in_loop
        assert bundle.site.outputs == (X.tagged(1), Y.tagged(1), X.tagged(2), Y.tagged(2))

    def test_unbounded_loops_cannot_be_composed(self):
        source = (CORPUS / 'faircoin.cpl').read_text().replace('prop: uniform x', 'prop: independent x y')
        task = parse_task(source)

        with pytest.raises(EncodingError, match="counter-driven"):
            vc_for_task(task)

    def test_conditional_independence_with_opaque_priors(self):
        bundle = bundle_for('bayes.cpl')

        assert bundle.kind == 'cond-independent'
        assert bundle.has_opaque
        assert list(bundle.params) == ['a', 'b', 'c']


class TestEquality:
    def test_gap_is_not_provable(self):
        bundle = bundle_for('gap.cpl')

        assert bundle.kind == 'equal'
        assert not bundle.has_loop
        assert check_valid(instantiate(bundle, Base())).status == INVALID

    def test_clause_names(self):
        bundle = bundle_for('gap.cpl')

        clauses = bundle.clauses(as_hole(Base(), bundle.encoder))

        assert tuple(clauses) == CLAUSES_LOOP_FREE


class TestLoops:
    def test_loop_clauses_need_an_invariant(self):
        bundle = bundle_for('faircoin.cpl')

        with pytest.raises(EncodingError, match="invariant"):
            bundle.clauses(as_hole(Base(), bundle.encoder))

    def test_loop_clause_names(self):
        bundle = bundle_for('faircoin.cpl')
        frame = bundle.loop_frame(as_hole(Base(), bundle.encoder))

        clauses = frame.clauses(z3.BoolVal(True))

        assert tuple(clauses) == CLAUSES_LOOP

    def test_swap_invariant_closes_the_faircoin_loop(self):
        bundle = fix_parameters(bundle_for('faircoin.cpl'), {VarId('$a'): True, VarId("$a'"): False})
        frame = bundle.loop_frame(as_hole(Swap(1, 2, Base()), bundle.encoder))
        invariant = z3.And(list(frame.graph))

        for name, clause in frame.clauses(invariant).items():
            assert check_valid(clause).status == VALID, name

    def test_open_invariant_relation(self):
        bundle = reorder_quantifiers(bundle_for('faircoin.cpl'))
        frame = bundle.loop_frame(uninterpreted_hole(bundle))

        relation = invariant_relation(bundle, frame)

        assert relation.decl().arity() == len(frame.pre) + len(bundle.param_list)

    def test_vc_loop(self):
        bundle = bundle_for('faircoin.cpl')

        frame = vc_loop(bundle, as_hole(Base(), bundle.encoder))

        assert tuple(frame.clauses(z3.BoolVal(True))) == CLAUSES_LOOP
        assert len(frame.graph) == bundle.site.arity

    def test_vc_loop_needs_a_loop(self):
        bundle = bundle_for('gap.cpl')

        with pytest.raises(EncodingError, match="no loop"):
            vc_loop(bundle, as_hole(Base(), bundle.encoder))


def mentions_params(conds) -> bool:
    return any(is_param(v) for c in conds for v in expr_vars(c))


class TestQuantifierOrder:
    def test_parameters_are_hidden_before_reordering(self):
        bundle = bundle_for('faircoin.cpl')

        assert bundle.hole_params == []
        assert not mentions_params(bundle.conds)
        assert not any(mentions_params(vector) for vector in bundle.consts)

    def test_reordering_exposes_parameters(self):
        bundle = reorder_quantifiers(bundle_for('faircoin.cpl'))

        assert bundle.reordered
        assert bundle.hole_params == [VarId('$a'), VarId("$a'")]
        assert mentions_params(bundle.conds)

    def test_fixed_parameters_are_readable(self):
        bundle = fix_parameters(bundle_for('faircoin.cpl'), {VarId('$a'): True, VarId("$a'"): False})

        assert bundle.hole_params == []
        assert mentions_params(bundle.conds)

    def test_hole_arity_follows_the_order(self):
        bundle = bundle_for('faircoin.cpl')
        xs = [bundle.encoder.const(v) for v in bundle.site.inputs]

        plain = uninterpreted_hole(bundle)(xs, None)
        reordered = uninterpreted_hole(reorder_quantifiers(bundle))(xs, None)

        assert plain[0].decl().arity() == len(xs)
        assert reordered[0].decl().arity() == len(xs) + 2

    def test_parameterless_bundle_is_unchanged(self):
        bundle = bundle_for('gap.cpl')

        assert reorder_quantifiers(bundle) is bundle
