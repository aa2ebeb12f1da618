"""
Coupling-proof synthesis for discrete probabilistic programs
"""
from .parser import parse, parse_task
from .semantics import interpret
from .synth import Failure, ProofReport, Synthesizer, synthesize
from .vcgen import vc_for_task

__all__ = ['parse', 'parse_task', 'interpret', 'vc_for_task', 'Synthesizer', 'synthesize', 'ProofReport', 'Failure']
