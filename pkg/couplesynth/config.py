"""
Configuration defaults and environment lookup
"""
import os
import shlex
import shutil
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional

SOLVER_ENV = 'COUPLESYNTH_SOLVER'
SOLVER_FLAGS_ENV = 'COUPLESYNTH_SOLVER_FLAGS'
LOG_LEVEL_ENV = 'COUPLESYNTH_LOG_LEVEL'

DEFAULT_BUDGET = 500
DEFAULT_TIMEOUT_PER_CHECK = 10.0
DEFAULT_TOTAL_TIMEOUT = 600.0
DEFAULT_JOBS = 1
DEFAULT_MAX_ITERATIONS = 10_000
DEFAULT_RESIDUAL_TARGET = Fraction(1, 10**9)
DEFAULT_RESIDUAL_CEILING = Fraction(1, 10**6)
MAX_PARAMETER_INSTANCES = 64

# z3's flags for reading SMT-LIB from stdin and its per-query time limit
DEFAULT_SOLVER_FLAGS = ('-smt2', '-in')
DEFAULT_TIME_LIMIT_FLAG = '-T:{seconds}'

# Instantiations for symbolic Bernoulli parameters used by the oracle
DEFAULT_ORACLE_VALUES = (Fraction(1, 2), Fraction(1, 3), Fraction(3, 4))

REPORT_SCHEMA = 'couplesynth.report/1'

STRATEGIES = ('auto', 'split', 'symbolic')
ELISION_MODES = ('auto', 'full', 'elided')
INVARIANT_ENGINES = ('templates', 'chc', 'both')


@dataclass(frozen=True)
class UnrollPolicy:
    """
    How far the exact interpreter unrolls a loop

    Attributes:
        max_iterations: Hard cap on loop body executions
        residual_target: Stop early once the in-loop mass is at most this
        residual_ceiling: Error if the cap is reached with more mass than this
    """
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    residual_target: Fraction = DEFAULT_RESIDUAL_TARGET
    residual_ceiling: Fraction = DEFAULT_RESIDUAL_CEILING

    @classmethod
    def fixed(cls, iterations: int) -> 'UnrollPolicy':
        """Run exactly `iterations` body executions and keep whatever remains"""
        return cls(max_iterations=iterations, residual_target=Fraction(0), residual_ceiling=Fraction(1))


@dataclass(frozen=True)
class SolverConfig:
    """
    Solver selection

    Attributes:
        path: Solver binary; None selects the in-process backend
        flags: Flags that make the binary read an SMT-LIB script from stdin
        time_limit_flag: Per-query limit, `{seconds}` filled in
        args: Extra flags appended last
        timeout: Seconds per query
        in_process: Use the z3 Python API even when a binary is configured
    """
    path: Optional[str] = None
    flags: tuple = DEFAULT_SOLVER_FLAGS
    time_limit_flag: str = DEFAULT_TIME_LIMIT_FLAG
    args: tuple = ()
    timeout: float = DEFAULT_TIMEOUT_PER_CHECK
    in_process: bool = False


@dataclass(frozen=True)
class SynthConfig:
    """
    Knobs for one synthesis run

    Attributes:
        budget: Maximum number of candidate functions per parameter instance
        timeout_per_check: Seconds granted to each validity query
        total_timeout: Wall-clock cap for the whole run
        jobs: Concurrent solver sessions for candidate checks
        strategy: 'split' per parameter instance, 'symbolic', or 'auto'
        elision: coupling encoding mode, 'auto' retries elided on unknown
        invariant_engine: where loop invariants come from
        max_parameter_instances: above this, 'auto' goes symbolic
        oracle_values: rationals tried for symbolic Bernoulli parameters
        oracle_params: explicit parameter bindings from the command line
        solver: backend selection
        unroll: exact interpreter policy for the cross-check
    """
    budget: int = DEFAULT_BUDGET
    timeout_per_check: float = DEFAULT_TIMEOUT_PER_CHECK
    total_timeout: float = DEFAULT_TOTAL_TIMEOUT
    jobs: int = DEFAULT_JOBS
    strategy: str = 'auto'
    elision: str = 'auto'
    invariant_engine: str = 'templates'
    max_parameter_instances: int = MAX_PARAMETER_INSTANCES
    oracle_values: tuple = DEFAULT_ORACLE_VALUES
    oracle_params: Dict[str, List[Fraction]] = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)
    unroll: UnrollPolicy = field(default_factory=UnrollPolicy)


def find_solver_binary() -> Optional[str]:
    """
    Locate an SMT solver executable

    Returns:
        Path from $COUPLESYNTH_SOLVER, else `z3` on PATH, else None
    """
    configured = os.environ.get(SOLVER_ENV)
    if configured:
        return configured
    return shutil.which('z3')


def solver_flags_from_env() -> tuple:
    """Flags from $COUPLESYNTH_SOLVER_FLAGS, split like a shell would, else z3's"""
    configured = os.environ.get(SOLVER_FLAGS_ENV)
    if configured:
        return tuple(shlex.split(configured))
    return DEFAULT_SOLVER_FLAGS


def load_config(**overrides) -> SynthConfig:
    """
    Build a SynthConfig from defaults, environment and explicit overrides

    Args:
        **overrides: SynthConfig fields; `solver_path`, `solver_flags`,
            `solver_args` and `in_process` are folded into the nested
            SolverConfig

    Returns:
        SynthConfig
    """
    solver_path = overrides.pop('solver_path', None) or find_solver_binary()
    solver_flags = tuple(overrides.pop('solver_flags', None) or solver_flags_from_env())
    solver_args = tuple(overrides.pop('solver_args', ()) or ())
    in_process = overrides.pop('in_process', False) or solver_path is None
    overrides = {k: v for k, v in overrides.items() if v is not None}
    timeout = overrides.get('timeout_per_check', DEFAULT_TIMEOUT_PER_CHECK)
    solver = SolverConfig(path=solver_path, flags=solver_flags, args=solver_args, timeout=timeout,
                          in_process=in_process)
    config = SynthConfig(solver=solver)
    if 'strategy' in overrides and overrides['strategy'] not in STRATEGIES:
        raise ValueError(f"Unknown strategy {overrides['strategy']}")
    if 'elision' in overrides and overrides['elision'] not in ELISION_MODES:
        raise ValueError(f"Unknown elision mode {overrides['elision']}")
    if 'invariant_engine' in overrides and overrides['invariant_engine'] not in INVARIANT_ENGINES:
        raise ValueError(f"Unknown invariant engine {overrides['invariant_engine']}")
    return replace(config, **overrides)


def log_level_from_env(default: str = 'INFO') -> str:
    return os.environ.get(LOG_LEVEL_ENV, default).upper()
