"""
Command-line entry point: verify, interpret, bench, export, dump-candidates
"""
import argparse
import json
import logging
import re
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from tqdm import tqdm

from .candidates import enumerate_candidates
from .checker import check
from .config import (
    DEFAULT_BUDGET, DEFAULT_RESIDUAL_TARGET, DEFAULT_TIMEOUT_PER_CHECK, DEFAULT_TOTAL_TIMEOUT, ELISION_MODES,
    INVARIANT_ENGINES, REPORT_SCHEMA, STRATEGIES, UnrollPolicy, load_config, log_level_from_env,
)
from .errors import CoupleSynthError, SoundnessError, TaskError
from .parser import parse, parse_task
from .semantics import dist_to_json, interpret
from .smt import close, to_chc, to_smtlib
from .synth import ProofReport, Synthesizer
from .syntax import Bern, Const, Task, UniformInt, pretty
from .vcgen import invariant_relation, uninterpreted_hole, vc_for_task

EXIT_PROOF = 0
EXIT_NO_PROOF = 1
EXIT_INPUT_ERROR = 2
EXIT_UNSOUND = 3

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

_RATIONAL = re.compile(r"^-?\d+(/\d+)?$")
_BERN = re.compile(r"^bern\((-?\d+(?:/\d+)?)\)$")
_UNIFORM = re.compile(r"^uniformInt\((-?\d+),\s*(-?\d+)\)$")
BUILTIN_NAMES = ('and', 'or', 'xor', 'not', 'eq')

logger = logging.getLogger('couplesynth')


def setup_logging(level: str = 'INFO', log_file: Optional[str] = None):
    """Log to stderr, and to a file when asked; stdout stays reserved for reports"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT,
                        handlers=handlers, force=True)


def parse_value(text: str):
    """
    A literal from the command line

    Accepts true/false, integers, rationals "a/b", bern(p), uniformInt(lo, hi)
    and the builtin function names.

    Raises:
        TaskError: the text is none of these
    """
    text = text.strip()
    if text in ('true', 'false'):
        return text == 'true'
    if _RATIONAL.match(text):
        q = Fraction(text)
        return q.numerator if q.denominator == 1 and '/' not in text else q
    match = _BERN.match(text)
    if match:
        return Bern(Const(Fraction(match.group(1))))
    match = _UNIFORM.match(text)
    if match:
        return UniformInt(int(match.group(1)), int(match.group(2)))
    if text in BUILTIN_NAMES:
        return ('builtin', text)
    raise TaskError(f"cannot read value {text!r}")


def split_assignment(item: str):
    name, sep, value = item.partition('=')
    if not sep or not name.strip():
        raise TaskError(f"expected name=value, got {item!r}")
    return name.strip(), parse_value(value)


def parse_assignments(items: Optional[List[str]]) -> Dict[str, object]:
    """name=value bindings; a repeated name keeps its last value"""
    return dict(split_assignment(item) for item in items or ())


def oracle_params(items: Optional[List[str]]) -> Dict[str, List[Fraction]]:
    """name=value bindings collected per name, in command-line order"""
    params: Dict[str, List[Fraction]] = {}
    for item in items or ():
        name, value = split_assignment(item)
        if isinstance(value, bool) or not isinstance(value, (int, Fraction)):
            raise TaskError(f"oracle parameter {name} needs a number")
        params.setdefault(name, []).append(value)
    return params


def load_task(path: str, second: Optional[str] = None) -> Task:
    """
    Read a task file, optionally with the program the right-hand event runs on

    Raises:
        TaskError: unreadable file
        ParseError: malformed header or program
    """
    try:
        text = Path(path).read_text()
        other = parse(Path(second).read_text()) if second else None
    except OSError as e:
        raise TaskError(f"cannot read {e.filename}: {e.strerror}") from e
    task = parse_task(text, path)
    if other is not None:
        task = Task(task.program, task.prop, task.oracle, other, path)
    return task


def build_config(args):
    return load_config(
        budget=args.budget,
        timeout_per_check=args.timeout_per_check,
        total_timeout=args.total_timeout,
        jobs=args.jobs,
        strategy=args.strategy,
        elision=args.elide,
        invariant_engine=args.invariants,
        oracle_params=oracle_params(args.oracle_param),
        solver_path=args.solver,
        solver_args=args.solver_arg,
        in_process=args.in_process,
    )


def emit(payload: Dict[str, object]):
    print(json.dumps(payload, indent=2, sort_keys=False))


def error_payload(error: Exception) -> Dict[str, object]:
    return {'schema': REPORT_SCHEMA, 'error': type(error).__name__, 'message': str(error)}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def hoisted_listing(task: Task) -> str:
    """Both sides of the task's bundle after hoisting and padding, as .cpl text"""
    bundle = vc_for_task(task)
    parts = []
    for side, program in (('left', bundle.left), ('right', bundle.right)):
        parts.append(f"# {side}\n{pretty(program.to_program())}")
    return '\n'.join(parts)


def cmd_verify(args) -> int:
    """Exit 0 with a proof report, 1 with a failure report"""
    task = load_task(args.file, args.second)
    if args.dump_hoisted:
        sys.stderr.write(hoisted_listing(task))
    for target, fmt in ((args.dump_vc, 'smt2'), (args.dump_chc, 'chc')):
        if target:
            Path(target).write_text(export_script(task, fmt, args.elide))
            logger.info(f"Wrote {fmt} script to {target}")
    result = Synthesizer(build_config(args)).synthesize(task)
    emit(result.to_json())
    return EXIT_PROOF if isinstance(result, ProofReport) else EXIT_NO_PROOF


def cmd_interpret(args) -> int:
    program = parse(Path(args.file).read_text())
    check(program)
    values = parse_assignments(args.input)
    s0 = {}
    for v in program.inputs:
        if v.name not in values:
            raise TaskError(f"no value for input {v.name}")
        s0[v] = values[v.name]
    bindings = {v.name: values[v.name] for v in program.symbols if v.name in values}
    if args.iterations is not None:
        policy = UnrollPolicy.fixed(args.iterations)
    else:
        policy = UnrollPolicy(residual_target=Fraction(args.residual_target))
    d = interpret(program, s0, policy, bindings)
    payload = {'schema': REPORT_SCHEMA, 'program': program.name or args.file}
    payload.update(dist_to_json(d))
    emit(payload)
    return EXIT_PROOF


def run_bench(directory: str, config) -> pd.DataFrame:
    """
    Verify every task of a corpus directory

    Per-task errors are logged and recorded in the row; they do not stop
    the run.
    """
    paths = sorted(Path(directory).glob('*.cpl'))
    rows = []
    synthesizer = Synthesizer(config)
    progress = tqdm(paths, file=sys.stderr, disable=not paths)
    for path in progress:
        progress.set_description(f"Verifying {path.stem}")
        start = time.time()
        row = {'program': path.stem, 'property': '', 'proved': False, 'index': None, 'coupling': '',
               'seconds': 0.0, 'note': ''}
        try:
            task = load_task(str(path))
            row['property'] = task.prop.describe()
            result = synthesizer.synthesize(task)
            if isinstance(result, ProofReport):
                row.update(proved=True, index=result.index, coupling=str(result.candidate))
            else:
                row.update(index=result.tried, note=result.reason)
        except SoundnessError:
            raise
        except CoupleSynthError as e:
            logger.error(f"{path.name}: {str(e)}")
            row['note'] = f"{type(e).__name__}: {str(e)}"
        row['seconds'] = round(time.time() - start, 2)
        rows.append(row)
    return pd.DataFrame(rows, columns=['program', 'property', 'proved', 'index', 'coupling', 'seconds', 'note'])


def cmd_bench(args) -> int:
    table = run_bench(args.directory, build_config(args))
    print(table.to_string(index=False) if not table.empty else 'no tasks')
    if args.csv:
        table.to_csv(args.csv, index=False)
        logger.info(f"Wrote {len(table)} rows to {args.csv}")
    return EXIT_PROOF


def export_script(task: Task, fmt: str, mode: Optional[str] = None) -> str:
    """
    The task's verification conditions with f (and I) left as declared symbols

    Loop-free bundles have no Horn form; asking for chc yields the plain
    SMT-LIB script with a note.
    """
    bundle = vc_for_task(task)
    if mode is None or mode == 'auto':
        mode = 'elided' if bundle.has_opaque else 'full'
    hole = uninterpreted_hole(bundle)
    comments = [f"couplesynth export: {task.prop.describe()}", f"coupling encoding: {mode}"]
    if bundle.has_loop:
        frame = bundle.loop_frame(hole, mode)
        clauses = frame.clauses(invariant_relation(bundle, frame))
        if fmt == 'chc':
            return to_chc(clauses, comments)
    else:
        clauses = bundle.loop_free_clauses(hole, mode)
        if fmt == 'chc':
            logger.warning("Loop-free task has no Horn clauses; exporting plain SMT-LIB")
            comments.append('loop-free task: plain smt2 instead of chc')
    names = list(clauses)
    return to_smtlib([close(clauses[name]) for name in names], comments=comments, labels=names)


def cmd_export(args) -> int:
    script = export_script(load_task(args.file, args.second), args.format, args.elide)
    if args.output:
        Path(args.output).write_text(script)
        logger.info(f"Wrote {args.format} script to {args.output}")
    else:
        sys.stdout.write(script)
    return EXIT_PROOF


def cmd_dump_candidates(args) -> int:
    bundle = vc_for_task(load_task(args.file, args.second))
    inputs = [str(v) for v in bundle.site.inputs]
    for index, f in enumerate_candidates(bundle.input_types, bundle.conds, bundle.consts, limit=args.count):
        print(f"{index}\t{f}\t{f.render(inputs)}")
    return EXIT_PROOF


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _synth_options(parser: argparse.ArgumentParser):
    parser.add_argument('--budget', type=int, default=DEFAULT_BUDGET, help="Maximum candidates per instance")
    parser.add_argument('--timeout-per-check', type=float, default=DEFAULT_TIMEOUT_PER_CHECK,
                        help="Seconds per solver query")
    parser.add_argument('--total-timeout', type=float, default=DEFAULT_TOTAL_TIMEOUT, help="Seconds per task")
    parser.add_argument('--jobs', type=int, default=1, help="Concurrent solver processes")
    parser.add_argument('--strategy', choices=STRATEGIES, default='auto')
    parser.add_argument('--elide', choices=ELISION_MODES, default='auto', help="Coupling encoding mode")
    parser.add_argument('--invariants', choices=INVARIANT_ENGINES, default='templates',
                        help="Where loop invariants come from")
    parser.add_argument('--oracle-param', action='append', metavar='NAME=VALUE',
                        help="Value of a numeric input for the oracle cross-check (repeatable)")
    parser.add_argument('--solver', help="SMT solver binary (default: $COUPLESYNTH_SOLVER or z3 on PATH)")
    parser.add_argument('--solver-arg', action='append', default=[], help="Extra solver flag (repeatable)")
    parser.add_argument('--in-process', action='store_true', help="Use the z3 Python API instead of a process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='couplesynth', description="Synthesize coupling proofs")
    parser.add_argument('--log-level', default=log_level_from_env(), help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument('--log-file', help="Also write logs to this file")
    commands = parser.add_subparsers(dest='command', required=True)

    verify = commands.add_parser('verify', help="Prove the task's property")
    verify.add_argument('file')
    verify.add_argument('--second', help="Program for the right-hand event of an equality")
    verify.add_argument('--dump-hoisted', action='store_true', help="Print the hoisted programs to stderr")
    verify.add_argument('--dump-vc', metavar='FILE', help="Write the verification conditions as SMT-LIB, f left open")
    verify.add_argument('--dump-chc', metavar='FILE', help="Write the loop clauses as Horn clauses, f and I left open")
    _synth_options(verify)
    verify.set_defaults(handler=cmd_verify)

    run = commands.add_parser('interpret', help="Exact output distribution")
    run.add_argument('file')
    run.add_argument('--input', action='append', metavar='NAME=VALUE', help="Input or symbol binding")
    run.add_argument('--iterations', type=int, help="Run exactly this many loop iterations")
    run.add_argument('--residual-target', default=str(DEFAULT_RESIDUAL_TARGET),
                     help="Stop unrolling once the in-loop mass is at most this")
    run.set_defaults(handler=cmd_interpret)

    bench = commands.add_parser('bench', help="Verify every .cpl file of a directory")
    bench.add_argument('directory')
    bench.add_argument('--csv', help="Also write the table as CSV")
    _synth_options(bench)
    bench.set_defaults(handler=cmd_bench)

    export = commands.add_parser('export', help="Write the verification conditions for external tools")
    export.add_argument('file')
    export.add_argument('--second')
    export.add_argument('--format', choices=('smt2', 'chc'), default='smt2')
    export.add_argument('--elide', choices=ELISION_MODES, default='auto')
    export.add_argument('--output', '-o')
    export.set_defaults(handler=cmd_export)

    dump = commands.add_parser('dump-candidates', help="Print the first candidates of a task")
    dump.add_argument('file')
    dump.add_argument('--second')
    dump.add_argument('--count', type=int, default=20)
    dump.set_defaults(handler=cmd_dump_candidates)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)
    try:
        return args.handler(args)
    except SoundnessError as e:
        logger.error(f"Soundness check failed: {str(e)}")
        emit(error_payload(e))
        return EXIT_UNSOUND
    except (CoupleSynthError, ValueError) as e:
        logger.error(str(e))
        emit(error_payload(e))
        return EXIT_INPUT_ERROR
    except OSError as e:
        logger.error(f"{e.filename}: {e.strerror}")
        emit(error_payload(e))
        return EXIT_INPUT_ERROR
