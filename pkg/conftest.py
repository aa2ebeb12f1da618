"""
Shared test helpers: the slow marker and random loop-free programs
"""
import random
from typing import List, Tuple

BIASES = ('1/2', '1/4', '3/4')


def pytest_configure(config):
    config.addinivalue_line('markers', "slow: corpus proofs and random-program suites")


def random_program(rng: random.Random, samples: int = 3, statements: int = 6,
                   fair: bool = False) -> Tuple[str, List[str]]:
    """
    Source of a loop-free boolean program and its variable names

    Args:
        rng: Seeded generator
        samples: Most coin flips
        statements: Most statements, flips included
        fair: Flip only fair coins

    Returns:
        (source, names) with the samples first
    """
    flips = rng.randint(1, samples)
    names: List[str] = []
    lines: List[str] = []
    for k in range(flips):
        name = f"s{k + 1}"
        bias = '1/2' if fair else rng.choice(BIASES)
        lines.append(f"{name} ~ bern({bias})")
        names.append(name)
    for k in range(rng.randint(0, statements - flips)):
        target = f"d{k + 1}"
        a, b, c = (rng.choice(names) for _ in range(3))
        shape = rng.randrange(6)
        if shape == 0:
            lines.append(f"{target} <- {a} and {b}")
        elif shape == 1:
            lines.append(f"{target} <- {a} or {b}")
        elif shape == 2:
            lines.append(f"{target} <- not {a}")
        elif shape == 3:
            lines.append(f"{target} <- {a} = {b}")
        elif shape == 4:
            lines.append(f"{target} <- ite({a}, {b}, {c})")
        else:
            lines.append(f"if {a} {{ {target} <- {b} }} else {{ {target} <- not {c} }}")
        names.append(target)
    lines.append(f"return ({', '.join(names)})")
    return '\n'.join(lines), names
