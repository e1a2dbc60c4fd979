"""Prompt rendering, agent-output parsing and the numeric BPE token model."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, FormatError, ShapeError
from .population import Box, Population

INTEGER_SCALE = 999

SEPARATOR_TOKENS = (".", "-", ",", "\n")


@dataclass(frozen=True)
class PromptTemplate:
    task_text: str = (
        "You are an agent tasked to maximize a reward function by determining "
        "{D}-dimensional action vector [x_1, ..., x_{D}] whose elements are between "
        "{x_min} and {x_max}."
    )
    data_format_text: str = (
        "You are provided with the action-reward pairs. The first {D} columns stand for "
        "the action vectors, and the last column is the associated reward."
    )
    instruction_text: str = (
        "Generate {P} new action vectors different from all above that can improve the "
        "reward. Actions should be presented in a CSV format of shape ({P}, {D}) where "
        "different rows indicate different action vectors. Do not generate text and codes."
    )
    integer_note: str = " Each element must be an integer between 0 and {scale}."
    constraint_text: str | None = None


SUM_POWER_CONSTRAINT = (
    "The action vector should satisfy 0<=x_d<=1 for d=1, ..., D and "
    "\\sum_{d=1}^{D}x_d<=1."
)

DEFAULT_TEMPLATE = PromptTemplate()


def _fmt_bound(v) -> str:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if np.all(v == v[0]):
        v = v[:1]
    parts = [f"{x:g}" for x in v]
    return parts[0] if len(parts) == 1 else "[" + ", ".join(parts) + "]"


def to_integer_grid(X, box: Box) -> np.ndarray:
    span = box.x_max - box.x_min
    return np.rint((np.asarray(X) - box.x_min) / span * INTEGER_SCALE).astype(np.int64)


def from_integer_grid(K, box: Box) -> np.ndarray:
    span = box.x_max - box.x_min
    return box.x_min + np.asarray(K, dtype=float) / INTEGER_SCALE * span


def csv_block(examples: Population, n_digit=3, integer_mode=False, box: Box | None = None) -> str:
    D = examples.actions.shape[1]
    header = ", ".join(f"x_{d + 1}" for d in range(D)) + ", reward"
    lines = [header]
    if integer_mode:
        K = to_integer_grid(examples.actions, box or examples.box)
        cells = [[str(int(k)) for k in row] for row in K]
    else:
        cells = [[f"{x:.{n_digit}f}" for x in row] for row in examples.actions]
    for row, r in zip(cells, examples.rewards):
        lines.append(", ".join(row + [f"{r:.{n_digit}f}"]))
    return "\n".join(lines)


def render_prompt(
    examples: Population,
    box: Box,
    P: int,
    D: int,
    constraint_text: str | None = None,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    n_digit: int = 3,
    integer_mode: bool = False,
) -> str:
    """Four-part prompt: task, data format, CSV examples, instruction."""
    if not examples.evaluated:
        raise ValueError("examples must carry rewards")
    lo, hi = (0, INTEGER_SCALE) if integer_mode else (_fmt_bound(box.x_min), _fmt_bound(box.x_max))
    task = template.task_text.format(D=D, P=P, x_min=lo, x_max=hi)
    extra = constraint_text if constraint_text is not None else template.constraint_text
    if extra:
        task = f"{task} {extra}"
    instruction = template.instruction_text.format(D=D, P=P)
    if integer_mode:
        instruction += template.integer_note.format(scale=INTEGER_SCALE)
    return (
        f"Task description: {task}\n"
        f"Data format: {template.data_format_text.format(D=D, P=P)}\n"
        f"In-context examples:\n{csv_block(examples, n_digit, integer_mode, box)}\n"
        f"Instruction: {instruction}"
    )


_ROW_START = re.compile(r"^\s*[-+]?(\d|\.\d)")


def parse_population(text: str, P: int, D: int, box: Box, integer_mode=False) -> Population:
    """Extract exactly ``P`` rows of ``D`` numbers from agent output.

    Fence lines and lines that do not start with a number are ignored; data rows
    are never repaired.
    """
    rows = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("```") or not _ROW_START.match(line):
            continue
        cells = [c.strip() for c in line.split(",")]
        if cells and cells[-1] == "":
            cells = cells[:-1]
        values = []
        for c in cells:
            try:
                v = float(c)
            except ValueError:
                raise FormatError(f"non-numeric cell {c!r} in row {line!r}") from None
            if not math.isfinite(v):
                raise FormatError(f"non-finite cell {c!r}")
            values.append(v)
        if len(values) != D:
            raise ShapeError(f"row {line!r} has {len(values)} values, expected {D}")
        rows.append(values)
    if len(rows) != P:
        raise ShapeError(f"found {len(rows)} rows, expected {P}")
    X = np.array(rows, dtype=float)
    if integer_mode:
        if np.any(X != np.rint(X)) or np.any(X < 0) or np.any(X > INTEGER_SCALE):
            raise BoundsError(f"integer-mode values must be integers in [0, {INTEGER_SCALE}]")
        X = from_integer_grid(X, box)
    if not box.contains(X):
        raise BoundsError("parsed action outside bounds")
    return Population(X, None, box)


# --- numeric token model -----------------------------------------------------

_NUMBER = re.compile(r"^-?\d+(\.\d+)?$")


def _groups(digits: str):
    return [digits[i : i + 3] for i in range(0, len(digits), 3)]


def tokenize_number(s: str) -> list[str]:
    """Segment a decimal literal the way a BPE tokenizer splits numbers.

    >>> tokenize_number("-32.7914")
    ['-', '32', '.', '791', '4']
    """
    if not isinstance(s, str) or not _NUMBER.match(s):
        raise FormatError(f"not a decimal literal: {s!r}")
    tokens = []
    if s.startswith("-"):
        tokens.append("-")
        s = s[1:]
    whole, _, frac = s.partition(".")
    tokens.extend(_groups(whole))
    if frac:
        tokens.append(".")
        tokens.extend(_groups(frac))
    return tokens


def tokenize_csv(text: str) -> list[str]:
    """Tokens of a CSV block written without spaces (``0.1,0.2\\n...``)."""
    tokens = []
    for line_no, line in enumerate(text.split("\n")):
        if line_no:
            tokens.append("\n")
        if not line:
            continue
        for i, cell in enumerate(line.split(",")):
            if i:
                tokens.append(",")
            tokens.extend(tokenize_number(cell))
    return tokens


def in_vocabulary(token: str) -> bool:
    return token in SEPARATOR_TOKENS or (token.isdigit() and token.isascii() and 1 <= len(token) <= 3)


@dataclass(frozen=True)
class TokenModel:
    n_digit: int = 3

    @property
    def n_token(self) -> int:
        return tokens_per_number(self.n_digit)

    @property
    def vocabulary_size(self) -> int:
        return vocabulary_size()


def vocabulary_size() -> int:
    digit_groups = sum(10**k for k in (1, 2, 3))
    return digit_groups + len(SEPARATOR_TOKENS)


def tokens_per_number(n_digit: int) -> int:
    # "+3" is kept as the closed form even though four separators exist
    return math.ceil(n_digit / 3) + 3


def state_space_size(P: int, D: int, n_digit: int) -> tuple[int, int, float]:
    """``(|vocabulary|, tokens per number, log10 of the token state-space size)``."""
    if min(P, D, n_digit) < 1:
        raise ValueError("P, D and n_digit must be >= 1")
    V = vocabulary_size()
    n_token = tokens_per_number(n_digit)
    return V, n_token, P * D * n_token * math.log10(V)
