"""Finite conditional distributions P[S = s | X = x] and the user-data space."""

from __future__ import annotations

import csv
import io
import itertools
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_TOL = 1e-12


def user_data_space(N: int, w: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All ``(items, ratings)`` with ``items`` a sorted size-w subset of range(N).

    Ordered by item subset (lexicographic), then ratings (binary counting).
    """
    return [(I, z) for I in itertools.combinations(range(N), w)
            for z in itertools.product((0, 1), repeat=w)]


@dataclass
class ChannelKernel:
    inputs: list
    outputs: list
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (len(self.inputs), len(self.outputs)):
            raise ValueError(f"kernel matrix shape {self.matrix.shape} does not match "
                             f"{len(self.inputs)} inputs x {len(self.outputs)} outputs")
        if np.any(self.matrix < 0):
            raise ValueError("kernel has negative entries")
        dev = np.abs(self.matrix.sum(axis=1) - 1.0)
        if dev.size and dev.max() > ROW_TOL:
            r = int(np.argmax(dev))
            raise ValueError(f"kernel row {self.inputs[r]!r} sums to {self.matrix[r].sum():.15g}")

    @classmethod
    def deterministic(cls, inputs, fn, outputs=None) -> "ChannelKernel":
        vals = [fn(x) for x in inputs]
        outputs = sorted(set(vals)) if outputs is None else list(outputs)
        pos = {o: j for j, o in enumerate(outputs)}
        m = np.zeros((len(inputs), len(outputs)))
        m[np.arange(len(inputs)), [pos[v] for v in vals]] = 1.0
        return cls(list(inputs), outputs, m)

    def index(self) -> dict:
        return {x: i for i, x in enumerate(self.inputs)}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["input"] + [encode_label(o) for o in self.outputs])
        for x, row in zip(self.inputs, self.matrix):
            wr.writerow([encode_label(x)] + [repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "ChannelKernel":
        text = Path(source).read_text() if isinstance(source, Path) or (
            isinstance(source, str) and "\n" not in source) else source
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        outputs = [decode_label(c) for c in rows[0][1:]]
        inputs = [decode_label(r[0]) for r in rows[1:]]
        m = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(inputs, outputs, m)


_UD = re.compile(r"^(\d+(?:-\d+)*):([01](?:-[01])*)$")
_TUP = re.compile(r"^\((-?\d+(?:,-?\d+)*)\)$")


def encode_label(x) -> str:
    """User data ``((0,2),(1,0))`` -> ``'1-3:1-0'`` (1-indexed items)."""
    if (isinstance(x, tuple) and len(x) == 2 and all(isinstance(t, tuple) for t in x)
            and len(x[0]) == len(x[1]) and len(x[0]) > 0):
        return "-".join(str(i + 1) for i in x[0]) + ":" + "-".join(str(int(z)) for z in x[1])
    if isinstance(x, tuple):
        return "(" + ",".join(str(int(v)) for v in x) + ")"
    return str(x)


def decode_label(s: str):
    m = _UD.match(s)
    if m:
        return (tuple(int(i) - 1 for i in m.group(1).split("-")),
                tuple(int(z) for z in m.group(2).split("-")))
    m = _TUP.match(s)
    if m:
        return tuple(int(v) for v in m.group(1).split(","))
    if re.fullmatch(r"-?\d+", s):
        return int(s)
    return s
