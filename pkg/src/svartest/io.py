"""Plain-text model files, series CSVs and test-spec strings.

Model file::

    # comment lines are ignored
    p M [noise_sigma]
    <p blocks of M rows with M numbers: A(1), then A(2), ...>

Series CSV: header ``t,X1,...,XM`` then one row per time point.

Spec string (1-based): ``"1:3,5;3:3,4;5:4,8"``; a column may carry a
hypothesized value as ``3=0.25``, unspecified values are 0.
"""
import csv

import numpy as np

from .model import TestSpec, VarModel


class ParseError(ValueError):
    pass


def _fmt(x):
    return format(float(x), ".17g")


def read_model(path):
    try:
        with open(path) as fh:
            lines = [(i + 1, ln.split("#", 1)[0].split()) for i, ln in enumerate(fh)]
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    lines = [(n, toks) for n, toks in lines if toks]
    if not lines:
        raise ParseError(f"{path}: empty model file")
    n0, head = lines[0]
    try:
        p, M = int(head[0]), int(head[1])
        sigma = float(head[2]) if len(head) > 2 else 1.0
    except (IndexError, ValueError):
        raise ParseError(f"{path}:{n0}: header must be 'p M [noise_sigma]'") from None
    if p < 1 or M < 1 or len(head) > 3:
        raise ParseError(f"{path}:{n0}: invalid header {' '.join(head)!r}")
    body = lines[1:]
    if len(body) != p * M:
        raise ParseError(f"{path}: expected {p * M} coefficient rows, found {len(body)}")
    rows = []
    for n, toks in body:
        if len(toks) != M:
            raise ParseError(f"{path}:{n}: expected {M} numbers, found {len(toks)}")
        try:
            rows.append([float(t) for t in toks])
        except ValueError:
            raise ParseError(f"{path}:{n}: non-numeric entry") from None
    try:
        return VarModel(np.array(rows).reshape(p, M, M), sigma)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_model(model, path):
    with open(path, "w") as fh:
        fh.write(f"{model.p} {model.M} {_fmt(model.noise_sigma)}\n")
        for j, block in enumerate(model.coeffs):
            fh.write(f"# lag {j + 1}\n")
            for row in block:
                fh.write(" ".join(_fmt(v) for v in row) + "\n")


def write_series(series, path):
    series = np.asarray(series)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"X{i + 1}" for i in range(series.shape[1])])
        for t, row in enumerate(series):
            writer.writerow([t] + [_fmt(v) for v in row])


def read_series(path):
    """Series as a ``(n, M)`` array; the ``t`` column must count up from 0."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    if not rows:
        raise ParseError(f"{path}: empty series file")
    header = rows[0]
    M = len(header) - 1
    if M < 1 or header[0] != "t" or header[1:] != [f"X{i + 1}" for i in range(M)]:
        raise ParseError(f"{path}:1: header must be t,X1,...,XM")
    data = np.empty((len(rows) - 1, M))
    for i, rec in enumerate(rows[1:]):
        if len(rec) != M + 1:
            raise ParseError(f"{path}:{i + 2}: expected {M + 1} fields, found {len(rec)}")
        try:
            if int(rec[0]) != i:
                raise ParseError(f"{path}:{i + 2}: time index {rec[0]} out of sequence")
            data[i] = [float(v) for v in rec[1:]]
        except ValueError:
            raise ParseError(f"{path}:{i + 2}: non-numeric entry") from None
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: series has non-finite values")
    return data


def parse_spec(text, alpha=0.05):
    """Parse a 1-based spec string into a 0-based :class:`TestSpec`.

    Returns ``(spec, has_values)``; ``has_values`` tells whether any
    hypothesized value was given explicitly.
    """
    pairs, values, has_values = [], [], False
    for part in filter(None, (s.strip() for s in text.split(";"))):
        try:
            row, cols = part.split(":")
            m = int(row)
            for item in cols.split(","):
                if "=" in item:
                    c, v = item.split("=")
                    values.append(float(v))
                    has_values = True
                else:
                    c = item
                    values.append(0.0)
                pairs.append((m, int(c)))
        except ValueError:
            raise ParseError(f"cannot parse spec component {part!r}") from None
    if not pairs:
        raise ParseError("spec is empty")
    if min(min(p) for p in pairs) < 1:
        raise ParseError("spec indices are 1-based")
    grouped = {}
    for (m, c), v in zip(pairs, values):
        grouped.setdefault(m, []).append((c, v))
    # from_pairs groups by row in first-seen order; keep values aligned with it
    ordered = [v for m in grouped for _, v in grouped[m]]
    try:
        spec = TestSpec.from_pairs(pairs, ordered, alpha, one_based=True)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return spec, has_values
