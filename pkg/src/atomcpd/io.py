"""CPD-CSV observation files and JSON signal sidecars.

CPD-CSV layout::

    <n>,<p>            or    <n>,<d1>,<d2>
    y[1,1],...,y[1,p]
    ...
    y[n,1],...,y[n,p]

Values are written with 17 significant digits, so a write/read round trip
is bit-exact.
"""

import json

import numpy as np

from .exceptions import ConfigError, CsvFormatError
from .signals import ObservationSequence, PiecewiseConstantSignal

__all__ = ["write_cpd_csv", "read_cpd_csv", "write_sidecar", "read_sidecar"]


def _fmt(x):
    return format(float(x), ".17g")


def write_cpd_csv(path, obs):
    """Write an :class:`ObservationSequence` (or raw ``(data, shape)`` tuple)."""
    if isinstance(obs, tuple):
        obs = ObservationSequence(*obs)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(str(v) for v in (obs.n, *obs.shape)) + "\n")
        for row in obs.data:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_cpd_csv(path, sigma=None):
    """Read a CPD-CSV file. Raises :class:`CsvFormatError` with the offending line."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CsvFormatError("empty file", line=1)
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) not in (2, 3):
        raise CsvFormatError(f"header must be 'n,p' or 'n,d1,d2', got {lines[0]!r}", line=1)
    try:
        n = None if header[0] == "n" else int(header[0])
        shape = tuple(int(h) for h in header[1:])
    except ValueError:
        raise CsvFormatError(f"header fields must be integers, got {lines[0]!r}", line=1) from None
    if any(s < 1 for s in shape) or (n is not None and n < 0):
        raise CsvFormatError("header dimensions must be positive", line=1)
    p = int(np.prod(shape))
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if n is not None and len(body) != n:
        raise CsvFormatError(f"header declares {n} rows but file has {len(body)}", line=len(body) + 2)
    data = np.empty((len(body), p))
    for i, line in enumerate(body):
        fields = line.split(",")
        if len(fields) != p:
            raise CsvFormatError(f"expected {p} values, got {len(fields)}", line=i + 2)
        try:
            data[i] = [float(f) for f in fields]
        except ValueError as exc:
            raise CsvFormatError(str(exc), line=i + 2) from None
    return ObservationSequence(data, shape, sigma=sigma)


def write_sidecar(path, signal, **extra):
    """Write the JSON sidecar for a signal; ``extra`` keys (e.g. ``sigma``) are merged in."""
    d = signal.to_dict()
    d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh)


def read_sidecar(path):
    """Return ``(signal, raw_dict)``."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return PiecewiseConstantSignal.from_dict(d), d
