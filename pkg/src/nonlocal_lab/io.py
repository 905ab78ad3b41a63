"""File formats: CSV tables and arrays with a one-line JSON header.

Array files start with a single JSON line (dim, X, M, family, params, ...)
followed by the raw little-endian float64 samples in C order.
"""

import csv
import json

import numpy as np

MAGIC = "nonlocal-lab-array"


def format_value(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    """Write rows with a mandatory header, '.' decimals and '\\n' endings."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [row for row in r]
    return header, rows


def save_array(path, samples, header):
    header = dict(header)
    header["magic"] = MAGIC
    header["shape"] = list(np.shape(samples))
    header["dtype"] = "<f8"
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(samples, dtype="<f8").tobytes())


def load_array(path):
    """Return ``(samples, header)`` from a file written by :func:`save_array`."""
    with open(path, "rb") as fh:
        line = fh.readline()
        header = json.loads(line)
        if header.get("magic") != MAGIC:
            raise ValueError(f"{path} is not a nonlocal-lab array file")
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(header["shape"]).copy(), header
