"""On-disk formats.

Sample file (``*.ossf``)::

    line 1   OSSFIELD-SAMPLE 1\\n
    line 2   one-line JSON header, then \\n
    rest     float64 little-endian, C order, shape (n_rep, n_points, m)

i.e. row = replicate, column group = evaluation point, innermost index =
state component. The header carries config_digest, spec_digest, seed, tag,
n_rep, n_points, m, dtype ("<f8"), the evaluation points and (optionally)
grid_shape. The text export writes one line per replicate, values in the
same order, with ``#``-prefixed header lines.

Manifest (``manifest.json``): config digest, library version, per-stage
wall-times, quadrature error proxies, verdicts and a SHA-256 for every
output file.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

MAGIC = b"OSSFIELD-SAMPLE 1\n"
DTYPE = "<f8"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_sample(path, values, header):
    """Write replicates (n_rep, n_points, m) with a JSON header."""
    v = np.ascontiguousarray(values, dtype=DTYPE)
    if v.ndim != 3:
        raise ValueError("sample values must have shape (n_rep, n_points, m)")
    head = dict(header)
    head.update(n_rep=v.shape[0], n_points=v.shape[1], m=v.shape[2], dtype=DTYPE,
                order="C (replicate, point, component)")
    line = json.dumps(head, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(line + b"\n")
        fh.write(v.tobytes(order="C"))


def read_sample(path):
    """(header dict, values array) from a sample file."""
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise ValueError(f"{path} is not an ossfield sample file")
        head = json.loads(fh.readline())
        data = fh.read()
    shape = (head["n_rep"], head["n_points"], head["m"])
    values = np.frombuffer(data, dtype=head.get("dtype", DTYPE))
    if values.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload size does not match header shape {shape}")
    return head, values.reshape(shape)


def export_text(path, values, header):
    v = np.asarray(values, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for k in sorted(header):
            fh.write(f"# {k}: {json.dumps(header[k])}\n")
        np.savetxt(fh, v.reshape(v.shape[0], -1), fmt="%.17g")


def write_table(path, columns, rows):
    """Whitespace-delimited table with one header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(columns) + "\n")
        for r in rows:
            fh.write(" ".join(_fmt(x) for x in r) + "\n")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def read_table(path):
    with open(path, "r", encoding="utf-8") as fh:
        cols = fh.readline().split()
        rows = [[float(t) for t in line.split()] for line in fh if line.strip()]
    return cols, np.array(rows).reshape(len(rows), len(cols))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


@dataclass
class RunManifest:
    config_digest: str
    version: str
    command: str
    wall_times: dict = field(default_factory=dict)
    error_proxies: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    def add_file(self, path):
        self.files[os.path.basename(path)] = sha256_file(path)

    def write(self, path):
        write_json(path, asdict(self))

    @classmethod
    def read(cls, path):
        return cls(**read_json(path))

    def verify_files(self, directory):
        """Names of listed files whose checksum no longer matches."""
        return [name for name, digest in self.files.items()
                if sha256_file(os.path.join(directory, name)) != digest]
