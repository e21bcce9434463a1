"""File formats: sparse count triplets, dense privatized matrices, traces.

Byte-level layouts are documented in ``docs/formats.md``.
"""

import json
import math
import struct

import numpy as np

from privpf.counts import CountMatrix
from privpf.exceptions import FormatError
from privpf.mcmc import SampleTrace, Schedule
from privpf.privacy import PrivacyParams, PrivatizedMatrix

PRIVATIZED_MAGIC = b"PRVM"
PRIVATIZED_VERSION = 1
# magic, version, flags, reserved, rows, cols, N, epsilon, alpha, seed
_PRIV_HEADER = struct.Struct("<4sHBBQQQddq")
_NO_SEED = -1

TRACE_FORMAT = "privpf-trace"
TRACE_VERSION = 1

FORMAT_VERSIONS = {
    "counts": 1,
    "privatized": PRIVATIZED_VERSION,
    "trace": TRACE_VERSION,
}


# ---------------------------------------------------------------------------
# sparse count triplets (text)
# ---------------------------------------------------------------------------


def read_sparse_counts(path):
    """Read a ``rows cols nnz`` header followed by ``row col count`` lines.

    Indices are 0-based; blank lines and lines starting with ``#`` are
    ignored.  Malformed lines, duplicate keys, out-of-range indices and a
    triplet count that disagrees with the header are errors.
    """
    header = None
    rows, cols, counts = [], [], []
    seen = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 3:
                raise FormatError(f"expected 3 fields, got {len(fields)}", lineno)
            try:
                a, b, c = (int(f) for f in fields)
            except ValueError:
                raise FormatError(f"non-integer field in {line!r}", lineno) from None
            if header is None:
                if a <= 0 or b <= 0 or c < 0:
                    raise FormatError("header needs positive rows, cols and nonnegative nnz", lineno)
                header = (a, b, c)
                continue
            n_rows, n_cols, _ = header
            if not (0 <= a < n_rows and 0 <= b < n_cols):
                raise FormatError(f"index ({a}, {b}) out of bounds for {n_rows}x{n_cols}", lineno)
            if c < 0:
                raise FormatError(f"negative count {c}", lineno)
            if (a, b) in seen:
                raise FormatError(f"duplicate entry ({a}, {b})", lineno)
            seen.add((a, b))
            rows.append(a)
            cols.append(b)
            counts.append(c)
    if header is None:
        raise FormatError("missing header line")
    if len(rows) != header[2]:
        raise FormatError(f"header declares {header[2]} entries, found {len(rows)}")
    return CountMatrix(header[0], header[1], rows, cols, counts)


def write_sparse_counts(path, data, comment=None):
    data = data.sorted()
    with open(path, "w") as fh:
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"# {line}\n")
        fh.write(f"{data.n_rows} {data.n_cols} {data.counts.size}\n")
        for r, c, v in zip(data.rows, data.cols, data.counts):
            fh.write(f"{r} {c} {v}\n")


# ---------------------------------------------------------------------------
# dense privatized matrices (binary)
# ---------------------------------------------------------------------------


def write_privatized(path, data):
    p = data.params
    expected = math.exp(-p.epsilon / p.precision_n)
    if abs(expected - p.alpha) > 1e-12:
        raise FormatError(f"alpha {p.alpha} does not equal exp(-epsilon/N) = {expected}")
    n_rows, n_cols = data.shape
    seed = _NO_SEED if data.seed is None else int(data.seed)
    header = _PRIV_HEADER.pack(PRIVATIZED_MAGIC, PRIVATIZED_VERSION, int(bool(data.truncated)), 0,
                               n_rows, n_cols, p.precision_n, p.epsilon, p.alpha, seed)
    granularity = p.granularity.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<H", len(granularity)))
        fh.write(granularity)
        fh.write(np.ascontiguousarray(data.values, dtype="<i8").tobytes())


def read_privatized(path):
    with open(path, "rb") as fh:
        raw = fh.read(_PRIV_HEADER.size)
        if len(raw) != _PRIV_HEADER.size:
            raise FormatError("truncated header")
        magic, version, flags, _, n_rows, n_cols, n, eps, alpha, seed = _PRIV_HEADER.unpack(raw)
        if magic != PRIVATIZED_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != PRIVATIZED_VERSION:
            raise FormatError(f"unsupported privatized-matrix version {version}")
        (glen,) = struct.unpack("<H", fh.read(2))
        granularity = fh.read(glen).decode("utf-8")
        payload = fh.read()
    expected = n_rows * n_cols * 8
    if len(payload) != expected:
        raise FormatError(f"payload holds {len(payload)} bytes, header dims need {expected}")
    values = np.frombuffer(payload, dtype="<i8").reshape(n_rows, n_cols).astype(np.int64)
    params = PrivacyParams(int(n), float(eps), float(alpha), granularity)
    return PrivatizedMatrix(values, params, truncated=bool(flags & 1),
                            seed=None if seed == _NO_SEED else int(seed))


# ---------------------------------------------------------------------------
# traces and ground truth (npz)
# ---------------------------------------------------------------------------


def write_trace(path, trace):
    meta = {
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "model": trace.model_config,
        "schedule": {"total_iters": trace.schedule.total_iters, "burn_in": trace.schedule.burn_in,
                     "thin": trace.schedule.thin, "mode": trace.schedule.mode},
        "seed": trace.seed,
        "factors": sorted(trace.samples),
        "extra": trace.extra,
    }
    arrays = {f"factor_{k}": v for k, v in trace.samples.items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), posterior_mean_rates=trace.posterior_mean_rates,
                 log_joint=trace.log_joint, **arrays)


def read_trace(path):
    with np.load(path, allow_pickle=False) as z:
        try:
            meta = json.loads(str(z["meta"]))
        except KeyError:
            raise FormatError("trace file has no metadata") from None
        if meta.get("format") != TRACE_FORMAT or meta.get("version") != TRACE_VERSION:
            raise FormatError(f"not a version-{TRACE_VERSION} trace file")
        samples = {k: z[f"factor_{k}"] for k in meta["factors"]}
        mu = z["posterior_mean_rates"]
        log_joint = z["log_joint"]
    schedule = Schedule(**meta["schedule"])
    n_saved = {v.shape[0] for v in samples.values()}
    if n_saved != {schedule.n_saved}:
        raise FormatError(f"sample count {n_saved} disagrees with schedule ({schedule.n_saved})")
    return SampleTrace(meta["model"], schedule, samples, mu, log_joint, seed=meta["seed"],
                       extra=meta.get("extra", {}))


def write_state(path, model, state):
    """Ground-truth factors plus the model configuration."""
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps({"model": model.config()})), **state.arrays())


def read_state(path):
    """Return ``(model_config, {factor: array})``."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        arrays = {k: z[k] for k in z.files if k != "meta"}
    return meta["model"], arrays


def write_mask(path, mask):
    rows, cols = mask.cells()
    with open(path, "w") as fh:
        fh.write(f"# held-out cells\n{mask.shape[0]} {mask.shape[1]} {rows.size}\n")
        for r, c in zip(rows, cols):
            fh.write(f"{r} {c} 1\n")


def read_mask(path):
    from privpf.models import MaskSpec

    cells = read_sparse_counts(path)
    return MaskSpec.from_cells(cells.shape, cells.rows, cells.cols)


# ---------------------------------------------------------------------------
# metric tables and manifests
# ---------------------------------------------------------------------------


def write_table(path, header, rows):
    """Tab-delimited text table."""
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
