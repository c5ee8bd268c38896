"""Field and noise serialization.

Two containers are supported:

CSV
    ``#`` header lines with ``key=value`` metadata (``format``, ``version``,
    ``N``, ``d``, ``K``, flags, batch shape), then rows
    ``batch,component,k1[,k2],real,imag``.

Binary (little-endian)
    ``b"ITSF"`` magic, ``uint32`` format version, ``uint32`` header length,
    a UTF-8 JSON header, then raw ``<f8`` data. A ``field`` header section
    describes complex coefficients stored as interleaved (real, imag) pairs in
    the in-memory FFT order; a ``noise`` section describes a real increment
    array of shape ``(..., M, steps)``.
"""

from __future__ import annotations

import csv
import itertools
import json
import struct
from pathlib import Path

import numpy as np

from .spectral import SpectralField, geometry

MAGIC = b"ITSF"
FORMAT_VERSION = 1


def _field_header(f: SpectralField) -> dict:
    return {
        "N": f.dim_domain,
        "d": f.dim_range,
        "K": f.cutoff,
        "batch": list(f.batch_shape),
        "zero_mean": bool(f.zero_mean),
        "div_free": bool(f.div_free),
    }


def write_field_csv(f: SpectralField, path) -> Path:
    path = Path(path)
    head = _field_header(f)
    geo = f.geometry
    with path.open("w", newline="") as fh:
        fh.write(f"# format=itostrat-field version={FORMAT_VERSION}\n")
        for key in ("N", "d", "K", "zero_mean", "div_free"):
            fh.write(f"# {key}={int(head[key])}\n")
        fh.write("# batch=" + "x".join(str(b) for b in head["batch"]) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        kcols = [f"k{j + 1}" for j in range(f.dim_domain)]
        w.writerow(["batch", "component", *kcols, "real", "imag"])
        batch = list(np.ndindex(*f.batch_shape)) if f.batch_shape else [()]
        for b in batch:
            c = f.coeffs[b] if b else f.coeffs
            for comp in range(f.dim_range):
                for idx in itertools.product(range(geo.n), repeat=f.dim_domain):
                    k = [int(geo.ks[i]) for i in idx]
                    z = c[(comp,) + idx]
                    w.writerow(
                        ["-".join(map(str, b)) or "0", comp, *k, repr(float(z.real)), repr(float(z.imag))]
                    )
    return path


def read_field_csv(path) -> SpectralField:
    meta = {}
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, val = item.partition("=")
                    meta[key] = val
            else:
                rows.append(line)
    N, d, K = int(meta["N"]), int(meta["d"]), int(meta["K"])
    batch = tuple(int(b) for b in meta["batch"].split("x")) if meta.get("batch") else ()
    geo = geometry(N, K)
    c = np.zeros(batch + (d,) + (geo.n,) * N, dtype=complex)
    reader = csv.reader(rows[1:])
    for row in reader:
        b = tuple(int(x) for x in row[0].split("-")) if batch else ()
        comp = int(row[1])
        k = tuple(int(x) % geo.n for x in row[2 : 2 + N])
        c[b + (comp,) + k] = float(row[2 + N]) + 1j * float(row[3 + N])
    return SpectralField(c, N, zero_mean=bool(int(meta["zero_mean"])), div_free=bool(int(meta["div_free"])))


def _write_container(path, header: dict, data: np.ndarray) -> Path:
    path = Path(path)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return path


def _read_container(path):
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an itostrat container")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    data = np.frombuffer(raw[12 + hlen :], dtype="<f8")
    return header, data


def write_field_binary(f: SpectralField, path) -> Path:
    pairs = np.stack([f.coeffs.real, f.coeffs.imag], axis=-1)
    return _write_container(path, {"field": _field_header(f)}, pairs)


def read_field_binary(path) -> SpectralField:
    header, data = _read_container(path)
    h = header["field"]
    n = 2 * h["K"] + 1
    shape = tuple(h["batch"]) + (h["d"],) + (n,) * h["N"] + (2,)
    pairs = data.reshape(shape)
    return SpectralField(
        pairs[..., 0] + 1j * pairs[..., 1], h["N"], zero_mean=h["zero_mean"], div_free=h["div_free"]
    )


def write_noise_binary(inc, path) -> Path:
    header = {
        "noise": {
            "M": inc.modes,
            "steps": inc.grid.steps,
            "dt": inc.grid.dt,
            "T": inc.grid.horizon,
            "seed": inc.seed,
            "streams": list(inc.streams),
            "factor": inc.factor,
            "shape": list(inc.values.shape),
        }
    }
    return _write_container(path, header, inc.values)


def read_noise_binary(path):
    from .noise import BrownianIncrements, TimeGrid

    header, data = _read_container(path)
    h = header["noise"]
    grid = TimeGrid(h["T"], h["steps"])
    return BrownianIncrements(
        values=data.reshape(h["shape"]).copy(),
        grid=grid,
        seed=h["seed"],
        streams=tuple(h["streams"]),
        factor=h["factor"],
    )


def read_field(path) -> SpectralField:
    """Load a field from either container, sniffing the magic bytes."""
    with Path(path).open("rb") as fh:
        magic = fh.read(4)
    return read_field_binary(path) if magic == MAGIC else read_field_csv(path)
