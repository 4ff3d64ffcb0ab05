"""Eigenpair archive: JSON header plus little-endian float64 payload.

Layout:

    EDKITARCHIVE1 <header_bytes:016d>\\n     (32-byte magic line)
    <header JSON, UTF-8>\\n
    <payload: eigenvalues, then eigenvectors row-major (k x dim)>

The header declares absolute byte offsets of both payload parts and a
64-bit BLAKE2b checksum of the payload, and embeds everything needed to
rebuild the Hamiltonian (geometry, model, sector) so archives verify
without external context.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .basis import Sector
from .hamiltonian import ModelSpec
from .lattice import Geometry
from .solver import EigenSet

__all__ = ["ArchiveError", "ArchiveChecksumError", "write_archive", "read_archive", "Archive"]

_MAGIC = "EDKITARCHIVE1"
_MAGIC_LINE_LEN = len(_MAGIC) + 1 + 16 + 1  # "MAGIC <16-digit header length>\n"


class ArchiveError(ValueError):
    pass


class ArchiveChecksumError(ArchiveError):
    pass


def _checksum(payload: bytes) -> str:
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


@dataclass
class Archive:
    """Decoded archive: eigenpairs plus the context that produced them."""

    eigenset: EigenSet
    geometry: Geometry
    model: ModelSpec
    sector: Sector
    tol: float
    seed: int
    header: dict


def _geometry_to_dict(geometry: Geometry) -> dict:
    return {
        "name": geometry.name,
        "coords": [[float(v) for v in row] for row in geometry.coords],
        "bonds": [list(b) for b in geometry.bonds],
        "c2_perm": list(geometry.c2_perm) if geometry.c2_perm else None,
    }


def _geometry_from_dict(d: dict) -> Geometry:
    return Geometry(
        name=d["name"],
        coords=np.array(d["coords"], dtype=float),
        bonds=tuple(tuple(b) for b in d["bonds"]),
        c2_perm=tuple(d["c2_perm"]) if d.get("c2_perm") else None,
    )


def write_archive(
    path,
    eigenset: EigenSet,
    geometry: Geometry,
    model: ModelSpec,
    sector: Sector,
    tol: float,
    seed: int,
) -> None:
    k, dim = eigenset.k, eigenset.dim
    values = np.ascontiguousarray(eigenset.values, dtype="<f8")
    vectors = np.ascontiguousarray(eigenset.vectors.T, dtype="<f8")  # row-major, one state per row
    payload = values.tobytes() + vectors.tobytes()

    header = {
        "format": "edkit-eigenpair-archive",
        "version": 1,
        "payload_offset": "0" * 16,
        "eigenvalues_offset": "0" * 16,
        "eigenvalues_count": k,
        "eigenvectors_offset": "0" * 16,
        "shape": [k, dim],
        "payload_bytes": len(payload),
        "checksum_blake2b64": _checksum(payload),
        "model": asdict(model),
        "geometry": _geometry_to_dict(geometry),
        "sector": {"n_electrons": sector.n_electrons, "twice_ms": sector.twice_ms},
        "labels": eigenset.labels,
        "residuals": [float(r) for r in eigenset.residuals],
        "tol": tol,
        "seed": seed,
    }
    probe = json.dumps(header, sort_keys=True).encode("utf-8")
    header_bytes = len(probe) + 1  # trailing newline
    payload_offset = _MAGIC_LINE_LEN + header_bytes
    header["payload_offset"] = f"{payload_offset:016d}"
    header["eigenvalues_offset"] = f"{payload_offset:016d}"
    header["eigenvectors_offset"] = f"{payload_offset + 8 * k:016d}"
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    if len(blob) + 1 != header_bytes:
        raise ArchiveError("internal error: header size changed while filling offsets")
    magic = f"{_MAGIC} {header_bytes:016d}\n".encode("ascii")
    if len(magic) != _MAGIC_LINE_LEN:
        raise ArchiveError("internal error: malformed magic line")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(blob)
        fh.write(b"\n")
        fh.write(payload)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(_MAGIC_LINE_LEN)
        if len(magic) != _MAGIC_LINE_LEN or not magic.startswith(_MAGIC.encode("ascii")):
            raise ArchiveError(f"{path}: not an edkit eigenpair archive")
        try:
            header_bytes = int(magic[len(_MAGIC) + 1 : -1])
        except ValueError:
            raise ArchiveError(f"{path}: malformed magic line") from None
        blob = fh.read(header_bytes)
        if len(blob) != header_bytes:
            raise ArchiveError(
                f"{path}: truncated header (expected {header_bytes} bytes, got {len(blob)})"
            )
        try:
            return json.loads(blob.decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise ArchiveError(f"{path}: header is not valid JSON ({exc})") from None


def read_archive(path, check: bool = True) -> Archive:
    header = read_header(path)
    k, dim = header["shape"]
    payload_offset = int(header["payload_offset"])
    with open(path, "rb") as fh:
        fh.seek(payload_offset)
        payload = fh.read()
    expected = int(header["payload_bytes"])
    if len(payload) != expected:
        raise ArchiveError(
            f"{path}: payload length mismatch at byte {payload_offset}: "
            f"expected {expected} bytes, found {len(payload)}"
        )
    if check and _checksum(payload) != header["checksum_blake2b64"]:
        raise ArchiveChecksumError(
            f"{path}: payload checksum mismatch over bytes "
            f"{payload_offset}..{payload_offset + expected - 1}"
        )
    values = np.frombuffer(payload[: 8 * k], dtype="<f8").copy()
    vectors = np.frombuffer(payload[8 * k :], dtype="<f8").reshape(k, dim).T.copy()
    eig = EigenSet(
        values=values,
        vectors=vectors,
        residuals=np.array(header["residuals"], dtype=float),
        labels=list(header["labels"]) if header.get("labels") else None,
    )
    model = ModelSpec(**header["model"])
    sector = Sector(header["sector"]["n_electrons"], header["sector"]["twice_ms"])
    return Archive(
        eigenset=eig,
        geometry=_geometry_from_dict(header["geometry"]),
        model=model,
        sector=sector,
        tol=float(header["tol"]),
        seed=int(header["seed"]),
        header=header,
    )
