"""Minimal single-file NIfTI-1 reader and writer.

Supported subset: magic "n+1\\0" (data in the same file), datatypes uint8,
int16 and float32, 3-D volumes, spacing from pixdim, affine from the sform
rows with a pixdim-diagonal fallback.  Both byte orders are handled by
sniffing sizeof_hdr.  The writer always emits little-endian float32 with
the sform set and produces deterministic bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import NiftiParseError
from .volume import Volume3D

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

_DTYPES = {2: "u1", 4: "i2", 16: "f4"}
_BITPIX = {2: 8, 4: 16, 16: 32}


def write_nifti(vol: Volume3D, path) -> None:
    """Write a volume as little-endian float32 NIfTI-1."""
    nx, ny, nz = vol.dims
    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", header, 70, 16)  # datatype: float32
    struct.pack_into("<h", header, 72, 32)  # bitpix
    struct.pack_into("<8f", header, 76, 1.0, *vol.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, float(VOX_OFFSET))
    struct.pack_into("<f", header, 112, 1.0)  # scl_slope
    struct.pack_into("<f", header, 116, 0.0)  # scl_inter
    header[123] = 2  # xyzt_units: millimeters
    struct.pack_into("<h", header, 252, 0)  # qform_code
    struct.pack_into("<h", header, 254, 1)  # sform_code
    struct.pack_into("<4f", header, 280, *vol.affine[0])
    struct.pack_into("<4f", header, 296, *vol.affine[1])
    struct.pack_into("<4f", header, 312, *vol.affine[2])
    header[344:348] = MAGIC
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
            fh.write(np.asarray(vol.data, dtype="<f4").ravel(order="F").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write NIfTI file {path}: {exc}") from exc


def read_nifti(path) -> Volume3D:
    """Read a single-file NIfTI-1 volume.

    Raises NiftiParseError naming the offending header field on malformed
    input.  Non-positive pixdim entries are replaced by their magnitude (or
    1.0 when zero); scl_slope/scl_inter scaling is applied when present.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read NIfTI file {path}: {exc}") from exc
    if len(raw) < HEADER_SIZE:
        raise NiftiParseError(f"sizeof_hdr: file has only {len(raw)} bytes, need {HEADER_SIZE}")
    (size_le,) = struct.unpack_from("<i", raw, 0)
    if size_le == HEADER_SIZE:
        bo = "<"
    else:
        (size_be,) = struct.unpack_from(">i", raw, 0)
        if size_be == HEADER_SIZE:
            bo = ">"
        else:
            raise NiftiParseError(f"sizeof_hdr: expected 348 in either byte order, got {size_le}")

    magic = raw[344:348]
    if magic != MAGIC:
        raise NiftiParseError(f"magic: expected {MAGIC!r}, got {magic!r}")

    dim = struct.unpack_from(bo + "8h", raw, 40)
    if dim[0] != 3:
        raise NiftiParseError(f"dim[0]: only 3-D volumes are supported, got {dim[0]}")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) < 1:
        raise NiftiParseError(f"dim: non-positive extent in {(nx, ny, nz)}")

    (datatype,) = struct.unpack_from(bo + "h", raw, 70)
    if datatype not in _DTYPES:
        raise NiftiParseError(f"datatype: unsupported code {datatype} (supported: 2, 4, 16)")

    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    spacing = tuple(abs(p) if p != 0 else 1.0 for p in pixdim[1:4])

    (vox_offset_f,) = struct.unpack_from(bo + "f", raw, 108)
    vox_offset = int(vox_offset_f)
    if vox_offset < HEADER_SIZE:
        raise NiftiParseError(f"vox_offset: {vox_offset_f} is before the end of the header")

    slope, inter = struct.unpack_from(bo + "2f", raw, 112)
    (sform_code,) = struct.unpack_from(bo + "h", raw, 254)

    nvox = nx * ny * nz
    nbytes = nvox * _BITPIX[datatype] // 8
    if len(raw) < vox_offset + nbytes:
        raise NiftiParseError(
            f"data: expected {nbytes} bytes at offset {vox_offset}, file has {len(raw) - vox_offset}"
        )
    arr = np.frombuffer(raw, dtype=bo + _DTYPES[datatype], count=nvox, offset=vox_offset)
    data = arr.astype(np.float64).reshape((nx, ny, nz), order="F")
    if (slope not in (0.0, 1.0)) or inter != 0.0:
        data = data * (slope if slope != 0.0 else 1.0) + inter

    if sform_code > 0:
        rows = [struct.unpack_from(bo + "4f", raw, off) for off in (280, 296, 312)]
        affine = np.vstack([np.asarray(rows, dtype=np.float64), [0.0, 0.0, 0.0, 1.0]])
    else:
        affine = np.diag([spacing[0], spacing[1], spacing[2], 1.0])
    return Volume3D(data, spacing, affine)
