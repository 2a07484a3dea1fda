"""Raw little-endian volume files with a plain-text sidecar header.

A volume ``path`` is stored as two files: the payload at ``path`` (float32
little-endian, W fastest; flows are three contiguous channel grids) and a
``key = value`` header at ``path + ".hdr"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, FileFormatError, ShapeError
from .pyramid import CoefficientPyramid, parameter_count

MAGIC = "wavereg-raw"
DTYPE = "float32-le"
ROLES = ("image", "flow", "labels", "pyramid")
_LE32 = np.dtype("<f4")


@dataclass
class VolumeHeader:
    dims: tuple
    spacing: tuple = (1.0, 1.0, 1.0)
    channels: int = 1
    role: str = "image"
    dtype: str = DTYPE
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise FileFormatError(f"dims must be three positive integers, got {self.dims}")
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise FileFormatError(f"spacing must be three positive reals, got {self.spacing}")
        if self.role not in ROLES:
            raise FileFormatError(f"unknown role {self.role!r}")
        if self.dtype != DTYPE:
            raise FileFormatError(f"unsupported dtype {self.dtype!r}; only {DTYPE}")

    @property
    def count(self) -> int:
        if self.role == "pyramid":
            return parameter_count(self.dims)
        return self.channels * int(np.prod(self.dims))

    @property
    def nbytes(self) -> int:
        return 4 * self.count

    @property
    def shape(self) -> tuple:
        if self.role == "pyramid":
            return (self.count,)
        return self.dims if self.channels == 1 else (self.channels,) + self.dims

    def to_text(self) -> str:
        lines = [
            f"format = {MAGIC}",
            f"dims = {' '.join(map(str, self.dims))}",
            f"spacing = {' '.join(repr(s) for s in self.spacing)}",
            f"channels = {self.channels}",
            f"dtype = {self.dtype}",
            f"role = {self.role}",
        ]
        lines += [f"{k} = {v}" for k, v in sorted(self.extra.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "VolumeHeader":
        items = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FileFormatError(f"malformed header line {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            items[key] = value
        if items.pop("format", None) != MAGIC:
            raise FileFormatError(f"not a {MAGIC} header")
        try:
            return cls(
                dims=tuple(int(v) for v in items.pop("dims").split()),
                spacing=tuple(float(v) for v in items.pop("spacing").split()),
                channels=int(items.pop("channels")),
                dtype=items.pop("dtype"),
                role=items.pop("role"),
                extra=items,
            )
        except KeyError as exc:
            raise FileFormatError(f"header is missing key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise FileFormatError(f"bad header value: {exc}") from None


def header_path(path) -> Path:
    return Path(str(path) + ".hdr")


def write_volume(path, header: VolumeHeader, data) -> None:
    data = np.asarray(data)
    if data.size != header.count:
        raise ShapeError(f"header declares {header.count} values, data has {data.size}")
    payload = np.ascontiguousarray(data, dtype=_LE32).tobytes()
    Path(path).write_bytes(payload)
    header_path(path).write_text(header.to_text())


def read_volume(path):
    """Returns ``(header, data)``; data is float32 shaped per the header."""
    hdr = header_path(path)
    if not hdr.exists():
        raise FileFormatError(f"missing header file {hdr}")
    header = VolumeHeader.from_text(hdr.read_text())
    payload = Path(path).read_bytes()
    if len(payload) != header.nbytes:
        raise CorruptFileError(f"{path}: expected {header.nbytes} bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype=_LE32).astype(np.float32).reshape(header.shape)
    return header, data


def write_pyramid(path, pyramid: CoefficientPyramid, wavelet: str, diffeomorphic: bool = False) -> None:
    header = VolumeHeader(pyramid.dims, channels=3, role="pyramid",
                          extra={"wavelet": wavelet, "field": "velocity" if diffeomorphic else "displacement",
                                 "order": "phi1,res2,res3,gates2,gates3"})
    write_volume(path, header, pyramid.to_vector())


def read_pyramid(path):
    header, data = read_volume(path)
    if header.role != "pyramid":
        raise FileFormatError(f"{path} holds a {header.role}, not a pyramid")
    return header, CoefficientPyramid.from_vector(data.astype(np.float64), header.dims)


# ---------------------------------------------------------------------------
# padding


def pad_to_multiple(vol, m: int = 8):
    """Zero-pad the last three axes symmetrically up to multiples of ``m``.

    Returns the padded array and the ``((before, after), ...)`` record that
    :func:`crop` inverts.
    """
    if m < 1:
        raise ValueError(f"pad multiple must be >= 1, got {m}")
    vol = np.asarray(vol)
    record = []
    for n in vol.shape[-3:]:
        extra = -n % m
        record.append((extra // 2, extra - extra // 2))
    pad = [(0, 0)] * (vol.ndim - 3) + record
    return np.pad(vol, pad), tuple(record)


def crop(vol, record):
    vol = np.asarray(vol)
    idx = [slice(None)] * (vol.ndim - 3)
    idx += [slice(b, n - a) for (b, a), n in zip(record, vol.shape[-3:])]
    return vol[tuple(idx)]
