"""LSB marking of lossless RGB images with a device's seed bundle.

Channel map: the red LSB plane carries the authentication bits, the green
plane the stochastic bits, and the blue channel is left untouched so that its
digest can vouch for the image.  Payloads are anchored at the top-left corner
in row-major order.  Alpha, when present, is passed through.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ImageFormatError, PayloadTooLargeError, WatermarkError
from .ledger import Ledger, LedgerRecord, TraceResult
from .pipeline import SeedBundle, hash_bits

RED, GREEN, BLUE = 0, 1, 2
CHANNEL_MAP = {"auth": "R", "stoch": "G", "integrity": "B"}
DESCRIPTOR_KEY = "rosvd"
DESCRIPTOR_VERSION = 1
LOSSLESS_FORMATS = ("PNG", "BMP")


@dataclass(frozen=True)
class PayloadDescriptor:
    """Informational record of what was embedded; extraction never needs it."""

    auth_dims: tuple[int, int]
    stoch_dims: tuple[int, int]
    params: str = ""
    version: int = DESCRIPTOR_VERSION

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "auth_dims": list(self.auth_dims),
                "stoch_dims": list(self.stoch_dims),
                "channels": CHANNEL_MAP,
                "params": self.params,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PayloadDescriptor":
        try:
            doc = json.loads(text)
            return cls(tuple(doc["auth_dims"]), tuple(doc["stoch_dims"]), doc.get("params", ""), int(doc["version"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise WatermarkError(f"malformed payload descriptor: {exc}") from None


@dataclass(frozen=True, eq=False)
class MarkedImage:
    pixels: np.ndarray
    descriptor: PayloadDescriptor | None = None

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _pixels(image) -> np.ndarray:
    px = np.asarray(getattr(image, "pixels", image))
    if px.dtype != np.uint8:
        raise ImageFormatError(f"expected 8-bit channels, got dtype {px.dtype}")
    if px.ndim != 3 or px.shape[2] not in (3, 4):
        raise ImageFormatError(f"expected an RGB or RGBA image, got shape {px.shape}")
    return px


def _check_fit(bits: np.ndarray, px: np.ndarray, name: str) -> np.ndarray:
    b = np.asarray(bits)
    if b.ndim != 2:
        raise WatermarkError(f"{name} bits must be a 2-D matrix")
    if b.size and (b.min() < 0 or b.max() > 1):
        raise WatermarkError(f"{name} bits must be 0 or 1")
    h, w = px.shape[:2]
    if b.shape[0] > h or b.shape[1] > w:
        raise PayloadTooLargeError(f"{name} payload {b.shape[0]}x{b.shape[1]} exceeds image {h}x{w}")
    return b.astype(np.uint8)


def embed(image, bundle: SeedBundle) -> MarkedImage:
    """Write auth bits into red LSBs and stochastic bits into green LSBs."""
    px = _pixels(image)
    auth = _check_fit(bundle.auth_bits, px, "auth")
    stoch = _check_fit(bundle.stoch_bits, px, "stoch")
    out = px.copy()
    for channel, bits in ((RED, auth), (GREEN, stoch)):
        r, c = bits.shape
        plane = out[:r, :c, channel]
        out[:r, :c, channel] = (plane & 0xFE) | bits
    desc = PayloadDescriptor(auth.shape, stoch.shape, bundle.params.describe())
    return MarkedImage(out, desc)


def _dims(dims) -> tuple[tuple[int, int], tuple[int, int]]:
    d = tuple(dims)
    if len(d) == 2 and all(isinstance(x, (int, np.integer)) for x in d):
        d = (d, d)
    (ar, ac), (sr, sc) = d
    return (int(ar), int(ac)), (int(sr), int(sc))


def extract(marked, dims) -> tuple[np.ndarray, np.ndarray]:
    """Read back ``(auth_bits, stoch_bits)``.

    ``dims`` is either one ``(rows, cols)`` pair shared by both payloads or a
    pair of pairs ``((auth_rows, auth_cols), (stoch_rows, stoch_cols))``.
    """
    px = _pixels(marked)
    h, w = px.shape[:2]
    out = []
    for channel, (r, c) in zip((RED, GREEN), _dims(dims)):
        if r > h or c > w or r < 1 or c < 1:
            raise PayloadTooLargeError(f"payload dims {r}x{c} do not fit image {h}x{w}")
        out.append(px[:r, :c, channel] & 1)
    return out[0], out[1]


def blue_digest(image) -> bytes:
    """SHA-256 over a domain tag, the big-endian height and width, then the blue bytes."""
    px = _pixels(image)
    h, w = px.shape[:2]
    blue = np.ascontiguousarray(px[:, :, BLUE])
    return hashlib.sha256(b"rosvd-blue\0" + struct.pack(">QQ", h, w) + blue.tobytes()).digest()


def check_integrity(marked, ledger: Ledger) -> bool:
    """True iff the blue-channel digest equals the payload hash of some mark record."""
    return ledger.find_payload(blue_digest(marked), kinds=("mark",)) is not None


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB over the RGB channels (inf when identical)."""
    x = _pixels(a)[:, :, :3].astype(np.float64)
    y = _pixels(b)[:, :, :3].astype(np.float64)
    if x.shape != y.shape:
        raise WatermarkError(f"image shapes differ: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    return math.inf if mse == 0 else 10 * math.log10(255.0**2 / mse)


def mark_image(image, bundle: SeedBundle, ledger: Ledger, device_id: str) -> tuple[MarkedImage, LedgerRecord]:
    """Embed ``bundle`` and append the matching mark record to ``ledger``."""
    marked = embed(image, bundle)
    record = ledger.record_mark(
        device_id, blue_digest(marked), auth_hash=bundle.auth_hash, stoch_hash=bundle.stoch_hash
    )
    return marked, record


@dataclass(frozen=True)
class VerifyReport:
    auth_hash: bytes
    stoch_hash: bytes
    trace: TraceResult
    stoch_bound: bool
    integrity: bool

    @property
    def traced(self) -> bool:
        """Device found and the stochastic digest matches one of its marks."""
        return self.trace.matched and self.stoch_bound


def verify_marked(marked, dims, ledger: Ledger, hash_alg: str = "sha256") -> VerifyReport:
    """Extract, rehash, trace the device and check the integrity channel."""
    auth, stoch = extract(marked, dims)
    h1, h2 = hash_bits(auth, hash_alg), hash_bits(stoch, hash_alg)
    trace = ledger.trace(h1)
    bound = trace.matched and any(r.stoch_hash == h2 for r in ledger.marks_for(trace.device_id))
    return VerifyReport(h1, h2, trace, bound, check_integrity(marked, ledger))


# -- image files ------------------------------------------------------------------


def load_image(path) -> MarkedImage:
    """Load a lossless 8-bit RGB(A) image, keeping any embedded descriptor."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.format not in LOSSLESS_FORMATS:
                raise ImageFormatError(f"{path}: {im.format} is not an accepted lossless format")
            if im.mode not in ("RGB", "RGBA"):
                raise ImageFormatError(f"{path}: mode {im.mode} is not 8-bit RGB or RGBA")
            text = im.info.get(DESCRIPTOR_KEY)
            px = np.array(im, dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageFormatError(f"cannot read image {path}: {exc}") from None
    return MarkedImage(px, PayloadDescriptor.from_json(text) if text else None)


def save_image(path, image) -> None:
    """Write a PNG; the payload descriptor, if any, goes into a text chunk."""
    from PIL import Image
    from PIL.PngImagePlugin import PngInfo

    px = _pixels(image)
    info = PngInfo()
    desc = getattr(image, "descriptor", None)
    if desc is not None:
        info.add_text(DESCRIPTOR_KEY, desc.to_json())
    Image.fromarray(px, "RGBA" if px.shape[2] == 4 else "RGB").save(Path(path), format="PNG", pnginfo=info)
