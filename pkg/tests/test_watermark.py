from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from rosvd import pipeline, watermark
from rosvd.errors import ImageFormatError, PayloadTooLargeError, WatermarkError
from rosvd.ledger import Ledger
from rosvd.pipeline import PipelineParams, SeedBundle
from rosvd.sim import EnvCondition, sample_response


def random_bundle(rng, shape) -> SeedBundle:
    auth = rng.integers(0, 2, shape).astype(np.uint8)
    stoch = rng.integers(0, 2, shape).astype(np.uint8)
    return SeedBundle(auth, pipeline.hash_bits(auth), stoch, pipeline.hash_bits(stoch), PipelineParams(), "devX")


def random_image(rng, h, w, channels=3) -> np.ndarray:
    return rng.integers(0, 256, (h, w, channels), dtype=np.uint8)


@pytest.fixture
def registered(default_device):
    bundle = pipeline.derive_bundle(sample_response(default_device, EnvCondition(25, 1)))
    led = Ledger()
    led.register(default_device.device_id, bundle.auth_hash, bundle.stoch_hash, 5)
    return led, bundle


def test_round_trip_and_lsb_bound(rng):
    img = random_image(rng, 40, 50)
    b = random_bundle(rng, (30, 45))
    marked = watermark.embed(img, b)
    auth, stoch = watermark.extract(marked, (30, 45))
    np.testing.assert_array_equal(auth, b.auth_bits)
    np.testing.assert_array_equal(stoch, b.stoch_bits)
    assert np.abs(marked.pixels.astype(int) - img).max() <= 1
    assert np.array_equal(marked.pixels >> 1, img >> 1)
    assert np.array_equal(marked.pixels[:, :, 2], img[:, :, 2])
    assert marked.descriptor.auth_dims == (30, 45)


def test_exact_fit_1024(rng):
    img = random_image(rng, 1024, 1024)
    b = random_bundle(rng, (1024, 1024))
    marked = watermark.embed(img, b)
    auth, stoch = watermark.extract(marked.pixels, (1024, 1024))
    assert np.array_equal(auth, b.auth_bits) and np.array_equal(stoch, b.stoch_bits)
    assert watermark.psnr(img, marked) >= 51


def test_zero_payload_on_even_image_is_noop(rng):
    img = (random_image(rng, 16, 16) & 0xFE).astype(np.uint8)
    zeros = np.zeros((16, 16), dtype=np.uint8)
    b = SeedBundle(zeros, pipeline.hash_bits(zeros), zeros, pipeline.hash_bits(zeros), PipelineParams())
    assert np.array_equal(watermark.embed(img, b).pixels, img)
    assert watermark.psnr(img, img) == float("inf")


def test_alpha_passed_through(rng):
    img = random_image(rng, 20, 20, channels=4)
    marked = watermark.embed(img, random_bundle(rng, (20, 20)))
    assert np.array_equal(marked.pixels[:, :, 3], img[:, :, 3])


def test_payload_too_large(rng):
    with pytest.raises(PayloadTooLargeError):
        watermark.embed(random_image(rng, 10, 10), random_bundle(rng, (11, 4)))
    with pytest.raises(PayloadTooLargeError):
        watermark.extract(random_image(rng, 10, 10), (10, 11))


@pytest.mark.parametrize("bad", [np.zeros((4, 4), np.uint8), np.zeros((4, 4, 2), np.uint8), np.zeros((4, 4, 3), np.uint16)])
def test_non_rgb_rejected(rng, bad):
    with pytest.raises(ImageFormatError):
        watermark.embed(bad, random_bundle(rng, (2, 2)))


def test_png_round_trip_with_descriptor(tmp_path, rng):
    marked = watermark.embed(random_image(rng, 24, 24), random_bundle(rng, (8, 8)))
    watermark.save_image(tmp_path / "m.png", marked)
    back = watermark.load_image(tmp_path / "m.png")
    assert np.array_equal(back.pixels, marked.pixels)
    assert back.descriptor == marked.descriptor
    with Image.open(tmp_path / "m.png") as im:
        assert '"channels": {"auth": "R"' in im.info["rosvd"]


def test_lossy_and_palette_inputs_rejected(tmp_path, rng):
    Image.fromarray(random_image(rng, 8, 8)).save(tmp_path / "x.jpg")
    with pytest.raises(ImageFormatError):
        watermark.load_image(tmp_path / "x.jpg")
    Image.fromarray(random_image(rng, 8, 8)).convert("P").save(tmp_path / "p.png")
    with pytest.raises(ImageFormatError):
        watermark.load_image(tmp_path / "p.png")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(ImageFormatError):
        watermark.load_image(tmp_path / "junk.png")


def test_bmp_accepted(tmp_path, rng):
    img = random_image(rng, 8, 8)
    Image.fromarray(img).save(tmp_path / "x.bmp")
    assert np.array_equal(watermark.load_image(tmp_path / "x.bmp").pixels, img)


def test_blue_digest_layout(rng):
    import hashlib
    import struct

    img = random_image(rng, 3, 5)
    expected = hashlib.sha256(b"rosvd-blue\0" + struct.pack(">QQ", 3, 5) + img[:, :, 2].tobytes()).digest()
    assert watermark.blue_digest(img) == expected


def test_integrity_and_trace(rng, registered, default_device):
    led, bundle = registered
    marked, rec = watermark.mark_image(random_image(rng, 80, 80), bundle, led, default_device.device_id)
    assert rec.payload_hash == watermark.blue_digest(marked)
    assert watermark.check_integrity(marked, led)
    report = watermark.verify_marked(marked, (64, 64), led)
    assert report.traced and report.integrity and report.trace.device_id == default_device.device_id

    blue = marked.pixels.copy()
    blue[70, 3, 2] ^= 0x10
    assert not watermark.check_integrity(blue, led)

    red = marked.pixels.copy()
    red[5, 7, 0] ^= 1
    r = watermark.verify_marked(red, (64, 64), led)
    assert r.integrity and not r.traced and not r.trace.matched

    green = marked.pixels.copy()
    green[9, 2, 1] ^= 1
    g = watermark.verify_marked(green, (64, 64), led)
    assert g.integrity and g.trace.matched and not g.stoch_bound and not g.traced


def test_unmarked_image_does_not_trace(rng, registered):
    led, _ = registered
    report = watermark.verify_marked(random_image(rng, 64, 64), (64, 64), led)
    assert not report.traced and not report.integrity


def test_descriptor_parse_errors():
    with pytest.raises(WatermarkError):
        watermark.PayloadDescriptor.from_json("{}")
