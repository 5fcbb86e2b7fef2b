import json
from pathlib import Path

import numpy as np
import pytest

from fdakit.pipeline import (
    AdaptJob,
    PAIRING_FIXED_CYCLE,
    PAIRING_RANDOM,
    bilinear_resize,
    build_manifest,
    decode_image,
    encode_png,
    item_rng,
    output_name,
    pair_stream,
    preprocess,
    quantize_u8,
    read_tensor,
    run_adapt_job,
    tensor_sidecar,
    write_tensor,
)
from fdakit.transfer import spectral_transfer

from conftest import make_image, synth_photo


def write_images(rng, root, names, h=16, w=20):
    root.mkdir(parents=True, exist_ok=True)
    for name in names:
        path = root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        encode_png(path, make_image(rng, h, w, 3))


class TestManifest:
    def test_lexicographic_order(self, rng, tmp_path):
        write_images(rng, tmp_path, ["b.png", "a.png", "c.png"])
        manifest = build_manifest(tmp_path)
        assert [e.path for e in manifest.entries] == ["a.png", "b.png", "c.png"]

    def test_nested_directories(self, rng, tmp_path):
        write_images(rng, tmp_path, ["sub/x.png", "a.png"])
        manifest = build_manifest(tmp_path)
        assert [e.path for e in manifest.entries] == ["a.png", "sub/x.png"]

    def test_empty_match_raises(self, tmp_path):
        (tmp_path / "d").mkdir()
        with pytest.raises(ValueError, match="match"):
            build_manifest(tmp_path / "d")

    def test_unreadable_root_raises(self, tmp_path):
        with pytest.raises(ValueError, match="readable"):
            build_manifest(tmp_path / "missing")

    def test_label_attachment(self, rng, tmp_path):
        write_images(rng, tmp_path / "img", ["a.png", "b.png"])
        write_images(rng, tmp_path / "lab", ["a.png"])
        manifest = build_manifest(tmp_path / "img", labels_root=tmp_path / "lab")
        assert manifest.entries[0].label is not None
        assert manifest.entries[1].label is None


def job_for(rng, tmp_path, n_src, n_tgt, **kwargs):
    write_images(rng, tmp_path / "src", [f"s{i:02d}.png" for i in range(n_src)])
    write_images(rng, tmp_path / "tgt", [f"t{i:02d}.png" for i in range(n_tgt)])
    return AdaptJob(
        source=build_manifest(tmp_path / "src"),
        target=build_manifest(tmp_path / "tgt"),
        out_dir=str(tmp_path / "out"),
        **kwargs,
    )


class TestPairing:
    def test_golden_vector_philox_v1(self, rng, tmp_path):
        # frozen output of the philox-v1 pairing stream: numpy Philox
        # keyed with seed 42, 5 draws uniform over 3 targets
        job = job_for(rng, tmp_path, 5, 3, seed=42, pairing=PAIRING_RANDOM)
        assert [t for _, t in pair_stream(job)] == [0, 2, 1, 0, 2]
        assert [s for s, _ in pair_stream(job)] == [0, 1, 2, 3, 4]

    def test_fixed_cycle(self, rng, tmp_path):
        job = job_for(rng, tmp_path, 5, 3, pairing=PAIRING_FIXED_CYCLE)
        assert [t for _, t in pair_stream(job)] == [0, 1, 2, 0, 1]

    def test_single_target_in_both_modes(self, rng, tmp_path):
        for mode in (PAIRING_RANDOM, PAIRING_FIXED_CYCLE):
            job = job_for(rng, tmp_path / mode, 4, 1, pairing=mode, seed=9)
            assert all(t == 0 for _, t in pair_stream(job))

    def test_seed_determinism_and_sensitivity(self, rng, tmp_path):
        job = job_for(rng, tmp_path, 30, 7, seed=123)
        first = pair_stream(job)
        assert pair_stream(job) == first
        job.seed = 124
        assert pair_stream(job) != first

    def test_repeats_extend_the_stream(self, rng, tmp_path):
        job = job_for(rng, tmp_path, 3, 2, seed=5, repeats=2)
        stream = pair_stream(job)
        assert len(stream) == 6
        assert [s for s, _ in stream] == [0, 1, 2, 0, 1, 2]

    def test_item_rng_is_stable(self):
        a = item_rng(7, 3).integers(0, 1000, size=4)
        b = item_rng(7, 3).integers(0, 1000, size=4)
        c = item_rng(7, 4).integers(0, 1000, size=4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestPreprocess:
    def test_resize_to_own_size_is_identity(self, rng):
        img = make_image(rng, 10, 14, 3)
        assert np.array_equal(bilinear_resize(img, 10, 14), img)

    def test_checkerboard_2x_upscale_hand_grid(self):
        src = np.array([[0.0, 255.0], [255.0, 0.0]])[:, :, None]
        want = np.array([
            [0.0, 63.75, 191.25, 255.0],
            [63.75, 95.625, 159.375, 191.25],
            [191.25, 159.375, 95.625, 63.75],
            [255.0, 191.25, 63.75, 0.0],
        ])
        got = bilinear_resize(src, 4, 4)[:, :, 0]
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_downscale_dims_and_range(self, rng):
        img = make_image(rng, 53, 71, 3)
        out = bilinear_resize(img, 24, 24)
        assert out.shape == (24, 24, 3)
        assert out.min() >= 0.0 and out.max() <= 255.0

    def test_resize_policy_dims(self, rng):
        # the classic synthetic-dataset geometry: 1914x1052 down to 1280x720
        img = make_image(rng, 1052, 1914, 3)
        assert preprocess(img, resize=(720, 1280)).shape == (720, 1280, 3)

    def test_centered_crop_without_rng(self, rng):
        img = make_image(rng, 10, 10, 1)
        out = preprocess(img, crop=(4, 4))
        assert np.array_equal(out, img[3:7, 3:7])

    def test_random_crop_is_seeded(self, rng):
        img = make_image(rng, 32, 32, 3)
        a = preprocess(img, crop=(8, 8), rng=item_rng(1, 0))
        b = preprocess(img, crop=(8, 8), rng=item_rng(1, 0))
        assert np.array_equal(a, b)

    def test_zero_area_rejected(self, rng):
        with pytest.raises(ValueError, match="at least 1x1"):
            bilinear_resize(make_image(rng, 4, 4, 1), 0, 5)


class TestCodecs:
    def test_png_round_trip_is_lossless(self, rng, tmp_path):
        img = make_image(rng, 9, 13, 3)
        encode_png(tmp_path / "x.png", img)
        assert np.array_equal(decode_image(tmp_path / "x.png"), img)

    def test_quantize_rounds_and_clips(self):
        arr = np.array([[[-3.2, 0.4, 255.7]]])
        assert quantize_u8(arr).tolist() == [[[0, 0, 255]]]

    def test_jpeg_decodes(self, rng, tmp_path):
        from PIL import Image

        u8 = quantize_u8(make_image(rng, 16, 16, 3))
        Image.fromarray(u8).save(tmp_path / "x.jpg", quality=92)
        arr = decode_image(tmp_path / "x.jpg")
        assert arr.shape == (16, 16, 3)
        assert 0.0 <= arr.min() and arr.max() <= 255.0


class TestTensorFiles:
    def test_bitwise_round_trip_float(self, rng, tmp_path):
        arr = rng.normal(size=(5, 7, 3)).astype(np.float32)
        write_tensor(tmp_path / "t.bin", arr)
        back = read_tensor(tmp_path / "t.bin")
        assert back.dtype == np.float32
        assert np.array_equal(back, arr)

    def test_bitwise_round_trip_int(self, rng, tmp_path):
        arr = rng.integers(0, 255, size=(6, 4)).astype(np.int32)
        write_tensor(tmp_path / "t.bin", arr)
        assert np.array_equal(read_tensor(tmp_path / "t.bin"), arr)

    def test_payload_size_arithmetic(self, tmp_path):
        arr = np.zeros((512, 1024, 19), dtype=np.float32)
        write_tensor(tmp_path / "big.bin", arr)
        assert (tmp_path / "big.bin").stat().st_size == 512 * 1024 * 19 * 4

    def test_truncated_payload_rejected(self, rng, tmp_path):
        write_tensor(tmp_path / "t.bin", rng.normal(size=(4, 4, 2)).astype(np.float32))
        payload = (tmp_path / "t.bin").read_bytes()
        (tmp_path / "t.bin").write_bytes(payload[:-4])
        with pytest.raises(ValueError, match="length"):
            read_tensor(tmp_path / "t.bin")

    def test_nan_payload_rejected(self, tmp_path):
        arr = np.zeros((2, 2, 2), dtype=np.float32)
        arr[0, 0, 0] = np.nan
        write_tensor(tmp_path / "t.bin", arr)
        with pytest.raises(ValueError, match="non-finite"):
            read_tensor(tmp_path / "t.bin")

    def test_missing_sidecar_rejected(self, tmp_path):
        (tmp_path / "t.bin").write_bytes(b"\x00" * 16)
        with pytest.raises(ValueError, match="sidecar"):
            read_tensor(tmp_path / "t.bin")

    def test_header_contents(self, tmp_path):
        write_tensor(tmp_path / "t.bin", np.zeros((2, 3), dtype=np.int32))
        header = json.loads(tensor_sidecar(tmp_path / "t.bin").read_text())
        assert header["dims"] == [2, 3]
        assert header["dtype"] == "int32"
        assert header["endianness"] == "little"


class TestAdaptJob:
    def test_output_cardinality_and_naming(self, rng, tmp_path):
        job = job_for(rng, tmp_path, 2, 1, betas=(0.01, 0.05, 0.09), seed=3)
        report = run_adapt_job(job)
        outs = sorted(p.name for p in Path(job.out_dir).glob("*.png"))
        assert len(outs) == 6
        assert outs[0] == "s00__b0.01__tt00.png"
        assert report.n_ok == 6 and report.n_failed == 0

    def test_workers_do_not_change_bytes(self, rng, tmp_path):
        write_images(rng, tmp_path / "src", [f"s{i:02d}.png" for i in range(4)])
        write_images(rng, tmp_path / "tgt", [f"t{i:02d}.png" for i in range(2)])
        blobs = {}
        for workers in (1, 2):
            job = AdaptJob(source=build_manifest(tmp_path / "src"),
                           target=build_manifest(tmp_path / "tgt"),
                           out_dir=str(tmp_path / f"out{workers}"), betas=(0.05,),
                           seed=11, workers=workers, crop=(8, 8))
            run_adapt_job(job)
            blobs[workers] = {p.name: p.read_bytes() for p in Path(job.out_dir).glob("*.png")}
        assert blobs[1] == blobs[2]

    def test_target_cache_does_not_change_bytes(self, rng, tmp_path):
        write_images(rng, tmp_path / "src", [f"s{i:02d}.png" for i in range(6)])
        write_images(rng, tmp_path / "tgt", [f"t{i:02d}.png" for i in range(2)])
        blobs = {}
        for cache in (0, 4):
            job = AdaptJob(source=build_manifest(tmp_path / "src"),
                           target=build_manifest(tmp_path / "tgt"),
                           out_dir=str(tmp_path / f"out{cache}"), betas=(0.05, 0.15),
                           seed=13, workers=2, target_cache=cache)
            run_adapt_job(job)
            blobs[cache] = {p.name: p.read_bytes() for p in Path(job.out_dir).glob("*.png")}
        assert blobs[0] == blobs[4]
        assert len(blobs[0]) == 12

    def test_composition_equals_direct_transfer(self, rng, tmp_path):
        write_images(rng, tmp_path / "src", [f"s{i}.png" for i in range(10)], h=128, w=256)
        write_images(rng, tmp_path / "tgt", ["t0.png", "t1.png", "t2.png"], h=128, w=256)
        job = AdaptJob(source=build_manifest(tmp_path / "src"),
                       target=build_manifest(tmp_path / "tgt"),
                       out_dir=str(tmp_path / "out"), betas=(0.09,), seed=21)
        report = run_adapt_job(job)
        for item in report.items:
            src = decode_image(Path(job.source.root) / item.source)
            tgt = decode_image(Path(job.target.root) / item.target)
            want = quantize_u8(spectral_transfer(src, tgt, item.beta).adapted)
            got = decode_image(Path(job.out_dir) / item.output)
            assert np.array_equal(got, want.astype(np.float64))

    def test_mismatched_target_dims_are_resized(self, rng, tmp_path):
        write_images(rng, tmp_path / "src", ["s.png"], h=24, w=32)
        write_images(rng, tmp_path / "tgt", ["t.png"], h=10, w=11)
        job = AdaptJob(source=build_manifest(tmp_path / "src"),
                       target=build_manifest(tmp_path / "tgt"),
                       out_dir=str(tmp_path / "out"), betas=(0.1,), seed=0)
        report = run_adapt_job(job)
        assert report.n_ok == 1
        out = decode_image(Path(job.out_dir) / report.items[0].output)
        assert out.shape == (24, 32, 3)

    def test_decode_failure_is_isolated(self, rng, tmp_path):
        job = job_for(rng, tmp_path, 3, 1, betas=(0.05, 0.1), seed=2)
        (tmp_path / "src" / "s01.png").write_text("not a png")
        report = run_adapt_job(job)
        assert report.n_failed == 2 and report.n_ok == 4
        failed = [it for it in report.items if it.status == "failed"]
        assert all(it.source == "s01.png" for it in failed)
        assert all(it.error for it in failed)
        # nothing silently dropped: |ok| + |failed| = |sources| * |betas|
        assert report.n_ok + report.n_failed == 3 * 2

    def test_all_failures_abort(self, rng, tmp_path):
        job = job_for(rng, tmp_path, 2, 1, betas=(0.05,), seed=2)
        for p in (tmp_path / "src").glob("*.png"):
            p.write_text("junk")
        with pytest.raises(RuntimeError, match="all 2 items failed"):
            run_adapt_job(job)

    def test_tensor_output_format(self, rng, tmp_path):
        job = job_for(rng, tmp_path, 1, 1, betas=(0.2,), seed=4, out_format="tensor")
        report = run_adapt_job(job)
        out = read_tensor(Path(job.out_dir) / report.items[0].output)
        src = decode_image(tmp_path / "src" / "s00.png")
        tgt = decode_image(tmp_path / "tgt" / "t00.png")
        want = spectral_transfer(src, tgt, 0.2).adapted.astype(np.float32)
        assert np.array_equal(out, want)

    def test_strict_zero_round_trips_source_bytes(self, rng, tmp_path):
        write_images(rng, tmp_path / "src", ["s.png"], h=20, w=20)
        write_images(rng, tmp_path / "tgt", ["t.png"], h=20, w=20)
        job = AdaptJob(source=build_manifest(tmp_path / "src"),
                       target=build_manifest(tmp_path / "tgt"),
                       out_dir=str(tmp_path / "out"), betas=(0.0,), seed=0,
                       strict_zero=True)
        report = run_adapt_job(job)
        got = decode_image(Path(job.out_dir) / report.items[0].output)
        assert np.array_equal(got, decode_image(tmp_path / "src" / "s.png"))

    def test_report_accounting(self, rng, tmp_path):
        job = job_for(rng, tmp_path, 3, 2, betas=(0.05, 0.15), seed=8)
        report = run_adapt_job(job)
        data = report.to_dict()
        assert data["summary"]["items"] == 6
        busy = sum(it.seconds for it in report.items)
        assert busy == pytest.approx(data["summary"]["busy_seconds"])
        assert all(it.imag_residual <= 1e-6 * 255 for it in report.items)

    def test_validate_rejects_bad_jobs(self, rng, tmp_path):
        job = job_for(rng, tmp_path, 1, 1, betas=(1.5,))
        with pytest.raises(ValueError, match="beta"):
            job.validate()
        job = job_for(rng, tmp_path / "b", 1, 1, betas=(), seed=0)
        with pytest.raises(ValueError, match="non-empty"):
            job.validate()

    def test_output_name_template(self):
        assert output_name("roads/a.png", "city/b.png", 0.09, "png") == \
            "roads_a__b0.09__tcity_b.png"


class TestSynthFixture:
    def test_synth_photo_is_valid_image(self, rng):
        img = synth_photo(rng, 64, 96)
        assert img.shape == (64, 96, 3)
        assert img.min() >= 0 and img.max() <= 255
        assert np.array_equal(img, img.round())
