import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from recobench.dedup import (
    dedup,
    dhash,
    dhash_hex,
    hash_file,
    read_manifest,
    write_hash_dump,
)


def save_png(path, array):
    Image.fromarray(array).save(path)
    return str(path)


class TestDhash:
    def test_uniform_image_hashes_to_zero(self):
        assert dhash(np.full((20, 20), 128.0)) == 0
        assert dhash_hex(np.full((7, 5), 3, dtype=np.uint8)) == "0" * 16

    def test_strictly_increasing_rows_hash_to_all_ones(self):
        image = np.tile(np.linspace(0.0, 255.0, 40), (24, 1))
        assert dhash(image) == 0xFFFFFFFFFFFFFFFF

    def test_deterministic(self, rng):
        image = rng.integers(0, 256, (32, 32, 3)).astype(np.uint8)
        assert dhash(image) == dhash(image.copy())

    def test_rgb_uses_luma_weights(self):
        # pure-red and pure-green gradients order the same way
        red = np.zeros((16, 16, 3))
        red[:, :, 0] = np.linspace(0, 200, 16)[None, :]
        gray = 0.299 * red[:, :, 0]
        assert dhash(red) == dhash(gray)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 50.0))
    def test_invariant_under_order_preserving_brightness_scaling(self, seed, scale):
        image = np.random.default_rng(seed).random((16, 16)) * 100.0
        assert dhash(image) == dhash(image * scale)

    def test_empty_raster_rejected(self):
        with pytest.raises(ValueError):
            dhash(np.zeros((0, 4)))

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError, match="raster"):
            dhash(np.zeros((4, 4, 5)))

    def test_file_roundtrip_matches_array_hash(self, tmp_path, rng):
        array = rng.integers(0, 256, (20, 28, 3)).astype(np.uint8)
        path = save_png(tmp_path / "img.png", array)
        assert hash_file(path) == dhash(array)


@pytest.fixture
def corpus(tmp_path, rng):
    """30 reference images, 100 candidates of which 7 are byte-identical
    copies of references."""
    refs = []
    for i in range(30):
        path = save_png(tmp_path / f"ref{i}.png",
                        rng.integers(0, 256, (24, 24, 3)).astype(np.uint8))
        refs.append((f"ref{i}", path))
    candidates = []
    for i in range(93):
        path = save_png(tmp_path / f"cand{i}.png",
                        rng.integers(0, 256, (24, 24, 3)).astype(np.uint8))
        candidates.append((f"cand{i}", path))
    planted = []
    for j, ref_index in enumerate((2, 5, 11, 17, 20, 23, 28)):
        path = tmp_path / f"dup{j}.png"
        path.write_bytes((tmp_path / f"ref{ref_index}.png").read_bytes())
        candidates.append((f"dup{j}", str(path)))
        planted.append(f"dup{j}")
    return refs, candidates, planted


class TestDedup:
    def test_planted_duplicates_removed_exactly(self, corpus):
        refs, candidates, planted = corpus
        result = dedup(candidates, [refs])
        assert sorted(result.removed) == sorted(planted)
        assert len(result.kept) == 93
        for cid in planted:
            assert "matches reference" in result.reasons[cid]

    def test_idempotent(self, corpus):
        refs, candidates, _ = corpus
        first = dedup(candidates, [refs])
        paths = dict(candidates)
        second = dedup([(cid, paths[cid]) for cid in first.kept], [refs])
        assert second.removed == []
        assert second.kept == first.kept

    def test_empty_reference_set_keeps_everything(self, corpus):
        _, candidates, _ = corpus
        result = dedup(candidates, [])
        assert result.kept == [cid for cid, _ in candidates]
        assert result.removed == []

    def test_unreadable_candidate_warned_and_kept(self, tmp_path, corpus):
        refs, _, _ = corpus
        broken = tmp_path / "broken.png"
        broken.write_bytes(b"not an image")
        with pytest.warns(UserWarning, match="unreadable candidate"):
            result = dedup([("broken", str(broken))], [refs])
        assert result.kept == ["broken"]

    def test_unreadable_reference_warned_and_skipped(self, tmp_path, corpus):
        _, candidates, _ = corpus
        broken = tmp_path / "brokenref.png"
        broken.write_bytes(b"junk")
        with pytest.warns(UserWarning, match="unreadable reference"):
            result = dedup(candidates[:3], [[("bad", str(broken))]])
        assert len(result.kept) == 3

    def test_hamming_mode_catches_near_duplicates(self, tmp_path, rng):
        # at the native 9x8 hash resolution the resize is the identity, so
        # swapping one adjacent pixel pair flips only a couple of bits
        base = rng.permutation(np.arange(72)).reshape(8, 9).astype(np.uint8)
        ref_path = save_png(tmp_path / "r.png", base)
        near = base.copy()
        near[3, 4], near[3, 5] = base[3, 5], base[3, 4]
        near_path = save_png(tmp_path / "n.png", near)
        distance = (hash_file(ref_path) ^ hash_file(near_path)).bit_count()
        assert 0 < distance <= 8
        exact = dedup([("n", near_path)], [[("r", ref_path)]])
        assert exact.removed == []
        fuzzy = dedup([("n", near_path)], [[("r", ref_path)]], max_hamming=8)
        assert fuzzy.removed == ["n"]


class TestManifests:
    def test_read_manifest(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("id,path\n# comment\na,/tmp/a.png\nb,/tmp/b.png\n")
        assert read_manifest(path) == [("a", "/tmp/a.png"), ("b", "/tmp/b.png")]

    def test_bad_manifest_row(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("a,/tmp/a.png,extra\n")
        with pytest.raises(ValueError, match="id,path"):
            read_manifest(path)

    def test_hash_dump_format(self, tmp_path, rng):
        img = save_png(tmp_path / "x.png", rng.integers(0, 256, (16, 16)).astype(np.uint8))
        write_hash_dump([("x", img)], tmp_path / "hashes.csv")
        lines = (tmp_path / "hashes.csv").read_text().splitlines()
        assert lines[0] == "id,hash_hex"
        ident, hexhash = lines[1].split(",")
        assert ident == "x" and len(hexhash) == 16 and hexhash == hexhash.lower()
        assert int(hexhash, 16) == hash_file(img)
