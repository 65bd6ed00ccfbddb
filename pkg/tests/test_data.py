import numpy as np
import pytest

from pneumoseg import data as dp
from pneumoseg import imaging, rle
from pneumoseg.data import DataError, DatasetIndex, SyntheticConfig


def write_image(root, sid, arr):
    root.mkdir(parents=True, exist_ok=True)
    (root / f"{sid}.png").write_bytes(imaging.encode_gray_png(arr))


def make_csv(rows):
    return ("ImageId,EncodedPixels\n" + "\n".join(f"{i},{r}" for i, r in rows) + "\n").encode()


@pytest.fixture
def image_root(tmp_path, rng):
    root = tmp_path / "images"
    for sid in ("a", "b", "c"):
        write_image(root, sid, rng.integers(0, 256, size=(4, 4), dtype=np.uint8))
    return root


class TestLoadIndex:
    def test_duplicate_ids_merged_by_or(self, image_root):
        index = dp.load_index(make_csv([("a", "1 2"), ("a", "5 2")]), image_root, image_size=4)
        assert len(index) == 1
        sid, text = index.entries[0]
        assert sid == "a"
        assert rle.decode(text, 4, 4).sum() == 4

    def test_empty_rle_row(self, image_root):
        index = dp.load_index(make_csv([("b", "-1")]), image_root, image_size=4)
        assert index.entries == [("b", "-1")]

    def test_header_only_csv_is_valid(self, image_root):
        index = dp.load_index(b"ImageId,EncodedPixels\n", image_root)
        assert len(index) == 0

    def test_bad_header_rejected(self, image_root):
        with pytest.raises(DataError, match="header"):
            dp.load_index(b"Id,Pixels\na,-1\n", image_root)

    def test_malformed_row_reports_line(self, image_root):
        with pytest.raises(DataError, match="line 3"):
            dp.load_index(b"ImageId,EncodedPixels\na,-1\njusttext\n", image_root)

    def test_missing_image_goes_to_skip_report(self, image_root):
        index = dp.load_index(make_csv([("a", "-1"), ("nope", "-1")]), image_root, image_size=4)
        assert index.ids() == ["a"]
        assert index.skipped == [("nope", "missing image file")]

    def test_corrupt_image_filtered_with_reason(self, image_root, rng):
        data = imaging.encode_gray_png(rng.integers(0, 256, (16, 16), dtype=np.uint8))
        (image_root / "broken.png").write_bytes(data[:40])
        index = dp.load_index(make_csv([("broken", "-1"), ("c", "-1")]), image_root, 4)
        assert index.ids() == ["c"]
        assert index.skipped == [("broken", "corrupt image file")]

    def test_masks_round_trip_canonically(self, image_root):
        index = dp.load_index(make_csv([("a", "1 2 3 2"), ("b", "9 4")]), image_root, 4)
        for sid, text in index.entries:
            assert rle.canonicalize(text, 4, 4) == text


class TestSplit:
    def fake_index(self, n):
        return DatasetIndex(entries=[(f"s{i}", "-1") for i in range(n)],
                            root="unused", image_size=4)

    def test_ten_with_fifth_held_out(self):
        train, val = dp.split(self.fake_index(10), 0.2, seed=5)
        assert len(train) == 8 and len(val) == 2
        again = dp.split(self.fake_index(10), 0.2, seed=5)
        assert train.entries == again[0].entries and val.entries == again[1].entries

    def test_partition_law(self):
        index = self.fake_index(23)
        train, val = dp.split(index, 0.3, seed=1)
        train_ids, val_ids = set(train.ids()), set(val.ids())
        assert train_ids | val_ids == set(index.ids())
        assert not (train_ids & val_ids)

    def test_large_corpus_rounding(self):
        train, val = dp.split(self.fake_index(12047), 0.2, seed=0)
        assert len(val) == 2409
        assert len(train) == 12047 - 2409

    def test_different_seeds_differ(self):
        a = dp.split(self.fake_index(50), 0.2, seed=1)[1].ids()
        b = dp.split(self.fake_index(50), 0.2, seed=2)[1].ids()
        assert a != b

    def test_fraction_bounds(self):
        with pytest.raises(ValueError, match="val_fraction"):
            dp.split(self.fake_index(4), 1.0, seed=0)


class TestBatches:
    @pytest.fixture
    def index(self, tmp_path, rng):
        root = tmp_path / "imgs"
        entries = []
        for i in range(10):
            sid = f"s{i}"
            write_image(root, sid, rng.integers(0, 256, size=(8, 8), dtype=np.uint8))
            entries.append((sid, "1 3" if i % 2 else "-1"))
        return DatasetIndex(entries=entries, root=root, image_size=8)

    def test_batch_sizes(self, index):
        sizes = [xb.shape[0] for xb, _ in dp.batches(index, 4, shuffle_seed=0)]
        assert sizes == [4, 4, 2]

    def test_shapes_and_mask_values(self, index):
        for xb, yb in dp.batches(index, 4, shuffle_seed=0):
            assert xb.shape == (xb.shape[0], 1, 8, 8)
            assert yb.shape == xb.shape
            assert set(np.unique(yb.data)) <= {0.0, 1.0}
            assert xb.data.dtype == np.float32

    def test_seed_controls_order(self, index):
        def order(seed):
            return [xb.data.tobytes() for xb, _ in dp.batches(index, 4, shuffle_seed=seed)]

        assert order(3) == order(3)
        assert order(3) != order(4)

    def test_epoch_visits_every_sample_once(self, index):
        total = sum(xb.shape[0] for xb, _ in dp.batches(index, 3, shuffle_seed=1))
        assert total == 10

    def test_unreadable_file_names_id(self, index):
        (index.root / "s3.png").unlink()
        with pytest.raises(DataError, match="s3"):
            list(dp.batches(index, 4, shuffle_seed=0))

    def test_augment_is_deterministic(self, index):
        a = [xb.data.tobytes() for xb, _ in dp.batches(index, 4, 7, augment=True)]
        b = [xb.data.tobytes() for xb, _ in dp.batches(index, 4, 7, augment=True)]
        assert a == b


class TestSyntheticGenerator:
    def test_all_empty_when_fraction_one(self, tmp_path):
        cfg = SyntheticConfig(n_samples=6, image_size=32, empty_fraction=1.0, seed=3)
        index = dp.generate_synthetic(cfg, tmp_path / "d")
        assert all(text == "-1" for _, text in index.entries)

    def test_mask_matches_point_in_ellipse_oracle(self, tmp_path):
        cfg = SyntheticConfig(n_samples=8, image_size=32, empty_fraction=0.25, seed=9)
        index = dp.generate_synthetic(cfg, tmp_path / "d")

        # replay the generator's RNG draws and recount interiors directly
        probe = np.random.default_rng(cfg.seed)
        n_empty = int(np.rint(cfg.n_samples * cfg.empty_fraction))
        flags = np.zeros(cfg.n_samples, dtype=bool)
        flags[probe.permutation(cfg.n_samples)[:n_empty]] = True
        size = cfg.image_size
        for i, (sid, text) in enumerate(index.entries):
            probe.uniform(0.10, 0.30)
            probe.normal(0.0, cfg.noise_std, size=(size, size))
            mask = rle.decode(text, size, size)
            if flags[i]:
                assert mask.sum() == 0
                continue
            cx = probe.uniform(0.30, 0.70) * size
            cy = probe.uniform(0.30, 0.70) * size
            ax = probe.uniform(0.12, 0.25) * size
            ay = probe.uniform(0.12, 0.25) * size
            probe.uniform(0.35, 0.55)
            count = sum(1 for y in range(size) for x in range(size)
                        if ((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2 <= 1.0)
            assert int(mask.sum()) == count
            assert mask[int(round(cy)), int(round(cx))] == 1

    def test_same_seed_byte_identical(self, tmp_path):
        cfg = SyntheticConfig(n_samples=5, image_size=32, empty_fraction=0.4, seed=12)
        dp.generate_synthetic(cfg, tmp_path / "a")
        dp.generate_synthetic(cfg, tmp_path / "b")
        csv_a = (tmp_path / "a" / "index.csv").read_bytes()
        csv_b = (tmp_path / "b" / "index.csv").read_bytes()
        assert csv_a == csv_b
        for img in sorted((tmp_path / "a" / "images").iterdir()):
            twin = tmp_path / "b" / "images" / img.name
            assert img.read_bytes() == twin.read_bytes()

    def test_output_loadable_through_index(self, tmp_path):
        cfg = SyntheticConfig(n_samples=4, image_size=32, empty_fraction=0.5, seed=2)
        dp.generate_synthetic(cfg, tmp_path / "d")
        index = dp.load_index((tmp_path / "d" / "index.csv").read_bytes(),
                              tmp_path / "d" / "images", image_size=32)
        assert len(index) == 4 and not index.skipped

    def test_invalid_config_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="n_samples"):
            dp.generate_synthetic(SyntheticConfig(n_samples=0), tmp_path)
