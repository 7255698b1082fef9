"""Dataset generation, manifest format, split hashing, batch iteration."""

import numpy as np
import pytest

from liquiform import dataset, fixtures, imgio, warp


@pytest.fixture(scope="module")
def source_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sources")
    for i in range(6):
        imgio.write_image(d / f"face{i:02d}.png", fixtures.toy_portrait(i, size=32))
    return d


def test_category_mapping():
    assert [dataset.category_for_k(k) for k in (0.5, 0.8, 1.5, 2.7)] == \
        ["S1", "S2", "S3", "S4"]
    assert dataset.category_for_k(1.0) == "S0"
    assert dataset.category_for_k(0.5 + 5e-10) == "S1"


def test_generate_all_k_counts(source_dir, tmp_path):
    m = dataset.generate(source_dir, tmp_path / "ds", size=(32, 32), seed=7,
                         all_k=True)
    assert len(m.records) == 6 * 4
    for cat in dataset.CATEGORIES:
        assert sum(r.category == cat for r in m.records) == 6
    for r in m.records:
        assert m.resolve(r.distorted_path).exists()
        assert m.resolve(r.original_path).exists()
        assert r.split == "train"


def test_generate_one_k_per_image(source_dir, tmp_path):
    m = dataset.generate(source_dir, tmp_path / "ds", size=(32, 32), seed=7)
    assert len(m.records) == 6
    assert all(r.k in dataset.K_GRID for r in m.records)


def test_generate_k1_writes_identical_pair(source_dir, tmp_path):
    m = dataset.generate(source_dir, tmp_path / "ds", k_list=[1.0],
                         size=(32, 32), seed=0)
    r = m.records[0]
    a = imgio.read_image(m.resolve(r.distorted_path))
    b = imgio.read_image(m.resolve(r.original_path))
    assert np.array_equal(a, b)
    assert r.category == "S0"


def test_generate_is_deterministic(source_dir, tmp_path):
    m1 = dataset.generate(source_dir, tmp_path / "a", size=(32, 32), seed=3)
    m2 = dataset.generate(source_dir, tmp_path / "b", size=(32, 32), seed=3)
    assert (tmp_path / "a" / "manifest.txt").read_bytes() == \
        (tmp_path / "b" / "manifest.txt").read_bytes()
    for r in m1.records:
        assert m1.resolve(r.distorted_path).read_bytes() == \
            m2.resolve(r.distorted_path).read_bytes()
    assert [r.k for r in m1.records] == [r.k for r in m2.records]


def test_generate_skips_undecodable(source_dir, tmp_path, caplog):
    bad_dir = tmp_path / "src"
    bad_dir.mkdir()
    imgio.write_image(bad_dir / "good.png", fixtures.toy_portrait(0, size=32))
    (bad_dir / "broken.png").write_bytes(b"not an image")
    with caplog.at_level("WARNING", logger="liquiform.dataset"):
        m = dataset.generate(bad_dir, tmp_path / "ds", size=(32, 32), seed=0)
    assert len(m.records) == 1
    assert any("broken.png" in rec.message for rec in caplog.records)


def test_generate_empty_source_errors(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ValueError, match="no source images"):
        dataset.generate(empty, tmp_path / "ds")


def test_generate_rejects_bad_k_list(source_dir, tmp_path):
    with pytest.raises(ValueError, match="positive"):
        dataset.generate(source_dir, tmp_path / "ds", k_list=[0.5, -1.0])
    with pytest.raises(ValueError, match="positive"):
        dataset.generate(source_dir, tmp_path / "ds", k_list=[])


def test_manifest_round_trip(source_dir, tmp_path):
    m = dataset.generate(source_dir, tmp_path / "ds", size=(32, 32), seed=11,
                         all_k=True)
    m = dataset.split(m, 0.2, seed=5)
    dataset.write_manifest(m, tmp_path / "ds" / "manifest.txt")
    back = dataset.read_manifest(tmp_path / "ds" / "manifest.txt")
    assert back.seed == 11
    assert back.records == m.records


def test_manifest_rejects_bad_content(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("wrong header\n")
    with pytest.raises(ValueError, match="header"):
        dataset.read_manifest(p)
    p.write_text("dfd-manifest v1 seed=1\na\tb\t0.5\tS2\ttrain\n")
    with pytest.raises(ValueError, match="category"):
        dataset.read_manifest(p)
    p.write_text("dfd-manifest v1 seed=1\na\tb\t0.5\tS1\tmaybe\n")
    with pytest.raises(ValueError, match="split"):
        dataset.read_manifest(p)
    p.write_text("dfd-manifest v1 seed=1\nonly\ttwo\n")
    with pytest.raises(ValueError, match="5 tab-separated"):
        dataset.read_manifest(p)


def _synthetic_manifest(n_originals, pairs_per_original=1):
    records = []
    for i in range(n_originals):
        for j in range(pairs_per_original):
            records.append(dataset.PairRecord(
                f"distorted/{i}_{j}.png", f"originals/{i}.png", 0.5, "S1", "train"))
    return dataset.DatasetManifest(root=None, seed=0, records=records)


def test_split_paper_ratio():
    m = dataset.split(_synthetic_manifest(100), 0.02, seed=1)
    test_originals = {r.original_path for r in m.records if r.split == "test"}
    assert len(test_originals) == 2


def test_split_keeps_originals_together():
    m = dataset.split(_synthetic_manifest(10, pairs_per_original=4), 0.3, seed=2)
    by_original = {}
    for r in m.records:
        by_original.setdefault(r.original_path, set()).add(r.split)
    assert all(len(s) == 1 for s in by_original.values())


def test_split_deterministic():
    a = dataset.split(_synthetic_manifest(20), 0.25, seed=9)
    b = dataset.split(_synthetic_manifest(20), 0.25, seed=9)
    assert a.records == b.records
    c = dataset.split(_synthetic_manifest(20), 0.25, seed=10)
    assert [r.split for r in a.records] != [r.split for r in c.records]


def test_split_degenerate_cases():
    with pytest.raises(ValueError, match="empty test"):
        dataset.split(_synthetic_manifest(10), 0.01, seed=0)
    with pytest.raises(ValueError, match="empty train"):
        dataset.split(_synthetic_manifest(3), 0.9, seed=0)
    with pytest.raises(ValueError, match="at least 2"):
        dataset.split(_synthetic_manifest(1), 0.5, seed=0)
    with pytest.raises(ValueError, match="in \\(0, 1\\)"):
        dataset.split(_synthetic_manifest(10), 1.5, seed=0)


def test_iterate_batch_sizes(source_dir, tmp_path):
    m = dataset.generate(source_dir, tmp_path / "ds", size=(32, 32), seed=0,
                         all_k=True)  # 24 records
    m = dataset.split(m, 0.2, seed=1)
    sizes = [b.distorted.shape[0]
             for b in dataset.iter_batches(m, "train", 9, shuffle_seed=0, epoch=0)]
    n_train = len(m.for_split("train"))
    assert sum(sizes) == n_train
    assert sizes[:-1] == [9] * (len(sizes) - 1) and sizes[-1] <= 9


def test_iterate_shapes_ranges_pairing(source_dir, tmp_path):
    m = dataset.generate(source_dir, tmp_path / "ds", size=(32, 32), seed=0,
                         all_k=True)
    batch = next(dataset.iter_batches(m, "train", 4, shuffle_seed=3, epoch=0))
    assert batch.distorted.shape == (4, 3, 32, 32)
    assert batch.original.shape == (4, 3, 32, 32)
    assert batch.distorted.dtype == np.float32
    assert len(batch.ks) == 4
    assert float(batch.distorted.data.min()) >= 0.0
    assert float(batch.distorted.data.max()) <= 1.0
    # distorting the original with the recorded k approximates the pair
    orig0 = batch.original.data[0].transpose(1, 2, 0)
    redistorted = warp.distort(orig0, warp.WarpSpec(k=batch.ks[0]))
    err = np.abs(redistorted - batch.distorted.data[0].transpose(1, 2, 0)).mean()
    assert err < 0.02  # two quantization passes distance


def test_iterate_order_is_seeded(source_dir, tmp_path):
    m = dataset.generate(source_dir, tmp_path / "ds", size=(32, 32), seed=0,
                         all_k=True)
    def ks(epoch, seed=5):
        out = []
        for b in dataset.iter_batches(m, "train", 7, shuffle_seed=seed, epoch=epoch):
            out.extend(b.ks)
        return out
    assert ks(0) == ks(0)
    assert ks(0) != ks(1)


def test_iterate_missing_file_names_path(source_dir, tmp_path):
    m = dataset.generate(source_dir, tmp_path / "ds", size=(32, 32), seed=0)
    missing = m.records[0].distorted_path
    m.resolve(missing).unlink()
    with pytest.raises(OSError, match="manifest"):
        for _ in dataset.iter_batches(m, "train", 6, shuffle_seed=0, epoch=0):
            pass


def test_iterate_rejects_bad_args(source_dir, tmp_path):
    m = dataset.generate(source_dir, tmp_path / "ds", size=(32, 32), seed=0)
    with pytest.raises(ValueError, match="batch_size"):
        next(dataset.iter_batches(m, "train", 0, shuffle_seed=0, epoch=0))
    with pytest.raises(ValueError, match="split"):
        m.for_split("validation")
