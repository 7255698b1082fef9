import numpy as np
import pytest

from liquiform import dataset, fixtures, imgio, metrics, warp
from liquiform.metrics import CellStats, EvalReport, evaluate, identity_restorer, psnr, ssim
from oracles.metrics_direct import psnr_direct, ssim_direct


def rand_pair(seed, shape=(13, 13, 3)):
    rng = np.random.default_rng(seed)
    return (rng.uniform(0, 1, shape).astype(np.float32),
            rng.uniform(0, 1, shape).astype(np.float32))


# ---------------------------------------------------------------- psnr


def test_psnr_identical_hits_cap():
    a, _ = rand_pair(0)
    assert psnr(a, a.copy()) == 100.0


def test_psnr_zero_vs_one():
    a = np.zeros((8, 8, 3), dtype=np.float32)
    b = np.ones((8, 8, 3), dtype=np.float32)
    assert psnr(a, b) == 0.0


def test_psnr_uniform_offset_is_20db():
    a = np.full((16, 16, 3), 0.3, dtype=np.float64)
    b = a + 0.1
    assert abs(psnr(a, b) - 20.0) < 1e-9


def test_psnr_symmetric():
    for seed in (1, 2, 3):
        a, b = rand_pair(seed)
        assert psnr(a, b) == psnr(b, a)


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(4)
    base = rng.uniform(0.2, 0.8, (20, 20, 3))
    noise = rng.uniform(-1, 1, base.shape)
    values = [psnr(base, np.clip(base + amp * noise, 0, 1))
              for amp in (0.02, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_psnr_near_identical_capped():
    a, _ = rand_pair(5)
    assert psnr(a, a + 1e-9) == 100.0


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_psnr_matches_direct_formula_oracle():
    for seed in range(50):
        a, b = rand_pair(seed, shape=(9, 7, 3))
        assert abs(psnr(a, b) - psnr_direct(a, b)) < 1e-6


# ---------------------------------------------------------------- ssim


def test_ssim_self_is_exactly_one():
    a, _ = rand_pair(0, shape=(16, 16, 3))
    assert ssim(a, a.copy()) == 1.0


def test_ssim_symmetric():
    for seed in (1, 2):
        a, b = rand_pair(seed, shape=(14, 14, 3))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


def test_ssim_bounded():
    for seed in range(5):
        a, b = rand_pair(seed, shape=(15, 15, 3))
        assert abs(ssim(a, b)) <= 1.0 + 1e-12


def test_ssim_constant_plus_noise_matches_oracle():
    rng = np.random.default_rng(6)
    a = np.full((16, 16, 1), 0.5, dtype=np.float64)
    b = np.clip(a + rng.uniform(-0.05, 0.05, a.shape), 0, 1)
    assert abs(ssim(a, b) - ssim_direct(a, b)) < 1e-6


def test_ssim_matches_direct_formula_oracle():
    for seed in range(50):
        shape = (13, 13, 3) if seed % 2 else (16, 12, 1)
        a, b = rand_pair(seed, shape=shape)
        assert abs(ssim(a, b) - ssim_direct(a, b)) < 1e-6


def test_ssim_rejects_small_images():
    with pytest.raises(ValueError, match="window"):
        ssim(np.zeros((10, 32, 3)), np.zeros((10, 32, 3)))


def test_ssim_accepts_2d_grayscale():
    a, b = rand_pair(7, shape=(12, 12))
    got = ssim(a, b)
    assert abs(got - ssim_direct(a[:, :, None], b[:, :, None])) < 1e-6


def test_ssim_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        ssim(np.zeros((12, 12, 3)), np.zeros((12, 12, 1)))


# ---------------------------------------------------------------- report


def full_cells(p=1.0, s=1.0, count=2):
    return {c: CellStats(p, s, count) for c in metrics.CATEGORY_COLUMNS}


def test_report_rejects_duplicates_and_missing_columns():
    report = EvalReport()
    report.add_row("full", full_cells())
    with pytest.raises(ValueError, match="duplicate"):
        report.add_row("full", full_cells())
    with pytest.raises(ValueError, match="missing"):
        report.add_row("partial", {"S0": CellStats(1, 1, 1)})


def test_report_table_and_records_layout():
    report = EvalReport()
    cells = full_cells(25.0, 0.5, 4)
    cells["S3"] = CellStats(float("nan"), float("nan"), 0)
    report.add_row("full", cells)
    table = report.to_table()
    assert table.splitlines()[0].startswith("config")
    assert "25.00/0.5000 (4)" in table
    assert " -" in table  # empty cell renders as a dash
    records = report.to_records()
    lines = records.strip().split("\n")
    assert len(lines) == 5
    first = lines[0].split("\t")
    assert first[0] == "full" and first[1] == "S0" and first[4] == "4"


# ---------------------------------------------------------------- evaluate


@pytest.fixture(scope="module")
def eval_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval_data")
    src = root / "src"
    src.mkdir()
    for i in range(4):
        imgio.write_image(src / f"p{i}.png", fixtures.toy_portrait(i, size=32))
    manifest = dataset.generate(src, root / "pairs", size=(32, 32), seed=1,
                                all_k=True)
    return dataset.split(manifest, test_fraction=0.25, seed=2)


def test_identity_on_undistorted_set_is_perfect(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(3):
        imgio.write_image(src / f"p{i}.png", fixtures.toy_portrait(i, size=32))
    manifest = dataset.generate(src, tmp_path / "pairs", k_list=[1.0],
                                size=(32, 32), seed=0, all_k=True)
    manifest = dataset.split(manifest, test_fraction=0.34, seed=0)
    cells = evaluate(identity_restorer, manifest, "test")
    assert cells["S0"].psnr == 100.0
    assert cells["S0"].ssim == 1.0
    assert cells["S0"].count == 1
    for cat in dataset.CATEGORIES:
        assert cells[cat].count == 0


def test_s0_aggregation_identity(eval_manifest):
    cells = evaluate(identity_restorer, eval_manifest, "test")
    parts = [cells[c] for c in dataset.CATEGORIES if cells[c].count]
    assert cells["S0"].count == sum(p.count for p in parts)
    weighted_psnr = sum(p.psnr * p.count for p in parts) / cells["S0"].count
    weighted_ssim = sum(p.ssim * p.count for p in parts) / cells["S0"].count
    assert abs(cells["S0"].psnr - weighted_psnr) < 1e-9
    assert abs(cells["S0"].ssim - weighted_ssim) < 1e-9


def test_analytic_restorer_beats_identity_per_category(tmp_path):
    for k in dataset.K_GRID:
        src = tmp_path / f"src{k}"
        src.mkdir()
        for i in range(2):
            imgio.write_image(src / f"p{i}.png", fixtures.toy_portrait(i, size=33))
        manifest = dataset.generate(src, tmp_path / f"pairs{k}", k_list=[k],
                                    size=(33, 33), seed=3, all_k=True)
        manifest = dataset.split(manifest, test_fraction=0.5, seed=3)

        def oracle_restorer(image, k=k):
            return warp.analytic_restore(image, warp.WarpSpec(k=k))

        ident = evaluate(identity_restorer, manifest, "test")
        oracle = evaluate(oracle_restorer, manifest, "test")
        assert oracle["S0"].psnr > ident["S0"].psnr, f"k={k}"
        assert oracle["S0"].ssim > ident["S0"].ssim, f"k={k}"


def test_evaluate_deterministic(eval_manifest):
    report1 = EvalReport()
    report1.add_row("full", evaluate(identity_restorer, eval_manifest, "test"))
    report2 = EvalReport()
    report2.add_row("full", evaluate(identity_restorer, eval_manifest, "test"))
    assert report1.to_records() == report2.to_records()


def test_evaluated_records_hold_plain_floats(eval_manifest):
    # aggregation must not leak numpy scalar reprs into the records
    report = EvalReport()
    report.add_row("identity", evaluate(identity_restorer, eval_manifest, "test"))
    for line in report.to_records().strip().split("\n"):
        _, _, p, s, n = line.split("\t")
        float(p), float(s), int(n)
        assert "(" not in p and "(" not in s


def test_evaluate_names_pair_on_bad_restorer_output(eval_manifest):
    def broken(image):
        return image[:-1]

    with pytest.raises(ValueError, match="restorer returned"):
        evaluate(broken, eval_manifest, "test")


def test_evaluate_empty_split(tmp_path, eval_manifest):
    with pytest.raises(ValueError, match="split must be"):
        evaluate(identity_restorer, eval_manifest, "nosuch")
    src = tmp_path / "src"
    src.mkdir()
    imgio.write_image(src / "p.png", fixtures.toy_portrait(0, size=32))
    unsplit = dataset.generate(src, tmp_path / "pairs", size=(32, 32), seed=0)
    with pytest.raises(ValueError, match="no pairs"):
        evaluate(identity_restorer, unsplit, "test")


# ---------------------------------------------------------------- ablation


def test_ablation_suite_zero_epochs_structure(eval_manifest):
    from liquiform.models import NetworkConfig
    from liquiform.training import TrainConfig

    mcfg = NetworkConfig(base_channels=4, image_size=(32, 32))
    cfg = TrainConfig(pretrain_epochs=0, epochs=0, batch_size=4, seed=5)
    report = metrics.ablation_suite(eval_manifest, mcfg, cfg)
    assert tuple(report.rows) == metrics.ABLATION_CONFIGS
    n_test = len(eval_manifest.for_split("test"))
    for cells in report.rows.values():
        assert cells["S0"].count == n_test
        assert np.isfinite(cells["S0"].psnr)
    # with no training, full collapses to the untrained stage-1 network
    assert report.rows["full"] == report.rows["only_rectification"]


def test_ablation_suite_minimal_training_runs(eval_manifest):
    from liquiform.models import NetworkConfig
    from liquiform.training import TrainConfig

    mcfg = NetworkConfig(base_channels=4, image_size=(32, 32))
    cfg = TrainConfig(learning_rate=0.05, pretrain_epochs=1, epochs=1,
                      batch_size=4, seed=6)
    report = metrics.ablation_suite(eval_manifest, mcfg, cfg)
    assert tuple(report.rows) == metrics.ABLATION_CONFIGS
    table = report.to_table()
    for name in metrics.ABLATION_CONFIGS:
        assert name in table
