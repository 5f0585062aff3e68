import numpy as np

from flow2d.synthetic import (
    SyntheticConfig,
    build_dataset,
    inject_defect,
    run_benchmark,
    texture_image,
    write_dataset,
)


class TestGeneration:
    def test_texture_range_and_determinism(self):
        a = texture_image(np.random.default_rng(3), 32)
        b = texture_image(np.random.default_rng(3), 32)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (32, 32)
        assert a.min() >= 0.0 and a.max() <= 1.0

    def test_textures_are_smooth(self):
        img = texture_image(np.random.default_rng(0), 64)
        grad = np.abs(np.diff(img, axis=0)).mean()
        noise = np.abs(np.diff(np.random.default_rng(0).uniform(0, 1, (64, 64)), axis=0)).mean()
        assert grad < noise / 3

    def test_defect_mask_matches_changed_pixels(self):
        rng = np.random.default_rng(1)
        img = texture_image(rng, 48)
        out, mask = inject_defect(rng, img)
        assert mask.sum() > 0
        changed = np.abs(out - img) > 1e-9
        assert np.all(changed[mask == 0] == False)  # noqa: E712
        # defect region keeps solid contrast
        assert np.abs(out[mask == 1] - img[mask == 1]).mean() > 0.2

    def test_dataset_counts(self):
        cfg = SyntheticConfig(image_size=24, train_count=5, test_normal=3, test_defect=2, seed=9)
        data = build_dataset(cfg)
        assert len(data.train) == 5
        assert data.test_labels == [0, 0, 0, 1, 1]
        assert all(m.sum() == 0 for m, l in zip(data.test_masks, data.test_labels) if l == 0)
        assert all(m.sum() > 0 for m, l in zip(data.test_masks, data.test_labels) if l == 1)

    def test_write_dataset_layout(self, tmp_path):
        cfg = SyntheticConfig(image_size=16, train_count=2, test_normal=1, test_defect=1, seed=0)
        write_dataset(tmp_path, cfg)
        assert (tmp_path / "train" / "good" / "000.png").exists()
        assert (tmp_path / "train" / "good" / "001.png").exists()
        assert (tmp_path / "test" / "good" / "000.png").exists()
        assert (tmp_path / "test" / "defect" / "000.png").exists()
        assert (tmp_path / "ground_truth" / "defect" / "000_mask.png").exists()


class TestMiniBenchmark:
    def test_pipeline_runs_on_tiny_config(self):
        from flow2d.features import ToyExtractorConfig

        cfg = SyntheticConfig(image_size=32, train_count=12, test_normal=4,
                              test_defect=4, seed=2)
        result = run_benchmark(cfg, extractor=ToyExtractorConfig(channels=4, strides=(4, 8)),
                               depth=2, epochs=2)
        assert 0.0 <= result.image_auroc <= 1.0
        assert 0.0 <= result.pixel_auroc <= 1.0
        assert len(result.histories) == 2
