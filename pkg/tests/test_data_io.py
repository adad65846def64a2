import math

import numpy as np
import pytest

from corrected_llp.data_io import (
    Dataset,
    bayes_ber,
    inject_noise,
    load_csv,
    make_bags,
    read_bags,
    read_model,
    split,
    standardize,
    synth_gaussians,
    write_bags,
    write_csv,
    write_model,
)
from corrected_llp.errors import DomainError, InputError
from corrected_llp.kernel import KernelModel, KernelSpec
from corrected_llp.losses import NoiseRates


def labeled(n, prior=0.5, seed=0):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < prior, 1, -1)
    return Dataset(rng.normal(size=(n, 3)), y)


class TestLoadCsv:
    def test_three_class(self, fixtures_dir):
        ds = load_csv(fixtures_dir / "toy_3class.csv", "species", "B")
        raw = [line.rsplit(",", 1)[1].strip() for line in (fixtures_dir / "toy_3class.csv").read_text().splitlines()[1:]]
        np.testing.assert_array_equal(ds.labels, [1 if c == "B" else -1 for c in raw])
        assert ds.prior == pytest.approx(raw.count("B") / len(raw))
        assert ds.class_names["negative"] == ["A", "C"]
        assert ds.features.shape == (len(raw), 2)

    def test_bad_cell(self, fixtures_dir):
        with pytest.raises(InputError, match=r"row 2, column 'f2'"):
            load_csv(fixtures_dir / "toy_bad_cell.csv", "species", "B")

    def test_empty(self, fixtures_dir):
        with pytest.raises(InputError, match="empty"):
            load_csv(fixtures_dir / "empty.csv", "species", "B")

    def test_missing_column(self, fixtures_dir):
        with pytest.raises(InputError, match="no column"):
            load_csv(fixtures_dir / "toy_3class.csv", "label", "B")

    def test_banknote_style_prior(self, tmp_path):
        rng = np.random.default_rng(0)
        y = np.r_[np.zeros(762, int), np.ones(610, int)]
        path = tmp_path / "bank.csv"
        lines = ["v1,v2,class"] + [f"{a:.4f},{b:.4f},{c}" for (a, b), c in zip(rng.normal(size=(1372, 2)), y)]
        path.write_text("\n".join(lines) + "\n")
        ds = load_csv(path, "class", 0)
        assert ds.prior == pytest.approx(0.5554, abs=1e-4)

    def test_roundtrip(self, tmp_path):
        ds = labeled(20)
        write_csv(tmp_path / "d.csv", ds)
        back = load_csv(tmp_path / "d.csv", "label", 1)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)


class TestSplit:
    def test_sizes(self):
        train, test = split(labeled(1372), 0.8, seed=1)
        assert (len(train), len(test)) == (1098, 274)

    def test_partition(self):
        ds = Dataset(np.arange(50.0)[:, None], np.ones(50, int))
        train, test = split(ds, 0.8, seed=2)
        rows = np.r_[train.features[:, 0], test.features[:, 0]]
        np.testing.assert_array_equal(np.sort(rows), ds.features[:, 0])

    def test_deterministic(self):
        a, _ = split(labeled(30), seed=4)
        b, _ = split(labeled(30), seed=4)
        np.testing.assert_array_equal(a.features, b.features)

    def test_degenerate(self):
        with pytest.raises(DomainError):
            split(labeled(1), 0.8)
        with pytest.raises(DomainError):
            split(labeled(10), 1.0)

    def test_standardize_uses_train_statistics(self):
        train, test = split(labeled(200), seed=0)
        st, sv = standardize(train, test)
        np.testing.assert_allclose(st.features.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(st.features.std(axis=0), 1, atol=1e-12)
        mu, sd = train.features.mean(axis=0), train.features.std(axis=0)
        np.testing.assert_allclose(sv.features, (test.features - mu) / sd)


class TestMakeBags:
    def test_singletons(self):
        bags = make_bags(labeled(9), 1)
        assert {b.gamma for b in bags} <= {0.0, 1.0}

    def test_floor(self):
        bags = make_bags(labeled(10), 4)
        assert len(bags) == 2 and all(b.size == 4 for b in bags)

    def test_prior_identity(self):
        ds = labeled(103, prior=0.3, seed=5)
        bags = make_bags(ds, 8, seed=6)
        retained = np.concatenate([b.hidden_labels for b in bags])
        sizes = np.array([b.size for b in bags])
        gammas = np.array([b.gamma for b in bags])
        assert np.sum(sizes * gammas) / sizes.sum() == pytest.approx(np.mean(retained == 1))

    def test_too_large(self):
        with pytest.raises(DomainError):
            make_bags(labeled(5), 6)

    def test_bag_file_roundtrip(self, tmp_path):
        bags = make_bags(labeled(24), 6, seed=1)
        write_bags(tmp_path / "b.csv", tmp_path / "p.csv", bags)
        back = read_bags(tmp_path / "b.csv", tmp_path / "p.csv")
        assert [b.gamma for b in back] == [b.gamma for b in bags]
        assert all(b.hidden_labels is None for b in back)
        for a, b in zip(bags, back):
            np.testing.assert_array_equal(a.instances, b.instances)

    def test_fixture_bags(self, fixtures_dir):
        bags = read_bags(fixtures_dir / "bags4.csv", fixtures_dir / "bags4_proportions.csv")
        assert [b.gamma for b in bags] == [0.9, 0.1, 0.6, 0.4]

    def test_size_mismatch(self, tmp_path):
        (tmp_path / "b.csv").write_text("bag_id,feature_1\n0,1.0\n0,2.0\n")
        (tmp_path / "p.csv").write_text("bag_id,gamma,size\n0,0.5,3\n")
        with pytest.raises(InputError, match="size"):
            read_bags(tmp_path / "b.csv", tmp_path / "p.csv")


class TestNoise:
    def test_identity(self):
        ds = labeled(100)
        noisy, flips = inject_noise(ds, NoiseRates(0, 0), seed=1)
        np.testing.assert_array_equal(noisy.labels, ds.labels)
        assert not flips.any()

    def test_rates(self):
        n = 100_000
        ds = labeled(n, seed=2)
        _, flips = inject_noise(ds, NoiseRates(0.5, 0.4), seed=3)
        for label, rate in ((1, 0.5), (-1, 0.4)):
            mask = ds.labels == label
            m = mask.sum()
            assert abs(flips[mask].mean() - rate) < 3 * math.sqrt(rate * (1 - rate) / m)

    def test_all_positive_count(self):
        n = 100_000
        ds = Dataset(np.zeros((n, 1)), np.ones(n, int))
        _, flips = inject_noise(ds, NoiseRates(0.2, 0.0), seed=4)
        assert abs(flips.sum() - 20_000) < 3 * math.sqrt(n * 0.16)


class TestSynthetic:
    def test_bayes_oracle(self):
        assert bayes_ber(0.0) == 0.5
        assert bayes_ber(4.0) == pytest.approx(0.02275, abs=1e-5)

    def test_class_means(self):
        n = 5000
        ds = synth_gaussians(3, 4.0, n, seed=0)
        for label, sign in ((1, 1.0), (-1, -1.0)):
            mean = ds.features[ds.labels == label].mean(axis=0)
            np.testing.assert_array_less(np.abs(mean - sign * np.array([2.0, 0, 0])), 3 / math.sqrt(n))

    def test_deterministic(self):
        np.testing.assert_array_equal(synth_gaussians(2, 1.0, 5, 9).features, synth_gaussians(2, 1.0, 5, 9).features)


class TestModelFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        model = KernelModel(rng.normal(size=(7, 2)), rng.normal(size=7), KernelSpec(0.3))
        write_model(tmp_path / "m.txt", model, 1e-3, "manifest: abc")
        back, lam = read_model(tmp_path / "m.txt")
        assert lam == 1e-3 and back.kernel.bandwidth == 0.3
        np.testing.assert_array_equal(back.coefficients, model.coefficients)
        np.testing.assert_array_equal(back.anchors, model.anchors)

    def test_malformed(self, tmp_path):
        (tmp_path / "m.txt").write_text("hello\n")
        with pytest.raises(InputError):
            read_model(tmp_path / "m.txt")
