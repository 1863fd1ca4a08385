"""IDX persistence, manifests, Ising sampling, and the synthetic glyph corpus.

The Ising checks are backed by two oracles coded independently of the
library: a brute-force bond loop for lattice energies and an exact
16-state Boltzmann enumeration for the 2x2 periodic lattice.
"""

import itertools
import struct

import numpy as np
import numpy.testing as npt
import pytest

from critrep.linalg import Rng
from critrep.datasets import (
    IMAGE_MAGIC,
    LABEL_MAGIC,
    ISING_TEMPERATURES,
    IdxFormatError,
    IsingChain,
    IsingLattice,
    IsingParams,
    LabeledDataset,
    all_up_lattice,
    bond_sum,
    filter_by_label_range,
    generate_ising_dataset,
    ising_energy,
    load_from_manifest,
    load_idx,
    metropolis_sweep,
    read_idx_images,
    read_idx_labels,
    synthetic_digits,
    write_idx_images,
    write_idx_labels,
)


class TestLabeledDataset:
    def test_basic_fields(self):
        ds = LabeledDataset(samples=np.array([[0.0, 1.0], [0.5, 0.5]]),
                            labels=np.array([0, 1]))
        assert len(ds) == 2
        assert ds.n_classes == 2
        assert ds.samples.dtype == np.float64

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError, match="2-D"):
            LabeledDataset(samples=np.zeros(4))

    def test_rejects_out_of_range_values(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            LabeledDataset(samples=np.array([[1.5]]))
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            LabeledDataset(samples=np.array([[-0.1]]))

    def test_rejects_label_count_mismatch(self):
        with pytest.raises(ValueError, match="count mismatch"):
            LabeledDataset(samples=np.zeros((3, 2)), labels=np.array([0]))

    def test_rejects_label_outside_declared_classes(self):
        with pytest.raises(ValueError, match="n_classes"):
            LabeledDataset(samples=np.zeros((2, 1)), labels=np.array([0, 5]),
                           n_classes=3)

    def test_split_and_subset(self):
        ds = LabeledDataset(samples=np.linspace(0, 1, 10).reshape(5, 2),
                            labels=np.arange(5), n_classes=5)
        a, b = ds.split(3)
        assert len(a) == 3 and len(b) == 2
        npt.assert_array_equal(b.labels, [3, 4])
        assert a.n_classes == 5
        sub = ds.subset(np.array([4, 0]))
        npt.assert_array_equal(sub.labels, [4, 0])
        npt.assert_array_equal(sub.samples, ds.samples[[4, 0]])


class TestFilterByLabelRange:
    def test_keeps_and_shifts(self):
        ds = LabeledDataset(samples=np.eye(6)[:, :3] * 0 + np.linspace(0, 1, 18).reshape(6, 3),
                            labels=np.array([0, 3, 4, 3, 5, 1]))
        out = filter_by_label_range(ds, 3, 5)
        npt.assert_array_equal(out.labels, [0, 1, 0])
        assert out.n_classes == 2
        npt.assert_array_equal(out.samples, ds.samples[[1, 2, 3]])

    def test_requires_labels(self):
        with pytest.raises(ValueError, match="no labels"):
            filter_by_label_range(LabeledDataset(samples=np.zeros((2, 2))), 0, 1)


class TestIdxRoundTrip:
    def test_images_and_labels(self, tmp_path):
        rng = Rng(42)
        pixels = rng.integers(2 * 3 * 4, 256).reshape(2, 12).astype(np.uint8)
        labels = np.array([7, 2])
        img_path, lbl_path = tmp_path / "img.idx", tmp_path / "lbl.idx"
        write_idx_images(pixels, img_path, rows=3, cols=4)
        write_idx_labels(labels, lbl_path)
        ds = load_idx(img_path, lbl_path)
        npt.assert_allclose(ds.samples, pixels / 255.0)
        npt.assert_array_equal(ds.labels, labels)

    def test_float_input_quantizes(self, tmp_path):
        vals = np.array([[0.0, 0.5, 1.0]])
        path = tmp_path / "f.idx"
        write_idx_images(vals, path, rows=1, cols=3)
        raw = read_idx_images(path)
        npt.assert_array_equal(raw, [[0, 128, 255]])

    def test_header_layout_is_big_endian(self, tmp_path):
        path = tmp_path / "img.idx"
        write_idx_images(np.zeros((1, 4), dtype=np.uint8), path, rows=2, cols=2)
        blob = path.read_bytes()
        magic, n, rows, cols = struct.unpack(">IIII", blob[:16])
        assert (magic, n, rows, cols) == (IMAGE_MAGIC, 1, 2, 2)
        assert len(blob) == 16 + 4

    def test_bad_image_magic(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">IIII", 0xDEAD, 1, 1, 1) + b"\x00")
        with pytest.raises(IdxFormatError, match="magic"):
            read_idx_images(path)

    def test_bad_label_magic(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">II", IMAGE_MAGIC, 1) + b"\x00")
        with pytest.raises(IdxFormatError, match="magic"):
            read_idx_labels(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.idx"
        path.write_bytes(struct.pack(">IIII", IMAGE_MAGIC, 2, 2, 2) + b"\x00" * 5)
        with pytest.raises(IdxFormatError, match="truncated"):
            read_idx_images(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "extra.idx"
        path.write_bytes(struct.pack(">IIII", IMAGE_MAGIC, 1, 1, 1) + b"\x00\x00")
        with pytest.raises(IdxFormatError, match="trailing"):
            read_idx_images(path)

    def test_image_label_count_mismatch(self, tmp_path):
        img_path, lbl_path = tmp_path / "img.idx", tmp_path / "lbl.idx"
        write_idx_images(np.zeros((2, 1), dtype=np.uint8), img_path, rows=1, cols=1)
        write_idx_labels(np.array([0]), lbl_path)
        with pytest.raises(IdxFormatError, match="count mismatch"):
            load_idx(img_path, lbl_path)

    def test_write_rejects_wrong_geometry(self, tmp_path):
        with pytest.raises(ValueError, match="rows\\*cols"):
            write_idx_images(np.zeros((1, 5), dtype=np.uint8),
                             tmp_path / "x.idx", rows=2, cols=2)

    def test_write_rejects_wide_labels(self, tmp_path):
        with pytest.raises(ValueError, match="unsigned byte"):
            write_idx_labels(np.array([300]), tmp_path / "l.idx")


class TestManifest:
    def _make_dataset(self, tmp_path):
        import hashlib
        import json

        pixels = np.arange(8, dtype=np.uint8).reshape(2, 4)
        write_idx_images(pixels, tmp_path / "img.idx", rows=2, cols=2)
        write_idx_labels(np.array([1, 0]), tmp_path / "lbl.idx")
        digest = hashlib.sha256((tmp_path / "img.idx").read_bytes()).hexdigest()
        manifest = {
            "toy": {"images": "img.idx", "labels": "lbl.idx",
                    "sha256": digest, "n_expected": 2}
        }
        mpath = tmp_path / "manifest.json"
        mpath.write_text(json.dumps(manifest))
        return mpath

    def test_happy_path(self, tmp_path):
        mpath = self._make_dataset(tmp_path)
        ds = load_from_manifest(mpath, "toy")
        assert len(ds) == 2
        npt.assert_array_equal(ds.labels, [1, 0])

    def test_unknown_name(self, tmp_path):
        mpath = self._make_dataset(tmp_path)
        with pytest.raises(KeyError, match="nope"):
            load_from_manifest(mpath, "nope")

    def test_checksum_mismatch(self, tmp_path):
        import json

        mpath = self._make_dataset(tmp_path)
        entries = json.loads(mpath.read_text())
        entries["toy"]["sha256"] = "0" * 64
        mpath.write_text(json.dumps(entries))
        with pytest.raises(ValueError, match="checksum"):
            load_from_manifest(mpath, "toy")

    def test_missing_file(self, tmp_path):
        mpath = self._make_dataset(tmp_path)
        (tmp_path / "img.idx").unlink()
        with pytest.raises(FileNotFoundError):
            load_from_manifest(mpath, "toy")

    def test_n_expected_mismatch(self, tmp_path):
        import json

        mpath = self._make_dataset(tmp_path)
        entries = json.loads(mpath.read_text())
        entries["toy"]["n_expected"] = 99
        mpath.write_text(json.dumps(entries))
        with pytest.raises(ValueError, match="expected 99"):
            load_from_manifest(mpath, "toy")

    def test_data_dir_override(self, tmp_path, monkeypatch):
        mpath = self._make_dataset(tmp_path)
        elsewhere = tmp_path / "elsewhere"
        elsewhere.mkdir()
        (tmp_path / "img.idx").rename(elsewhere / "img.idx")
        (tmp_path / "lbl.idx").rename(elsewhere / "lbl.idx")
        with pytest.raises(FileNotFoundError):
            load_from_manifest(mpath, "toy")
        monkeypatch.setenv("CRITREP_DATA_DIR", str(elsewhere))
        ds = load_from_manifest(mpath, "toy")
        assert len(ds) == 2


# ---------------------------------------------------------------------------
# Ising oracles
# ---------------------------------------------------------------------------

def _brute_energy(grid: np.ndarray, coupling: float, boundary: str) -> float:
    """Independent energy oracle: explicit loop over right/down bonds."""
    side = grid.shape[0]
    total = 0
    for r in range(side):
        for c in range(side):
            if boundary == "periodic":
                total += grid[r, c] * grid[r, (c + 1) % side]
                total += grid[r, c] * grid[(r + 1) % side, c]
            else:
                if c + 1 < side:
                    total += grid[r, c] * grid[r, c + 1]
                if r + 1 < side:
                    total += grid[r, c] * grid[r + 1, c]
    return -coupling * total


class TestIsingEnergy:
    def test_all_up_3x3_periodic(self):
        # 2*9 bonds, all aligned
        lat = all_up_lattice(3)
        assert ising_energy(lat, IsingParams(side=3, temperature=2.0)) == -18.0

    def test_all_up_3x3_free(self):
        # 2*3*2 bonds
        p = IsingParams(side=3, temperature=2.0, boundary="free")
        assert ising_energy(all_up_lattice(3), p) == -12.0

    def test_center_flip_3x3_periodic(self):
        spins = np.ones(9, dtype=np.int64)
        spins[4] = -1
        lat = IsingLattice(side=3, spins=spins)
        # 4 bonds flip sign: -18 + 2*4
        assert ising_energy(lat, IsingParams(side=3, temperature=2.0)) == -10.0

    @pytest.mark.parametrize("side", [2, 3, 4, 5])
    @pytest.mark.parametrize("boundary", ["periodic", "free"])
    def test_matches_brute_force(self, side, boundary):
        rng = Rng(1000 + side)
        for trial in range(5):
            spins = 2 * rng.bernoulli(np.full(side * side, 0.5)).astype(np.int64) - 1
            lat = IsingLattice(side=side, spins=spins)
            p = IsingParams(side=side, temperature=1.0, coupling=1.3,
                            boundary=boundary)
            expect = _brute_energy(spins.reshape(side, side), 1.3, boundary)
            assert ising_energy(lat, p) == pytest.approx(expect)
            assert bond_sum(lat, boundary) == pytest.approx(-expect / 1.3)

    def test_side_mismatch(self):
        with pytest.raises(ValueError, match="side"):
            ising_energy(all_up_lattice(3), IsingParams(side=4, temperature=2.0))


class TestIsingValidation:
    def test_params(self):
        with pytest.raises(ValueError, match="side"):
            IsingParams(side=1, temperature=2.0)
        with pytest.raises(ValueError, match="temperature"):
            IsingParams(side=3, temperature=0.0)
        with pytest.raises(ValueError, match="boundary"):
            IsingParams(side=3, temperature=2.0, boundary="twisted")

    def test_lattice(self):
        with pytest.raises(ValueError, match="side\\*side"):
            IsingLattice(side=3, spins=np.ones(4, dtype=np.int64))
        with pytest.raises(ValueError, match=r"\+-1"):
            IsingLattice(side=2, spins=np.array([1, 1, 0, 1]))

    def test_magnetization(self):
        lat = IsingLattice(side=2, spins=np.array([1, 1, 1, -1]))
        assert lat.magnetization == pytest.approx(0.5)

    def test_temperature_presets(self):
        assert ISING_TEMPERATURES == {"low": 1.53, "critical": 2.26, "high": 3.28}


class TestIsingChain:
    @pytest.mark.parametrize("boundary", ["periodic", "free"])
    def test_tracked_bond_sum_stays_exact(self, boundary):
        p = IsingParams(side=4, temperature=2.5, boundary=boundary)
        chain = IsingChain(p, Rng(7))
        for _ in range(20):
            chain.sweep(3)
            assert chain.tracked_bond_sum == bond_sum(chain.lattice, boundary)
            assert chain.energy == pytest.approx(ising_energy(chain.lattice, p))

    def test_deterministic_given_seed(self):
        p = IsingParams(side=4, temperature=2.26)
        a, b = IsingChain(p, Rng(5)), IsingChain(p, Rng(5))
        a.sweep(50)
        b.sweep(50)
        npt.assert_array_equal(a.lattice.spins, b.lattice.spins)
        c = IsingChain(p, Rng(6))
        c.sweep(50)
        assert not np.array_equal(a.lattice.spins, c.lattice.spins)

    def test_sweep_helper_leaves_input_alone(self):
        p = IsingParams(side=3, temperature=5.0)
        lat = all_up_lattice(3)
        before = lat.spins.copy()
        out = metropolis_sweep(lat, p, Rng(11))
        npt.assert_array_equal(lat.spins, before)
        assert not np.array_equal(out.spins, before)  # hot lattice must move

    def test_state_index_packs_bits(self):
        p = IsingParams(side=2, temperature=2.0)
        chain = IsingChain(p, Rng(0),
                           start=IsingLattice(side=2, spins=np.array([1, -1, -1, 1])))
        assert chain.state_index() == 0b1001

    def test_2x2_matches_exact_boltzmann(self):
        # exact 16-state enumeration vs a long chain; validates neighbor
        # wiring, acceptance thresholds, and RNG plumbing end to end
        temp = 3.0
        p = IsingParams(side=2, temperature=temp)
        states = list(itertools.product([-1, 1], repeat=4))
        energies = np.array([
            _brute_energy(np.array(s).reshape(2, 2), 1.0, "periodic")
            for s in states
        ])
        weights = np.exp(-energies / temp)
        exact = weights / weights.sum()
        index_of = {
            sum(1 << i for i in range(4) if s[i] == 1): j
            for j, s in enumerate(states)
        }

        chain = IsingChain(p, Rng(3))
        chain.sweep(200)
        n_draws = 6000
        counts = np.zeros(16)
        for _ in range(n_draws):
            chain.sweep(2)
            counts[index_of[chain.state_index()]] += 1
        empirical = counts / n_draws
        tv = 0.5 * np.abs(empirical - exact).sum()
        assert tv < 0.05, f"total variation {tv:.4f} vs exact distribution"


class TestGenerateIsingDataset:
    def test_shape_and_values(self):
        p = IsingParams(side=3, temperature=2.5, sweeps_equilibrate=30,
                        sweeps_between_samples=2)
        ds = generate_ising_dataset(p, 7, Rng(9))
        assert ds.samples.shape == (7, 9)
        assert set(np.unique(ds.samples)) <= {0.0, 1.0}
        assert ds.labels is None

    def test_deterministic(self):
        p = IsingParams(side=3, temperature=2.5, sweeps_equilibrate=30,
                        sweeps_between_samples=2)
        a = generate_ising_dataset(p, 5, Rng(9))
        b = generate_ising_dataset(p, 5, Rng(9))
        npt.assert_array_equal(a.samples, b.samples)

    def test_chain_major_order(self):
        p = IsingParams(side=3, temperature=2.5, sweeps_equilibrate=30,
                        sweeps_between_samples=2)
        big = generate_ising_dataset(p, 4, Rng(9), n_chains=2)   # shares 2+2
        small = generate_ising_dataset(p, 2, Rng(9), n_chains=2)  # shares 1+1
        npt.assert_array_equal(big.samples[0], small.samples[0])
        npt.assert_array_equal(big.samples[2], small.samples[1])

    def test_rejects_empty(self):
        p = IsingParams(side=3, temperature=2.5)
        with pytest.raises(ValueError, match="n_samples"):
            generate_ising_dataset(p, 0, Rng(1))

    def test_low_temperature_stays_ordered(self):
        # all-up start at T well below ordering: magnetization stays high
        p = IsingParams(side=5, temperature=1.0, sweeps_equilibrate=50,
                        sweeps_between_samples=2)
        ds = generate_ising_dataset(p, 10, Rng(4))
        mags = np.abs(2 * ds.samples - 1).mean() * 0 + (2 * ds.samples - 1).mean(axis=1)
        assert np.abs(mags).min() > 0.8


class TestSyntheticDigits:
    def test_shapes_labels_quantization(self):
        ds = synthetic_digits(40, Rng(2))
        assert ds.samples.shape == (40, 784)
        assert ds.n_classes == 10
        npt.assert_array_equal(ds.labels, np.arange(40) % 10)
        assert ds.samples.min() >= 0.0 and ds.samples.max() <= 1.0
        # 8-bit quantization: every value is an integer number of 255ths
        scaled = ds.samples * 255.0
        npt.assert_allclose(scaled, np.round(scaled), atol=1e-9)
        # glyphs sit on an exactly-zero background
        assert (ds.samples == 0.0).mean() > 0.3

    def test_deterministic_per_seed(self):
        a = synthetic_digits(20, Rng(5))
        b = synthetic_digits(20, Rng(5))
        c = synthetic_digits(20, Rng(6))
        npt.assert_array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_style_reuse_gives_near_duplicates(self):
        # two draws of the same dominant style differ only by sub-pixel
        # jitter; with few styles per class such pairs must exist
        ds = synthetic_digits(60, Rng(8), n_styles=2, style_tail=2.0)
        zeros = ds.samples[ds.labels == 0]
        dists = []
        for i in range(len(zeros)):
            for j in range(i + 1, len(zeros)):
                dists.append(np.abs(zeros[i] - zeros[j]).mean())
        assert min(dists) < 0.01
