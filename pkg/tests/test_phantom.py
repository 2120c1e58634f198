import numpy as np
import pytest

from ssmuse.forward import make_coil_maps, make_radial_trajectory
from ssmuse.phantom import (DEFAULT_TISSUES, Tissue, extract_training_slices,
                            make_phantom, make_training_slices,
                            random_training_tissues, synthesize_kspace)
from ssmuse.seqsim import SequenceParams

from helpers import random_complex


class TestMakePhantom:
    def test_ellipsoid_volume_fraction(self):
        semiaxes = (0.7, 0.5, 0.6)
        tissue = Tissue(t1=1.0, proton_density=1.0, semiaxes=semiaxes)
        phantom = make_phantom(32, (tissue,))
        measured = phantom.support_mask.mean()
        # Coordinates span [-1, 1) per axis, so the ellipsoid occupies
        # (4/3) pi a b c / 8 of the volume.
        expected = 4.0 / 3.0 * np.pi * np.prod(semiaxes) / 8.0
        assert measured == pytest.approx(expected, rel=0.05)

    def test_support_keeps_one_voxel_margin(self):
        phantom = make_phantom(32, DEFAULT_TISSUES)
        mask = phantom.support_mask
        assert not mask[0].any() and not mask[-1].any()
        assert not mask[:, 0].any() and not mask[:, -1].any()
        assert not mask[:, :, 0].any() and not mask[:, :, -1].any()

    def test_later_tissues_overwrite_earlier(self):
        inner = Tissue(t1=2.0, proton_density=0.5, semiaxes=(0.2, 0.2, 0.2))
        outer = Tissue(t1=1.0, proton_density=1.0, semiaxes=(0.8, 0.8, 0.8))
        phantom = make_phantom(16, (outer, inner))
        center = (8, 8, 8)
        assert phantom.t1_map[center] == 2.0
        assert phantom.label_map[center] == 2

    def test_values_follow_tissues(self):
        phantom = make_phantom(16, DEFAULT_TISSUES)
        for idx, tissue in enumerate(DEFAULT_TISSUES, start=1):
            sel = phantom.label_map == idx
            if sel.any():
                assert np.all(phantom.t1_map[sel] == tissue.t1)
                assert np.all(phantom.proton_density[sel] == tissue.proton_density)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_phantom(4)
        with pytest.raises(ValueError):
            make_phantom(16, ())
        with pytest.raises(ValueError):
            Tissue(t1=-1.0, proton_density=1.0)
        with pytest.raises(ValueError):
            Tissue(t1=1.0, proton_density=1.0, semiaxes=(0.0, 0.1, 0.1))


@pytest.fixture(scope="module")
def setup():
    seq = SequenceParams(n_echoes_per_block=16,
                         flip_schedule=((1, 16, np.deg2rad(6.0)),))
    traj = make_radial_trajectory(16, 16, 64, 8, ordering_seed=2, n_kz=8)
    coils = make_coil_maps((8, 8, 8), 4)
    return seq, traj, coils


class TestSynthesizeKspace:
    def test_noise_variance(self, setup):
        seq, traj, coils = setup
        # A zero proton-density phantom makes the noiseless signal zero,
        # so the measurements are pure noise.
        phantom = make_phantom(8, (Tissue(t1=1.0, proton_density=0.0),))
        sigma = 0.01
        kspace, _ = synthesize_kspace(phantom, seq, traj, coils, sigma, seed=0)
        values = np.concatenate([kspace.samples.real.ravel(),
                                 kspace.samples.imag.ravel()])
        assert values.size >= 1e5
        assert np.var(values) == pytest.approx(sigma ** 2, rel=0.05)

    def test_deterministic(self, setup):
        seq, traj, coils = setup
        phantom = make_phantom(8, DEFAULT_TISSUES)
        a, _ = synthesize_kspace(phantom, seq, traj, coils, 0.01, seed=3)
        b, _ = synthesize_kspace(phantom, seq, traj, coils, 0.01, seed=3)
        assert np.array_equal(a.samples, b.samples)

    def test_noiseless_matches_truth_forward(self, setup):
        seq, traj, coils = setup
        phantom = make_phantom(8, DEFAULT_TISSUES)
        kspace, truth = synthesize_kspace(phantom, seq, traj, coils, 0.0, seed=0)
        from ssmuse.forward import nudft_forward
        tau = 5
        direct = nudft_forward(truth.contrast(tau), traj.frames[tau], coils)
        assert np.array_equal(kspace.samples[tau], direct)

    def test_validation(self, setup):
        seq, traj, coils = setup
        phantom = make_phantom(8, DEFAULT_TISSUES)
        with pytest.raises(ValueError):
            synthesize_kspace(phantom, seq, traj, coils, -0.1, seed=0)
        wrong = make_coil_maps((16, 16, 16), 2)
        with pytest.raises(ValueError):
            synthesize_kspace(phantom, seq, traj, wrong, 0.0, seed=0)


class TestTrainingSlices:
    def test_slice_count_without_filtering(self):
        rng = np.random.default_rng(0)
        u = random_complex(rng, (6, 8, 10, 3))
        slices, scales = extract_training_slices([u], snr_floor=0.0)
        assert len(slices) == 3 * (6 + 8 + 10)
        assert len(scales) == len(slices)

    def test_unit_peak_normalization(self):
        rng = np.random.default_rng(1)
        u = random_complex(rng, (6, 6, 6, 2), scale=3.0)
        slices, scales = extract_training_slices([u], snr_floor=0.0)
        for s, scale in zip(slices, scales):
            assert np.max(np.abs(s)) == pytest.approx(1.0, abs=1e-12)
            assert scale > 0

    def test_snr_floor_filters_weak_slices(self):
        rng = np.random.default_rng(2)
        u = random_complex(rng, (6, 6, 6, 1))
        u[0] *= 1e-6    # one very weak x-slice
        slices, _ = extract_training_slices([u], snr_floor=0.01)
        assert len(slices) < 18

    def test_over_filtering_raises(self):
        rng = np.random.default_rng(3)
        u = random_complex(rng, (6, 6, 6, 1))
        with pytest.raises(ValueError):
            extract_training_slices([u], snr_floor=2.0)

    def test_empty_input_raises(self):
        with pytest.raises(ValueError):
            extract_training_slices([], snr_floor=0.0)

    def test_make_training_slices_deterministic(self, tiny_basis, tiny_seq):
        a = make_training_slices(2, 8, tiny_seq, tiny_basis, 0.05, seed=9,
                                 max_slices=20)
        b = make_training_slices(2, 8, tiny_seq, tiny_basis, 0.05, seed=9,
                                 max_slices=20)
        assert len(a) == len(b) == 20
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_random_tissues_reproducible(self):
        a = random_training_tissues(np.random.default_rng(5))
        b = random_training_tissues(np.random.default_rng(5))
        assert a == b
