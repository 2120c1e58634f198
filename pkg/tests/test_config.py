import numpy as np
import pytest

from ssmuse.config import (METHODS, ExperimentConfig, desk_sequence_params,
                           load_config)
from ssmuse.errors import ConfigError


class TestDefaults:
    def test_defaults_are_consistent(self):
        cfg = ExperimentConfig()
        assert cfg.method in METHODS
        assert cfg.rank <= cfg.sequence.n_echoes_per_block // 4
        assert max(cfg.eval_frames) < cfg.sequence.n_echoes_per_block
        assert cfg.accel_spokes_per_frame <= cfg.spokes_per_frame

    def test_t1_grid(self):
        cfg = ExperimentConfig()
        grid = cfg.t1_grid()
        assert grid.shape == (cfg.t1_grid_points,)
        assert grid[0] == pytest.approx(cfg.t1_grid_min)
        assert grid[-1] == pytest.approx(cfg.t1_grid_max)
        assert np.all(np.diff(grid) > 0)

    def test_desk_sequence_keeps_flip_structure(self):
        seq = desk_sequence_params(96)
        angles = seq.flip_angles()
        switch = int(round(96 * 304 / 385))
        assert np.all(angles[:switch] == np.deg2rad(4.0))
        assert np.all(angles[switch:] == np.deg2rad(8.0))

    def test_seed_offset_shifts_every_seed(self):
        cfg = ExperimentConfig()
        shifted = cfg.with_seed_offset(100)
        assert shifted.trajectory_seed == cfg.trajectory_seed + 100
        assert shifted.noise_seed == cfg.noise_seed + 100
        assert shifted.train_seed == cfg.train_seed + 100
        assert shifted.init_seed == cfg.init_seed + 100
        assert shifted.phantom_size == cfg.phantom_size

    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(method="gridding")
        with pytest.raises(ConfigError):
            ExperimentConfig(eval_frames=(0, 200))
        with pytest.raises(ConfigError):
            ExperimentConfig(spokes_per_frame=2, accel_spokes_per_frame=3)
        with pytest.raises(ConfigError):
            ExperimentConfig(rank=40)


class TestIniLoader:
    def test_none_gives_defaults(self):
        assert load_config(None) == ExperimentConfig()

    def test_full_file(self, tmp_path):
        ini = tmp_path / "exp.ini"
        ini.write_text("""
[phantom]
size = 16
tissues = 0.8 0.9; 1.4 1.0
[sequence]
n_echoes = 32
tr = 5e-3
[basis]
t1_min = 0.2
t1_max = 4.0
n_t1 = 50
rank = 3
[trajectory]
spokes_per_frame = 6
accel_spokes_per_frame = 3
readout_len = 32
seed = 21
[acquisition]
noise_sigma = 0.02   # per-component noise level
noise_seed = 13
n_coils = 3
[recon]
method = wavelet
lam = 1e-4
beta_schedule = 0:1e-4,10:4e-4
outer_iters = 12
cg_max_iters = 20
[train]
epochs = 5
learning_rate = 1e-3
channels = 2,8,2
kernel_size = 3
[eval]
frames = 0,16,31
""")
        cfg = load_config(ini)
        assert cfg.phantom_size == 16
        assert [t.t1 for t in cfg.tissues] == [0.8, 1.4]
        assert cfg.sequence.n_echoes_per_block == 32
        assert cfg.sequence.tr == 5e-3
        assert cfg.t1_grid_points == 50
        assert cfg.rank == 3
        assert cfg.spokes_per_frame == 6
        assert cfg.accel_spokes_per_frame == 3
        assert cfg.trajectory_seed == 21
        assert cfg.noise_sigma == 0.02
        assert cfg.n_coils == 3
        assert cfg.method == "wavelet"
        assert cfg.recon.lam == 1e-4
        assert cfg.recon.beta_schedule == ((0, 1e-4), (10, 4e-4))
        assert cfg.recon.outer_iters == 12
        assert cfg.train.epochs == 5
        assert cfg.arch.layers == ((2, 8, 3), (8, 2, 3))
        assert cfg.eval_frames == (0, 16, 31)

    def test_tissue_full_geometry_form(self, tmp_path):
        ini = tmp_path / "t.ini"
        ini.write_text("[phantom]\n"
                       "tissues = 1.2 0.7 0.1 -0.1 0.0 0.3 0.4 0.5\n")
        cfg = load_config(ini)
        tissue = cfg.tissues[0]
        assert tissue.t1 == 1.2
        assert tissue.center == (0.1, -0.1, 0.0)
        assert tissue.semiaxes == (0.3, 0.4, 0.5)

    def test_shorter_echo_train_rescales_eval_frames(self, tmp_path):
        ini = tmp_path / "e.ini"
        ini.write_text("[sequence]\nn_echoes = 20\n[basis]\nrank = 4\n")
        cfg = load_config(ini)
        assert cfg.eval_frames == (1, 10, 19)

    def test_unknown_section_rejected(self, tmp_path):
        ini = tmp_path / "u.ini"
        ini.write_text("[reconstruction]\nlam = 1\n")
        with pytest.raises(ConfigError):
            load_config(ini)

    def test_unknown_key_rejected(self, tmp_path):
        ini = tmp_path / "k.ini"
        ini.write_text("[recon]\nlambda = 1\n")
        with pytest.raises(ConfigError):
            load_config(ini)

    def test_bad_value_rejected(self, tmp_path):
        ini = tmp_path / "b.ini"
        ini.write_text("[phantom]\nsize = big\n")
        with pytest.raises(ConfigError):
            load_config(ini)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini")

    def test_inconsistent_values_rejected(self, tmp_path):
        ini = tmp_path / "i.ini"
        ini.write_text("[basis]\nrank = 40\n")
        with pytest.raises(ConfigError):
            load_config(ini)
