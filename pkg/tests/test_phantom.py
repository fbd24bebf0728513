"""Spiral cube phantom and dataset assembly."""

import numpy as np
import pytest

from ineat.geometry import (ConeBeamGeometry, TrajectoryConfig,
                            perturbed_angles, uniform_angles)
from ineat.phantom import (DatasetManifest, SpiralPhantomConfig, make_dataset,
                           spiral_cube_phantom)
from ineat.projector import forward_project_set


class TestSpiralPhantom:
    def test_deterministic(self):
        a = spiral_cube_phantom(SpiralPhantomConfig())
        b = spiral_cube_phantom(SpiralPhantomConfig())
        assert np.array_equal(a.data, b.data)

    def test_values_are_zero_or_density(self):
        vol = spiral_cube_phantom(SpiralPhantomConfig(density=2.5))
        vals = np.unique(vol.data)
        assert set(vals.tolist()) <= {0.0, 2.5}
        assert vol.data.max() == 2.5

    def test_zero_cubes_gives_empty_volume(self):
        vol = spiral_cube_phantom(SpiralPhantomConfig(n_cubes=0))
        assert np.all(vol.data == 0.0)

    def test_material_stays_inside_spiral_envelope(self):
        cfg = SpiralPhantomConfig()
        vol = spiral_cube_phantom(cfg)
        res = cfg.resolution
        ax = (np.arange(res) + 0.5) / res - 0.5
        ix, iy, iz = np.nonzero(vol.data)
        r = np.hypot(ax[ix], ax[iy])
        half_c = 0.5 * cfg.cube_edge
        # half-edge 0.5 scales the radius fractions; cube halfwidth widens
        # the band, sqrt(2) covering the in-plane corner reach
        assert r.max() <= cfg.r_end * 0.5 + half_c * np.sqrt(2.0) + 1e-9
        assert r.min() >= cfg.r_start * 0.5 - half_c * np.sqrt(2.0) - 1e-9
        assert np.abs(ax[iz]).max() <= 0.4 + half_c + 1e-9

    def test_half_turn_changes_the_shape(self):
        vol = spiral_cube_phantom(SpiralPhantomConfig())
        rot = np.rot90(vol.data, k=2, axes=(0, 1))
        assert np.any(rot != vol.data)

    def test_more_cubes_add_material(self):
        few = spiral_cube_phantom(SpiralPhantomConfig(n_cubes=3))
        many = spiral_cube_phantom(SpiralPhantomConfig(n_cubes=12))
        assert np.count_nonzero(many.data) > np.count_nonzero(few.data)

    def test_oversized_cube_rejected(self):
        with pytest.raises(ValueError):
            spiral_cube_phantom(SpiralPhantomConfig(r_end=0.95, cube_edge=0.3))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SpiralPhantomConfig(n_cubes=-1)
        with pytest.raises(ValueError):
            SpiralPhantomConfig(cube_edge=0.0)
        with pytest.raises(ValueError):
            SpiralPhantomConfig(r_start=0.5, r_end=0.4)
        with pytest.raises(ValueError):
            SpiralPhantomConfig(density=0.0)
        with pytest.raises(ValueError):
            SpiralPhantomConfig(resolution=4)


class TestMakeDataset:
    def setup_method(self):
        self.geom = ConeBeamGeometry(det_nu=32, det_nv=32)
        self.vol = spiral_cube_phantom(SpiralPhantomConfig(resolution=32))
        self.step = 1.0 / 32.0

    def test_projections_follow_true_angles(self):
        true = perturbed_angles(TrajectoryConfig(n_views=12, d_deg=30.0,
                                                 delta_max=1.5, seed=3))
        projs, manifest = make_dataset(self.vol, self.geom, true, self.step)
        direct = forward_project_set(self.vol, self.geom, true, self.step)
        for a, b in zip(projs.images, direct.images):
            assert np.array_equal(a.data, b.data)
        # the assumption handed to reconstruction stays uniform
        assert np.allclose(manifest.angles_assumed.angles_deg,
                           np.arange(12) * 30.0)
        assert np.array_equal(manifest.angles_true.angles_deg,
                              true.angles_deg)

    def test_assumed_and_true_lengths_match(self):
        true = uniform_angles(10, 36.0)
        _, manifest = make_dataset(self.vol, self.geom, true, self.step)
        assert len(manifest.angles_assumed) == len(manifest.angles_true) == 10

    def test_manifest_validation(self):
        with pytest.raises(ValueError):
            DatasetManifest(geometry=self.geom,
                            angles_assumed=uniform_angles(4, 90.0),
                            angles_true=uniform_angles(5, 72.0))
        with pytest.raises(ValueError):
            DatasetManifest(geometry=self.geom,
                            angles_assumed=uniform_angles(4, 90.0),
                            value_convention="transmission")
