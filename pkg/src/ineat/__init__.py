"""Cone-beam tomography with projection-matching angle correction.

Reconstructs a density volume from 2D projections by gradient descent on
a ray-marched forward model, and recovers uncertain per-view gantry
angles by matching each input projection against a dense bank of
reprojections of the coarse volume.
"""

from .field import (DenseVolume, FieldGradient, OctreeVolume,
                    cross_block_jump, gradient_for, init_octree,
                    octree_from_dense, refine, sample, scatter_gradient,
                    to_dense)
from .geometry import (AngleSequence, ConeBeamGeometry, Ray, TrajectoryConfig,
                       accel_angles, combined_angles, make_trajectory,
                       perturbed_angles, ray_for_pixel, rays_for_view,
                       uniform_angles)
from .io import (FormatError, load_projection_set, read_image, read_manifest,
                 read_volume, write_image, write_manifest, write_volume)
from .metrics import (AngleErrorReport, angle_error, circular_mean_deg,
                      mip_triview, psnr, sine_curve_table, wrap_degrees)
from .phantom import DatasetManifest, SpiralPhantomConfig, make_dataset, \
    spiral_cube_phantom
from .posecorr import (IneatResult, MatchReport, PoseCorrectionConfig,
                       SsimConstants, bank_angles, dense_reproject, ineat,
                       match_angles, ssim, ssim_matrix)
from .projector import (ProjectionImage, ProjectionSet, backproject_gradient,
                        forward_project, forward_project_set)
from .recon import (DivergenceError, ReconConfig, ReconReport, data_loss,
                    reconstruct, refine_pass, tv_penalty)

__version__ = "0.1.0"

__all__ = [
    "AngleErrorReport", "AngleSequence", "ConeBeamGeometry",
    "DatasetManifest", "DenseVolume", "DivergenceError", "FieldGradient",
    "FormatError", "IneatResult", "MatchReport", "OctreeVolume",
    "PoseCorrectionConfig", "ProjectionImage", "ProjectionSet", "Ray",
    "ReconConfig", "ReconReport", "SpiralPhantomConfig", "SsimConstants",
    "TrajectoryConfig", "accel_angles", "angle_error", "backproject_gradient",
    "bank_angles", "circular_mean_deg", "combined_angles", "cross_block_jump",
    "data_loss", "dense_reproject", "forward_project", "forward_project_set",
    "gradient_for", "ineat", "init_octree", "load_projection_set",
    "make_dataset", "make_trajectory", "match_angles", "mip_triview",
    "octree_from_dense", "perturbed_angles", "psnr", "ray_for_pixel",
    "rays_for_view", "read_image", "read_manifest", "read_volume",
    "reconstruct", "refine", "refine_pass", "sample", "scatter_gradient",
    "sine_curve_table", "spiral_cube_phantom", "ssim", "ssim_matrix",
    "to_dense", "tv_penalty", "uniform_angles", "wrap_degrees",
    "write_image", "write_manifest", "write_volume",
]
