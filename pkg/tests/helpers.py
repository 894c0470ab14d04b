"""Shared builders for trainer/baseline/acceptance tests."""

import numpy as np

from rotsrr.field import FieldModel
from rotsrr.forward_model import AcquisitionSpec, simulate_views
from rotsrr.geometry import ViewGeometry
from rotsrr.hashgrid import HashGridConfig
from rotsrr.mlp import MlpConfig, MlpParams
from rotsrr.phantom import make_phantom
from rotsrr.trainer import ReconJob, TrainConfig
from rotsrr.volume import GridSpec


def protocol_views(n_views, angle_step, slice_factor, motions=None):
    motions = motions or {}
    return tuple(
        ViewGeometry(angle_deg=angle_step * i, slice_factor=slice_factor,
                     motion=motions.get(i))
        for i in range(n_views)
    )


def simulate_phantom(n=24, n_views=4, slice_factor=2, angle_step=45.0,
                     noise_snr=None, seed=0, motions=None):
    hr = make_phantom(n)
    geoms = protocol_views(n_views, angle_step, slice_factor, motions=motions)
    spec = AcquisitionSpec(views=geoms, in_plane_spacing=hr.spacing[0],
                           slice_factor=slice_factor, noise_snr=noise_snr, seed=seed)
    views = simulate_views(hr, spec)
    return hr, geoms, spec, views


def small_hash_config(**kw):
    defaults = dict(levels=4, table_size=2**12, features_per_entry=2, n_min=4, n_max=32)
    defaults.update(kw)
    return HashGridConfig(**defaults)


def tiny_job(n=16, n_views=3, slice_factor=2, angle_step=60.0, iterations=40,
             batch_size=256, seed=0, precision="f64", **train_kw):
    hr, geoms, spec, views = simulate_phantom(n=n, n_views=n_views,
                                              slice_factor=slice_factor,
                                              angle_step=angle_step, seed=seed)
    train_cfg = TrainConfig(iterations=iterations, batch_size=batch_size,
                            seed=seed, precision=precision, **train_kw)
    job = ReconJob(
        views=views,
        geometries=geoms,
        slice_factor=slice_factor,
        output_grid=GridSpec((n, n, n), hr.spacing[0]),
        hash_config=small_hash_config(n_max=n),
        train_config=train_cfg,
    )
    return hr, job


def constant_field(bounds, value, hash_config=None, dtype=np.float64):
    """A field that outputs ``value`` everywhere: zero tables, zero weights,
    output bias set to the value."""
    cfg = hash_config or small_hash_config()
    field = FieldModel.create(cfg, bounds, seed=0, dtype=dtype)
    field.hash_params.tables[:] = 0.0
    for w in field.mlp_params.weights:
        w[:] = 0.0
    for b in field.mlp_params.biases:
        b[:] = 0.0
    field.mlp_params.biases[-1][:] = value
    return field


def linear_field(bounds, world_slopes, offset=0.0, hash_config=None):
    """A field affine in world coordinates: f(p) = offset + slopes . p.

    Built from a linear-activation MLP reading only the aux channels.
    """
    cfg = hash_config or small_hash_config()
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    mlp_cfg = MlpConfig(input_dim=cfg.output_dim, hidden_width=3, hidden_layers=1,
                        activation="linear")
    field = FieldModel.create(cfg, bounds, seed=0, dtype=np.float64, mlp_config=mlp_cfg)
    field.hash_params.tables[:] = 0.0
    w0 = np.zeros((3, cfg.output_dim))
    w0[0, -3], w0[1, -2], w0[2, -1] = 1.0, 1.0, 1.0  # pick out the aux coords
    field.mlp_params.weights[0] = w0
    field.mlp_params.biases[0] = np.zeros(3)
    slopes = np.asarray(world_slopes, dtype=np.float64) * (hi - lo)  # chain rule for x01
    field.mlp_params.weights[1] = slopes.reshape(1, 3)
    field.mlp_params.biases[1] = np.array([offset + float(np.dot(world_slopes, lo))])
    return field
