"""Isotropic volume reconstruction from rotated thick-slice acquisitions.

A continuous neural field (multi-resolution hash encoding plus a small
sine-activated MLP) is fit directly to the acquired thick-slice views
through the acquisition operator; classical tricubic fusion and
least-squares SRR are included as baselines, together with a synthetic
acquisition simulator, rigid motion estimation, and evaluation metrics.
"""

from .baselines import LsSrrConfig, LsSrrResult, ls_srr, tricubic_fuse
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    NiftiParseError,
    RegistrationError,
    SolverError,
    TrainingDivergedError,
    UndefinedMetricError,
)
from .field import FieldModel
from .forward_model import (
    AcquisitionSpec,
    add_noise,
    apply_adjoint,
    apply_forward,
    simulate_views,
)
from .geometry import RigidTransform, ViewGeometry, min_rotations, view_affine
from .hashgrid import (
    HashGridConfig,
    HashGridParams,
    encode,
    encode_backward,
    hash_index,
    level_resolutions,
)
from .metrics import RoiSpec, laplacian_kernel, psnr, relative_error, sharpness
from .mlp import MlpConfig, MlpParams, init_params, mlp_backward, mlp_forward
from .nifti import read_nifti, write_nifti
from .phantom import make_phantom
from .registration import apply_motion_correction, register_rigid
from .trainer import (
    AdamState,
    ReconJob,
    TrainConfig,
    adam_step,
    recon_loss,
    render_volume,
    train,
    tv_loss,
)
from .volume import GridSpec, Volume3D, resample_trilinear, voxel_to_world

__version__ = "0.1.0"
