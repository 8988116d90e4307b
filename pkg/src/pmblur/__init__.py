"""Rotational camera-shake blur: synthesis, restoration, and blind estimation.

The blur model expresses a blurry image as the time-average of homography
warps of the latent sharp image, with each homography K*R*K^-1 generated by
a small camera rotation (pitch, yaw, roll).  The package provides:

- ``image``: float image buffers, bilinear sampling, PNG I/O
- ``geometry``: intrinsics, rotations, homographies, Jacobian determinants
- ``trajectory``: pose sequences, tremor synthesis, ordering, EMD distance
- ``blur``: the blur operator, its adjoint, and a sparse-matrix oracle
- ``restoration``: linearized-ADMM deblurring with a TV prior, Richardson-Lucy
- ``refine``: blind trajectory refinement by reblur-loss descent
- ``evaluation``: PSNR/SSIM, synthetic pair generation, video rendering
"""

from pmblur.image import Boundary, load_png, sample_bilinear, save_png, validate_image
from pmblur.geometry import (
    CameraIntrinsics,
    Pose,
    Pose6D,
    SingularProjectionError,
    apply_homography,
    homography_from_pose,
    invert_homography,
    jacobian_det,
    reduce_pose_6d,
    rotation_matrix,
)
from pmblur.trajectory import (
    PixelParam,
    Trajectory,
    TremorConfig,
    emd_distance,
    from_pixel_params,
    generate_tremor,
    load_trajectory,
    make_grid,
    order_heuristic,
    save_trajectory,
)
from pmblur.blur import (
    AdjointMode,
    BlurOperator,
    OffsetField,
    SparseBlurMatrix,
    adjoint,
    blur_efficient,
    blur_naive,
    build_sparse_oracle,
    kernel_field,
    load_offsets,
    offsets_from_trajectory,
    saturate,
    save_offsets,
)
from pmblur.restoration import (
    AdmmConfig,
    DivergenceError,
    admm_deblur,
    richardson_lucy,
    tv_denoise,
)
from pmblur.refine import (
    RefineConfig,
    RefineReport,
    blind_deblur,
    reblur_loss,
    refine_trajectory,
    search_admm_config,
)
from pmblur.evaluation import PairSample, psnr, render_video, ssim, synth_pair

__version__ = "0.1.0"

__all__ = [
    "AdjointMode",
    "AdmmConfig",
    "BlurOperator",
    "Boundary",
    "CameraIntrinsics",
    "DivergenceError",
    "OffsetField",
    "PairSample",
    "PixelParam",
    "Pose",
    "Pose6D",
    "RefineConfig",
    "RefineReport",
    "SingularProjectionError",
    "SparseBlurMatrix",
    "Trajectory",
    "TremorConfig",
    "adjoint",
    "admm_deblur",
    "apply_homography",
    "blind_deblur",
    "blur_efficient",
    "blur_naive",
    "build_sparse_oracle",
    "emd_distance",
    "from_pixel_params",
    "generate_tremor",
    "homography_from_pose",
    "invert_homography",
    "jacobian_det",
    "kernel_field",
    "load_offsets",
    "load_png",
    "load_trajectory",
    "make_grid",
    "offsets_from_trajectory",
    "order_heuristic",
    "psnr",
    "reblur_loss",
    "reduce_pose_6d",
    "refine_trajectory",
    "search_admm_config",
    "render_video",
    "richardson_lucy",
    "rotation_matrix",
    "sample_bilinear",
    "saturate",
    "save_offsets",
    "save_png",
    "save_trajectory",
    "ssim",
    "synth_pair",
    "tv_denoise",
    "validate_image",
]
