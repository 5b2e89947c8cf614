"""Spherical-sweep depth estimation and Gaussian splatting for panoramas."""

from .sphere_geom import (
    ErpGrid,
    Pose,
    SphericalCoord,
    cartesian_to_spherical,
    compose,
    invert,
    pixel_to_spherical,
    relative,
    spherical_to_cartesian,
    spherical_to_pixel,
    transform_point,
)
from .pano_image import (
    CubeMap,
    DepthMap,
    ErpImage,
    cubemap_to_erp,
    depth_metrics,
    erp_to_cubemap,
    psnr,
    read_png,
    read_sdpt,
    sample_bilinear,
    ssim,
    write_png,
    write_sdpt,
)
from .features import FeatureMap, extract_cp_features, extract_erp_features, fuse_biprojection
from .sweep import (
    CostVolume,
    DepthCandidates,
    DepthResult,
    SweepConfig,
    build_cost_volume,
    estimate_depth,
    make_candidates,
    refine_cost_volume,
    softmax_depth,
)
from .gaussians import (
    GaussianConfig,
    Splat,
    SplatSet,
    decode_splats,
    lift_centers,
    merge,
    read_splt,
    write_splt,
)
from .renderer import (
    PinholeCamera,
    Projected2DGaussian,
    RenderResult,
    project_gaussian,
    rasterize,
    rasterize_reference,
    render_panorama,
)
from .synth import SyntheticScene, make_test_pair, render_gt
from .dataset_io import SceneManifest, load_scene, save_scene, select_eval_tuples

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
