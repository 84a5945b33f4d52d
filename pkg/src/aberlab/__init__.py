"""Plane-wave ultrasound simulation, aberration and correction toolkit."""

from .aberration import (
    AberrationProfile,
    ProfileSpec,
    generate_profile,
    measure_correlation_length,
    measure_strength,
)
from .beamform import RfImage, das, das_channelwise
from .beamsum import BeamsumConfig, correct_beamsum, estimate_profile_beamsum
from .bmode import (
    BModeImage,
    blend_axial_sections,
    downsample_lateral,
    envelope,
    log_compress,
    split_axial_sections,
    standardized_bmode,
    yeo_johnson,
    yeo_johnson_fit,
)
from .dataset import DatasetManifest, ExperimentPlan, build_dataset, run_pipeline
from .errors import NumericalError, ValidationError
from .fxpf import FxpfConfig, correct_fxpf, fxpf_filter_stack
from .losses import LossEval, adaptive_mixed_loss, alpha_schedule, bmode_mse_loss, mse_loss
from .metrics import RegionSpec, contrast, fwhm_lateral, gcnr, speckle_snr
from .phantom import (
    EchoRegionSpec,
    Phantom,
    apply_region,
    contrast_test_phantom,
    resolution_test_phantom,
    uniform_speckle,
)
from .probe import (
    ImagingGrid,
    Pulse,
    TransducerConfig,
    aperture_elements,
    default_l11_5v,
    default_pulse,
    make_grid,
    two_way_delay,
)
from .toytrain import Adam, BiasImageModel, SmallConvNet, TrainSpec, train_noise2noise
from .wavesim import (
    ChannelData,
    FsaData,
    SimOptions,
    apply_rx_aberration,
    simulate_fsa,
    synthesize_planewave,
)

__version__ = "0.1.0"
