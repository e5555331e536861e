"""Fidelity metrics, the PCA baseline and the rate-distortion sweep."""

from .metrics import SpectralAngle, mse, psnr, read_pgm16, sa_error_map, spectral_angle, write_sa_map
from .pca import PcaModel, pca_codec, pca_fit
from .sweep import (
    CSV_COLUMNS,
    GridError,
    GridPoint,
    RdRecord,
    SweepSettings,
    evaluate_model,
    load_grid,
    parse_grid,
    rd_sweep,
    read_csv,
)
