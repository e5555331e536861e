"""
PCA against a spectral-only autoencoder
=======================================

At S=0 the model acts on each pixel's spectrum independently, which makes
per-pixel PCA its natural baseline at the same Gamma.
"""

import numpy as np

from hycass.data import SyntheticSpec, min_max_normalize, synth_dataset
from hycass.evaluation import evaluate_model, pca_codec, pca_fit, psnr, spectral_angle
from hycass.model import HycassConfig
from hycass.training import TrainConfig, train

cube = synth_dataset(SyntheticSpec(height=32, width=32, bands=24, endmembers=5, seed=4))[0]
unit, _ = min_max_normalize(cube)
x = unit.values

print(f"{'gamma':>5} {'CR':>6} {'PCA dB':>8} {'AE dB':>8} {'PCA SA':>8} {'AE SA':>8}")
for gamma in (12, 6, 3, 2):
    rec, cr = pca_codec(x, pca_fit(x, gamma))
    cfg = HycassConfig(bands=24, latent_channels=gamma, stages=0, features=32)
    tc = TrainConfig(epochs=10, learning_rate=3e-3, batch_size=4, patch_size=32, steps_per_epoch=50)
    params, _ = train(cfg, tc, [cube])
    ae_psnr, ae_sa = evaluate_model(params, [cube])
    print(f"{gamma:>5} {cr:6.1f} {psnr(x, rec):8.2f} {ae_psnr:8.2f} "
          f"{spectral_angle(x, rec).mean_deg:8.3f} {ae_sa:8.3f}")

# The synthetic cube has 5 endmembers, so PCA is near lossless from Gamma=5 up.
print("singular values:", np.round(np.linalg.svd(x.reshape(-1, 24) - x.reshape(-1, 24).mean(0),
                                             compute_uv=False)[:7], 2))
