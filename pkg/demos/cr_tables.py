"""
Compression ratios of the (S, Gamma) grids
==========================================

Every grid point fixes the number of spatial stages S and the latent band
count Gamma. The spectral part of the ratio is C / Gamma, the spatial part
4**S, and their product is the total ratio.
"""

from pathlib import Path

from hycass.evaluation import load_grid
from hycass.model import HycassConfig, achieved_cr, gamma_for_target_cr, latent_shape

GRIDS = Path(__file__).resolve().parent.parent / "grids"

for name, bands, size in (("hyspecnet_202.grid", 202, 128), ("mlretset_369.grid", 369, 96)):
    print(f"\n{name}: C={bands}, {size}x{size} patches")
    print(f"{'S':>2} {'gamma':>6} {'CR':>9} {'CR_spec':>10} {'CR_spat':>8}  latent")
    for point in load_grid(GRIDS / name):
        cfg = HycassConfig(bands=bands, latent_channels=point.resolve(bands), stages=point.stages)
        cr = achieved_cr(cfg)
        sig, om, g = latent_shape(cfg, size, size)
        print(f"{point.stages:>2} {g:>6} {cr.cr:9.4f} {cr.cr_spec:10.4f} {cr.cr_spat:8.0f}  {sig}x{om}x{g}")

# Going the other way: the Gamma that lands closest to a target ratio.
for S in range(4):
    print(f"target CR 16 at S={S}: gamma={gamma_for_target_cr(202, S, 16)}")
