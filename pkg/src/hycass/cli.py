"""Command-line entry point: ``hycass <command> ...`` or ``python3 -m hycass``.

Exit codes: 0 success, 1 user error (bad flags, files or data), 2 internal
error. Logs and the resolved configuration go to stderr; results go to
files and stdout. ``HYCASS_THREADS`` caps BLAS threads.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys
import traceback
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import codec
from .data import HsiCube, SplitSpec, SyntheticSpec, read_cube, split_dataset, synth_dataset, write_cube
from .errors import HycassError
from .evaluation import (
    SweepSettings,
    evaluate_model,
    load_grid,
    rd_sweep,
    sa_error_map,
    write_sa_map,
)
from .evaluation.sweep import eval_view
from .model import (
    TINY_CONFIG,
    HycassConfig,
    ModelParams,
    achieved_cr,
    forward,
    gamma_for_target_cr,
    gradient_check,
)
from .training import TrainConfig, Trainer

log = logging.getLogger("hycass")

CUBE_SUFFIX = ".hsc"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract reserves 2 for internal errors
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _echo(command: str, resolved: dict) -> None:
    print(f"config {command}: {json.dumps(resolved, sort_keys=True, default=str)}", file=sys.stderr)


def _file_hash(path: Path) -> str:
    return hashlib.blake2b(path.read_bytes(), digest_size=16).hexdigest()


def _load_dir(path: str) -> list[tuple[str, HsiCube]]:
    d = Path(path)
    if not d.is_dir():
        raise UsageError(f"data directory {d} does not exist")
    files = sorted(d.glob(f"*{CUBE_SUFFIX}"))
    if not files:
        raise UsageError(f"no {CUBE_SUFFIX} cubes in {d}")
    return [(f.stem, read_cube(f)) for f in files]


def load_model(path: str | Path) -> ModelParams:
    """Weights to use for inference: the best-validation copy if the checkpoint has one."""
    ck = ckpt_io.load_checkpoint(path)
    return ck.best if ck.best is not None else ck.params


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(a) -> int:
    spec = SyntheticSpec(a.count, a.h, a.w, a.c, a.smoothness, a.endmembers, a.seed, a.noise)
    _echo("synth", asdict(spec))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, cube in enumerate(synth_dataset(spec)):
        f = out / f"cube_{i:04d}{CUBE_SUFFIX}"
        write_cube(cube, f)
        entries.append({"file": f.name, "blake2b": _file_hash(f), "shape": list(cube.shape)})
    (out / MANIFEST).write_text(json.dumps({"spec": asdict(spec), "cubes": entries}, indent=2) + "\n")
    print(f"wrote {len(entries)} cubes to {out}")
    return 0


def _model_config(a, bands: int) -> HycassConfig:
    if (a.gamma is None) == (a.target_cr is None):
        raise UsageError("give exactly one of --gamma or --target-cr")
    gamma = a.gamma if a.gamma is not None else gamma_for_target_cr(bands, a.stages, a.target_cr)
    return HycassConfig(bands=bands, latent_channels=gamma, stages=a.stages, features=a.n,
                        window=a.window, heads=a.heads)


def _train_config(a) -> TrainConfig:
    return TrainConfig(epochs=a.epochs, learning_rate=a.lr, batch_size=a.bs, patch_size=a.patch,
                       seed=a.seed, checkpoint_every=a.checkpoint_every, steps_per_epoch=a.steps_per_epoch,
                       grad_clip=a.grad_clip, dtype=a.dtype)


def cmd_train(a) -> int:
    cubes = [c for _, c in _load_dir(a.data)]
    split = split_dataset(cubes, SplitSpec(seed=a.split_seed))
    out = Path(a.out)
    history_path = Path(a.history) if a.history else out.with_suffix(".csv")
    if a.resume:
        ck = ckpt_io.load_checkpoint(out)
        saved = TrainConfig.from_dict(ck.meta["train_config"])
        tc = TrainConfig.from_dict({**saved.to_dict(), "epochs": a.epochs})
        trainer = Trainer.from_checkpoint(ck, split.train, split.val, tc)
        cfg = ck.params.config
    else:
        cfg = _model_config(a, cubes[0].bands)
        tc = _train_config(a)
        trainer = Trainer(cfg, tc, split.train, split.val)
    cr = achieved_cr(cfg)
    _echo("train", {"model": cfg.to_dict(), "train": tc.to_dict(), "cr": round(cr.cr, 4),
                    "cr_spec": round(cr.cr_spec, 4), "cr_spat": cr.cr_spat,
                    "split": [len(split.train), len(split.val), len(split.test)],
                    "steps_per_epoch": trainer.steps_per_epoch})
    log.info("resolved gamma=%d (S=%d, CR=%.4f)", cfg.latent_channels, cfg.stages, cr.cr)
    log.info("initial hash %s", trainer.params.content_hash.hex())
    history = trainer.fit(out)
    history.write_csv(history_path)
    log.info("final hash %s", trainer.params.content_hash.hex())
    best = f"{trainer.best_psnr:.3f}" if history.records else "n/a"
    print(f"epochs={trainer.epoch} best_val_psnr={best} checkpoint={out} history={history_path}")
    return 0


def cmd_compress(a) -> int:
    params = load_model(a.model)
    cube = read_cube(a.input)
    _echo("compress", {"model": params.config.to_dict(), "payload": a.payload, "input_shape": list(cube.shape),
                       "bit_depth": cube.bit_depth})
    stream = codec.compress(cube, params, payload=a.payload)
    codec.write_stream(stream, a.out)
    print(f"latent={stream.sigma}x{stream.omega}x{stream.gamma} "
          f"cr_measured={codec.measured_cr(stream, cube):.4f} cr_element={codec.element_cr(stream):.4f} "
          f"header_bytes={stream.header_bytes} payload_bytes={len(stream.payload)}")
    return 0


def cmd_decompress(a) -> int:
    params = load_model(a.model)
    stream = codec.read_stream(a.input)
    _echo("decompress", {"model": params.config.to_dict(), "unit": a.unit,
                         "output_shape": [stream.height, stream.width, stream.bands]})
    cube = codec.decompress(stream, params, unit=a.unit)
    if not a.unit:
        cube = codec.to_sensor_words(cube)
    write_cube(cube, a.out)
    print(f"decoded {cube.height}x{cube.width}x{cube.bands} to {a.out}")
    return 0


def cmd_eval(a) -> int:
    params = load_model(a.model)
    named = _load_dir(a.data)
    _echo("eval", {"model": params.config.to_dict(), "domain": a.domain, "cubes": len(named)})
    maps = Path(a.maps) if a.maps else None
    if maps:
        maps.mkdir(parents=True, exist_ok=True)
    print(f"{'cube':<24} {'psnr_db':>9} {'sa_deg':>9}")
    ps, ss = [], []
    for name, cube in named:
        p, s = evaluate_model(params, [cube], a.domain)
        ps.append(p)
        ss.append(s)
        print(f"{name:<24} {p:9.3f} {s:9.4f}")
        if maps:
            unit, _ = eval_view(params.config, cube)
            rec = forward(params, unit.values[None]).reconstruction[0]
            write_sa_map(sa_error_map(unit.values, rec), maps / f"{name}.pgm")
    print(f"{'mean':<24} {np.mean(ps):9.3f} {np.mean(ss):9.4f}")
    return 0


def cmd_sweep(a) -> int:
    grid = load_grid(a.grid)
    settings = SweepSettings(dataset_id=a.dataset_id, split=SplitSpec(seed=a.split_seed), cr_only=a.cr_only,
                             domain=a.domain, model={"features": a.n, "window": a.window, "heads": a.heads})
    if a.cr_only and a.bands:
        cubes, bands = [], a.bands
    else:
        cubes, bands = [c for _, c in _load_dir(a.data)], None
    tc = None if a.cr_only else _train_config(a)
    _echo("sweep", {"grid": [asdict(p) for p in grid], "settings": asdict(settings),
                    "train": tc.to_dict() if tc else None, "jobs": a.jobs})
    records = rd_sweep(cubes, grid, tc, settings=settings, csv_path=a.out, jobs=a.jobs, bands=bands)
    print(f"{'S':>2} {'gamma':>6} {'cr':>10} {'cr_spec':>10} {'cr_spat':>8} {'psnr_db':>8} {'sa_deg':>8}")
    for r in records:
        print(f"{r.stages:>2} {r.gamma:>6} {r.cr:10.4f} {r.cr_spec:10.4f} {r.cr_spat:8.0f} "
              f"{r.psnr_db:8.3f} {r.sa_deg:8.4f}" + ("  ERROR" if not r.ok else ""))
    return 1 if any(not r.ok for r in records) and a.strict else 0


def cmd_gradcheck(a) -> int:
    conf = json.loads(Path(a.config).read_text()) if a.config else {}
    size = int(conf.pop("size", 16))
    seed = int(conf.pop("seed", a.seed))
    tolerance = float(conf.pop("tolerance", 1e-4))
    cfg = HycassConfig.from_dict({**TINY_CONFIG.to_dict(), **conf})
    _echo("gradcheck", {"model": cfg.to_dict(), "size": size, "seed": seed, "tolerance": tolerance,
                        "break_gradient": a.break_gradient})
    report = gradient_check(cfg, size, seed, tolerance=tolerance, break_gradient=a.break_gradient)
    print(report.format())
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# Parser


def _add_model_flags(p, need_gamma: bool = True) -> None:
    p.add_argument("--stages", "-S", type=int, default=0)
    if need_gamma:
        p.add_argument("--gamma", type=int)
        p.add_argument("--target-cr", type=float)
    p.add_argument("--n", type=int, default=128, help="feature channels N")
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--heads", type=int, default=8)


def _add_train_flags(p) -> None:
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--bs", type=int, default=16)
    p.add_argument("--patch", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps-per-epoch", type=int)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--grad-clip", type=float)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--split-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hycass", description="Adjustable spatio-spectral hyperspectral compression.")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write synthetic cubes and a manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--h", type=int, default=32)
    p.add_argument("--w", type=int, default=32)
    p.add_argument("--c", type=int, default=16)
    p.add_argument("--endmembers", type=int, default=3)
    p.add_argument("--smoothness", type=float, default=4.0)
    p.add_argument("--noise", type=float, default=5e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a directory of cubes")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="CSV history path (default: checkpoint path with .csv)")
    p.add_argument("--resume", action="store_true", help="continue the checkpoint at --out up to --epochs")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("compress", cmd_compress, "cube file to HYL1 stream"),
                                 ("decompress", cmd_decompress, "HYL1 stream to cube file")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--out", required=True)
        if name == "compress":
            p.add_argument("--payload", choices=("f32", "u16"), default="f32")
        else:
            p.add_argument("--unit", action="store_true", help="write the unit-range reconstruction")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="PSNR/SA table and SA maps")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--maps", help="directory for per-cube SA maps (PGM)")
    p.add_argument("--domain", choices=("unit", "raw"), default="unit")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="rate-distortion sweep over a grid file")
    p.add_argument("--data")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True, help="CSV path (existing rows are kept and skipped)")
    p.add_argument("--dataset-id", default="synthetic")
    p.add_argument("--cr-only", action="store_true", help="resolve CRs without training")
    p.add_argument("--bands", type=int, help="band count for --cr-only without --data")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--domain", choices=("unit", "raw"), default="unit")
    p.add_argument("--strict", action="store_true", help="exit 1 if any grid point failed")
    _add_model_flags(p, need_gamma=False)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--config", help="JSON with model fields plus optional size/seed/tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--break-gradient", action="store_true", help="corrupt one gradient (must fail)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _thread_limit():
    n = os.environ.get("HYCASS_THREADS")
    if not n:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("HYCASS_THREADS set but threadpoolctl is not installed; ignoring")
        return contextlib.nullcontext()
    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        with _thread_limit():
            return args.func(args)
    except (UsageError, HycassError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
