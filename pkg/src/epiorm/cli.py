"""Command-line entry point exposing every pipeline stage.

Exit codes: 0 success, 1 validation error (bad arguments or inputs),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from io import BytesIO
from dataclasses import replace

import numpy as np

from . import io
from .config import TrainConfig, dump_config, fingerprint, load_config
from .errors import EpiOrmError, TrainingError
from .lightfield import horizontal_epi, interior_mask, vertical_epi
from .metrics import error_map, evaluate
from .network import NetConfig, NetworkParams
from .numerics.checkpoint import atomic_write_bytes, load_checkpoint

log = logging.getLogger("epiorm")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(EpiOrmError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _write_meta(path, **items):
    text = "".join(f"{k}: {v}\n" for k, v in items.items())
    atomic_write_bytes(path + ".meta", text.encode("utf-8"))


def _resolve_config(args):
    if getattr(args, "config", None):
        train, net = load_config(args.config)
    else:
        train, net = TrainConfig(), NetConfig()
    if args.seed is not None:
        train = replace(train, seed=args.seed)
    if args.precision is not None:
        train = replace(train, precision=args.precision)
    return train, net


def cmd_synth(args):
    from .synth import gen_lightfield, random_scene, two_plane_scene

    if args.scene == "two-plane":
        scene = two_plane_scene(args.seed or 0, args.size, args.views)
    else:
        scene = random_scene(args.seed or 0, args.size, args.views)
    lf, dmap = gen_lightfield(scene)
    written = io.write_dataset(args.out, lf, dmap,
                               params=io.default_params(lf.U, lf.V, lf.X, lf.Y, (-2.0, 2.0)),
                               meta={"generator": f"synth:{args.scene}:{args.seed or 0}"})
    print(f"wrote {written.U}x{written.V} views of {written.X}x{written.Y} to {args.out}")
    return EXIT_OK


def cmd_slice(args):
    lf, _, _ = io.load_dataset(args.data)
    epi = horizontal_epi(lf, args.index) if args.axis == "h" else vertical_epi(lf, args.index)
    if args.out.endswith(".pfm"):
        io.write_pfm(epi.data if epi.C == 3 else epi.data[..., 0], args.out)
    else:
        io.write_png(epi.data, args.out)
    print(f"{epi.orientation} EPI {epi.A}x{epi.S}x{epi.C} -> {args.out}")
    return EXIT_OK


def cmd_refocus(args):
    from .lightfield import DisparityMap
    from .refocus import adjust_gt, refocus_lightfield

    lf, dmap, params = io.load_dataset(args.data)
    out = refocus_lightfield(lf, args.shift, args.interp)
    if dmap is not None:
        dmap = DisparityMap(adjust_gt(dmap.values, args.shift), dmap.mask)
    params.pop("disp_range", None)
    meta = params.get("meta", {})
    meta["disp_min"] = float(meta.get("disp_min", 0)) - args.shift
    meta["disp_max"] = float(meta.get("disp_max", 0)) - args.shift
    meta["refocus_shift"] = args.shift
    io.write_dataset(args.out, out, dmap, params)
    print(f"refocused by {args.shift} -> {args.out}")
    return EXIT_OK


def cmd_augment(args):
    from .refocus import augment_arrays
    from .training import sample_patches

    lf, dmap, _ = io.load_dataset(args.data)
    if dmap is None:
        raise UsageError("augment needs ground truth disparity in the dataset")
    rng = np.random.default_rng(args.seed or 0)
    pool = sample_patches([(lf, dmap)], args.n, rng)
    shifts = [float(s) for s in args.shifts.split(",")] if args.shifts else []
    h, v, gt, shift = augment_arrays(pool.h, pool.v, pool.gt, shifts)
    buf = BytesIO()
    np.savez(buf, horizontal=h, vertical=v, gt=gt, shift=shift)
    atomic_write_bytes(args.out, buf.getvalue())
    print(f"{len(pool)} samples x {len(shifts) + 1} = {len(gt)} -> {args.out}")
    return EXIT_OK


def _training_data(args, train):
    from .training import synthetic_pool

    if args.data:
        scenes = []
        for d in args.data:
            lf, dmap, _ = io.load_dataset(d)
            if dmap is None:
                raise UsageError(f"dataset {d} has no ground truth")
            scenes.append((lf, dmap))
        return scenes
    return synthetic_pool(train.n_patches, train.n_scenes, train.seed, train.scene_size,
                          d_range=(train.disp_min, train.disp_max))


def cmd_train(args):
    from .training import train as run_train

    train, net = _resolve_config(args)
    if args.iterations is not None:
        train = replace(train, iterations=args.iterations)
    train.validate()
    log.info("config fingerprint %s", fingerprint(train, net))
    data = _training_data(args, train)
    lines = []
    try:
        result = run_train(train, net, data, checkpoint_path=args.out, log_lines=lines,
                           deterministic=args.deterministic)
    finally:
        if args.log and lines:
            atomic_write_bytes(args.log, ("\n".join(lines) + "\n").encode("utf-8"))
    print(f"trained {train.iterations} iterations, val MAE {result.val_mae:.4f}, "
          f"fingerprint {result.fingerprint} -> {args.out}")
    return EXIT_OK


def load_model(path):
    arrays, meta = load_checkpoint(path)
    net = NetConfig.from_dict(meta["net"])
    return NetworkParams.from_arrays(arrays, net, meta.get("bn_steps")), meta


def cmd_infer(args):
    from .training import deterministic_mode, infer_map

    params, meta = load_model(args.model)
    if args.config:
        _, requested = load_config(args.config)
        if requested.fingerprint() != meta.get("arch_fingerprint") and not args.force:
            raise UsageError(
                f"checkpoint architecture {meta.get('arch_fingerprint')} does not match "
                f"config {requested.fingerprint()} (use --force to override)")
    lf, _, _ = io.load_dataset(args.data)
    start = time.perf_counter()
    with deterministic_mode(args.deterministic):
        dmap = infer_map(lf, params)
    io.write_pfm(dmap.values.astype(np.float32), args.out)
    _write_meta(args.out, config_fingerprint=meta.get("config_fingerprint", ""),
                arch_fingerprint=meta.get("arch_fingerprint", ""), mask=dmap.label)
    print(f"inferred {dmap.shape[1]}x{dmap.shape[0]} map in {time.perf_counter() - start:.1f}s -> {args.out}")
    return EXIT_OK


def cmd_eval(args):
    pred = io.read_pfm(args.pred)
    gt = io.read_pfm(args.gt)
    if pred.shape != gt.shape:
        raise UsageError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if pred.ndim == 3:
        pred, gt = pred.reshape(pred.shape[0], -1), gt.reshape(gt.shape[0], -1)
    if args.mask == "interior":
        mask = interior_mask(pred.shape, args.patch_width)
    else:
        mask = np.ones(pred.shape, dtype=bool)
    fp = ""
    if os.path.exists(args.pred + ".meta"):
        with open(args.pred + ".meta") as f:
            for line in f:
                if line.startswith("config_fingerprint:"):
                    fp = line.split(":", 1)[1].strip()
    start = time.perf_counter()
    report = evaluate(pred, gt, mask, scene=args.scene or os.path.basename(args.pred),
                      t=args.threshold, fingerprint=fp, mask_label=args.mask)
    report.runtime = time.perf_counter() - start
    print(report.as_text(), end="")
    print(report.table_header())
    print(report.table_row())
    if args.error_map:
        io.write_png(error_map(pred, gt, args.threshold, mask), args.error_map)
    return EXIT_OK


def cmd_gradcheck(args):
    from .gradsuite import run_suite

    start = time.perf_counter()
    results = run_suite(seeds=args.seeds, network=not args.no_network)
    worst = {}
    for r in results:
        if r.name not in worst or r.error > worst[r.name].error:
            worst[r.name] = r
    failed = [r for r in results if not r.passed]
    for name, r in sorted(worst.items()):
        print(f"{'PASS' if r.passed else 'FAIL'} {name}: max rel err {r.error:.2e} (tol {r.tolerance:g})")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {time.perf_counter() - start:.1f}s")
    return EXIT_OK if not failed else EXIT_RUNTIME


def cmd_ablate(args):
    from .synth import gen_lightfield, two_plane_scene
    from .training import run_ablation, synthetic_pool

    if args.config:
        train, net = _resolve_config(args)
    else:
        train = TrainConfig(iterations=300, batch_size=32, lr=1e-3, n_patches=3000, n_scenes=12,
                            seed=args.seed or 0, log_every=100)
        net = NetConfig(width=16)
    if args.iterations is not None:
        train = replace(train, iterations=args.iterations)
    if args.patches is not None:
        train = replace(train, n_patches=args.patches)
    pool = synthetic_pool(train.n_patches, train.n_scenes, train.seed, train.scene_size,
                          d_range=(train.disp_min, train.disp_max))
    test = [gen_lightfield(two_plane_scene(seed=train.seed + 7919, size=train.scene_size))]
    report = run_ablation(train, net, pool, test, deterministic=args.deterministic)
    text = (f"# ablation at toy scale, seed {train.seed}, {train.iterations} iterations, "
            f"fingerprint {fingerprint(train, net)}\n" + report.as_table()
            + "".join(f"# {n}\n" for n in report.direction()))
    print(text, end="")
    if args.out:
        atomic_write_bytes(args.out, text.encode("utf-8"))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="epiorm", description="EPI light-field depth estimation with oriented relation modules")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--deterministic", action="store_true", help="single-threaded, reproducible numerics")
    p.add_argument("--precision", choices=("single", "double"), default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic benchmark-layout dataset")
    s.add_argument("out")
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--views", type=int, default=9)
    s.add_argument("--scene", choices=("random", "two-plane"), default="random")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("slice", help="dump a horizontal or vertical EPI")
    s.add_argument("data")
    s.add_argument("--axis", choices=("h", "v"), default="h")
    s.add_argument("--index", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_slice)

    s = sub.add_parser("refocus", help="refocus a dataset by a disparity shift")
    s.add_argument("data")
    s.add_argument("--shift", type=float, required=True)
    s.add_argument("--interp", choices=("linear", "nearest"), default="linear")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_refocus)

    s = sub.add_parser("augment", help="sample patch pairs and expand them by refocusing")
    s.add_argument("data")
    s.add_argument("--shifts", default="-1.5,-1.0,-0.5,0.5,1.0,1.5,2.0")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("train", help="train a network")
    s.add_argument("--config")
    s.add_argument("--data", nargs="*", default=None, help="dataset directories (default: synthetic)")
    s.add_argument("--out", required=True)
    s.add_argument("--log")
    s.add_argument("--iterations", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="estimate a disparity map")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="BadPix and MSE of a predicted map")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--threshold", type=float, default=0.07)
    s.add_argument("--mask", choices=("all", "interior"), default="all")
    s.add_argument("--patch-width", type=int, default=29)
    s.add_argument("--scene")
    s.add_argument("--error-map")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--no-network", action="store_true")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("ablate", help="four-cell ORM/EPIR ablation at toy scale")
    s.add_argument("--config")
    s.add_argument("--iterations", type=int)
    s.add_argument("--patches", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("config", help="print the default configuration")
    s.set_defaults(func=lambda a: (print(dump_config(TrainConfig(), NetConfig()), end=""), EXIT_OK)[1])
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return EXIT_INVALID
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (EpiOrmError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
