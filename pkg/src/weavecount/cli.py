"""weavecount: one executable for the whole workflow.

Subcommands map 1:1 onto module entry points.  Exit codes: 0 success,
1 runtime error, 2 usage error.  Runtime errors print a single
machine-parseable line to stderr.  A plain-text config file (key=value,
keys named after long flags) can preload defaults for any flag; explicit
flags win.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import canvasmap, crossings, dataset, freqcount, imgproc, spatialcount
from .errors import WeaveCountError
from .preprocess import PreprocessParams, preprocess as run_preprocess
from .nn import build_model, default_config, inspect_weights, load_weights, save_weights, toy_config
from .nn import train as train_net
from .nn.model import NetConfig, VARIANTS


def _parse_range(text: str) -> tuple[float, float]:
    lo, _, hi = text.partition(":")
    return float(lo), float(hi)


def _parse_span(text: str) -> tuple[float, float]:
    """'12' -> (12, 12); '8:16' -> (8, 16)."""
    if ":" in text:
        lo, _, hi = text.partition(":")
        return float(lo), float(hi)
    value = float(text)
    return value, value


def _load_input(path: str, ppc: float | None) -> imgproc.GrayImage:
    return imgproc.load_image(path, ppc=ppc)


# ---------------------------------------------------------------------------
# Subcommand implementations


def cmd_preprocess(args: argparse.Namespace) -> int:
    img = _load_input(args.infile, args.ppc)
    params = PreprocessParams(w=args.w, epsilon=args.eps, gamma=args.gamma, bins=args.bins)
    out = run_preprocess(img, params)
    imgproc.save_image(out, args.outfile, bits=args.bits)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    h_span = _parse_span(args.h)
    v_span = _parse_span(args.v)
    samples = []
    for i in range(args.count):
        params = dataset.WeaveParams(
            h_density=float(rng.uniform(*h_span)),
            v_density=float(rng.uniform(*v_span)),
            tilt_deg=float(rng.uniform(-args.tilt, args.tilt)) if args.tilt else 0.0,
            spacing_jitter=args.jitter,
            thread_width_ratio=args.thread_width,
            noise_sigma=args.noise,
            illumination_gradient=args.gradient,
            contrast=args.contrast,
            seed=int(rng.integers(2**31)),
        )
        sample = dataset.synth_fabric(params, size=args.size)
        samples.append(sample)
    dataset.save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_augment(args: argparse.Namespace) -> int:
    samples = dataset.load_dataset(args.indir)
    rng = np.random.default_rng(args.seed)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    count = 0
    for i, sample in enumerate(samples):
        examples = dataset.augment_full(sample, rng, repeats=args.repeats)
        for j, example in enumerate(examples):
            example_id = f"ex{i:05d}_{j:03d}"
            directory = out_root / example_id
            directory.mkdir(exist_ok=True)
            imgproc.save_image(example.image, directory / "image.pgm", bits=16, write_meta=False)
            imgproc.save_image(
                imgproc.GrayImage(example.mask.astype(np.float64), example.image.ppc),
                directory / "mask.pgm",
                bits=8,
                write_meta=False,
            )
            rows.append([example_id, f"sample{i:05d}", sample.source_id, sample.split_tag])
            count += 1
    with open(out_root / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id", "sample_id", "source_id", "split"])
        writer.writerows(rows)
    print(f"wrote {count} examples to {args.out}")
    return 0


def _load_examples(root: Path, split: str) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    with open(root / "manifest.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["split"] != split:
                continue
            directory = root / row["example_id"]
            image = imgproc.load_image(directory / "image.pgm", ppc=dataset.STANDARD_PPC)
            mask_img = imgproc.load_image(directory / "mask.pgm", ppc=dataset.STANDARD_PPC)
            out.append((image.pixels, (mask_img.pixels >= 0.5).astype(np.float64)))
    return out


def cmd_train(args: argparse.Namespace) -> int:
    root = Path(args.data)
    train_set = _load_examples(root, "train")
    val_set = _load_examples(root, "val")
    if not train_set or not val_set:
        raise WeaveCountError(f"{root}: need nonempty train and val splits")
    if args.depth is not None or args.n0 is not None:
        config = toy_config(args.variant, depth=args.depth or 3, n0=args.n0 or 2)
    else:
        config = default_config(args.variant)
    if args.lr is not None:
        config = NetConfig(**{**vars(config), "learning_rate": args.lr})
    net = build_model(config, seed=args.seed)
    history = train_net(
        net,
        train_set,
        val_set,
        batch=args.batch,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
        log=print if args.verbose else None,
    )
    save_weights(net, args.weights_out)
    if args.history_out:
        history.to_csv(args.history_out)
    best = history.records[history.best_epoch - 1]
    print(
        f"trained {args.variant}: epochs={len(history.records)} "
        f"best_epoch={history.best_epoch} val_accuracy={best.val_accuracy:.5f}"
    )
    return 0


def cmd_segment(args: argparse.Namespace) -> int:
    net = load_weights(args.weights)
    img = _load_input(args.infile, args.ppc)
    prob = net.predict(img)
    imgproc.save_image(imgproc.GrayImage(prob, img.ppc), args.outfile, bits=16)
    rule = args.rule or net.config.threshold_rule
    if args.mask or args.centroids:
        mask = crossings.binarize(prob, rule)
        if args.mask:
            imgproc.save_image(imgproc.GrayImage(mask.astype(np.float64), img.ppc), args.mask, bits=8)
        if args.centroids:
            cset = crossings.extract_centroids(mask, img.ppc, min_area=args.min_area)
            crossings.centroids_to_csv(cset, args.centroids)
    return 0


def cmd_count(args: argparse.Namespace) -> int:
    cset = crossings.centroids_from_csv(args.centroids, ppc=args.ppc)
    params = spatialcount.SCParams(m=args.m, alpha_deg=args.alpha, q=args.q, ppc=cset.ppc)
    est = spatialcount.estimate(cset, params)
    writer = csv.writer(sys.stdout)
    writer.writerow(["h_density", "v_density", "h_angle_dev", "v_angle_dev", "n_h", "n_v"])
    fmt = lambda x: "" if x is None else f"{x:.6f}"
    writer.writerow([fmt(est.h_density), fmt(est.v_density), fmt(est.h_angle_dev), fmt(est.v_angle_dev), est.n_h, est.n_v])
    return 0


def cmd_ft(args: argparse.Namespace) -> int:
    img = _load_input(args.infile, args.ppc)
    params = freqcount.FTParams(n_fft=args.nfft, band=_parse_range(args.band), wedge_deg=args.wedge)
    h, v = freqcount.ft_density(img, params)
    writer = csv.writer(sys.stdout)
    writer.writerow(["h_density", "v_density"])
    writer.writerow(["" if h is None else f"{h:.6f}", "" if v is None else f"{v:.6f}"])
    return 0


def cmd_map(args: argparse.Namespace) -> int:
    canvas = _load_input(args.infile, args.ppc)
    segmenter = None
    threshold_rule = "fixed-0.5"
    if args.method in ("dlsc", "dlfa"):
        if not args.weights:
            raise WeaveCountError(f"method '{args.method}' requires --weights")
        net = load_weights(args.weights)
        segmenter = net.predict
        threshold_rule = net.config.threshold_rule
    sc = spatialcount.SCParams(m=args.m, alpha_deg=args.alpha, q=args.q, ppc=canvas.ppc)
    ftp = freqcount.FTParams(n_fft=args.nfft)
    result = canvasmap.sweep(
        canvas,
        args.method,
        segmenter=segmenter,
        sc=sc,
        ftp=ftp,
        shift=args.shift,
        threshold_rule=threshold_rule,
        min_area=args.min_area,
        threads=args.threads,
    )
    prefix = Path(args.out)
    value_range = _parse_range(args.range) if args.range else None
    named = [("h", result.h), ("v", result.v), ("hang", result.h_angle), ("vang", result.v_angle)]
    for tag, dmap in named:
        if dmap is None:
            continue
        canvasmap.map_to_csv(dmap, prefix.with_name(prefix.name + f".{tag}.csv"))
        rng_for_tag = value_range if tag in ("h", "v") else None
        if rng_for_tag is None and np.all(np.isnan(dmap.values)):
            continue  # nothing to scale a palette against
        rgb = canvasmap.render(dmap, palette=args.palette, value_range=rng_for_tag)
        imgproc.save_rgb(rgb, prefix.with_name(prefix.name + f".{tag}.png"))
    print(f"map grid {result.h.rows}x{result.h.cols} written to {prefix}.*")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    a = canvasmap.map_from_csv(args.a, shift_px=args.shift)
    b = canvasmap.map_from_csv(args.b, shift_px=args.shift)
    report = canvasmap.pair_compare(a, b, transform=args.transform, axis=args.axis)
    if args.out:
        rgb = canvasmap.side_by_side(a, b, transform=args.transform, palette=args.palette)
        imgproc.save_rgb(rgb, args.out)
    writer = csv.writer(sys.stdout)
    writer.writerow(["lag", "correlation"])
    writer.writerow([report.lag, f"{report.correlation:.6f}"])
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    def read_table(path: str) -> dict[str, tuple[float, float]]:
        table = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                table[row["id"]] = (float(row["h"]), float(row["v"]))
        return table

    pred = read_table(args.pred)
    truth = read_table(args.truth)
    shared = sorted(set(pred) & set(truth))
    if not shared:
        raise WeaveCountError("no shared ids between prediction and truth tables")
    h_errs = [abs(pred[k][0] - truth[k][0]) / truth[k][0] for k in shared]
    v_errs = [abs(pred[k][1] - truth[k][1]) / truth[k][1] for k in shared]
    writer = csv.writer(sys.stdout)
    writer.writerow(["axis", "mean_normalized_error", "n"])
    writer.writerow(["h", f"{np.mean(h_errs):.12g}", len(shared)])
    writer.writerow(["v", f"{np.mean(v_errs):.12g}", len(shared)])
    return 0


def cmd_weights_inspect(args: argparse.Namespace) -> int:
    print(inspect_weights(args.weights))
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weavecount",
        description="Plain-weave thread density and angle analysis for canvas X-rays.",
    )
    parser.add_argument("--config", help="key=value file preloading defaults for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="3-stage local-statistics enhancement")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--ppc", type=float, default=None, help="input resolution (else sidecar .meta)")
    p.add_argument("--w", type=int, default=13, help="window size in px (odd)")
    p.add_argument("--gamma", type=float, default=1e-3, help="clip probability threshold")
    p.add_argument("--eps", type=float, default=1e-6, help="std-division guard")
    p.add_argument("--bins", type=int, default=256, help="histogram bins for clipping")
    p.add_argument("--bits", type=int, default=16, choices=(8, 16))
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="generate synthetic labeled weave samples")
    p.add_argument("--h", default="12", help="thr/cm along x, value or lo:hi range")
    p.add_argument("--v", default="12", help="thr/cm along y, value or lo:hi range")
    p.add_argument("--tilt", type=float, default=0.0, help="max |tilt| in degrees")
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--gradient", type=float, default=0.0)
    p.add_argument("--contrast", type=float, default=1.0)
    p.add_argument("--thread-width", type=float, default=0.6)
    p.add_argument("--size", type=int, default=300)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="60 training examples per labeled sample")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=1, help="multiplicity for skew correction")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train a segmentation variant")
    p.add_argument("--data", required=True, help="augmented examples directory")
    p.add_argument("--variant", default="inc-dice", choices=VARIANTS)
    p.add_argument("--depth", type=int, default=None, help="toy override: layer count")
    p.add_argument("--n0", type=int, default=None, help="toy override: first-level filters")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights-out", required=True)
    p.add_argument("--history-out", default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="probability map (and mask/centroids) for one image")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--ppc", type=float, default=None)
    p.add_argument("--mask", default=None)
    p.add_argument("--centroids", default=None)
    p.add_argument("--rule", default=None, choices=crossings.THRESHOLD_RULES)
    p.add_argument("--min-area", type=int, default=4)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("count", help="densities/angles from a centroid CSV")
    p.add_argument("--centroids", required=True)
    p.add_argument("--m", type=int, default=9)
    p.add_argument("--alpha", type=float, default=25.0)
    p.add_argument("--q", type=float, default=10.0)
    p.add_argument("--ppc", type=float, default=None)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("ft", help="frequency-domain density estimate for one patch")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--ppc", type=float, default=None)
    p.add_argument("--nfft", type=int, default=2048)
    p.add_argument("--band", default="4:30")
    p.add_argument("--wedge", type=float, default=15.0)
    p.set_defaults(func=cmd_ft)

    p = sub.add_parser("map", help="sweep a whole canvas into density/angle maps")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--method", required=True, choices=canvasmap.METHODS)
    p.add_argument("--weights", default=None)
    p.add_argument("--ppc", type=float, default=None)
    p.add_argument("--shift", type=int, default=100)
    p.add_argument("--m", type=int, default=9)
    p.add_argument("--alpha", type=float, default=25.0)
    p.add_argument("--q", type=float, default=10.0)
    p.add_argument("--nfft", type=int, default=2048)
    p.add_argument("--min-area", type=int, default=4)
    p.add_argument("--range", default=None, help="render range lo:hi in thr/cm")
    p.add_argument("--palette", default="viridis")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output prefix for .h/.v/.hang/.vang files")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("compare", help="pairing score between two map CSVs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--transform", default="flip_h", choices=("flip_h", "rot180", "none"))
    p.add_argument("--axis", default="rows", choices=("rows", "cols"))
    p.add_argument("--shift", type=int, default=100)
    p.add_argument("--palette", default="viridis")
    p.add_argument("--out", default=None, help="side-by-side PNG path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="mean normalized density error per axis")
    p.add_argument("--pred", required=True, help="CSV with id,h,v")
    p.add_argument("--truth", required=True, help="CSV with id,h,v")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("weights-inspect", help="print a weights file header")
    p.add_argument("--weights", required=True)
    p.set_defaults(func=cmd_weights_inspect)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Preload defaults from --config key=value lines; flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        parser.error("--config requires a path")
    path = Path(argv[idx + 1])
    if not path.is_file():
        parser.error(f"config file not found: {path}")
    overrides: dict[str, str] = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            parser.error(f"malformed config line: '{line}'")
        key, value = line.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value.strip()
    remaining = argv[:idx] + argv[idx + 2 :]
    command = next((a for a in remaining if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    if command not in subparsers.choices:
        return remaining
    sub = subparsers.choices[command]
    known = {}
    for action in sub._actions:
        if action.dest in overrides:
            raw = overrides.pop(action.dest)
            known[action.dest] = raw if action.type is None else action.type(raw)
    if overrides:
        parser.error(f"unknown config keys: {sorted(overrides)}")
    sub.set_defaults(**known)
    return remaining


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    argv = _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (WeaveCountError, ValueError, OSError) as exc:
        command = getattr(args, "command", "?")
        message = str(exc).replace('"', "'")
        print(f'error cmd={command} type={type(exc).__name__} msg="{message}"', file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
