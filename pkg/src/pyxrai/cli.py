"""Command-line front end.

Subcommands::

    pyxrai gen-corpus --out corpus/
    pyxrai attribute --image corpus/images/img_0000.png --model corpus/tinynet.bin --method xrai --out run/
    pyxrai evaluate --manifest corpus/manifest.csv --model corpus/tinynet.bin --methods xrai,ig,random --out eval/
    pyxrai sanity --method gradient --seeds 100 --out sanity/

Every run writes ``config.json`` with its resolved settings next to its
outputs. Exit codes: 0 success, 1 usage error, 2 I/O or input-file error,
3 numeric or degenerate input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pyxrai import __version__
from pyxrai.attribution import DEFAULT_STEPS, BaselineSpec, compute_attribution, ig_multi_baseline
from pyxrai.core import (
    BOKEH_SIGMA_FRACTION,
    COMPRESSION_LEVEL,
    ParameterError,
    default_blur_sigma,
    read_image,
    read_mask,
    write_image,
    write_mask,
)
from pyxrai.corpus import generate_corpus
from pyxrai.evaluation import (
    AIC,
    DEFAULT_BINS,
    DEFAULT_FRACTIONS,
    SIC,
    aggregate_curve,
    localization_metrics,
    pic_datapoints,
    top_fraction_mask,
)
from pyxrai.formats import (
    curves_svg,
    scatter_svg,
    trajectory_json,
    write_csv,
    write_float_map,
    write_heatmap,
    write_json,
    write_segments,
    write_text,
)
from pyxrai.model import load_tinynet, save_tinynet, tinynet_randomize, tinynet_train
from pyxrai.sanity import AXIOM_METHODS, randomization_check, run_axiom_check
from pyxrai.segmentation import DILATION_RADIUS, multi_scale_segments, scaled_dilation_radius
from pyxrai.xrai import SUBTRACT, UNION, heatmap_from_trajectory, mask_at_area, xrai_trajectory

log = logging.getLogger("pyxrai")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

ATTRIBUTE_METHODS = ("gradient", "grad-input", "ig", "xrai", "edges", "random")

# Fixed choices for blur, codec and interpolation; recorded in every config.json.
METADATA = {
    "blur": f"gaussian, sigma = {BOKEH_SIGMA_FRACTION} * max(H, W), truncated at 3 sigma, mirrored borders",
    "codec": f"8-bit quantization, PNG Paeth residuals, zlib level {COMPRESSION_LEVEL}",
    "grid_interpolation": "Catmull-Rom on a 20x20 lattice, mirrored peak neighbours, clamped border",
}


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def substream(seed: int, name: str, index: int = 0) -> int:
    """Independent integer seed for the named component of a run."""
    ss = np.random.SeedSequence([seed, zlib.crc32(name.encode()), index])
    return int(ss.generate_state(1)[0])


# --- shared helpers ----------------------------------------------------------


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "json_errors", "verbose")}
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}
    write_json(out / "config.json", {"version": __version__, "config": cfg, "metadata": METADATA})


def _dilation(value: str, shape) -> int:
    if value == "auto":
        return scaled_dilation_radius(shape)
    try:
        radius = int(value)
    except ValueError:
        raise UsageError(f"--dilation must be an integer or 'auto', got {value!r}") from None
    if radius < 0:
        raise UsageError("--dilation must be >= 0")
    return radius


def _baseline(text: str, seed: int) -> BaselineSpec:
    try:
        return BaselineSpec.parse(text, seed=substream(seed, "baselines"))
    except (ParameterError, ValueError) as exc:
        raise UsageError(f"bad --baseline {text!r}: {exc}") from None


def _load_model(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    return load_tinynet(path)


@dataclass
class ManifestEntry:
    image: Path
    label: int
    mask: Path | None


def read_manifest(path) -> list[ManifestEntry]:
    """Parse ``filename,label[,truth_mask_file]`` rows; paths are relative
    to the manifest. An optional header row is skipped."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    entries = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and len(row) > 1 and row[1].strip().lower() == "label":
                continue
            if len(row) not in (2, 3):
                raise InputError(f"{path}:{lineno}: expected 2 or 3 fields, got {len(row)}")
            try:
                label = int(row[1])
            except ValueError:
                raise InputError(f"{path}:{lineno}: label {row[1]!r} is not an integer") from None
            if label < 0:
                raise InputError(f"{path}:{lineno}: label must be >= 0")
            mask = path.parent / row[2].strip() if len(row) == 3 and row[2].strip() else None
            entries.append(ManifestEntry(path.parent / row[0].strip(), label, mask))
    if not entries:
        raise InputError(f"{path}: manifest has no entries")
    return entries


# --- gen-corpus --------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    if args.n < 2 or not 0 < args.train_fraction < 1:
        raise UsageError("need --n >= 2 and 0 < --train-fraction < 1")
    out = _out_dir(args.out)
    corpus = generate_corpus(args.n, args.size, args.classes, seed=substream(args.seed, "corpus"))
    (out / "images").mkdir(exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    rows = []
    for i, (img, label, mask) in enumerate(zip(corpus.images, corpus.labels, corpus.masks)):
        name = f"img_{i:04d}.png"
        write_image(out / "images" / name, img)
        write_mask(out / "masks" / name, mask)
        rows.append((f"images/{name}", int(label), f"masks/{name}"))
    write_csv(out / "manifest.csv", ("filename", "label", "truth_mask_file"), rows)

    # train on the images as written to disk, so the saved net sees what
    # later subcommands will read back
    images = np.stack([read_image(out / r[0]) for r in rows])
    n_train = int(round(args.train_fraction * args.n))
    net = tinynet_train(images[:n_train], corpus.labels[:n_train], epochs=args.epochs,
                        learning_rate=args.lr, seed=substream(args.seed, "init"),
                        hidden=args.hidden, n_classes=args.classes)
    save_tinynet(net, out / "tinynet.bin")
    net = load_tinynet(out / "tinynet.bin")
    pred = np.argmax(net.predict(images), axis=1)
    test_acc = float(np.mean(pred[n_train:] == corpus.labels[n_train:])) if n_train < args.n else None
    summary = {"n_train": n_train, "n_test": args.n - n_train,
               "train_accuracy": float(np.mean(pred[:n_train] == corpus.labels[:n_train])),
               "test_accuracy": test_acc}
    write_json(out / "training.json", summary)
    _write_config(out, args)
    print(f"wrote {args.n} images to {out}; held-out accuracy {test_acc:.3f}")
    return EXIT_OK


# --- attribute ---------------------------------------------------------------


def cmd_attribute(args) -> int:
    if args.area is not None and not 0 < args.area <= 1:
        raise UsageError("--area must be in (0, 1]")
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if not Path(args.image).is_file():
        raise FileNotFoundError(f"image not found: {args.image}")
    img = read_image(args.image)
    net = _load_model(args.model)
    if tuple(img.shape) != tuple(net.input_shape):
        raise ParameterError(f"image shape {img.shape} does not match model input {net.input_shape}")
    class_index = int(np.argmax(net.predict(img))) if args.class_index is None else args.class_index
    if not 0 <= class_index < net.n_classes:
        raise UsageError(f"--class must be in [0, {net.n_classes})")
    baseline = _baseline(args.baseline, args.seed)
    out = _out_dir(args.out)

    if args.method == "xrai":
        attr = ig_multi_baseline(net, img, baseline, class_index, args.steps)
        segs = multi_scale_segments(img, dilation_radius=_dilation(args.dilation, img.shape))
        traj = xrai_trajectory(attr, segs, args.gain)
        heat = heatmap_from_trajectory(traj)
        write_float_map(out / "attribution.f32", attr)
        write_heatmap(out / "attribution.png", attr)
        write_float_map(out / "xrai_heatmap.f32", heat)
        write_heatmap(out / "xrai_heatmap.png", heat - heat.min())
        write_segments(out, segs, seed=substream(args.seed, "render"))
        write_json(out / "trajectory.json", trajectory_json(traj))
        mask = mask_at_area(traj, args.area) if args.area is not None else None
    else:
        attr = compute_attribution(args.method, net, img, class_index, baseline=baseline,
                                   steps=args.steps, seed=substream(args.seed, "random-map"))
        write_float_map(out / "attribution.f32", attr)
        write_heatmap(out / "attribution.png", attr)
        mask = top_fraction_mask(attr, args.area) if args.area is not None else None
    if mask is not None:
        write_mask(out / "mask.png", mask)
    _write_config(out, args)
    print(f"{args.method}: class {class_index}, outputs in {out}")
    return EXIT_OK


# --- evaluate ----------------------------------------------------------------


def _parse_methods(text: str) -> list[tuple[str, str | None]]:
    """``name`` or ``name:baseline`` tokens, e.g. ``xrai,ig:black,random``."""
    methods = []
    for token in text.split(","):
        name, _, base = token.strip().partition(":")
        if name not in ATTRIBUTE_METHODS:
            raise UsageError(f"unknown method {name!r}; choose from {', '.join(ATTRIBUTE_METHODS)}")
        if base and name not in ("ig", "xrai"):
            raise UsageError(f"method {name!r} takes no baseline")
        methods.append((name, base or None))
    labels = [m if b is None else f"{m}:{b}" for m, b in methods]
    if len(set(labels)) != len(labels):
        raise UsageError("duplicate method in --methods")
    return methods


def _parse_fractions(text: str | None) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_FRACTIONS
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad --fractions {text!r}") from None
    if not vals or any(not 0 < v <= 1 for v in vals) or list(vals) != sorted(vals):
        raise UsageError("--fractions must be ascending values in (0, 1]")
    return vals


def cmd_evaluate(args) -> int:
    methods = _parse_methods(args.methods)
    fractions = _parse_fractions(args.fractions)
    if args.steps < 1 or args.bins < 1 or args.threads < 1:
        raise UsageError("--steps, --bins and --threads must be >= 1")
    entries = read_manifest(args.manifest)
    if args.limit is not None:
        entries = entries[: args.limit]
    if args.localize:
        missing = [str(e.image) for e in entries if e.mask is None]
        if missing:
            raise InputError(f"--localize needs truth masks; {len(missing)} entries have none (first: {missing[0]})")
    net = _load_model(args.model)
    for e in entries:
        if e.label >= net.n_classes:
            raise InputError(f"{e.image}: label {e.label} out of range for a {net.n_classes}-class model")
    names = [m if b is None else f"{m}:{b}" for m, b in methods]
    default_base = _baseline(args.baseline, args.seed)

    def process(index_entry):
        i, entry = index_entry
        img = read_image(entry.image)
        if tuple(img.shape) != tuple(net.input_shape):
            raise ParameterError(f"{entry.image}: shape {img.shape} does not match model input {net.input_shape}")
        ig_cache, results = {}, {}

        def ig(base):
            spec = default_base if base is None else _baseline(base, args.seed)
            key = str(spec)
            if key not in ig_cache:
                ig_cache[key] = ig_multi_baseline(net, img, spec, entry.label, args.steps)
            return ig_cache[key]

        segs = None
        for (method, base), name in zip(methods, names):
            if method == "xrai":
                if segs is None:
                    segs = multi_scale_segments(img, dilation_radius=_dilation(args.dilation, img.shape))
                traj = xrai_trajectory(ig(base), segs, args.gain)
                saliency, loc_map = traj, heatmap_from_trajectory(traj)
            elif method == "ig":
                saliency = loc_map = ig(base)
            else:
                saliency = loc_map = compute_attribution(
                    method, net, img, entry.label, steps=args.steps,
                    seed=substream(args.seed, "random-map", i))
            pic = pic_datapoints(net, img, entry.label, saliency, fractions)
            loc = localization_metrics(loc_map, read_mask(entry.mask)) if args.localize else None
            results[name] = (pic, loc)
        return results

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        per_image = list(pool.map(process, enumerate(entries)))

    out = _out_dir(args.out)
    rows, curve_rows, table, loc_rows = [], [], {}, []
    for name in names:
        pics = [r[name][0] for r in per_image]
        for entry, pic in zip(entries, pics):
            for p in [pic.blurred] + pic.points + [pic.original]:
                rows.append((entry.image.name, name, p.fraction, p.information_level, p.accuracy_bit,
                             p.softmax_ratio, p.degenerate, p.clamped))
        table[name] = {}
        for kind, reducer in ((AIC, args.aic_reducer), (SIC, args.sic_reducer)):
            curve = aggregate_curve(pics, kind, args.bins, reducer)
            table[name][kind] = curve.auc
            curve_rows += [(name, kind, lv, pf) for lv, pf in zip(curve.levels, curve.performance)]
        if args.localize:
            locs = [r[name][1] for r in per_image]
            loc_rows += [(e.image.name, name, l.auc, l.f1, l.mae) for e, l in zip(entries, locs)]
            table[name]["localization"] = {k: float(np.mean([getattr(l, k) for l in locs]))
                                           for k in ("auc", "f1", "mae")}

    write_csv(out / "datapoints.csv", ("image", "method", "area_fraction", "information_level",
                                       "accuracy_bit", "softmax_ratio", "degenerate", "clamped"), rows)
    write_csv(out / "curves.csv", ("method", "kind", "information_level", "performance"), curve_rows)
    if args.localize:
        write_csv(out / "localization.csv", ("image", "method", "auc", "f1", "mae"), loc_rows)
    curves = {}
    for name, kind, lv, pf in curve_rows:
        xs, ys = curves.setdefault(kind, {}).setdefault(name, ([], []))
        xs.append(lv)
        ys.append(pf)
    write_text(out / "pic.svg", curves_svg([("Accuracy information curve", curves[AIC]),
                                            ("Softmax information curve", curves[SIC])]))
    write_json(out / "summary.json", {
        "n_images": len(entries),
        "methods": table,
        "blurred_floor": {
            AIC: float(np.mean([r[names[0]][0].blurred.accuracy_bit for r in per_image])),
            SIC: float(np.median([r[names[0]][0].blurred.softmax_ratio for r in per_image])),
        },
        "blur_sigma": default_blur_sigma(net.input_shape),
    })
    _write_config(out, args)

    width = max(len(n) for n in names)
    print(f"{'method':<{width}}  {'AIC':>6}  {'SIC':>6}" + ("  {:>6}  {:>6}  {:>6}".format("AUC", "F1", "MAE") if args.localize else ""))
    for name in names:
        line = f"{name:<{width}}  {table[name][AIC]:6.3f}  {table[name][SIC]:6.3f}"
        if args.localize:
            loc = table[name]["localization"]
            line += f"  {loc['auc']:6.3f}  {loc['f1']:6.3f}  {loc['mae']:6.3f}"
        print(line)
    return EXIT_OK


# --- sanity ------------------------------------------------------------------


def cmd_sanity(args) -> int:
    if args.seeds < 1 or args.steps < 1:
        raise UsageError("--seeds and --steps must be >= 1")
    if not 0 < args.epsilon <= 1:
        raise UsageError("--epsilon must be in (0, 1]")
    seed_list = None
    if args.seed_list is not None:
        try:
            seed_list = [int(s) for s in args.seed_list.split(",")]
        except ValueError:
            raise UsageError(f"bad --seed-list {args.seed_list!r}") from None
    out = _out_dir(args.out)
    methods = AXIOM_METHODS if args.method == "all" else (args.method,)
    summary = {}
    for method in methods:
        res = run_axiom_check(method, args.seeds, args.epsilon, args.steps, seeds=seed_list)
        stem = f"axiom_{method}"
        write_csv(out / f"{stem}.csv",
                  ("seed", "attr_x1", "attr_x2", "delta_y_x1", "delta_y_x2", "output_change", "passed"),
                  [(r.seed, r.attr_x1, r.attr_x2, r.delta_y_x1, r.delta_y_x2, r.output_change, r.passed)
                   for r in res.records])
        summary[method] = {"seeds": len(res.records), "failures": res.failures,
                           "failure_rate": res.failure_rate, "epsilon": res.epsilon, "steps": res.steps,
                           "max_completeness_residual": max(
                               abs(r.attr_x1 + r.attr_x2 - r.output_change) for r in res.records)}
        write_json(out / f"{stem}.json", summary[method])
        write_text(out / f"{stem}.svg", scatter_svg(
            [r.attr_x1 for r in res.records], [r.attr_x2 for r in res.records],
            [r.passed for r in res.records], f"{method}, epsilon = {args.epsilon}",
            "attribution x1", "attribution x2"))
        print(f"{method}: {res.failures}/{len(res.records)} seeds fail at epsilon {args.epsilon}")

    if args.trained is not None:
        if args.manifest is None:
            raise UsageError("--trained requires --manifest")
        trained = _load_model(args.trained)
        random_net = (_load_model(args.random) if args.random is not None
                      else tinynet_randomize(trained, substream(args.seed, "random-net")))
        entries = read_manifest(args.manifest)[: args.images]
        images = [read_image(e.image) for e in entries]
        baseline = _baseline(args.baseline, args.seed)

        def method_fn(net, img, c):
            return ig_multi_baseline(net, img, baseline, c, args.ig_steps)

        report = randomization_check(trained, random_net, images, method_fn,
                                     class_indices=[e.label for e in entries])
        summary["randomization"] = {
            "images": len(images), "baseline": str(baseline),
            "mean_abs_spearman": report.mean_abs_correlation, "threshold": report.threshold,
            "degenerate": int(sum(report.degenerate)), "passed": report.passed,
            "correlations": report.correlations}
        write_json(out / "randomization.json", summary["randomization"])
        print(f"randomization: mean |rho| = {report.mean_abs_correlation:.3f} "
              f"({'pass' if report.passed else 'fail'})")
    _write_config(out, args)
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="pyxrai", description="XRAI attribution, sanity checks and PIC evaluation.")
    parser.add_argument("--version", action="version", version=f"pyxrai {__version__}")
    parser.add_argument("--json-errors", action="store_true", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-corpus", parents=[common], help="generate a synthetic corpus and train a TinyNet")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_gen_corpus)

    def attribution_flags(p):
        p.add_argument("--baseline", default="black+white", help="black, white, black+white or random:N")
        p.add_argument("--steps", type=int, default=DEFAULT_STEPS, help="integration steps")
        p.add_argument("--gain", choices=(UNION, SUBTRACT), default=UNION)
        p.add_argument("--dilation", default=str(DILATION_RADIUS),
                       help="segment dilation radius in pixels, or 'auto' to scale 5 px at 224 px to the image size")

    p = sub.add_parser("attribute", parents=[common], help="attribute one image")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--method", choices=ATTRIBUTE_METHODS, default="xrai")
    p.add_argument("--class", dest="class_index", type=int, default=None, help="class to explain (default: top prediction)")
    p.add_argument("--area", type=float, default=None, help="also write the mask covering this image fraction")
    attribution_flags(p)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("evaluate", parents=[common], help="performance information curves over a corpus")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--methods", default="xrai,ig,random", help="comma list; ig and xrai accept name:baseline")
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--fractions", default=None, help="comma list of ascending area fractions")
    p.add_argument("--aic-reducer", choices=("mean", "median"), default="mean")
    p.add_argument("--sic-reducer", choices=("mean", "median"), default="median")
    p.add_argument("--localize", action="store_true", help="also score localization against truth masks")
    p.add_argument("--limit", type=int, default=None, help="use only the first N manifest rows")
    attribution_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sanity", parents=[common], help="perturbation-epsilon and randomization checks")
    p.add_argument("--method", choices=AXIOM_METHODS + ("all",), default="all")
    p.add_argument("--seeds", type=int, default=100, help="number of grid functions (seeds 0..N-1)")
    p.add_argument("--seed-list", default=None, help="explicit comma list of grid seeds")
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--steps", type=int, default=500, help="integration steps for ig-black")
    p.add_argument("--trained", type=Path, default=None, help="trained TinyNet for the randomization check")
    p.add_argument("--random", type=Path, default=None, help="random TinyNet (default: reinitialized from --seed)")
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--images", type=int, default=50)
    p.add_argument("--baseline", default="black+white")
    p.add_argument("--ig-steps", type=int, default=DEFAULT_STEPS)
    p.set_defaults(func=cmd_sanity)
    return parser


def _report(exc: Exception, code: int, json_errors: bool) -> int:
    if json_errors:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    else:
        sys.stderr.write(f"error: {exc}\n")
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except UsageError as exc:
        return _report(exc, EXIT_USAGE, json_errors)
    except (OSError, InputError) as exc:
        return _report(exc, EXIT_IO, json_errors)
    except (ParameterError, ValueError, FloatingPointError, ArithmeticError) as exc:
        return _report(exc, EXIT_NUMERIC, json_errors)


if __name__ == "__main__":
    sys.exit(main())
