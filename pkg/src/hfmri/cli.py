"""``hfmri`` command-line driver.

Subcommands: phantom, mask, sample, reconstruct, metrics, edges.  Every run
prints its resolved configuration (``[cfg]`` lines) before doing any work;
progress goes to ``[iter]`` lines and written files to ``[out]`` lines.
Exit status is 0 on success, 2 on bad input and 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import FormatError, InvalidArgument, NumericalError, ParseError, make_grid
from .frames import edge_map
from .metrics import quality_report
from .phantom import add_noise_to_snr, default_phantom, ellipse_kspace, load_phantom, vardensity_mask
from .solver import init_state, reconstruct, zero_fill
from .transforms import idft

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _say(tag: str, msg: str) -> None:
    print(f"[{tag}] {msg}", flush=True)


def _echo_args(args: argparse.Namespace) -> None:
    for key, val in sorted(vars(args).items()):
        if key != "func":
            _say("cfg", f"{key} = {val}")


def _float_or_inf(text: str) -> float:
    return math.inf if text.lower() in ("inf", "+inf", "none") else float(text)


def cmd_phantom(args) -> int:
    p = load_phantom(args.spec) if args.spec else default_phantom()
    if args.N is not None or args.L is not None:
        N = args.N if args.N is not None else p.N
        # Keep the pixel pitch unless L is given explicitly.
        L = args.L if args.L is not None else p.L * N / p.N
        p = p.rescaled(L, N)
    if args.scale != 1.0:
        p = p.scaled(args.scale)
    _say("cfg", f"phantom: {len(p.ellipses)} ellipses, L = {p.L!r}, N = {p.N}")
    v = ellipse_kspace(p)
    if args.dump_dc:
        o = p.N // 2
        dc = complex(v[o, o])
        _say("out", f"dc = {dc.real!r} {dc.imag!r}")
    if args.out:
        io.write_array(args.out, v)
        _say("out", f"kspace {args.out}")
    return 0


def cmd_mask(args) -> int:
    mask = vardensity_mask(make_grid(args.N), args.ratio, args.decay, args.center, args.seed)
    io.write_mask(args.out, mask)
    _say("out", f"mask {args.out} ({mask.count} samples, ratio {mask.ratio:.6f})")
    return 0


def cmd_sample(args) -> int:
    v = io.read_array(args.kspace)
    mask = io.read_mask(args.mask)
    if v.shape != mask.grid.shape:
        raise InvalidArgument(f"kspace N={v.shape[0]} does not match mask N={mask.grid.N}")
    noisy, realized = add_noise_to_snr(v, mask, args.snr_db, args.seed)
    noisy[~mask.indicator] = 0
    _say("out", f"realized snr_db = {realized!r}")
    io.write_array(args.out, noisy)
    _say("out", f"data {args.out}")
    return 0


def cmd_reconstruct(args) -> int:
    f = io.read_array(args.data)
    mask = io.read_mask(args.mask)
    if f.shape != mask.grid.shape:
        raise InvalidArgument(f"data N={f.shape[0]} does not match mask N={mask.grid.N}")
    window = tuple(args.window)
    if args.zero_fill:
        image = zero_fill(f, mask)
        if args.out_kspace:
            io.write_array(args.out_kspace, mask.weights() * f)
            _say("out", f"kspace {args.out_kspace}")
        if args.out_image:
            io.write_image(args.out_image, np.abs(image), window)
            _say("out", f"image {args.out_image}")
        return 0

    cfg = io.parse_config(args.config) if args.config else io.parse_config_text("")
    for line in cfg.echo():
        _say("cfg", line)
    p = cfg.params
    trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None
    if trace_fh:
        trace_fh.write("# iter F rel_change\n")

    def progress(it, F, rel):
        _say("iter", f"{it} F={F!r} rel_change={rel!r}")
        if trace_fh:
            trace_fh.write(f"{it} {F!r} {rel!r}\n")
            trace_fh.flush()

    try:
        state = init_state(f, mask, p)
        t0 = state.trace[0]
        progress(0, t0.objective, t0.rel_change)
        try:
            result = reconstruct(f, mask, p, callback=progress, state=state)
        except NumericalError as exc:
            dump = exc.state or {}
            if dump.get("v") is not None:
                base = args.out_kspace or args.data
                path = str(Path(base).with_suffix("")) + ".lastgood.ksp1"
                io.write_array(path, dump["v"])
                _say("out", f"last good state {path} (iteration {dump.get('iter')})")
            raise
    finally:
        if trace_fh:
            trace_fh.close()
    if args.trace:
        _say("out", f"trace {args.trace}")
    _say("out", f"iterations = {result.n_iters} converged = {result.converged} "
                f"wall_time_s = {result.wall_time_s:.3f}")
    if args.out_kspace:
        io.write_array(args.out_kspace, result.v)
        _say("out", f"kspace {args.out_kspace}")
    if args.out_image:
        io.write_image(args.out_image, np.abs(result.image), window)
        _say("out", f"image {args.out_image}")
    if args.out_filters:
        io.write_filters(args.out_filters, result.state.bank)
        _say("out", f"filters {args.out_filters}")
    return 0


def cmd_metrics(args) -> int:
    ref = idft(io.read_array(args.reference))
    test = idft(io.read_array(args.test))
    report = quality_report(ref, test)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _say("out", f"report {args.out}")
    return 0


def cmd_edges(args) -> int:
    bank = io.read_filters(args.filters)
    L = args.L if args.L is not None else float(args.res)
    emap = edge_map(bank, args.r, args.res, L)
    peak = float(emap.max())
    scaled = emap / peak if peak > 0 else emap
    io.write_image(args.out, scaled, (0.0, 1.0))
    _say("out", f"edges {args.out} (peak {peak!r})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hfmri", description="k-space tight-frame MRI reconstruction")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="sample an ellipse phantom in k-space")
    p.add_argument("--spec", help="phantom description file (default: bundled 10-ellipse phantom)")
    p.add_argument("--out", help="output KSP1 file")
    p.add_argument("--N", type=int, help="grid size override")
    p.add_argument("--L", type=float, help="field-of-view override")
    p.add_argument("--scale", type=float, default=1.0, help="multiply every amplitude")
    p.add_argument("--dump-dc", action="store_true", help="print the k=(0,0) sample")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("mask", help="variable-density sampling mask")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--decay", type=float, default=2.0)
    p.add_argument("--center", type=int, default=None, help="always-sampled radius")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("sample", help="mask k-space and add noise")
    p.add_argument("--kspace", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--snr-db", type=_float_or_inf, default=math.inf)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reconstruct", help="restore k-space from undersampled data")
    p.add_argument("--data", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--config")
    p.add_argument("--out-kspace")
    p.add_argument("--out-image")
    p.add_argument("--out-filters")
    p.add_argument("--trace")
    p.add_argument("--window", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    p.add_argument("--zero-fill", action="store_true", help="write the zero-filled baseline only")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("metrics", help="SNR and HFEN between two k-space files")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("edges", help="edge map from a filter bank")
    p.add_argument("--filters", required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--res", type=int, default=256)
    p.add_argument("--L", type=float, default=None, help="field of view (default: res)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edges)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _echo_args(args)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidArgument, FormatError, ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
