"""Command-line front end: ``atomreload {run,sweep,budget,optics,align}``.

Exit codes: 0 success, 1 usage error, 2 invalid configuration, 3 runtime failure.
The default output root comes from ``ATOMRELOAD_OUT`` (else ``./atomreload_out``).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import _io, cavity, losses, protocol
from .params import ConfigError, ValidationError, config_hash, default_paper_config, load_config, override

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3

# values quoted for the reference apparatus, shown next to the computed ones
REPORTED = {
    "xy_finesse": 2900.0, "z_finesse": 3000.0,
    "xy_photon_lifetime": 518.0, "z_photon_lifetime": 355.0,
    "xy_lattice_depth_per_power": 0.20, "z_lattice_depth_per_power": 0.10,
    "tweezer_depth_per_power": 0.00083,
    "xy_power_advantage": 255.0, "z_power_advantage": 132.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _values(spec: str) -> list[float]:
    """``start:stop:count`` (inclusive linspace) or a comma-separated list."""
    try:
        if ":" in spec:
            start, stop, count = spec.split(":")
            if int(count) < 1:
                raise ValueError
            return [float(f"{v:.12g}") for v in np.linspace(float(start), float(stop), int(count))]
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --values {spec!r}; use start:stop:count or a comma list") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="atomreload", description="Continuous-reloading atom array simulator.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON scenario file; omitted keys take defaults")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="override rng_seed")

    def sim(sp, mode, cycles):
        sp.add_argument("--cycles", type=int, default=cycles)
        sp.add_argument("--mode", choices=("loading", "maintenance"), default=mode)
        sp.add_argument("--diagnostic-every", type=int, default=0,
                        help="diagnostic post-rearrangement image every k-th cycle (0: never)")

    common(r := sub.add_parser("run", help="simulate loading or maintenance"))
    sim(r, "loading", 50)
    common(s := sub.add_parser("sweep", help="run one simulation per value of a config key"))
    sim(s, "maintenance", 60)
    s.add_argument("--key", required=True, help="dotted config key, e.g. losses.rearr_depth_fraction")
    s.add_argument("--values", required=True, help="start:stop:count or v1,v2,...")
    s.add_argument("--jobs", type=int, default=1)
    common(sub.add_parser("budget", help="per-cycle loss budget"))
    common(op := sub.add_parser("optics", help="cavity calculator and lattice homogeneity"))
    op.add_argument("--peak-depth-uK", type=float, default=100.0,
                    help="lattice depth at the mode centre used for the light-shift maps")
    a = sub.add_parser("align", help="simulated lattice alignment scan")
    common(a)
    a.add_argument("--handoffs", type=int, default=25, help="handoff pairs per point")
    a.add_argument("--points", type=int, default=41)
    a.add_argument("--span", type=float, default=2.0, help="scan width in lattice periods")
    a.add_argument("--true-offset", type=float, default=0.0, help="simulated optimum (um)")
    return p


def _load(args):
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        config = load_config(text)
    else:
        config = default_paper_config()
    if args.seed is not None:
        config = override(config, "rng_seed", args.seed)
    return config


def _outdir(args, verb):
    root = os.environ.get("ATOMRELOAD_OUT", "atomreload_out")
    return args.out or os.path.join(root, verb)


def _write_run(record, out):
    _io.write_text(os.path.join(out, "run.jsonl"), record.to_jsonl())
    _io.write_text(os.path.join(out, "run.csv"), record.to_csv())
    h = _io.header_line(config_hash(record.config), record.seed)
    _io.write_text(os.path.join(out, "summary.txt"), h + "\n" + protocol.render_summary(record))


def cmd_run(args, config):
    rec = protocol.run_simulation(config, args.cycles, args.mode, diagnostic_every=args.diagnostic_every)
    out = _outdir(args, "run")
    _write_run(rec, out)
    sys.stdout.write(protocol.render_summary(rec))


def _sweep_point(job):
    config, cycles, mode, diag, out = job
    rec = protocol.run_simulation(config, cycles, mode, diagnostic_every=diag)
    _write_run(rec, out)
    s = rec.summary
    return s["steady_pre_fill"], s["steady_post_fill"]


def cmd_sweep(args, config):
    values = _values(args.values)
    if not values:
        raise UsageError("--values is empty")
    out = _outdir(args, "sweep")
    jobs = [(override(config, args.key, v), args.cycles, args.mode, args.diagnostic_every,
             os.path.join(out, f"value_{i:03d}")) for i, v in enumerate(values)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    rows = []
    for v, (pre, post) in zip(values, results):
        vac = "" if pre is None else 1.0 - pre
        rows.append((v, "" if pre is None else pre, "" if post is None else post, vac))
    text = _io.csv_text(config_hash(config), config.rng_seed,
                        (args.key, "mean_pre_fill", "mean_post_fill", "final_vacancy"), rows)
    _io.write_text(os.path.join(out, "sweep.csv"), text)
    sys.stdout.write(text)


def cmd_budget(args, config):
    rows = losses.budget_report(config)
    out = _outdir(args, "budget")
    h = config_hash(config)
    _io.write_text(os.path.join(out, "budget.csv"),
                   _io.csv_text(h, config.rng_seed, ("mechanism", "probability", "dominant"),
                                [(r.mechanism, r.probability, int(r.dominant)) for r in rows]))
    text = losses.budget_rows_text(rows)
    _io.write_text(os.path.join(out, "budget.txt"), _io.header_line(h, config.rng_seed) + "\n" + text)
    sys.stdout.write(text)


def cmd_optics(args, config):
    o = config.optics
    out = _outdir(args, "optics")
    h = config_hash(config)
    rows = [(n, v, u, REPORTED.get(n, "")) for n, v, u in cavity.optics_table(o)]
    text = _io.csv_text(h, config.rng_seed, ("quantity", "value", "unit", "reported"), rows)
    _io.write_text(os.path.join(out, "optics.csv"), text)
    geom = cavity.geometry_from_optics(o, config.target_spacing_um)
    pos = cavity.square_positions(o.array_side_um, config.target_spacing_um)
    hmap = cavity.homogeneity_map(geom, pos)
    cols = ("row", "col", "x_um", "y_um", "value")

    def site_rows(values):
        return zip(map(int, hmap.rows), map(int, hmap.cols), map(float, hmap.x_um),
                   map(float, hmap.y_um), map(float, values))

    for name in ("xy", "z"):
        _io.write_text(os.path.join(out, f"homogeneity_{name}.csv"),
                       _io.csv_text(h, config.rng_seed, cols, site_rows(hmap.profile(name))))
        shift = cavity.light_shift_map(hmap, args.peak_depth_uK, o.polarizability_ratio, name)
        _io.write_text(os.path.join(out, f"light_shift_{name}.csv"),
                       _io.csv_text(h, config.rng_seed, cols, site_rows(shift)))
    sys.stdout.write(text)
    sys.stdout.write(f"peak deviation xy {hmap.peak_deviation('xy'):.4f}  z {hmap.peak_deviation('z'):.4f}\n")


def cmd_align(args, config):
    period = config.losses.lattice_period_um
    half = 0.5 * args.span * period
    offsets = np.linspace(args.true_offset - half, args.true_offset + half, args.points)
    rng = np.random.default_rng(config.rng_seed)
    res = losses.alignment_scan(offsets, args.handoffs, rng, config, true_optimum_um=args.true_offset)
    out = _outdir(args, "align")
    h = config_hash(config)
    _io.write_text(os.path.join(out, "align.csv"),
                   _io.csv_text(h, config.rng_seed, ("offset_um", "survival"),
                                zip(map(float, res.offsets_um), map(float, res.survival))))
    text = (f"fitted optimum {res.optimum_um:.5f} um  amplitude {res.amplitude:.5f} "
            f"+/- {res.amplitude_stderr:.5f}  period {res.period_um} um\n")
    _io.write_text(os.path.join(out, "align.txt"), _io.header_line(h, config.rng_seed) + "\n" + text)
    sys.stdout.write(text)


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "budget": cmd_budget, "optics": cmd_optics,
            "align": cmd_align}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "cycles", 1) < 1:
            raise UsageError("--cycles must be >= 1")
        config = _load(args)
        COMMANDS[args.verb](args, config)
    except UsageError as exc:
        print(f"atomreload: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValidationError) as exc:
        print(f"atomreload: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic for any runtime failure
        print(f"atomreload: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
