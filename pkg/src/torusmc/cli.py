"""Command-line front end.

    torusmc <experiment> [--config FILE] [--catalog NAME] [overrides...]
    torusmc validate ...     check a config without running it
    torusmc list             show the standing experiment catalog

Precedence: built-in defaults < --catalog entry < --config file < flags.
Exit codes: 0 all configured assertions pass, 2 usage/config error,
3 assertion failure.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .harness import ConfigError, ExperimentConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ASSERT = 3


def _parse_times(text):
    return tuple(float(v) for v in text.split(","))


def _parse_modes(text):
    out = []
    for part in text.split(";"):
        x, y = part.split(",")
        out.append((int(x), int(y)))
    return tuple(out)


def _parse_ladder(text):
    return tuple(int(v) for v in text.split(","))


def _add_override_flags(p):
    p.add_argument("--config", metavar="PATH", help="flat TOML config file")
    p.add_argument("--catalog", metavar="NAME", help="start from a catalog preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--flow", choices=("wave", "heat"))
    p.add_argument("--object", dest="object")
    p.add_argument("--alpha", type=float)
    p.add_argument("--N", dest="N", type=int)
    p.add_argument("--N-ladder", dest="N_ladder", type=_parse_ladder, metavar="A,B,...")
    p.add_argument("--t0", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--M", dest="M", type=int)
    p.add_argument("--T", dest="T", type=float)
    p.add_argument("--times", type=_parse_times, metavar="T1,T2,...")
    p.add_argument("--modes", type=_parse_modes, metavar="X,Y;X,Y;...")
    p.add_argument("--track-band", dest="track_band", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--d", dest="d", type=int)
    p.add_argument("--source", choices=("oracle", "mc"))
    p.add_argument("--fit-lo", dest="fit_lo", type=float)
    p.add_argument("--fit-hi", dest="fit_hi", type=float)
    p.add_argument("--rings", type=int)
    p.add_argument("--per-ring", dest="per_ring", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--z-max", dest="z_max", type=float)
    p.add_argument("--exp-tol", dest="exp_tol", type=float)
    p.add_argument("--ratio-band", dest="ratio_band", type=float)
    p.add_argument("--s", dest="s", type=float)
    p.add_argument("--expansion", choices=("first_order", "second_order", "direct"))
    p.add_argument("--stepper", choices=("euler", "midpoint"))
    p.add_argument("--amplitude", type=float)
    p.add_argument("--norm-sigma", dest="norm_sigma", type=float)
    p.add_argument("--blowup-guard", dest="blowup_guard", type=float)
    p.add_argument("--lower-limit", dest="lower_limit", choices=("zero", "minus_infinity"))
    p.add_argument("--T-burn", dest="T_burn", type=float)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="torusmc",
        description="Monte-Carlo experiments for renormalized stochastic wave/heat objects on the 2-torus",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in harness.EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_override_flags(p)
    p = sub.add_parser("validate", help="validate a config without running it")
    _add_override_flags(p)
    p.add_argument("--experiment", choices=harness.EXPERIMENTS,
                   help="experiment to validate (if not given by config/catalog)")
    sub.add_parser("list", help="print the standing experiment catalog")
    return ap


def _collect_config(args, experiment):
    mapping = {}
    if args.catalog:
        mapping.update(harness.catalog_entry(args.catalog).config)
    if args.config:
        mapping.update(harness.load_config(args.config))
    if experiment is not None:
        file_exp = mapping.get("experiment")
        if file_exp is not None and file_exp != experiment:
            raise ConfigError(
                f"config names experiment={file_exp!r} but the {experiment!r} subcommand was invoked"
            )
        mapping["experiment"] = experiment
    for name in ExperimentConfig.field_names():
        val = getattr(args, name, None)
        if val is not None and name != "experiment":
            mapping[name] = val
    return ExperimentConfig.from_mapping(mapping)


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.command == "list":
        print("standing experiments (run with --catalog NAME or the matching configs/*.toml):")
        for line in harness.catalog_lines():
            print("  " + line)
        return EXIT_OK

    try:
        if args.command == "validate":
            cfg = _collect_config(args, getattr(args, "experiment", None))
            cfg = harness.apply_defaults(cfg)
            errors, warnings = harness.validate_config(cfg)
            for w in warnings:
                print(f"warning: {w}")
            if errors:
                for e in errors:
                    print(f"error: {e}", file=sys.stderr)
                return EXIT_USAGE
            print("config ok")
            return EXIT_OK

        cfg = _collect_config(args, args.command)
        bundle = harness.run(cfg)
    except (ConfigError, ValueError) as exc:
        # the library raises ValueError for contract violations (resolution
        # guards, empty fit windows, grid mismatches): all usage errors here
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    csv_path = harness.write_bundle(bundle, bundle.config.out)
    for w in bundle.summary.get("warnings", ()):
        print(f"warning: {w}")
    verdict = "PASS" if bundle.passed else "FAIL"
    headline = {
        "moments": lambda s: f"max |z| = {s['max_abs_z']:.3g} (limit {s['z_max']})",
        "fit": lambda s: f"s0 = {s['s0']:.4f} vs predicted {s['predicted']} (tol {s['tolerance']})",
        "diverge": lambda s: f"classified {s['classification']} (predicted {s['predicted_classification']})",
        "sharpness": lambda s: f"ratio spread {s['spread']:.3g} (band {s['ratio_band']})",
        "cauchy": lambda s: f"rungs {['%.3g' % d for d in s['mean_sq_diffs']]} decreasing={s['decreasing']}",
        "solve": lambda s: f"covered T={s['covered_T']:.4g} blowup={s['blowup']}",
        "reconstruct": lambda s: (
            f"rel err {s['rel_sup_coarse']:.3g} -> {s['rel_sup_fine']:.3g} under h/2 "
            f"(tol {s['tolerance']})"
        ),
    }[bundle.config.experiment](bundle.summary)
    print(f"{bundle.config.experiment}: {headline} -> {verdict}")
    print(f"wrote {csv_path} (+ summary.json, meta.json)")
    return EXIT_OK if bundle.passed else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
