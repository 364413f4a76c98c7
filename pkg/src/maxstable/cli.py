"""Command-line interface.

    maxstable simulate CONFIG --seed S --out FILE [--n-rep N] [--locs CSV]
    maxstable exponent CONFIG --seed S [--method mc|tilts|exact] [--thresholds CSV]
    maxstable check {max-stability,stationarity,equivalence,zonoid} CONFIG --seed S
    maxstable replay MANIFEST

Exit codes: 0 success / consistent, 1 usage or input error, 2 inconsistent
verdict (or a replay that does not reproduce its outputs).

Every run writes a manifest (JSON) holding the command, its arguments, the
contents and digests of the input files, the seed, the tool version, the wall
clock and the digests of the primary outputs. ``replay`` re-runs from the
manifest and compares digests. Seeds are always explicit; no environment
variable supplies a default.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .config import ConfigError, load_config, load_toml
from .core import read_locations_csv, read_thresholds_csv
from .equivalence import (
    augmented_identifiability_test,
    bonferroni_z,
    functional_equivalence_test,
    stationarity_test,
    zonoid_test,
)
from .fidi import ExponentRequest, SingularModelError, fidi
from .fixtures import vector_samples
from .simulate import (
    CascadeConfig,
    check_max_stability,
    simulate_maxstable,
    write_replicates_binary,
    write_replicates_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_INCONSISTENT = 0, 1, 2
INPUT_FLAGS = ("config", "other", "locs", "thresholds")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path):
    with open(path, "rb") as fh:
        return _sha256_bytes(fh.read())


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# -- shared helpers ----------------------------------------------------------------


def _run_config(args):
    cfg = load_config(args.config)
    locs = read_locations_csv(args.locs) if getattr(args, "locs", None) else cfg.locations
    if locs is None:
        raise ConfigError(f"{args.config}: no [locations] section and no --locs given")
    return cfg, locs


def _emit(text, args, outputs):
    """Write primary JSON output to --out (if given) and stdout."""
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
        outputs["out"] = _sha256_file(args.out)
    else:
        outputs["stdout"] = _sha256_bytes(text.encode())
    sys.stdout.write(text)


# -- commands ----------------------------------------------------------------------


def cmd_simulate(args, outputs):
    cfg, locs = _run_config(args)
    cascade = cfg.cascade
    if args.max_points is not None:
        cascade = CascadeConfig(args.max_points, cascade.tail_guard, cascade.report_truncation, cascade.pilot_size)
    res = simulate_maxstable(cfg.spec, locs, cascade, args.n_rep, args.seed, workers=args.workers)
    fmt = args.format or ("binary" if args.out.endswith(".bin") else "csv")
    if fmt == "csv":
        write_replicates_csv(res.values, args.out)
    else:
        write_replicates_binary(res.values, args.out)
    outputs["out"] = _sha256_file(args.out)
    print(f"replicates      {len(res)}")
    print(f"components x n  {cfg.spec.d} x {locs.n}")
    print(f"truncated       {int(res.truncated.sum())} ({res.truncated_fraction:.3%})")
    print(f"mean atoms      {res.n_atoms.mean():.1f}")
    print(f"output          {args.out} ({fmt})")
    return EXIT_OK


def cmd_exponent(args, outputs):
    cfg, locs = _run_config(args)
    th = read_thresholds_csv(args.thresholds) if args.thresholds else cfg.thresholds
    if th is None:
        raise ConfigError(f"{args.config}: no [thresholds] section and no --thresholds given")
    req = ExponentRequest(cfg.spec, locs, th, args.method, args.n_rep, args.seed, args.target_rel_err, args.workers)
    res = fidi(req)
    out = res.to_dict()
    out["settings"] = {
        "n_rep": args.n_rep,
        "seed": args.seed,
        "target_rel_err": args.target_rel_err,
        "locations": locs.points.tolist(),
        "thresholds": [[v if np.isfinite(v) else "inf" for v in row] for row in th.x.tolist()],
    }
    text = _dumps(out)
    _emit(text, args, outputs)
    print(f"# {'method':<12}{'exponent':>22}{'stderr':>14}{'probability':>22}", file=sys.stderr)
    print(f"# {args.method:<12}{res.exponent.value:>22.15g}{res.exponent.stderr:>14.4g}{res.probability:>22.15g}",
          file=sys.stderr)
    return EXIT_OK


def _check_max_stability(args, cfg, locs):
    th = cfg.thresholds
    if th is None:
        th = np.ones((cfg.spec.d, locs.n))
    cs = cfg.check.get("c", [0.5, 2.0, 3.0])
    res = simulate_maxstable(cfg.spec, locs, cfg.cascade, args.n_rep, args.seed, workers=args.workers)
    reports = [check_max_stability(res, c, th) for c in cs]
    z_crit = args.z_crit if args.z_crit is not None else bonferroni_z(len(reports), args.level)
    bad = any(abs(r.z) > z_crit for r in reports)
    return {
        "decision": "inconsistent" if bad else "consistent",
        "z_crit": z_crit,
        "reports": [r.to_dict() for r in reports],
        "truncated_fraction": res.truncated_fraction,
    }


def _check_stationarity(args, cfg, locs):
    p = cfg.spec.p
    shifts = cfg.check.get("shifts", [list(0.5 * e) for e in np.eye(p)] + [list(e) for e in np.eye(p)])
    v = stationarity_test(cfg.spec, shifts, locs, n_rep=args.n_rep, seed=args.seed, z_crit=args.z_crit,
                          level=args.level, workers=args.workers)
    return v.to_dict()


def _check_equivalence(args, cfg, locs):
    if not args.other:
        raise UsageError("check equivalence needs --other CONFIG for the second model")
    other = load_config(args.other)
    v = functional_equivalence_test(cfg.spec, other.spec, locs=locs, n_rep=args.n_rep, seed=args.seed,
                                    z_crit=args.z_crit, level=args.level, workers=args.workers)
    return v.to_dict()


def _check_zonoid(args):
    raw = load_toml(args.config)
    if "zonoid" not in raw:
        raise ConfigError(f"{args.config}: missing required section [zonoid]")
    z = raw["zonoid"]
    n = int(z.get("n", args.n_rep))
    samples = []
    for key in ("a", "b"):
        if key not in z:
            raise ConfigError(f"{args.config}: zonoid: missing required table '{key}'")
        t = z[key]
        try:
            samples.append(vector_samples(t.get("kind", "constant"), t["value"], n, args.seed + (key == "b"),
                                          t.get("prob", 0.5)))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{args.config}: zonoid.{key}: {exc}") from None
    mode = args.mode or z.get("mode", "both")
    augmented = args.augmented or bool(z.get("augmented", False))
    modes = ["zonoid", "max-zonoid"] if mode == "both" else [mode]
    test = augmented_identifiability_test if augmented else zonoid_test
    verdicts = {m: test(samples[0], samples[1], mode=m, z_crit=args.z_crit, level=args.level, seed=args.seed)
                for m in modes}
    decisions = {m: v.decision for m, v in verdicts.items()}
    bad = any(d == "inconsistent" for d in decisions.values())
    return {
        "decision": "inconsistent" if bad else "consistent",
        "augmented": augmented,
        "modes": {m: v.to_dict() for m, v in verdicts.items()},
        "cross_mode_agreement": len(set(decisions.values())) == 1,
    }


def cmd_check(args, outputs):
    if args.kind == "zonoid":
        result = _check_zonoid(args)
    else:
        cfg, locs = _run_config(args)
        fn = {
            "max-stability": _check_max_stability,
            "stationarity": _check_stationarity,
            "equivalence": _check_equivalence,
        }[args.kind]
        result = fn(args, cfg, locs)
    result["kind"] = args.kind
    result["seed"] = args.seed
    _emit(_dumps(result), args, outputs)
    print(f"# {args.kind}: {result['decision']}", file=sys.stderr)
    return EXIT_INCONSISTENT if result["decision"] == "inconsistent" else EXIT_OK


def cmd_replay(args, outputs):
    with open(args.manifest_file) as fh:
        man = json.load(fh)
    saved = man["args"]
    for flag, info in man.get("inputs", {}).items():
        if not os.path.exists(info["path"]) or _sha256_file(info["path"]) != info["sha256"]:
            raise UsageError(f"input --{flag} {info['path']} is missing or changed since the run")
    with tempfile.TemporaryDirectory() as tmp:
        ns = argparse.Namespace(**saved)
        if saved.get("out"):
            ns.out = os.path.join(tmp, os.path.basename(saved["out"]))
        ns.manifest = os.path.join(tmp, "replay.manifest.json")
        new_outputs = {}
        devnull = open(os.devnull, "w")
        old = sys.stdout, sys.stderr
        sys.stdout = sys.stderr = devnull
        try:
            _COMMANDS[man["command"]](ns, new_outputs)
        finally:
            sys.stdout, sys.stderr = old
            devnull.close()
    same = new_outputs == man["outputs"]
    print(_dumps({"reproduced": same, "expected": man["outputs"], "observed": new_outputs}), end="")
    return EXIT_OK if same else EXIT_INCONSISTENT


_COMMANDS = {"simulate": cmd_simulate, "exponent": cmd_exponent, "check": cmd_check, "replay": cmd_replay}


# -- parser -------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="maxstable", description="Simulate and evaluate multivariate max-stable processes.")
    p.add_argument("--version", action="version", version=f"maxstable {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=False):
        sp.add_argument("--seed", type=int, required=True, help="64-bit seed (required)")
        sp.add_argument("--n-rep", type=int, default=100_000, help="replicates (default 100000)")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", required=out_required, help="primary output file")
        sp.add_argument("--manifest", help="manifest path (default: OUT.manifest.json, else stderr)")

    s = sub.add_parser("simulate", help="replicates of X at a location set")
    s.add_argument("config")
    s.add_argument("--locs", help="locations CSV (overrides [locations])")
    s.add_argument("--format", choices=("csv", "binary"))
    s.add_argument("--max-points", type=int)
    common(s, out_required=True)
    s.set_defaults(n_rep=1000)

    e = sub.add_parser("exponent", help="exponent functional and fidi probability")
    e.add_argument("config")
    e.add_argument("--method", choices=("mc", "tilts", "exact"), default="exact")
    e.add_argument("--thresholds", help="thresholds CSV (overrides [thresholds])")
    e.add_argument("--locs", help="locations CSV (overrides [locations])")
    e.add_argument("--target-rel-err", type=float, default=1e-4)
    common(e)

    c = sub.add_parser("check", help="statistical verification; exit 2 when inconsistent")
    c.add_argument("kind", choices=("max-stability", "stationarity", "equivalence", "zonoid"))
    c.add_argument("config")
    c.add_argument("--other", help="second model config (equivalence)")
    c.add_argument("--locs", help="locations CSV (overrides [locations])")
    c.add_argument("--mode", choices=("zonoid", "max-zonoid", "both"))
    c.add_argument("--augmented", action="store_true", help="prepend a constant-1 coordinate (zonoid)")
    c.add_argument("--z-crit", type=float, help="fixed critical |z| (default: Bonferroni at --level)")
    c.add_argument("--level", type=float, default=1e-3, help="familywise level (default 1e-3)")
    common(c)

    r = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    r.add_argument("manifest_file")
    return p


def _manifest(args, argv, outputs, started, elapsed):
    inputs = {}
    for flag in INPUT_FLAGS:
        path = getattr(args, flag, None)
        if path:
            with open(path, "rb") as fh:
                data = fh.read()
            inputs[flag] = {
                "path": os.path.abspath(path),
                "sha256": _sha256_bytes(data),
                "content": data.decode("utf-8", errors="replace"),
            }
    saved = {k: v for k, v in vars(args).items() if k != "func"}
    for flag in INPUT_FLAGS:
        if saved.get(flag):
            saved[flag] = os.path.abspath(saved[flag])
    if saved.get("out"):
        saved["out"] = os.path.abspath(saved["out"])
    return {
        "command": args.command,
        "argv": argv,
        "args": saved,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "started": started,
        "wall_clock_seconds": elapsed,
        "inputs": inputs,
        "outputs": outputs,
    }


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    outputs = {}
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    t0 = time.perf_counter()
    try:
        code = _COMMANDS[args.command](args, outputs)
    except (ConfigError, UsageError, SingularModelError, ValueError, TypeError, OSError) as exc:
        print(f"maxstable: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command != "replay":
        man = _dumps(_manifest(args, argv, outputs, started, time.perf_counter() - t0))
        target = args.manifest or (f"{args.out}.manifest.json" if getattr(args, "out", None) else None)
        if target:
            with open(target, "w") as fh:
                fh.write(man)
        else:
            sys.stderr.write(man)
    return code


if __name__ == "__main__":
    sys.exit(main())
