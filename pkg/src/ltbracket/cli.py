"""ltbracket command line.

    ltbracket validate    --data FILE
    ltbracket analyze     --data FILE [--bootstrap B --seed S]
    ltbracket dominance   --data FILE [--alpha A]
    ltbracket sensitivity --data FILE [--rho-min --rho-max --steps --target]
    ltbracket tests       --data FILE --bootstrap B --seed S
    ltbracket simulate    --dgp CONFIG|PRESET --seed S [--reps R]

Every command writes its artifacts plus ``manifest.json`` to ``--out``.
Exit status: 0 ok, 1 usage, 2 data/validation, 3 numerical failure; failures
print one ``ltbracket:error:<kind>:<message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import __version__
from .bracketing import DominanceConfig, bracket_report
from .data import Schema, filter_subgroup, load_csv, parse_predicate, to_csv, validate
from .dgp import PRESETS, generate, load_spec, to_observed
from .dominance import dominance_report
from .errors import DataError, EstimationError, SpecError
from .estimands import estimate_experimental
from .inference import BootstrapSpec, bootstrap, lalonde_tests, standard_errors
from .montecarlo import McConfig, monte_carlo
from .report import csv_text, sha256_file, write_json, write_text
from .sensitivity import PhiSpec, sensitivity_curve

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Outputs:
    """Writes artifacts into one directory and remembers their digests."""

    def __init__(self, root: Path):
        self.root = root
        self.digests: dict[str, str] = {}

    def json(self, name: str, obj) -> None:
        self.digests[name] = write_json(self.root / name, obj)

    def text(self, name: str, text: str) -> None:
        self.digests[name] = write_text(self.root / name, text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _seed(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return n


def _alpha(text: str) -> float:
    a = float(text)
    if not 0.0 < a < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must be in (0, 1), got {a}")
    return a


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ltbracket", description="Long-term ATT bracketing from combined experimental and observational data.")
    p.add_argument("--version", action="version", version=f"ltbracket {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True, help="combined CSV with columns g, w, y1, y2")
            sp.add_argument("--subgroup", default=None, help="k=v[,k=v...] filter on label columns")
            sp.add_argument("--col-group", default="g")
            sp.add_argument("--col-treatment", default="w")
            sp.add_argument("--col-y1", default="y1")
            sp.add_argument("--col-y2", default="y2")
        sp.add_argument("--out", default=".", help="output directory (created if missing)")
        sp.add_argument("--alpha", type=_alpha, default=0.05, help="significance level for bands, CIs and tests")

    def boot(sp, required=False):
        sp.add_argument("--bootstrap", type=_positive_int, required=required, metavar="B", help="bootstrap replicates")
        sp.add_argument("--seed", type=_seed, default=None, metavar="S")
        sp.add_argument("--threads", type=_positive_int, default=1, metavar="N")

    sp = sub.add_parser("validate", help="cell counts and overlap check")
    common(sp)

    sp = sub.add_parser("analyze", help="naive, LU, ECB (and experimental) estimates with the bracket")
    common(sp)
    boot(sp)
    sp.add_argument("--grid-size", type=_positive_int, default=None, help="dominance grid size (default: pooled support)")
    sp.add_argument("--tol", type=float, default=0.0, help="dominance verdict tolerance")

    sp = sub.add_parser("dominance", help="ECDFs of untreated y1 in both sources and the dominance verdict")
    common(sp)
    sp.add_argument("--grid-size", type=_positive_int, default=None)
    sp.add_argument("--tol", type=float, default=0.0)

    sp = sub.add_parser("sensitivity", help="ECB estimate under departures from the martingale process")
    common(sp)
    sp.add_argument("--rho-min", type=float, default=0.5)
    sp.add_argument("--rho-max", type=float, default=1.0)
    sp.add_argument("--steps", type=_positive_int, default=51)
    sp.add_argument("--target", type=float, default=None, help="default: the experimental estimate when y2 is present in E")

    sp = sub.add_parser("tests", help="LU and ECB against the experimental benchmark")
    common(sp)
    boot(sp, required=True)

    sp = sub.add_parser("simulate", help="draw from a DGP; with --reps run a Monte Carlo study")
    common(sp, data=False)
    sp.add_argument("--dgp", required=True, help=f"JSON config or preset ({', '.join(PRESETS)})")
    sp.add_argument("--seed", type=_seed, default=None, metavar="S")
    sp.add_argument("--reps", type=_positive_int, default=None, metavar="R")
    sp.add_argument("--mask-experimental-y2", type=_bool, default=True, metavar="{true|false}")
    sp.add_argument("--bootstrap", type=_positive_int, default=None, metavar="B", help="per-replication bootstrap")
    sp.add_argument("--threads", type=_positive_int, default=1, metavar="N")
    return p


def _load(args):
    schema = Schema(args.col_group, args.col_treatment, args.col_y1, args.col_y2)
    try:
        d = load_csv(args.data, schema)
    except OSError as exc:
        raise DataError(f"cannot read {args.data}: {exc.strerror or exc}") from None
    return filter_subgroup(d, parse_predicate(args.subgroup))


def _require_valid(d):
    report = validate(d)
    if not report.overlap_ok:
        raise DataError("validation failed: " + "; ".join(report.messages))
    return report


def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command}: --seed is required for resampling or simulation")


def _boot_spec(args) -> BootstrapSpec:
    return BootstrapSpec(args.bootstrap, args.seed, 1.0 - args.alpha, args.threads)


def cmd_validate(args, out: Outputs) -> dict:
    d = _load(args)
    report = validate(d)
    out.json("validation.json", {"rows": len(d), **report.to_dict()})
    print(f"rows={len(d)} overlap_ok={str(report.overlap_ok).lower()}")
    if not report.overlap_ok:
        return {"failure": "validation failed: " + "; ".join(report.messages)}
    return {}


def cmd_analyze(args, out: Outputs) -> dict:
    d = _load(args)
    _require_valid(d)
    dist = None
    if args.bootstrap is not None:
        _require_seed(args)
        dist = bootstrap(d, _boot_spec(args), strict=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        br = bracket_report(d, dist, DominanceConfig(args.grid_size, args.alpha, args.tol))
    est = br.estimates
    ses = standard_errors(dist) if dist is not None else {}
    rows = []
    table = {}
    for name, value in est.points().items():
        s = ses.get(name)
        entry = {"estimate": value, "se": None, "ci_low": None, "ci_high": None}
        if s is not None:
            entry.update(se=s.se, ci_low=s.ci_low, ci_high=s.ci_high)
        table[name] = entry
        rows.append([name, value, entry["se"], entry["ci_low"], entry["ci_high"]])
    m = est.moments
    doc = {
        "estimates": table,
        "bracket": br.to_dict(),
        "dominance": br.dominance.to_dict(),
        "psi": {
            "intercept": est.psi.psi_intercept,
            "slope": est.psi.psi_slope,
            "non_increasing": est.psi.non_increasing,
            "tolerance": est.psi.tolerance,
        },
        "control_fit": {"intercept": est.control_fit.intercept, "slope": est.control_fit.slope, "n": est.control_fit.n},
        "treat_prob_O": m.treat_prob["O"],
        "cell_counts": {f"{g},{w}": n for (w, g), n in m.cell_n.items()},
        "bootstrap": None if dist is None else {
            "replicates": dist.spec.replicates,
            "seed": dist.spec.seed,
            "level": dist.spec.level,
            "failures": dist.failures,
            "aborted": dist.aborted,
            "low_replicates": dist.low_replicates,
            "se_lu_minus_ecb": br.se_difference,
        },
    }
    out.json("estimates.json", doc)
    out.text("estimates.csv", csv_text(["estimand", "estimate", "se", "ci_low", "ci_high"], rows))
    for name, entry in table.items():
        se = "" if entry["se"] is None else f"  se={entry['se']:.6g}"
        print(f"{name:<13}{entry['estimate']:.6g}{se}")
    if br.direction is not None:
        print(f"bracket [{br.lower:.6g}, {br.upper:.6g}] direction {br.direction}")
    return {}


def cmd_dominance(args, out: Outputs) -> dict:
    d = _load(args)
    _require_valid(d)
    dom = dominance_report(d, args.grid_size, args.alpha, args.tol)
    out.text("dominance.csv", csv_text(["y", "F_O", "F_E", "band_O", "band_E"], dom.table()))
    out.json("dominance.json", dom.to_dict())
    print(f"verdict={dom.verdict.value} tie={str(dom.tie).lower()} max_violation={dom.max_violation:.6g}")
    return {}


def cmd_sensitivity(args, out: Outputs) -> dict:
    d = _load(args)
    _require_valid(d)
    target = args.target
    target_source = "argument"
    if target is None and d.has_experimental_y2():
        target, target_source = estimate_experimental(d), "experimental"
    curve = sensitivity_curve(d, PhiSpec.linear(), args.rho_min, args.rho_max, args.steps, target)
    out.text("sensitivity.csv", csv_text(["rho", "delta", "adjusted_estimate"], curve.table()))
    out.json("sensitivity.json", {**curve.to_dict(), "phi": "linear", "target_source": target_source if target is not None else None})
    msg = f"baseline_ecb={curve.baseline:.6g}"
    if curve.rho_star is not None:
        msg += f" rho_star={curve.rho_star:.6g}"
    print(msg)
    return {}


def cmd_tests(args, out: Outputs) -> dict:
    _require_seed(args)
    d = _load(args)
    _require_valid(d)
    if not d.has_experimental_y2():
        raise DataError("tests need y2 on every experimental row")
    spec = _boot_spec(args)
    results = lalonde_tests(d, spec)
    rows, docs = [], []
    for t in results:
        reject = t.p_value < args.alpha
        docs.append({**t.to_dict(), "reject": reject})
        rows.append([t.null, t.statistic, t.p_value, "reject" if reject else "fail to reject"])
        print(f"{t.null}: t={t.statistic:.4g} p={t.p_value:.4g}")
    out.json("tests.json", {"alpha": args.alpha, "replicates": spec.replicates, "seed": spec.seed, "tests": docs})
    out.text("tests.csv", csv_text(["null", "statistic", "p_value", "decision"], rows))
    return {}


def cmd_simulate(args, out: Outputs) -> dict:
    _require_seed(args)
    spec = load_spec(args.dgp)
    panel = generate(spec, args.seed)
    d = to_observed(panel, args.mask_experimental_y2)
    out.text("simulated.csv", to_csv(d))
    print(f"simulated {len(d)} rows from {spec.name or spec.family}")
    if args.reps is None:
        return {"dgp": spec.to_dict()}
    boot = None if args.bootstrap is None else BootstrapSpec(args.bootstrap, 0, 1.0 - args.alpha)
    config = McConfig(
        dominance_alpha=args.alpha,
        bootstrap=boot,
        lalonde=boot is not None and not args.mask_experimental_y2,
        test_level=args.alpha,
        threads=args.threads,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = monte_carlo(spec, args.reps, args.seed, config)
    out.json("mc_report.json", rep.to_dict())
    rows = rep.summary_rows()
    cols = ["estimand", "mean", "bias", "sd", "rmse", "mc_se"] + (["coverage"] if rows and "coverage" in rows[0] else [])
    out.text("mc_summary.csv", csv_text(cols, [[r.get(c) for c in cols] for r in rows]))
    for r in rows:
        print(f"{r['estimand']:<13}bias={r['bias']:.4g} mc_se={r['mc_se']:.3g}")
    return {"dgp": spec.to_dict()}


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "dominance": cmd_dominance,
    "sensitivity": cmd_sensitivity,
    "tests": cmd_tests,
    "simulate": cmd_simulate,
}

# settings that never change results; kept out of the manifest so outputs are
# byte-identical across worker counts and output locations
_NOT_IN_MANIFEST = {"threads", "out", "command"}


def _manifest(args, extra: dict, artifacts: dict) -> dict:
    if args.command == "simulate":
        path = Path(args.dgp)
        digest = sha256_file(path) if path.is_file() else None
        source = {"dgp": args.dgp, "sha256": digest}
    else:
        source = {"data": args.data, "sha256": sha256_file(args.data)}
    params = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_IN_MANIFEST}
    return {
        "tool": "ltbracket",
        "version": __version__,
        "command": args.command,
        "input": source,
        "seed": getattr(args, "seed", None),
        "parameters": params,
        **extra,
        "artifacts": artifacts,
    }


def _fail(kind: str, code: int, message: str) -> int:
    line = " ".join(str(message).split())
    print(f"ltbracket:error:{kind}:{line}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    try:
        root = Path(args.out)
        root.mkdir(parents=True, exist_ok=True)
        out = Outputs(root)
        extra = COMMANDS[args.command](args, out)
        failure = extra.pop("failure", None)
        write_json(root / "manifest.json", _manifest(args, extra, dict(sorted(out.digests.items()))))
        if failure:
            raise DataError(failure)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except (DataError, SpecError) as exc:
        return _fail("data", EXIT_DATA, exc)
    except EstimationError as exc:
        return _fail("numerical", EXIT_NUMERIC, exc)
    except ValueError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except OSError as exc:
        return _fail("io", EXIT_DATA, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
