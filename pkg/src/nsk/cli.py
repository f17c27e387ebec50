"""Command-line interface: ``nsk <command> [options]``.

Every command accepts ``--config FILE``, ``--seed S`` and ``--threads T``.
The config file is flat ``key = value`` text (an optional ``[nsk]`` section
applies to every command, a section named after the command, e.g.
``[simulate]`` or ``[kernel-hom]``, applies to that command only). Keys are
long option names with or without dashes. Command-line flags override the
file. ``NSK_SEED`` supplies the seed when ``--seed`` is absent.

Files written by the tool start with ``#`` header lines giving the tool
version, a hash of the resolved configuration and the seed, followed by the
configuration itself. Re-running with those values reproduces the file
byte for byte; ``--threads`` never changes results and is not part of the
hash.

Exit status: 0 on success, 1 on usage or input errors, 2 on numerical
failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NSKError, NumericalBreakdown
from .experiments import DEPTHS, QQ_WIDTHS, WIDTHS, depth_sweep, gaussianity, width_sweep
from .kernel_hom import discrete_surface, gram_hom, sig_kernel_surface, sig_series_oracle
from .kernel_inhom import KernelParams, gram, solve_ode
from .paths import SYNTH_KINDS, Partition, read_csv, synth_path, write_csv
from .resnet import MODES, SimConfig, mc_ensemble
from .vphi import Activation, Psd2, v_phi, v_phi_quadrature

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_NUMERIC"]

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
ACTIVATIONS = ("id", "relu", "erf")
# Arguments that never influence results and are left out of the config hash.
_UNHASHED = {"config", "threads", "out", "trajectory", "summary", "qq_dir", "out_dir", "handler", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# ---------------------------------------------------------------------------
# Argument types


def _floats(text, n=None):
    try:
        vals = [float(p) for p in str(text).split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _triple(text):
    return _floats(text, 3)


def _ints(text):
    try:
        vals = [int(p) for p in str(text).split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _files(text):
    return [p for p in str(text).split(",") if p]


# ---------------------------------------------------------------------------
# Output helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _resolved(args):
    return {
        k: v for k, v in sorted(vars(args).items()) if k not in _UNHASHED and not callable(v)
    }


def _meta(args):
    cfg = _resolved(args)
    text = json.dumps(cfg, sort_keys=True)
    return {
        "tool": "nsk",
        "version": __version__,
        "config_hash": hashlib.sha256(text.encode()).hexdigest()[:16],
        "seed": args.seed,
        "config": cfg,
    }


def _header_lines(args):
    m = _meta(args)
    return [
        f"# nsk {m['version']} config={m['config_hash']} seed={m['seed']}",
        "# config " + json.dumps(m["config"], sort_keys=True),
    ]


def _csv_text(args, columns, rows):
    buf = io.StringIO()
    for line in _header_lines(args):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _write(dest, text):
    if dest is None or dest == "-":
        sys.stdout.write(text)
        return
    Path(dest).parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json_text(args, payload):
    return json.dumps({"meta": _meta(args), **payload}, indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


# ---------------------------------------------------------------------------
# Shared builders


def _params(args):
    a, A, b = args.params
    return KernelParams(a, A, b, Activation.from_name(args.activation))


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"nsk {args.command}: error: missing required option(s) {flags}")


def _xy(args):
    _require(args, "x")
    x = read_csv(args.x)
    y = read_csv(args.y) if args.y else x
    return x, y


# ---------------------------------------------------------------------------
# Commands


def cmd_vphi(args):
    _require(args, "sigma")
    sigma = Psd2(*args.sigma)
    act = Activation.from_name(args.activation)
    closed = v_phi(act, sigma)
    quad = v_phi_quadrature(act, sigma, nodes=args.quadrature)
    sys.stdout.write(f"{_fmt(closed)}\nquadrature {_fmt(quad)}\n")


def cmd_kernel_inhom(args):
    x, y = _xy(args)
    traj = solve_ode(x, y, _params(args), steps=args.steps, method=args.method)
    if args.trajectory:
        rows = traj.as_array()
        _write(args.trajectory, _csv_text(args, ["t", "k_xx", "k_xy", "k_yy"], rows))
    sys.stdout.write(_fmt(traj.value) + "\n")


def _surface_out(args, surf):
    text = _csv_text(args, ["s", "t", "value"], surf.rows())
    if args.out:
        _write(args.out, text)
        sys.stdout.write(_fmt(surf.corner) + "\n")
    else:
        _write(None, text)


def cmd_kernel_hom(args):
    x, y = _xy(args)
    D = Partition.uniform(args.grid)
    _surface_out(args, discrete_surface(x, y, D, D, _params(args)))


def cmd_kernel_sig(args):
    x, y = _xy(args)
    D = Partition.uniform(args.grid)
    _surface_out(args, sig_kernel_surface(x, y, D, D))


def cmd_kernel_oracle(args):
    x, y = _xy(args)
    res = sig_series_oracle(x, y, args.s, args.t, args.level)
    out = f"value {_fmt(res.value)}\ntail_bound {_fmt(res.tail_bound)}\n"
    if res.warning:
        out += "warning tail bound exceeds 1; raise --level\n"
    sys.stdout.write(out)


def cmd_gram(args):
    _require(args, "paths")
    paths = [read_csv(p) for p in args.paths]
    params = _params(args)
    if args.family == "inhom":
        G = gram(paths, params, steps=args.steps, workers=args.threads)
    else:
        G = gram_hom(paths, params, grid_M=args.grid, workers=args.threads)
    cols = [f"path_{j}" for j in range(len(paths))]
    _write(args.out, _csv_text(args, cols, G))


def cmd_paths_synth(args):
    params = {}
    if args.direction is not None:
        params["direction"] = args.direction
    path = synth_path(args.kind, args.dim, args.n_samples, params, seed=args.seed)
    _write(args.out, "\n".join(_header_lines(args)) + "\n" + write_csv(path))


def cmd_paths_ingest(args):
    _require(args, "input")
    path = read_csv(args.input)
    _write(args.out, "\n".join(_header_lines(args)) + "\n" + write_csv(path))


def cmd_simulate(args):
    _require(args, "paths")
    paths = [read_csv(p) for p in args.paths]
    cfg = SimConfig(
        args.width, Partition.uniform(args.depth), args.mode, _params(args), args.seed, paths[0].dim
    )
    ens = mc_ensemble(cfg, paths, args.realizations, threads=args.threads)
    n = len(paths)
    rows = [
        (r, i, j, ens.inner_products[r, i, j], ens.readout_samples[r, i])
        for r in range(args.realizations)
        for i in range(n)
        for j in range(i, n)
    ]
    cols = ["realization", "path_i", "path_j", "inner_product", "readout_i"]
    _write(args.out, _csv_text(args, cols, rows))


def _optional_paths(args):
    return [read_csv(p) for p in args.paths] if args.paths else None


def _run_width(args):
    return width_sweep(
        _optional_paths(args),
        args.widths,
        args.realizations,
        args.depth,
        _params(args),
        args.seed,
        args.threads,
    )


def _width_outputs(args, res, out, summary):
    rows = [(r["N"], r["statistic"], r["stderr"]) for r in res.rows()]
    _write(out, _csv_text(args, ["N", "statistic", "stderr"], rows))
    payload = {
        "statistic": "mse",
        "slope": res.fit.slope,
        "intercept": res.fit.intercept,
        "r_squared": res.fit.r_squared,
        "threshold": {"slope": list(res.slope_window), "r_squared": res.min_r_squared},
        "target": res.target.tolist(),
        "rows": res.rows(),
        "pass": res.passed,
    }
    text = _json_text(args, _jsonable(payload))
    if summary:
        _write(summary, text)
    elif out:
        sys.stdout.write(text)


def cmd_converge_width(args):
    _width_outputs(args, _run_width(args), args.out, args.summary)


def _run_qq(args):
    path = read_csv(args.path) if args.path else None
    return gaussianity(
        path,
        args.widths,
        args.realizations,
        args.depth,
        _params(args),
        args.seed,
        args.reference_depth,
        args.threads,
    )


def _qq_outputs(args, res, out, summary, qq_dir):
    rows = [(r["N"], r["statistic"], r["threshold"], r["pass"]) for r in res.rows()]
    _write(out, _csv_text(args, ["N", "statistic", "threshold", "pass"], rows))
    if qq_dir:
        for N, pts in zip(res.widths, res.qq):
            _write(Path(qq_dir) / f"qq_N{N}.csv", _csv_text(args, ["theoretical", "empirical"], pts))
    payload = {
        "statistic": "ks",
        "variance": res.variance,
        "rows": res.rows(),
        "monotone": res.monotone,
        "pass": res.passed,
    }
    text = _json_text(args, _jsonable(payload))
    if summary:
        _write(summary, text)
    elif out:
        sys.stdout.write(text)


def cmd_gaussianity(args):
    _qq_outputs(args, _run_qq(args), args.out, args.summary, args.qq_dir)


def cmd_converge_depth(args):
    path = read_csv(args.path) if args.path else None
    res = depth_sweep(
        path,
        args.depths,
        args.realizations,
        args.width,
        args.reference_depth,
        _params(args),
        args.seed,
        args.threads,
    )
    rows = [(r["M"], r["statistic"]) for r in res.rows()]
    _write(args.out, _csv_text(args, ["M", "statistic"], rows))
    payload = {
        "statistic": "wasserstein1",
        "reference_depth": res.reference_depth,
        "slope": res.fit.slope,
        "intercept": res.fit.intercept,
        "r_squared": res.fit.r_squared,
        "threshold": {"slope": list(res.slope_window)},
        "rows": res.rows(),
        "pass": res.passed,
    }
    text = _json_text(args, _jsonable(payload))
    if args.summary:
        _write(args.summary, text)
    elif args.out:
        sys.stdout.write(text)


def cmd_reproduce(args):
    out_dir = Path(args.out_dir)
    if args.figure == "fig-mse":
        args.params, args.activation = args.params or [1.0, 1.0, 0.0], args.activation or "id"
        args.paths, args.widths, args.realizations, args.depth = None, list(WIDTHS), 250, 200
        res = _run_width(args)
        _width_outputs(args, res, out_dir / "fig_mse.csv", out_dir / "fig_mse.json")
        sys.stdout.write(f"fig-mse slope {_fmt(res.fit.slope)} pass {_fmt(res.passed)}\n")
    else:
        args.params, args.activation = args.params or [0.5, 1.0, 1.2], args.activation or "relu"
        args.path, args.widths, args.realizations = None, list(QQ_WIDTHS), 250
        args.depth, args.reference_depth = 100, 1000
        res = _run_qq(args)
        _qq_outputs(args, res, out_dir / "fig_qq.csv", out_dir / "fig_qq.json", out_dir)
        sys.stdout.write(f"fig-qq N=500 ks {_fmt(res.ks[-1].stat)} pass {_fmt(res.passed)}\n")


# ---------------------------------------------------------------------------
# Parser


def _common(p):
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument(
        "--seed",
        type=_seed,
        default=None,
        help="random seed (default: $NSK_SEED, else 0)",
    )
    p.add_argument(
        "--threads",
        type=_positive_int,
        default=1,
        help="worker threads for Monte Carlo and Gram assembly; never changes results (default 1)",
    )


def _kernel_opts(p, params="1,1,0", activation="id"):
    p.add_argument(
        "--params",
        type=_triple,
        default=params,
        help=f"sigma_a,sigma_A,sigma_b (default {params})",
    )
    p.add_argument("--activation", choices=ACTIVATIONS, default=activation, help=f"(default {activation})")


def _xy_opts(p):
    p.add_argument("--x", help="path CSV (time, x1..xd)")
    p.add_argument("--y", help="second path CSV (default: same as --x)")


def build_parser():
    parser = _Parser(prog="nsk", description="Neural signature kernels and controlled ResNet simulation.")
    parser.add_argument("--version", action="version", version=f"nsk {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    registry = {}

    def add(name, handler, help_text, parent=sub, key=None):
        p = parent.add_parser(name, help=help_text, description=help_text)
        _common(p)
        p.set_defaults(handler=handler)
        registry[key or name] = p
        return p

    p = add("vphi", cmd_vphi, "V_phi(Sigma): closed form, then quadrature")
    p.add_argument("--activation", choices=ACTIVATIONS, default="id", help="(default id)")
    p.add_argument("--sigma", type=_triple, help="v11,v12,v22")
    p.add_argument("--quadrature", type=_positive_int, default=200, help="quadrature nodes per axis (default 200)")

    kernel = registry.setdefault("kernel", sub.add_parser("kernel", help="kernel solvers"))
    ksub = kernel.add_subparsers(dest="kernel_command", metavar="kind", parser_class=_Parser)
    ksub.required = True

    p = add("inhom", cmd_kernel_inhom, "inhomogeneous kernel ODE", ksub, "kernel-inhom")
    _xy_opts(p)
    _kernel_opts(p)
    p.add_argument("--steps", type=_positive_int, default=1000, help="uniform steps before knot refinement (default 1000)")
    p.add_argument("--method", choices=("rk4", "euler"), default="rk4", help="(default rk4)")
    p.add_argument("--trajectory", help="write t,k_xx,k_xy,k_yy CSV here")

    p = add("hom", cmd_kernel_hom, "homogeneous two-parameter kernel surface", ksub, "kernel-hom")
    _xy_opts(p)
    _kernel_opts(p)
    p.add_argument("--grid", type=_positive_int, default=128, help="uniform grid size per axis (default 128)")
    p.add_argument("--out", help="surface CSV (s,t,value); stdout if omitted")

    p = add("sig", cmd_kernel_sig, "signature kernel surface", ksub, "kernel-sig")
    _xy_opts(p)
    p.add_argument("--grid", type=_positive_int, default=128, help="uniform grid size per axis (default 128)")
    p.add_argument("--out", help="surface CSV (s,t,value); stdout if omitted")

    p = add("oracle", cmd_kernel_oracle, "truncated signature-series kernel and tail bound", ksub, "kernel-oracle")
    _xy_opts(p)
    p.add_argument("--level", type=_positive_int, default=12, help="truncation level (default 12)")
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)

    p = add("gram", cmd_gram, "Gram matrix of kernel values at (1, 1)")
    p.add_argument("--family", choices=("inhom", "hom"), default="hom", help="(default hom)")
    p.add_argument("--paths", type=_files, help="comma-separated path CSVs")
    _kernel_opts(p)
    p.add_argument("--steps", type=_positive_int, default=1000, help="ODE steps for inhom (default 1000)")
    p.add_argument("--grid", type=_positive_int, default=128, help="grid size for hom (default 128)")
    p.add_argument("--out", help="matrix CSV; stdout if omitted")

    paths = registry.setdefault("paths", sub.add_parser("paths", help="path utilities"))
    psub = paths.add_subparsers(dest="paths_command", metavar="action", parser_class=_Parser)
    psub.required = True
    p = add("synth", cmd_paths_synth, "generate a synthetic path", psub, "paths-synth")
    p.add_argument("--kind", choices=SYNTH_KINDS, default="line", help="(default line)")
    p.add_argument("--dim", type=_positive_int, default=1, help="(default 1)")
    p.add_argument("--n-samples", type=_positive_int, default=100, help="(default 100)")
    p.add_argument("--direction", type=_floats, help="direction vector for --kind line")
    p.add_argument("--out", help="path CSV; stdout if omitted")
    p = add("ingest", cmd_paths_ingest, "normalise a raw CSV into a path", psub, "paths-ingest")
    p.add_argument("--input", help="raw CSV (time, v1..vd)")
    p.add_argument("--out", help="path CSV; stdout if omitted")

    p = add("simulate", cmd_simulate, "Monte Carlo ensemble of random controlled ResNets")
    p.add_argument("--mode", choices=MODES, default="hom", help="(default hom)")
    p.add_argument("--width", type=_positive_int, default=100, help="(default 100)")
    p.add_argument("--depth", type=_positive_int, default=100, help="uniform partition size (default 100)")
    p.add_argument("--paths", type=_files, help="comma-separated path CSVs")
    _kernel_opts(p)
    p.add_argument("--realizations", type=_positive_int, default=10, help="(default 10)")
    p.add_argument("--out", help="samples CSV; stdout if omitted")

    def _summary_opts(p):
        p.add_argument("--out", help="rows CSV; stdout if omitted")
        p.add_argument("--summary", help="summary JSON (printed after the CSV when --out is given)")

    p = add("converge-width", cmd_converge_width, "MSE of the empirical kernel against its infinite-width limit per width")
    p.add_argument("--paths", type=_files, help="path CSVs (default: two GP-RBF paths from the seed)")
    p.add_argument("--widths", type=_ints, default=",".join(map(str, WIDTHS)))
    p.add_argument("--realizations", type=_positive_int, default=250)
    p.add_argument("--depth", type=_positive_int, default=200)
    _kernel_opts(p)
    _summary_opts(p)

    p = add("gaussianity", cmd_gaussianity, "KS and QQ diagnostics of network outputs")
    p.add_argument("--path", help="path CSV (default: the 2-d benchmark path)")
    p.add_argument("--widths", type=_ints, default=",".join(map(str, QQ_WIDTHS)))
    p.add_argument("--realizations", type=_positive_int, default=250)
    p.add_argument("--depth", type=_positive_int, default=100)
    p.add_argument("--reference-depth", type=_positive_int, default=1000, help="grid of the variance solve (default 1000)")
    _kernel_opts(p, "0.5,1,1.2", "relu")
    p.add_argument("--qq-dir", help="directory for qq_N<width>.csv files")
    _summary_opts(p)

    p = add("converge-depth", cmd_converge_depth, "W1 between shallow and deep outputs with shared weights")
    p.add_argument("--path", help="path CSV (default: the cos_exp benchmark path)")
    p.add_argument("--depths", type=_ints, default=",".join(map(str, DEPTHS)))
    p.add_argument("--reference-depth", type=_positive_int, default=2**14)
    p.add_argument("--width", type=_positive_int, default=100)
    p.add_argument("--realizations", type=_positive_int, default=200)
    _kernel_opts(p)
    _summary_opts(p)

    p = add("reproduce", cmd_reproduce, "rerun a benchmark figure's experiment")
    p.add_argument("figure", choices=("fig-mse", "fig-qq"))
    p.add_argument("--out-dir", default=".", help="output directory (default .)")
    p.add_argument("--params", type=_triple, default=None, help="override the figure's sigma_a,sigma_A,sigma_b")
    p.add_argument("--activation", choices=ACTIVATIONS, default=None)

    return parser, registry


def _command_key(args):
    if args.command == "kernel":
        return f"kernel-{args.kernel_command}"
    if args.command == "paths":
        return f"paths-{args.paths_command}"
    return args.command


def _load_config(path, key, parser):
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(interpolation=None)
    if not text.lstrip().startswith("["):
        text = "[nsk]\n" + text
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"nsk: error: cannot parse config file {path}: {exc}")
    dests = {a.dest: a for a in parser._actions}
    values = {}
    for section in ("nsk", key):
        if not cp.has_section(section):
            continue
        for name, raw in cp.items(section):
            dest = name.replace("-", "_")
            if dest in ("config", "help", "handler"):
                continue
            if dest not in dests:
                if section == key:
                    raise UsageError(f"nsk: error: unknown key {name!r} in section [{section}] of {path}")
                continue
            values[dest] = raw
    return values


def _parse(argv):
    parser, registry = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(f"nsk: error: a command is required\n{parser.format_usage()}")
    key = _command_key(args)
    if args.config:
        try:
            values = _load_config(args.config, key, registry[key])
        except OSError as exc:
            raise UsageError(f"nsk: error: cannot read config file: {exc}")
        if values:
            # string defaults are converted by each option's type on the re-parse
            registry[key].set_defaults(**values)
            args = parser.parse_args(argv)
    if args.seed is None:
        env = os.environ.get("NSK_SEED")
        try:
            args.seed = _seed(env) if env not in (None, "") else 0
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"nsk: error: NSK_SEED: {exc}")
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
        args.handler(args)
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except UsageError as exc:
        sys.stderr.write(str(exc).rstrip("\n") + "\n")
        return EXIT_USAGE
    except (NumericalBreakdown, ArithmeticError) as exc:
        sys.stderr.write(f"nsk: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (NSKError, ValueError, OSError) as exc:
        sys.stderr.write(f"nsk: error: {exc}\n")
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
