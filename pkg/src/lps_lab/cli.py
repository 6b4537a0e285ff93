"""Command-line entry point: ``lps-lab <subcommand> ...``.

Exit status is 0 on success, 2 on invalid input and 3 on numerical failure.
"""

import argparse
import sys
from contextlib import contextmanager

import numpy as np

from . import bench
from .deadness import BoundParams, bound_N_reinit, bound_one_reinit, estimate_dead_prob
from .errors import NumericalError, ValidationError
from .homotopy import build_abs_fit_system, parse_system, solve_all
from .initializers import InitScheme, init_params
from .mlp import NetSpec, train_run
from .poly_approx import l2_error, project_activation, relu

ACTIVATIONS = {"relu": relu}


def _widths(text):
    try:
        return tuple(int(w) for w in text.split(","))
    except ValueError:
        raise ValidationError(f"widths must be comma-separated integers, got {text!r}") from None


def _depths(text):
    """``2-10`` or ``2,4,6``."""
    try:
        if "-" in text:
            lo, hi = (int(v) for v in text.split("-"))
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise ValidationError(f"bad depth range {text!r}") from None


def _scheme_list(text):
    """Comma-separated ``kind[:reinit[:selection]]`` items, e.g. ``he,lps:1:bits``."""
    out = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if not 1 <= len(parts) <= 3:
            raise ValidationError(f"bad scheme {item!r}")
        try:
            reinit = int(parts[1]) if len(parts) > 1 else 0
        except ValueError:
            raise ValidationError(f"bad reinit count in {item!r}") from None
        selection = parts[2] if len(parts) > 2 else bench.EXPERIMENT_SELECTION
        out.append(InitScheme(parts[0], reinit, selection))
    return out


def _num(x) -> str:
    return repr(float(x))


@contextmanager
def _sink(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def cmd_approx(args):
    f = ACTIVATIONS[args.activation]
    if args.emit == "error":
        print("# schema=approx-error v1 columns=degree,l2_error")
        print(f"{args.degree},{_num(l2_error(f, args.degree))}")
        return
    p = project_activation(f, args.degree)
    coeffs = p.legendre_coeffs if args.emit == "legendre" else p.monomial_coeffs
    print(f"# schema=approx-{args.emit} v1 columns=k,value")
    for k, v in enumerate(coeffs):
        print(f"{k},{_num(v)}")


def cmd_init(args):
    spec = NetSpec(_widths(args.widths))
    scheme = InitScheme(args.scheme, args.reinit, args.selection or "bernoulli", args.bias)
    params = init_params(spec, scheme, args.seed)
    with _sink(args.emit) as out:
        out.write("# schema=params v1 columns=layer,row,col,value (bias at col = fan_in)\n")
        for layer, (w, b) in enumerate(zip(params.weights, params.biases), start=1):
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    out.write(f"{layer},{i},{j},{_num(w[i, j])}\n")
                out.write(f"{layer},{i},{w.shape[1]},{_num(b[i])}\n")


def cmd_train(args):
    cfg = bench.make_config(args.function, args.init, args.reinit, args.selection, args.bias,
                            runs=1, seed=args.seed, lr=args.lr, steps=args.steps)
    params = init_params(cfg.spec, cfg.scheme, args.seed)
    rep = train_run(cfg.spec, params, bench.make_dataset(cfg.target), cfg.hyper, seed=args.seed)
    print("# schema=train v1 columns=seed,init,reinit,final_loss,collapsed")
    print(f"{args.seed},{cfg.scheme.kind.value},{cfg.scheme.reinit_count},{_num(rep.final_loss)},{int(rep.collapsed)}")


def cmd_deadness(args):
    spec = NetSpec(_widths(args.widths))
    scheme = InitScheme(args.scheme, args.reinit, args.selection or "bernoulli", args.bias)
    rep = estimate_dead_prob(spec, scheme, args.trials, args.seed)
    print("# schema=deadness v1 columns=spec,scheme,reinit,trials,dead,estimate,ci95")
    print(f"{'-'.join(map(str, spec.widths))},{scheme.kind.value},{scheme.reinit_count},"
          f"{rep.trials},{rep.dead_count},{_num(rep.estimate)},{_num(rep.ci95_halfwidth)}")


def cmd_bounds(args):
    widths = _widths(args.widths)
    if args.p == "auto":
        p = None
    else:
        try:
            p = (float(args.p),) * (len(widths) - 1)
        except ValueError:
            raise ValidationError(f"--p must be 'auto' or a number, got {args.p!r}") from None
    bp = BoundParams(widths, p, args.delta, args.N)
    print(_num(bound_one_reinit(bp) if args.mode == "one" else bound_N_reinit(bp)))


def cmd_homotopy(args):
    if args.system == "abs-fit":
        system = build_abs_fit_system()
    else:
        try:
            with open(args.system) as fh:
                system = parse_system(fh.read())
        except OSError as exc:
            raise ValidationError(f"cannot read system file: {exc}") from None
    res = solve_all(system, seed_for_gamma=args.gamma_seed)
    if not res.solutions:
        raise NumericalError("no path converged", residual=float("nan"))
    n = system.num_vars
    cols = ",".join(f"x{i}_re,x{i}_im" for i in range(1, n + 1))
    with _sink(args.emit) as out:
        out.write(f"# schema=homotopy v1 paths={len(res.paths)} gamma={res.gamma.real!r}{res.gamma.imag:+}j\n")
        out.write(f"cluster_id,is_real,residual,multiplicity,{cols}\n")
        for cid, s in enumerate(res.solutions):
            vals = ",".join(f"{_num(z.real)},{_num(z.imag)}" for z in np.asarray(s.point, dtype=complex))
            out.write(f"{cid},{int(s.is_real)},{_num(s.residual)},{s.multiplicity},{vals}\n")


def cmd_table1(args):
    if args.config:
        cfg = bench.load_config(args.config)
    else:
        cfg = bench.make_config(args.function, args.init, args.reinit, args.selection, args.bias,
                                runs=args.runs, seed=args.seed, steps=args.steps)
    if args.full:
        cfg = bench.RunConfig(cfg.target, cfg.spec, cfg.scheme, 1000, cfg.base_seed, cfg.hyper)
    if args.emit_config:
        sys.stdout.write(bench.emit_config(cfg))
        return
    with _sink(args.emit) as out:
        out.write(bench.run_table1(cfg).to_csv(timestamp=not args.no_timestamp))


def cmd_fig1(args):
    rows = bench.run_fig1(args.family, _scheme_list(args.schemes), _depths(args.depths), args.trials, args.seed)
    with _sink(args.emit) as out:
        out.write(bench.fig1_csv(args.family, rows))


def _scheme_args(p, kind_flag="--scheme", default="lps"):
    p.add_argument(kind_flag, default=default, choices=["he", "xavier", "lps", "lps-tanh"])
    p.add_argument("--reinit", type=int, default=0)
    p.add_argument("--selection", default=None, choices=["bernoulli", "bits"])
    p.add_argument("--bias", default="sampled", choices=["sampled", "zero"])


def build_parser():
    ap = argparse.ArgumentParser(prog="lps-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("approx", help="Legendre projection of an activation")
    p.add_argument("--activation", default="relu", choices=sorted(ACTIVATIONS))
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--emit", default="monomial", choices=["legendre", "monomial", "error"])
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("init", help="draw one initialization and write it as CSV")
    p.add_argument("--widths", required=True)
    _scheme_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emit", default="-", help="output path, '-' for stdout")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("train", help="initialize and train one network on f1..f4")
    p.add_argument("--function", required=True, choices=["f1", "f2", "f3", "f4"])
    _scheme_args(p, "--init", "he")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=4000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("deadness", help="Monte Carlo born-dead probability")
    p.add_argument("--widths", required=True)
    _scheme_args(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_deadness)

    p = sub.add_parser("bounds", help="closed-form dead-probability bounds")
    p.add_argument("--mode", required=True, choices=["one", "N"])
    p.add_argument("--widths", required=True, help="m0,m1,...,m_{n-1}")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--N", type=int, default=0)
    p.add_argument("--p", default="auto", help="'auto' for 2^l/(2^(n+1)-1), or a constant")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("homotopy", help="solve a polynomial system by homotopy continuation")
    p.add_argument("--system", default="abs-fit", help="'abs-fit' or a path to a system text file")
    p.add_argument("--gamma-seed", type=int, default=0)
    p.add_argument("--emit", default="-")
    p.set_defaults(func=cmd_homotopy)

    p = sub.add_parser("table1", help="non-collapse training campaign")
    p.add_argument("--config", help="key = value config file; overrides the flags below")
    p.add_argument("--function", default="f1", choices=["f1", "f2", "f3", "f4"])
    _scheme_args(p, "--init", "he")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--full", action="store_true", help="1000 runs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--no-timestamp", action="store_true")
    p.add_argument("--emit-config", action="store_true", help="print the resolved config and exit")
    p.add_argument("--emit", default="-")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("fig1", help="born-dead probability versus depth")
    p.add_argument("--family", default="1d-w2", choices=sorted(bench.FAMILIES))
    p.add_argument("--schemes", default="he,lps:1", help="e.g. he,xavier,lps:1:bits")
    p.add_argument("--depths", default="2-10")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emit", default="-")
    p.set_defaults(func=cmd_fig1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc} (residual {exc.residual})", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
