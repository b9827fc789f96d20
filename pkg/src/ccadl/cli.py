"""Command-line experiment runner.

    ccadl gaussian --method ccadl,sgnht --h 0.01 --A 1 --steps 1000000 --seed 7
    ccadl logreg --method ccadl,sgnht --h 0.001 --A 1 --steps 4000 --ref-hmc --pairs 2,5
    ccadl validate [--quick]

Each method writes into ``<out>/<method>/``.  Every CSV starts with a
``#`` line echoing the full configuration; timestamps go to ``meta.json``
only, so reruns with the same flags are byte-identical otherwise.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataFormatError, load_dense_csv, load_libsvm, random_projection
from .diagnostics import fmt
from .experiments import (
    gaussian_data,
    gaussian_run,
    logreg_reference,
    logreg_run,
    moment_checks,
    two_class_split,
)
from .models import QuadraticNoiseModel
from .samplers import METHODS, ChainAbort, SamplerConfig, make_streams, run_chain

logger = logging.getLogger("ccadl")


def _methods(text):
    out = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in out if m not in METHODS or m == "hmc"]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from sgld,sghmc,sgnht,ccadl")
    return out


def _pair(text):
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("--pairs takes two 1-based indices, e.g. 2,5") from None
    return a, b


def _common(p, h, A, n, steps, covariance):
    p.add_argument("--method", type=_methods, default=["ccadl"],
                   help="comma-separated list of sgld, sghmc, sgnht, ccadl")
    p.add_argument("--h", type=float, default=h, help="stepsize")
    p.add_argument("--A", type=float, default=A, help="effective friction")
    p.add_argument("--beta", type=float, default=1.0, help="inverse temperature")
    p.add_argument("--mu", type=float, default=None, help="thermal mass (default: dimension)")
    p.add_argument("--n", type=int, default=n, help="minibatch size")
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--burnin", type=int, default=None, help="default: 20%% of steps")
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--covariance", choices=("none", "diagonal", "full"), default=covariance)
    p.add_argument("--with-replacement", action="store_true", help="draw minibatches with replacement")
    p.add_argument("--random-init", action="store_true", help="perturb the initial position")
    p.add_argument("--out", type=Path, default=Path("out"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccadl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gaussian", help="Normal-Gamma inference of a Gaussian mean and precision")
    _common(g, h=0.01, A=1.0, n=10, steps=100_000, covariance="diagonal")
    g.add_argument("--N", type=int, default=100, help="synthetic data size")
    g.add_argument("--data", type=Path, help="CSV of observations (first column used)")

    lr = sub.add_parser("logreg", help="Bayesian logistic regression")
    _common(lr, h=0.001, A=1.0, n=100, steps=4000, covariance="full")
    lr.add_argument("--N", type=int, default=2000, help="synthetic training size")
    lr.add_argument("--d", type=int, default=10, help="synthetic feature dimension")
    lr.add_argument("--N-test", type=int, default=1000)
    lr.add_argument("--separation", type=float, default=2.0)
    lr.add_argument("--train", type=Path, help="training data (CSV with label column, or LIBSVM)")
    lr.add_argument("--test", type=Path, help="test data, same format as --train")
    lr.add_argument("--format", choices=("csv", "libsvm"), default="csv")
    lr.add_argument("--project", type=int, default=None, help="random projection dimension")
    lr.add_argument("--every", type=int, default=None, help="steps between test evaluations (default: one pass)")
    lr.add_argument("--ref-hmc", action="store_true", help="also run full-gradient HMC")
    lr.add_argument("--hmc-samples", type=int, default=2000)
    lr.add_argument("--pairs", type=_pair, default=None, help="dump two coordinates, 1-based, e.g. 2,5")

    v = sub.add_parser("validate", help="stationary-moment self checks with injected noise")
    v.add_argument("--quick", action="store_true", help="fewer steps, looser tolerances")
    v.add_argument("--steps", type=int, default=None)
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--fault", choices=("none", "no-damping"), default="none", help=argparse.SUPPRESS)
    return parser


# ---------------------------------------------------------------------------
# output helpers


def echo(args) -> list[str]:
    items = []
    for key, val in sorted(vars(args).items()):
        if key in ("verbose",):
            continue
        if isinstance(val, (list, tuple)):
            val = ",".join(map(str, val))
        items.append(f"{key}={val}")
    return items


def write_csv(path: Path, header: list[str], columns, comment: str) -> None:
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    buf.write(",".join(header) + "\n")
    rows = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns else np.empty((0, 0))
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    path.write_text(buf.getvalue(), encoding="utf-8")


def _cell(v) -> str:
    if np.isfinite(v) and v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return "%.17g" % v


def write_meta(path: Path, extra=None) -> None:
    meta = {"version": __version__, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    meta.update(extra or {})
    path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _prepare(args, method) -> tuple[Path, str]:
    burnin = args.burnin if args.burnin is not None else args.steps // 5
    args.burnin = burnin
    d = args.out / method
    d.mkdir(parents=True, exist_ok=True)
    lines = echo(args)
    (d / "config.echo").write_text("\n".join(lines + [f"run_method={method}"]) + "\n", encoding="utf-8")
    return d, "config: " + " ".join(lines + [f"run_method={method}"])


def _config(args, method) -> SamplerConfig:
    return SamplerConfig(method=method, h=args.h, A=args.A, beta=args.beta, mu=args.mu,
                         covariance=args.covariance, replace=args.with_replacement,
                         random_init=args.random_init)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gaussian(args) -> int:
    if args.data is not None:
        data = load_dense_csv(args.data).features[:, 0]
    else:
        data = None
    status = 0
    for method in args.method:
        out, comment = _prepare(args, method)
        cfg = _config(args, method)
        try:
            x = gaussian_data(args.seed, args.N) if data is None else data
            model, log, report = gaussian_run(method, cfg, args.steps, args.burnin, args.thin,
                                              args.seed, n=args.n, data=x)
        except ChainAbort as exc:
            logger.error("%s aborted: %s", method, exc)
            if exc.log is not None:
                _write_chain(out, exc.log, ("mu", "gamma"), comment)
            status = 3
            continue
        _write_chain(out, log, ("mu", "gamma"), comment)
        post = model.posterior
        report.counters.setdefault("friction_deficit", 0)
        text = report.to_csv(comment)
        text += ("analytic_mean_mu,%s\nanalytic_mean_gamma,%s\n"
                 % (fmt(post.mu_N), fmt(post.gamma_mean)))
        (out / "report.csv").write_text(text, encoding="utf-8")
        write_meta(out / "meta.json")
        print(f"{method}:\n{report.to_text()}")
    return status


def _write_chain(out: Path, log, names, comment: str) -> None:
    keep = log.post_burnin
    write_csv(out / "samples.csv", ["step", *names],
              [log.step_index[keep], *log.theta[keep].T], comment)
    write_csv(out / "series.csv", ["step", "burnin", "xi", "temperature"],
              [log.step_index, (~keep).astype(float), log.xi, log.temperature], comment)


def _load_labelled(path, fmt_, project_rng, k, matrix=None):
    if fmt_ == "libsvm":
        ds = load_libsvm(path, remap_binary=True)
    else:
        ds = load_dense_csv(path, label_column=True, remap_binary=True)
    if k is not None:
        ds = random_projection(project_rng, ds, k, matrix=matrix)
    return ds


def cmd_logreg(args) -> int:
    if args.train is not None:
        if args.test is None:
            raise DataFormatError("--train requires --test")
        rng = make_streams(args.seed).data
        train = _load_labelled(args.train, args.format, rng, args.project)
        test = _load_labelled(args.test, args.format, rng, args.project, train.projection)
    else:
        train, test = two_class_split(args.seed, args.N, args.d, args.separation, args.N_test)
        if args.project is not None:
            rng = make_streams(args.seed).init
            train = random_projection(rng, train, args.project)
            test = random_projection(rng, test, args.project, matrix=train.projection)
    if args.pairs and max(args.pairs) > train.d or (args.pairs and min(args.pairs) < 1):
        raise ValueError(f"--pairs indices must lie in 1..{train.d}")

    names = [f"w{i + 1}" for i in range(train.d)]
    if args.ref_hmc:
        mean, plateau, hlog = logreg_reference(train, test, args.seed, samples=args.hmc_samples)
        args.out.mkdir(parents=True, exist_ok=True)
        write_csv(args.out / "hmc_posterior_mean.csv", ["coordinate", "mean"],
                  [np.arange(1, train.d + 1), mean],
                  f"config: hmc L=20 samples={args.hmc_samples} seed={args.seed} "
                  f"acceptance={hlog.acceptance_rate:.17g} test_loglik={plateau:.17g}")
        print(f"hmc: acceptance {hlog.acceptance_rate:.3f}, test log-lik {plateau:.6f}")

    status = 0
    for method in args.method:
        out, comment = _prepare(args, method)
        cfg = _config(args, method)
        res = logreg_run(method, train, test, cfg, args.steps, args.seed, n=args.n,
                         every=args.every, burnin=args.burnin, thin=args.thin)
        steps = np.asarray(res.passes * train.N / args.n)
        write_csv(out / "loglik.csv", ["step", "passes", "burnin", "test_loglik"],
                  [steps, res.passes, (steps <= args.burnin).astype(float), res.loglik], comment)
        if res.log is not None:
            _write_chain(out, res.log, names, comment)
            samples = res.log.samples
            if samples.size:
                write_csv(out / "posterior_mean.csv", ["coordinate", "mean"],
                          [np.arange(1, train.d + 1), samples.mean(axis=0)], comment)
            if args.pairs:
                a, b = args.pairs
                write_csv(out / f"pairs_{a}_{b}.csv", [f"w{a}", f"w{b}"],
                          [samples[:, a - 1], samples[:, b - 1]], comment)
        write_meta(out / "meta.json", {"diverged": res.diverged})
        if res.diverged:
            logger.error("%s diverged", method)
            status = 3
        else:
            print(f"{method}: final test log-lik {res.loglik[-1]:.6f} after {res.passes[-1]:g} passes")
    return status


def reduction_check(steps: int = 1000, seed: int = 3) -> tuple[bool, float]:
    """CCAdL with zero covariance versus SGNHT under shared streams."""
    model = QuadraticNoiseModel(2, precision=[1.0, 4.0], noise_const=2.0, noise_quad=1.0)
    a = run_chain("ccadl", model, SamplerConfig(covariance="none"), steps, 0, 1, seed, engine="reference")
    b = run_chain("sgnht", model, SamplerConfig(covariance="none"), steps, 0, 1, seed, engine="reference")
    err = float(max(np.max(np.abs(a.theta - b.theta)), np.max(np.abs(a.xi - b.xi))))
    return err <= 1e-15, err


def cmd_validate(args) -> int:
    steps = args.steps or (250_000 if args.quick else 1_000_000)
    kw = dict(temp_rtol=0.1, var_rtol=0.1) if args.quick else {}
    cov = "none" if args.fault == "no-damping" else "exact"
    checks = moment_checks(steps=steps, seed=args.seed, ccadl_covariance=cov, **kw)
    ok, err = reduction_check()
    lines = [c.line() for c in checks]
    lines.append(f"[{'PASS' if ok else 'FAIL'}] CCAdL(zero covariance) == SGNHT over 1000 steps: "
                 f"max deviation {err:.3g} (tolerance 1e-15)")
    print("\n".join(lines))
    return 0 if ok and all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"gaussian": cmd_gaussian, "logreg": cmd_logreg, "validate": cmd_validate}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
