"""Command-line entry point: train, predict, eval, certify, graph-stats.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
(only with ``--strict``).
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys

from proxml.ccd import CcdConfig
from proxml.data import XmcFormatError, label_counts, read_xmc
from proxml.harness import certify_dataset
from proxml.labelgraph import algebraic_connectivity, build_graph
from proxml.metrics import PROPENSITY_PRESETS, evaluate, propensities
from proxml.predictor import ModelMismatchError, predict, read_predictions, write_predictions
from proxml.prox import ProxConfig
from proxml.trainer import (
    ModelFormatError,
    cross_validate_lambda,
    load_model,
    save_model,
    train_all,
    write_training_log,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "PROXML_THREADS"
# settings that never change results and so stay out of echoed configs
_NOT_ECHOED = {"threads", "config", "verbose", "func"}

log = logging.getLogger("proxml")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _k_list(text: str) -> list[int]:
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k values must be >= 1")
    return ks


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_preprocessing(p):
    p.add_argument("--no-bias", dest="bias", action="store_false",
                   help="do not append the constant bias feature")
    p.add_argument("--l2-normalize-rows", action="store_true", help="scale each instance to unit L2 norm")


def _add_prox(p):
    p.add_argument("--tol", type=float, default=ProxConfig.tol, help="relative objective decrease to stop at")
    p.add_argument("--max-iters", type=_positive_int, default=ProxConfig.max_iters)
    p.add_argument("--gamma-init", type=float, default=ProxConfig.gamma_init)
    p.add_argument("--gamma-shrink", type=float, default=ProxConfig.gamma_shrink)
    p.add_argument("--gamma-grow", type=float, default=ProxConfig.gamma_grow)


def _add_ccd(p, tol_default, relative_default):
    p.add_argument("--ccd-tol", type=float, default=tol_default, help="bound on the max coordinate violation")
    p.add_argument("--ccd-relative-tol", action=argparse.BooleanOptionalAction, default=relative_default,
                   help="scale --ccd-tol by the first sweep's max violation")
    p.add_argument("--ccd-max-outer-iters", type=_positive_int, default=CcdConfig.max_outer_iters)
    p.add_argument("--shrinking", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--shrink-rule", choices=("symmetric", "literal"), default="symmetric")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxml", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help=f"worker count (default: ${THREADS_ENV} or CPU count)")
    parser.add_argument("--config", help="JSON file of option defaults; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one-vs-rest sparse linear classifiers")
    p.add_argument("--data", required=True, help="training set in XMC format")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", help="per-label CSV log (default: <out>.log.csv)")
    p.add_argument("--solver", choices=("prox", "ccd"), default="prox")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--cv-lambda", type=_float_list, default=None,
                   help="comma grid of lambdas selected by 5-fold CV on P@1")
    p.add_argument("--cv-folds", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=0, help="fold assignment seed for --cv-lambda")
    p.add_argument("--strict", action="store_true", help="exit 3 if any label failed to train")
    _add_prox(p)
    _add_ccd(p, 1e-6, False)
    _add_preprocessing(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write top-k predictions for a test set")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="test set in XMC format")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=_positive_int, default=5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--gold", required=True, help="test set in XMC format (labels are used)")
    p.add_argument("--pred", required=True, help="predictions file written by 'predict'")
    p.add_argument("--k", type=_k_list, default=[1, 3, 5])
    p.add_argument("--train", help="training set; propensities use its label counts")
    p.add_argument("--model", help="model file; propensities use the counts stored in it")
    p.add_argument("--propensity-a", type=float, default=None)
    p.add_argument("--propensity-b", type=float, default=None)
    p.add_argument("--propensity-preset", choices=sorted(PROPENSITY_PRESETS), default="default")
    p.add_argument("--coverage", action="store_true", help="also emit coverage rows")
    p.add_argument("--out", help="CSV output (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("certify", help="compare proximal and CCD objectives per label")
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--labels", type=_int_list, default=None, help="comma list of label ids (default: all)")
    p.add_argument("--min-pos", type=int, default=1)
    p.add_argument("--out", help="CSV output (default: stdout)")
    _add_prox(p)
    _add_ccd(p, 0.01, True)
    _add_preprocessing(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("graph-stats", help="label graph statistics and algebraic connectivity")
    p.add_argument("--data", required=True)
    p.add_argument("--name", default="", help="dataset name for the output row")
    p.add_argument("--largest-component", action="store_true",
                   help="also report lambda2 on the largest connected component")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=_positive_int, default=None)
    p.add_argument("--strict", action="store_true", help="exit 3 if the eigensolver does not converge")
    p.add_argument("--out", help="CSV output (default: stdout)")
    p.set_defaults(func=cmd_graph_stats)
    return parser


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return _positive_int(env)
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
    return os.cpu_count() or 1


def effective_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _header(args) -> str:
    return "config " + json.dumps(effective_config(args), sort_keys=True)


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            yield f


def _prox_config(args, lam) -> ProxConfig:
    return ProxConfig(lam=lam, max_iters=args.max_iters, tol=args.tol, gamma_init=args.gamma_init,
                      gamma_shrink=args.gamma_shrink, gamma_grow=args.gamma_grow)


def _ccd_config(args, lam) -> CcdConfig:
    return CcdConfig(lam=lam, max_outer_iters=args.ccd_max_outer_iters, tol=args.ccd_tol,
                     shrinking=args.shrinking, shrink_rule=args.shrink_rule, relative_tol=args.ccd_relative_tol)


def _solver_config(args, lam):
    return _prox_config(args, lam) if args.solver == "prox" else _ccd_config(args, lam)


def cmd_train(args) -> int:
    if args.lam < 0:
        raise UsageError("--lambda must be >= 0")
    data = read_xmc(args.data)
    if data.n_empty_rows:
        log.info("%d training instances have no features", data.n_empty_rows)
    lam = args.lam
    if args.cv_lambda:
        lam, scores = cross_validate_lambda(
            data, args.cv_lambda, args.solver, _solver_config(args, lam), args.cv_folds,
            args.threads, args.bias, args.l2_normalize_rows, args.seed,
        )
        log.info("cv scores %s -> lambda=%g", scores, lam)
    model, rows = train_all(data, args.solver, _solver_config(args, lam), args.threads,
                            args.bias, args.l2_normalize_rows)
    model.meta["run_config"] = effective_config(args)
    model.meta["selected_lambda"] = lam
    save_model(model, args.out)
    with _output(args.log or f"{args.out}.log.csv") as f:
        write_training_log(rows, f, _header(args))
    failed = sum(st == "failed" for st in model.status)
    if failed and args.strict:
        log.error("%d labels failed", failed)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = read_xmc(args.data)
    preds = predict(model, data, args.k, args.threads)
    with _output(args.out) as f:
        write_predictions(preds, f, _header(args))
    return EXIT_OK


def cmd_eval(args) -> int:
    gold = read_xmc(args.gold)
    with open(args.pred, encoding="utf-8") as f:
        preds = read_predictions(f)
    if len(preds) != gold.n_instances:
        raise XmcFormatError(f"{len(preds)} prediction lines for {gold.n_instances} gold instances")
    A, B = PROPENSITY_PRESETS[args.propensity_preset]
    A = A if args.propensity_a is None else args.propensity_a
    B = B if args.propensity_b is None else args.propensity_b
    if args.model:
        meta = load_model(args.model).meta
        counts, n_train = meta["label_counts"], meta["n_train"]
    elif args.train:
        train = read_xmc(args.train)
        counts, n_train = label_counts(train), train.n_instances
    else:
        log.warning("no --train/--model given: propensities fall back to gold-set label counts")
        counts, n_train = label_counts(gold), gold.n_instances
    if len(counts) != gold.n_labels:
        raise XmcFormatError(f"label count mismatch: {len(counts)} propensities for L={gold.n_labels}")
    try:
        table = propensities(counts, A, B, n_train)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = evaluate([p.labels for p in preds], gold.labels, table.p, args.k)
    with _output(args.out) as f:
        report.write_csv(f, include_coverage=args.coverage, header_comment=_header(args))
    print(report.table(), file=sys.stderr)
    return EXIT_OK


def cmd_certify(args) -> int:
    if args.lam < 0:
        raise UsageError("--lambda must be >= 0")
    data = read_xmc(args.data)
    summary = certify_dataset(data, args.lam, _prox_config(args, args.lam), _ccd_config(args, args.lam),
                              labels=args.labels, min_pos=args.min_pos, parallelism=args.threads,
                              bias=args.bias, l2_normalize=args.l2_normalize_rows)
    with _output(args.out) as f:
        summary.write_csv(f, _header(args))
    print(f"labels={summary.n_labels} fraction_prox_lower={summary.fraction_prox_lower():.4f} "
          f"ratio_quantiles(10/50/90%)={summary.ratio_quantiles()}", file=sys.stderr)
    return EXIT_OK


GRAPH_FIELDS = ("dataset", "scope", "L", "edges", "isolated", "components", "lambda2", "residual", "iterations")


def cmd_graph_stats(args) -> int:
    data = read_xmc(args.data)
    graph = build_graph(data)
    scopes = [("all", graph)]
    if args.largest_component and graph.n_components() > 1:
        scopes.append(("largest", graph.largest_component()))
    ok = True
    with _output(args.out) as f:
        f.write(f"# {_header(args)}\n")
        f.write(",".join(GRAPH_FIELDS) + "\n")
        for scope, g in scopes:
            r = algebraic_connectivity(g, tol=args.tol, max_iters=args.max_iters)
            ok &= r.converged
            row = (args.name, scope, g.n_vertices, g.n_edges, r.n_isolated, r.component_count,
                   repr(r.lambda2), repr(r.residual), r.iterations)
            f.write(",".join(str(v) for v in row) + "\n")
    return EXIT_NUMERIC if args.strict and not ok else EXIT_OK


def _apply_config_file(parser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp_ in subparsers.choices.values():
        dests = {a.dest for a in sp_._actions}
        sp_.set_defaults(**{k: v for k, v in cfg.items() if k in dests})
    known_dests = {a.dest for sp_ in subparsers.choices.values() for a in sp_._actions}
    unknown = set(cfg) - known_dests - {a.dest for a in parser._actions}
    if unknown:
        raise UsageError(f"unknown keys in config file: {sorted(unknown)}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help or an argparse usage error
            return exc.code if isinstance(exc.code, int) else EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.threads = _resolve_threads(args)
        return args.func(args)
    except UsageError as exc:
        print(f"proxml: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (XmcFormatError, ModelFormatError, ModelMismatchError, OSError) as exc:
        print(f"proxml: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"proxml: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
