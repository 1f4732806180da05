#!/usr/bin/env python3
"""
Command-line entry point.

    python cli.py generate  --model 1 --case a --seed 7 --output data.csv
    python cli.py fit       --data data.csv --lambda 0.1 --eta 0.2 --output fit.json
    python cli.py cv        --data data.csv --folds 5 --refit --output cv.json
    python cli.py benchmark --models 3a --methods rct,lasso --replications 20 --output tables/model3
    python cli.py check     --seed 13

Settings resolve as command-line flags > JSON file given by --config >
built-in DEFAULTS, and the resolved settings are echoed into every file
a command writes. Exit codes: 0 success, 1 usage or configuration error,
2 runtime failure (including any failed check).
"""

import argparse
import sys
from dataclasses import dataclass, field, replace

from baselines import ConvergenceControls, fit_adaptive_lasso, fit_lasso
from dataset_io import read_dataset, read_json, write_dataset, write_json
from datagen import get_model, sample_dataset
from diagnostics import run_all_checks
from evaluation import (
    METHODS, TUNING_RULES, cross_validate_lasso, evaluate_fit, fit_lasso_pilot, lasso_lambda_grid,
    run_benchmark, tune_rct,
)
from loss import HuberParams
from optimizer import fit_rct
from penalty import GroupPartition
from rct_base import (
    BASELINE_MAX_ITER, BASELINE_TOL, CV_FOLDS, DEFAULT_ETA, DEFAULT_MAX_ITER, DEFAULT_RADIUS, DEFAULT_STEP,
    DEFAULT_TAU, DEFAULT_TOL, FormatError, ParameterError, default_workers, debug_print,
)
from risk import THRESHOLD_MODES, SolverConfig, empirical_gradient
from thresholding import ThresholdParams

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

SOLVER_DEFAULTS = {
    'data': None,
    'groups': None,
    'standardize': False,
    'lam': 0.1,
    'eta': DEFAULT_ETA,
    'tau': DEFAULT_TAU,
    'step': DEFAULT_STEP,
    'radius': DEFAULT_RADIUS,
    'omega': None,
    'max_iter': None,
    'tol': None,
    'threshold_mode': 'step-scaled',
    'backtrack': False,
}

DEFAULTS = {
    'generate': {'model': None, 'case': 'a', 'n': None, 'p': None, 'seed': 0, 'support_size': None, 'output': None},
    'fit': {**SOLVER_DEFAULTS, 'method': 'rct', 'seed': 0, 'folds': CV_FOLDS, 'output': None},
    'cv': {**SOLVER_DEFAULTS, 'method': 'rct', 'rule': 'cv', 'folds': CV_FOLDS, 'seed': 0,
           'lambda_grid': None, 'eta_grid': None, 'refit': False, 'workers': None, 'output': None},
    'benchmark': {'models': '3a', 'methods': ','.join(METHODS), 'replications': 20, 'n': None, 'p': None,
                  'base_seed': 0, 'rule': 'cv', 'folds': CV_FOLDS, 'support_size': None, 'workers': None,
                  'output': 'benchmark'},
    'check': {'seed': 0, 'output': None},
}

REQUIRED = {'generate': ('model', 'output'), 'fit': ('data',), 'cv': ('data',)}


class UsageError(ParameterError):
    """Bad command line or config file."""


class RCTArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ==================== CONFIGURATION ====================

@dataclass(frozen=True)
class RunConfig:
    """A subcommand name and its fully resolved parameters."""

    command: str
    params: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__['params'][name]
        except KeyError:
            raise AttributeError(name)

    def to_dict(self):
        return {'command': self.command, 'params': dict(self.params)}

    @classmethod
    def from_dict(cls, payload):
        command = payload.get('command')
        if command not in DEFAULTS:
            raise UsageError(f"unknown command {command!r}")
        return cls(command=command, params=dict(payload.get('params', {})))


def _float_list(text):
    if text is None or isinstance(text, list):
        return text
    try:
        return [float(v) for v in str(text).split(',') if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}")


def _name_list(text):
    if isinstance(text, list):
        return text
    return [v.strip() for v in str(text).split(',') if v.strip()]


def _fill_method_defaults(params):
    baseline = params.get('method') in ('lasso', 'adalasso')
    if params.get('max_iter') is None:
        params['max_iter'] = BASELINE_MAX_ITER if baseline else DEFAULT_MAX_ITER
    if params.get('tol') is None:
        params['tol'] = BASELINE_TOL if baseline else DEFAULT_TOL


def resolve_config(args):
    """Merge DEFAULTS, the --config file and explicit flags, in increasing priority."""
    command = args.command
    params = dict(DEFAULTS[command])

    if getattr(args, 'config', None):
        loaded = read_json(args.config)
        section = loaded.get('params', loaded.get(command, loaded))
        unknown = sorted(set(section) - set(params) - {'command'})
        if unknown:
            raise UsageError(f"config file {args.config} has unknown keys for '{command}': {', '.join(unknown)}")
        params.update({k: v for k, v in section.items() if k != 'command'})

    for key in params:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value

    for key in REQUIRED.get(command, ()):
        if params.get(key) is None:
            raise UsageError(f"'{command}' needs --{key.replace('_', '-')}")
    if 'max_iter' in params:
        _fill_method_defaults(params)
    if 'workers' in params and params['workers'] is None:
        params['workers'] = default_workers()
    for key in ('lambda_grid', 'eta_grid'):
        if key in params:
            params[key] = _float_list(params[key])

    debug_print(f"resolved {command} config: {params}")
    return RunConfig(command=command, params=params)


def build_parser():
    parser = RCTArgumentParser(description="Robust regression with coefficient thresholding")
    sub = parser.add_subparsers(dest='command', parser_class=RCTArgumentParser)
    sub.required = True

    def common(p):
        p.add_argument('--config', help="JSON file with parameter values (flags win over it)")
        p.add_argument('--output', help="output path")

    gen = sub.add_parser('generate', help="sample a simulation dataset")
    common(gen)
    gen.add_argument('--model', type=int, help="simulation model 1-10")
    gen.add_argument('--case', choices=['a', 'b', 'c'])
    gen.add_argument('--n', type=int)
    gen.add_argument('--p', type=int)
    gen.add_argument('--seed', type=int)
    gen.add_argument('--support-size', dest='support_size', type=int, help="nonzeros for Models 1-6")

    def solver(p):
        p.add_argument('--data', help="dataset CSV with a y column")
        p.add_argument('--groups', help="groups file, or 'singleton'")
        p.add_argument('--standardize', action='store_const', const=True)
        p.add_argument('--method', choices=list(METHODS))
        p.add_argument('--lambda', dest='lam', type=float)
        p.add_argument('--eta', type=float)
        p.add_argument('--tau', type=float)
        p.add_argument('--step', type=float)
        p.add_argument('--radius', type=float)
        p.add_argument('--omega', type=float, help="pseudo-Huber scale; default 1.345 x MAD of y")
        p.add_argument('--max-iter', dest='max_iter', type=int)
        p.add_argument('--tol', type=float)
        p.add_argument('--threshold-mode', dest='threshold_mode', choices=list(THRESHOLD_MODES))
        p.add_argument('--backtrack', action='store_const', const=True)
        p.add_argument('--folds', type=int)
        p.add_argument('--seed', type=int)

    fit = sub.add_parser('fit', help="fit one model")
    common(fit)
    solver(fit)

    cv = sub.add_parser('cv', help="cross-validate (lambda, eta)")
    common(cv)
    solver(cv)
    cv.add_argument('--rule', choices=list(TUNING_RULES))
    cv.add_argument('--lambda-grid', dest='lambda_grid', help="comma-separated lambdas")
    cv.add_argument('--eta-grid', dest='eta_grid', help="comma-separated etas")
    cv.add_argument('--refit', action='store_const', const=True)
    cv.add_argument('--workers', type=int)

    bench = sub.add_parser('benchmark', help="replicate simulation tables")
    common(bench)
    bench.add_argument('--models', help="comma-separated labels such as 1a,2a,3a")
    bench.add_argument('--methods', help=f"comma-separated subset of {','.join(METHODS)}")
    bench.add_argument('--replications', type=int)
    bench.add_argument('--n', type=int)
    bench.add_argument('--p', type=int)
    bench.add_argument('--base-seed', dest='base_seed', type=int)
    bench.add_argument('--rule', choices=list(TUNING_RULES))
    bench.add_argument('--folds', type=int)
    bench.add_argument('--support-size', dest='support_size', type=int)
    bench.add_argument('--workers', type=int)

    check = sub.add_parser('check', help="run the numerical self-checks")
    common(check)
    check.add_argument('--seed', type=int)
    return parser


# ==================== SHARED HELPERS ====================

def load_data(config):
    groups_arg = config.groups
    data = read_dataset(config.data, None if groups_arg in (None, 'singleton') else groups_arg, config.standardize)
    if groups_arg == 'singleton' or data.groups is None:
        groups = GroupPartition.singletons(data.p)
    else:
        groups = data.groups
    return data, groups


def solver_config(config):
    return SolverConfig(
        lam=config.lam,
        step=config.step,
        radius=config.radius,
        thresh=ThresholdParams(config.tau, config.eta),
        huber=HuberParams(config.omega) if config.omega is not None else None,
        max_iter=config.max_iter,
        tol=config.tol,
        threshold_mode=config.threshold_mode,
        backtrack=bool(config.backtrack),
    )


def _fit_method(config, data, groups, lam, eta=None, pilot=None, init=None):
    if config.method == 'rct':
        solver = replace(solver_config(config), init=init)
        solver = solver if eta is None else solver.with_eta(eta)
        return fit_rct(data, groups, replace(solver, lam=lam))
    controls = ConvergenceControls(max_iter=config.max_iter, tol=config.tol)
    if config.method == 'lasso':
        return fit_lasso(data, lam, controls)
    if pilot is None:
        pilot, _ = fit_lasso_pilot(data, config.folds, seed=config.seed)
    return fit_adaptive_lasso(data, lam, pilot, controls)


def _summary_line(fit):
    return (f"{fit.method}: {fit.iterations} iterations ({fit.stop_reason}), "
            f"{len(fit.active_groups)} active groups, stationarity {fit.final_stationarity:.3e}")


# ==================== COMMANDS ====================

def cmd_generate(config):
    get_model(config.model)
    data = sample_dataset(config.model, config.case, config.n, config.p, config.seed, config.support_size)
    data = replace(data, meta=dict(data.meta, config=config.to_dict()))
    write_dataset(data, config.output)
    print(f"Generated model {config.model}{config.case}: n={data.n} p={data.p} "
          f"support={len(data.meta['support'])} seed={config.seed} -> {config.output}")
    return EXIT_OK


def cmd_fit(config):
    data, groups = load_data(config)
    fit = _fit_method(config, data, groups, config.lam)
    report = {'config': config.to_dict(), 'dataset': {'path': config.data, 'n': data.n, 'p': data.p},
              'fit': fit.to_dict(include_traces=True)}
    if data.truth is not None:
        report['metrics'] = evaluate_fit(fit, data.truth, data.groups).to_dict()
    print(_summary_line(fit))
    if not fit.converged:
        print(f"WARNING: stopped at max_iter={config.max_iter} before reaching tol={config.tol}")
    if config.output:
        write_json(report, config.output)
        print(f"Wrote {config.output}")
    return EXIT_OK


def cmd_cv(config):
    data, groups = load_data(config)
    init = None
    if config.method == 'rct':
        # The full-data pilot shapes the η grid and starts the refit; each
        # fold starts from a pilot fitted on its own training rows.
        pilot, _ = fit_lasso_pilot(data, config.folds, seed=config.seed, workers=config.workers)
        init = pilot.beta
        cv = tune_rct(data, groups, solver_config(config), config.rule, config.folds, config.seed, config.workers,
                      pilot=pilot, lambda_grid=config.lambda_grid, eta_grid=config.eta_grid, warm_start=False,
                      pilot_start=True)
    else:
        controls = ConvergenceControls(max_iter=config.max_iter, tol=config.tol)
        grid = config.lambda_grid or lasso_lambda_grid(data)
        cv = cross_validate_lasso(data, grid, config.folds, controls, config.seed, config.workers,
                                  adaptive=config.method == 'adalasso')

    lambdas = sorted({lam for lam, _ in cv.grid})
    report = {'config': config.to_dict(), 'cv': cv.to_dict(),
              'lambda_on_boundary': cv.best_lambda in (lambdas[0], lambdas[-1]) and len(lambdas) > 1}
    print(f"Selected lambda={cv.best_lambda:.6g} eta={cv.best_eta:.6g} "
          f"(mean held-out l1 error {min(cv.fold_errors):.6g}, {len(cv.grid)} grid points)")

    if config.refit:
        fit = _fit_method(config, data, groups, cv.best_lambda, eta=cv.best_eta, init=init)
        report['fit'] = fit.to_dict()
        if data.truth is not None:
            report['metrics'] = evaluate_fit(fit, data.truth, data.groups).to_dict()
        print(_summary_line(fit))
    if config.output:
        write_json(report, config.output)
        print(f"Wrote {config.output}")
    return EXIT_OK


def cmd_benchmark(config):
    models = _name_list(config.models)
    methods = _name_list(config.methods)
    print("=" * 60)
    print(f"Benchmark: models {', '.join(models)} | methods {', '.join(methods)} | "
          f"{config.replications} replications")
    print("=" * 60)
    table = run_benchmark(models, n=config.n, p=config.p, replications=config.replications, methods=methods,
                          base_seed=config.base_seed, rule=config.rule, folds=config.folds,
                          workers=config.workers, support_size=config.support_size, config=config.to_dict())
    csv_path = f"{config.output}.csv"
    json_path = f"{config.output}.json"
    table.to_csv(csv_path)
    write_json(table.to_dict(), json_path)
    print(f"\nWrote {csv_path} and {json_path}")
    if table.failures:
        print(f"Note: {table.failures} replication(s) failed and are excluded from the means")
    return EXIT_OK


def cmd_check(config, gradient_fn=empirical_gradient):
    results = run_all_checks(config.seed, gradient_fn=gradient_fn)
    for result in results:
        status = '[PASS]' if result.passed else '[FAIL]'
        print(f"{status} {result.name:<20} measured={result.measured:.3e} threshold={result.threshold:.1e} "
              f"{result.detail}")
    if config.output:
        write_json({'config': config.to_dict(), 'checks': [r.to_dict() for r in results]}, config.output)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"WARNING: {len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {
    'generate': cmd_generate,
    'fit': cmd_fit,
    'cv': cmd_cv,
    'benchmark': cmd_benchmark,
    'check': cmd_check,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        config = resolve_config(args)
        return COMMANDS[config.command](config)
    except (ParameterError, FormatError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"ERROR: {e.strerror or e}: {e.filename}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        print(f"ERROR: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
