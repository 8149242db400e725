"""
Handlers module for the HDLSS score bias toolkit.
Contains the command handlers behind `simulate`, `scores` and `reproduce`.
"""
import logging
from dataclasses import replace
from typing import Dict, List, Optional

import numpy as np

from ..states.app_state import AppState, CliConfig
from ..states.errors import DataError, InvalidInput, UsageError
from ..states.models import ExperimentReport, ExperimentSpec, MixtureSpec, ScorePairTable, SpikeSpec
from ..views.report_views import ProgressView, SummaryView
from . import bias_handlers as bias
from . import csv_handlers as csv_io
from . import pca_handlers as pca
from .experiment_handlers import REFERENCE_ESTIMATORS, ExperimentHandler, model_spec
from .numerics_handlers import derive_seed, rng_algorithm_id
from .procrustes_handlers import fit_scale_rotation
from .simulate_handlers import generate, oracle_scores

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EXCLUDED = 2
EXIT_USAGE = 64
EXIT_DATA = 65

TARGETS = ("table1", "table2", "table3", "fig1", "fig3", "fig4")

# (model, parameter name, parameter value) x (d, n)
TABLE2_MODELS = (("spike", "beta", 0.3), ("spike", "beta", 0.5), ("mixture", "a", 0.15))
TABLE2_SIZES = ((5000, 50), (10000, 50), (10000, 100), (20000, 100))

TABLE2_COLUMNS = ["config", "model", "param", "d", "n", "component", "estimator",
                  "mean", "sd", "count", "excluded"]


def _degenerate_cells(report: ExperimentReport) -> int:
    return sum(1 for row in report.ok_rows() if row.get("degenerate"))


class CommandHandler:
    """
    Handler for the command-line commands
    """
    def __init__(self, app_state: AppState, summary: Optional[SummaryView] = None):
        self.app_state = app_state
        self.summary = summary if summary is not None else SummaryView()
        self.experiments = ExperimentHandler(app_state)
        self.progress = ProgressView(app_state)

    def run_command(self, config: CliConfig) -> int:
        """
        Run one command and map its outcome to an exit code

        :param config: Resolved configuration
        :return: Exit code
        """
        commands = {
            "simulate": self.cmd_simulate,
            "scores": self.cmd_scores,
            "reproduce": self.cmd_reproduce,
        }
        try:
            if config.command not in commands:
                raise UsageError(f"unknown command '{config.command}'")
            if config.manifest:
                self.summary.show_manifest(config, rng_algorithm_id())
            return commands[config.command](config)
        except UsageError as e:
            logger.error(f"Usage error: {e}")
            return EXIT_USAGE
        except DataError as e:
            logger.error(f"Data error: {e}")
            return EXIT_DATA
        except Exception as e:
            logger.exception(f"Internal error: {e}")
            return EXIT_ERROR
        finally:
            self.app_state.reset()

    def cmd_simulate(self, config: CliConfig) -> int:
        """
        Generate a dataset and write it with its oracle sidecar files

        :param config: Resolved configuration
        :return: Exit code
        """
        d = config.d if config.d is not None else 1000
        n = config.n if config.n is not None else 20
        n_test = config.n_test if config.n_test is not None else 20
        if config.model == "spike":
            spec = SpikeSpec(d=d, n=n, m=config.m, sigma_sq=tuple(config.sigma_sq), beta=config.beta,
                             seed=config.seed, rotate_frame=config.rotate_frame)
        elif config.model == "mixture":
            spec = MixtureSpec(d=d, n=n, a=config.a, probs=tuple(config.probs), seed=config.seed)
        else:
            raise UsageError(f"unknown model '{config.model}', expected spike or mixture")

        dataset = generate(spec, n_test)
        out = config.out or "data.csv"
        metadata = {"model": config.model, "d": str(d), "n": str(n), "n_test": str(n_test),
                    "seed": str(config.seed), "rng": rng_algorithm_id()}
        paths = csv_io.write_dataset(out, dataset, config.full_precision, metadata)
        self.summary.show_files(paths)
        return EXIT_OK

    def cmd_scores(self, config: CliConfig) -> int:
        """
        Fit PCA on a training CSV, estimate the bias factors and write raw and
        adjusted sample (and, given a test CSV, prediction) scores

        :param config: Resolved configuration
        :return: Exit code
        """
        if not config.train:
            raise UsageError("scores needs --train PATH")
        if config.estimator not in bias.DATA_ESTIMATORS:
            raise UsageError(f"unknown estimator '{config.estimator}', expected one of {bias.DATA_ESTIMATORS}")
        X = csv_io.read_matrix(config.train)
        d, n = X.shape
        m = config.m
        center = bool(config.center)
        n_eff = n - 1 if center else n
        if m < 1 or m >= n_eff:
            raise InvalidInput(f"m={m} must satisfy 1 <= m < n={n_eff}: the noise level estimate "
                               f"averages the n - m trailing sample eigenvalues")
        if d <= n:
            logger.warning(f"d={d} <= n={n}: high-dimension low-sample-size assumptions do not hold")

        fit = pca.fit(X, center)
        factors = bias.estimate_factors(fit, X, m, d, config.estimator, threads=config.threads)
        if np.any(factors.rho < 1):
            logger.warning(f"{config.estimator} factors below 1: {factors.rho}")

        out = config.out or "scores.csv"
        fp = config.full_precision
        metadata = {"train": config.train, "m": str(m), "centered": str(center).lower(),
                    "estimator": config.estimator}
        sample = pca.sample_scores(fit, m)
        paths = [
            csv_io.write_scores(csv_io.derived_path(out, "sample"), sample, fp, metadata),
            csv_io.write_scores(csv_io.derived_path(out, "sample_adjusted"), bias.adjust(sample, factors),
                                fp, metadata),
        ]
        paths += csv_io.write_factors(csv_io.derived_path(out, "factors"), factors, fp, metadata)
        if config.test:
            prediction = pca.predict_scores(fit, csv_io.read_matrix(config.test), m)
            paths += [
                csv_io.write_scores(csv_io.derived_path(out, "prediction"), prediction, fp, metadata),
                csv_io.write_scores(csv_io.derived_path(out, "prediction_adjusted"),
                                    bias.adjust(prediction, factors), fp, metadata),
            ]
        self.summary.show_values(f"{config.estimator} factors",
                                 {f"rho_{k + 1}": float(r) for k, r in enumerate(factors.rho)})
        self.summary.show_files(paths)
        return EXIT_OK

    def _experiment_spec(self, config: CliConfig, **defaults) -> ExperimentSpec:
        values = {
            "master_seed": config.seed,
            "m": config.m,
            "sigma_sq": tuple(config.sigma_sq),
            "beta": config.beta,
            "a": config.a,
            "probs": tuple(config.probs),
            "rotate_frame": config.rotate_frame,
            "threads": config.threads,
        }
        values.update(defaults)
        for name in ("d", "n", "n_test", "reps", "center", "estimators"):
            value = getattr(config, name)
            if value is not None:
                values[name] = tuple(value) if name == "estimators" else value
        return ExperimentSpec(**values)

    def cmd_reproduce(self, config: CliConfig) -> int:
        """
        Rerun one of the simulation tables or figures

        :param config: Resolved configuration (config.target names the study)
        :return: EXIT_OK, or EXIT_EXCLUDED when repetitions or estimator
                 cells were dropped as degenerate
        """
        targets = {
            "table1": self._reproduce_table1,
            "table2": self._reproduce_table2,
            "table3": self._reproduce_table3,
            "fig1": self._reproduce_fig1,
            "fig3": self._reproduce_fig3,
            "fig4": self._reproduce_fig4,
        }
        if config.target not in targets:
            raise UsageError(f"unknown target '{config.target}', expected one of {TARGETS}")
        out = config.out or f"{config.target}.csv"
        dropped = targets[config.target](config, out)
        if dropped:
            logger.warning(f"{config.target}: {dropped} degenerate repetitions or estimator cells excluded")
            return EXIT_EXCLUDED
        return EXIT_OK

    def _finish_report(self, report: ExperimentReport, path: str, config: CliConfig) -> int:
        self.summary.show_files([csv_io.write_report(path, report, config.full_precision)])
        self.summary.show_report(report)
        return report.excluded + _degenerate_cells(report)

    def _reproduce_table1(self, config: CliConfig, out: str) -> int:
        spec = self._experiment_spec(config, model="spike", d=5000, n=50, n_test=100, reps=100)
        report = self.experiments.run_noise_component_table(spec, config.k)
        return self._finish_report(report, out, config)

    def _reproduce_table2(self, config: CliConfig, out: str) -> int:
        summary_rows: List[Dict[str, object]] = []
        dropped = 0
        for model, param, value in TABLE2_MODELS:
            for d, n in TABLE2_SIZES:
                spec = self._experiment_spec(config, model=model, n_test=20, reps=100)
                spec = replace(spec, d=d, n=n, **{param: value})
                report = self.experiments.run_bias_table(spec)
                dropped += self._finish_report(report, csv_io.derived_path(out, spec.label()), config)
                aggregate = report.aggregate()
                estimators = tuple(spec.estimators) + tuple(e for e in REFERENCE_ESTIMATORS
                                                            if e not in spec.estimators)
                for estimator in estimators:
                    if f"rho_{estimator}_1" not in report.columns:
                        continue
                    for k in range(spec.m):
                        mean, sd, count = aggregate.get(f"rho_{estimator}_{k + 1}", (None, None, 0))
                        summary_rows.append({
                            "config": spec.label(), "model": model, "param": f"{param}={value:g}",
                            "d": d, "n": n, "component": k + 1, "estimator": estimator,
                            "mean": mean, "sd": sd, "count": count, "excluded": report.excluded,
                        })
        metadata = {"experiment": "table2", "master_seed": str(config.seed), "rng": rng_algorithm_id()}
        self.summary.show_files([csv_io.write_rows(out, TABLE2_COLUMNS, summary_rows,
                                                   config.full_precision, metadata)])
        return dropped

    def _reproduce_table3(self, config: CliConfig, out: str) -> int:
        spec = self._experiment_spec(config, model="mixture", d=5000, n=100, n_test=100, reps=100)
        report = self.experiments.run_classification_demo(spec)
        return self._finish_report(report, out, config)

    def _write_pairs(self, table: ScorePairTable, out: str, spec: ExperimentSpec, config: CliConfig) -> int:
        metadata = {"experiment": "score_pairs", "config": spec.label(), "master_seed": str(spec.master_seed),
                    "rng": rng_algorithm_id()}
        self.summary.show_files(csv_io.write_score_pairs(out, table, config.full_precision, metadata))
        for row in table.rms:
            self.summary.show_values(f"rep {row['rep']}", {k: v for k, v in row.items()
                                                           if k.startswith(("rho_", "rms_"))})
        return sum(1 for row in table.rms if row.get("status") != "ok")

    def _reproduce_fig1(self, config: CliConfig, out: str) -> int:
        spec = self._experiment_spec(config, model="spike", d=10000, n=50, n_test=20, reps=1)
        return self._write_pairs(self.experiments.run_score_pairs(spec), out, spec, config)

    def _reproduce_fig3(self, config: CliConfig, out: str) -> int:
        spec = self._experiment_spec(config, model="spike", d=10000, n=50, n_test=20, reps=1)
        dropped = self._write_pairs(self.experiments.run_score_pairs(spec), out, spec, config)

        # factors and best fit of the first realization, the one plotted
        ds = generate(model_spec(spec, derive_seed(spec.master_seed, 0)), spec.n_test)
        fit = pca.fit(ds.train, spec.centered)
        W1 = oracle_scores(ds.oracle, spec.centered)
        W1_hat = pca.scaled(pca.sample_scores(fit, spec.m), spec.d)
        theory = bias.rho_theory(bias.score_cov(W1), ds.oracle.tau_sq)
        asymptotic = bias.rho_asymptotic(fit, spec.m, spec.d)
        best = fit_scale_rotation(W1, W1_hat)
        fp = config.full_precision
        paths = csv_io.write_factors(csv_io.derived_path(out, "factors_theory"), theory, fp)
        paths += csv_io.write_factors(csv_io.derived_path(out, "factors_asymptotic"), asymptotic, fp)
        paths.append(csv_io.write_procrustes(csv_io.derived_path(out, "procrustes"), best, fp))
        self.summary.show_files(paths)
        values = {f"rho_theory_{k + 1}": float(r) for k, r in enumerate(theory.rho)}
        values.update({f"rho_asymptotic_{k + 1}": float(r) for k, r in enumerate(asymptotic.rho)})
        values.update({f"scale_best_{k + 1}": float(s) for k, s in enumerate(best.scale)})
        if best.theta is not None:
            values["theta_best_deg"] = float(np.degrees(best.theta))
        self.summary.show_values("fig3 realization", values)
        return dropped

    def _reproduce_fig4(self, config: CliConfig, out: str) -> int:
        spec = self._experiment_spec(config, model="spike", d=10000, n=50, n_test=100, reps=100)
        report = self.experiments.run_correlation_figure(spec)
        return self._finish_report(report, out, config)


def run_command(config: CliConfig, app_state: Optional[AppState] = None) -> int:
    """Run one resolved command with a fresh handler"""
    return CommandHandler(app_state if app_state is not None else AppState()).run_command(config)
