"""
Experiment Handlers - Monte-Carlo repetitions behind the tables and figures

Every repetition is a pure function of (spec, rep index): its dataset seed
is derived from the master seed, so results do not depend on the number of
worker threads. Degenerate repetitions are kept as flagged rows and left out
of the aggregates.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..states.app_state import AppState
from ..states.errors import (DegenerateInput, DegenerateScore, DegenerateSignal, DegenerateSpectrum,
                             InvalidInput, InvalidSpec, RankExceeded)
from ..states.models import (ESTIMATORS, BiasFactors, ExperimentReport, ExperimentSpec, MixtureSpec,
                             ScoreMatrix, ScorePairTable, SpikeSpec)
from . import bias_handlers as bias
from . import pca_handlers as pca
from .classifier_handlers import error_rate, train_classifier
from .numerics_handlers import derive_seed, rng_algorithm_id
from .procrustes_handlers import fit_scale_rotation
from .simulate_handlers import generate, oracle_scores, oracle_test_scores

logger = logging.getLogger(__name__)

# failures that exclude one repetition instead of aborting the experiment
DEGENERATE_ERRORS = (DegenerateSignal, DegenerateScore, DegenerateInput, RankExceeded)
# oracle-side factors every bias table carries
REFERENCE_ESTIMATORS = ("theory", "best")


def validate_spec(spec: ExperimentSpec):
    """
    Check an experiment specification before any repetition runs

    :param spec: Experiment specification
    """
    if spec.model not in ("spike", "mixture"):
        raise InvalidSpec(f"unknown model '{spec.model}'")
    if spec.reps < 1:
        raise InvalidSpec(f"reps must be >= 1, got {spec.reps}")
    if not spec.estimators:
        raise InvalidSpec("at least one estimator is required")
    unknown = [e for e in spec.estimators if e not in ESTIMATORS]
    if unknown:
        raise InvalidSpec(f"unknown estimators {unknown}, expected a subset of {ESTIMATORS}")
    if spec.threads < 1:
        raise InvalidSpec(f"threads must be >= 1, got {spec.threads}")
    if spec.model == "mixture" and spec.m != 2:
        raise InvalidSpec(f"the mixture model has m = 2, got m={spec.m}")
    if spec.model == "spike" and len(spec.sigma_sq) != spec.m:
        raise InvalidSpec(f"sigma_sq has {len(spec.sigma_sq)} entries for m={spec.m}")


def model_spec(spec: ExperimentSpec, seed: int, d: Optional[int] = None) -> Union[SpikeSpec, MixtureSpec]:
    """Population specification of one repetition"""
    d = spec.d if d is None else d
    if spec.model == "spike":
        return SpikeSpec(d=d, n=spec.n, m=spec.m, sigma_sq=tuple(spec.sigma_sq), beta=spec.beta,
                         seed=seed, rotate_frame=spec.rotate_frame)
    return MixtureSpec(d=d, n=spec.n, a=spec.a, probs=tuple(spec.probs), seed=seed)


def _per_component(prefix: str, values) -> Dict[str, float]:
    return {f"{prefix}_{k + 1}": float(v) for k, v in enumerate(np.ravel(values))}


def _component_columns(prefix: str, m: int) -> List[str]:
    return [f"{prefix}_{k + 1}" for k in range(m)]


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.corrcoef(a, b)[0, 1])


def _metadata(name: str, spec: ExperimentSpec) -> Dict[str, str]:
    return {
        "experiment": name,
        "config": spec.label(),
        "model": spec.model,
        "d": str(spec.d),
        "n": str(spec.n),
        "n_test": str(spec.n_test),
        "m": str(spec.m),
        "reps": str(spec.reps),
        "master_seed": str(spec.master_seed),
        "centered": str(spec.centered).lower(),
        "rng": rng_algorithm_id(),
    }


class ExperimentHandler:
    """
    Runs experiments and reports progress through the shared AppState
    """
    def __init__(self, app_state: Optional[AppState] = None):
        self.app_state = app_state if app_state is not None else AppState()

    def _map_reps(self, name: str, spec: ExperimentSpec,
                  rep_fn: Callable[[int, int], object]) -> List[Tuple[int, int, object, Optional[str]]]:
        """
        Run rep_fn(rep, seed) for every repetition

        :return: (rep, seed, result, reason) in rep order; result is None and
                 reason set for degenerate repetitions
        """
        validate_spec(spec)
        seeds = [derive_seed(spec.master_seed, rep) for rep in range(spec.reps)]

        def task(rep: int):
            try:
                return rep, seeds[rep], rep_fn(rep, seeds[rep]), None
            except DEGENERATE_ERRORS as e:
                return rep, seeds[rep], None, f"{type(e).__name__}: {e}"

        self.app_state.start_run(name, spec.reps)
        results = []
        try:
            if spec.threads > 1:
                with ThreadPoolExecutor(max_workers=spec.threads) as executor:
                    outcomes = executor.map(task, range(spec.reps))
                    for outcome in outcomes:
                        results.append(self._record(name, outcome))
            else:
                for rep in range(spec.reps):
                    results.append(self._record(name, task(rep)))
        finally:
            self.app_state.finish_run()
        return results

    def _record(self, name: str, outcome):
        rep, _, _, reason = outcome
        if reason is not None:
            logger.warning(f"{name}: excluding repetition {rep} ({reason})")
        self.app_state.record_repetition(rep, reason)
        return outcome

    def _report(self, name: str, spec: ExperimentSpec, columns: List[str], outcomes) -> ExperimentReport:
        report = ExperimentReport(name=name, columns=["rep", "seed"] + columns + ["status", "reason"],
                                  metadata=_metadata(name, spec))
        for rep, seed, row, reason in outcomes:
            record = {"rep": rep, "seed": seed}
            if row is None:
                record.update({column: None for column in columns})
                record.update(status="degenerate", reason=reason)
            else:
                record.update(row)
                record.update(status="ok", reason="")
            report.rows.append(record)
        report.metadata["excluded"] = str(report.excluded)
        if report.excluded:
            logger.warning(f"{name}: {report.excluded} of {spec.reps} repetitions excluded")
        return report

    def run_bias_table(self, spec: ExperimentSpec) -> ExperimentReport:
        """
        Per repetition: all requested rho estimators, plus rotation angles and
        eigenvalue inflation. The oracle rho and the Procrustes best fit are
        always reported as reference columns, requested or not.

        :param spec: Experiment specification
        :return: ExperimentReport
        """
        m = spec.m
        estimators = tuple(spec.estimators) + tuple(e for e in REFERENCE_ESTIMATORS if e not in spec.estimators)
        columns = []
        for estimator in estimators:
            columns += _component_columns(f"rho_{estimator}", m)
        if m == 2:
            columns += ["theta_theory_deg", "theta_best_deg"]
        columns += _component_columns("inflation", m) + _component_columns("inflation_theory", m)
        columns += ["undershoot", "degenerate"]

        def rep_fn(rep: int, seed: int):
            ds = generate(model_spec(spec, seed), spec.n_test)
            fit = pca.fit(ds.train, spec.centered)
            W1 = oracle_scores(ds.oracle, spec.centered)
            W1_hat = pca.scaled(pca.sample_scores(fit, m), spec.d)
            theory = bias.rho_theory(bias.score_cov(W1), ds.oracle.tau_sq)
            loo = None
            if any(e.startswith("jackknife") for e in spec.estimators):
                loo = pca.loo_fits(ds.train, m, spec.centered, full=fit)

            row = {"theta_best_deg": None} if m == 2 else {}
            undershoot = []
            failed = []
            for estimator in estimators:
                try:
                    if estimator == "theory":
                        rho = theory.rho
                    elif estimator == "best":
                        best = fit_scale_rotation(W1, W1_hat)
                        rho = best.scale
                        if best.theta is not None:
                            row["theta_best_deg"] = float(np.degrees(best.theta))
                    else:
                        rho = bias.estimate_factors(fit, ds.train, m, spec.d, estimator, loo=loo).rho
                        if np.any(rho < 1):
                            undershoot.append(estimator)
                except (DegenerateSignal, DegenerateScore, DegenerateInput) as e:
                    # one estimator failing blanks its cells, the repetition stays
                    logger.warning(f"Repetition {rep}: {estimator} degenerate ({e})")
                    failed.append(estimator)
                    rho = [None] * m
                row.update({f"rho_{estimator}_{k + 1}": None if r is None else float(r)
                            for k, r in enumerate(rho)})
            if m == 2:
                R = bias.align_rotation(theory.rotation, W1, W1_hat)
                row["theta_theory_deg"] = float(np.degrees(bias.rotation_angle(R)))

            row.update(_per_component("inflation", fit.variances[:m] / ds.oracle.population_eigs[:m]))
            try:
                row.update(_per_component("inflation_theory",
                                          bias.eigen_inflation(ds.oracle.sigma_sq, ds.oracle.tau_sq, spec.n)))
            except DegenerateSpectrum:
                row.update({column: None for column in _component_columns("inflation_theory", m)})
            if undershoot:
                logger.warning(f"Repetition {rep}: estimators below 1: {', '.join(undershoot)}")
            row["undershoot"] = ";".join(undershoot)
            row["degenerate"] = ";".join(failed)
            return row

        return self._report("bias_table", spec, columns, self._map_reps("bias_table", spec, rep_fn))

    def run_noise_component_table(self, spec: ExperimentSpec, k: int) -> ExperimentReport:
        """
        Behaviour of a pure-noise component k > m: score variances and
        correlations with the true kth scores

        :param spec: Spike-model experiment specification
        :param k: Component index (1-based), k > m
        :return: ExperimentReport
        """
        if k <= spec.m:
            raise InvalidInput(f"noise component k must exceed m={spec.m}, got {k}")
        if spec.model != "spike":
            raise InvalidInput("noise components are defined for the spike model only")
        columns = ["var_sample", "var_prediction", "corr_sample", "corr_prediction",
                   "lambda_pop", "var_prediction_limit"]

        def rep_fn(rep: int, seed: int):
            ds = generate(model_spec(spec, seed), spec.n_test)
            fit = pca.fit(ds.train, spec.centered)
            sample = pca.sample_scores(fit, k).values[k - 1]
            prediction = pca.predict_scores(fit, ds.test, k).values[k - 1]
            true_train = ds.oracle.project(ds.train, [k])[0]
            true_test = ds.oracle.project(ds.test, [k])[0]
            lam = ds.oracle.population_eigs
            upsilon_sq = float(np.sum(lam[spec.m:] ** 2) / spec.d)
            return {
                "var_sample": float(np.var(sample, ddof=1)),
                "var_prediction": float(np.var(prediction, ddof=1)),
                "corr_sample": _corr(sample, true_train),
                "corr_prediction": _corr(prediction, true_test),
                "lambda_pop": float(lam[k - 1]),
                "var_prediction_limit": upsilon_sq / ds.oracle.tau_sq,
            }

        name = f"noise_component_k{k}"
        report = self._report(name, spec, columns, self._map_reps(name, spec, rep_fn))
        report.metadata["k"] = str(k)
        return report

    def run_correlation_figure(self, spec: ExperimentSpec) -> ExperimentReport:
        """
        Empirical |r| of sample and prediction scores with the true scores,
        paired with their large-d limits, plus oracle and Procrustes angles

        :param spec: Experiment specification
        :return: ExperimentReport
        """
        m = spec.m
        if m < 1:
            raise InvalidInput(f"m must be >= 1, got {m}")
        columns = (_component_columns("corr_sample", m) + _component_columns("corr_sample_limit", m)
                   + _component_columns("corr_prediction", m) + _component_columns("corr_prediction_limit", m))
        if m == 2:
            columns += ["theta_theory_deg", "theta_best_deg"]
        columns += _component_columns("rho_theory", m) + _component_columns("rho_best", m)

        def rep_fn(rep: int, seed: int):
            ds = generate(model_spec(spec, seed), spec.n_test)
            fit = pca.fit(ds.train, spec.centered)
            W1 = oracle_scores(ds.oracle, spec.centered)
            W_test = oracle_test_scores(ds, spec.centered)
            W1_hat = pca.scaled(pca.sample_scores(fit, m), spec.d)
            W_pred = pca.scaled(pca.predict_scores(fit, ds.test, m), spec.d)
            cov = bias.score_cov(W1)
            limits = bias.theory_limits(ds.oracle, cov)
            theory = bias.rho_theory(cov, ds.oracle.tau_sq)
            best = fit_scale_rotation(W1, W1_hat)

            row = {}
            row.update(_per_component("corr_sample", [abs(_corr(W1_hat.values[i], W1.values[i])) for i in range(m)]))
            row.update(_per_component("corr_sample_limit", np.abs(np.diag(limits.corr_limits))))
            row.update(_per_component("corr_prediction",
                                      [abs(_corr(W_pred.values[i], W_test.values[i])) for i in range(m)]))
            row.update(_per_component("corr_prediction_limit", np.abs(np.diag(limits.pred_corr_limits))))
            if m == 2:
                R = bias.align_rotation(theory.rotation, W1, W1_hat)
                row["theta_theory_deg"] = float(np.degrees(bias.rotation_angle(R)))
                row["theta_best_deg"] = float(np.degrees(best.theta))
            row.update(_per_component("rho_theory", theory.rho))
            row.update(_per_component("rho_best", best.scale))
            return row

        return self._report("correlation_figure", spec, columns,
                            self._map_reps("correlation_figure", spec, rep_fn))

    def run_score_pairs(self, spec: ExperimentSpec, factors: Optional[Sequence[float]] = None) -> ScorePairTable:
        """
        Long-format (true, estimated, adjusted) scaled score pairs

        Estimated scores are sign-aligned to the true training scores and
        adjusted with the asymptotic estimator, or with fixed factors when
        given.

        :param spec: Experiment specification with m = 2
        :param factors: Optional fixed rho values replacing the estimate
        :return: ScorePairTable
        """
        m = spec.m
        if m != 2:
            raise InvalidInput(f"score pairs are produced for m = 2, got m={m}")
        columns = (["rep", "set", "obs", "label"] + _component_columns("true", m)
                   + _component_columns("est", m) + _component_columns("adj", m))

        def rep_fn(rep: int, seed: int):
            ds = generate(model_spec(spec, seed), spec.n_test)
            fit = pca.fit(ds.train, spec.centered)
            W1 = oracle_scores(ds.oracle, spec.centered).values
            W_test = oracle_test_scores(ds, spec.centered).values
            sample = pca.sample_scores(fit, m)
            prediction = pca.predict_scores(fit, ds.test, m)
            signs = np.where(np.sum(sample.values * W1, axis=1) < 0, -1.0, 1.0)[:, None]
            sample = ScoreMatrix(values=sample.values * signs, kind="sample")
            prediction = ScoreMatrix(values=prediction.values * signs, kind="prediction")
            if factors is None:
                rho = bias.rho_asymptotic(fit, m, spec.d)
            else:
                rho = BiasFactors(rho=np.asarray(factors, dtype=np.float64), provenance="theory")
            scale = 1.0 / np.sqrt(spec.d)
            parts = {
                "train": (W1, sample.values * scale, bias.adjust(sample, rho).values * scale,
                          ds.oracle.labels),
                "test": (W_test, prediction.values * scale, bias.adjust(prediction, rho).values * scale,
                         ds.oracle_test.labels),
            }
            pairs = []
            rms = {"rho_1": float(rho.rho[0]), "rho_2": float(rho.rho[1])}
            for part, (truth, est, adj, labels) in parts.items():
                for j in range(truth.shape[1]):
                    record = {"rep": rep, "set": part, "obs": j,
                              "label": "" if labels is None else int(labels[j])}
                    record.update(_per_component("true", truth[:, j]))
                    record.update(_per_component("est", est[:, j]))
                    record.update(_per_component("adj", adj[:, j]))
                    pairs.append(record)
                rms[f"rms_{part}_raw"] = float(np.sqrt(np.mean(np.sum((est - truth) ** 2, axis=0))))
                rms[f"rms_{part}_adj"] = float(np.sqrt(np.mean(np.sum((adj - truth) ** 2, axis=0))))
            return pairs, rms

        table = ScorePairTable(columns=columns)
        for rep, seed, result, reason in self._map_reps("score_pairs", spec, rep_fn):
            if result is None:
                table.rms.append({"rep": rep, "seed": seed, "status": "degenerate", "reason": reason})
                continue
            pairs, rms = result
            table.rows.extend(pairs)
            table.rms.append({"rep": rep, "seed": seed, **rms, "status": "ok", "reason": ""})
        return table

    def run_classification_demo(self, spec: ExperimentSpec) -> ExperimentReport:
        """
        Train/test error of a linear classifier on unadjusted and on
        bias-adjusted scores of the mixture model

        :param spec: Mixture-model experiment specification with m = 2
        :return: ExperimentReport with error percents
        """
        if spec.model != "mixture" or spec.m != 2:
            raise InvalidInput("the classification demo runs on the mixture model with m = 2")
        columns = ["train_err_raw", "test_err_raw", "train_err_adj", "test_err_adj", "rho_1", "rho_2"]

        def rep_fn(rep: int, seed: int):
            ds = generate(model_spec(spec, seed), spec.n_test)
            fit = pca.fit(ds.train, spec.centered)
            sample = pca.sample_scores(fit, spec.m)
            prediction = pca.predict_scores(fit, ds.test, spec.m)
            factors = bias.rho_asymptotic(fit, spec.m, spec.d)
            raw = train_classifier(sample, ds.oracle.labels)
            adj_sample, adj_prediction = bias.adjust(sample, factors), bias.adjust(prediction, factors)
            adjusted = train_classifier(adj_sample, ds.oracle.labels)
            return {
                "train_err_raw": error_rate(raw, sample, ds.oracle.labels),
                "test_err_raw": error_rate(raw, prediction, ds.oracle_test.labels),
                "train_err_adj": error_rate(adjusted, adj_sample, ds.oracle.labels),
                "test_err_adj": error_rate(adjusted, adj_prediction, ds.oracle_test.labels),
                "rho_1": float(factors.rho[0]),
                "rho_2": float(factors.rho[1]),
            }

        return self._report("classification", spec, columns, self._map_reps("classification", spec, rep_fn))

    def run_convergence_study(self, spec: ExperimentSpec, dims: Sequence[int]) -> ExperimentReport:
        """
        Residuals of the scale-rotation approximation and of rho~ as d grows

        Per (d, rep): ||W1_hat - S R^T W1||_F, the prediction residual
        ||W_pred - S^-1 R^T W_test||_F / sqrt(n_test) (oracle S and R) and
        |rho~_k - rho_k|.

        :param spec: Experiment specification (spec.d is ignored)
        :param dims: Dimensions to sweep
        :return: ExperimentReport with one row per (d, rep)
        """
        m = spec.m
        columns = ["d", "sample_residual", "prediction_residual"] + _component_columns("rho_error", m)
        if not dims:
            raise InvalidInput("the convergence study needs at least one dimension")
        report = None
        for d in dims:
            def rep_fn(rep: int, seed: int, d=d):
                ds = generate(model_spec(spec, seed, d), spec.n_test)
                fit = pca.fit(ds.train, spec.centered)
                W1 = oracle_scores(ds.oracle, spec.centered)
                W_test = oracle_test_scores(ds, spec.centered).values
                W1_hat = pca.scaled(pca.sample_scores(fit, m), d)
                W_pred = pca.scaled(pca.predict_scores(fit, ds.test, m), d).values
                theory = bias.rho_theory(bias.score_cov(W1), ds.oracle.tau_sq)
                R = bias.align_rotation(theory.rotation, W1, W1_hat)
                S = theory.rho[:, None]
                estimate = bias.rho_asymptotic(fit, m, d)
                row = {
                    "d": d,
                    "sample_residual": float(np.linalg.norm(W1_hat.values - S * (R.T @ W1.values))),
                    "prediction_residual": float(np.linalg.norm(W_pred - (R.T @ W_test) / S)
                                                 / np.sqrt(spec.n_test)),
                }
                row.update(_per_component("rho_error", np.abs(estimate.rho - theory.rho)))
                return row

            name = f"convergence_d{d}"
            part = self._report("convergence", spec, columns, self._map_reps(name, spec, rep_fn))
            if report is None:
                report = part
            else:
                report.rows.extend(part.rows)
        report.metadata["dims"] = ";".join(str(d) for d in dims)
        report.metadata["d"] = "sweep"
        report.metadata["excluded"] = str(report.excluded)
        return report

    def run_noise_variance_check(self, spec: ExperimentSpec) -> ExperimentReport:
        """
        Variance of the prediction-score residual eps over the test points
        next to its large-d value, for k <= m and averaged over k > m

        :param spec: Experiment specification (large n_test recommended)
        :return: ExperimentReport
        """
        m = spec.m
        columns = (_component_columns("eps_var", m) + _component_columns("eps_var_limit", m)
                   + ["eps_var_noise", "eps_var_noise_limit"])

        def rep_fn(rep: int, seed: int):
            ds = generate(model_spec(spec, seed), spec.n_test)
            fit = pca.fit(ds.train, spec.centered)
            eps = bias.epsilon_decomposition(fit, ds.oracle, ds.test)
            limits = bias.theory_limits(ds.oracle, bias.score_cov(oracle_scores(ds.oracle, spec.centered)))
            variances = np.var(eps, axis=1, ddof=1)
            row = {}
            row.update(_per_component("eps_var", variances[:m]))
            row.update(_per_component("eps_var_limit", limits.eps_var))
            row["eps_var_noise"] = float(np.mean(variances[m:]))
            row["eps_var_noise_limit"] = float(limits.eps_var_noise)
            return row

        return self._report("noise_variance_check", spec, columns,
                            self._map_reps("noise_variance_check", spec, rep_fn))


def run_bias_table(spec: ExperimentSpec, app_state: Optional[AppState] = None) -> ExperimentReport:
    return ExperimentHandler(app_state).run_bias_table(spec)


def run_noise_component_table(spec: ExperimentSpec, k: int,
                              app_state: Optional[AppState] = None) -> ExperimentReport:
    return ExperimentHandler(app_state).run_noise_component_table(spec, k)


def run_correlation_figure(spec: ExperimentSpec, app_state: Optional[AppState] = None) -> ExperimentReport:
    return ExperimentHandler(app_state).run_correlation_figure(spec)


def run_score_pairs(spec: ExperimentSpec, factors: Optional[Sequence[float]] = None,
                    app_state: Optional[AppState] = None) -> ScorePairTable:
    return ExperimentHandler(app_state).run_score_pairs(spec, factors)


def run_classification_demo(spec: ExperimentSpec, app_state: Optional[AppState] = None) -> ExperimentReport:
    return ExperimentHandler(app_state).run_classification_demo(spec)


def run_convergence_study(spec: ExperimentSpec, dims: Sequence[int],
                          app_state: Optional[AppState] = None) -> ExperimentReport:
    return ExperimentHandler(app_state).run_convergence_study(spec, dims)


def run_noise_variance_check(spec: ExperimentSpec, app_state: Optional[AppState] = None) -> ExperimentReport:
    return ExperimentHandler(app_state).run_noise_variance_check(spec)
