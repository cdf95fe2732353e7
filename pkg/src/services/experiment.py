"""Nested cross-validation experiment.

For every method and outer fold, the weight decay is chosen by the mean PLE over the
inner folds, the model is retrained on the whole outer training set and the outer
test cases are predicted. DEW models start from the encoder of the SB model trained
on the same cases.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.data.metrics import dice_coefficient, hausdorff_distance, ple, summarize
from src.reporting.generator import ReportGenerator
from src.services.backends import Backend, FittedModel, Measurement
from src.services.folds import check_no_leakage
from src.utils.config import (
    GROUPING_BY_PATIENT,
    METHOD_DEW,
    METHOD_SB,
    MIN_REGRESSOR_TRAINING_CASES,
    WEIGHT_DECAY_GRID,
)
from src.utils.exceptions import (
    ConfigError,
    FoldPlanError,
    LeakageError,
    MetricError,
    SpleenLenError,
    TrainingDivergedError,
)
from src.utils.models import CasePrediction, FoldPlan, MethodResult, Sample, TrainPlan

logger = logging.getLogger(__name__)

ScoreFn = Callable[[str, float, int, int], float]


def choose_decay(scores: Mapping[float, float]) -> float:
    """Return the decay with the lowest score; ties go to the largest decay."""
    if not scores:
        raise ConfigError("The weight decay grid must not be empty")
    return min(sorted(scores, reverse=True), key=lambda d: scores[d])


def check_coverage(predictions: Sequence[CasePrediction], case_ids: Sequence[int]):
    """Raise FoldPlanError unless every case is predicted exactly once."""
    predicted = [p.case_id for p in predictions]
    if len(predicted) != len(set(predicted)) or set(predicted) != set(case_ids):
        missing = sorted(set(case_ids) - set(predicted))
        raise FoldPlanError(
            f"Predictions do not cover the dataset once (missing {missing[:10]})"
        )


def check_training_sizes(method: str, plan: FoldPlan, inner: bool):
    """Raise FoldPlanError if a regressor would train on fewer than two cases."""
    if method == METHOD_SB:
        return
    splits = [(f"outer fold {k}", plan.outer_train(k)) for k in range(len(plan.outer))]
    if inner:
        splits += [
            (f"inner fold {k}.{j}", plan.inner_split(k, j)[0])
            for k in range(len(plan.outer))
            for j in range(len(plan.inner[k]))
        ]
    for name, train_ids in splits:
        if len(train_ids) < MIN_REGRESSOR_TRAINING_CASES:
            raise FoldPlanError(
                f"{method} cannot train on {len(train_ids)} case(s) in {name}; "
                f"regressors need at least {MIN_REGRESSOR_TRAINING_CASES}"
            )


class ExperimentService:
    """Runs the nested cross-validation for a set of methods.

    Attributes:
        backend (Backend): Trains and predicts.
        grid (List[float]): Weight decay values searched on the inner folds.
        r_mode (str): Pearson R mode passed to :func:`summarize`.
        score_fn (Optional[ScoreFn]): Replaces inner training when given; called with
            (method, decay, outer fold, inner fold) and returns an inner PLE.
    """

    def __init__(
        self,
        backend: Backend,
        grid: Optional[Sequence[float]] = None,
        r_mode: str = "pooled",
        score_fn: Optional[ScoreFn] = None,
    ):
        self.backend = backend
        self.grid = list(WEIGHT_DECAY_GRID if grid is None else grid)
        if not self.grid:
            raise ConfigError("The weight decay grid must not be empty")
        self.r_mode = r_mode
        self.score_fn = score_fn
        self._samples: Dict[int, Sample] = {}
        self._patient_of: Optional[Dict[int, int]] = None
        self._sb_cache: Dict[Tuple[Tuple[int, ...], float], FittedModel] = {}
        self._sb_decays: Dict[int, float] = {}

    def _cases(self, ids: Sequence[int]) -> List[Sample]:
        return [self._samples[i] for i in ids]

    def _fit(
        self,
        method: str,
        train_ids: Sequence[int],
        held_out_ids: Sequence[int],
        decay: float,
        train_plan: TrainPlan,
        encoder_source: Optional[FittedModel] = None,
    ) -> FittedModel:
        check_no_leakage(train_ids, held_out_ids, self._patient_of)
        if encoder_source is not None:
            check_no_leakage(
                encoder_source.train_case_ids, held_out_ids, self._patient_of
            )
        return self.backend.fit(
            method, self._cases(train_ids), decay, train_plan, encoder_source
        )

    def _sb_model(
        self,
        train_ids: Sequence[int],
        held_out_ids: Sequence[int],
        decay: float,
        train_plan: TrainPlan,
    ) -> FittedModel:
        key = (tuple(sorted(train_ids)), decay)
        if key not in self._sb_cache:
            self._sb_cache[key] = self._fit(
                METHOD_SB, train_ids, held_out_ids, decay, train_plan
            )
        else:
            check_no_leakage(train_ids, held_out_ids, self._patient_of)
        return self._sb_cache[key]

    def _train_method(
        self,
        method: str,
        fold: int,
        train_ids: Sequence[int],
        held_out_ids: Sequence[int],
        decay: float,
        train_plan: TrainPlan,
    ) -> FittedModel:
        if method == METHOD_SB:
            return self._sb_model(train_ids, held_out_ids, decay, train_plan)
        if method == METHOD_DEW:
            source = self._sb_model(
                train_ids, held_out_ids, self._sb_decays[fold], train_plan
            )
            return self._fit(method, train_ids, held_out_ids, decay, train_plan, source)
        return self._fit(method, train_ids, held_out_ids, decay, train_plan)

    def _inner_score(  # noqa: PLR0913
        self,
        method: str,
        plan: FoldPlan,
        fold: int,
        inner_fold: int,
        decay: float,
        train_plan: TrainPlan,
    ) -> float:
        if self.score_fn is not None:
            return float(self.score_fn(method, decay, fold, inner_fold))
        train_ids, val_ids = plan.inner_split(fold, inner_fold)
        try:
            fitted = self._train_method(
                method, fold, train_ids, val_ids, decay, train_plan
            )
        except TrainingDivergedError as e:
            logger.warning(
                "%s fold %d.%d decay %g diverged (%s): scored +inf",
                method,
                fold,
                inner_fold,
                decay,
                e,
            )
            return math.inf
        measurements = self.backend.predict(fitted, self._cases(val_ids))
        truth = [self._samples[i].length_mm for i in val_ids]
        return ple([m.pred_mm for m in measurements], truth)

    def _ensure_sb_decay(self, plan: FoldPlan, fold: int, train_plan: TrainPlan):
        if fold not in self._sb_decays:
            self._sb_decays[fold], _ = self.select_weight_decay(
                METHOD_SB, plan, fold, train_plan=train_plan
            )

    def select_weight_decay(
        self,
        method: str,
        plan: FoldPlan,
        fold: int,
        grid: Optional[Sequence[float]] = None,
        train_plan: Optional[TrainPlan] = None,
    ) -> Tuple[float, Dict[float, float]]:
        """Pick the weight decay of one outer fold by mean inner PLE.

        Every grid value is trained on each inner-train set and scored on the matching
        inner-validation set. A diverged run scores +inf. Ties go to the largest
        decay. A single-value grid is returned without training.

        Returns:
            Tuple[float, Dict[float, float]]: The chosen decay and the mean inner
                score of every grid value.
        """
        grid = list(self.grid if grid is None else grid)
        if not grid:
            raise ConfigError("The weight decay grid must not be empty")
        if len(grid) == 1:
            return grid[0], {}
        train_plan = train_plan or TrainPlan()
        if method == METHOD_DEW and self.score_fn is None:
            self._ensure_sb_decay(plan, fold, train_plan)
        scores = {}
        for decay in grid:
            scores[decay] = float(
                np.mean(
                    [
                        self._inner_score(method, plan, fold, k, decay, train_plan)
                        for k in range(len(plan.inner[fold]))
                    ]
                )
            )
            logger.debug(
                "%s fold %d decay %g: inner PLE %.3f",
                method,
                fold,
                decay,
                scores[decay],
            )
        chosen = choose_decay(scores)
        logger.info("%s fold %d: chose weight decay %g", method, fold, chosen)
        return chosen, scores

    def _predictions(
        self, method: str, fold: int, measurements: Sequence[Measurement]
    ) -> List[CasePrediction]:
        rows = []
        for m in measurements:
            sample = self._samples[m.case_id]
            dice = hd = None
            if m.pred_mask is not None and sample.mask is not None:
                dice = dice_coefficient(m.pred_mask, sample.mask)
                hd = (
                    math.nan
                    if m.pred_mask.is_empty or sample.mask.is_empty
                    else hausdorff_distance(m.pred_mask, sample.mask)
                )
            rows.append(
                CasePrediction(
                    case_id=m.case_id,
                    method=method,
                    fold=fold,
                    pred_mm=m.pred_mm,
                    gt_mm=sample.length_mm,
                    pred_mask=m.pred_mask,
                    dice=dice,
                    hausdorff_mm=hd,
                )
            )
        return rows

    def run_method(
        self, method: str, plan: FoldPlan, train_plan: TrainPlan
    ) -> MethodResult:
        """Run every outer fold of one method.

        A training failure stops the method; the result is then marked partial and
        keeps the folds completed so far.
        """
        check_training_sizes(
            method, plan, inner=self.score_fn is None and len(self.grid) > 1
        )
        result = MethodResult(method=method)
        try:
            for fold, test_ids in enumerate(plan.outer):
                train_ids = plan.outer_train(fold)
                if method == METHOD_DEW:
                    self._ensure_sb_decay(plan, fold, train_plan)
                decay, scores = self.select_weight_decay(
                    method, plan, fold, train_plan=train_plan
                )
                if method == METHOD_SB:
                    self._sb_decays[fold] = decay
                result.chosen_decays[fold] = decay
                result.inner_scores[fold] = scores
                fitted = self._train_method(
                    method, fold, train_ids, test_ids, decay, train_plan
                )
                result.loss_curves[fold] = list(fitted.loss_curve)
                measurements = self.backend.predict(fitted, self._cases(test_ids))
                result.predictions.extend(self._predictions(method, fold, measurements))
        except LeakageError:
            raise
        except SpleenLenError as e:
            logger.error("%s aborted: %s", method, e)
            result.status = "partial"
            result.error = str(e)

        if result.status == "complete":
            check_coverage(result.predictions, list(self._samples))
        try:
            result.report = summarize(method, result.predictions, self.r_mode)
        except MetricError as e:
            logger.warning("%s: no metrics (%s)", method, e)
        return result

    def run_experiment(
        self,
        dataset: Sequence[Sample],
        methods: Sequence[str],
        plan: FoldPlan,
        train_plan: TrainPlan,
        output_dir: Optional[Union[str, Path]] = None,
        run_config: Optional[Dict] = None,
    ) -> Dict[str, MethodResult]:
        """Run the nested cross-validation of every method.

        Args:
            dataset (Sequence[Sample]): All cases.
            methods (Sequence[str]): Method tags, run in order.
            plan (FoldPlan): Fold assignment.
            train_plan (TrainPlan): Training schedule shared by every model.
            output_dir (Optional[Union[str, Path]]): When given, result files are
                written there.
            run_config (Optional[Dict]): Provenance stored with the result files.

        Returns:
            Dict[str, MethodResult]: Results by method tag.
        """
        self._samples = {int(s.case_id): s for s in dataset}
        if len(self._samples) != len(dataset):
            raise ConfigError("Case ids must be unique")
        self._patient_of = (
            {int(s.case_id): int(s.patient_id) for s in dataset}
            if plan.grouping == GROUPING_BY_PATIENT
            else None
        )
        self._sb_cache.clear()
        self._sb_decays.clear()
        results = {m: self.run_method(m, plan, train_plan) for m in methods}

        if output_dir is not None:
            ReportGenerator().write_results(
                results, plan, output_dir, run_config=run_config, samples=dataset
            )
        return results


def run_experiment(  # noqa: PLR0913
    dataset: Sequence[Sample],
    methods: Sequence[str],
    plan: FoldPlan,
    train_plan: TrainPlan,
    backend: Backend,
    grid: Optional[Sequence[float]] = None,
    r_mode: str = "pooled",
    output_dir: Optional[Union[str, Path]] = None,
) -> Dict[str, MethodResult]:
    """Run the experiment with a fresh :class:`ExperimentService`."""
    service = ExperimentService(backend, grid, r_mode=r_mode)
    return service.run_experiment(dataset, methods, plan, train_plan, output_dir)
