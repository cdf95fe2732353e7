"""Nested cross-validation fold plans and leakage guards."""

import logging
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
from sklearn.model_selection import KFold

from src.utils.config import GROUPING_BY_CASE, GROUPING_BY_PATIENT, K_INNER, K_OUTER
from src.utils.exceptions import FoldPlanError, LeakageError
from src.utils.models import FoldPlan

logger = logging.getLogger(__name__)


def _split_cases(case_ids: Sequence[int], k: int, seed: int) -> List[List[int]]:
    ids = np.asarray(sorted(case_ids))
    if len(ids) < k:
        raise FoldPlanError(f"{len(ids)} cases cannot fill {k} folds")
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    return [sorted(ids[test].tolist()) for _, test in splitter.split(ids)]


def _split_groups(
    case_ids: Sequence[int], patient_of: Mapping[int, int], k: int, seed: int
) -> List[List[int]]:
    groups: Dict[int, List[int]] = {}
    for case in sorted(case_ids):
        groups.setdefault(int(patient_of[case]), []).append(int(case))
    if len(groups) < k:
        raise FoldPlanError(f"{len(groups)} patients cannot fill {k} folds")
    capacity = math.ceil(len(case_ids) / k)
    largest = max(len(cases) for cases in groups.values())
    if largest > capacity:
        raise FoldPlanError(
            f"A patient with {largest} cases exceeds the fold capacity of {capacity}"
        )
    # shuffle first so that equal-size patients are spread at random
    order = np.random.default_rng(seed).permutation(sorted(groups))
    order = sorted(order.tolist(), key=lambda p: -len(groups[p]))
    folds: List[List[int]] = [[] for _ in range(k)]
    for patient in order:
        target = min(range(k), key=lambda f: (len(folds[f]), f))
        folds[target].extend(groups[patient])
    sizes = [len(f) for f in folds]
    if max(sizes) - min(sizes) > 1:
        logger.warning("Patient-grouped folds are unbalanced: sizes %s", sizes)
    return [sorted(f) for f in folds]


def split(
    case_ids: Sequence[int],
    k: int,
    grouping: str,
    seed: int,
    patient_of: Optional[Mapping[int, int]] = None,
) -> List[List[int]]:
    """Partition ``case_ids`` into ``k`` folds.

    Raises:
        FoldPlanError: With fewer cases (or patients) than folds, or when one
            patient holds more cases than a fold can take.
    """
    if grouping == GROUPING_BY_CASE:
        return _split_cases(case_ids, k, seed)
    if grouping == GROUPING_BY_PATIENT:
        if patient_of is None:
            raise FoldPlanError("Patient grouping needs the patient of every case")
        return _split_groups(case_ids, patient_of, k, seed)
    raise FoldPlanError(f"Unknown grouping {grouping!r}")


def make_fold_plan(
    case_ids: Sequence[int],
    patient_ids: Optional[Sequence[int]] = None,
    k_outer: int = K_OUTER,
    k_inner: int = K_INNER,
    grouping: str = GROUPING_BY_PATIENT,
    seed: int = 0,
) -> FoldPlan:
    """Build a deterministic nested fold plan.

    Args:
        case_ids (Sequence[int]): Case identifiers of the dataset.
        patient_ids (Optional[Sequence[int]]): Patient of each case, aligned with
            ``case_ids``; required for patient grouping.
        k_outer (int): Number of outer folds.
        k_inner (int): Number of inner folds per outer training set.
        grouping (str): ``"patient"`` or ``"case"``.
        seed (int): Shuffling seed.

    Returns:
        FoldPlan: Outer test folds and, per outer fold, the inner folds of its
            training cases.
    """
    if len(set(case_ids)) != len(case_ids):
        raise FoldPlanError("Case ids must be unique")
    if k_outer < 2 or k_inner < 2:  # noqa: PLR2004
        raise FoldPlanError("At least two folds are needed at each level")
    patient_of = None
    if patient_ids is not None:
        if len(patient_ids) != len(case_ids):
            raise FoldPlanError("patient_ids must align with case_ids")
        patient_of = {int(c): int(p) for c, p in zip(case_ids, patient_ids)}

    outer = split(case_ids, k_outer, grouping, seed, patient_of)
    plan = FoldPlan(outer=outer, inner=[], grouping=grouping, seed=seed)
    for fold in range(k_outer):
        train_ids = plan.outer_train(fold)
        plan.inner.append(
            split(train_ids, k_inner, grouping, seed + 1 + fold, patient_of)
        )
    verify_plan(plan, case_ids, patient_of)
    logger.info(
        "Fold plan (%s grouping, seed %d): outer sizes %s",
        grouping,
        seed,
        [len(f) for f in plan.outer],
    )
    return plan


def check_no_leakage(
    train_ids: Iterable[int],
    held_out_ids: Iterable[int],
    patient_of: Optional[Mapping[int, int]] = None,
):
    """Raise LeakageError if a held-out case (or its patient) is in ``train_ids``."""
    train, held_out = set(train_ids), set(held_out_ids)
    shared = train & held_out
    if shared:
        raise LeakageError(f"Held-out cases in the training set: {sorted(shared)}")
    if patient_of is not None:
        patients = {patient_of[c] for c in train} & {patient_of[c] for c in held_out}
        if patients:
            raise LeakageError(
                f"Held-out patients in the training set: {sorted(patients)}"
            )


def _check_partition(folds: List[List[int]], expected: Iterable[int], level: str):
    members = [c for fold in folds for c in fold]
    if len(members) != len(set(members)) or set(members) != set(expected):
        raise FoldPlanError(f"{level} folds do not partition their cases")


def verify_plan(
    plan: FoldPlan,
    case_ids: Sequence[int],
    patient_of: Optional[Mapping[int, int]] = None,
):
    """Check partitions and grouping at both nesting levels.

    Raises:
        FoldPlanError: If a level is not a partition.
        LeakageError: If a patient spans two folds in patient grouping.
    """
    _check_partition(plan.outer, case_ids, "Outer")
    grouped = plan.grouping == GROUPING_BY_PATIENT
    for fold, test_ids in enumerate(plan.outer):
        train_ids = plan.outer_train(fold)
        check_no_leakage(train_ids, test_ids, patient_of if grouped else None)
        _check_partition(plan.inner[fold], train_ids, f"Inner ({fold})")
        for inner_fold in range(len(plan.inner[fold])):
            inner_train, inner_val = plan.inner_split(fold, inner_fold)
            check_no_leakage(inner_train, inner_val, patient_of if grouped else None)
