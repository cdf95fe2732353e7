# ruff: noqa: PLR2004

import pytest

from src.data.phantom import assign_patients
from src.services.folds import check_no_leakage, make_fold_plan, split, verify_plan
from src.utils.exceptions import FoldPlanError, LeakageError
from src.utils.models import FoldPlan


@pytest.fixture
def patients():
    """Create the patient of each of 108 cases (93 patients)."""
    return assign_patients(108, 93, seed=0).tolist()


def test_case_grouping_sizes():
    """Test fold sizes of 108 cases split by case."""
    plan = make_fold_plan(list(range(108)), grouping="case", seed=0)
    assert [len(f) for f in plan.outer] == [36, 36, 36]
    for fold in range(3):
        assert [len(f) for f in plan.inner[fold]] == [24, 24, 24]


def test_small_case_grouping():
    """Test the smallest balanced plan: six cases in three folds."""
    plan = make_fold_plan(list(range(6)), grouping="case", seed=2)
    assert sorted(len(f) for f in plan.outer) == [2, 2, 2]
    assert sorted(c for f in plan.outer for c in f) == list(range(6))


def test_patient_grouping_keeps_patients_whole(patients):
    """Test that no patient is split across folds at either level."""
    case_ids = list(range(108))
    plan = make_fold_plan(case_ids, patients, grouping="patient", seed=0)
    patient_of = dict(zip(case_ids, patients))
    for level in [plan.outer] + plan.inner:
        owners = [{patient_of[c] for c in fold} for fold in level]
        for i in range(len(owners)):
            for j in range(i + 1, len(owners)):
                assert not owners[i] & owners[j]
    sizes = [len(f) for f in plan.outer]
    assert sum(sizes) == 108
    assert max(sizes) - min(sizes) <= 1


def test_plan_is_deterministic(patients):
    """Test that a seed fixes the plan and another seed changes it."""
    case_ids = list(range(108))
    a = make_fold_plan(case_ids, patients, seed=5)
    b = make_fold_plan(case_ids, patients, seed=5)
    c = make_fold_plan(case_ids, patients, seed=6)
    assert a.to_dict() == b.to_dict()
    assert a.outer != c.outer


def test_inner_folds_use_their_own_seed():
    """Test that inner folds are split with seed + 1 + fold."""
    plan = make_fold_plan(list(range(12)), grouping="case", seed=3)
    for fold in range(3):
        expected = split(plan.outer_train(fold), 3, "case", 3 + 1 + fold)
        assert plan.inner[fold] == expected


def test_patient_too_large_for_a_fold():
    """Test that a patient with more cases than a fold holds is refused."""
    with pytest.raises(FoldPlanError, match="capacity"):
        make_fold_plan(list(range(6)), [0, 0, 0, 1, 2, 3], grouping="patient")


@pytest.mark.parametrize(
    ("case_ids", "patient_ids", "kwargs"),
    [
        ([0, 1], None, {"grouping": "case"}),
        ([0, 0, 1], None, {"grouping": "case"}),
        (list(range(9)), [0] * 4 + [1] * 5, {}),
        (list(range(9)), None, {}),
        (list(range(9)), None, {"grouping": "study"}),
        (list(range(9)), None, {"grouping": "case", "k_inner": 1}),
        (list(range(9)), [0, 1], {}),
    ],
)
def test_fold_plan_errors(case_ids, patient_ids, kwargs):
    """Test the conditions under which no plan can be built."""
    with pytest.raises(FoldPlanError):
        make_fold_plan(case_ids, patient_ids, **kwargs)


def test_check_no_leakage():
    """Test case and patient leakage detection."""
    check_no_leakage([0, 1], [2, 3])
    with pytest.raises(LeakageError, match="cases"):
        check_no_leakage([0, 1], [1, 2])
    with pytest.raises(LeakageError, match="patients"):
        check_no_leakage([0, 1], [2], patient_of={0: 0, 1: 5, 2: 5})


def test_verify_plan_detects_overlap():
    """Test that a plan whose outer folds overlap is rejected."""
    plan = FoldPlan(outer=[[0, 1], [1, 2], [3, 4]], inner=[], grouping="case")
    with pytest.raises(FoldPlanError, match="partition"):
        verify_plan(plan, [0, 1, 2, 3, 4])
