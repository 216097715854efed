"""One test per acceptance criterion at full size (1000 trials where sampled).

Each test prints a PASS/FAIL line with measured and expected values; the
lines are repeated in the terminal summary.
"""

import pytest

from conftest import ACCEPTANCE_LINES
from matsqrt import criteria

TRIALS = 1000

CHECKS = {
    1: lambda: criteria.criterion_coefficients(),
    2: lambda: criteria.criterion_no_poles(),
    3: lambda: criteria.criterion_forward_ordering(TRIALS),
    4: lambda: criteria.criterion_residual_schedule(TRIALS),
    5: lambda: criteria.criterion_oracles(),
    6: lambda: criteria.criterion_gradients(),
    7: lambda: criteria.criterion_counters(),
    8: lambda: criteria.criterion_sign_lemma(),
    9: lambda: criteria.criterion_ns_equivalence(),
    10: lambda: criteria.criterion_whitening(),
    11: lambda: criteria.criterion_scale_invariance(),
}


@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number):
    result = CHECKS[number]()
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert result.number == number
    assert result.passed, line


def test_fault_injection_breaks_coefficients():
    bad = criteria.Hooks(pade=lambda m, n: criteria.PadeCoefficients(m, n, (0.0,) * m, (0.0,) * n))
    assert not criteria.criterion_coefficients(bad).passed
    assert not criteria.criterion_no_poles(bad).passed


def test_fault_injection_breaks_residual_schedule():
    assert not criteria.criterion_residual_schedule(20, hooks=criteria.Hooks(lya_iter_cap=2)).passed
