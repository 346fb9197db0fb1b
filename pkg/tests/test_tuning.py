from __future__ import annotations

import math
from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpfda.tuning import (
    default_T,
    mean_r_terms,
    select_r_mean_cdp,
    select_r_mean_fdp,
    select_r_vcm_cdp,
    select_r_vcm_fdp,
    server_weights_mean,
    server_weights_vcm,
)


def srv(n, eps):
    return SimpleNamespace(n=n, epsilon=eps)


def test_select_r_regression_values():
    terms = mean_r_terms(1, 250, 10, 1.0, 3.0)
    assert terms == pytest.approx([3.0578769, 5.3025528, 2.5099014, 6.2996052], abs=1e-6)
    assert select_r_mean_cdp(250, 10, 1.0, 3.0) == 4
    assert select_r_mean_fdp(4, 250, 10, 1.0, 3.0) == 4
    assert mean_r_terms(4, 250, 10, 1.0, 3.0)[2] == pytest.approx(math.sqrt(10), abs=1e-12)
    assert select_r_vcm_fdp(2, 300, 8, 3, 0.7, 3.0) == 4


def test_select_r_limits():
    assert select_r_mean_cdp(250, 10, math.inf, 3.0) == math.ceil(1.25 * min(2500 ** (1 / 7), 250 ** (1 / 6)))
    assert select_r_mean_cdp(1, 1, 1e-6, 3.0) == 1


@given(st.integers(1, 5000), st.integers(1, 50), st.floats(0.05, 10), st.floats(1.5, 4))
def test_fdp_reductions(n, m, eps, alpha):
    assert select_r_mean_fdp(1, n, m, eps, alpha) == select_r_mean_cdp(n, m, eps, alpha)
    assert select_r_vcm_fdp(1, n, m, 1, eps, alpha) == select_r_mean_fdp(1, n, m, eps, alpha)
    assert select_r_vcm_cdp(n, m, 1, eps, alpha) == select_r_mean_cdp(n, m, eps, alpha)


@given(st.integers(1, 2000), st.integers(1, 30), st.floats(0.05, 10))
def test_select_r_monotone_in_n(n, m, eps):
    assert select_r_mean_cdp(n + 1, m, eps, 3.0) >= select_r_mean_cdp(n, m, eps, 3.0)


def test_default_T():
    assert default_T(250) == 23
    assert default_T(1000) == 28
    assert default_T(1) == 1


def test_weights():
    homo = server_weights_mean([srv(100, 1.0)] * 4, 3, 10)
    assert homo == pytest.approx([0.25] * 4, abs=1e-15)
    # sparse-dominant regime: r/(n m) is the largest term for both servers
    w = server_weights_mean([srv(2000, 5.0), srv(1000, 5.0)], 3, 2)
    assert w[0] / w[1] == pytest.approx(2.0, rel=1e-12)
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-12)
    wv = server_weights_vcm([srv(300, 1.0), srv(50, 0.5), srv(900, 3.0)], 4, 6, 2)
    assert math.fsum(wv) == pytest.approx(1.0, abs=1e-12)
    assert wv[2] > wv[0] > wv[1]
    assert server_weights_mean([srv(10, 1.0)], 3, 4) == [1.0]
    with pytest.raises(ValueError):
        server_weights_mean([], 3, 4)


def test_weight_branch_kept_as_printed():
    # with eps = inf and r/(n m) < 1/n^2 the 1/n^2 branch decides
    w = server_weights_mean([srv(10, math.inf), srv(20, math.inf)], 1, 1000)
    assert w[1] / w[0] == pytest.approx(4.0)
