# Copyright 2024 Google LLC
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"Test the value iteration solvers."

import numpy as np
import pytest

from regdp import mdp
from regdp import policy as pricing
from regdp import solvers
from regdp.errors import ConvergenceError, DomainError

TOL = 1e-8


@pytest.fixture(scope='module')
def avi(small):
  return solvers.avi_solve(small, tol=TOL)


@pytest.fixture(scope='module')
def cvi_reports(small):
  return {
      size: solvers.cvi_solve(small, price_grid_size=size, tol=TOL)
      for size in (11, 51, 201)
  }


def test_avi_report(small, avi):
  assert avi.solver == 'avi'
  assert avi.converged
  assert avi.history[-1] < TOL
  assert avi.iterations == len(avi.history)
  assert avi.weights is None
  assert avi.value.converged and avi.value.solver == 'avi'
  assert avi.value.tol == TOL
  assert avi.policy.params == small
  assert avi.value.array.shape == small.shape


def test_cvi_report(cvi_reports):
  report = cvi_reports[11]
  assert report.converged
  assert report.settings['price_step'] == pytest.approx(1.0)
  assert report.policy.price_step == pytest.approx(1.0)
  grid = np.arange(11.0)
  u = report.policy.array
  assert np.all(np.min(np.abs(u[..., None] - grid), axis=-1) < 1e-12)


def test_avi_not_worse_than_cvi(avi, cvi_reports):
  for report in cvi_reports.values():
    assert np.all(avi.value.array <= report.value.array + 10 * TOL)


def test_cvi_refinement(avi, cvi_reports):
  gaps = [
      np.max(np.abs(cvi_reports[size].value.array - avi.value.array))
      for size in (11, 51, 201)
  ]
  assert gaps[1] <= gaps[0] + 10 * TOL
  assert gaps[2] <= gaps[1] + 10 * TOL
  assert gaps[2] < gaps[0]


def _contraction_slack(history, alpha):
  tail = np.asarray(history[-11:])
  return tail[1:] - alpha * tail[:-1]


def test_avi_contracts(small, avi):
  assert np.all(_contraction_slack(avi.history, small.alpha) <= 1e-11)


def test_cvi_contracts(small, cvi_reports):
  for report in cvi_reports.values():
    assert np.all(_contraction_slack(report.history, small.alpha) <= 1e-11)


def test_bellman_consistency(small, avi):
  for s in small.states():
    backup = solvers.bellman_backup(small, avi.value, s, avi.policy[s])
    assert backup == pytest.approx(avi.value[s], abs=1e-6)


def test_avi_threshold_is_greedy(small, avi):
  rng = np.random.default_rng(5)
  grid = np.linspace(small.t_min, small.t_max, 101)
  states = list(small.states())
  for index in rng.choice(len(states), 20, replace=False):
    s = states[index]
    best = solvers.bellman_backup(small, avi.value, s, avi.policy[s])
    for u in grid:
      assert best <= solvers.bellman_backup(small, avi.value, s, u) + 1e-9


def test_greedy_thresholds(small, avi):
  np.testing.assert_allclose(
      solvers.greedy_thresholds(small, avi.value.array), avi.policy.array)


def test_convergence_error(small):
  with pytest.raises(ConvergenceError) as e:
    solvers.avi_solve(small, tol=TOL, max_iter=3)
  report = e.value.last_iterate
  assert report.iterations == 3
  assert not report.converged
  assert not report.value.converged
  assert isinstance(report.policy, pricing.PolicyTable)


@pytest.mark.parametrize('kw', [dict(tol=0), dict(max_iter=0)])
def test_invalid_settings(small, kw):
  with pytest.raises(DomainError):
    solvers.avi_solve(small, **kw)


def test_invalid_price_grid(small):
  with pytest.raises(DomainError):
    solvers.cvi_solve(small, price_grid_size=1)


def test_solver_registry():
  assert sorted(solvers.SOLVERS) == ['adp', 'avi', 'cvi']


def test_zero_cost_problem():
  params = mdp.ModelParams.create(n=10, n_bar=5, r=2, lam=2, mu=0.5, k=0,
                                  b=0)
  report = solvers.avi_solve(params)
  np.testing.assert_array_equal(report.value.array, 0.0)


@pytest.mark.slow
def test_reference_avi_converges(reference):
  report = solvers.avi_solve(reference)
  assert report.converged
  assert report.seconds < 60


def _seconds(solve, params, **kw):
  try:
    return solve(params, **kw).seconds
  except ConvergenceError as e:
    return e.last_iterate.seconds


@pytest.mark.slow
def test_adp_faster_than_value_iteration():
  params = mdp.ModelParams.create(n=4000, n_bar=2000, r=400, lam=2, mu=0.5,
                                  delta_y=1 / 20)
  # Both sweep caps sit far below the sweeps needed to converge.
  adp = _seconds(solvers.adp_solve, params, k_max=40000, max_outer=20)
  avi = _seconds(solvers.avi_solve, params, max_iter=1000)
  cvi = _seconds(solvers.cvi_solve, params, price_grid_size=21,
                 max_iter=1000)
  assert adp < avi < cvi
