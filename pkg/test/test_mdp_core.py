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

"Test the model parameters, preference density and uniformized transitions."

import numpy as np
import pytest

from scipy import integrate

from regdp import mdp
from regdp import solvers
from regdp.errors import DomainError, ParameterError


def _breaks(t_hat, lo, hi):
  "Break points of quad strictly inside the interval."
  return [t_hat] if lo < t_hat < hi else None


def test_reference_params(reference):
  assert reference.n1 == 0 and reference.n2 == 100
  assert reference.delta_y == pytest.approx(0.1)
  assert reference.dt == pytest.approx(0.0045)
  assert reference.alpha == pytest.approx(1 / 1.0225)
  assert reference.kappa == pytest.approx(10)
  assert reference.signal_prob == pytest.approx(0.1)
  assert reference.shape == (2, 21, 101)
  assert reference.alpha0 == 5 and reference.alpha1 == -2


INVALID_PARAMS = (
    (dict(n1=46), 'n1 <= n_bar - r'),
    (dict(n2=55), 'n_bar + r <= n2'),
    (dict(alpha1=0.5), 'alpha1 < 0'),
    (dict(delta_y=0.3), '1 / delta_y is an integer'),
    (dict(lam=0, mu=0), 'max(lambda, mu) > 0'),
    (dict(t_min=10), 't_min < t_max'),
    (dict(k=-1), 'k >= 0'),
    (dict(r_disc=0), 'r_disc > 0'),
)


@pytest.mark.parametrize('overrides, constraint', INVALID_PARAMS)
def test_invalid_params(overrides, constraint):
  kw = dict(n=100, n_bar=50, r=10, lam=2, mu=0.5)
  kw.update(overrides)
  with pytest.raises(ParameterError) as e:
    mdp.ModelParams.create(**kw)
  assert constraint in e.value.args[0]


def test_replace_validates(small):
  assert small.replace(k=10).kappa == pytest.approx(2.5)
  with pytest.raises(ParameterError):
    small.replace(b=-1)


def test_state_index(small):
  for s in small.states():
    assert small.state_at(small.index(s)) == s
  assert small.index(mdp.State(0, -2, -1)) == (0, 0, 0)
  assert small.index(mdp.State(10, 2, 1)) == (1, 4, 10)


@pytest.mark.parametrize('state', [(11, 0, 1), (-1, 0, 1), (3, 3, 1),
                                   (3, -3, -1), (3, 0, 0)])
def test_invalid_state(small, state):
  with pytest.raises(DomainError):
    small.check_state(mdp.State(*state))


def test_tracking_error(small):
  assert mdp.tracking_error(small, mdp.State(7, 1, 1)) == pytest.approx(1)
  assert mdp.tracking_error(small, mdp.State(5, 0, -1)) == 0
  assert mdp.tracking_penalty(small, mdp.State(3, 2, 1)) == pytest.approx(
      small.kappa * 16 * small.dt)


@pytest.mark.parametrize('t_hat', [0.0, 2.5, 5.0, 9.0, 10.0])
def test_density_integrates_to_one(t_hat):
  pdf = mdp.TrapezoidPdf(t_hat, 0, 10)
  total, _ = integrate.quad(pdf.density, 0, 10,
                            points=_breaks(t_hat, 0, 10))
  assert total == pytest.approx(1, abs=1e-9)
  assert pdf.survival(0) == pytest.approx(1)
  assert pdf.survival(10) == pytest.approx(0)


@pytest.mark.parametrize('t_hat, u', [(5, 2), (5, 7), (1, 0.5), (8, 9.5),
                                      (10, 3)])
def test_survival_matches_quadrature(t_hat, u):
  pdf = mdp.TrapezoidPdf(t_hat, 0, 10)
  tail, _ = integrate.quad(pdf.density, u, 10,
                           points=_breaks(t_hat, u, 10))
  assert pdf.survival(u) == pytest.approx(tail, abs=1e-9)


@pytest.mark.parametrize('t_hat, u, b', [(5, 0, 1), (5, 3, 2), (5, 8, 1),
                                         (2, 1, 0.5), (10, 4, 1)])
def test_partial_utility_matches_quadrature(t_hat, u, b):
  pdf = mdp.TrapezoidPdf(t_hat, 0, 10)
  value, _ = integrate.quad(lambda x: b * x * pdf.density(x), u, 10,
                            points=_breaks(t_hat, u, 10))
  assert pdf.partial_utility(u, b) == pytest.approx(value, abs=1e-9)


def test_mean_utility():
  assert mdp.TrapezoidPdf(5, 0, 10).mean_utility(1) == pytest.approx(35 / 9)
  assert mdp.TrapezoidPdf(10, 0, 10).mean_utility(1) == pytest.approx(5)


def test_density_domain():
  pdf = mdp.TrapezoidPdf(5, 0, 10)
  with pytest.raises(DomainError):
    mdp.trapezoid_density(pdf, 10.5)
  with pytest.raises(DomainError):
    mdp.survival(pdf, -1)
  with pytest.raises(DomainError):
    mdp.TrapezoidPdf(11, 0, 10)
  assert pdf.cdf(-3) == pytest.approx(0, abs=1e-12)
  assert pdf.cdf(12) == pytest.approx(1)


def test_ppf_inverts_cdf():
  pdf = mdp.TrapezoidPdf(3, 0, 10)
  q = np.linspace(0, 1, 41)
  np.testing.assert_allclose(pdf.cdf(pdf.ppf(q)), q, atol=1e-12)


def test_uniform_utility_rate(small):
  uniform = mdp.TrapezoidPdf(small.t_max, small.t_min, small.t_max)
  for i in (0, 4, 9):
    for u in (0, 2.5, 10):
      assert mdp.expected_utility_rate(small, uniform, i, u) == pytest.approx(
          mdp.uniform_utility_rate(small, i, u))
  with pytest.raises(DomainError):
    mdp.uniform_utility_rate(small, 11, 5)


def test_rates(small):
  pdf = mdp.TrapezoidPdf(5, 0, 10)
  assert mdp.arrival_rate(small, pdf, 4, 0) == pytest.approx(6 * 2 *
                                                             small.dt)
  assert mdp.departure_rate(small, 4) == pytest.approx(4 * 0.5 * small.dt)
  assert mdp.t_hat_of_y(small, 1) == pytest.approx(3)
  assert mdp.t_hat_of_y(small, -1) == pytest.approx(7)
  with pytest.raises(DomainError):
    mdp.departure_rate(small, -1)


def test_transitions_are_distributions(small):
  rng = np.random.default_rng(1)
  for s in small.states():
    u = rng.uniform(small.t_min, small.t_max)
    out = mdp.transitions(small, s, u)
    assert out.total == pytest.approx(1)
    assert all(p >= 0 for _, p in out.outcomes())
    targets = [nxt for nxt, _ in out.entries]
    for nxt in targets:
      small.check_state(nxt)
    if s.i == small.n2:
      assert mdp.State(s.i + 1, s.k, s.d) not in targets
    if s.k == small.y_steps:
      assert all(nxt.k <= s.k for nxt in targets)


def test_signal_reflection(small):
  top = mdp.transitions(small, mdp.State(5, 2, 1), 5)
  moves = dict(top.entries)
  assert moves[mdp.State(5, 1, -1)] == pytest.approx(small.signal_prob)
  inner = dict(mdp.transitions(small, mdp.State(5, 0, 1), 5).entries)
  assert inner[mdp.State(5, 1, 1)] == pytest.approx(small.gamma1_u)
  assert inner[mdp.State(5, -1, -1)] == pytest.approx(small.gamma2_u)


def test_period_cost_without_arrivals(small):
  s = mdp.State(small.n2, 0, 1)
  assert mdp.period_cost(small, s, 0) == pytest.approx(
      mdp.tracking_penalty(small, s))


def test_kernel_matches_transitions(small):
  rng = np.random.default_rng(7)
  values = rng.normal(size=small.shape)
  thresholds = rng.uniform(small.t_min, small.t_max, small.shape)
  backup = mdp.Kernel(small).backup(values, thresholds)
  table = solvers.ValueTable(small, values)
  for s in small.states():
    index = small.index(s)
    expected = solvers.bellman_backup(small, table, s, thresholds[index])
    assert backup[index] == pytest.approx(expected, rel=1e-10, abs=1e-10)


def test_kernel_moves(small):
  kernel = mdp.Kernel(small)
  thresholds = np.full(small.shape, 4.0)
  bounds, targets = kernel.moves(thresholds)
  assert bounds.shape == targets.shape == (4, 2 * 5 * 11)
  assert np.all(np.diff(bounds, axis=0) >= 0)
  assert np.all(bounds[-1] <= 1 + 1e-12)
  s = mdp.State(3, 0, -1)
  flat = np.ravel_multi_index(small.index(s), small.shape)
  up = small.state_at(np.unravel_index(targets[2, flat], small.shape))
  down = small.state_at(np.unravel_index(targets[3, flat], small.shape))
  assert up == mdp.State(3, 1, 1)
  assert down == mdp.State(3, -1, -1)


def test_forward_difference():
  delta = mdp.forward_difference(np.array([1.0, 4.0, 9.0]))
  np.testing.assert_array_equal(delta, [3.0, 5.0, 5.0])


def test_survival_nonincreasing():
  grid = np.linspace(0, 10, 1000)
  for t_hat in np.linspace(0, 10, 20):
    tail = mdp.TrapezoidPdf(t_hat, 0, 10).survival(grid)
    assert np.all(np.diff(tail) <= 1e-15)
    assert tail[0] == pytest.approx(1) and tail[-1] == pytest.approx(0)


def test_utility_rate_matches_quadrature(small):
  rng = np.random.default_rng(11)
  span = (small.t_min, small.t_max)
  for _ in range(1000):
    pdf = mdp.TrapezoidPdf(rng.uniform(*span), *span)
    u = rng.uniform(*span)
    i = int(rng.integers(small.n1, small.n2 + 1))
    mass, _ = integrate.quad(
        lambda x: small.b * (x - small.t_min) * pdf.density(x), u,
        small.t_max, points=_breaks(pdf.t_hat, u, small.t_max),
        epsabs=0, epsrel=1e-13)
    expected = (small.n - i) * small.lam * small.dt * mass
    assert mdp.expected_utility_rate(small, pdf, i, u) == pytest.approx(
        expected, rel=1e-10, abs=1e-15)


@pytest.mark.parametrize('t_hat', [0.0, 2.0, 4.5])
def test_utility_rate_curvature_flips_at_midpoint(small, t_hat):
  pdf = mdp.TrapezoidPdf(t_hat, small.t_min, small.t_max)
  u = np.linspace(small.t_min, small.t_max, 201)
  rate = mdp.expected_utility_rate(small, pdf, 3, u)
  curvature = np.diff(rate, 2)
  centre = u[1:-1]
  middle = (small.t_min + small.t_max) / 2
  assert np.all(curvature[centre < middle - 0.1] < 0)
  assert np.all(curvature[centre > middle + 0.1] > 0)


def test_threshold_table(small):
  kernel = mdp.Kernel(small)
  thresholds = np.array([0.0, 2.5, 7.0, 10.0])
  share, mass = kernel.threshold_table(thresholds)
  assert share.shape == mass.shape == (small.n_y, 4)
  for y_index, y in enumerate(small.y_values):
    pdf = mdp.TrapezoidPdf(mdp.t_hat_of_y(small, y), small.t_min, small.t_max)
    np.testing.assert_allclose(share[y_index], pdf.survival(thresholds),
                               atol=1e-12)
    np.testing.assert_allclose(mass[y_index],
                               pdf.partial_utility(thresholds, small.b),
                               atol=1e-12)


def test_check_support():
  np.testing.assert_array_equal(
      mdp.check_support([0, 5, 10 + mdp.EPS / 2], 0, 10, 'x'), [0, 5, 10])
  for bad in (-1, 10.5, np.nan):
    with pytest.raises(DomainError):
      mdp.check_support(bad, 0, 10, 'x')


def test_as_scalar():
  assert isinstance(mdp.as_scalar(np.float64(2)), float)
  assert isinstance(mdp.as_scalar(np.array(2.0)), float)
  np.testing.assert_array_equal(mdp.as_scalar(np.ones(3)), np.ones(3))
