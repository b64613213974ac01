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
"""Theoretical bounds on the value function and numerical verifiers.

The differential cost Delta(i) = J(i) - J(i - 1) of the optimal value function
has second differences in i between eps_l and eps_u. Along a line of constant
tracking error Delta decreases by at most eps_bar_u, and at a fixed active
count it decreases with the signal level. The optimal thresholds inherit the
same monotonicity. The verifiers check these statements on solved tables.

eps_u assumes every idle zone reconnects when it wakes. Where the threshold
saturates at t_max no zone reconnects and only departures shrink the second
differences, so the verifiers use the larger eps_u_sat and eps_bar_u_sat.
Comparisons across signal levels pair a state with the state an upward
signal move reaches, whose direction is +1.
"""

import collections
import logging

import numpy as np

from regdp.errors import ParameterError, VerificationError

_LOGGER = logging.getLogger('regdp')

BoundsReport = collections.namedtuple(
    'BoundsReport',
    'eps_l eps_u eps_bar_u upsilon eps_u_sat eps_bar_u_sat checks')

PolicyReport = collections.namedtuple('PolicyReport', 'slack checks')

PropertyCheck = collections.namedtuple(
    'PropertyCheck', 'name passed skipped worst_state margin lower upper pairs')

EpsilonSequence = collections.namedtuple('EpsilonSequence',
                                         'eps_l eps_u eps_bar_u')

AsymptoticRow = collections.namedtuple('AsymptoticRow', 'n eps_u eps_bar_u')

# slack multiplier on the solver tolerance
SLACK_FACTOR = 10.0


def report_passed(report):
  "True when every check that ran has passed."
  return all(c.passed for c in report.checks if not c.skipped)


def bound_values(kappa_dt, alpha, rate_dt, upsilon):
  """Evaluate the three bounds from dt-scaled quantities.

  Args:
    kappa_dt: kappa times dt.
    alpha: discount factor per period.
    rate_dt: (lambda + mu) times dt.
    upsilon: lambda dt (n - n1).

  Returns:
    (eps_l, eps_u, eps_bar_u).

  Raises:
    ParameterError: a denominator is not positive.
  """
  denominators = (
      1 - alpha * (1 - 2 * rate_dt - upsilon),
      1 - alpha * (1 - 2 * rate_dt),
      1 - alpha * (1 - rate_dt),
  )
  if min(denominators) <= 0:
    raise ParameterError('bound denominators must be positive, got %r' %
                         (denominators,))
  eps_l = 2 * kappa_dt / denominators[0]
  eps_u = 2 * kappa_dt / denominators[1]
  eps_bar_u = alpha * rate_dt / denominators[2] * eps_u
  return eps_l, eps_u, eps_bar_u


def saturated_bound_values(kappa_dt, alpha, mu_dt, rate_dt):
  """Upper bounds that also hold where no idle zone reconnects.

  Args:
    kappa_dt: kappa times dt.
    alpha: discount factor per period.
    mu_dt: mu times dt.
    rate_dt: (lambda + mu) times dt.

  Returns:
    (eps_u_sat, eps_bar_u_sat), eps_u_sat = 2 kappa dt / (1 - alpha (1 - 2 mu
    dt)) and eps_bar_u_sat scaled from it as eps_bar_u is from eps_u.

  Raises:
    ParameterError: a denominator is not positive.
  """
  denominators = (1 - alpha * (1 - 2 * mu_dt), 1 - alpha * (1 - rate_dt))
  if min(denominators) <= 0:
    raise ParameterError('bound denominators must be positive, got %r' %
                         (denominators,))
  eps_u_sat = 2 * kappa_dt / denominators[0]
  return eps_u_sat, alpha * rate_dt / denominators[1] * eps_u_sat


def epsilon_bounds(params):
  "Bounds on the second differences of the value function."
  rate_dt = (params.lam + params.mu) * params.dt
  upsilon = params.lam * params.dt * (params.n - params.n1)
  eps_l, eps_u, eps_bar_u = bound_values(params.kappa * params.dt,
                                         params.alpha, rate_dt, upsilon)
  eps_u_sat, eps_bar_u_sat = saturated_bound_values(
      params.kappa * params.dt, params.alpha, params.mu * params.dt, rate_dt)
  return BoundsReport(eps_l, eps_u, eps_bar_u, upsilon, eps_u_sat,
                      eps_bar_u_sat, ())


def epsilon_sequence(params, iterations):
  """Bounds along value iteration started from J = 0.

  Each returned array has iterations + 1 entries starting at 0; they increase
  towards the values of epsilon_bounds.
  """
  rate_dt = (params.lam + params.mu) * params.dt
  upsilon = params.lam * params.dt * (params.n - params.n1)
  two_kappa = 2 * params.kappa * params.dt
  alpha = params.alpha
  lower = np.zeros(iterations + 1)
  upper = np.zeros(iterations + 1)
  diagonal = np.zeros(iterations + 1)
  for k in range(iterations):
    lower[k + 1] = two_kappa + alpha * (1 - 2 * rate_dt - upsilon) * lower[k]
    upper[k + 1] = two_kappa + alpha * (1 - 2 * rate_dt) * upper[k]
    diagonal[k + 1] = (alpha * (1 - rate_dt) * diagonal[k] +
                       alpha * rate_dt * upper[k])
  return EpsilonSequence(lower, upper, diagonal)


def asymptotic_epsilon(k, q, r_disc, lam, mu, n_list):
  """Limit bounds when the reserve scales with the population, r = q n.

  Returns:
    One AsymptoticRow per entry of n_list.
  """
  if q <= 0:
    raise ParameterError('constraint violated: q > 0 (q=%g)' % q)
  rows = []
  for n in n_list:
    if n < 1:
      raise ParameterError('constraint violated: n >= 1 (n=%g)' % n)
    eps_u = (2 * k / (q * n)**2) / (r_disc + 2 * (lam + mu))
    rows.append(AsymptoticRow(n, eps_u, eps_u / (r_disc + lam + mu)))
  return rows


def _check(name, params, values, lower, upper, offsets, valid=None,
           upper_values=None):
  """Compare values against [lower, upper] over an index grid.

  offsets maps the (d, y, j) indices of `values` to array indices of the
  state reported for the worst pair. upper_values, when given, is held to
  the upper bound in place of values.
  """
  if upper_values is None:
    upper_values = values
  margin = np.minimum(values - lower, upper - upper_values)
  if valid is not None:
    margin = np.where(valid, margin, np.inf)
  pairs = int(np.sum(np.isfinite(margin)))
  if pairs == 0:
    return PropertyCheck(name, True, True, None, None, lower, upper, 0)
  worst = np.unravel_index(np.argmin(margin), margin.shape)
  index = tuple(int(w) + o for w, o in zip(worst, offsets))
  worst_margin = float(margin[worst])
  return PropertyCheck(name, worst_margin >= 0, False,
                       params.state_at(index), worst_margin, lower, upper,
                       pairs)


def _skipped(name, lower, upper):
  return PropertyCheck(name, True, True, None, None, lower, upper, 0)


def _fixed_error_moves(params):
  "True when a signal step shifts the target by exactly one appliance."
  return abs(params.delta_y * params.r - 1) < 1e-9


def _band_mask(params, y_band, count):
  "Mask of signal index pairs (y, y + 1) away from the reflecting edges."
  y = np.arange(count)
  return (y >= y_band) & (y + 1 <= params.n_y - 1 - y_band)


def _require_converged(table):
  if not getattr(table, 'converged', False):
    raise VerificationError('refusing to verify an unconverged %s table' %
                            getattr(table, 'solver', 'unknown'))


def verify_value_monotonicity(table, bounds, slack=None, y_band=0):
  """Check the bounds on the differential cost of a converged value table.

  Lower bounds across signal levels compare Delta(i, y, D) with the
  differential cost at level y + 1 and direction +1. Upper bounds compare
  states of the same direction and use the saturated bounds.

  Args:
    table: converged ValueTable.
    bounds: BoundsReport from epsilon_bounds.
    slack: tolerance on every bound, 10 times the solver tolerance by default.
    y_band: number of signal levels next to each reflecting edge excluded from
      the comparisons across signal levels.

  Returns:
    The bounds report with three checks: second differences in i, the shift
    along constant tracking error, and the shift in signal level at fixed i.

  Raises:
    VerificationError: the table comes from an unconverged solve.
  """
  _require_converged(table)
  params = table.params
  if slack is None:
    slack = SLACK_FACTOR * table.tol
  values = table.array
  # diff[..., j] is Delta at i = n1 + j + 1
  diff = values[..., 1:] - values[..., :-1]
  checks = [
      _check('second_difference_in_i', params, diff[..., 1:] - diff[..., :-1],
             bounds.eps_l - slack, bounds.eps_u_sat + slack, (0, 0, 1)),
  ]
  diagonal = ('diagonal_shift', 0.0 - slack, bounds.eps_bar_u_sat + slack)
  vertical = ('signal_shift', bounds.eps_l - slack,
              bounds.eps_u_sat + bounds.eps_bar_u_sat + slack)
  if not _fixed_error_moves(params):
    _LOGGER.info('verify: delta_y * r != 1, skipping signal checks')
    checks.append(_skipped(*diagonal))
    checks.append(_skipped(*vertical))
  else:
    band = _band_mask(params, y_band, params.n_y - 1)[None, :, None]
    here = diff[:, :-1, :-1]
    checks.append(
        _check(diagonal[0], params, here - diff[1:, 1:, 1:], diagonal[1],
               diagonal[2], (0, 0, 1), band, here - diff[:, 1:, 1:]))
    checks.append(
        _check(vertical[0], params, here - diff[1:, 1:, :-1], vertical[1],
               vertical[2], (0, 0, 1), band, here - diff[:, 1:, :-1]))
  report = bounds._replace(checks=tuple(checks))
  _LOGGER.info('verify: value checks %s',
               'passed' if report_passed(report) else 'failed')
  return report


def policy_slack(policy):
  "Resolution of a policy table, set by the solver that produced it."
  solver = getattr(policy, 'solver', None)
  if solver == 'cvi':
    return policy.price_step
  if solver == 'avi':
    b = policy.params.b
    if b == 0:
      return np.inf
    return SLACK_FACTOR * policy.tol * policy.params.alpha / b
  return 1e-9


def verify_policy_monotonicity(policy, slack=None, y_band=0):
  """Check the monotonicity of converged thresholds.

  Thresholds must be non-decreasing in i, non-increasing along constant
  tracking error and non-increasing in the signal level at fixed i, each up to
  the slack. The higher signal level of a pair is taken with direction +1.

  Args:
    policy: PolicyTable from a converged solve.
    slack: tolerance, policy_slack(policy) by default.
    y_band: as in verify_value_monotonicity.

  Returns:
    A PolicyReport.
  """
  _require_converged(policy)
  params = policy.params
  if slack is None:
    slack = policy_slack(policy)
  u = policy.array
  tiny = 1e-12
  checks = [
      _check('nondecreasing_in_i', params, u[..., 1:] - u[..., :-1],
             -slack - tiny, np.inf, (0, 0, 0)),
  ]
  band = _band_mask(params, y_band, params.n_y - 1)[None, :, None]
  if _fixed_error_moves(params):
    checks.append(
        _check('diagonal_nonincreasing', params, u[:, :-1, :-1] - u[1:, 1:, 1:],
               -slack - tiny, np.inf, (0, 0, 0), band))
  else:
    checks.append(_skipped('diagonal_nonincreasing', -slack, np.inf))
  checks.append(
      _check('nonincreasing_in_y', params, u[:, :-1, :] - u[1:, 1:, :],
             -slack - tiny, np.inf, (0, 0, 0), band))
  report = PolicyReport(slack, tuple(checks))
  _LOGGER.info('verify: policy checks %s',
               'passed' if report_passed(report) else 'failed')
  return report


def max_policy_slope(policy):
  "Largest threshold change between neighbouring active counts."
  return float(np.max(np.abs(np.diff(policy.array, axis=-1))))


def format_report(report):
  """Render a verification report as flat key = value text."""
  lines = []
  if isinstance(report, BoundsReport):
    for key in ('eps_l', 'eps_u', 'eps_bar_u', 'upsilon', 'eps_u_sat',
                'eps_bar_u_sat'):
      lines.append('%s = %r' % (key, float(getattr(report, key))))
  else:
    lines.append('slack = %r' % float(report.slack))
  for check in report.checks:
    status = 'skipped' if check.skipped else (
        'pass' if check.passed else 'fail')
    lines.append('%s.status = %s' % (check.name, status))
    if not check.skipped:
      s = check.worst_state
      lines.append('%s.worst_state = i=%d k=%d d=%d' %
                   (check.name, s.i, s.k, s.d))
      lines.append('%s.margin = %r' % (check.name, check.margin))
      lines.append('%s.pairs = %d' % (check.name, check.pairs))
    lines.append('%s.lower = %r' % (check.name, float(check.lower)))
    lines.append('%s.upper = %r' % (check.name, float(check.upper)))
  return '\n'.join(lines) + '\n'
