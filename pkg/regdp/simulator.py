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
"""Monte Carlo building simulator and policy evaluation.

Every zone follows a first-order thermal model: idle zones relax towards the
outdoor temperature, active zones cool at a constant rate. Active zones finish
their cycle at rate mu; idle zones observe the broadcast threshold at rate
lambda and reconnect when their temperature is at or above it. Idle zone
temperature histograms are fitted with the trapezoid density, and the fitted
elbow is regressed on the signal level.
"""

import collections
import logging
import math

import numpy as np
from scipy import optimize
from scipy import stats

from regdp import mdp
from regdp.errors import DomainError, InsufficientDataError, ParameterError

_LOGGER = logging.getLogger('regdp')

MIN_FIT_SAMPLES = 100
MIN_REGRESSION_PAIRS = 10
FIT_XATOL = 1e-4
# coarse scan before the bounded search, guards against local optima
_FIT_GRID = 201
COOL_SPANS = 20
HEAT_SPANS = 10

ThermalParams = collections.namedtuple(
    'ThermalParams', 't_out tc_heat c_rate dt_sim floor_margin')

RsrSignal = collections.namedtuple('RsrSignal', 'y k d')

SimTrace = collections.namedtuple(
    'SimTrace', 't y d i e u utility snapshots seed')

Snapshot = collections.namedtuple('Snapshot', 't y temperatures')

RegressionFit = collections.namedtuple(
    'RegressionFit', 'alpha0_hat alpha1_hat r_squared residual_se')

PolicyEvaluation = collections.namedtuple(
    'PolicyEvaluation', 'episodes horizon cost cost_se rms_error '
    'rms_error_se utility utility_se')


def thermal_params(params, t_out, tc_heat, c_rate, dt_sim=None,
                   floor_margin=0.0):
  """Validate thermal constants.

  Args:
    params: model parameters.
    t_out: outdoor temperature, above t_max.
    tc_heat: passive heating time constant.
    c_rate: cooling rate of active zones, degrees per time unit.
    dt_sim: simulation step, params.dt when omitted.
    floor_margin: how far below t_min zone temperatures may fall.
  """
  dt_sim = params.dt if dt_sim is None else float(dt_sim)
  if not t_out > params.t_max:
    raise ParameterError('constraint violated: t_out > t_max (t_out=%g)' %
                         t_out)
  if tc_heat <= 0 or c_rate <= 0 or dt_sim <= 0 or floor_margin < 0:
    raise ParameterError(
        'constraint violated: tc_heat, c_rate, dt_sim > 0 and floor_margin '
        '>= 0')
  return ThermalParams(float(t_out), float(tc_heat), float(c_rate), dt_sim,
                       float(floor_margin))


def calibrate_thermal(params, t_out=None, dt_sim=None, floor_margin=0.0):
  """Thermal constants matched to the appliance rates.

  Active zones cool COOL_SPANS comfort spans per mean cycle 1 / mu, so nearly
  every cycle ends at the floor t_min. The outdoor temperature defaults to
  HEAT_SPANS spans above t_max, which keeps passive heating close to linear
  over the comfort zone. tc_heat is chosen so a zone heats from t_min to
  alpha0 in the mean idle time at the contracted level,
  (n - n_bar) / (n_bar mu), less the mean wait 1 / lambda for a wake-up.
  """
  if t_out is None:
    t_out = params.t_max + HEAT_SPANS * params.span
  if params.mu <= 0:
    raise ParameterError('calibration needs mu > 0')
  idle_time = (params.n - params.n_bar) / (params.n_bar * params.mu)
  wait = 1 / params.lam if params.lam > 0 else 0.0
  heat_time = max(idle_time - wait, idle_time / 2)
  rise = math.log((t_out - params.t_min) / (t_out - params.alpha0))
  tc_heat = heat_time / rise if rise > 0 else heat_time
  c_rate = COOL_SPANS * params.span * params.mu
  _LOGGER.debug('calibrate: t_out %g, tc_heat %g, c_rate %g', t_out, tc_heat,
                c_rate)
  return thermal_params(params, t_out, tc_heat, c_rate, dt_sim, floor_margin)


def generate_rsr_signal(params, steps, seed):
  """Synthetic regulation signal sampled once per signal interval.

  The signal starts at y = 0 with a random direction, moves one step each
  interval, keeps its direction with probability 0.8 and reflects at -1 and 1.

  Returns:
    An RsrSignal of arrays with `steps` entries.
  """
  if steps < 1:
    raise DomainError('steps must be at least 1, got %r' % steps)
  rng = np.random.default_rng(seed)
  edge = params.y_steps
  k = 0
  d = 1 if rng.random() < 0.5 else -1
  ks = np.empty(steps, dtype=int)
  ds = np.empty(steps, dtype=int)
  for t, x in enumerate(rng.random(steps).tolist()):
    ks[t] = k
    ds[t] = d
    step = d if x < mdp.PERSISTENCE else -d
    if not -edge <= k + step <= edge:
      step = -step
    k += step
    d = step
  return RsrSignal(ks * params.delta_y, ks, ds)


def _initial_zones(params, rng):
  temperatures = rng.uniform(params.t_min, params.t_max, params.n)
  active = np.zeros(params.n, dtype=bool)
  count = int(min(max(round(params.n_bar), params.n1), params.n2))
  active[rng.choice(params.n, size=count, replace=False)] = True
  return temperatures, active


def _cap(mask, limit):
  "Keep at most limit True entries of mask, the first ones."
  if limit <= 0:
    return np.zeros_like(mask)
  chosen = np.flatnonzero(mask)
  if len(chosen) > limit:
    mask = mask.copy()
    mask[chosen[limit:]] = False
  return mask


def simulate_building(params, thermal, policy, signal, seed,
                      snapshot_every=0):
  """Simulate every zone of the building under a policy table.

  Each signal entry lasts tau_y, i.e. round(tau_y / dt_sim) simulation steps.

  Args:
    params: model parameters.
    thermal: ThermalParams.
    policy: PolicyTable covering every state.
    signal: RsrSignal.
    seed: seed of the numpy Generator.
    snapshot_every: record idle zone temperatures every so many steps, never
      when 0.

  Returns:
    A SimTrace with one entry per simulation step.

  Raises:
    DomainError: the simulation reached a state outside the policy table.
  """
  if len(signal.k) == 0:
    raise DomainError('empty signal')
  rng = np.random.default_rng(seed)
  ratio = max(1, int(round(params.tau_y / thermal.dt_sim)))
  steps = len(signal.k) * ratio
  thresholds = policy.array
  heat = 1 - math.exp(-thermal.dt_sim / thermal.tc_heat)
  cool = thermal.c_rate * thermal.dt_sim
  p_complete = 1 - math.exp(-params.mu * thermal.dt_sim)
  p_wake = 1 - math.exp(-params.lam * thermal.dt_sim)
  floor = params.t_min - thermal.floor_margin
  temperatures, active = _initial_zones(params, rng)
  count = int(active.sum())
  out = {key: np.empty(steps) for key in ('t', 'y', 'e', 'u')}
  out_i = np.empty(steps, dtype=int)
  out_d = np.empty(steps, dtype=int)
  utility = 0.0
  snapshots = []
  for t in range(steps):
    k = int(signal.k[t // ratio])
    d = int(signal.d[t // ratio])
    if not params.n1 <= count <= params.n2:
      raise DomainError('active count %d outside the policy table' % count)
    u = thresholds[0 if d < 0 else 1, k + params.y_steps, count - params.n1]
    y = k * params.delta_y
    out['t'][t] = t * thermal.dt_sim
    out['y'][t] = y
    out['e'][t] = count - params.n_bar - y * params.r
    out['u'][t] = u
    out_i[t] = count
    out_d[t] = d
    if snapshot_every and t % snapshot_every == 0:
      snapshots.append(Snapshot(t * thermal.dt_sim, y,
                                temperatures[~active].copy()))
    idle = ~active
    temperatures = np.where(
        active, temperatures - cool,
        temperatures + (thermal.t_out - temperatures) * heat)
    np.clip(temperatures, floor, thermal.t_out, out=temperatures)
    draws = rng.random((2, params.n))
    completing = _cap(active & (draws[0] < p_complete), count - params.n1)
    waking = idle & (draws[1] < p_wake) & (temperatures >= u)
    waking = _cap(waking, params.n2 - count + int(completing.sum()))
    utility += params.b * float(np.sum(temperatures[waking] - params.t_min))
    active = (active & ~completing) | waking
    count = int(active.sum())
  _LOGGER.info('simulate: %d steps, %d snapshots', steps, len(snapshots))
  return SimTrace(out['t'], out['y'], out_d, out_i, out['e'], out['u'],
                  utility, snapshots, seed)


def _clean_samples(samples, t_min, t_max):
  x = np.asarray(samples, dtype=float).ravel()
  inside = (x >= t_min) & (x <= t_max)
  if not np.all(inside):
    _LOGGER.warning('fit: dropping %d samples outside [%g, %g]',
                    int(np.sum(~inside)), t_min, t_max)
  x = x[inside]
  if len(x) < MIN_FIT_SAMPLES:
    raise InsufficientDataError(
        '%d samples inside [%g, %g], at least %d required' %
        (len(x), t_min, t_max, MIN_FIT_SAMPLES))
  # the density vanishes at t_max unless t_hat = t_max
  return np.minimum(x, t_max - 1e-9 * (t_max - t_min))


def fit_trapezoid(samples, t_min, t_max):
  """Maximum likelihood estimate of the trapezoid elbow.

  A coarse scan of the log-likelihood brackets the optimum, which is then
  refined by bounded Brent search to 1e-4 degrees.

  Raises:
    InsufficientDataError: fewer than 100 samples inside [t_min, t_max].
  """
  x = _clean_samples(samples, t_min, t_max)

  def loglik(t_hat):
    return mdp.TrapezoidPdf(t_hat, t_min, t_max).log_likelihood(x)

  grid = np.linspace(t_min, t_max, _FIT_GRID)
  scores = np.array([loglik(t) for t in grid])
  best = int(np.argmax(scores))
  lo = grid[max(best - 1, 0)]
  hi = grid[min(best + 1, _FIT_GRID - 1)]
  result = optimize.minimize_scalar(lambda t: -loglik(t), bounds=(lo, hi),
                                    method='bounded',
                                    options={'xatol': FIT_XATOL})
  if np.isfinite(result.fun) and -result.fun >= scores[best]:
    return float(result.x)
  return float(grid[best])


def ks_distance(samples, pdf):
  "Kolmogorov-Smirnov distance between samples and a trapezoid density."
  x = np.asarray(samples, dtype=float).ravel()
  return float(stats.kstest(x, pdf.cdf).statistic)


def elbow_by_signal(trace, t_min, t_max, min_samples=MIN_FIT_SAMPLES):
  """Fit the elbow of pooled idle temperatures at each signal level.

  Snapshots are grouped by their concurrent signal level; levels with fewer
  than min_samples temperatures inside the support are dropped.

  Returns:
    A list of (y, t_hat, samples) tuples sorted by y.
  """
  pooled = collections.defaultdict(list)
  for snapshot in trace.snapshots:
    pooled[round(snapshot.y, 9)].append(snapshot.temperatures)
  out = []
  for y in sorted(pooled):
    x = np.concatenate(pooled[y])
    x = x[(x >= t_min) & (x <= t_max)]
    if len(x) < max(min_samples, MIN_FIT_SAMPLES):
      continue
    out.append((y, fit_trapezoid(x, t_min, t_max), x))
  return out


def fit_histograms_by_decile(trace, t_min, t_max, buckets=10):
  """Fit the elbow of idle temperatures pooled by signal decile.

  Snapshots are assigned to `buckets` equal-width bins of y over [-1, 1].

  Returns:
    A list of (mean y, t_hat) tuples in ascending y order, one per bin holding
    enough samples.
  """
  edges = np.linspace(-1.0, 1.0, buckets + 1)
  pooled = collections.defaultdict(list)
  levels = collections.defaultdict(list)
  for snapshot in trace.snapshots:
    bucket = min(int(np.searchsorted(edges, snapshot.y, side='right')) - 1,
                 buckets - 1)
    pooled[bucket].append(snapshot.temperatures)
    levels[bucket].append(snapshot.y)
  out = []
  for bucket in sorted(pooled):
    x = np.concatenate(pooled[bucket])
    x = x[(x >= t_min) & (x <= t_max)]
    if len(x) < MIN_FIT_SAMPLES:
      continue
    out.append((float(np.mean(levels[bucket])), fit_trapezoid(x, t_min,
                                                              t_max)))
  return out


def regress_t_hat_on_y(pairs):
  """Ordinary least squares of fitted elbows on signal levels.

  Args:
    pairs: sequence of (y, t_hat).

  Returns:
    A RegressionFit.

  Raises:
    InsufficientDataError: fewer than 10 pairs or fewer than 3 distinct y.
  """
  data = np.asarray(pairs, dtype=float).reshape(-1, 2)
  if len(data) < MIN_REGRESSION_PAIRS:
    raise InsufficientDataError('%d pairs, at least %d required' %
                                (len(data), MIN_REGRESSION_PAIRS))
  y, t_hat = data[:, 0], data[:, 1]
  if len(np.unique(y)) < 3:
    raise InsufficientDataError('degenerate design: fewer than 3 distinct y')
  fit = stats.linregress(y, t_hat)
  residual = t_hat - (fit.intercept + fit.slope * y)
  residual_se = math.sqrt(float(residual @ residual) / (len(data) - 2))
  return RegressionFit(float(fit.intercept), float(fit.slope),
                       float(fit.rvalue**2), residual_se)


def snapshot_histograms(trace, lo, hi, bins=20):
  "Histogram rows (t, bucket_low, bucket_high, count) of every snapshot."
  edges = np.linspace(lo, hi, bins + 1)
  for snapshot in trace.snapshots:
    counts, _ = np.histogram(snapshot.temperatures, bins=edges)
    for low, high, count in zip(edges[:-1], edges[1:], counts):
      yield snapshot.t, float(low), float(high), int(count)


def _standard_error(values):
  if len(values) < 2:
    return 0.0
  return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def evaluate_policy(params, policy, episodes, horizon, seed):
  """Estimate the performance of a policy on the uniformized chain.

  Episodes start at the contracted level with y = 0 and a random direction
  and are simulated side by side.

  Returns:
    A PolicyEvaluation with the mean discounted cost, the root mean square
    tracking error and the mean expected utility per period, each with its
    standard error over episodes.
  """
  if episodes < 1 or horizon < 1:
    raise DomainError('episodes and horizon must be positive')
  kernel = mdp.Kernel(params)
  thresholds = policy.array
  bounds, targets = kernel.moves(thresholds)
  cost = kernel.cost(thresholds).ravel()
  utility = kernel.utility(thresholds).ravel()
  error = np.asarray(kernel.error).ravel()
  rng = np.random.default_rng(seed)
  start_i = int(min(max(round(params.n_bar), params.n1), params.n2))
  directions = rng.integers(0, 2, episodes)
  state = np.ravel_multi_index(
      (directions, np.full(episodes, params.y_steps),
       np.full(episodes, start_i - params.n1)), params.shape)
  total_cost = np.zeros(episodes)
  squared_error = np.zeros(episodes)
  total_utility = np.zeros(episodes)
  discount = 1.0
  for _ in range(int(horizon)):
    total_cost += discount * cost[state]
    squared_error += error[state]**2
    total_utility += utility[state]
    discount *= params.alpha
    x = rng.random(episodes)
    below = x[None, :] < bounds[:, state]
    move = np.argmax(below, axis=0)
    stays = ~below.any(axis=0)
    state = np.where(stays, state, targets[move, state])
  rms = np.sqrt(squared_error / horizon)
  mean_utility = total_utility / horizon
  return PolicyEvaluation(int(episodes), int(horizon),
                          float(total_cost.mean()),
                          _standard_error(total_cost), float(rms.mean()),
                          _standard_error(rms), float(mean_utility.mean()),
                          _standard_error(mean_utility))
