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
"""Model parameters, preference distribution and transition kernel.

The state of the building is the triple (i, k, d): the number of active
appliances, the index of the regulation signal level y = k * delta_y and the
signal direction. Every rate is stored pre-scaled by the uniformized period
dt, so transition quantities are per-period probabilities.

Grid-shaped arrays use the layout (d, y, i): axis 0 holds d = -1 then d = +1,
axis 1 the signal levels in ascending order and axis 2 the active counts from
n1 to n2. C-order flattening therefore sorts states by (d, y, i).
"""

import collections
import collections.abc
import logging

import numpy as np

from regdp.errors import DomainError, ParameterError

_LOGGER = logging.getLogger('regdp')

EPS = 1e-12

# persistence of the signal direction over one signal interval
PERSISTENCE = 0.8

DEFAULT_TAU_RATIO = 10.0
DEFAULT_R_DISC = 5.0
DEFAULT_K = 1000.0

PARAM_FIELDS = ('n', 'n1', 'n2', 'n_bar', 'r', 'k', 'lam', 'mu', 'b', 't_min',
                't_max', 'alpha0', 'alpha1', 'delta_y', 'tau_y', 'r_disc')

DIRECTIONS = (-1, 1)


def _integer(name, value):
  try:
    as_int = int(value)
  except (TypeError, ValueError):
    raise ParameterError('%s must be an integer, got %r' % (name, value))
  if as_int != float(value):
    raise ParameterError('%s must be an integer, got %r' % (name, value))
  return as_int


def _require(condition, constraint, **values):
  if not condition:
    detail = ', '.join('%s=%g' % kv for kv in sorted(values.items()))
    raise ParameterError('constraint violated: %s (%s)' % (constraint, detail))


class ModelParams(collections.namedtuple('ModelParams', PARAM_FIELDS)):
  """Problem constants of the tracking MDP.

  Use `create` to build instances: it fills the documented defaults and checks
  every constraint. Uniformization quantities (dt, alpha, signal transition
  probabilities) and kappa are derived properties, never stored.

  Fields:
    n: number of appliances.
    n1, n2: bounds on the number of active appliances.
    n_bar: contracted consumption level.
    r: maximum reserve, in appliance units.
    k: tracking penalty coefficient.
    lam: rate at which idle appliances observe the price.
    mu: rate at which active appliances complete their cooling cycle.
    b: utility slope, price per degree.
    t_min, t_max: comfort zone bounds.
    alpha0, alpha1: regression of the preference elbow on the signal.
    delta_y: signal step size.
    tau_y: signal update interval.
    r_disc: continuous discount rate.
  """
  __slots__ = ()

  @classmethod
  def create(cls, n, n_bar, r, lam, mu, n1=0, n2=None, k=DEFAULT_K, b=1.0,
             t_min=0.0, t_max=10.0, alpha0=None, alpha1=None, delta_y=None,
             tau_y=None, tau_ratio=DEFAULT_TAU_RATIO, r_disc=DEFAULT_R_DISC):
    """Validate arguments and return a new parameter set.

    Args:
      n, n_bar, r, lam, mu: required model constants.
      n1, n2: active count bounds, default to 0 and n.
      alpha0, alpha1: default to the comfort zone midpoint and to -0.2 times
        its width.
      delta_y: defaults to 1 / r, so one signal step moves the target by one
        appliance.
      tau_y: defaults to the value making tau_y / dt equal to tau_ratio.
      k, b, t_min, t_max, r_disc: see the class docstring.

    Returns:
      A ModelParams instance.

    Raises:
      ParameterError: a constraint is violated; the message names it.
    """
    n = _integer('n', n)
    n1 = _integer('n1', n1)
    n2 = n if n2 is None else _integer('n2', n2)
    t_min, t_max = float(t_min), float(t_max)
    if alpha0 is None:
      alpha0 = (t_min + t_max) / 2
    if alpha1 is None:
      alpha1 = -0.2 * (t_max - t_min)
    r = float(r)
    if delta_y is None:
      _require(r >= 1, 'r >= 1 when delta_y defaults to 1 / r', r=r)
      delta_y = 1.0 / r
    lam, mu = float(lam), float(mu)
    _require(n >= 1, 'n >= 1', n=n)
    _require(0 <= n1 <= n2 <= n, '0 <= n1 <= n2 <= n', n=n, n1=n1, n2=n2)
    _require(lam >= 0 and mu >= 0, 'lambda >= 0 and mu >= 0', lam=lam, mu=mu)
    _require(max(lam, mu) > 0, 'max(lambda, mu) > 0', lam=lam, mu=mu)
    if tau_y is None:
      _require(tau_ratio > 1, 'tau_ratio > 1', tau_ratio=tau_ratio)
      tau_y = (tau_ratio - 1) / (n * max(lam, mu))
    params = cls(n, n1, n2, float(n_bar), r, float(k), lam, mu, float(b),
                 t_min, t_max, float(alpha0), float(alpha1), float(delta_y),
                 float(tau_y), float(r_disc))
    params.validate()
    return params

  def validate(self):
    "Check every model constraint, raising ParameterError on the first one."
    _require(self.r > 0, 'r > 0', r=self.r)
    _require(self.n1 <= self.n_bar - self.r, 'n1 <= n_bar - r', n1=self.n1,
             n_bar=self.n_bar, r=self.r)
    _require(self.n_bar + self.r <= self.n2, 'n_bar + r <= n2', n2=self.n2,
             n_bar=self.n_bar, r=self.r)
    _require(self.k >= 0, 'k >= 0', k=self.k)
    _require(self.b >= 0, 'b >= 0', b=self.b)
    _require(self.t_min < self.t_max, 't_min < t_max', t_min=self.t_min,
             t_max=self.t_max)
    _require(self.alpha1 < 0, 'alpha1 < 0', alpha1=self.alpha1)
    _require(0 < self.delta_y <= 1, '0 < delta_y <= 1', delta_y=self.delta_y)
    steps = 1 / self.delta_y
    _require(abs(steps - round(steps)) < 1e-9, '1 / delta_y is an integer',
             delta_y=self.delta_y)
    _require(self.tau_y > 0, 'tau_y > 0', tau_y=self.tau_y)
    _require(self.r_disc > 0, 'r_disc > 0', r_disc=self.r_disc)
    worst = max(
        (self.n - self.n1) * self.lam + self.n1 * self.mu,
        (self.n - self.n2) * self.lam + self.n2 * self.mu,
    ) * self.dt + self.signal_prob
    _require(worst <= 1 + EPS, 'a + d + gamma <= 1 in every state',
             exit_probability=worst)

  def replace(self, **kw):
    "Return a validated copy with some fields replaced."
    params = self._replace(**kw)
    params.validate()
    return params

  @property
  def kappa(self):
    return self.k / self.r**2

  @property
  def rate_max(self):
    return max(self.lam, self.mu)

  @property
  def dt(self):
    return self.tau_y / (self.n * self.rate_max * self.tau_y + 1)

  @property
  def alpha(self):
    return 1 / (1 + self.r_disc * self.dt)

  @property
  def signal_prob(self):
    "Probability that the signal moves during one period."
    return self.dt / self.tau_y

  @property
  def gamma1_u(self):
    return PERSISTENCE * self.signal_prob

  @property
  def gamma2_u(self):
    return (1 - PERSISTENCE) * self.signal_prob

  @property
  def gamma1_d(self):
    return (1 - PERSISTENCE) * self.signal_prob

  @property
  def gamma2_d(self):
    return PERSISTENCE * self.signal_prob

  @property
  def y_steps(self):
    "Number of signal steps between 0 and 1."
    return int(round(1 / self.delta_y))

  @property
  def n_i(self):
    return self.n2 - self.n1 + 1

  @property
  def n_y(self):
    return 2 * self.y_steps + 1

  @property
  def shape(self):
    return (2, self.n_y, self.n_i)

  @property
  def i_values(self):
    return np.arange(self.n1, self.n2 + 1)

  @property
  def y_values(self):
    return np.arange(-self.y_steps, self.y_steps + 1) * self.delta_y

  @property
  def span(self):
    return self.t_max - self.t_min

  def signal_level(self, k):
    return k * self.delta_y

  def check_state(self, s):
    "Raise DomainError unless s is a valid grid state."
    i, k, d = s
    if d not in DIRECTIONS:
      raise DomainError('invalid direction %r in state %r' % (d, s))
    if not self.n1 <= i <= self.n2:
      raise DomainError('active count outside [%d, %d] in state %r' %
                        (self.n1, self.n2, s))
    if not -self.y_steps <= k <= self.y_steps:
      raise DomainError('signal index outside [-%d, %d] in state %r' %
                        (self.y_steps, self.y_steps, s))

  def index(self, s):
    "Return the (d, y, i) array index of a state."
    self.check_state(s)
    i, k, d = s
    return (0 if d < 0 else 1, k + self.y_steps, i - self.n1)

  def state_at(self, index):
    "Return the state stored at a (d, y, i) array index."
    d_index, y_index, i_index = (int(v) for v in index)
    return State(i_index + self.n1, y_index - self.y_steps,
                 DIRECTIONS[d_index])

  def states(self):
    "Iterate over all grid states sorted by (d, y, i)."
    for d in DIRECTIONS:
      for k in range(-self.y_steps, self.y_steps + 1):
        for i in range(self.n1, self.n2 + 1):
          yield State(i, k, d)


class State(collections.namedtuple('State', 'i k d')):
  "Grid state: active count, signal level index and signal direction."
  __slots__ = ()


def tracking_error(params, s):
  "Deviation of consumption from the requested level, i - n_bar - y r."
  return s.i - params.n_bar - params.signal_level(s.k) * params.r


def check_support(x, lo, hi, what):
  "Clip x to [lo, hi], rejecting NaN and values more than EPS outside."
  x = np.asarray(x, dtype=float)
  if np.any(x < lo - EPS) or np.any(x > hi + EPS) or np.any(np.isnan(x)):
    raise DomainError('%s outside [%g, %g]: %r' % (what, lo, hi, x.tolist()))
  return np.clip(x, lo, hi)


def as_scalar(value):
  "Unwrap 0-d results to float, leave arrays alone."
  return float(value) if np.ndim(value) == 0 else value


def _height(t_hat, t_min, t_max):
  return 2 / (t_max + t_hat - 2 * t_min)


def _density(x, t_hat, t_min, t_max):
  h = _height(t_hat, t_min, t_max)
  tail = t_max - t_hat
  safe = np.where(tail > 0, tail, 1.0)
  return np.where(x <= t_hat, h, h * (t_max - x) / safe)


def _survival(u, t_hat, t_min, t_max):
  h = _height(t_hat, t_min, t_max)
  tail = t_max - t_hat
  safe = np.where(tail > 0, tail, 1.0)
  upper = h * (t_max - u)**2 / (2 * safe)
  lower = h * (t_hat - u) + h * tail / 2
  return np.where(u >= t_hat, np.where(tail > 0, upper, 0.0), lower)


def _tail_moment(length, t_min, t_max):
  "Integral of ((t_max - t_min) - s) s over [0, length]."
  return (t_max - t_min) * length**2 / 2 - length**3 / 3


def _partial_utility(u, t_hat, t_min, t_max, b):
  "Integral of b (T - t_min) p(T) over [u, t_max]."
  h = _height(t_hat, t_min, t_max)
  tail = t_max - t_hat
  safe = np.where(tail > 0, tail, 1.0)
  upper = b * h * _tail_moment(t_max - u, t_min, t_max) / safe
  elbow = (t_max - t_min) * tail / 2 - tail**2 / 3
  lower = b * h * ((t_hat - t_min)**2 - (u - t_min)**2) / 2 + b * h * elbow
  return np.where(u >= t_hat, np.where(tail > 0, upper, 0.0), lower)


class TrapezoidPdf(
    collections.namedtuple('TrapezoidPdf', 't_hat t_min t_max')):
  """Single-parameter preference density of idle zone temperatures.

  The density is flat at height h on [t_min, t_hat] and falls linearly to zero
  at t_max; t_hat equal to t_max gives the uniform density.
  """
  __slots__ = ()

  def __new__(cls, t_hat, t_min, t_max):
    t_min, t_max = float(t_min), float(t_max)
    if not t_min < t_max:
      raise ParameterError('constraint violated: t_min < t_max')
    t_hat = float(check_support(t_hat, t_min, t_max, 't_hat'))
    return super(TrapezoidPdf, cls).__new__(cls, t_hat, t_min, t_max)

  @property
  def h(self):
    return _height(self.t_hat, self.t_min, self.t_max)

  def density(self, x):
    x = check_support(x, self.t_min, self.t_max, 'temperature')
    return as_scalar(_density(x, self.t_hat, self.t_min, self.t_max))

  def survival(self, u):
    u = check_support(u, self.t_min, self.t_max, 'threshold')
    return as_scalar(_survival(u, self.t_hat, self.t_min, self.t_max))

  def cdf(self, x):
    "Cumulative distribution, accepting values outside the support."
    x = np.clip(np.asarray(x, dtype=float), self.t_min, self.t_max)
    return as_scalar(1 - _survival(x, self.t_hat, self.t_min, self.t_max))

  def partial_utility(self, u, b):
    "Expected utility b (T - t_min) collected above threshold u."
    u = check_support(u, self.t_min, self.t_max, 'threshold')
    return as_scalar(_partial_utility(u, self.t_hat, self.t_min, self.t_max, b))

  def mean_utility(self, b):
    return self.partial_utility(self.t_min, b)

  def ppf(self, q):
    "Inverse cumulative distribution."
    q = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
    h = self.h
    knee = h * (self.t_hat - self.t_min)
    flat = self.t_min + q / h
    tail = self.t_max - np.sqrt(
        np.maximum(2 * (self.t_max - self.t_hat) * (1 - q) / h, 0.0))
    return as_scalar(np.where(q <= knee, flat, tail))

  def sample(self, rng, size):
    "Draw samples by inverse transform from a numpy Generator."
    return self.ppf(rng.random(size))

  def log_likelihood(self, samples):
    x = np.asarray(samples, dtype=float)
    with np.errstate(divide='ignore'):
      return float(np.sum(np.log(_density(x, self.t_hat, self.t_min,
                                          self.t_max))))


def trapezoid_density(pdf, x):
  """Return the preference density at temperature x.

  Raises:
    DomainError: x lies outside [t_min, t_max].
  """
  return pdf.density(x)


def survival(pdf, u):
  "Share of idle zones whose temperature is at least u."
  return pdf.survival(u)


def _check_count(params, i):
  if np.any(np.asarray(i) < params.n1) or np.any(np.asarray(i) > params.n2):
    raise DomainError('active count outside [%d, %d]: %r' %
                      (params.n1, params.n2, i))


def expected_utility_rate(params, pdf, i, u):
  """Expected utility collected per period from reconnecting appliances.

  Args:
    params: model parameters.
    pdf: preference density in force.
    i: number of active appliances.
    u: broadcast temperature threshold.

  Returns:
    (n - i) lambda dt times the integral of b (T - t_min) p(T) over [u, t_max].
  """
  _check_count(params, i)
  return as_scalar((params.n - np.asarray(i)) * params.lam * params.dt *
                 pdf.partial_utility(u, params.b))


def uniform_utility_rate(params, i, u):
  "Closed form of the expected utility rate under the uniform density."
  _check_count(params, i)
  u = check_support(u, params.t_min, params.t_max, 'threshold')
  mass = params.b * (params.span**2 - (u - params.t_min)**2) / (2 * params.span)
  return as_scalar((params.n - np.asarray(i)) * params.lam * params.dt * mass)


def arrival_rate(params, pdf, i, u):
  "Probability per period that an idle appliance reconnects."
  _check_count(params, i)
  return as_scalar((params.n - np.asarray(i)) * params.lam * params.dt *
                 pdf.survival(u))


def departure_rate(params, i):
  "Probability per period that an active appliance completes its cycle."
  _check_count(params, i)
  return as_scalar(np.asarray(i) * params.mu * params.dt)


def tracking_penalty(params, s):
  "Quadratic tracking cost of one period."
  return params.kappa * tracking_error(params, s)**2 * params.dt


def t_hat_of_y(params, y):
  "Preference elbow implied by the signal level, clamped to the comfort zone."
  return as_scalar(np.clip(params.alpha0 + params.alpha1 * np.asarray(y),
                         params.t_min, params.t_max))


def pdf_of_state(params, s):
  return TrapezoidPdf(t_hat_of_y(params, params.signal_level(s.k)),
                      params.t_min, params.t_max)


class TransitionList(
    collections.namedtuple('TransitionList', 'state entries self_loop')):
  """Outgoing transitions of one state under a fixed threshold.

  `entries` holds (next_state, probability) pairs with positive probability,
  ordered arrival, departure, signal up, signal down; `self_loop` holds the
  residual probability of staying put.
  """
  __slots__ = ()

  def outcomes(self):
    "Iterate over all (next_state, probability) pairs, self-loop last."
    for entry in self.entries:
      yield entry
    yield (self.state, self.self_loop)

  @property
  def total(self):
    return sum(p for _, p in self.entries) + self.self_loop


def _signal_moves(params, k, d):
  "Return (up, down) move probabilities after boundary reflection."
  if d > 0:
    up, down = params.gamma1_u, params.gamma2_u
  else:
    up, down = params.gamma1_d, params.gamma2_d
  if k == params.y_steps:
    up, down = 0.0, up + down
  elif k == -params.y_steps:
    up, down = up + down, 0.0
  return up, down


def admits_arrivals(params, i):
  "Arrivals are suppressed at the upper bound n2."
  return i < params.n2


def transitions(params, s, u):
  """List the uniformized transitions of state s under threshold u.

  Arrivals are suppressed at n2 and departures at n1, their mass going to the
  self-loop. At the signal boundaries the blocked move is reflected into the
  opposite one.

  Raises:
    DomainError: invalid state or threshold.
  """
  params.check_state(s)
  pdf = pdf_of_state(params, s)
  entries = []
  if admits_arrivals(params, s.i):
    a = arrival_rate(params, pdf, s.i, u)
    if a > 0:
      entries.append((State(s.i + 1, s.k, s.d), a))
  else:
    check_support(u, params.t_min, params.t_max, 'threshold')
  if s.i > params.n1:
    d = departure_rate(params, s.i)
    if d > 0:
      entries.append((State(s.i - 1, s.k, s.d), d))
  up, down = _signal_moves(params, s.k, s.d)
  if up > 0:
    entries.append((State(s.i, s.k + 1, 1), up))
  if down > 0:
    entries.append((State(s.i, s.k - 1, -1), down))
  self_loop = 1 - sum(p for _, p in entries)
  return TransitionList(s, tuple(entries), max(self_loop, 0.0))


def period_cost(params, s, u):
  """Tracking penalty minus expected utility for one period.

  Utility only accrues where arrivals are admissible.
  """
  cost = tracking_penalty(params, s)
  if admits_arrivals(params, s.i):
    cost -= expected_utility_rate(params, pdf_of_state(params, s), s.i, u)
  return cost


def forward_difference(values):
  "J(i + 1) - J(i) along the last axis, one-sided at the upper bound."
  values = np.asarray(values, dtype=float)
  delta = np.empty_like(values)
  delta[..., :-1] = values[..., 1:] - values[..., :-1]
  delta[..., -1] = delta[..., -2]
  return delta


class Kernel(object):
  """Vectorized transition structure over the full state grid.

  The expectation of a grid function J after one period under thresholds u is
  `stay + arrival(u) * delta`, where `split` returns the threshold-independent
  part `stay` and the forward difference `delta` of J in i. At i = n2 the
  difference is one-sided, J(n2) - J(n2 - 1), and carries no arrival mass.

  Args:
    params: model parameters.
  """

  def __init__(self, params):
    self.params = params
    i = params.i_values.astype(float)
    self.arrival_base = (params.n - i) * params.lam * params.dt
    self.arrival_base[-1] = 0.0
    self.departure = i * params.mu * params.dt
    self.departure[0] = 0.0
    up = np.empty((2, params.n_y))
    down = np.empty((2, params.n_y))
    for d_index, d in enumerate(DIRECTIONS):
      for y_index in range(params.n_y):
        up[d_index, y_index], down[d_index, y_index] = _signal_moves(
            params, y_index - params.y_steps, d)
    self.up = up[:, :, None]
    self.down = down[:, :, None]
    self.t_hat = np.asarray(t_hat_of_y(params, params.y_values), dtype=float)
    error = (params.i_values[None, :] - params.n_bar -
             params.y_values[:, None] * params.r)
    self.error = np.broadcast_to(error, params.shape)
    self.penalty = np.broadcast_to(params.kappa * error**2 * params.dt,
                                   params.shape)

  def survival(self, u):
    return _survival(u, self.t_hat[None, :, None], self.params.t_min,
                     self.params.t_max)

  def threshold_table(self, thresholds):
    """Reconnecting share and utility mass per signal level and threshold.

    Returns:
      (share, mass), two arrays of shape (n_y, len(thresholds)).
    """
    p = self.params
    u = np.asarray(thresholds, dtype=float)[None, :]
    t_hat = self.t_hat[:, None]
    return (_survival(u, t_hat, p.t_min, p.t_max),
            _partial_utility(u, t_hat, p.t_min, p.t_max, p.b))

  def arrival(self, u):
    "Arrival probability per state under thresholds u."
    return self.arrival_base * self.survival(u)

  def utility(self, u):
    "Expected utility rate per state under thresholds u."
    p = self.params
    return self.arrival_base * _partial_utility(
        u, self.t_hat[None, :, None], p.t_min, p.t_max, p.b)

  def cost(self, u):
    return self.penalty - self.utility(u)

  def split(self, values):
    "Return (stay, delta) for a grid function."
    values = np.asarray(values, dtype=float)
    up_target = np.empty(values.shape[1:])
    up_target[:-1] = values[1, 1:]
    up_target[-1] = values[1, -1]
    down_target = np.empty(values.shape[1:])
    down_target[1:] = values[0, :-1]
    down_target[0] = values[0, 0]
    below = np.concatenate([values[..., :1], values[..., :-1]], axis=-1)
    stay = (self.departure * below + self.up * up_target[None] +
            self.down * down_target[None] +
            (1 - self.departure - self.up - self.down) * values)
    return stay, forward_difference(values)

  def expect(self, values, u):
    stay, delta = self.split(values)
    return stay + self.arrival(u) * delta

  def backup(self, values, u):
    "Bellman backup of a grid function under fixed thresholds."
    return self.cost(u) + self.params.alpha * self.expect(values, u)

  def moves(self, u):
    """Cumulative move probabilities and successors over flat state indices.

    Returns:
      (bounds, targets), two arrays of shape (4, states) for arrival,
      departure, signal up and signal down. A uniform draw x moves the chain
      to targets[m] for the first m with x < bounds[m] and leaves it in place
      when x is above every bound.
    """
    shape = self.params.shape
    n_y, n_i = shape[1], shape[2]
    probabilities = np.stack([
        self.arrival(u) * np.ones(shape),
        np.broadcast_to(self.departure, shape),
        np.broadcast_to(self.up, shape),
        np.broadcast_to(self.down, shape),
    ]).reshape(4, -1)
    index = np.arange(n_y * n_i * 2).reshape(shape)
    _, y_index, i_index = np.indices(shape)
    targets = np.stack([
        np.where(i_index < n_i - 1, index + 1, index),
        np.where(i_index > 0, index - 1, index),
        (n_y + np.minimum(y_index + 1, n_y - 1)) * n_i + i_index,
        np.maximum(y_index - 1, 0) * n_i + i_index,
    ]).reshape(4, -1)
    return np.cumsum(probabilities, axis=0), targets


class StateTable(collections.abc.Mapping):
  """Read-only mapping from grid states to floats, backed by a dense array.

  Solver metadata passed as keyword arguments is exposed as attributes.
  """

  def __init__(self, params, raw, **meta):
    raw = np.array(raw, dtype=float)
    if raw.shape != params.shape:
      raise ParameterError('table shape %r does not match grid %r' %
                           (raw.shape, params.shape))
    if not np.all(np.isfinite(raw)):
      raise ParameterError('table entries must be finite')
    self.params = params
    self._raw = raw
    self.meta = meta

  def __getitem__(self, state):
    try:
      return float(self._raw[self.params.index(state)])
    except (DomainError, TypeError, ValueError):
      raise KeyError(state)

  def __iter__(self):
    return self.params.states()

  def __len__(self):
    return self._raw.size

  def __str__(self):
    return str(self._raw)

  def __getattr__(self, name):
    if name[:2] == name[-2:] == '__':
      raise AttributeError(name)
    meta = self.__dict__.get('meta')
    if meta is None or name not in meta:
      raise AttributeError(name)
    return meta[name]

  def __getstate__(self):
    return self.__dict__

  def __setstate__(self, d):
    self.__dict__.update(d)

  @property
  def array(self):
    return self._raw

  def rows(self):
    "Iterate over (i, y, d, value) sorted by (d, y, i)."
    for s, value in zip(self.params.states(), self._raw.ravel()):
      yield s.i, self.params.signal_level(s.k), s.d, float(value)
