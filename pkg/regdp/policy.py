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
"""Closed-form optimal pricing and policy tables.

An idle zone reconnects when its temperature is above the broadcast threshold
u, so the price pi = U(u) = b (u - t_min) selects the share of idle zones that
reconnect. Given the differential cost delta = J(i + 1) - J(i) the period
objective is maximized in closed form, independently of the preference elbow.
"""

import collections
import logging

import numpy as np

from regdp import mdp
from regdp.errors import DomainError

_LOGGER = logging.getLogger('regdp')

# partition labels
MIN_SATURATED = -1
INTERIOR = 0
MAX_SATURATED = 1

StatePartition = collections.namedtuple('StatePartition',
                                        'labels ordered counts')


class PolicyTable(mdp.StateTable):
  "Dense map from states to broadcast temperature thresholds."

  def __init__(self, params, raw, **meta):
    super(PolicyTable, self).__init__(params, raw, **meta)
    if (np.any(self._raw < params.t_min - 1e-9) or
        np.any(self._raw > params.t_max + 1e-9)):
      raise DomainError('policy thresholds outside [%g, %g]' %
                        (params.t_min, params.t_max))

  def prices(self):
    return price_of_threshold(self.params, self._raw)

  def rows(self):
    "Iterate over (i, y, d, u, pi) sorted by (d, y, i)."
    for i, y, d, u in super(PolicyTable, self).rows():
      yield i, y, d, u, price_of_threshold(self.params, u)


def objective_f(params, pdf, u, delta):
  """Per idle appliance objective of the threshold choice.

  Args:
    params: model parameters, for b and alpha.
    pdf: preference density in force.
    u: candidate threshold.
    delta: differential cost J(i + 1) - J(i).

  Returns:
    Expected utility above u minus the discounted cost of one more active
    appliance, both weighted by the share of idle zones above u.
  """
  utility = pdf.partial_utility(u, params.b)
  share = pdf.survival(u)
  return mdp.as_scalar(utility - params.alpha * share * np.asarray(delta))


def optimal_price_threshold(params, delta):
  """Return the threshold maximizing the objective for a differential cost.

  Saturates at t_max when alpha delta >= b (t_max - t_min) and at t_min when
  alpha delta <= 0; in between the threshold is t_min + alpha delta / b.
  Accepts scalars or arrays.
  """
  scaled = params.alpha * np.asarray(delta, dtype=float)
  with np.errstate(divide='ignore', invalid='ignore'):
    interior = params.t_min + scaled / params.b if params.b > 0 else scaled
  u = np.where(scaled >= params.b * params.span, params.t_max,
               np.where(scaled <= 0, params.t_min, interior))
  return mdp.as_scalar(u)


def phi(params, pdf, delta):
  "Maximum of the objective over thresholds."
  return objective_f(params, pdf, optimal_price_threshold(params, delta),
                     delta)


def price_of_threshold(params, u):
  "Reservation price of a zone at temperature u."
  u = mdp.check_support(u, params.t_min, params.t_max, 'threshold')
  return mdp.as_scalar(params.b * (u - params.t_min))


def threshold_of_price(params, price):
  "Inverse of price_of_threshold; requires b > 0."
  if params.b <= 0:
    raise DomainError('price does not identify a threshold when b = 0')
  price = np.asarray(price, dtype=float)
  limit = params.b * params.span
  if np.any(price < -mdp.EPS) or np.any(price > limit + mdp.EPS):
    raise DomainError('price outside [0, %g]: %r' % (limit, price.tolist()))
  return mdp.as_scalar(np.clip(params.t_min + price / params.b, params.t_min,
                             params.t_max))


def price_grid(params, size):
  "Evenly spaced thresholds from t_min to t_max."
  if size < 2:
    raise DomainError('price grid needs at least 2 points, got %r' % size)
  return np.linspace(params.t_min, params.t_max, int(size))


def state_partition(policy, tol=1e-9):
  """Label states as minimum saturated, interior or maximum saturated.

  Args:
    policy: a PolicyTable.
    tol: distance from a bound under which a threshold counts as saturated.

  Returns:
    A StatePartition with the label array, whether the labels are
    non-decreasing in i for every (d, y), and the count of each label.
  """
  params = policy.params
  u = policy.array
  labels = np.full(u.shape, INTERIOR, dtype=np.int8)
  labels[u <= params.t_min + tol] = MIN_SATURATED
  labels[u >= params.t_max - tol] = MAX_SATURATED
  ordered = bool(np.all(np.diff(labels, axis=-1) >= 0))
  counts = {
      label: int(np.sum(labels == label))
      for label in (MIN_SATURATED, INTERIOR, MAX_SATURATED)
  }
  return StatePartition(labels, ordered, counts)
