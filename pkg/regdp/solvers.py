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
"""Value iteration and approximate dynamic programming solvers.

Conventional value iteration (CVI) minimizes the Bellman backup over a
discrete price grid. Assisted value iteration (AVI) replaces the search with
the closed-form threshold of the policy module. The approximate solver (ADP)
fits a quadratic value function by projected value iteration on simulated
trajectories, improving the greedy policy in an outer loop.
"""

import collections
import logging
import math
import time

import numpy as np

from regdp import mdp
from regdp import policy as pricing
from regdp.errors import ConvergenceError, DomainError, InsufficientDataError

_LOGGER = logging.getLogger('regdp')

REGULARIZATION = 1e-8

BASES = {
    'full': ('i2', 'i', 'y2', 'y', 'iy', '1'),
    'reduced': ('e2', 'e', '1'),
}

SolveReport = collections.namedtuple(
    'SolveReport',
    'solver value policy weights iterations seconds history converged settings')


class ValueTable(mdp.StateTable):
  "Dense cost-to-go table produced by a solver."


class WeightVector(
    collections.namedtuple('WeightVector', 'r center halfwidth basis')):
  """Parameters of the quadratic value function approximation.

  `r` holds the d = +1 block followed by the d = -1 block, each ordered as
  BASES[basis]. Active counts enter the features rescaled as
  (i - center) / halfwidth, which spans [-1, 1] over [n1, n2]; the reduced
  basis uses the rescaled tracking offset (i - n_bar - y r) / halfwidth.
  """
  __slots__ = ()

  @classmethod
  def create(cls, params, r=None, basis='full'):
    if basis not in BASES:
      raise DomainError('unknown basis %r' % basis)
    size = 2 * len(BASES[basis])
    r = np.zeros(size) if r is None else np.array(r, dtype=float)
    if r.shape != (size,) or not np.all(np.isfinite(r)):
      raise DomainError('expected %d finite weights, got %r' % (size, r))
    return cls(r, (params.n1 + params.n2) / 2, (params.n2 - params.n1) / 2,
               basis)

  def blocks(self):
    "Return the weights as a (2, block) array, d = +1 first."
    return self.r.reshape(2, -1)

  def raw_coefficients(self):
    """Undo the feature rescaling.

    Returns:
      A (2, block) array in the raw units of the active count. For the full
      basis each row holds the coefficients of i^2, i, y^2, y, i y and 1; for
      the reduced basis those of e^2, e and 1 with e the tracking offset.
    """
    m, w = self.center, self.halfwidth
    out = []
    for r in self.blocks():
      if self.basis == 'full':
        r1, r2, r3, r4, r5, r6 = r
        out.append((r1 / w**2, -2 * m * r1 / w**2 + r2 / w, r3,
                    r4 - m * r5 / w, r5 / w,
                    r1 * m**2 / w**2 - r2 * m / w + r6))
      else:
        r1, r2, r3 = r
        out.append((r1 / w**2, r2 / w, r3))
    return np.array(out)


def _feature_block(params, i, y, basis):
  center = (params.n1 + params.n2) / 2
  halfwidth = (params.n2 - params.n1) / 2
  i = np.asarray(i, dtype=float)
  y = np.asarray(y, dtype=float)
  ones = np.ones(np.broadcast(i, y).shape)
  if basis == 'full':
    x = (i - center) / halfwidth
    return np.stack(np.broadcast_arrays(x * x, x, y * y, y, x * y, ones),
                    axis=-1)
  if basis == 'reduced':
    e = (i - params.n_bar - y * params.r) / halfwidth
    return np.stack(np.broadcast_arrays(e * e, e, ones), axis=-1)
  raise DomainError('unknown basis %r' % basis)


def _features(params, i, y, d, basis):
  block = _feature_block(params, i, y, basis)
  up = (np.asarray(d) > 0)[..., None]
  return np.concatenate([np.where(up, block, 0.0),
                         np.where(up, 0.0, block)], axis=-1)


def feature_vector(params, s, basis='full'):
  """Features of a state for the quadratic approximation.

  The block of the state's direction carries the basis functions, the other
  block is zero.
  """
  params.check_state(s)
  return _features(params, s.i, params.signal_level(s.k), s.d, basis)


def feature_matrix(params, basis='full'):
  "Features of every grid state, one row per state in (d, y, i) order."
  d, y, i = np.meshgrid(mdp.DIRECTIONS, params.y_values, params.i_values,
                        indexing='ij')
  phi = _features(params, i, y, d, basis)
  return phi.reshape(-1, phi.shape[-1])


def approximate_values(params, weights):
  "Approximate cost-to-go over the grid."
  phi = feature_matrix(params, weights.basis)
  return (phi @ weights.r).reshape(params.shape)


def bellman_backup(params, table, s, u):
  """Cost of applying threshold u in state s, then following table.

  Args:
    params: model parameters.
    table: mapping from states to cost-to-go, usually a ValueTable.
    s: state.
    u: threshold.

  Returns:
    The period cost plus the discounted expected cost-to-go.
  """
  expected = sum(p * table[nxt]
                 for nxt, p in mdp.transitions(params, s, u).outcomes())
  return mdp.period_cost(params, s, u) + params.alpha * expected


def _snap(params, thresholds, prices):
  step = prices[1] - prices[0]
  index = np.clip(np.rint((thresholds - params.t_min) / step), 0,
                  len(prices) - 1).astype(int)
  return prices[index]


def _cvi_improve(params, prices):
  kernel = mdp.Kernel(params)
  share, mass = kernel.threshold_table(prices)
  # (y, price, i)
  arrival = kernel.arrival_base * share[:, :, None]
  utility = kernel.arrival_base * mass[:, :, None]
  blocked = kernel.arrival_base == 0

  def improve(values):
    stay, delta = kernel.split(values)
    gain = params.alpha * arrival[None] * delta[:, :, None, :] - utility[None]
    best = np.argmin(gain, axis=2)
    chosen = np.take_along_axis(gain, best[:, :, None, :], axis=2)[:, :, 0, :]
    thresholds = prices[best]
    if np.any(blocked):
      free = pricing.optimal_price_threshold(params, delta[..., blocked])
      thresholds[..., blocked] = _snap(params, free, prices)
    return kernel.penalty + params.alpha * stay + chosen, thresholds

  return improve


def _avi_improve(params):
  kernel = mdp.Kernel(params)

  def improve(values):
    stay, delta = kernel.split(values)
    thresholds = pricing.optimal_price_threshold(params, delta)
    updated = kernel.cost(thresholds) + params.alpha * (
        stay + kernel.arrival(thresholds) * delta)
    return updated, thresholds

  return improve


def _value_iteration(params, solver, improve, tol, max_iter, settings):
  if tol <= 0:
    raise DomainError('tolerance must be positive, got %r' % tol)
  if max_iter < 1:
    raise DomainError('max_iter must be at least 1, got %r' % max_iter)
  _LOGGER.info('%s: solving %s states', solver, 'x'.join(
      str(n) for n in params.shape))
  start = time.perf_counter()
  values = np.zeros(params.shape)
  history = []
  converged = False
  for sweep in range(1, int(max_iter) + 1):
    updated, _ = improve(values)
    change = float(np.max(np.abs(updated - values)))
    history.append(change)
    values = updated
    if sweep % 100 == 0:
      _LOGGER.debug('%s: sweep %d change %g', solver, sweep, change)
    if change < tol:
      converged = True
      break
  _, thresholds = improve(values)
  seconds = time.perf_counter() - start
  settings = dict(settings, tol=tol, max_iter=max_iter)
  meta = dict(solver=solver, iterations=len(history), change=history[-1],
              converged=converged, **settings)
  report = SolveReport(solver, ValueTable(params, values, **meta),
                       pricing.PolicyTable(params, thresholds, **meta), None,
                       len(history), seconds, tuple(history), converged,
                       settings)
  if not converged:
    raise ConvergenceError(
        '%s: no convergence in %d sweeps, last change %g > %g' %
        (solver, len(history), history[-1], tol), report)
  _LOGGER.info('%s: converged in %d sweeps, %.3fs', solver, len(history),
               seconds)
  return report


def cvi_solve(params, price_grid_size=11, tol=1e-6, max_iter=100000):
  """Conventional value iteration over a discrete price grid.

  Args:
    params: model parameters.
    price_grid_size: number of evenly spaced thresholds, at least 2.
    tol: sup-norm change under which sweeps stop.
    max_iter: sweep cap.

  Returns:
    A SolveReport with value and greedy policy tables.

  Raises:
    ConvergenceError: the cap was reached; `last_iterate` holds the report.
  """
  prices = pricing.price_grid(params, price_grid_size)
  settings = dict(price_grid_size=int(price_grid_size),
                  price_step=float(prices[1] - prices[0]))
  return _value_iteration(params, 'cvi', _cvi_improve(params, prices), tol,
                          max_iter, settings)


def avi_solve(params, tol=1e-6, max_iter=100000):
  """Assisted value iteration using the closed-form threshold in every state.

  Same arguments, stopping rule and errors as cvi_solve.
  """
  return _value_iteration(params, 'avi', _avi_improve(params), tol, max_iter,
                          {})


def greedy_thresholds(params, values):
  "Closed-form thresholds for the differences of a grid function."
  return pricing.optimal_price_threshold(params, mdp.forward_difference(values))


def greedy_policy_from_weights(params, weights, **meta):
  "Greedy policy of the approximate value function."
  values = approximate_values(params, weights)
  meta.setdefault('solver', 'adp')
  meta.setdefault('converged', True)
  return pricing.PolicyTable(params, greedy_thresholds(params, values), **meta)


def pvi_step(c_k, d_k, g_k, r_k, gamma_step=1.0):
  """One projected value iteration update, r - gamma G (C r - d).

  Accepts either a weight array or a WeightVector and returns the same type.
  """
  vector = r_k.r if isinstance(r_k, WeightVector) else np.asarray(r_k, float)
  updated = vector - gamma_step * np.asarray(g_k) @ (
      np.asarray(c_k) @ vector - np.asarray(d_k))
  if isinstance(r_k, WeightVector):
    return r_k._replace(r=updated)
  return updated


def moment_estimates(phi, phi_next, cost, alpha):
  """Sample averages behind the projected Bellman equation.

  Args:
    phi: features of visited states, one row per transition.
    phi_next: features of the successor states.
    cost: period cost of every transition.
    alpha: discount factor.

  Returns:
    (C, d, G) with C the average of phi (phi - alpha phi_next)', d the average
    of phi cost and G the inverse of the regularized second moment of phi.
  """
  phi = np.asarray(phi, dtype=float)
  phi_next = np.asarray(phi_next, dtype=float)
  cost = np.asarray(cost, dtype=float)
  count = len(phi)
  c_k = phi.T @ (phi - alpha * phi_next) / count
  d_k = phi.T @ cost / count
  moment = phi.T @ phi / count
  g_k = np.linalg.inv(moment + REGULARIZATION * np.eye(len(moment)))
  return c_k, d_k, g_k


def accumulate_estimates(params, trajectory, basis='full', alpha=None,
                         min_length=1):
  """Estimate (C, d, G) from a trajectory of (state, u, cost, next_state).

  Raises:
    InsufficientDataError: fewer than min_length transitions.
  """
  trajectory = list(trajectory)
  if not trajectory or len(trajectory) < min_length:
    raise InsufficientDataError(
        'trajectory has %d transitions, at least %d required' %
        (len(trajectory), max(min_length, 1)))
  phi = np.array([feature_vector(params, s, basis) for s, _, _, _ in
                  trajectory])
  phi_next = np.array([feature_vector(params, s, basis) for _, _, _, s in
                       trajectory])
  cost = [c for _, _, c, _ in trajectory]
  return moment_estimates(phi, phi_next, cost,
                          params.alpha if alpha is None else alpha)


def projected_bellman_matrices(params, policy, basis='full', weights=None,
                               costs=None):
  """Model-based matrices of the projected Bellman equation C r = d.

  Args:
    params: model parameters.
    policy: PolicyTable fixing the thresholds.
    basis: feature basis.
    weights: state weights, uniform when omitted.
    costs: grid of period costs, the policy's own costs when omitted.

  Returns:
    (C, d) with C = Phi' Xi (Phi - alpha P Phi) and d = Phi' Xi g.
  """
  kernel = mdp.Kernel(params)
  thresholds = policy.array
  phi = feature_matrix(params, basis)
  moved = np.stack([
      kernel.expect(phi[:, j].reshape(params.shape), thresholds).ravel()
      for j in range(phi.shape[1])
  ], axis=1)
  if weights is None:
    weights = np.full(len(phi), 1.0 / len(phi))
  else:
    weights = np.asarray(weights, dtype=float).ravel()
    weights = weights / weights.sum()
  if costs is None:
    costs = kernel.cost(thresholds)
  costs = np.asarray(costs, dtype=float).ravel()
  c_mat = phi.T @ (weights[:, None] * (phi - params.alpha * moved))
  d_vec = phi.T @ (weights * costs)
  return c_mat, d_vec


class _Chain(object):
  """Uniformized chain under fixed thresholds over flat state indices."""

  def __init__(self, params, thresholds):
    kernel = mdp.Kernel(params)
    bounds, targets = kernel.moves(thresholds)
    self.bounds = bounds.tolist()
    self.targets = targets.tolist()
    self.costs = kernel.cost(thresholds).ravel()
    self.size = bounds.shape[1]

  def run(self, state, uniforms):
    "Advance from flat state index; return (visited, successors, last)."
    first, second, third, fourth = self.bounds
    to_first, to_second, to_third, to_fourth = self.targets
    visited = []
    successors = []
    for x in uniforms:
      if x < first[state]:
        nxt = to_first[state]
      elif x < second[state]:
        nxt = to_second[state]
      elif x < third[state]:
        nxt = to_third[state]
      elif x < fourth[state]:
        nxt = to_fourth[state]
      else:
        nxt = state
      visited.append(state)
      successors.append(nxt)
      state = nxt
    return visited, successors, state


def sample_trajectory(params, policy, steps, seed, start=None):
  """Simulate the uniformized chain under a policy table.

  Args:
    params: model parameters.
    policy: PolicyTable.
    steps: number of transitions.
    seed: seed of the numpy Generator.
    start: initial State, uniformly random when omitted.

  Returns:
    A list of (state, u, cost, next_state) tuples.
  """
  chain = _Chain(params, policy.array)
  rng = np.random.default_rng(seed)
  if start is None:
    state = int(rng.integers(chain.size))
  else:
    state = int(np.ravel_multi_index(params.index(start), params.shape))
  visited, successors, _ = chain.run(state, rng.random(int(steps)).tolist())
  thresholds = policy.array.ravel()
  out = []
  for a, b in zip(visited, successors):
    out.append((params.state_at(np.unravel_index(a, params.shape)),
                float(thresholds[a]), float(chain.costs[a]),
                params.state_at(np.unravel_index(b, params.shape))))
  return out


def _lspe(params, chain, phi_all, r_start, rng, k_min, k_max, eps_inner,
          block, restart_every=None):
  """Inner loop: projected value iteration along simulated transitions.

  The chain starts from a uniformly random state and, when restart_every is
  set, jumps to a fresh uniformly random state after that many transitions.
  The jump itself is not a sample.

  Returns:
    (r, transitions used, final (C, d, G)).
  """
  dim = phi_all.shape[1]
  eye = np.eye(dim)
  sum_c = np.zeros((dim, dim))
  sum_d = np.zeros(dim)
  sum_m = np.zeros((dim, dim))
  count = 0
  since_restart = 0
  r = np.array(r_start, dtype=float)
  state = int(rng.integers(chain.size))
  while True:
    size = int(min(block, k_max - count))
    if restart_every:
      if since_restart >= restart_every:
        state = int(rng.integers(chain.size))
        since_restart = 0
      size = int(min(size, restart_every - since_restart))
    visited, successors, state = chain.run(state, rng.random(size).tolist())
    since_restart += size
    phi = phi_all[visited]
    phi_next = phi_all[successors]
    cost = chain.costs[visited]
    counts = np.arange(count + 1, count + size + 1, dtype=float)
    c_k = (sum_c + np.cumsum(
        phi[:, :, None] * (phi - params.alpha * phi_next)[:, None, :],
        axis=0)) / counts[:, None, None]
    d_k = (sum_d + np.cumsum(phi * cost[:, None], axis=0)) / counts[:, None]
    m_k = (sum_m + np.cumsum(phi[:, :, None] * phi[:, None, :],
                             axis=0)) / counts[:, None, None]
    g_k = np.linalg.inv(m_k + REGULARIZATION * eye)
    for j in range(size):
      step = g_k[j] @ (c_k[j] @ r - d_k[j])
      r = r - step
      k = count + j + 1
      if k >= k_min and math.sqrt(step @ step) < eps_inner:
        return r, k, (c_k[j], d_k[j], g_k[j])
      if k >= k_max:
        _LOGGER.warning('adp: inner loop stopped at the %d step cap', k_max)
        return r, k, (c_k[j], d_k[j], g_k[j])
    sum_c = c_k[-1] * counts[-1]
    sum_d = d_k[-1] * counts[-1]
    sum_m = m_k[-1] * counts[-1]
    count += size


def convex_weights(weights):
  """Clip the curvature weight of each direction block at zero.

  The first feature of every basis is the squared (rescaled) count or
  tracking offset, so a non-negative weight keeps the approximation convex
  in i for every (y, D).
  """
  blocks = weights.blocks().copy()
  if np.any(blocks[:, 0] < 0):
    _LOGGER.warning('adp: clipped negative curvature %s',
                    blocks[:, 0].tolist())
    blocks[:, 0] = np.maximum(blocks[:, 0], 0.0)
  return weights._replace(r=blocks.ravel())


def adp_solve(params, k_min=20000, eps_inner=1e-3, tau_outer=1.0, seed=0,
              k_max=None, max_outer=50, basis='full', relax=0.5,
              restart_every=1000, block=4096):
  """Approximate dynamic programming by projected value iteration.

  The outer loop fixes r_old and its greedy policy; the inner loop simulates
  the chain under that policy, updating (C_k, d_k, G_k, r_k) after every
  transition until k >= k_min and the last update is shorter than
  eps_inner. The fitted weights are clipped to a convex approximation and,
  after the first outer iteration, blended into r_old as
  r = r_old + relax (r_fit - r_old). The outer loop stops when the
  approximate value function moves less than tau_outer in sup-norm over the
  grid. Every outer iteration replays the same random stream, so a fixed
  policy is always evaluated on the same transitions.

  Args:
    params: model parameters.
    k_min: minimum number of transitions per inner loop.
    eps_inner: inner stopping threshold on the Euclidean step length.
    tau_outer: outer stopping threshold.
    seed: seed of the numpy Generator.
    k_max: inner transition cap, 10 * k_min when omitted.
    max_outer: outer iteration cap.
    basis: 'full' (12 weights) or 'reduced' (6 weights).
    relax: outer relaxation factor in (0, 1], 1 disables damping.
    restart_every: transitions between restarts of the simulated chain from
      a uniformly random state, None for a single trajectory.
    block: transitions simulated per vectorized batch.

  Returns:
    A SolveReport carrying weights, approximate values and greedy policy.

  Raises:
    ConvergenceError: the outer cap was reached.
  """
  if k_min < 1 or eps_inner <= 0 or tau_outer <= 0 or max_outer < 1:
    raise DomainError('adp tolerances and caps must be positive')
  if not 0 < relax <= 1:
    raise DomainError('relax must lie in (0, 1], got %r' % relax)
  if restart_every is not None and restart_every < 1:
    raise DomainError('restart_every must be positive, got %r' %
                      restart_every)
  k_max = int(k_max or 10 * k_min)
  if k_max < k_min:
    raise DomainError('k_max %d is below k_min %d' % (k_max, k_min))
  _LOGGER.info('adp: %s basis, k_min %d, relax %g, seed %d', basis, k_min,
               relax, seed)
  start = time.perf_counter()
  phi_all = feature_matrix(params, basis)
  weights = WeightVector.create(params, basis=basis)
  values = approximate_values(params, weights)
  history = []
  inner_steps = []
  converged = False
  for outer in range(1, int(max_outer) + 1):
    chain = _Chain(params, greedy_thresholds(params, values))
    rng = np.random.default_rng(seed)
    r, steps, _ = _lspe(params, chain, phi_all, weights.r, rng, k_min, k_max,
                        eps_inner, block, restart_every)
    fitted = convex_weights(weights._replace(r=r))
    if outer > 1:
      fitted = fitted._replace(r=weights.r + relax * (fitted.r - weights.r))
    weights = fitted
    updated = approximate_values(params, weights)
    change = float(np.max(np.abs(updated - values)))
    values = updated
    history.append(change)
    inner_steps.append(steps)
    _LOGGER.debug('adp: outer %d, %d transitions, change %g', outer, steps,
                  change)
    if change < tau_outer:
      converged = True
      break
  seconds = time.perf_counter() - start
  settings = dict(k_min=k_min, k_max=k_max, eps_inner=eps_inner,
                  tau_outer=tau_outer, max_outer=max_outer, seed=seed,
                  basis=basis, relax=relax, restart_every=restart_every,
                  inner_steps=tuple(inner_steps))
  meta = dict(solver='adp', iterations=len(history), change=history[-1],
              converged=converged, tol=tau_outer)
  report = SolveReport('adp', ValueTable(params, values, **meta),
                       greedy_policy_from_weights(params, weights, **meta),
                       weights, len(history), seconds, tuple(history),
                       converged, settings)
  if not converged:
    raise ConvergenceError(
        'adp: no convergence in %d outer iterations, last change %g > %g' %
        (len(history), history[-1], tau_outer), report)
  _LOGGER.info('adp: converged in %d outer iterations, %.3fs', len(history),
               seconds)
  return report


SOLVERS = {
    'cvi': cvi_solve,
    'avi': avi_solve,
    'adp': adp_solve,
}
