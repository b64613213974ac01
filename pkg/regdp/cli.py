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
"""Command line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 convergence failure,
4 verification failure, 5 params hash mismatch.
"""

import concurrent.futures
import functools
import logging
import math
import os
import re

from pathlib import Path

import click
import numpy as np

from regdp import analysis
from regdp import artifacts
from regdp import config as configuration
from regdp import mdp
from regdp import simulator
from regdp.errors import (ConvergenceError, DomainError, InsufficientDataError,
                          IntegrityError, ParameterError, VerificationError)

_LOGGER = logging.getLogger('regdp')

EXIT_USAGE = 2
EXIT_CONVERGENCE = 3
EXIT_VERIFICATION = 4
EXIT_INTEGRITY = 5

_EXIT_CODES = (
    (IntegrityError, EXIT_INTEGRITY),
    (VerificationError, EXIT_VERIFICATION),
    (ConvergenceError, EXIT_CONVERGENCE),
    (ParameterError, EXIT_USAGE),
    (DomainError, EXIT_USAGE),
    (InsufficientDataError, EXIT_USAGE),
)

TABLE_SIZES = ('100x20x2', '500x40x2', '2000x40x2')


def _exit(code, message):
  click.echo('Error: %s' % message, err=True)
  raise SystemExit(code)


def _handle_errors(func):
  "Map library errors to exit codes."

  @functools.wraps(func)
  def wrapper(*args, **kwargs):
    try:
      return func(*args, **kwargs)
    except tuple(e for e, _ in _EXIT_CODES) as e:
      code = next(c for cls, c in _EXIT_CODES if isinstance(e, cls))
      _exit(code, e.args[0])

  return wrapper


def thread_limit(default=1):
  "Worker cap from REGDP_THREADS, default when unset or invalid."
  value = os.environ.get('REGDP_THREADS')
  try:
    limit = int(value) if value else default
  except ValueError:
    _LOGGER.warning('ignoring invalid REGDP_THREADS=%r', value)
    limit = default
  return max(limit, 1)


def _load(path, **flags):
  return configuration.override(configuration.load_config(path), **flags)


def _write_solve(out, config, report):
  params = config.params
  out = Path(out)
  artifacts.write_value_csv(out / 'value.csv', report.value)
  artifacts.write_policy_csv(out / 'policy.csv', report.policy)
  if report.weights is not None:
    artifacts.write_weights_txt(out / 'weights.txt', report.weights)
    artifacts.write_weights_csv(out / 'weights.csv', params, report.weights)
  artifacts.write_manifest(
      out / 'manifest.txt',
      artifacts.manifest_entries(params, report, config.settings['seed']))


@click.group()
@click.option('--verbose', '-v', count=True, help='Increase log verbosity.')
def main(verbose=0):
  "Price-based control of a building providing regulation reserves."
  level = max(logging.WARNING - 10 * verbose, logging.DEBUG)
  logging.basicConfig(level=level,
                      format='%(asctime)s %(levelname)s %(message)s')


@main.command()
@click.option('--config', 'config_path', required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='Configuration file.')
@click.option('--solver', type=click.Choice(['cvi', 'avi', 'adp']),
              help='Solver, overrides the configuration.')
@click.option('--out', help='Output directory.')
@click.option('--seed', type=int, help='Random seed.')
@click.option('--tol', type=float, help='Stopping tolerance.')
@click.option('--max-iters', 'max_iter', type=int, help='Iteration cap.')
@click.option('--cache-dir', type=click.Path(file_okay=False),
              help='Reuse and store solves under this directory.')
@_handle_errors
def solve(config_path, solver=None, out=None, seed=None, tol=None,
          max_iter=None, cache_dir=None):
  "Solve the pricing problem and write value, policy and manifest files."
  config = _load(config_path, solver=solver, out=out, seed=seed, tol=tol,
                 max_iter=max_iter)
  solver = config.settings['solver']
  if solver == 'adp' and tol is not None:
    config = configuration.override(config, tau_outer=tol)
  kwargs = configuration.solver_kwargs(config)
  try:
    report, hit = artifacts.cached_solve(config.params, solver, kwargs,
                                         cache_dir)
  except ConvergenceError as e:
    _write_solve(config.settings['out'], config, e.last_iterate)
    raise
  _write_solve(config.settings['out'], config, report)
  click.echo('%s: %s in %d iterations%s' %
             (solver, 'converged' if report.converged else 'not converged',
              report.iterations, ' (cached)' if hit else ''))


@main.command()
@click.option('--config', 'config_path', required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option('--value', 'value_csv', required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='Value CSV from solve.')
@click.option('--policy', 'policy_csv', required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='Policy CSV from solve.')
@click.option('--manifest', type=click.Path(dir_okay=False),
              help='Solve manifest, next to the value CSV by default.')
@click.option('--out', help='Report file, report.txt next to the value CSV '
              'by default.')
@click.option('--y-band', type=int, help='Signal levels excluded at each edge.')
@_handle_errors
def verify(config_path, value_csv, policy_csv, manifest=None, out=None,
           y_band=None):
  "Check the value bounds and policy monotonicity of solve artifacts."
  config = _load(config_path, y_band=y_band)
  params = config.params
  manifest = manifest or Path(value_csv).parent / 'manifest.txt'
  entries = artifacts.read_manifest(manifest)
  artifacts.check_manifest(entries, params, manifest)
  meta = {
      k: entries[k]
      for k in ('solver', 'tol', 'converged', 'price_step')
      if k in entries
  }
  value = artifacts.read_value_csv(value_csv, params, **meta)
  policy = artifacts.read_policy_csv(policy_csv, params, **meta)
  band = config.settings['y_band']
  reports = (
      analysis.verify_value_monotonicity(value,
                                         analysis.epsilon_bounds(params),
                                         y_band=band),
      analysis.verify_policy_monotonicity(policy, y_band=band),
  )
  text = ''.join(analysis.format_report(r) for r in reports)
  artifacts.write_report(out or Path(value_csv).parent / 'report.txt', params,
                         text)
  failed = [c for r in reports for c in r.checks if not c.skipped and
            not c.passed]
  if failed:
    _exit(
        EXIT_VERIFICATION, '; '.join(
            '%s failed at i=%d k=%d d=%d (margin %g)' %
            ((c.name,) + tuple(c.worst_state) + (c.margin,)) for c in failed))
  click.echo('all checks passed')


def parse_size(size):
  """Parse an N x Y [x 2] problem size into (N, signal steps per side).

  Y counts signal levels; the grid holds 2 (Y // 2) + 1 of them.
  """
  match = re.match(r'^\s*(\d+)\s*[xX]\s*(\d+)\s*(?:[xX]\s*2\s*)?$', size)
  if not match or int(match.group(2)) < 2:
    raise ParameterError('invalid size %r, expected NxY or NxYx2' % size)
  return int(match.group(1)), int(match.group(2)) // 2


def sized_params(params, size):
  "Rescale population, contract and reserve of params to a problem size."
  n, steps = parse_size(size)
  scale = n / params.n
  return mdp.ModelParams.create(
      n=n, n_bar=params.n_bar * scale, r=params.r * scale, lam=params.lam,
      mu=params.mu, k=params.k, b=params.b, t_min=params.t_min,
      t_max=params.t_max, alpha0=params.alpha0, alpha1=params.alpha1,
      delta_y=1.0 / steps, r_disc=params.r_disc)


def _compare_one(config, params, solver):
  kwargs = configuration.solver_kwargs(
      configuration.override(config, solver=solver))
  try:
    report, _ = artifacts.cached_solve(params, solver, kwargs)
  except ConvergenceError as e:
    _LOGGER.error('compare: %s', e.args[0])
    return e.last_iterate
  return report


@main.command()
@click.option('--config', 'config_path', required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option('--size', 'sizes', multiple=True,
              help='Problem size NxYx2, repeat for more sizes.')
@click.option('--out', help='Output directory.')
@_handle_errors
def compare(config_path, sizes=(), out=None):
  "Time the three solvers over problem sizes."
  config = _load(config_path, out=out)
  rows = []
  for size in sizes or TABLE_SIZES:
    params = sized_params(config.params, size)
    workers = thread_limit()
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
      futures = {
          s: pool.submit(_compare_one, config, params, s)
          for s in ('cvi', 'avi', 'adp')
      }
      reports = {s: f.result() for s, f in futures.items()}
    reference = reports['avi']
    for solver in ('cvi', 'avi', 'adp'):
      report = reports[solver]
      gap = math.nan
      if report.converged and reference.converged:
        gap = float(np.max(np.abs(report.policy.array -
                                  reference.policy.array)))
      rows.append((size, solver, report.seconds, report.iterations, gap))
      _LOGGER.info('compare: %s %s %.3fs', size, solver, report.seconds)
  path = artifacts.write_compare_csv(
      Path(config.settings['out']) / 'compare.csv', config.params, rows)
  click.echo('wrote %s' % path)


@main.command()
@click.option('--config', 'config_path', required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option('--steps', type=int, help='Number of signal intervals.')
@click.option('--seed', type=int, help='Random seed.')
@click.option('--out', help='Output directory.')
@_handle_errors
def signal(config_path, steps=None, seed=None, out=None):
  "Generate a synthetic regulation signal."
  config = _load(config_path, steps=steps, seed=seed, out=out)
  s = config.settings
  rsr = simulator.generate_rsr_signal(config.params, s['steps'], s['seed'])
  path = artifacts.write_signal_csv(
      Path(s['out']) / 'signal.csv', config.params, rsr)
  click.echo('wrote %s' % path)


@main.command()
@click.option('--config', 'config_path', required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option('--policy', 'policy_csv', required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='Policy CSV from solve.')
@click.option('--signal', 'signal_csv',
              type=click.Path(exists=True, dir_okay=False),
              help='Signal CSV, generated from the seed when omitted.')
@click.option('--steps', type=int, help='Number of signal intervals.')
@click.option('--seed', type=int, help='Random seed.')
@click.option('--snapshot-every', type=int,
              help='Simulation steps between histogram snapshots.')
@click.option('--out', help='Output directory.')
@_handle_errors
def simulate(config_path, policy_csv, signal_csv=None, steps=None, seed=None,
             snapshot_every=None, out=None):
  "Simulate the building under a policy and fit the idle histograms."
  config = _load(config_path, steps=steps, seed=seed,
                 snapshot_every=snapshot_every, out=out)
  params = config.params
  s = config.settings
  policy = artifacts.read_policy_csv(policy_csv, params)
  if signal_csv:
    rsr = artifacts.read_signal_csv(signal_csv, params)
  else:
    rsr = simulator.generate_rsr_signal(params, s['steps'], s['seed'])
  thermal = configuration.build_thermal(config)
  trace = simulator.simulate_building(params, thermal, policy, rsr, s['seed'],
                                      s['snapshot_every'])
  out = Path(s['out'])
  artifacts.write_trace_csv(out / 'trace.csv', params, trace)
  if trace.snapshots:
    floor = params.t_min - thermal.floor_margin
    artifacts.write_histogram_csv(
        out / 'histograms.csv', params,
        simulator.snapshot_histograms(trace, floor, thermal.t_out))
    pairs = [(y, t_hat) for y, t_hat, _ in simulator.elbow_by_signal(
        trace, params.t_min, params.t_max)]
    try:
      fit = simulator.regress_t_hat_on_y(pairs)
    except InsufficientDataError as e:
      _LOGGER.warning('simulate: no regression, %s', e.args[0])
    else:
      artifacts.write_report(
          out / 'regression.txt', params,
          ''.join('%s = %r\n' % kv for kv in fit._asdict().items()))
  rms = float(np.sqrt(np.mean(trace.e**2)))
  click.echo('simulated %d steps, rms tracking error %g' % (len(trace.t), rms))


@main.command()
@click.option('--config', 'config_path', required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option('--policy', 'policy_csv', required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option('--seed', type=int, help='Random seed.')
@_handle_errors
def evaluate(config_path, policy_csv, seed=None):
  "Estimate discounted cost, tracking error and utility of a policy."
  config = _load(config_path, seed=seed)
  s = config.settings
  policy = artifacts.read_policy_csv(policy_csv, config.params)
  result = simulator.evaluate_policy(config.params, policy, s['episodes'],
                                     s['horizon'], s['seed'])
  for key, value in result._asdict().items():
    click.echo('%s = %r' % (key, value))


if __name__ == '__main__':
  main()
