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
"""Flat key = value run configuration.

A configuration file holds one `key = value` pair per line; blank lines and
`#` comments are ignored. Model keys build a ModelParams, run keys select the
solver, its tolerances, seeds, outputs and optional thermal constants.
"""

import collections
import logging

from regdp import mdp
from regdp import simulator
from regdp.errors import ParameterError

_LOGGER = logging.getLogger('regdp')

RunConfig = collections.namedtuple('RunConfig', 'params settings source')

# config key to ModelParams.create argument
MODEL_KEYS = {
    'n': int,
    'n1': int,
    'n2': int,
    'n_bar': float,
    'r': float,
    'k': float,
    'lambda': float,
    'mu': float,
    'b': float,
    't_min': float,
    't_max': float,
    'alpha0': float,
    'alpha1': float,
    'delta_y': float,
    'tau_y': float,
    'tau_ratio': float,
    'r_disc': float,
}

DERIVED_KEYS = ('kappa', 'dt', 'alpha', 'gamma1_u', 'gamma2_u', 'gamma1_d',
                'gamma2_d')

RUN_DEFAULTS = collections.OrderedDict([
    ('solver', 'avi'),
    ('tol', 1e-6),
    ('max_iter', 100000),
    ('price_grid_size', 11),
    ('k_min', 20000),
    ('k_max', None),
    ('eps_inner', 1e-3),
    ('tau_outer', 1.0),
    ('max_outer', 50),
    ('relax', 0.5),
    ('restart_every', 1000),
    ('basis', 'full'),
    ('seed', 0),
    ('out', '.'),
    ('steps', 1000),
    ('snapshot_every', 0),
    ('episodes', 100),
    ('horizon', 1000),
    ('y_band', 0),
    ('t_out', None),
    ('tc_heat', None),
    ('c_rate', None),
    ('dt_sim', None),
    ('floor_margin', 0.0),
])

_RUN_TYPES = {
    'solver': str,
    'basis': str,
    'out': str,
    'max_iter': int,
    'price_grid_size': int,
    'k_min': int,
    'k_max': int,
    'max_outer': int,
    'restart_every': int,
    'seed': int,
    'steps': int,
    'snapshot_every': int,
    'episodes': int,
    'horizon': int,
    'y_band': int,
}


def _convert(key, value, kind):
  try:
    if kind is int:
      number = float(value)
      if number != int(number):
        raise ValueError(value)
      return int(number)
    return kind(value)
  except ValueError:
    raise ParameterError('invalid value for %s: %r' % (key, value))


def parse_lines(lines, source='<string>'):
  """Parse configuration lines into model and run dictionaries.

  Returns:
    (model, run) dictionaries keyed by config key, values converted.

  Raises:
    ParameterError: malformed line, unknown, duplicate or derived key.
  """
  model = {}
  run = {}
  for number, line in enumerate(lines, 1):
    line = line.split('#', 1)[0].strip()
    if not line:
      continue
    key, sep, value = line.partition('=')
    key, value = key.strip(), value.strip()
    if not sep or not key or not value:
      raise ParameterError('%s:%d: expected key = value' % (source, number))
    if key in DERIVED_KEYS:
      raise ParameterError('%s:%d: %s is derived, not configurable' %
                           (source, number, key))
    if key in model or key in run:
      raise ParameterError('%s:%d: duplicate key %s' % (source, number, key))
    if key in MODEL_KEYS:
      model[key] = _convert(key, value, MODEL_KEYS[key])
    elif key in RUN_DEFAULTS:
      run[key] = _convert(key, value, _RUN_TYPES.get(key, float))
    else:
      raise ParameterError('%s:%d: unknown key %s' % (source, number, key))
  return model, run


def build_params(model):
  "ModelParams from parsed model keys, filling the documented defaults."
  missing = [k for k in ('n', 'n_bar', 'r', 'lambda', 'mu') if k not in model]
  if missing:
    raise ParameterError('missing required keys: %s' % ', '.join(missing))
  kw = dict(model)
  kw['lam'] = kw.pop('lambda')
  return mdp.ModelParams.create(**kw)


def load_config(path):
  """Read and validate a configuration file.

  Args:
    path: file path.

  Returns:
    A RunConfig whose settings hold every run key, defaults filled in.

  Raises:
    ParameterError: unreadable file or invalid content.
  """
  try:
    with open(path) as f:
      lines = f.readlines()
  except (IOError, OSError) as e:
    raise ParameterError('cannot read config %s: %s' % (path, e.args[-1]))
  return from_lines(lines, str(path))


def from_lines(lines, source='<string>'):
  model, run = parse_lines(lines, source)
  settings = dict(RUN_DEFAULTS)
  settings.update(run)
  config = RunConfig(build_params(model), settings, source)
  _LOGGER.debug('config %s: %d model keys, %d run keys', source, len(model),
                len(run))
  return config


def override(config, **flags):
  "Return a copy with run keys replaced by the flags that are not None."
  unknown = set(flags) - set(RUN_DEFAULTS)
  if unknown:
    raise ParameterError('unknown keys: %s' % ', '.join(sorted(unknown)))
  settings = dict(config.settings)
  settings.update((k, v) for k, v in flags.items() if v is not None)
  return config._replace(settings=settings)


def solver_kwargs(config):
  "Keyword arguments of the configured solver."
  s = config.settings
  solver = s['solver']
  if solver == 'cvi':
    return dict(price_grid_size=s['price_grid_size'], tol=s['tol'],
                max_iter=s['max_iter'])
  if solver == 'avi':
    return dict(tol=s['tol'], max_iter=s['max_iter'])
  if solver == 'adp':
    return dict(k_min=s['k_min'], k_max=s['k_max'], eps_inner=s['eps_inner'],
                tau_outer=s['tau_outer'], max_outer=s['max_outer'],
                relax=s['relax'], restart_every=s['restart_every'],
                seed=s['seed'], basis=s['basis'])
  raise ParameterError('unknown solver %r' % solver)


def build_thermal(config):
  """Thermal constants of a simulation run.

  Constants not set in the configuration come from calibrate_thermal.
  """
  s = config.settings
  calibrated = simulator.calibrate_thermal(
      config.params, t_out=s['t_out'], dt_sim=s['dt_sim'],
      floor_margin=s['floor_margin'])
  return simulator.thermal_params(
      config.params, calibrated.t_out,
      calibrated.tc_heat if s['tc_heat'] is None else s['tc_heat'],
      calibrated.c_rate if s['c_rate'] is None else s['c_rate'],
      calibrated.dt_sim, calibrated.floor_margin)
