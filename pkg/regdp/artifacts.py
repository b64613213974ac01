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
"""Artifact files: hashed CSV tables, run manifests and the solve cache.

Every CSV artifact starts with a `# params_hash=<hex>` line so consumers can
refuse files produced for other model parameters.
"""

import csv
import json
import logging
import pickle

from hashlib import sha1
from pathlib import Path

import numpy as np

from regdp import mdp
from regdp import policy as pricing
from regdp import simulator
from regdp import solvers
from regdp.errors import DomainError, IntegrityError, ParameterError

_LOGGER = logging.getLogger('regdp')

HASH_PREFIX = '# params_hash='

VALUE_HEADER = ('i', 'y', 'D', 'J')
POLICY_HEADER = ('i', 'y', 'D', 'u', 'pi')
WEIGHTS_HEADER = ('D', 'feature', 'weight')
TRACE_HEADER = ('t', 'y', 'D', 'i', 'e', 'u')
HISTOGRAM_HEADER = ('t', 'bucket_low', 'bucket_high', 'count')
SIGNAL_HEADER = ('t', 'y', 'D')
COMPARE_HEADER = ('size', 'solver', 'seconds', 'iterations',
                  'policy_gap_vs_avi')

# manifest entries converted back from text
_MANIFEST_TYPES = {
    'converged': lambda v: v == 'True',
    'iterations': int,
    'seed': int,
    'seconds': float,
    'tol': float,
    'change': float,
    'price_step': float,
    'price_grid_size': int,
    'max_iter': int,
    'relax': float,
    'restart_every': int,
}


def params_hash(params):
  "SHA-1 of the canonical JSON of the model fields."
  return sha1(
      json.dumps(params._asdict(), sort_keys=True,
                 default=str).encode('utf-8')).hexdigest()


def _check_hash(found, params, path):
  expected = params_hash(params)
  if found != expected:
    message = '%s: params hash %s does not match configuration %s' % (
        path, found, expected)
    _LOGGER.critical(message)
    raise IntegrityError(message, found)


def _write_csv(path, params, header, rows):
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  with path.open('w', newline='') as f:
    f.write('%s%s\n' % (HASH_PREFIX, params_hash(params)))
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(header)
    count = 0
    for row in rows:
      writer.writerow(row)
      count += 1
  _LOGGER.info('wrote %s (%d rows)', path, count)
  return path


def _read_csv(path, params, header):
  "Return the data rows of a hashed CSV after checking hash and header."
  found = None
  rows = []
  try:
    with open(path, newline='') as f:
      lines = f.readlines()
  except (IOError, OSError) as e:
    raise ParameterError('cannot read %s: %s' % (path, e.args[-1]))
  data = []
  for line in lines:
    if line.startswith(HASH_PREFIX):
      found = line[len(HASH_PREFIX):].strip()
    elif not line.startswith('#'):
      data.append(line)
  if found is None:
    message = '%s: missing params hash line' % path
    _LOGGER.critical(message)
    raise IntegrityError(message, None)
  _check_hash(found, params, path)
  reader = csv.reader(data)
  if tuple(next(reader, ())) != tuple(header):
    raise ParameterError('%s: expected header %s' % (path, ','.join(header)))
  for row in reader:
    if row:
      rows.append(row)
  return rows


def _grid_array(params, rows, column, path):
  "Fill a grid array from (i, y, D, ...) rows."
  raw = np.full(params.shape, np.nan)
  for row in rows:
    try:
      i, y, d = int(row[0]), float(row[1]), int(row[2])
      value = float(row[column])
    except (ValueError, IndexError):
      raise ParameterError('%s: malformed row %r' % (path, row))
    k = int(round(y / params.delta_y))
    try:
      raw[params.index(mdp.State(i, k, d))] = value
    except DomainError:
      raise ParameterError('%s: row outside the grid %r' % (path, row))
  if np.any(np.isnan(raw)):
    raise ParameterError('%s: %d grid states missing' %
                         (path, int(np.sum(np.isnan(raw)))))
  return raw


def write_value_csv(path, table):
  "Write a value table as i,y,D,J rows sorted by (D, y, i)."
  return _write_csv(path, table.params, VALUE_HEADER, table.rows())


def write_policy_csv(path, table):
  "Write a policy table as i,y,D,u,pi rows sorted by (D, y, i)."
  return _write_csv(path, table.params, POLICY_HEADER, table.rows())


def read_value_csv(path, params, **meta):
  """Load a value table written by write_value_csv.

  Raises:
    IntegrityError: the file was written for other parameters.
    ParameterError: unreadable or incomplete file.
  """
  rows = _read_csv(path, params, VALUE_HEADER)
  return solvers.ValueTable(params, _grid_array(params, rows, 3, path), **meta)


def read_policy_csv(path, params, **meta):
  "Load a policy table written by write_policy_csv; errors as read_value_csv."
  rows = _read_csv(path, params, POLICY_HEADER)
  return pricing.PolicyTable(params, _grid_array(params, rows, 3, path),
                             **meta)


def write_weights_csv(path, params, weights):
  "Write ADP weights as D,feature,weight rows."
  features = solvers.BASES[weights.basis]

  def rows():
    for d, block in zip((1, -1), weights.blocks()):
      for name, value in zip(features, block):
        yield d, name, float(value)

  return _write_csv(path, params, WEIGHTS_HEADER, rows())


def read_weights_csv(path, params, basis='full'):
  "Load ADP weights, scaling taken from the parameters."
  rows = _read_csv(path, params, WEIGHTS_HEADER)
  r = np.array([float(row[2]) for row in rows])
  return solvers.WeightVector.create(params, r, basis)


def write_weights_txt(path, weights):
  """Write ADP weights one per line, d = +1 block first, each in basis order.

  The full basis gives 12 lines, each the repr of a float.
  """
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  path.write_text(''.join('%r\n' % float(w) for w in weights.r))
  _LOGGER.info('wrote %s (%d weights)', path, len(weights.r))
  return path


def read_weights_txt(path, params, basis='full'):
  "Load weights written by write_weights_txt."
  try:
    with open(path) as f:
      lines = [line.strip() for line in f.readlines() if line.strip()]
  except (IOError, OSError) as e:
    raise ParameterError('cannot read %s: %s' % (path, e.args[-1]))
  try:
    r = np.array([float(line) for line in lines])
  except ValueError:
    raise ParameterError('%s: expected one real per line' % path)
  try:
    return solvers.WeightVector.create(params, r, basis)
  except DomainError as e:
    raise ParameterError('%s: %s' % (path, e.args[0]))


def write_trace_csv(path, params, trace):
  rows = zip(trace.t.tolist(), trace.y.tolist(), trace.d.tolist(),
             trace.i.tolist(), trace.e.tolist(), trace.u.tolist())
  return _write_csv(path, params, TRACE_HEADER, rows)


def write_histogram_csv(path, params, rows):
  return _write_csv(path, params, HISTOGRAM_HEADER, rows)


def write_signal_csv(path, params, signal):
  "Write a signal as t,y,D rows, t in units of the signal interval."
  rows = ((t * params.tau_y, y, d) for t, (y, d) in enumerate(
      zip(signal.y.tolist(), signal.d.tolist())))
  return _write_csv(path, params, SIGNAL_HEADER, rows)


def read_signal_csv(path, params):
  "Load a signal written by write_signal_csv."
  rows = _read_csv(path, params, SIGNAL_HEADER)
  y = np.array([float(row[1]) for row in rows])
  d = np.array([int(row[2]) for row in rows])
  k = np.rint(y / params.delta_y).astype(int)
  return simulator.RsrSignal(k * params.delta_y, k, d)


def write_compare_csv(path, params, rows):
  return _write_csv(path, params, COMPARE_HEADER, rows)


def manifest_entries(params, report, seed=None):
  "Flat key/value pairs describing a solve."
  entries = [
      ('params_hash', params_hash(params)),
      ('solver', report.solver),
      ('seed', seed),
      ('iterations', report.iterations),
      ('seconds', report.seconds),
      ('converged', report.converged),
      ('change', report.history[-1] if report.history else None),
  ]
  for key in sorted(report.settings):
    if key != 'inner_steps':
      entries.append((key, report.settings[key]))
  if report.solver == 'adp':
    entries.append(('tol', report.settings['tau_outer']))
  if report.weights is not None:
    entries.append(('center', report.weights.center))
    entries.append(('halfwidth', report.weights.halfwidth))
  return [(k, v) for k, v in entries if v is not None]


def write_manifest(path, entries):
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  with path.open('w') as f:
    for key, value in entries:
      f.write('%s = %s\n' % (key, value))
  _LOGGER.info('wrote %s', path)
  return path


def read_manifest(path):
  """Parse a manifest into a dictionary, typing the known entries."""
  entries = {}
  try:
    with open(path) as f:
      for line in f.readlines():
        key, sep, value = line.strip().partition(' = ')
        if sep:
          entries[key] = _MANIFEST_TYPES.get(key, str)(value)
  except (IOError, OSError) as e:
    raise ParameterError('cannot read manifest %s: %s' % (path, e.args[-1]))
  return entries


def check_manifest(entries, params, path):
  "Raise IntegrityError unless a manifest belongs to these parameters."
  if 'params_hash' not in entries:
    message = '%s: missing params_hash' % path
    _LOGGER.critical(message)
    raise IntegrityError(message, None)
  _check_hash(entries['params_hash'], params, path)


def write_report(path, params, text):
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  path.write_text('params_hash = %s\n%s' % (params_hash(params), text))
  _LOGGER.info('wrote %s', path)
  return path


def solve_cache_key(params, solver, kwargs):
  "Relative cache path of a solve: <params hash>/<solver>/<args hash>.pickle."
  digest = sha1(json.dumps(kwargs, sort_keys=True,
                           default=str).encode('utf-8')).hexdigest()
  return Path(params_hash(params)) / solver / (digest + '.pickle')


def cached_solve(params, solver, kwargs, cache_dir=None):
  """Run a solver, reusing a pickled SolveReport when one is cached.

  Args:
    params: model parameters.
    solver: key of solvers.SOLVERS.
    kwargs: solver keyword arguments.
    cache_dir: cache root, caching disabled when None.

  Returns:
    (report, hit) where hit tells whether the report came from the cache.
  """
  run = solvers.SOLVERS[solver]
  if cache_dir is None:
    return run(params, **kwargs), False
  cache_key = Path(cache_dir) / solve_cache_key(params, solver, kwargs)
  _LOGGER.debug('cache key: %s', cache_key)
  try:
    f = cache_key.open('rb')
  except OSError:
    _LOGGER.debug('could not read cache path')
  else:
    with f:
      _LOGGER.info('getting %s solve from cache', solver)
      return pickle.load(f), True
  report = run(params, **kwargs)
  cache_key.parent.mkdir(parents=True, exist_ok=True)
  try:
    f = cache_key.open('wb')
  except OSError:
    _LOGGER.error('cache could not write path %s', cache_key)
  else:
    with f:
      pickle.dump(report, f, pickle.HIGHEST_PROTOCOL)
    _LOGGER.info('wrote %s solve to cache', solver)
  return report, False
