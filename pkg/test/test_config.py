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

"Test the flat run configuration parser."

import os

import pytest

from regdp import config
from regdp.errors import ParameterError


def test_load_reference(fixtures_dir):
  cfg = config.load_config(os.path.join(fixtures_dir, 'reference.cfg'))
  assert cfg.params.n == 100 and cfg.params.lam == 2
  assert cfg.params.n2 == 100
  assert cfg.settings['solver'] == 'avi'
  assert cfg.settings['tol'] == 1e-6
  assert cfg.settings['price_grid_size'] == 11
  assert cfg.source.endswith('reference.cfg')


def test_derived_key(fixtures_dir):
  with pytest.raises(ParameterError) as e:
    config.load_config(os.path.join(fixtures_dir, 'derived.cfg'))
  assert 'derived' in e.value.args[0]


def test_missing_file(tmp_path):
  with pytest.raises(ParameterError):
    config.load_config(tmp_path / 'missing.cfg')


BASE = ['n = 10', 'n_bar = 5', 'r = 2', 'lambda = 2', 'mu = 0.5']

INVALID_LINES = (
    (['colour = blue'], 'unknown key colour'),
    (['n = 12'], 'duplicate key n'),
    (['just a line'], 'expected key = value'),
    (['steps = 1.5'], 'invalid value for steps'),
    (['tol = small'], 'invalid value for tol'),
    (['n1 = 4'], 'n1 <= n_bar - r'),
)


@pytest.mark.parametrize('lines, message', INVALID_LINES)
def test_invalid_lines(lines, message):
  with pytest.raises(ParameterError) as e:
    config.from_lines(BASE + lines)
  assert message in e.value.args[0]


def test_missing_required():
  with pytest.raises(ParameterError) as e:
    config.from_lines(BASE[:3])
  assert 'lambda' in e.value.args[0] and 'mu' in e.value.args[0]


def test_comments_and_blanks():
  cfg = config.from_lines(['# header', ''] + BASE +
                          ['seed = 7  # trailing', 'out = /tmp/x'])
  assert cfg.settings['seed'] == 7
  assert cfg.settings['out'] == '/tmp/x'
  assert cfg.params.delta_y == 0.5


def test_override():
  cfg = config.from_lines(BASE)
  updated = config.override(cfg, tol=1e-3, seed=None)
  assert updated.settings['tol'] == 1e-3
  assert updated.settings['seed'] == 0
  assert cfg.settings['tol'] == 1e-6
  with pytest.raises(ParameterError):
    config.override(cfg, colour='blue')


@pytest.mark.parametrize('solver, keys', [
    ('cvi', ['max_iter', 'price_grid_size', 'tol']),
    ('avi', ['max_iter', 'tol']),
    ('adp', ['basis', 'eps_inner', 'k_max', 'k_min', 'max_outer', 'relax',
             'restart_every', 'seed', 'tau_outer']),
])
def test_solver_kwargs(solver, keys):
  cfg = config.override(config.from_lines(BASE), solver=solver)
  assert sorted(config.solver_kwargs(cfg)) == keys


def test_unknown_solver():
  cfg = config.from_lines(BASE + ['solver = exhaustive'])
  with pytest.raises(ParameterError):
    config.solver_kwargs(cfg)


def test_build_thermal():
  cfg = config.from_lines(BASE + ['c_rate = 4', 't_out = 30'])
  thermal = config.build_thermal(cfg)
  assert thermal.c_rate == 4
  assert thermal.t_out == 30
  assert thermal.tc_heat > 0
