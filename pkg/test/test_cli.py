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

"Test the command line front end."

import os

import numpy as np
import pytest

from click.testing import CliRunner

from regdp import artifacts
from regdp import cli
from regdp import config as configuration
from regdp.errors import ParameterError


@pytest.fixture
def runner():
  return CliRunner()


@pytest.fixture
def small_cfg(fixtures_dir):
  return os.path.join(fixtures_dir, 'small.cfg')


@pytest.fixture
def solved(runner, small_cfg, tmp_path):
  out = tmp_path / 'avi'
  result = runner.invoke(
      cli.main, ['solve', '--config', small_cfg, '--out', str(out)])
  assert result.exit_code == 0, result.output
  return out


def test_solve(solved):
  for name in ('value.csv', 'policy.csv', 'manifest.txt'):
    assert (solved / name).exists()
  assert not (solved / 'weights.csv').exists()
  assert not (solved / 'weights.txt').exists()
  manifest = artifacts.read_manifest(solved / 'manifest.txt')
  assert manifest['solver'] == 'avi' and manifest['converged']


def test_solve_is_deterministic(runner, small_cfg, solved, tmp_path):
  out = tmp_path / 'again'
  result = runner.invoke(
      cli.main, ['solve', '--config', small_cfg, '--out', str(out)])
  assert result.exit_code == 0
  assert (out / 'policy.csv').read_bytes() == (solved /
                                               'policy.csv').read_bytes()


def test_solve_missing_config(runner, tmp_path):
  out = tmp_path / 'out'
  result = runner.invoke(cli.main, [
      'solve', '--config', str(tmp_path / 'missing.cfg'), '--out', str(out)
  ])
  assert result.exit_code == cli.EXIT_USAGE
  assert not out.exists()


def test_solve_invalid_config(runner, fixtures_dir, tmp_path):
  result = runner.invoke(cli.main, [
      'solve', '--config',
      os.path.join(fixtures_dir, 'derived.cfg'), '--out',
      str(tmp_path)
  ])
  assert result.exit_code == cli.EXIT_USAGE
  assert 'derived' in result.output


def test_solve_convergence_failure(runner, small_cfg, tmp_path):
  result = runner.invoke(cli.main, [
      'solve', '--config', small_cfg, '--out',
      str(tmp_path), '--max-iters', '2'
  ])
  assert result.exit_code == cli.EXIT_CONVERGENCE
  manifest = artifacts.read_manifest(tmp_path / 'manifest.txt')
  assert manifest['converged'] is False
  assert manifest['iterations'] == 2


def test_solve_cvi_and_cache(runner, small_cfg, tmp_path):
  args = [
      'solve', '--config', small_cfg, '--solver', 'cvi', '--out',
      str(tmp_path / 'out'), '--cache-dir',
      str(tmp_path / 'cache')
  ]
  assert runner.invoke(cli.main, args).exit_code == 0
  result = runner.invoke(cli.main, args)
  assert result.exit_code == 0
  assert '(cached)' in result.output
  manifest = artifacts.read_manifest(tmp_path / 'out' / 'manifest.txt')
  assert manifest['price_step'] == 1.0


def test_solve_adp(runner, small_cfg, tmp_path):
  result = runner.invoke(cli.main, [
      'solve', '--config', small_cfg, '--solver', 'adp', '--tol', '1e12',
      '--out',
      str(tmp_path)
  ])
  assert result.exit_code == 0, result.output
  lines = (tmp_path / 'weights.txt').read_text().splitlines()
  assert len(lines) == 12
  params = configuration.load_config(small_cfg).params
  from_csv = artifacts.read_weights_csv(tmp_path / 'weights.csv', params)
  np.testing.assert_array_equal([float(v) for v in lines], from_csv.r)
  manifest = artifacts.read_manifest(tmp_path / 'manifest.txt')
  assert manifest['basis'] == 'full'
  assert 'halfwidth' in manifest


def _corrupt(path, index, amount):
  lines = path.read_text().splitlines()
  fields = lines[index].split(',')
  fields[-1] = repr(float(fields[-1]) + amount)
  lines[index] = ','.join(fields)
  path.write_text('\n'.join(lines) + '\n')
  return fields[:3]


def test_verify_corrupted_value(runner, small_cfg, solved):
  # header lines come first, then rows in (D, y, i) order
  row = 2 + 55 + 2 * 11 + 5
  i, y, d = _corrupt(solved / 'value.csv', row, 10000.0)
  assert (i, y, d) == ('5', '0.0', '1')
  result = runner.invoke(cli.main, [
      'verify', '--config', small_cfg, '--value',
      str(solved / 'value.csv'), '--policy',
      str(solved / 'policy.csv')
  ])
  assert result.exit_code == cli.EXIT_VERIFICATION
  assert 'second_difference_in_i failed at i=5 k=0 d=1' in result.output
  assert (solved / 'report.txt').exists()


def test_verify_hash_mismatch(runner, fixtures_dir, solved):
  result = runner.invoke(cli.main, [
      'verify', '--config',
      os.path.join(fixtures_dir, 'reference.cfg'), '--value',
      str(solved / 'value.csv'), '--policy',
      str(solved / 'policy.csv')
  ])
  assert result.exit_code == cli.EXIT_INTEGRITY


def test_signal(runner, small_cfg, tmp_path):
  result = runner.invoke(cli.main, [
      'signal', '--config', small_cfg, '--steps', '40', '--seed', '3',
      '--out',
      str(tmp_path)
  ])
  assert result.exit_code == 0
  lines = (tmp_path / 'signal.csv').read_text().splitlines()
  assert lines[1] == 't,y,D'
  assert len(lines) == 2 + 40


def test_simulate_requires_policy(runner, small_cfg, tmp_path):
  result = runner.invoke(cli.main, [
      'simulate', '--config', small_cfg, '--out',
      str(tmp_path)
  ])
  assert result.exit_code == cli.EXIT_USAGE
  assert not (tmp_path / 'trace.csv').exists()


def test_simulate(runner, small_cfg, solved, tmp_path):
  runner.invoke(cli.main, [
      'signal', '--config', small_cfg, '--out',
      str(tmp_path)
  ])
  result = runner.invoke(cli.main, [
      'simulate', '--config', small_cfg, '--policy',
      str(solved / 'policy.csv'), '--signal',
      str(tmp_path / 'signal.csv'), '--out',
      str(tmp_path)
  ])
  assert result.exit_code == 0, result.output
  lines = (tmp_path / 'trace.csv').read_text().splitlines()
  assert lines[1] == 't,y,D,i,e,u'
  assert len(lines) == 2 + 50 * 10
  histograms = (tmp_path / 'histograms.csv').read_text().splitlines()
  assert histograms[1] == 't,bucket_low,bucket_high,count'


def test_evaluate(runner, small_cfg, solved):
  result = runner.invoke(cli.main, [
      'evaluate', '--config', small_cfg, '--policy',
      str(solved / 'policy.csv')
  ])
  assert result.exit_code == 0, result.output
  assert 'rms_error = ' in result.output


def test_compare(runner, small_cfg, tmp_path):
  config = tmp_path / 'compare.cfg'
  config.write_text(open(small_cfg).read() + 'max_outer = 1\n')
  result = runner.invoke(cli.main, [
      'compare', '--config',
      str(config), '--size', '10x4x2', '--size', '20x4', '--out',
      str(tmp_path)
  ])
  assert result.exit_code == 0, result.output
  lines = (tmp_path / 'compare.csv').read_text().splitlines()
  assert lines[1] == 'size,solver,seconds,iterations,policy_gap_vs_avi'
  rows = [line.split(',') for line in lines[2:]]
  assert [(r[0], r[1]) for r in rows] == [
      ('10x4x2', 'cvi'), ('10x4x2', 'avi'), ('10x4x2', 'adp'),
      ('20x4', 'cvi'), ('20x4', 'avi'), ('20x4', 'adp')
  ]
  assert all(float(r[4]) == 0 for r in rows if r[1] == 'avi')


@pytest.mark.parametrize('size, expected', [('100x20x2', (100, 10)),
                                            ('500 x 40', (500, 20)),
                                            ('2000X40X2', (2000, 20))])
def test_parse_size(size, expected):
  assert cli.parse_size(size) == expected


@pytest.mark.parametrize('size', ['100', '100x1', 'axb', '100x20x3'])
def test_parse_size_invalid(size):
  with pytest.raises(ParameterError):
    cli.parse_size(size)


def test_thread_limit(monkeypatch):
  monkeypatch.delenv('REGDP_THREADS', raising=False)
  assert cli.thread_limit() == 1
  monkeypatch.setenv('REGDP_THREADS', '4')
  assert cli.thread_limit() == 4
  monkeypatch.setenv('REGDP_THREADS', 'many')
  assert cli.thread_limit(2) == 2


@pytest.mark.slow
def test_reference_verify(runner, fixtures_dir, tmp_path):
  config = os.path.join(fixtures_dir, 'reference.cfg')
  result = runner.invoke(cli.main,
                         ['solve', '--config', config, '--out',
                          str(tmp_path)])
  assert result.exit_code == 0
  result = runner.invoke(cli.main, [
      'verify', '--config', config, '--value',
      str(tmp_path / 'value.csv'), '--policy',
      str(tmp_path / 'policy.csv'), '--y-band', '5'
  ])
  assert result.exit_code == 0, result.output
