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

import os
import pytest

from regdp import mdp


def pytest_addoption(parser):
  parser.addoption('--runslow', action='store_true', default=False,
                   help='run slow tests')


def pytest_configure(config):
  config.addinivalue_line('markers', 'slow: long running numerical study')


def pytest_collection_modifyitems(config, items):
  if config.getoption('--runslow'):
    return
  skip_slow = pytest.mark.skip(reason='needs --runslow')
  for item in items:
    if 'slow' in item.keywords:
      item.add_marker(skip_slow)


@pytest.fixture(scope='session')
def fixtures_dir():
  return os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures')


@pytest.fixture(scope='session')
def reference():
  "Reference building: 100 appliances, contract 50, reserve 10."
  return mdp.ModelParams.create(n=100, n_bar=50, r=10, lam=2, mu=0.5)


@pytest.fixture(scope='session')
def small():
  "Small building solved in well under a second."
  return mdp.ModelParams.create(n=10, n_bar=5, r=2, lam=2, mu=0.5)
