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
"""Dynamic programming toolkit for regulation-service-reserve tracking.

A smart building operator broadcasts a price to a population of duty-cycle
cooling appliances so that their aggregate consumption follows the grid
operator's regulation signal. The package solves the resulting Markov decision
problem, verifies its structural properties and simulates the building.
"""

__version__ = '0.1.0'
