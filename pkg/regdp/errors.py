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
"""Exception hierarchy shared by all regdp modules."""


class RegDPError(Exception):
  "Base class for all toolkit errors."

  @property
  def detail(self):
    return self.args[1] if len(self.args) > 1 else None


class DomainError(RegDPError, ValueError):
  "Argument outside its mathematical domain."


class ParameterError(RegDPError, ValueError):
  "Model or run configuration violates one of its constraints."


class ConvergenceError(RegDPError):
  "Iteration cap reached before the stopping test was met."

  @property
  def last_iterate(self):
    return self.detail


class InsufficientDataError(RegDPError):
  "Too few samples or transitions for a statistical estimate."


class IntegrityError(RegDPError):
  "Artifact was produced under different model parameters."


class VerificationError(RegDPError):
  "Verifier refused its input."
