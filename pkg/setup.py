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

import setuptools

from regdp import __version__


with open("README.md", "r") as fh:
  long_description = fh.read()


setuptools.setup(
    name="regdp",
    version=__version__,
    description="Dynamic pricing of smart building loads for regulation "
    "service reserves",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=['regdp'],
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.20',
        'scipy>=1.7',
        'click>=8.0',
    ],
    entry_points={
        'console_scripts': ['regdp=regdp.cli:main'],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
    ],
)
