#  posescale: compound-scaled high-resolution pose networks, their costs and
#  their bottom-up decoding.
#
#  Copyright (c) 2020-2026 posescale contributors
#
#  Licensed under either the Apache License, Version 2.0 or the BSD 3-clause
#  license at the users choice. Copies of both licenses are available at
#  https://www.apache.org/licenses/LICENSE-2.0 and
#  https://opensource.org/licenses/BSD-3-Clause. You may not use this file
#  except in compliance with one of these two licences.
#
#  Unless required by applicable law or agreed to in writing, software
#  distributed under these licenses is distributed on an "AS IS" BASIS, WITHOUT
#  WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.  See the
#  license you chose for the specific language governing permissions and
#  limitations under that license.
#

"""Compound-scaled high-resolution pose networks.

posescale builds the EfficientHRNet family of bottom-up pose networks from a
single scaling coefficient, counts their parameters and operations, runs them
with numpy kernels and decodes their heatmaps and tags into persons.
"""

from pbr.version import VersionInfo
_version = VersionInfo('posescale')
__version__ = _version.semantic_version().version_tuple()
version = _version.release_string()


def test_suite():
    import posescale.tests
    return posescale.tests.test_suite()
