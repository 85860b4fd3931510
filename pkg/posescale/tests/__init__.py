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

"""Tests for posescale.

testresources is imported lazily: the oracles here also back the selftest
command, which must run without the test extras.
"""

import os


def test_suite():
    import testresources
    import posescale.tests.test_analysis
    import posescale.tests.test_backbone
    import posescale.tests.test_body
    import posescale.tests.test_cli
    import posescale.tests.test_decoder
    import posescale.tests.test_fixture_io
    import posescale.tests.test_graph
    import posescale.tests.test_head
    import posescale.tests.test_network
    import posescale.tests.test_scaling
    import posescale.tests.test_tensor
    result = testresources.OptimisingTestSuite()
    result.addTest(posescale.tests.test_tensor.test_suite())
    result.addTest(posescale.tests.test_graph.test_suite())
    result.addTest(posescale.tests.test_scaling.test_suite())
    result.addTest(posescale.tests.test_backbone.test_suite())
    result.addTest(posescale.tests.test_body.test_suite())
    result.addTest(posescale.tests.test_head.test_suite())
    result.addTest(posescale.tests.test_network.test_suite())
    result.addTest(posescale.tests.test_analysis.test_suite())
    result.addTest(posescale.tests.test_decoder.test_suite())
    result.addTest(posescale.tests.test_fixture_io.test_suite())
    result.addTest(posescale.tests.test_cli.test_suite())
    return result


def load_tests(loader, standard_tests, pattern):
    import testresources
    # compiled models are shared across modules, so discovery also runs
    # everything in one resource-ordered suite.
    this_dir = os.path.dirname(__file__)
    package_tests = loader.discover(start_dir=this_dir,
                                    pattern=pattern or 'test*.py')
    result = testresources.OptimisingTestSuite()
    result.addTest(standard_tests)
    result.addTest(package_tests)
    return result
