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

"""Shared, expensive test artefacts.

Compiling a network, seeding its weights and running it take seconds, so
tests declare them as testresources and an OptimisingTestSuite builds each
once for every test that needs it.
"""

import numpy
import testresources
import testtools

from posescale import analysis
from posescale import network as network_mod
from posescale import scaling
from posescale.tensor import Tensor
from posescale.weights import WeightStore


class CompiledModel(object):
    """A network spec and its LayerGraph."""

    def __init__(self, config, network, graph):
        self.config = config
        self.network = network
        self.graph = graph


class CompiledModelResource(testresources.TestResourceManager):
    """Compile the network for phi, optionally at another input size."""

    setUpCost = 2

    def __init__(self, phi, resolution=None, **options):
        super(CompiledModelResource, self).__init__()
        self.phi = phi
        self.resolution = resolution
        self.options = options

    def make(self, dependency_resources):
        config = scaling.config_for_phi(self.phi)
        if self.resolution is not None:
            config = config.resized(self.resolution)
        network = network_mod.build_network(config, **self.options)
        return CompiledModel(config, network,
                             network_mod.compile_network(network))

    def __repr__(self):
        return "<CompiledModelResource phi=%d resolution=%r>" % (
            self.phi, self.resolution)


class ForwardRun(object):
    """A seeded forward pass: model, weights, image and outputs."""

    def __init__(self, weights, image, outputs):
        self.weights = weights
        self.image = image
        self.outputs = outputs


class ForwardRunResource(testresources.TestResourceManager):
    """Run a compiled model on a seeded uniform image with seeded weights."""

    setUpCost = 20

    def __init__(self, model_resource, seed=0):
        super(ForwardRunResource, self).__init__()
        self.resources = [('model', model_resource)]
        self.seed = seed

    def make(self, dependency_resources):
        model = dependency_resources['model']
        weights = WeightStore.seeded(model.graph, self.seed)
        rng = numpy.random.default_rng(self.seed)
        image = Tensor(rng.uniform(-1, 1, model.network.image_shape))
        outputs = network_mod.forward_network(
            model.network, image, weights, graph=model.graph)
        return ForwardRun(weights, image, outputs)


class ScalingTableResource(testresources.TestResourceManager):

    setUpCost = 5

    def make(self, dependency_resources):
        return analysis.scaling_table()


class ResourcedTestCase(testtools.TestCase):
    """testtools.TestCase with testresources support.

    :cvar resources: (attribute name, TestResourceManager) pairs.
    """

    resources = []

    def setUp(self):
        super(ResourcedTestCase, self).setUp()
        testresources.setUpResources(self, self.resources, None)
        self.addCleanup(testresources.tearDownResources, self,
                        self.resources, None)


# Full-size H-4, the smallest model, and reduced-size H-4 for quick runs.
H_MINUS_4 = CompiledModelResource(-4)
H_MINUS_4_FORWARD = ForwardRunResource(H_MINUS_4)
H_MINUS_3_FORWARD = ForwardRunResource(CompiledModelResource(-3))
H_MINUS_2_FORWARD = ForwardRunResource(CompiledModelResource(-2))
H_MINUS_4_SMALL = CompiledModelResource(-4, resolution=128)
H_MINUS_4_SMALL_FORWARD = ForwardRunResource(H_MINUS_4_SMALL)
H0 = CompiledModelResource(0)
SCALING_TABLE = ScalingTableResource()
