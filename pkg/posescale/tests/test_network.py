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

import fixtures
import numpy
import testresources
import testtools

from posescale import graph as graph_mod
from posescale import network
from posescale import scaling
from posescale.errors import ShapeError
from posescale.tensor import Tensor
from posescale.tests import resources


def test_suite():
    loader = testresources.TestLoader()
    return loader.loadTestsFromName(__name__)


def _expected_shapes(config):
    resolution = config.input_resolution
    quarter = resolution // 4
    shapes = [(1, 34, quarter, quarter),
              (1, 17, resolution // 2, resolution // 2)]
    for n, width in enumerate(config.branch_widths):
        side = resolution // 2 ** (n + 2)
        shapes.append((1, width, side, side))
    return shapes


class TestCompile(testtools.TestCase):

    def test_output_shapes_every_phi(self):
        for phi in range(-4, 1):
            config = scaling.config_for_phi(phi)
            graph = network.compile_network(network.build_network(config))
            self.assertEqual(
                _expected_shapes(config),
                [graph.node(name).output_shape for name in graph.outputs])

    def test_modules(self):
        config = scaling.config_for_phi(-3)
        graph = network.compile_network(network.build_network(config))
        modules = set(node.module for node in graph
                      if node.kind != graph_mod.INPUT)
        self.assertEqual(set(['backbone', 'body', 'head']), modules)
        self.assertEqual([network.IMAGE], [n.name for n in graph.inputs()])

    def test_single_component(self):
        config = scaling.config_for_phi(-4)
        graph = network.compile_network(network.build_network(config))
        self.assertEqual(1, len(graph.components()))

    def test_lite_is_smaller(self):
        config = scaling.config_for_phi(-4)
        full = network.compile_network(network.build_network(config))
        lite = network.compile_network(
            network.build_network(config, lite=True))
        self.assertLess(lite.params, full.params)
        self.assertEqual(full.outputs, lite.outputs)

    def test_logs_summary(self):
        logger = self.useFixture(fixtures.FakeLogger(level=20))
        network.compile_network(
            network.build_network(scaling.config_for_phi(-4)))
        self.assertIn('compiled H-4: ', logger.output)


class TestForwardSmallest(resources.ResourcedTestCase):

    resources = [('forward', resources.H_MINUS_4_FORWARD)]

    def test_shapes(self):
        outputs = self.forward.outputs
        self.assertEqual((1, 34, 96, 96), outputs.first_head.dims)
        self.assertEqual((1, 17, 192, 192), outputs.refined_heatmaps.dims)
        self.assertEqual([(1, 14, 96, 96), (1, 27, 48, 48), (1, 54, 24, 24),
                          (1, 107, 12, 12)],
                         [b.dims for b in outputs.branches])

    def test_finite(self):
        outputs = self.forward.outputs
        for tensor in (outputs.first_head, outputs.refined_heatmaps):
            self.assertTrue(numpy.isfinite(tensor.array).all())


class TestForwardFullSize(resources.ResourcedTestCase):

    resources = [('h3', resources.H_MINUS_3_FORWARD),
                 ('h2', resources.H_MINUS_2_FORWARD)]

    def _check_heads(self, phi, outputs):
        resolution = scaling.config_for_phi(phi).input_resolution
        quarter, half = resolution // 4, resolution // 2
        self.assertEqual((1, 34, quarter, quarter), outputs.first_head.dims)
        self.assertEqual((1, 17, half, half), outputs.refined_heatmaps.dims)
        self.assertTrue(numpy.isfinite(outputs.refined_heatmaps.array).all())

    def test_h_minus_3(self):
        self._check_heads(-3, self.h3.outputs)
        self.assertEqual((1, 34, 104, 104), self.h3.outputs.first_head.dims)

    def test_h_minus_2(self):
        self._check_heads(-2, self.h2.outputs)
        self.assertEqual((1, 17, 224, 224),
                         self.h2.outputs.refined_heatmaps.dims)


class TestForwardReduced(resources.ResourcedTestCase):

    resources = [('model', resources.H_MINUS_4_SMALL),
                 ('forward', resources.H_MINUS_4_SMALL_FORWARD)]

    def test_deterministic(self):
        outputs = network.forward_network(
            self.model.network, self.forward.image, seed=0,
            graph=self.model.graph)
        self.assertEqual(self.forward.outputs, outputs)

    def test_seed_changes_outputs(self):
        outputs = network.forward_network(
            self.model.network, self.forward.image, seed=1,
            graph=self.model.graph)
        self.assertNotEqual(self.forward.outputs.first_head,
                            outputs.first_head)

    def test_wrong_image(self):
        e = self.assertRaises(ShapeError, network.forward_network,
                              self.model.network, Tensor.zeros((1, 3, 96, 96)),
                              graph=self.model.graph)
        self.assertEqual(network.IMAGE, e.edge)
        self.assertIn('128', str(e))

    def test_larger_models_at_reduced_size(self):
        for phi in (0, -1):
            config = scaling.config_for_phi(phi).resized(64)
            spec = network.build_network(config)
            image = Tensor(numpy.random.default_rng(-phi).uniform(
                -1, 1, spec.image_shape))
            outputs = network.forward_network(spec, image)
            self.assertEqual((1, 34, 16, 16), outputs.first_head.dims)
            self.assertEqual((1, 17, 32, 32), outputs.refined_heatmaps.dims)
