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
import testresources
import testtools

from posescale import analysis
from posescale import graph as graph_mod
from posescale import scaling
from posescale.errors import DomainError, GraphError
from posescale.tensor import RELU
from posescale.tests import resources


def test_suite():
    loader = testresources.TestLoader()
    return loader.loadTestsFromName(__name__)


def _small_graph():
    builder = graph_mod.GraphBuilder(graph_mod.LayerGraph('small'), 'head')
    x = builder.input('x', (1, 32, 8, 8))
    out = builder.conv('first', x, 34, 1, bias=True)
    out = builder.deconv('up', out, 4, 4, 2, 1)
    out = builder.batchnorm('bn', out)
    out = builder.activation('relu', out, RELU)
    builder.graph.mark_output(out)
    return builder.graph


def _report(phi, params, macs):
    return analysis.CostReport(
        model_name='H%d' % phi, phi=phi, input_resolution=512 + 32 * phi,
        params=params, macs=macs, flops_2x=2 * macs, minor_ops=0,
        per_module={})


class TestRecount(testtools.TestCase):

    def test_node_costs(self):
        graph = _small_graph()
        self.assertEqual((1122, 1088 * 64, 0),
                         tuple(analysis.recount(graph.node('first'))))
        self.assertEqual((34 * 4 * 16, 34 * 4 * 16 * 64, 0),
                         tuple(analysis.recount(graph.node('up'))))
        self.assertEqual((16, 0, 2 * 4 * 256),
                         tuple(analysis.recount(graph.node('bn'))))
        self.assertEqual((0, 0, 4 * 256),
                         tuple(analysis.recount(graph.node('relu'))))

    def test_count_costs(self):
        report = analysis.count_costs(_small_graph())
        self.assertEqual('small', report.model_name)
        self.assertEqual(8, report.input_resolution)
        self.assertEqual(1122 + 2176 + 16, report.params)
        self.assertEqual(1088 * 64 + 2176 * 64, report.macs)
        self.assertEqual(2 * report.macs, report.flops_2x)
        self.assertEqual(3 * 4 * 256, report.minor_ops)
        self.assertEqual(report.params, report.per_module['head'].params)
        self.assertEqual(0, report.per_module['body'].params)

    def test_annotation_disagrees(self):
        graph = _small_graph()
        tampered = graph_mod.LayerGraph('tampered')
        for node in graph:
            if node.name == 'up':
                node = node._replace(macs=node.macs + 1)
            tampered.add(node)
        e = self.assertRaises(GraphError, analysis.count_costs, tampered)
        self.assertEqual('up', e.node)

    def test_shape_contradiction(self):
        node = _small_graph().node('first')._replace(
            output_shape=(1, 34, 9, 9))
        self.assertRaises(GraphError, analysis.recount, node)

    def test_flops_convention(self):
        report = _report(0, 1, 5)
        self.assertEqual(5, report.flops(analysis.MACS))
        self.assertEqual(10, report.flops(analysis.FLOPS_2X))
        self.assertRaises(ValueError, report.flops, 'flops')


class TestNetworkCosts(testtools.TestCase):

    def test_head_params(self):
        report = analysis.network_costs(scaling.config_for_phi(0))
        # first head, deconv, its batchnorm, four refine convs and their
        # batchnorms, second head.
        self.assertEqual(1122 + 33792 + 128 + 36864 + 512 + 561,
                         report.per_module['head'].params)

    def test_modules_sum_to_totals(self):
        report = analysis.network_costs(scaling.config_for_phi(-3))
        self.assertEqual(report.params, sum(
            m.params for m in report.per_module.values()))
        self.assertEqual(report.macs, sum(
            m.macs for m in report.per_module.values()))
        self.assertEqual(list(analysis.MODULES), list(report.per_module))

    def test_doubling_resolution(self):
        config = scaling.config_for_phi(-4)
        small = analysis.network_costs(config.resized(192))
        large = analysis.network_costs(config.resized(384))
        self.assertEqual(small.params, large.params)
        for module in ('body', 'head'):
            self.assertEqual(4 * small.per_module[module].macs,
                             large.per_module[module].macs)
        self.assertGreater(large.macs, 3.9 * small.macs)

    def test_lite_backbone(self):
        config = scaling.config_for_phi(-4)
        full = analysis.network_costs(config)
        lite = analysis.network_costs(config, lite=True)
        self.assertLess(lite.per_module['backbone'].params,
                        full.per_module['backbone'].params)
        self.assertEqual(full.per_module['body'], lite.per_module['body'])


class TestScalingTable(resources.ResourcedTestCase):

    resources = [('table', resources.SCALING_TABLE)]

    def test_order_and_inputs(self):
        self.assertEqual([0, -1, -2, -3, -4], [r.phi for r in self.table])
        self.assertEqual([512, 480, 448, 416, 384],
                         [r.input_resolution for r in self.table])

    def test_decreasing(self):
        for larger, smaller in zip(self.table, self.table[1:]):
            self.assertLess(smaller.params, larger.params)
            self.assertLess(smaller.macs, larger.macs)
        self.assertLessEqual(self.table[-1].params / float(
            self.table[0].params), analysis.MAX_SMALLEST_TO_LARGEST)

    def test_within_published_bands(self):
        result = analysis.check_published(self.table)
        self.assertEqual([], result.breaches)
        self.assertEqual(analysis.MACS, result.convention)

    def test_doubled_convention_breaches(self):
        result = analysis.check_published(self.table, analysis.FLOPS_2X)
        self.assertFalse(result.passed)
        self.assertEqual(analysis.FLOPS_2X, result.convention)

    def test_format_table(self):
        text = analysis.format_table(self.table)
        lines = text.splitlines()
        self.assertEqual(6, len(lines))
        self.assertTrue(lines[0].startswith('model'))
        self.assertTrue(lines[1].startswith('H0 '))
        self.assertIn('%.2fM' % (self.table[0].params / 1e6), lines[1])

    def test_records(self):
        record = self.table[-1].to_record()
        self.assertEqual('H-4', record['model_name'])
        self.assertEqual(['backbone', 'body', 'head'],
                         list(record['per_module']))


class TestCheckPublished(testtools.TestCase):

    def _published(self, scale=1.0):
        return [_report(phi, int(cost.params), int(cost.flops * scale))
                for phi, cost in sorted(analysis.PUBLISHED_COSTS.items(),
                                        reverse=True)]

    def test_picks_convention(self):
        result = analysis.check_published(self._published())
        self.assertEqual(analysis.MACS, result.convention)
        result = analysis.check_published(self._published(0.5))
        self.assertEqual(analysis.FLOPS_2X, result.convention)
        self.assertTrue(result.passed)

    def test_params_breach(self):
        reports = self._published()
        reports[2] = reports[2]._replace(params=int(10.3e6 * 1.2))
        result = analysis.check_published(reports, analysis.MACS)
        self.assertEqual(1, len(result.breaches))
        self.assertIn('H-2 params', result.breaches[0])

    def test_ordering_breach(self):
        reports = self._published()
        reports[4] = reports[4]._replace(macs=reports[3].macs)
        result = analysis.check_published(reports, analysis.MACS,
                                          flops_tolerance=1.0)
        self.assertEqual(['macs not decreasing from H-3 to H-4'],
                         result.breaches)

    def test_ratio_breach(self):
        reports = self._published()
        reports[4] = reports[4]._replace(params=int(3.69e6))
        reports[0] = reports[0]._replace(params=int(18e6))
        result = analysis.check_published(reports, analysis.MACS,
                                          params_tolerance=1.0)
        self.assertEqual(1, len(result.breaches))
        self.assertIn('ratio', result.breaches[0])

    def test_logs_convention(self):
        logger = self.useFixture(fixtures.FakeLogger(level=20))
        analysis.check_published(self._published())
        self.assertIn('published check under macs: 0 breaches',
                      logger.output)


class TestBackboneTable(testtools.TestCase):

    def test_rows(self):
        rows = analysis.backbone_table()
        self.assertEqual([224, 195, 170, 145, 128],
                         [r.classification_resolution for r in rows])
        self.assertEqual((1, 2, 2, 3, 3, 4, 1), rows[0].repeats)
        self.assertEqual((1, 1, 1, 1, 1, 2, 1), rows[-1].repeats)
        for row in rows:
            self.assertLess(row.cifar_params, row.imagenet_params)

    def test_baseline_classifier(self):
        rows = analysis.backbone_table()
        published = analysis.PUBLISHED_BACKBONES[0]
        self.assertLess(abs(rows[0].imagenet_params -
                            published.imagenet_params),
                        analysis.PARAMS_TOLERANCE * published.imagenet_params)

    def test_smallest_with_hundred_classes(self):
        row = analysis.backbone_table()[-1]
        self.assertLess(abs(row.cifar_params - 1.3e6), 0.15 * 1.3e6)

    def test_ceil_rounding(self):
        rows = analysis.backbone_table(depth_rounding='ceil')
        self.assertEqual((1, 1, 1, 2, 2, 2, 1), rows[-1].repeats)


class TestAEScore(testtools.TestCase):

    def test_published_rows(self):
        for args, expected in [((64.8, 22.95, 15), 99.144),
                               ((35.7, 50.96, 15), 121.273),
                               ((59.2, 20.43, 15), 80.630),
                               ((44.8, 33.78, 15), 100.89),
                               ((42.8, 26, 45), 24.738)]:
            self.assertAlmostEqual(expected, analysis.ae_score(*args).ae,
                                   places=3)

    def test_efficiency_rounded(self):
        score = analysis.ae_score(64.8, 22.95, 15)
        self.assertEqual(1.53, score.efficiency)

    def test_unrounded(self):
        score = analysis.ae_score(67.1, 6.68, 15, efficiency_digits=None)
        self.assertAlmostEqual(67.1 * 6.68 / 15, score.ae)

    def test_two_stage_network_row(self):
        # published as 29.850; the rounded efficiency gives 29.860.
        score = analysis.ae_score(67.1, 6.68, 15)
        self.assertAlmostEqual(29.850, score.ae, delta=0.011)

    def test_zero_fps(self):
        self.assertEqual(0.0, analysis.ae_score(50.0, 0, 10).ae)

    def test_domain(self):
        self.assertRaises(DomainError, analysis.ae_score, 50.0, 10, 0)
        self.assertRaises(DomainError, analysis.ae_score, 50.0, 10, -1)
        self.assertRaises(DomainError, analysis.ae_score, -1.0, 10, 5)
