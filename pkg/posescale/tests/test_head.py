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

import math

import numpy
import testresources
import testtools

from posescale import head
from posescale import scaling
from posescale.errors import AnnotationError, DomainError, ShapeError
from posescale.tensor import Tensor
from posescale.weights import WeightStore


def test_suite():
    loader = testresources.TestLoader()
    return loader.loadTestsFromName(__name__)


def _small_config():
    return scaling.config_for_phi(-4).resized(128)


def _person(**joints):
    points = [None] * head.JOINT_COUNT
    for key, value in joints.items():
        points[int(key[1:])] = value
    return points


class TestBuildHead(testtools.TestCase):

    def test_baseline(self):
        spec = head.build_head(scaling.config_for_phi(0))
        self.assertEqual(34, spec.first_head_channels)
        self.assertEqual((1, 34, 128, 128), spec.first_head_shape)
        self.assertEqual((1, 17, 256, 256), spec.refined_shape)
        self.assertEqual(head.DeconvSpec(66, 32, 4, 2, 1), spec.deconv)

    def test_deconv_follows_branch_width(self):
        spec = head.build_head(scaling.config_for_phi(-1))
        self.assertEqual(60, spec.deconv.in_channels)
        self.assertEqual(26, spec.deconv.out_channels)

    def test_graph(self):
        graph = head.head_graph(head.build_head(scaling.config_for_phi(-2)))
        self.assertEqual(['head.first', 'head.second'], graph.outputs)
        self.assertEqual((1, 55, 112, 112),
                         graph.node('head.concat').output_shape)
        self.assertEqual((1, 21, 224, 224),
                         graph.node('head.deconv.relu').output_shape)
        self.assertIn('head.refine1.skip', graph)
        self.assertNotIn('head.refine2.skip', graph)


class TestForwardHead(testtools.TestCase):

    def setUp(self):
        super(TestForwardHead, self).setUp()
        self.spec = head.build_head(_small_config())
        self.graph = head.head_graph(self.spec)
        rng = numpy.random.default_rng(3)
        self.features = Tensor(rng.uniform(-1, 1, (1, 14, 32, 32)))

    def test_shapes(self):
        first, refined = head.forward_head(
            self.spec, self.features, WeightStore.seeded(self.graph))
        self.assertEqual((1, 34, 32, 32), first.dims)
        self.assertEqual((1, 17, 64, 64), refined.dims)
        heatmaps, tags = head.split_first_head(first)
        self.assertEqual((1, 17, 32, 32), heatmaps.dims)
        self.assertEqual((1, 17, 32, 32), tags.dims)

    def test_zero_weights(self):
        first, refined = head.forward_head(
            self.spec, self.features, WeightStore.filled(self.graph, 0.0))
        self.assertFalse(first.array.any())
        self.assertFalse(refined.array.any())

    def test_wrong_features(self):
        e = self.assertRaises(ShapeError, head.forward_head, self.spec,
                              Tensor.zeros((1, 14, 16, 16)), WeightStore())
        self.assertEqual('features -> head.first', e.edge)


class TestTargets(testtools.TestCase):

    def test_centre_peak(self):
        targets = head.make_targets([_person(j0=(64, 64))], _small_config())
        quarter = targets.gt_heatmaps_quarter.array
        half = targets.gt_heatmaps_half.array
        self.assertEqual(1.0, quarter[0, 0, 16, 16])
        self.assertEqual(1.0, half[0, 0, 32, 32])
        self.assertAlmostEqual(math.exp(-1.0 / 8), quarter[0, 0, 16, 17],
                               places=6)
        self.assertAlmostEqual(math.exp(-1.0 / 32), half[0, 0, 32, 33],
                               places=6)
        self.assertFalse(quarter[0, 1:].any())
        self.assertEqual((((0, 16 * 32 + 16),),),
                         targets.keypoint_index_lists)

    def test_no_people(self):
        targets = head.make_targets([], _small_config())
        self.assertFalse(targets.gt_heatmaps_quarter.array.any())
        self.assertEqual((), targets.keypoint_index_lists)

    def test_coincident_keypoints(self):
        targets = head.make_targets(
            [_person(j5=(40, 40)), _person(j5=(40, 40))], _small_config())
        self.assertEqual(1.0, targets.gt_heatmaps_quarter.array.max())

    def test_outside_image(self):
        e = self.assertRaises(AnnotationError, head.make_targets,
                              [_person(j0=(1, 1)), _person(j3=(128, 5))],
                              _small_config())
        self.assertEqual('persons[1].keypoints[3]', e.location)

    def test_wrong_joint_count(self):
        e = self.assertRaises(AnnotationError, head.make_targets,
                              [[(1, 1)]], _small_config())
        self.assertEqual('persons[0]', e.location)


class TestLosses(testtools.TestCase):

    def setUp(self):
        super(TestLosses, self).setUp()
        self.config = _small_config()
        self.targets = head.make_targets(
            [_person(j0=(20, 20), j1=(24, 28)),
             _person(j0=(90, 100), j2=(100, 90))], self.config)

    def test_perfect_heatmaps(self):
        self.assertEqual(0.0, head.heatmap_loss(
            self.targets.gt_heatmaps_quarter, self.targets.gt_heatmaps_half,
            self.targets))

    def test_offset_heatmaps(self):
        quarter = Tensor(self.targets.gt_heatmaps_quarter.array + 1)
        half = Tensor(self.targets.gt_heatmaps_half.array + 1)
        self.assertAlmostEqual(
            2.0, head.heatmap_loss(quarter, half, self.targets), places=6)

    def test_heatmap_shape_mismatch(self):
        self.assertRaises(ShapeError, head.heatmap_loss,
                          self.targets.gt_heatmaps_half,
                          self.targets.gt_heatmaps_half, self.targets)

    def test_identical_tags(self):
        # no pull, and both means coincide so push is exp(0).
        tags = Tensor.zeros((1, 17, 32, 32))
        self.assertEqual(1.0, head.grouping_loss(
            tags, self.targets.keypoint_index_lists))

    def test_shift_invariance(self):
        rng = numpy.random.default_rng(0)
        tags = rng.uniform(-2, 2, (1, 17, 32, 32))
        index_lists = self.targets.keypoint_index_lists
        self.assertAlmostEqual(
            head.grouping_loss(Tensor(tags), index_lists),
            head.grouping_loss(Tensor(tags + 5), index_lists), places=5)

    def test_first_head_output_accepted(self):
        first = Tensor.zeros((1, 34, 32, 32))
        self.assertEqual(1.0, head.grouping_loss(
            first, self.targets.keypoint_index_lists))

    def test_pull_only(self):
        tags = numpy.zeros((1, 17, 32, 32))
        tags[0, 1, 7, 6] = 2.0
        # person 0: tags 0 and 2, mean 1, squared deviations 1.
        self.assertAlmostEqual(
            1.0, head.grouping_loss(Tensor(tags), [((0, 5 * 32 + 5),
                                                    (1, 7 * 32 + 6))]))

    def test_no_people(self):
        self.assertEqual(0.0, head.grouping_loss(
            Tensor.zeros((1, 17, 32, 32)), []))

    def test_total(self):
        self.assertAlmostEqual(1.002, head.total_loss(1.0, 2.0))
        self.assertRaises(DomainError, head.total_loss, -1.0, 0.0)
