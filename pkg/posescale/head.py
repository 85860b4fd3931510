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

"""The heatmap prediction head, its training targets and its losses.

The first head predicts 17 heatmaps and 17 tag maps at a quarter of the
input resolution, heatmaps in channels 0..16 and tags in 17..33. Its output
is concatenated with the branch 1 features, doubled in resolution by a
transposed convolution, refined by two residual blocks and turned into 17
heatmaps at half the input resolution.
"""

import collections
import logging
import math

import numpy

from posescale import engine
from posescale import graph as graph_mod
from posescale.body import emit_residual
from posescale.errors import AnnotationError, DomainError, ShapeError
from posescale.tensor import RELU, Tensor, slice_channels

LOG = logging.getLogger(__name__)

JOINT_COUNT = 17
TAG_DIMENSIONS = 1
REFINE_BLOCKS = 2
REFINE_LAYOUT = (3, 3)
DEFAULT_SIGMA = 2.0
HEATMAP_LOSS_WEIGHT = 1.0
GROUPING_LOSS_WEIGHT = 1e-3

DeconvSpec = collections.namedtuple(
    'DeconvSpec', ['in_channels', 'out_channels', 'kernel', 'stride',
                   'padding'])


class HeadSpec(collections.namedtuple('HeadSpec', [
        'in_channels', 'tag_size', 'heatmap_size', 'joint_count',
        'deconv', 'refine_blocks'])):
    """Shape of the two-resolution prediction head.

    :ivar in_channels: Width of branch 1, W_b1.
    :ivar deconv: The `DeconvSpec` taking the concatenated first-head
        predictions and branch 1 features to half resolution.
    """

    __slots__ = ()

    @property
    def first_head_channels(self):
        return self.joint_count * (1 + TAG_DIMENSIONS)

    @property
    def first_head_shape(self):
        return (1, self.first_head_channels, self.tag_size, self.tag_size)

    @property
    def refined_shape(self):
        return (1, self.joint_count, self.heatmap_size, self.heatmap_size)

    def emit(self, builder, features, prefix='head'):
        """Append the head after features (branch 1).

        :return: (first head node name, refined heatmaps node name).
        """
        builder.module = 'head'
        first = builder.conv(prefix + '.first', features,
                             self.first_head_channels, 1, bias=True)
        out = builder.concat(prefix + '.concat', [first, features])
        out = builder.deconv(prefix + '.deconv.conv', out,
                             self.deconv.out_channels, self.deconv.kernel,
                             self.deconv.stride, self.deconv.padding)
        out = builder.batchnorm(prefix + '.deconv.bn', out)
        out = builder.activation(prefix + '.deconv.relu', out, RELU)
        for block in range(self.refine_blocks):
            out = emit_residual(builder, '%s.refine%d' % (prefix, block),
                                out, REFINE_LAYOUT)
        second = builder.conv(prefix + '.second', out, self.joint_count, 1,
                              bias=True)
        return first, second


def build_head(config):
    width = config.branch_widths[0]
    first_channels = JOINT_COUNT * (1 + TAG_DIMENSIONS)
    return HeadSpec(
        in_channels=width,
        tag_size=config.tag_size,
        heatmap_size=config.heatmap_size,
        joint_count=JOINT_COUNT,
        deconv=DeconvSpec(in_channels=first_channels + width,
                          out_channels=width, kernel=4, stride=2, padding=1),
        refine_blocks=REFINE_BLOCKS)


def head_graph(spec, name=None):
    """Compile the head alone with a 'features' input."""
    builder = graph_mod.GraphBuilder(graph_mod.LayerGraph(name))
    features = builder.input(
        'features', (1, spec.in_channels, spec.tag_size, spec.tag_size))
    first, second = spec.emit(builder, features)
    builder.graph.mark_output(first)
    builder.graph.mark_output(second)
    return builder.graph


def forward_head(spec, branch1_features, weights):
    """Run the head.

    :return: (first head output (1, 34, T, T), refined heatmaps
        (1, 17, 2T, 2T)).
    :raises ShapeError: branch1_features is not (1, W_b1, T, T).
    """
    expected = (1, spec.in_channels, spec.tag_size, spec.tag_size)
    if tuple(branch1_features.dims) != expected:
        raise ShapeError("expected %r, got %r"
                         % (expected, branch1_features.dims),
                         'features -> head.first')
    graph = head_graph(spec)
    values = engine.execute(graph, weights, {'features': branch1_features})
    first, second = graph.outputs
    return values[first], values[second]


def split_first_head(output, joint_count=JOINT_COUNT):
    """Split a first-head output into (heatmaps, tags)."""
    if output.dims[1] != joint_count * (1 + TAG_DIMENSIONS):
        raise ShapeError("first head output has %d channels, expected %d"
                         % (output.dims[1], joint_count * 2), 'head.first')
    return (slice_channels(output, 0, joint_count),
            slice_channels(output, joint_count, output.dims[1]))


class TrainingTargets(collections.namedtuple('TrainingTargets', [
        'gt_heatmaps_quarter', 'gt_heatmaps_half', 'keypoint_index_lists'])):
    """Supervision for one image.

    :ivar gt_heatmaps_quarter: (1, 17, R/4, R/4) Tensor.
    :ivar gt_heatmaps_half: (1, 17, R/2, R/2) Tensor.
    :ivar keypoint_index_lists: Per person, a tuple of (joint, flat index
        into a quarter-resolution map) for each annotated joint.
    """

    __slots__ = ()


def _cell(coordinate, stride, size):
    return min(size - 1, int(math.floor(coordinate / stride + 0.5)))


def _render(maps, joint, cx, cy, sigma):
    size = maps.shape[-1]
    axis = numpy.arange(size, dtype=numpy.float64)
    gx = numpy.exp(-(axis - cx) ** 2 / (2 * sigma * sigma))
    gy = numpy.exp(-(axis - cy) ** 2 / (2 * sigma * sigma))
    numpy.maximum(maps[joint], numpy.outer(gy, gx), out=maps[joint])


def make_targets(keypoints, config, sigma=DEFAULT_SIGMA):
    """Render ground truth heatmaps for every annotated keypoint.

    :param keypoints: Per person, 17 entries each None or (x, y) in input
        pixels.
    :param sigma: Gaussian std in quarter-resolution cells; the half
        resolution map uses twice this.
    :raises AnnotationError: a keypoint outside [0, R_input).
    """
    resolution = config.input_resolution
    quarter = numpy.zeros((JOINT_COUNT, config.tag_size, config.tag_size))
    half = numpy.zeros((JOINT_COUNT, config.heatmap_size,
                        config.heatmap_size))
    index_lists = []
    for person_index, person in enumerate(keypoints):
        if len(person) != JOINT_COUNT:
            raise AnnotationError("expected %d keypoints, got %d"
                                  % (JOINT_COUNT, len(person)),
                                  'persons[%d]' % person_index)
        indexes = []
        for joint, point in enumerate(person):
            if point is None:
                continue
            x, y = point
            if not (0 <= x < resolution and 0 <= y < resolution):
                raise AnnotationError(
                    "keypoint (%r, %r) outside [0, %d)" % (x, y, resolution),
                    'persons[%d].keypoints[%d]' % (person_index, joint))
            qx = _cell(x, 4.0, config.tag_size)
            qy = _cell(y, 4.0, config.tag_size)
            _render(quarter, joint, qx, qy, sigma)
            _render(half, joint, _cell(x, 2.0, config.heatmap_size),
                    _cell(y, 2.0, config.heatmap_size), 2 * sigma)
            indexes.append((joint, qy * config.tag_size + qx))
        index_lists.append(tuple(indexes))
    LOG.debug("rendered targets for %d persons", len(index_lists))
    return TrainingTargets(
        gt_heatmaps_quarter=Tensor(quarter[None]),
        gt_heatmaps_half=Tensor(half[None]),
        keypoint_index_lists=tuple(index_lists))


def _heatmap_channels(prediction):
    if prediction.dims[1] == JOINT_COUNT * (1 + TAG_DIMENSIONS):
        return split_first_head(prediction)[0]
    return prediction


def _mse(prediction, target, edge):
    if tuple(prediction.dims) != tuple(target.dims):
        raise ShapeError("prediction %r does not match target %r"
                         % (prediction.dims, target.dims), edge)
    diff = (prediction.array.astype(numpy.float64) -
            target.array.astype(numpy.float64))
    return float(numpy.mean(diff * diff))


def heatmap_loss(pred_quarter, pred_half, targets):
    """Sum of the per-resolution mean squared errors.

    :param pred_quarter: Quarter-resolution heatmaps; a whole first-head
        output is accepted and its heatmap channels used.
    """
    return (_mse(_heatmap_channels(pred_quarter),
                 targets.gt_heatmaps_quarter, 'head.first') +
            _mse(pred_half, targets.gt_heatmaps_half, 'head.second'))


def grouping_loss(tags, keypoint_index_lists):
    """Associative embedding pull and push terms.

    Pull is the mean over persons of the mean squared deviation of their
    keypoint tags from their mean tag. Push is the mean over person pairs of
    exp(-(mu_i - mu_j) ** 2 / 2), zero when there are fewer than two.

    :param tags: (1, 17, T, T) tag maps, or a whole first-head output.
    """
    if tags.dims[1] == JOINT_COUNT * (1 + TAG_DIMENSIONS):
        tags = split_first_head(tags)[1]
    if tags.dims[:2] != (1, JOINT_COUNT):
        raise ShapeError("tags must be (1, %d, T, T), got %r"
                         % (JOINT_COUNT, tags.dims), 'head.first')
    flat = tags.array.reshape(JOINT_COUNT, -1).astype(numpy.float64)
    means = []
    pulls = []
    for person in keypoint_index_lists:
        if not person:
            continue
        values = numpy.array([flat[joint, index] for joint, index in person])
        mean = values.mean()
        means.append(mean)
        pulls.append(numpy.mean((values - mean) ** 2))
    if not means:
        return 0.0
    pull = float(numpy.mean(pulls))
    means = numpy.array(means)
    if len(means) < 2:
        return pull
    first, second = numpy.triu_indices(len(means), k=1)
    push = float(numpy.mean(
        numpy.exp(-(means[first] - means[second]) ** 2 / 2)))
    return pull + push


def total_loss(heatmap_loss, grouping_loss):
    """1 * heatmap_loss + 0.001 * grouping_loss."""
    if heatmap_loss < 0 or grouping_loss < 0:
        raise DomainError("losses must be non-negative, got %r and %r"
                          % (heatmap_loss, grouping_loss))
    return (HEATMAP_LOSS_WEIGHT * heatmap_loss +
            GROUPING_LOSS_WEIGHT * grouping_loss)
