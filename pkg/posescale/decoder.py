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

"""Bottom-up decoding of heatmaps and tags into persons.

Peaks are local maxima of the refined heatmaps. Every peak reads its tag
from the tag maps at the same location and peaks are grouped greedily,
joint by joint, by nearest running mean tag.
"""

import collections
import logging

import numpy

from posescale import tensor
from posescale.errors import ConfigurationError, ShapeError
from posescale.head import JOINT_COUNT, split_first_head

LOG = logging.getLogger(__name__)

REFINE_OFFSET = 0.25


class DecodeParams(collections.namedtuple('DecodeParams', [
        'nms_window', 'top_k', 'detection_threshold', 'tag_threshold',
        'refine'])):
    """Decoding hyperparameters.

    :ivar nms_window: Odd side of the max-pool window used for peak NMS.
    :ivar top_k: Peaks kept per joint.
    :ivar detection_threshold: Minimum heatmap value of a peak, in [0, 1].
    :ivar tag_threshold: Largest L2 tag distance at which a peak joins an
        existing person.
    :ivar refine: Shift peaks a quarter cell toward the higher neighbour.
    """

    __slots__ = ()

    def __new__(cls, nms_window=5, top_k=30, detection_threshold=0.1,
                tag_threshold=1.0, refine=True):
        if nms_window < 1 or nms_window % 2 == 0:
            raise ConfigurationError("nms_window must be odd, got %r"
                                     % (nms_window,))
        if top_k < 1:
            raise ConfigurationError("top_k must be >= 1, got %r" % (top_k,))
        if not 0 <= detection_threshold <= 1:
            raise ConfigurationError(
                "detection_threshold must be in [0, 1], got %r"
                % (detection_threshold,))
        if tag_threshold < 0:
            raise ConfigurationError("tag_threshold must be >= 0, got %r"
                                     % (tag_threshold,))
        return super(DecodeParams, cls).__new__(
            cls, nms_window, top_k, detection_threshold, tag_threshold,
            bool(refine))


Peak = collections.namedtuple('Peak', ['joint_id', 'y', 'x', 'score'])

Keypoint = collections.namedtuple(
    'Keypoint', ['joint_id', 'x', 'y', 'score', 'tag'])


class Person(collections.namedtuple('Person', ['keypoints', 'score'])):
    """Keypoints ordered by joint id, at most one per joint."""

    __slots__ = ()

    def joint(self, joint_id):
        for keypoint in self.keypoints:
            if keypoint.joint_id == joint_id:
                return keypoint
        return None


class PoseSet(collections.namedtuple('PoseSet', ['persons'])):

    __slots__ = ()

    def __len__(self):
        return len(self.persons)

    def to_record(self):
        return collections.OrderedDict([
            ('version', 1),
            ('persons', [collections.OrderedDict([
                ('score', person.score),
                ('keypoints', [collections.OrderedDict([
                    ('joint_id', k.joint_id),
                    ('x', k.x),
                    ('y', k.y),
                    ('score', k.score),
                    ('tag', list(k.tag))]) for k in person.keypoints]),
            ]) for person in self.persons]),
        ])


def make_person(keypoints):
    keypoints = tuple(sorted(keypoints, key=lambda k: k.joint_id))
    score = (sum(k.score for k in keypoints) / len(keypoints)
             if keypoints else 0.0)
    return Person(keypoints=keypoints, score=score)


def extract_peaks(heatmaps, nms_window=5, top_k=30, threshold=0.1):
    """Local maxima of each joint's heatmap.

    A location is a peak when it equals the max over the surrounding window
    and is at least threshold.

    :param heatmaps: (1, J, H, W) tensor.
    :return: Per joint, a list of `Peak` sorted by descending score, ties
        by (row, column), at most top_k long.
    """
    if not 0 <= threshold <= 1:
        raise ConfigurationError("threshold must be in [0, 1], got %r"
                                 % (threshold,))
    values = heatmaps.array[0]
    pooled = tensor.maxpool_window(heatmaps, nms_window).array[0]
    result = []
    for joint in range(values.shape[0]):
        mask = (values[joint] == pooled[joint]) & (values[joint] >= threshold)
        ys, xs = numpy.nonzero(mask)
        scores = values[joint][ys, xs]
        # lexsort keys run last-major: score descending, then row, column.
        order = numpy.lexsort((xs, ys, -scores))[:top_k]
        result.append([Peak(joint, int(ys[i]), int(xs[i]), float(scores[i]))
                       for i in order])
    return result


def refine_peak(heatmap, y, x):
    """Quarter-cell offsets (dy, dx) toward the higher neighbour."""
    height, width = heatmap.shape
    dx = dy = 0.0
    if 0 < x < width - 1:
        dx = REFINE_OFFSET * numpy.sign(heatmap[y, x + 1] -
                                        heatmap[y, x - 1])
    if 0 < y < height - 1:
        dy = REFINE_OFFSET * numpy.sign(heatmap[y + 1, x] -
                                        heatmap[y - 1, x])
    return float(dy), float(dx)


def group_by_tags(keypoints, tag_threshold=1.0):
    """Greedy tag grouping.

    Joints are visited in id order and, within a joint, keypoints by
    descending score then (y, x). A keypoint joins the person lacking that
    joint whose running mean tag is nearest, when that distance is at most
    tag_threshold; otherwise it starts a new person.

    :param keypoints: Per joint, a sequence of `Keypoint`; all tags have the
        same length.
    :return: A `PoseSet`, persons in creation order.
    """
    members = []
    tag_sums = []
    joint_sets = []
    for joint_keypoints in keypoints:
        ordered = sorted(joint_keypoints,
                         key=lambda k: (-k.score, k.y, k.x))
        for keypoint in ordered:
            tag = numpy.asarray(keypoint.tag, dtype=numpy.float64)
            best = None
            best_distance = None
            for index, total in enumerate(tag_sums):
                if keypoint.joint_id in joint_sets[index]:
                    continue
                mean = total / len(members[index])
                distance = float(numpy.linalg.norm(tag - mean))
                if best_distance is None or distance < best_distance:
                    best, best_distance = index, distance
            if best is not None and best_distance <= tag_threshold:
                members[best].append(keypoint)
                tag_sums[best] = tag_sums[best] + tag
                joint_sets[best].add(keypoint.joint_id)
            else:
                members.append([keypoint])
                tag_sums.append(tag)
                joint_sets.append(set([keypoint.joint_id]))
    return PoseSet(persons=tuple(make_person(m) for m in members))


def aggregate_scales(heatmaps_per_scale, tags_per_scale, target_size):
    """Combine multi-scale predictions at target_size.

    Every map is resized with nearest neighbour; heatmaps are averaged and
    tags stacked, one tag dimension per scale.

    :return: (averaged heatmaps (1, J, T, T), tags (S, J, T, T)).
    """
    heatmaps_per_scale = list(heatmaps_per_scale)
    tags_per_scale = list(tags_per_scale)
    if not heatmaps_per_scale:
        raise ConfigurationError("aggregate_scales needs at least one scale")
    if len(heatmaps_per_scale) != len(tags_per_scale):
        raise ConfigurationError(
            "%d heatmap scales but %d tag scales"
            % (len(heatmaps_per_scale), len(tags_per_scale)))
    heatmaps = [tensor.resize_nearest(h, target_size, target_size).array
                for h in heatmaps_per_scale]
    tags = [tensor.resize_nearest(t, target_size, target_size).array
            for t in tags_per_scale]
    joints = set(a.shape[1] for a in heatmaps + tags)
    if len(joints) != 1:
        raise ShapeError("scales disagree on joint count: %r"
                         % (sorted(joints),), 'aggregate_scales')
    average = numpy.mean(numpy.stack(heatmaps), axis=0)
    return (tensor.Tensor._wrap(average),
            tensor.Tensor._wrap(numpy.concatenate(tags, axis=0)))


def _check_scale(first, refined, index):
    if first.dims[1] != 2 * JOINT_COUNT or refined.dims[1] != JOINT_COUNT:
        raise ShapeError("expected %d and %d channels, got %r and %r"
                         % (2 * JOINT_COUNT, JOINT_COUNT, first.dims,
                            refined.dims), 'scale %d' % index)
    if refined.dims[2:] != (2 * first.dims[2], 2 * first.dims[3]):
        raise ShapeError("refined heatmaps %r are not twice the size of "
                         "the first head %r" % (refined.dims, first.dims),
                         'scale %d' % index)


def decode_multiscale(first_outputs, refined_outputs, config, params=None):
    """Decode predictions made at several input scales.

    Maps are brought to config.heatmap_size; peaks come from the averaged
    heatmaps and carry one tag per scale.
    """
    params = params or DecodeParams()
    first_outputs = list(first_outputs)
    refined_outputs = list(refined_outputs)
    if len(first_outputs) != len(refined_outputs):
        raise ConfigurationError("%d first head outputs but %d refined"
                                 % (len(first_outputs),
                                    len(refined_outputs)))
    tag_maps = []
    for index, (first, refined) in enumerate(
            zip(first_outputs, refined_outputs)):
        _check_scale(first, refined, index)
        tag_maps.append(split_first_head(first)[1])
    heatmaps, tags = aggregate_scales(refined_outputs, tag_maps,
                                      config.heatmap_size)
    stride = config.input_resolution / float(config.heatmap_size)
    values = heatmaps.array[0]
    per_joint = []
    for joint_peaks in extract_peaks(heatmaps, params.nms_window,
                                     params.top_k,
                                     params.detection_threshold):
        keypoints = []
        for peak in joint_peaks:
            dy = dx = 0.0
            if params.refine:
                dy, dx = refine_peak(values[peak.joint_id], peak.y, peak.x)
            tag = tuple(float(v) for v in
                        tags.array[:, peak.joint_id, peak.y, peak.x])
            keypoints.append(_keypoint(peak, dy, dx, stride, tag))
        per_joint.append(keypoints)
    poses = group_by_tags(per_joint, params.tag_threshold)
    LOG.debug("decoded %d persons from %d scales", len(poses),
              len(first_outputs))
    return poses


def _keypoint(peak, dy, dx, stride, tag):
    return Keypoint(joint_id=peak.joint_id,
                    x=(peak.x + dx) * stride,
                    y=(peak.y + dy) * stride,
                    score=min(1.0, max(0.0, peak.score)),
                    tag=tag)


def decode(first_head_output, refined_heatmaps, config, params=None):
    """Decode one image's head outputs into persons.

    Peaks come from the refined half-resolution heatmaps; tags are read from
    the quarter-resolution tag channels at (y // 2, x // 2) and coordinates
    are scaled by 2 into input pixels.

    :raises ShapeError: outputs are not (1, 34, T, T) and (1, 17, 2T, 2T)
        for config.
    """
    expected_first = (1, 2 * JOINT_COUNT, config.tag_size, config.tag_size)
    expected_refined = (1, JOINT_COUNT, config.heatmap_size,
                        config.heatmap_size)
    if tuple(first_head_output.dims) != expected_first:
        raise ShapeError("expected %r, got %r"
                         % (expected_first, first_head_output.dims),
                         'head.first')
    if tuple(refined_heatmaps.dims) != expected_refined:
        raise ShapeError("expected %r, got %r"
                         % (expected_refined, refined_heatmaps.dims),
                         'head.second')
    # nearest resizing from T to 2T reads tag cell (y // 2, x // 2).
    return decode_multiscale([first_head_output], [refined_heatmaps],
                             config, params)
