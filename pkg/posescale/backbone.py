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

"""Compact EfficientNet backbone scaled below its baseline.

The baseline stage table is the canonical B0 one. Widths scale by the width
multiplier (rounded to a multiple of 8), repeats by the depth multiplier.
Four taps expose the last layer of each stride level (4, 8, 16, 32).
"""

import collections
import logging
import math

from posescale import graph as graph_mod
from posescale.errors import ConfigurationError
from posescale.tensor import RELU, SIGMOID, SWISH

LOG = logging.getLogger(__name__)

CHANNEL_DIVISOR = 8
SE_RATIO = 0.25
STEM_CHANNELS = 32
HEAD_CHANNELS = 1280
TAP_STRIDES = (4, 8, 16, 32)
DEPTH_ROUNDING = ('round', 'ceil')

# (expansion, kernel, out channels, repeats, stride) of the B0 stages.
B0_STAGES = (
    (1, 3, 16, 1, 1),
    (6, 3, 24, 2, 2),
    (6, 5, 40, 2, 2),
    (6, 3, 80, 3, 2),
    (6, 5, 112, 3, 1),
    (6, 5, 192, 4, 2),
    (6, 3, 320, 1, 1),
)
# indexes into B0_STAGES of the stage ending each stride level.
TAP_STAGES = (1, 2, 4, 6)


StageSpec = collections.namedtuple(
    'StageSpec', ['expansion', 'kernel', 'out_channels', 'repeats', 'stride',
                  'squeeze_excite'])

StemSpec = collections.namedtuple('StemSpec', ['out_channels', 'kernel',
                                               'stride'])

ClassifierSpec = collections.namedtuple(
    'ClassifierSpec', ['head_channels', 'class_count'])


class BackboneSpec(collections.namedtuple('BackboneSpec', [
        'coefficients', 'input_resolution', 'stem', 'stages', 'taps',
        'classifier', 'activation'])):
    """The shape of a compact backbone.

    :ivar taps: Indexes into stages of the four tapped stages, strides
        4, 8, 16 and 32.
    :ivar classifier: A `ClassifierSpec` or None.
    :ivar activation: 'swish' normally, 'relu' for lite builds.
    """

    __slots__ = ()

    @property
    def lite(self):
        return self.activation == RELU

    def emit(self, builder, src, prefix='backbone'):
        """Append the backbone to builder, reading the image from src.

        :return: (tap node names, classifier logits node name or None).
        """
        builder.module = 'backbone'
        out = builder.conv_bn(prefix + '.stem', src, self.stem.out_channels,
                              self.stem.kernel, stride=self.stem.stride,
                              act=self.activation)
        taps = []
        for index, stage in enumerate(self.stages):
            for block in range(stage.repeats):
                stride = stage.stride if block == 0 else 1
                out = _emit_mbconv(
                    builder, '%s.s%d.b%d' % (prefix, index + 1, block),
                    out, stage, stride, self.activation)
            if index in self.taps:
                taps.append(out)
            LOG.debug("backbone stage %d: %r", index + 1, builder.shape(out))
        logits = None
        if self.classifier is not None:
            head = builder.conv_bn(prefix + '.head', out,
                                   self.classifier.head_channels, 1,
                                   act=self.activation)
            pooled = builder.global_pool(prefix + '.pool', head)
            logits = builder.dense(prefix + '.classifier', pooled,
                                   self.classifier.class_count)
        return taps, logits


def _emit_mbconv(builder, prefix, src, stage, stride, act):
    """Mobile inverted bottleneck with optional squeeze-excite."""
    in_ch = builder.shape(src)[1]
    hidden = in_ch * stage.expansion
    out = src
    if stage.expansion != 1:
        out = builder.conv_bn(prefix + '.expand', out, hidden, 1, act=act)
    out = builder.conv_bn(prefix + '.depthwise', out, hidden, stage.kernel,
                          stride=stride, groups=hidden, act=act)
    if stage.squeeze_excite:
        squeezed = max(1, int(in_ch * SE_RATIO))
        pooled = builder.global_pool(prefix + '.se.pool', out)
        gate = builder.dense(prefix + '.se.reduce', pooled, squeezed)
        gate = builder.activation(prefix + '.se.' + act, gate, act)
        gate = builder.dense(prefix + '.se.expand', gate, hidden)
        gate = builder.activation(prefix + '.se.gate', gate, SIGMOID)
        out = builder.scale(prefix + '.se.scale', out, gate)
    out = builder.conv_bn(prefix + '.project', out, stage.out_channels, 1)
    if stride == 1 and in_ch == stage.out_channels:
        out = builder.add(prefix + '.skip', [out, src])
    return out


def round_channels(channels, multiplier=1.0, divisor=CHANNEL_DIVISOR):
    """Nearest multiple of divisor, at least divisor, within 90% of target."""
    scaled = channels * multiplier
    rounded = max(divisor, int(scaled + divisor / 2.0) // divisor * divisor)
    if rounded < 0.9 * scaled:
        rounded += divisor
    return rounded


def round_repeats(repeats, multiplier, rounding='round'):
    """Scale a repeat count by the depth multiplier, never below one."""
    scaled = repeats * multiplier
    if rounding == 'round':
        # half up, not Python's banker's rounding.
        result = int(math.floor(scaled + 0.5))
    elif rounding == 'ceil':
        result = int(math.ceil(scaled))
    else:
        raise ConfigurationError("depth rounding must be one of %r"
                                 % (DEPTH_ROUNDING,))
    return max(1, result)


def build_backbone(coeff, input_resolution, with_classifier=False,
                   class_count=1000, lite=False, depth_rounding='round'):
    """Scale the B0 stage table by coeff.

    :param coeff: `posescale.scaling.BackboneCoefficients`.
    :param lite: Drop squeeze-excite and use relu instead of swish.
    :raises ConfigurationError: input_resolution not divisible by 32.
    """
    if input_resolution < 32 or input_resolution % 32:
        raise ConfigurationError(
            "backbone downsamples by 32; input resolution %r is not a "
            "multiple of 32" % (input_resolution,))
    stages = tuple(
        StageSpec(expansion=e, kernel=k,
                  out_channels=round_channels(c, coeff.width_mult),
                  repeats=round_repeats(n, coeff.depth_mult, depth_rounding),
                  stride=s, squeeze_excite=not lite)
        for e, k, c, n, s in B0_STAGES)
    classifier = None
    if with_classifier:
        classifier = ClassifierSpec(
            head_channels=round_channels(HEAD_CHANNELS, coeff.width_mult),
            class_count=class_count)
    spec = BackboneSpec(
        coefficients=coeff,
        input_resolution=input_resolution,
        stem=StemSpec(round_channels(STEM_CHANNELS, coeff.width_mult), 3, 2),
        stages=stages,
        taps=TAP_STAGES,
        classifier=classifier,
        activation=RELU if lite else SWISH)
    LOG.debug("backbone phi=%s taps=%r repeats=%r", coeff.phi,
              backbone_tap_channels(spec), [s.repeats for s in stages])
    return spec


def backbone_tap_channels(spec):
    return tuple(spec.stages[i].out_channels for i in spec.taps)


def backbone_tap_sizes(spec):
    return tuple(spec.input_resolution // s for s in TAP_STRIDES)


def backbone_graph(spec, name=None):
    """Compile spec alone, taps and logits (if any) as outputs."""
    builder = graph_mod.GraphBuilder(graph_mod.LayerGraph(name))
    image = builder.input(
        'image', (1, 3, spec.input_resolution, spec.input_resolution))
    taps, logits = spec.emit(builder, image)
    for tap in taps:
        builder.graph.mark_output(tap)
    if logits is not None:
        builder.graph.mark_output(logits)
    return builder.graph
