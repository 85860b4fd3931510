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

"""The high-resolution body: parallel branches exchanging information.

Branch n (1..4) keeps width W_bn and spatial size R / 2**(n + 1) throughout.
Stage s (1..3) runs s + 1 branches; a new branch is fed from the matching
backbone tap through a transition. Each stage is followed by a fusion unit
in which every destination branch sums transformed copies of every source
branch:

- source above destination (higher resolution): chained stride-2 3x3 convs,
  one per octave;
- source below destination: 1x1 conv then nearest upsampling;
- same branch: identity.
"""

import collections
import logging

from posescale import engine
from posescale import graph as graph_mod
from posescale.errors import ConfigurationError, ShapeError
from posescale.tensor import RELU

LOG = logging.getLogger(__name__)

BRANCH_COUNT = 4
STAGE_COUNT = 3
RESIDUALS_PER_BLOCK = 2
BLOCK_LAYOUTS = {
    'triple3x3': (3, 3, 3),
    'bottleneck': (1, 3, 1),
}
DEFAULT_BLOCK_LAYOUT = 'triple3x3'

IDENTITY = 'identity'
DOWN = 'down'
UP = 'up'

BranchSpec = collections.namedtuple('BranchSpec', ['width', 'size'])
StageSpec = collections.namedtuple('StageSpec', ['branch_count', 'blocks'])
TransitionSpec = collections.namedtuple(
    'TransitionSpec', ['branch', 'in_channels', 'out_channels'])
FusionTransform = collections.namedtuple(
    'FusionTransform', ['source', 'destination', 'kind', 'steps'])


class BodySpec(collections.namedtuple('BodySpec', [
        'branches', 'stages', 'fusion_units', 'transitions',
        'block_layout'])):
    """The layout of the high-resolution body.

    :ivar fusion_units: One tuple of `FusionTransform` per stage, covering
        every (source, destination) pair of that stage's branches.
    :ivar transitions: One `TransitionSpec` per branch, adapting the backbone
        tap channels to the branch width.
    :ivar block_layout: Kernel sizes of the three convolutions of a
        residual block.
    """

    __slots__ = ()

    @property
    def widths(self):
        return tuple(b.width for b in self.branches)

    def output_shapes(self):
        return [(1, b.width, b.size, b.size) for b in self.branches]

    def emit(self, builder, taps, prefix='body'):
        """Append the body, reading backbone features from taps.

        :return: The four branch output node names.
        """
        builder.module = 'body'
        streams = []
        for stage_index, stage in enumerate(self.stages):
            while len(streams) < stage.branch_count:
                n = len(streams)
                transition = self.transitions[n]
                streams.append(builder.conv_bn(
                    '%s.transition%d' % (prefix, n + 1), taps[n],
                    transition.out_channels, 3, act=RELU))
            for n in range(stage.branch_count):
                for block in range(stage.blocks):
                    for residual in range(RESIDUALS_PER_BLOCK):
                        streams[n] = emit_residual(
                            builder, '%s.s%d.b%d.m%d.r%d' % (
                                prefix, stage_index + 1, n + 1, block,
                                residual),
                            streams[n], self.block_layout)
            last = stage_index == len(self.stages) - 1
            streams = self._emit_fusion(
                builder, '%s.s%d.fuse' % (prefix, stage_index + 1),
                streams, self.fusion_units[stage_index],
                out_prefix='%s.out' % prefix if last else None)
        return streams

    def _emit_fusion(self, builder, prefix, streams, transforms, out_prefix):
        widths = self.widths
        fused = []
        for dest in range(len(streams)):
            terms = []
            for t in transforms:
                if t.destination != dest:
                    continue
                name = '%s.%d_%d' % (prefix, t.source + 1, dest + 1)
                if t.kind == IDENTITY:
                    terms.append(streams[t.source])
                elif t.kind == UP:
                    out = builder.conv_bn(name, streams[t.source],
                                          widths[dest], 1)
                    terms.append(builder.upsample(name + '.up', out,
                                                  2 ** t.steps))
                else:
                    out = streams[t.source]
                    for step in range(t.steps):
                        final = step == t.steps - 1
                        out = builder.conv_bn(
                            '%s.down%d' % (name, step), out,
                            widths[dest] if final else widths[t.source], 3,
                            stride=2, act=None if final else RELU)
                    terms.append(out)
            out = builder.add('%s.%d.sum' % (prefix, dest + 1), terms)
            relu_name = ('%s%d' % (out_prefix, dest + 1) if out_prefix
                         else '%s.%d.relu' % (prefix, dest + 1))
            fused.append(builder.activation(relu_name, out, RELU))
        return fused


def emit_residual(builder, prefix, src, layout):
    """Convolutions with batchnorm, relu between them, and a skip."""
    width = builder.shape(src)[1]
    out = src
    for index, kernel in enumerate(layout):
        final = index == len(layout) - 1
        out = builder.conv_bn('%s.c%d' % (prefix, index), out, width,
                              kernel, act=None if final else RELU)
    out = builder.add(prefix + '.skip', [out, src])
    return builder.activation(prefix + '.relu', out, RELU)


def _fusion_unit(branch_count):
    transforms = []
    for dest in range(branch_count):
        for source in range(branch_count):
            if source == dest:
                kind = IDENTITY
            elif source < dest:
                kind = DOWN
            else:
                kind = UP
            transforms.append(FusionTransform(
                source=source, destination=dest, kind=kind,
                steps=abs(dest - source)))
    return tuple(transforms)


def build_body(config, tap_channels, block_layout=DEFAULT_BLOCK_LAYOUT):
    """Lay out the body for a `posescale.scaling.ScaleConfig`.

    :param tap_channels: Channels of the four backbone taps.
    :param block_layout: A key of BLOCK_LAYOUTS or a tuple of kernel sizes.
    :raises ConfigurationError: a branch resolution is not integral.
    """
    if len(tap_channels) != BRANCH_COUNT:
        raise ConfigurationError("need %d tap channel counts, got %r"
                                 % (BRANCH_COUNT, tap_channels))
    layout = BLOCK_LAYOUTS.get(block_layout, block_layout)
    if not layout or any(k < 1 or k % 2 == 0 for k in layout):
        raise ConfigurationError("bad residual block layout %r"
                                 % (block_layout,))
    branches = []
    for n in range(1, BRANCH_COUNT + 1):
        divisor = 2 ** (n + 1)
        if config.input_resolution % divisor:
            raise ConfigurationError(
                "branch %d resolution %d/%d is not integral"
                % (n, config.input_resolution, divisor))
        branches.append(BranchSpec(width=config.branch_widths[n - 1],
                                   size=config.input_resolution // divisor))
    stages = tuple(StageSpec(branch_count=s + 2,
                             blocks=config.stage_repeats[s])
                   for s in range(STAGE_COUNT))
    spec = BodySpec(
        branches=tuple(branches),
        stages=stages,
        fusion_units=tuple(_fusion_unit(s.branch_count) for s in stages),
        transitions=tuple(
            TransitionSpec(branch=n + 1, in_channels=tap_channels[n],
                           out_channels=config.branch_widths[n])
            for n in range(BRANCH_COUNT)),
        block_layout=tuple(layout))
    LOG.debug("body %s: branches %r blocks %r", config.name, branches,
              [s.blocks for s in stages])
    return spec


def body_graph(spec, tap_shapes, name=None):
    """Compile the body alone with inputs tap1..tap4."""
    builder = graph_mod.GraphBuilder(graph_mod.LayerGraph(name))
    taps = [builder.input('tap%d' % (n + 1), shape)
            for n, shape in enumerate(tap_shapes)]
    for out in spec.emit(builder, taps):
        builder.graph.mark_output(out)
    return builder.graph


def forward_body(spec, taps, weights):
    """Run the body on four backbone tap tensors.

    :param weights: A WeightStore keyed by body node names, e.g. one seeded
        from the full network graph.
    :return: The four branch tensors, branch n shaped
        (1, W_bn, R / 2**(n + 1), R / 2**(n + 1)).
    """
    taps = list(taps)
    if len(taps) != BRANCH_COUNT:
        raise ShapeError("expected %d taps, got %d"
                         % (BRANCH_COUNT, len(taps)), 'body.taps')
    for n, (tap, branch) in enumerate(zip(taps, spec.branches)):
        expected = (1, spec.transitions[n].in_channels, branch.size,
                    branch.size)
        if tuple(tap.dims) != expected:
            raise ShapeError("expected %r, got %r" % (expected, tap.dims),
                             'tap%d -> body.transition%d' % (n + 1, n + 1))
    graph = body_graph(spec, [t.dims for t in taps])
    feeds = dict(('tap%d' % (n + 1), t) for n, t in enumerate(taps))
    values = engine.execute(graph, weights, feeds)
    return [values[name] for name in graph.outputs]
