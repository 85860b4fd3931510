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

"""End-to-end networks: compact backbone, high-resolution body, head."""

import collections
import logging

from posescale import backbone as backbone_mod
from posescale import body as body_mod
from posescale import engine
from posescale import graph as graph_mod
from posescale import head as head_mod
from posescale.errors import ShapeError
from posescale.weights import WeightStore

LOG = logging.getLogger(__name__)

IMAGE = 'image'


class NetworkSpec(collections.namedtuple('NetworkSpec', [
        'config', 'backbone', 'body', 'head'])):

    __slots__ = ()

    @property
    def name(self):
        return self.config.name

    @property
    def image_shape(self):
        resolution = self.config.input_resolution
        return (1, 3, resolution, resolution)


NetworkOutputs = collections.namedtuple(
    'NetworkOutputs', ['first_head', 'refined_heatmaps', 'branches'])


def build_network(config, lite=False,
                  block_layout=body_mod.DEFAULT_BLOCK_LAYOUT,
                  depth_rounding='round'):
    """Lay out every part of the model for config.

    :param lite: relu backbone without squeeze-excite.
    :param block_layout: Residual block layout of the body.
    """
    backbone = backbone_mod.build_backbone(
        config.backbone, config.input_resolution, lite=lite,
        depth_rounding=depth_rounding)
    body = body_mod.build_body(
        config, backbone_mod.backbone_tap_channels(backbone),
        block_layout=block_layout)
    return NetworkSpec(config=config, backbone=backbone, body=body,
                       head=head_mod.build_head(config))


def compile_network(network):
    """Emit network into a LayerGraph.

    Outputs are the first head, the refined heatmaps and the four body
    branches, in that order.
    """
    builder = graph_mod.GraphBuilder(graph_mod.LayerGraph(network.name))
    image = builder.input(IMAGE, network.image_shape)
    taps, _ = network.backbone.emit(builder, image)
    branches = network.body.emit(builder, taps)
    first, second = network.head.emit(builder, branches[0])
    for name in [first, second] + list(branches):
        builder.graph.mark_output(name)
    graph = builder.graph.check()
    LOG.info("compiled %s: %d nodes, %d params", graph.name, len(graph),
             graph.params)
    return graph


def forward_network(network, image, weights=None, seed=0, graph=None):
    """Run the whole model on image.

    :param weights: A WeightStore; seeded from seed when omitted.
    :param graph: The compiled network, when the caller already has it.
    :return: `NetworkOutputs`.
    :raises ShapeError: image is not (1, 3, R, R) for this model.
    """
    if tuple(image.dims) != network.image_shape:
        raise ShapeError("%s expects input %r, got %r"
                         % (network.name, network.image_shape, image.dims),
                         IMAGE)
    if graph is None:
        graph = compile_network(network)
    if weights is None:
        weights = WeightStore.seeded(graph, seed)
    values = engine.execute(graph, weights, {IMAGE: image})
    first, second = graph.outputs[:2]
    branch_names = graph.outputs[2:]
    return NetworkOutputs(
        first_head=values[first],
        refined_heatmaps=values[second],
        branches=tuple(values[name] for name in branch_names))
