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

"""Executes a LayerGraph on Tensors with the kernels of posescale.tensor."""

import logging

from posescale import graph as graph_mod
from posescale import tensor
from posescale.errors import GraphError, ShapeError

LOG = logging.getLogger(__name__)


def _run_conv(node, args, params):
    return tensor.conv2d(
        args[0], params['weight'], params.get('bias'),
        stride=node.attr('stride'), padding=node.attr('padding'),
        groups=node.attr('groups'))


def _run_deconv(node, args, params):
    return tensor.conv2d_transposed(
        args[0], params['weight'], params.get('bias'),
        stride=node.attr('stride'), padding=node.attr('padding'))


def _run_batchnorm(node, args, params):
    return tensor.batchnorm_inference(
        args[0], params['mean'], params['variance'], params['gamma'],
        params['beta'], epsilon=node.attr('epsilon'))


def _run_activation(node, args, params):
    return tensor.activation(args[0], node.attr('kind'))


def _run_add(node, args, params):
    result = args[0]
    for other in args[1:]:
        result = tensor.elementwise_add(result, other)
    return result


def _run_concat(node, args, params):
    return tensor.concat_channels(args)


def _run_upsample(node, args, params):
    return tensor.upsample_nearest(args[0], node.attr('factor'))


def _run_global_pool(node, args, params):
    return tensor.global_avg_pool(args[0])


def _run_dense(node, args, params):
    return tensor.dense(args[0], params['weight'], params.get('bias'))


def _run_scale(node, args, params):
    return tensor.scale_channels(args[0], args[1])


_KERNELS = {
    graph_mod.CONV: _run_conv,
    graph_mod.DECONV: _run_deconv,
    graph_mod.BATCHNORM: _run_batchnorm,
    graph_mod.ACTIVATION: _run_activation,
    graph_mod.ADD: _run_add,
    graph_mod.CONCAT: _run_concat,
    graph_mod.UPSAMPLE: _run_upsample,
    graph_mod.GLOBAL_POOL: _run_global_pool,
    graph_mod.DENSE: _run_dense,
    graph_mod.SCALE: _run_scale,
}


def execute(graph, weights, feeds, outputs=None):
    """Run graph and return the requested output tensors.

    :param weights: A `posescale.weights.WeightStore` covering the weighted
        nodes that outputs depend on.
    :param feeds: Mapping of input node name -> Tensor.
    :param outputs: Node names to return; defaults to graph.outputs.
    :return: dict of output name -> Tensor.
    :raises ShapeError: a feed or an intermediate value has the wrong dims.
    """
    if outputs is None:
        outputs = list(graph.outputs)
    order = graph.needed(outputs)
    # release intermediates as soon as their last consumer has run.
    remaining = dict((name, 0) for name in order)
    for name in order:
        for producer in graph.node(name).inputs:
            remaining[producer] += 1
    keep = set(outputs)
    values = {}
    for name in order:
        node = graph.node(name)
        if node.kind == graph_mod.INPUT:
            if name not in feeds:
                raise GraphError("no value fed for input", name)
            value = feeds[name]
        else:
            args = [values[producer] for producer in node.inputs]
            params = weights.get(name) if node.kind in \
                graph_mod.WEIGHTED_KINDS else {}
            value = _KERNELS[node.kind](node, args, params)
            for producer in node.inputs:
                remaining[producer] -= 1
                if remaining[producer] == 0 and producer not in keep:
                    del values[producer]
        if tuple(value.dims) != node.output_shape:
            raise ShapeError("expected %r, got %r"
                             % (node.output_shape, value.dims), name)
        values[name] = value
        LOG.debug("ran %s %s -> %r", node.kind, name, value.dims)
    return dict((name, values[name]) for name in outputs)
