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

"""Weight stores for executing a LayerGraph without training."""

import logging
import zlib

import numpy

from posescale import graph as graph_mod
from posescale.errors import GraphError
from posescale.tensor import DTYPE, Tensor

LOG = logging.getLogger(__name__)

INIT_LOW = -0.05
INIT_HIGH = 0.05


def weight_shapes(node):
    """Map parameter name -> array shape for one node."""
    out_ch = node.output_shape[1]
    in_ch = node.input_shapes[0][1] if node.input_shapes else 0
    if node.kind == graph_mod.CONV:
        k = node.attr('kernel')
        shapes = {'weight': (out_ch, in_ch // node.attr('groups'), k, k)}
    elif node.kind == graph_mod.DECONV:
        k = node.attr('kernel')
        shapes = {'weight': (in_ch, out_ch, k, k)}
    elif node.kind == graph_mod.DENSE:
        shapes = {'weight': (out_ch, in_ch, 1, 1)}
    elif node.kind == graph_mod.BATCHNORM:
        return dict((key, (out_ch,))
                    for key in ('mean', 'variance', 'gamma', 'beta'))
    else:
        return {}
    if node.attr('bias'):
        shapes['bias'] = (out_ch,)
    return shapes


class WeightStore(object):
    """Parameters for the weighted nodes of a graph, keyed by node name.

    Weight tensors are `Tensor` values; biases and batchnorm statistics are
    read-only float32 vectors.
    """

    def __init__(self, values=None):
        self._values = dict(values or {})

    def __contains__(self, name):
        return name in self._values

    def __len__(self):
        return len(self._values)

    def get(self, node_name):
        try:
            return self._values[node_name]
        except KeyError:
            raise GraphError("no weights in store", node_name)

    def put(self, node_name, params):
        self._values[node_name] = dict(params)

    def parameter_count(self):
        return sum(int(numpy.prod(_shape_of(v)))
                   for params in self._values.values()
                   for v in params.values())

    @classmethod
    def seeded(cls, graph, seed=0, low=INIT_LOW, high=INIT_HIGH):
        """Uniform [low, high] weights; batchnorm starts as the identity.

        Every node draws from its own stream derived from seed and its name,
        so a sub-graph receives exactly the weights the full graph would.
        """
        store = cls()
        for node in graph:
            shapes = weight_shapes(node)
            if not shapes:
                continue
            if node.kind == graph_mod.BATCHNORM:
                store.put(node.name, _identity_bn(shapes))
                continue
            rng = numpy.random.default_rng(
                [int(seed), zlib.crc32(node.name.encode('utf-8'))])
            params = {}
            for key in sorted(shapes):
                values = rng.uniform(low, high, size=shapes[key])
                params[key] = _freeze(values, key)
            store.put(node.name, params)
        LOG.debug("seeded %d weighted nodes with seed %d", len(store), seed)
        return store

    @classmethod
    def filled(cls, graph, value):
        """Every parameter equal to value, except variance which is 1."""
        store = cls()
        for node in graph:
            shapes = weight_shapes(node)
            params = {}
            for key, shape in shapes.items():
                fill = 1.0 if key == 'variance' else value
                params[key] = _freeze(numpy.full(shape, fill), key)
            if params:
                store.put(node.name, params)
        return store


def _shape_of(value):
    if isinstance(value, Tensor):
        return value.dims
    return value.shape


def _freeze(values, key):
    if key == 'weight':
        return Tensor(values)
    values = numpy.array(values, dtype=DTYPE)
    values.setflags(write=False)
    return values


def _identity_bn(shapes):
    channels = shapes['mean'][0]
    return {
        'mean': _freeze(numpy.zeros(channels), 'mean'),
        'variance': _freeze(numpy.ones(channels), 'variance'),
        'gamma': _freeze(numpy.ones(channels), 'gamma'),
        'beta': _freeze(numpy.zeros(channels), 'beta'),
    }
