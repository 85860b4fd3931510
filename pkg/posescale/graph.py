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

"""LayerGraph: the compiled form of a network.

A graph is an ordered collection of layer nodes. Each node records its kind,
the nodes it consumes, the shapes flowing in and out, its kernel geometry and
its own parameter and MAC annotations. Nodes are appended in a valid
execution order by `GraphBuilder`; every producer exists before its
consumers.

Costs annotated here are what the builder believes; `posescale.analysis`
recounts them independently from the geometry.
"""

import collections
import logging

from posescale.errors import GraphError, ShapeError
from posescale.tensor import ACTIVATIONS

LOG = logging.getLogger(__name__)

INPUT = 'input'
CONV = 'conv'
DECONV = 'deconv'
BATCHNORM = 'batchnorm'
ACTIVATION = 'activation'
ADD = 'add'
CONCAT = 'concat'
UPSAMPLE = 'upsample'
GLOBAL_POOL = 'global_pool'
DENSE = 'dense'
SCALE = 'scale'

# Kinds whose cost is counted per element rather than per weight.
ELEMENTWISE_KINDS = frozenset(
    [BATCHNORM, ACTIVATION, ADD, UPSAMPLE, GLOBAL_POOL, SCALE])
WEIGHTED_KINDS = frozenset([CONV, DECONV, BATCHNORM, DENSE])


def elements(shape):
    count = 1
    for dim in shape:
        count *= dim
    return count


class Node(collections.namedtuple('Node', [
        'name', 'kind', 'inputs', 'input_shapes', 'output_shape', 'attrs',
        'params', 'macs', 'minor_ops', 'module'])):
    """One layer of a LayerGraph.

    :ivar attrs: Kernel geometry and options as a sorted tuple of
        (key, value) pairs; use `attr` to read one.
    :ivar macs: Multiply-accumulates of the weighted computation.
    :ivar minor_ops: Elementwise operations (one per element, two per element
        for batchnorm) kept out of the headline MAC figure.
    :ivar module: 'backbone', 'body' or 'head'.
    """

    __slots__ = ()

    def attr(self, key, default=None):
        for name, value in self.attrs:
            if name == key:
                return value
        return default

    def to_record(self):
        return collections.OrderedDict([
            ('name', self.name),
            ('kind', self.kind),
            ('module', self.module),
            ('inputs', list(self.inputs)),
            ('input_shapes', [list(s) for s in self.input_shapes]),
            ('output_shape', list(self.output_shape)),
            ('attrs', collections.OrderedDict(self.attrs)),
            ('params', self.params),
            ('macs', self.macs),
            ('minor_ops', self.minor_ops),
        ])


class LayerGraph(object):
    """A directed acyclic graph of layer nodes.

    :ivar name: Model name, e.g. 'H-4'.
    :ivar outputs: Names of the nodes whose values the graph produces.
    """

    def __init__(self, name=None):
        self.name = name
        self._nodes = collections.OrderedDict()
        self.outputs = []

    def __len__(self):
        return len(self._nodes)

    def __iter__(self):
        return iter(self._nodes.values())

    def __contains__(self, name):
        return name in self._nodes

    def node(self, name):
        try:
            return self._nodes[name]
        except KeyError:
            raise GraphError("no such node", name)

    def add(self, node):
        """Append node; its producers must already be present."""
        if node.name in self._nodes:
            raise GraphError("duplicate node name", node.name)
        for producer, shape in zip(node.inputs, node.input_shapes):
            if producer not in self._nodes:
                raise GraphError("consumes unknown node %r" % (producer,),
                                 node.name)
            produced = self._nodes[producer].output_shape
            if produced != shape:
                raise ShapeError(
                    "producer shape %r does not match consumer input %r"
                    % (produced, shape), "%s -> %s" % (producer, node.name))
        self._nodes[node.name] = node
        return node

    def mark_output(self, name):
        self.node(name)
        if name not in self.outputs:
            self.outputs.append(name)

    def inputs(self):
        return [n for n in self if n.kind == INPUT]

    def edges(self):
        """(producer, consumer) name pairs in graph order."""
        for node in self:
            for producer in node.inputs:
                yield producer, node.name

    def consumers(self):
        """Map every node name to the names of the nodes consuming it."""
        result = collections.OrderedDict((name, []) for name in self._nodes)
        for producer, consumer in self.edges():
            result[producer].append(consumer)
        return result

    def needed(self, names):
        """Return the nodes needed to compute names, including themselves.

        :return: Node names in topological deepest-first order.
        """
        seen = set()
        result = []
        for name in names:
            # explicit stack; networks are too deep for recursion.
            stack = [(name, False)]
            while stack:
                current, expanded = stack.pop()
                if current in seen:
                    continue
                if expanded:
                    seen.add(current)
                    result.append(current)
                    continue
                stack.append((current, True))
                for producer in reversed(self.node(current).inputs):
                    if producer not in seen:
                        stack.append((producer, False))
        return result

    def subgraph(self, outputs, name=None):
        """A new graph holding only what outputs depend on."""
        keep = set(self.needed(outputs))
        result = LayerGraph(name or self.name)
        for node in self:
            if node.name in keep:
                result._nodes[node.name] = node
        for output in outputs:
            result.mark_output(output)
        return result

    def components(self):
        """Partition node names into weakly connected components."""
        adjacency = dict((name, set()) for name in self._nodes)
        for producer, consumer in self.edges():
            adjacency[producer].add(consumer)
            adjacency[consumer].add(producer)
        partitions = []
        while adjacency:
            node, pending = adjacency.popitem()
            current = set([node])
            while pending:
                node = pending.pop()
                current.add(node)
                pending.update(adjacency.pop(node, ()))
                pending.difference_update(current)
            partitions.append(current)
        return partitions

    def check(self):
        """Raise GraphError unless every edge and output is consistent."""
        for producer, consumer in self.edges():
            if producer not in self._nodes:
                raise GraphError("consumes unknown node %r" % (producer,),
                                 consumer)
            node = self._nodes[consumer]
            shape = node.input_shapes[node.inputs.index(producer)]
            if self._nodes[producer].output_shape != shape:
                raise GraphError(
                    "input from %r has shape %r, producer makes %r"
                    % (producer, shape, self._nodes[producer].output_shape),
                    consumer)
        for output in self.outputs:
            if output not in self._nodes:
                raise GraphError("unknown output", output)
        return self

    @property
    def params(self):
        return sum(n.params for n in self)

    @property
    def macs(self):
        return sum(n.macs for n in self)

    @property
    def minor_ops(self):
        return sum(n.minor_ops for n in self)

    def to_records(self):
        return collections.OrderedDict([
            ('name', self.name),
            ('outputs', list(self.outputs)),
            ('totals', collections.OrderedDict([
                ('params', self.params),
                ('macs', self.macs),
                ('minor_ops', self.minor_ops)])),
            ('nodes', [n.to_record() for n in self]),
        ])


class GraphBuilder(object):
    """Appends annotated layer nodes to a LayerGraph.

    Every method takes a node name and the name(s) of the producing nodes,
    infers the output shape, annotates parameter and MAC counts and returns
    the new node's name so calls can be chained.

    :ivar module: Tag recorded on every node added, e.g. 'body'.
    """

    def __init__(self, graph=None, module=None):
        self.graph = graph if graph is not None else LayerGraph()
        self.module = module

    def shape(self, name):
        return self.graph.node(name).output_shape

    def _add(self, name, kind, inputs, output_shape, attrs=(), params=0,
             macs=0, minor_ops=0):
        inputs = tuple(inputs)
        node = Node(
            name=name, kind=kind, inputs=inputs,
            input_shapes=tuple(self.shape(i) for i in inputs),
            output_shape=tuple(output_shape),
            attrs=tuple(sorted(attrs)), params=params, macs=macs,
            minor_ops=minor_ops, module=self.module)
        self.graph.add(node)
        return name

    def input(self, name, shape):
        return self._add(name, INPUT, (), shape)

    def conv(self, name, src, out_ch, kernel, stride=1, padding=None,
             groups=1, bias=False):
        batch, in_ch, height, width = self.shape(src)
        if padding is None:
            padding = kernel // 2
        if in_ch % groups or out_ch % groups:
            raise GraphError("channels %d->%d not divisible by groups %d"
                             % (in_ch, out_ch, groups), name)
        out_h = (height + 2 * padding - kernel) // stride + 1
        out_w = (width + 2 * padding - kernel) // stride + 1
        if out_h < 1 or out_w < 1:
            raise GraphError("kernel %d does not fit input %r"
                             % (kernel, self.shape(src)), name)
        weights = out_ch * (in_ch // groups) * kernel * kernel
        return self._add(
            name, CONV, [src], (batch, out_ch, out_h, out_w),
            attrs=[('kernel', kernel), ('stride', stride),
                   ('padding', padding), ('groups', groups),
                   ('bias', bias)],
            params=weights + (out_ch if bias else 0),
            macs=weights * out_h * out_w)

    def deconv(self, name, src, out_ch, kernel, stride, padding, bias=False):
        batch, in_ch, height, width = self.shape(src)
        out_h = (height - 1) * stride - 2 * padding + kernel
        out_w = (width - 1) * stride - 2 * padding + kernel
        weights = in_ch * out_ch * kernel * kernel
        return self._add(
            name, DECONV, [src], (batch, out_ch, out_h, out_w),
            attrs=[('kernel', kernel), ('stride', stride),
                   ('padding', padding), ('bias', bias)],
            params=weights + (out_ch if bias else 0),
            macs=weights * height * width)

    def batchnorm(self, name, src, epsilon=1e-5):
        shape = self.shape(src)
        return self._add(name, BATCHNORM, [src], shape,
                         attrs=[('epsilon', epsilon)],
                         params=4 * shape[1], minor_ops=2 * elements(shape))

    def activation(self, name, src, kind):
        if kind not in ACTIVATIONS:
            raise GraphError("unknown activation %r" % (kind,), name)
        shape = self.shape(src)
        return self._add(name, ACTIVATION, [src], shape,
                         attrs=[('kind', kind)], minor_ops=elements(shape))

    def add(self, name, srcs):
        shapes = set(self.shape(s) for s in srcs)
        if len(shapes) != 1:
            raise ShapeError("cannot add shapes %r" % (sorted(shapes),), name)
        shape = shapes.pop()
        return self._add(name, ADD, srcs, shape,
                         minor_ops=(len(srcs) - 1) * elements(shape))

    def concat(self, name, srcs):
        shapes = [self.shape(s) for s in srcs]
        rest = set((s[0], s[2], s[3]) for s in shapes)
        if len(rest) != 1:
            raise ShapeError("cannot concatenate shapes %r" % (shapes,), name)
        batch, height, width = rest.pop()
        channels = sum(s[1] for s in shapes)
        return self._add(name, CONCAT, srcs, (batch, channels, height, width))

    def upsample(self, name, src, factor):
        batch, channels, height, width = self.shape(src)
        shape = (batch, channels, height * factor, width * factor)
        return self._add(name, UPSAMPLE, [src], shape,
                         attrs=[('factor', factor)],
                         minor_ops=elements(shape))

    def global_pool(self, name, src):
        shape = self.shape(src)
        return self._add(name, GLOBAL_POOL, [src],
                         (shape[0], shape[1], 1, 1),
                         minor_ops=elements(shape))

    def dense(self, name, src, out_ch, bias=True):
        batch, in_ch, height, width = self.shape(src)
        if (height, width) != (1, 1):
            raise GraphError("dense input must be pooled, got %r"
                             % (self.shape(src),), name)
        return self._add(
            name, DENSE, [src], (batch, out_ch, 1, 1),
            attrs=[('bias', bias)],
            params=in_ch * out_ch + (out_ch if bias else 0),
            macs=in_ch * out_ch)

    def scale(self, name, src, gate):
        shape = self.shape(src)
        if self.shape(gate) != shape[:2] + (1, 1):
            raise ShapeError("gate %r does not match %r"
                             % (self.shape(gate), shape), name)
        return self._add(name, SCALE, [src, gate], shape,
                         minor_ops=elements(shape))

    def conv_bn(self, prefix, src, out_ch, kernel, stride=1, groups=1,
                act=None):
        """conv -> batchnorm (-> activation); returns the last node."""
        out = self.conv(prefix + '.conv', src, out_ch, kernel, stride=stride,
                        groups=groups)
        out = self.batchnorm(prefix + '.bn', out)
        if act is not None:
            out = self.activation(prefix + '.' + act, out, act)
        return out
