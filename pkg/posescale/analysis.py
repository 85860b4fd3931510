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

"""Parameter and operation accounting, scaling reports and the AE metric.

Costs are recounted from each node's geometry and checked against the
annotations the builders made, so every report is double-entry.
"""

import collections
import logging

from posescale import backbone as backbone_mod
from posescale import body as body_mod
from posescale import graph as graph_mod
from posescale import network as network_mod
from posescale import scaling
from posescale.errors import DomainError, GraphError

LOG = logging.getLogger(__name__)

MODULES = ('backbone', 'body', 'head')
MACS = 'macs'
FLOPS_2X = 'flops_2x'
CONVENTIONS = (MACS, FLOPS_2X)
PARAMS_TOLERANCE = 0.15
FLOPS_TOLERANCE = 0.20
MAX_SMALLEST_TO_LARGEST = 0.20

PublishedCost = collections.namedtuple('PublishedCost',
                                       ['params', 'flops'])

# Single-scale COCO val/test-dev comparison tables; the FLOP convention of
# the published figures is not stated.
PUBLISHED_COSTS = {
    0: PublishedCost(params=23.3e6, flops=25.6e9),
    -1: PublishedCost(params=16.0e6, flops=14.2e9),
    -2: PublishedCost(params=10.3e6, flops=7.7e9),
    -3: PublishedCost(params=6.9e6, flops=4.2e9),
    -4: PublishedCost(params=3.7e6, flops=2.1e9),
}

PublishedBackbone = collections.namedtuple(
    'PublishedBackbone', ['resolution', 'imagenet_params', 'cifar_params'])

# Compact EfficientNet table: ImageNet (1000 classes) and CIFAR-100.
PUBLISHED_BACKBONES = {
    0: PublishedBackbone(224, 5.3e6, 4.1e6),
    -1: PublishedBackbone(195, 4.5e6, 3.5e6),
    -2: PublishedBackbone(170, 3.4e6, 2.5e6),
    -3: PublishedBackbone(145, 2.8e6, 1.9e6),
    -4: PublishedBackbone(128, 1.3e6, 1.3e6),
}

NodeCost = collections.namedtuple('NodeCost',
                                  ['params', 'macs', 'minor_ops'])
ModuleCost = collections.namedtuple('ModuleCost',
                                    ['params', 'macs', 'minor_ops'])


class CostReport(collections.namedtuple('CostReport', [
        'model_name', 'phi', 'input_resolution', 'params', 'macs',
        'flops_2x', 'minor_ops', 'per_module'])):
    """Costs of one compiled model.

    :ivar macs: Multiply-accumulates of convolutions, transposed
        convolutions and dense layers.
    :ivar flops_2x: Always 2 * macs.
    :ivar minor_ops: Elementwise operations, excluded from macs.
    :ivar per_module: OrderedDict of module name -> `ModuleCost`.
    """

    __slots__ = ()

    def flops(self, convention):
        if convention not in CONVENTIONS:
            raise ValueError("unknown FLOP convention %r" % (convention,))
        return getattr(self, convention)

    def to_record(self):
        return collections.OrderedDict([
            ('model_name', self.model_name),
            ('phi', self.phi),
            ('input_resolution', self.input_resolution),
            ('params', self.params),
            ('macs', self.macs),
            ('flops_2x', self.flops_2x),
            ('minor_ops', self.minor_ops),
            ('per_module', collections.OrderedDict(
                (name, collections.OrderedDict(cost._asdict()))
                for name, cost in self.per_module.items())),
        ])


def _conv_extent(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _check_output(node, expected):
    if tuple(node.output_shape) != tuple(expected):
        raise GraphError("output shape %r, geometry gives %r"
                         % (node.output_shape, tuple(expected)), node.name)


def recount(node):
    """Recompute a node's costs from its shapes and geometry alone.

    :return: `NodeCost`.
    :raises GraphError: the node's output shape contradicts its geometry.
    """
    out = node.output_shape
    count = graph_mod.elements(out)
    if node.kind == graph_mod.CONV:
        batch, in_ch, height, width = node.input_shapes[0]
        k = node.attr('kernel')
        stride, padding = node.attr('stride'), node.attr('padding')
        _check_output(node, (batch, out[1],
                             _conv_extent(height, k, stride, padding),
                             _conv_extent(width, k, stride, padding)))
        weights = out[1] * (in_ch // node.attr('groups')) * k * k
        bias = out[1] if node.attr('bias') else 0
        return NodeCost(weights + bias, weights * out[2] * out[3], 0)
    if node.kind == graph_mod.DECONV:
        batch, in_ch, height, width = node.input_shapes[0]
        k = node.attr('kernel')
        stride, padding = node.attr('stride'), node.attr('padding')
        _check_output(node, (batch, out[1],
                             (height - 1) * stride - 2 * padding + k,
                             (width - 1) * stride - 2 * padding + k))
        weights = in_ch * out[1] * k * k
        bias = out[1] if node.attr('bias') else 0
        return NodeCost(weights + bias, weights * height * width, 0)
    if node.kind == graph_mod.DENSE:
        in_ch = node.input_shapes[0][1]
        weights = in_ch * out[1]
        bias = out[1] if node.attr('bias') else 0
        return NodeCost(weights + bias, weights, 0)
    if node.kind == graph_mod.BATCHNORM:
        return NodeCost(4 * out[1], 0, 2 * count)
    if node.kind == graph_mod.ADD:
        return NodeCost(0, 0, (len(node.inputs) - 1) * count)
    if node.kind == graph_mod.GLOBAL_POOL:
        return NodeCost(0, 0, graph_mod.elements(node.input_shapes[0]))
    if node.kind in graph_mod.ELEMENTWISE_KINDS:
        return NodeCost(0, 0, count)
    return NodeCost(0, 0, 0)


def count_costs(graph, model_name=None, phi=None, input_resolution=None):
    """Total and per-module costs of graph.

    :raises GraphError: the graph is inconsistent, or a node's annotated
        costs differ from its recount.
    """
    graph.check()
    modules = collections.OrderedDict(
        (name, [0, 0, 0]) for name in MODULES)
    for node in graph:
        cost = recount(node)
        annotated = NodeCost(node.params, node.macs, node.minor_ops)
        if cost != annotated:
            raise GraphError("annotated costs %r disagree with recount %r"
                             % (tuple(annotated), tuple(cost)), node.name)
        if node.kind == graph_mod.INPUT:
            continue
        totals = modules.setdefault(node.module or 'other', [0, 0, 0])
        for index, value in enumerate(cost):
            totals[index] += value
    params = sum(t[0] for t in modules.values())
    macs = sum(t[1] for t in modules.values())
    minor = sum(t[2] for t in modules.values())
    if input_resolution is None:
        inputs = graph.inputs()
        input_resolution = inputs[0].output_shape[2] if inputs else None
    return CostReport(
        model_name=model_name or graph.name,
        phi=phi,
        input_resolution=input_resolution,
        params=params,
        macs=macs,
        flops_2x=2 * macs,
        minor_ops=minor,
        per_module=collections.OrderedDict(
            (name, ModuleCost(*values)) for name, values in modules.items()))


def network_costs(config, **build_options):
    network = network_mod.build_network(config, **build_options)
    graph = network_mod.compile_network(network)
    return count_costs(graph, config.name, config.phi,
                       config.input_resolution)


def scaling_table(lite=False, block_layout=body_mod.DEFAULT_BLOCK_LAYOUT,
                  depth_rounding='round'):
    """One `CostReport` per supported phi, H0 first."""
    return [network_costs(config, lite=lite, block_layout=block_layout,
                          depth_rounding=depth_rounding)
            for config in scaling.supported_configs()]


BackboneRow = collections.namedtuple(
    'BackboneRow', ['phi', 'classification_resolution', 'repeats',
                    'imagenet_params', 'cifar_params'])


def _classifier_params(coeff, resolution, class_count, depth_rounding):
    spec = backbone_mod.build_backbone(
        coeff, resolution, with_classifier=True, class_count=class_count,
        depth_rounding=depth_rounding)
    return spec, backbone_mod.backbone_graph(spec).params


def backbone_table(depth_rounding='round', imagenet_classes=1000,
                   cifar_classes=100):
    """Classifier-equipped backbone sizes for every supported phi.

    Parameter counts do not depend on input size, so the graphs are built at
    the pose input resolution.
    """
    rows = []
    for config in scaling.supported_configs():
        spec, imagenet = _classifier_params(
            config.backbone, config.input_resolution, imagenet_classes,
            depth_rounding)
        _, cifar = _classifier_params(
            config.backbone, config.input_resolution, cifar_classes,
            depth_rounding)
        rows.append(BackboneRow(
            phi=config.phi,
            classification_resolution=scaling.classification_resolution(
                config.phi),
            repeats=tuple(s.repeats for s in spec.stages),
            imagenet_params=imagenet,
            cifar_params=cifar))
    return rows


class CheckResult(collections.namedtuple('CheckResult',
                                         ['convention', 'breaches'])):
    """Outcome of comparing reports with the published figures.

    :ivar convention: 'macs' or 'flops_2x', whichever the FLOP targets were
        compared against.
    :ivar breaches: Human readable descriptions of every failure.
    """

    __slots__ = ()

    @property
    def passed(self):
        return not self.breaches


def _relative(value, target):
    return abs(value - target) / float(target)


def _breaches(reports, convention, params_tolerance, flops_tolerance):
    breaches = []
    for report in reports:
        target = PUBLISHED_COSTS.get(report.phi)
        if target is None:
            continue
        error = _relative(report.params, target.params)
        if error > params_tolerance:
            breaches.append("%s params %d off %.1fM by %.1f%%"
                            % (report.model_name, report.params,
                               target.params / 1e6, 100 * error))
        flops = report.flops(convention)
        error = _relative(flops, target.flops)
        if error > flops_tolerance:
            breaches.append("%s %s %d off %.1fB by %.1f%%"
                            % (report.model_name, convention, flops,
                               target.flops / 1e9, 100 * error))
    return breaches


def _ordering_breaches(reports):
    breaches = []
    ordered = sorted(reports, key=lambda r: -r.phi)
    for larger, smaller in zip(ordered, ordered[1:]):
        if not smaller.params < larger.params:
            breaches.append("params not decreasing from %s to %s"
                            % (larger.model_name, smaller.model_name))
        if not smaller.macs < larger.macs:
            breaches.append("macs not decreasing from %s to %s"
                            % (larger.model_name, smaller.model_name))
    by_phi = dict((r.phi, r) for r in reports)
    largest = by_phi.get(scaling.SUPPORTED_PHI[1])
    smallest = by_phi.get(scaling.SUPPORTED_PHI[0])
    if largest is not None and smallest is not None:
        ratio = smallest.params / float(largest.params)
        if ratio > MAX_SMALLEST_TO_LARGEST:
            breaches.append("%s/%s params ratio %.3f exceeds %.2f"
                            % (smallest.model_name, largest.model_name,
                               ratio, MAX_SMALLEST_TO_LARGEST))
    return breaches


def check_published(reports, convention=None,
                    params_tolerance=PARAMS_TOLERANCE,
                    flops_tolerance=FLOPS_TOLERANCE):
    """Compare reports with the published params and FLOPs.

    :param convention: Compare FLOPs as 'macs' or 'flops_2x'. When None the
        first convention under which every model passes is used, or the one
        with fewest breaches.
    :return: `CheckResult`.
    """
    reports = list(reports)
    candidates = CONVENTIONS if convention is None else (convention,)
    best = None
    for candidate in candidates:
        breaches = _breaches(reports, candidate, params_tolerance,
                             flops_tolerance)
        if best is None or len(breaches) < len(best.breaches):
            best = CheckResult(candidate, breaches)
        if not breaches:
            break
    result = CheckResult(best.convention,
                         best.breaches + _ordering_breaches(reports))
    LOG.info("published check under %s: %d breaches", result.convention,
             len(result.breaches))
    return result


class AEScore(collections.namedtuple('AEScore', [
        'accuracy_ap', 'fps', 'watts', 'efficiency', 'ae'])):
    """Accuracy times efficiency, efficiency being FPS per watt."""

    __slots__ = ()


def ae_score(accuracy_ap, fps, watts, efficiency_digits=3):
    """Score accuracy_ap * fps / watts.

    :param efficiency_digits: Round the efficiency to this many decimals
        before multiplying, as published tables do; None keeps it exact.
    :raises DomainError: watts <= 0 or a negative accuracy or fps.
    """
    if watts <= 0:
        raise DomainError("watts must be positive, got %r" % (watts,))
    if accuracy_ap < 0 or fps < 0:
        raise DomainError("accuracy and fps must be non-negative")
    efficiency = fps / float(watts)
    if efficiency_digits is not None:
        efficiency = round(efficiency, efficiency_digits)
    return AEScore(accuracy_ap=accuracy_ap, fps=fps, watts=watts,
                   efficiency=efficiency, ae=accuracy_ap * efficiency)


def _millions(value):
    return "%.2fM" % (value / 1e6)


def _billions(value):
    return "%.2fB" % (value / 1e9)


def format_table(reports):
    """Aligned plain-text table of reports with a per-module breakdown."""
    header = ['model', 'phi', 'input', 'params', 'MACs', '2xMACs', 'minor']
    header.extend('%s params/MACs' % m for m in MODULES)
    rows = [header]
    for r in reports:
        row = [r.model_name, str(r.phi), str(r.input_resolution),
               _millions(r.params), _billions(r.macs),
               _billions(r.flops_2x), _billions(r.minor_ops)]
        for name in MODULES:
            cost = r.per_module.get(name, ModuleCost(0, 0, 0))
            row.append('%s/%s' % (_millions(cost.params),
                                  _billions(cost.macs)))
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ['  '.join(cell.rjust(w) if index else cell.ljust(w)
                       for index, (cell, w) in enumerate(zip(row, widths)))
             .rstrip() for row in rows]
    return '\n'.join(lines)
