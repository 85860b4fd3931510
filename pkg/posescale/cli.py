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

"""The posescale command line.

Exit codes: 0 success, 1 other errors, 2 usage errors, 3 published-target
breaches under ``costs --check``, 4 tensor shape or format errors.
"""

import argparse
import json
import logging
import sys

import numpy

from posescale import analysis
from posescale import body as body_mod
from posescale import decoder
from posescale import fixture_io
from posescale import network as network_mod
from posescale import scaling
from posescale.backbone import DEPTH_ROUNDING
from posescale.errors import (
    ConfigurationError, PoseScaleError, ShapeError, TensorFormatError,
    UnsupportedCoefficientError)
from posescale.tensor import Tensor

LOG = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CHECK = 3
EXIT_TENSOR = 4

TABLE = 'table'
RECORDS = 'records'


def _emit(text, stream=None):
    stream = stream or sys.stdout
    stream.write(text)
    if not text.endswith('\n'):
        stream.write('\n')


def _records(value):
    return json.dumps(value, indent=2)


def _config(args, parser):
    try:
        config = scaling.config_for_phi(args.phi,
                                        extrapolate=args.extrapolate)
    except UnsupportedCoefficientError as e:
        parser.error(str(e))
    if getattr(args, 'resolution', None):
        config = config.resized(args.resolution)
    return config


def _build_options(args):
    return dict(lite=args.lite, block_layout=args.block_layout,
                depth_rounding=args.depth_rounding)


def describe_table(config):
    record = config.to_record()
    backbone = record.pop('backbone')
    lines = ['model                      %s' % config.name]
    for key, value in record.items():
        if isinstance(value, list):
            value = ', '.join(str(v) for v in value)
        lines.append('%-26s %s' % (key, value))
    for key, value in backbone.items():
        if isinstance(value, float):
            value = '%.4f' % value
        lines.append('%-26s %s' % ('backbone.' + key, value))
    return '\n'.join(lines)


def cmd_describe(args, parser):
    config = _config(args, parser)
    if args.format == RECORDS:
        _emit(_records(config.to_record()))
    else:
        _emit(describe_table(config))
    return EXIT_OK


def cmd_costs(args, parser):
    if args.all:
        configs = scaling.supported_configs()
    else:
        configs = [_config(args, parser)]
    reports = [analysis.network_costs(c, **_build_options(args))
               for c in configs]
    if args.format == RECORDS:
        _emit(_records([r.to_record() for r in reports]))
    else:
        _emit(analysis.format_table(reports))
    if not args.check:
        return EXIT_OK
    result = analysis.check_published(reports)
    if result.passed:
        _emit("published targets met (FLOPs compared as %s)"
              % result.convention, sys.stderr)
        return EXIT_OK
    for breach in result.breaches:
        _emit("breach: %s" % breach, sys.stderr)
    return EXIT_CHECK


def _image(args, network):
    if args.input:
        return fixture_io.read_tensor(args.input)
    rng = numpy.random.default_rng(args.seed)
    return Tensor(rng.uniform(-1.0, 1.0, size=network.image_shape))


def cmd_infer(args, parser):
    config = _config(args, parser)
    network = network_mod.build_network(config, **_build_options(args))
    outputs = network_mod.forward_network(network, _image(args, network),
                                          seed=args.seed)
    fixture_io.write_tensor(outputs.first_head, args.first_head)
    fixture_io.write_tensor(outputs.refined_heatmaps, args.heatmaps)
    _emit("%s: wrote %r to %s and %r to %s" % (
        config.name, outputs.first_head.dims, args.first_head,
        outputs.refined_heatmaps.dims, args.heatmaps))
    return EXIT_OK


def cmd_decode(args, parser):
    config = _config(args, parser)
    if len(args.first_head) != len(args.heatmaps):
        parser.error("need as many --first-head as --heatmaps files")
    if len(args.heatmaps) > 1 and not args.multiscale:
        parser.error("several scales given without --multiscale")
    try:
        params = decoder.DecodeParams(
            nms_window=args.nms_window, top_k=args.top_k,
            detection_threshold=args.detection_threshold,
            tag_threshold=args.tag_threshold, refine=not args.no_refine)
    except ConfigurationError as e:
        parser.error(str(e))
    firsts = [fixture_io.read_tensor(p) for p in args.first_head]
    refined = [fixture_io.read_tensor(p) for p in args.heatmaps]
    if args.multiscale:
        poses = decoder.decode_multiscale(firsts, refined, config, params)
    else:
        poses = decoder.decode(firsts[0], refined[0], config, params)
    fixture_io.write_poses(poses, args.output)
    _emit("%d persons" % len(poses))
    return EXIT_OK


def cmd_graph(args, parser):
    config = _config(args, parser)
    network = network_mod.build_network(config, **_build_options(args))
    graph = network_mod.compile_network(network)
    text = _records(graph.to_records())
    if args.output:
        with open(args.output, 'w') as stream:
            _emit(text, stream)
    else:
        _emit(text)
    return EXIT_OK


def cmd_selftest(args, parser):
    # test helpers are only needed here.
    from posescale.tests import oracles
    failures = oracles.run_selftest(seed=args.seed,
                                    instances=args.instances)
    for failure in failures:
        _emit("FAIL: %s" % failure, sys.stderr)
    _emit("selftest: %d failures" % len(failures))
    return EXIT_ERROR if failures else EXIT_OK


def _add_phi(parser, required=True):
    parser.add_argument('--phi', type=int, required=required,
                        help="Compound scaling coefficient, -4..0.")
    parser.add_argument('--extrapolate', action='store_true',
                        help="Allow phi down to -15 using the formulas.")


def _add_build(parser):
    parser.add_argument('--lite', action='store_true',
                        help="relu backbone without squeeze-excite.")
    parser.add_argument('--block-layout',
                        default=body_mod.DEFAULT_BLOCK_LAYOUT,
                        choices=sorted(body_mod.BLOCK_LAYOUTS))
    parser.add_argument('--depth-rounding', default='round',
                        choices=DEPTH_ROUNDING)


def _add_format(parser):
    parser.add_argument('--format', choices=(TABLE, RECORDS), default=TABLE)


def make_parser():
    parser = argparse.ArgumentParser(
        prog='posescale',
        description="Compound-scaled high-resolution pose networks.")
    parser.add_argument('-v', '--verbose', action='store_true',
                        help="Log debug output.")
    parser.add_argument('-q', '--quiet', action='store_true',
                        help="Only log errors.")
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    describe = commands.add_parser('describe',
                                   help="Print a model configuration.")
    _add_phi(describe)
    _add_format(describe)
    describe.set_defaults(run=cmd_describe)

    costs = commands.add_parser('costs', help="Count params and MACs.")
    which = costs.add_mutually_exclusive_group(required=True)
    which.add_argument('--phi', type=int)
    which.add_argument('--all', action='store_true',
                       help="Every supported model.")
    costs.add_argument('--extrapolate', action='store_true')
    costs.add_argument('--check', action='store_true',
                       help="Compare with the published figures.")
    _add_build(costs)
    _add_format(costs)
    costs.set_defaults(run=cmd_costs)

    infer = commands.add_parser('infer', help="Run a seeded network.")
    _add_phi(infer)
    _add_build(infer)
    infer.add_argument('--input', help="TensorFile of shape (1, 3, R, R); "
                       "a seeded random image when omitted.")
    infer.add_argument('--resolution', type=int,
                       help="Override the input resolution.")
    infer.add_argument('--seed', type=int, default=0)
    infer.add_argument('--first-head', required=True,
                       help="Where to write the first head output.")
    infer.add_argument('--heatmaps', required=True,
                       help="Where to write the refined heatmaps.")
    infer.set_defaults(run=cmd_infer)

    decode = commands.add_parser('decode', help="Group heatmaps into poses.")
    _add_phi(decode)
    decode.add_argument('--resolution', type=int,
                        help="Override the input resolution.")
    decode.add_argument('--first-head', nargs='+', required=True)
    decode.add_argument('--heatmaps', nargs='+', required=True)
    decode.add_argument('--output', required=True)
    decode.add_argument('--multiscale', action='store_true',
                        help="Average heatmaps and stack tags over scales.")
    defaults = decoder.DecodeParams()
    decode.add_argument('--nms-window', type=int,
                        default=defaults.nms_window)
    decode.add_argument('--top-k', type=int, default=defaults.top_k)
    decode.add_argument('--detection-threshold', type=float,
                        default=defaults.detection_threshold)
    decode.add_argument('--tag-threshold', type=float,
                        default=defaults.tag_threshold)
    decode.add_argument('--no-refine', action='store_true')
    decode.set_defaults(run=cmd_decode)

    graph = commands.add_parser('graph', help="Dump the compiled graph.")
    _add_phi(graph)
    _add_build(graph)
    graph.add_argument('--output')
    graph.set_defaults(run=cmd_graph)

    selftest = commands.add_parser('selftest',
                                   help="Run the kernel and decode oracles.")
    selftest.add_argument('--seed', type=int, default=0)
    selftest.add_argument('--instances', type=int, default=100)
    selftest.set_defaults(run=cmd_selftest)
    return parser


def main(argv=None):
    """Run a command; usage errors return 2 rather than exiting."""
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    level = logging.WARNING
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.ERROR
    logging.basicConfig(level=level,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        return args.run(args, parser)
    except SystemExit as e:
        return e.code
    except (ShapeError, TensorFormatError) as e:
        LOG.debug("tensor error", exc_info=True)
        _emit("error: %s" % e, sys.stderr)
        return EXIT_TENSOR
    except (PoseScaleError, IOError) as e:
        LOG.debug("command failed", exc_info=True)
        _emit("error: %s" % e, sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
