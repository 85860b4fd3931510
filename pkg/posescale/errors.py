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

"""Exceptions raised by posescale."""


class PoseScaleError(Exception):
    """Base class for every error posescale raises deliberately."""


class ConfigurationError(PoseScaleError, ValueError):
    """A layer, kernel or model was configured with inconsistent values.

    e.g. a weight tensor whose channel count does not match its input, or an
    input resolution that the backbone cannot downsample by 32.
    """


class UnsupportedCoefficientError(ConfigurationError):
    """A scaling coefficient outside the supported range was requested."""

    def __init__(self, phi, valid_range):
        self.phi = phi
        self.valid_range = valid_range
        super(UnsupportedCoefficientError, self).__init__(
            "unsupported scaling coefficient phi=%r: valid range is %d..%d"
            % (phi, valid_range[0], valid_range[1]))


class ShapeError(PoseScaleError, ValueError):
    """Tensor shapes disagree at runtime.

    :ivar edge: The operand or graph edge where the disagreement was found.
    """

    def __init__(self, message, edge=None):
        self.edge = edge
        if edge is not None:
            message = "%s: %s" % (edge, message)
        super(ShapeError, self).__init__(message)


class GraphError(PoseScaleError):
    """A LayerGraph is internally inconsistent.

    :ivar node: The name of the offending node.
    """

    def __init__(self, message, node=None):
        self.node = node
        if node is not None:
            message = "node %r: %s" % (node, message)
        super(GraphError, self).__init__(message)


class TensorFormatError(PoseScaleError):
    """A tensor file could not be decoded.

    :ivar offset: Byte offset in the file where decoding failed.
    """

    def __init__(self, message, offset):
        self.offset = offset
        super(TensorFormatError, self).__init__(
            "%s (at byte offset %d)" % (message, offset))


class AnnotationError(PoseScaleError, ValueError):
    """An annotation or pose document is malformed or out of bounds.

    :ivar location: Where in the document the problem is, e.g.
        ``persons[2].keypoints[5]``.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = "%s: %s" % (location, message)
        super(AnnotationError, self).__init__(message)


class DomainError(PoseScaleError, ValueError):
    """A numeric argument is outside the domain of a formula."""
