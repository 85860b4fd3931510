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

"""Compound scaling: from one coefficient phi to a whole model configuration.

The published configurations for phi in [-4, 0] are authoritative and stored
as constants; the closed-form formulas are exposed for extrapolation below
phi = -4, where they are best-effort.
"""

import collections
import logging
import math

from posescale.errors import ConfigurationError, UnsupportedCoefficientError

LOG = logging.getLogger(__name__)

SUPPORTED_PHI = (-4, 0)
# R_input = 512 + 32 * phi stays >= 32 down to -15.
EXTRAPOLATED_PHI = (-15, 0)

BASE_RESOLUTION = 512
RESOLUTION_STEP = 32
BASE_WIDTHS = (32, 64, 128, 256)
WIDTH_GROWTH = 1.25
DEPTH_GROWTH = 1.2
BACKBONE_WIDTH_GROWTH = 1.1
RESOLUTION_GROWTH = 1.15
CLASSIFICATION_BASE_RESOLUTION = 224

# phi -> (input size, widths per branch, blocks per stage); tag and heatmap
# sizes follow from the input size.
_PUBLISHED_CONFIGS = {
    0: (512, (32, 64, 128, 256), (1, 4, 3)),
    -1: (480, (26, 52, 103, 206), (1, 3, 3)),
    -2: (448, (21, 42, 83, 166), (1, 2, 3)),
    -3: (416, (17, 34, 67, 133), (1, 1, 3)),
    -4: (384, (14, 27, 54, 107), (1, 1, 2)),
}

# ceil(224 * 1.15 ** phi) does not give 145 at phi = -3, so the published
# classification resolutions are stored.
_CLASSIFICATION_RESOLUTIONS = {0: 224, -1: 195, -2: 170, -3: 145, -4: 128}


BackboneCoefficients = collections.namedtuple(
    'BackboneCoefficients', ['phi', 'depth_mult', 'width_mult',
                             'resolution_mult'])


class ScaleConfig(collections.namedtuple('ScaleConfig', [
        'phi', 'input_resolution', 'branch_widths', 'stage_repeats',
        'backbone', 'tag_size', 'heatmap_size'])):
    """Every scaling-derived constant for one model of the family.

    :ivar phi: The compound scaling coefficient.
    :ivar input_resolution: Square input size in pixels, a multiple of 32.
    :ivar branch_widths: Channel width of each of the four body branches.
    :ivar stage_repeats: Blocks per branch in each of the three body stages.
    :ivar backbone: The `BackboneCoefficients` for phi.
    :ivar tag_size: Side of the first head's output, input_resolution / 4.
    :ivar heatmap_size: Side of the refined heatmaps, input_resolution / 2.
    """

    __slots__ = ()

    @property
    def name(self):
        return "H%d" % self.phi

    def resized(self, input_resolution):
        """Return this configuration for another input size.

        Widths and repeats are unchanged; used for reduced-size runs of the
        large models.
        """
        _check_resolution(input_resolution)
        return self._replace(input_resolution=input_resolution,
                             tag_size=input_resolution // 4,
                             heatmap_size=input_resolution // 2)

    def to_record(self):
        """A JSON-ready mapping using the field names of this class."""
        return collections.OrderedDict([
            ('phi', self.phi),
            ('input_resolution', self.input_resolution),
            ('branch_widths', list(self.branch_widths)),
            ('stage_repeats', list(self.stage_repeats)),
            ('backbone', collections.OrderedDict([
                ('depth_mult', self.backbone.depth_mult),
                ('width_mult', self.backbone.width_mult),
                ('resolution_mult', self.backbone.resolution_mult),
                ('classification_resolution',
                 classification_resolution(self.phi)),
            ])),
            ('tag_size', self.tag_size),
            ('heatmap_size', self.heatmap_size),
        ])


def _check_phi(phi, valid_range):
    if (isinstance(phi, bool) or int(phi) != phi or
            not valid_range[0] <= phi <= valid_range[1]):
        raise UnsupportedCoefficientError(phi, valid_range)
    return int(phi)


def _check_resolution(resolution):
    if resolution < RESOLUTION_STEP or resolution % RESOLUTION_STEP:
        raise ConfigurationError(
            "input resolution %r must be a positive multiple of %d"
            % (resolution, RESOLUTION_STEP))


def input_resolution(phi):
    """R_input = 512 + 32 * phi."""
    resolution = BASE_RESOLUTION + RESOLUTION_STEP * phi
    if resolution < RESOLUTION_STEP:
        raise UnsupportedCoefficientError(phi, EXTRAPOLATED_PHI)
    return resolution


def branch_width_formula(branch, phi):
    """ceil(base * 1.25 ** phi) for branch 1..4.

    The base vector is (32, 64, 128, 256). Published widths override this for
    phi in [-4, 0]; no single rounding rule reproduces all of them.
    """
    if branch not in (1, 2, 3, 4):
        raise ConfigurationError("branch must be 1..4, got %r" % (branch,))
    return int(math.ceil(BASE_WIDTHS[branch - 1] * WIDTH_GROWTH ** phi))


def backbone_coefficients(phi):
    return BackboneCoefficients(
        phi=phi,
        depth_mult=DEPTH_GROWTH ** phi,
        width_mult=BACKBONE_WIDTH_GROWTH ** phi,
        resolution_mult=RESOLUTION_GROWTH ** phi)


def classification_resolution(phi):
    """Input size of the classification-trained backbone for phi."""
    if phi in _CLASSIFICATION_RESOLUTIONS:
        return _CLASSIFICATION_RESOLUTIONS[phi]
    return int(math.ceil(
        CLASSIFICATION_BASE_RESOLUTION * RESOLUTION_GROWTH ** phi))


def stage_repeats(phi, extrapolate=False):
    """Blocks per branch for the three body stages.

    Repeats fall by one per step of phi, stage 2 first until it reaches a
    single block, then stage 3; the first stage always has one.
    """
    if not extrapolate or SUPPORTED_PHI[0] <= phi <= SUPPORTED_PHI[1]:
        phi = _check_phi(phi, SUPPORTED_PHI)
        return _PUBLISHED_CONFIGS[phi][2]
    phi = _check_phi(phi, EXTRAPOLATED_PHI)
    base = _PUBLISHED_CONFIGS[SUPPORTED_PHI[0]][2]
    steps = SUPPORTED_PHI[0] - phi
    return (base[0], base[1], max(1, base[2] - steps))


def config_for_phi(phi, extrapolate=False):
    """Return the `ScaleConfig` for phi.

    :param extrapolate: Allow phi below -4, using the closed-form formulas.
    :raises UnsupportedCoefficientError: phi outside the allowed range.
    """
    if extrapolate:
        phi = _check_phi(phi, EXTRAPOLATED_PHI)
    else:
        phi = _check_phi(phi, SUPPORTED_PHI)
    if phi in _PUBLISHED_CONFIGS:
        resolution, widths, repeats = _PUBLISHED_CONFIGS[phi]
    else:
        resolution = input_resolution(phi)
        widths = tuple(branch_width_formula(n, phi) for n in (1, 2, 3, 4))
        repeats = stage_repeats(phi, extrapolate=True)
        LOG.debug("extrapolated configuration for phi=%d", phi)
    return ScaleConfig(
        phi=phi,
        input_resolution=resolution,
        branch_widths=widths,
        stage_repeats=repeats,
        backbone=backbone_coefficients(phi),
        tag_size=resolution // 4,
        heatmap_size=resolution // 2)


def supported_configs():
    """Configurations for phi = 0, -1, ..., -4 in that order."""
    return [config_for_phi(phi)
            for phi in range(SUPPORTED_PHI[1], SUPPORTED_PHI[0] - 1, -1)]
