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

"""Dense rank-4 float32 tensors and the kernels the networks are made of.

Every kernel is a pure function: inputs are never modified and the result is
a new read-only `Tensor`. Convolution is cross-correlation (no kernel flip),
the deep-learning convention.
"""

import numpy
from numpy.lib.stride_tricks import sliding_window_view

from posescale.errors import ConfigurationError, ShapeError

DTYPE = numpy.dtype('float32')

RELU = 'relu'
SWISH = 'swish'
SIGMOID = 'sigmoid'
ACTIVATIONS = (RELU, SWISH, SIGMOID)


def _checked(array):
    if array.ndim != 4:
        raise ConfigurationError(
            "tensor must be rank 4, got dims %r" % (array.shape,))
    if min(array.shape) < 1:
        raise ConfigurationError(
            "tensor dims must all be >= 1, got %r" % (array.shape,))
    array.setflags(write=False)
    return array


class Tensor(object):
    """A dense (batch, channels, height, width) float32 tensor.

    The backing array is C-contiguous and read-only, so a Tensor can be
    shared freely between threads and graph nodes.
    """

    __slots__ = ('_array',)

    def __init__(self, array):
        self._array = _checked(
            numpy.array(array, dtype=DTYPE, order='C', copy=True))

    @classmethod
    def _wrap(cls, array):
        """Adopt a freshly computed array without copying it."""
        tensor = cls.__new__(cls)
        array = numpy.ascontiguousarray(array, dtype=DTYPE)
        if not array.flags.owndata:
            array = array.copy()
        tensor._array = _checked(array)
        return tensor

    @classmethod
    def from_flat(cls, dims, data):
        """Build a tensor from dims and a flat row-major sequence."""
        dims = tuple(int(d) for d in dims)
        flat = numpy.asarray(data, dtype=DTYPE).ravel()
        if len(dims) != 4 or flat.size != int(numpy.prod(dims)):
            raise ConfigurationError(
                "data length %d does not match dims %r" % (flat.size, dims))
        return cls(flat.reshape(dims))

    @classmethod
    def zeros(cls, dims):
        return cls(numpy.zeros(dims, dtype=DTYPE))

    @classmethod
    def full(cls, dims, value):
        return cls(numpy.full(dims, value, dtype=DTYPE))

    @property
    def array(self):
        """The read-only numpy view of this tensor."""
        return self._array

    @property
    def dims(self):
        return self._array.shape

    @property
    def data(self):
        """Flat row-major view of the values."""
        return self._array.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return (self.dims == other.dims and
                self._array.tobytes() == other._array.tobytes())

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    __hash__ = None

    def __repr__(self):
        return "Tensor(dims=%r)" % (self.dims,)


def _as_vector(values, length, what):
    vector = numpy.asarray(values, dtype=DTYPE).ravel()
    if vector.size != length:
        raise ConfigurationError(
            "%s has %d entries, expected %d" % (what, vector.size, length))
    return vector


def _windows(x, k, stride, padding, fill=0.0):
    """Return strided k x k windows of x as (B, C, Ho, Wo, k, k)."""
    if padding:
        x = numpy.pad(x, ((0, 0), (0, 0), (padding, padding),
                          (padding, padding)), constant_values=fill)
    view = sliding_window_view(x, (k, k), axis=(2, 3))
    return view[:, :, ::stride, ::stride]


def conv2d(input, weights, bias=None, stride=1, padding=0, groups=1):
    """2D cross-correlation.

    :param input: (B, C_in, H, W) tensor.
    :param weights: (C_out, C_in / groups, k, k) tensor.
    :param bias: Optional C_out values.
    :return: (B, C_out, (H + 2p - k) // s + 1, (W + 2p - k) // s + 1).
    """
    batch, in_ch, height, width = input.dims
    out_ch, group_ch, k, k2 = weights.dims
    if k != k2:
        raise ConfigurationError("kernel must be square, got %r"
                                 % (weights.dims,))
    if stride < 1 or padding < 0 or groups < 1:
        raise ConfigurationError(
            "invalid geometry stride=%r padding=%r groups=%r"
            % (stride, padding, groups))
    if in_ch % groups or out_ch % groups:
        raise ConfigurationError(
            "channels in=%d out=%d not divisible by groups=%d"
            % (in_ch, out_ch, groups))
    if group_ch != in_ch // groups:
        raise ConfigurationError(
            "weights %r do not match input %r with groups=%d"
            % (weights.dims, input.dims, groups))
    if height + 2 * padding < k or width + 2 * padding < k:
        raise ConfigurationError(
            "kernel %d larger than padded input %r" % (k, input.dims))
    windows = _windows(input.array, k, stride, padding)
    out_h, out_w = windows.shape[2], windows.shape[3]
    w = weights.array
    if groups == 1:
        out = numpy.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2)
    else:
        grouped = windows.reshape(
            batch, groups, group_ch, out_h, out_w, k, k)
        gw = w.reshape(groups, out_ch // groups, group_ch, k, k)
        out = numpy.einsum('bgchwij,gocij->bgohw', grouped, gw)
        out = out.reshape(batch, out_ch, out_h, out_w)
    if bias is not None:
        out = out + _as_vector(bias, out_ch, 'bias')[None, :, None, None]
    return Tensor._wrap(out)


def conv2d_transposed(input, weights, bias=None, stride=1, padding=0):
    """Transposed convolution (the gradient of conv2d w.r.t. its input).

    :param weights: (C_in, C_out, k, k) tensor.
    :return: spatial size (H - 1) * stride - 2 * padding + k.
    """
    batch, in_ch, height, width = input.dims
    w_in, out_ch, k, k2 = weights.dims
    if w_in != in_ch or k != k2:
        raise ConfigurationError(
            "weights %r do not match input %r" % (weights.dims, input.dims))
    if stride < 1 or padding < 0:
        raise ConfigurationError(
            "invalid geometry stride=%r padding=%r" % (stride, padding))
    out_h = (height - 1) * stride - 2 * padding + k
    out_w = (width - 1) * stride - 2 * padding + k
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(
            "padding %d leaves no output for input %r"
            % (padding, input.dims))
    full_h = (height - 1) * stride + k
    full_w = (width - 1) * stride + k
    x = input.array
    w = weights.array
    full = numpy.zeros((batch, out_ch, full_h, full_w), dtype=DTYPE)
    for i in range(k):
        for j in range(k):
            contrib = numpy.tensordot(x, w[:, :, i, j], axes=([1], [0]))
            full[:, :, i:i + (height - 1) * stride + 1:stride,
                 j:j + (width - 1) * stride + 1:stride] += (
                contrib.transpose(0, 3, 1, 2))
    out = full[:, :, padding:padding + out_h, padding:padding + out_w]
    if bias is not None:
        out = out + _as_vector(bias, out_ch, 'bias')[None, :, None, None]
    return Tensor._wrap(out)


def batchnorm_inference(input, mean, variance, gamma, beta, epsilon=1e-5):
    """Per-channel gamma * (x - mean) / sqrt(variance + epsilon) + beta."""
    channels = input.dims[1]
    mean = _as_vector(mean, channels, 'mean')
    variance = _as_vector(variance, channels, 'variance')
    gamma = _as_vector(gamma, channels, 'gamma')
    beta = _as_vector(beta, channels, 'beta')
    if (variance < 0).any():
        raise ConfigurationError("variance must be non-negative")
    scale = gamma / numpy.sqrt(variance + DTYPE.type(epsilon))
    out = ((input.array - mean[None, :, None, None]) *
           scale[None, :, None, None] + beta[None, :, None, None])
    return Tensor._wrap(out)


def _sigmoid(x):
    # exp of the negative magnitude never overflows.
    e = numpy.exp(-numpy.abs(x))
    return numpy.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(DTYPE)


def activation(input, kind):
    """Apply relu (max(x, 0)), swish (x * sigmoid(x)) or sigmoid."""
    x = input.array
    if kind == RELU:
        return Tensor._wrap(numpy.maximum(x, 0))
    if kind == SWISH:
        return Tensor._wrap(x * _sigmoid(x))
    if kind == SIGMOID:
        return Tensor._wrap(_sigmoid(x))
    raise ConfigurationError("unknown activation %r" % (kind,))


def upsample_nearest(input, factor):
    """Replicate every value into a factor x factor block."""
    if factor < 1:
        raise ConfigurationError("upsample factor must be >= 1")
    if factor == 1:
        return input
    x = input.array.repeat(factor, axis=2).repeat(factor, axis=3)
    return Tensor._wrap(x)


def maxpool_window(input, window):
    """Stride 1 max over an odd window; borders are padded with -inf."""
    if window < 1 or window % 2 == 0:
        raise ConfigurationError(
            "maxpool window must be odd and >= 1, got %r" % (window,))
    if window == 1:
        return input
    windows = _windows(input.array, window, 1, window // 2, fill=-numpy.inf)
    return Tensor._wrap(windows.max(axis=(4, 5)))


def elementwise_add(a, b):
    if a.dims != b.dims:
        raise ShapeError("cannot add %r and %r" % (a.dims, b.dims), 'add')
    return Tensor._wrap(a.array + b.array)


def concat_channels(tensors):
    """Concatenate along channels, preserving order."""
    tensors = list(tensors)
    if not tensors:
        raise ConfigurationError("nothing to concatenate")
    first = tensors[0].dims
    for t in tensors[1:]:
        if (t.dims[0], t.dims[2], t.dims[3]) != (first[0], first[2], first[3]):
            raise ShapeError("cannot concatenate %r with %r"
                             % (t.dims, first), 'concat')
    return Tensor._wrap(
        numpy.concatenate([t.array for t in tensors], axis=1))


def slice_channels(input, start, stop):
    """Channels [start, stop) of input."""
    if not 0 <= start < stop <= input.dims[1]:
        raise ConfigurationError("channel slice %d:%d outside %r"
                                 % (start, stop, input.dims))
    return Tensor._wrap(input.array[:, start:stop])


def scale_channels(input, scale):
    """Multiply each channel map by a per-channel (B, C, 1, 1) gate."""
    if scale.dims != input.dims[:2] + (1, 1):
        raise ShapeError("gate %r does not match %r"
                         % (scale.dims, input.dims), 'scale')
    return Tensor._wrap(input.array * scale.array)


def global_avg_pool(input):
    return Tensor._wrap(input.array.mean(axis=(2, 3), keepdims=True))


def dense(input, weights, bias=None):
    """Fully connected layer on a (B, C_in, 1, 1) tensor.

    :param weights: (C_out, C_in, 1, 1) tensor.
    """
    if input.dims[2:] != (1, 1):
        raise ShapeError("dense input must be 1x1, got %r"
                         % (input.dims,), 'dense')
    return conv2d(input, weights, bias)


def resize_nearest(input, height, width):
    """Nearest-neighbour resize to (height, width).

    Output row i reads input row i * H // height, so an integral upscale
    matches `upsample_nearest` exactly.
    """
    if height < 1 or width < 1:
        raise ConfigurationError("cannot resize to %dx%d" % (height, width))
    _, _, in_h, in_w = input.dims
    if (in_h, in_w) == (height, width):
        return input
    rows = numpy.arange(height) * in_h // height
    cols = numpy.arange(width) * in_w // width
    return Tensor._wrap(input.array[:, :, rows][:, :, :, cols])
