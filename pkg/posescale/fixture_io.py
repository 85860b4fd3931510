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

"""Fixture files: bit-exact tensors, keypoint annotations and poses.

TensorFile layout (all little-endian)::

    offset 0   magic   4 bytes  b'HRT1'
    offset 4   dtype   1 byte   0 = float32
    offset 5   rank    1 byte
    offset 6   dims    rank x uint32
    then       payload product(dims) x float32, row-major

Annotation and pose documents are JSON objects carrying a "version" field.
"""

import collections
import functools
import json
import logging
import operator
import struct

import numpy

from posescale import decoder
from posescale.errors import AnnotationError, TensorFormatError
from posescale.head import JOINT_COUNT
from posescale.tensor import Tensor

LOG = logging.getLogger(__name__)

MAGIC = b'HRT1'
DTYPE_FLOAT32 = 0
TENSOR_RANK = 4
DOCUMENT_VERSION = 1
_PAYLOAD = numpy.dtype('<f4')
_DIM = numpy.dtype('<u4')


def encode_tensor(tensor):
    dims = tuple(tensor.dims)
    header = MAGIC + struct.pack('<BB', DTYPE_FLOAT32, len(dims))
    header += numpy.asarray(dims, dtype=_DIM).tobytes()
    return header + tensor.array.astype(_PAYLOAD).tobytes()


def decode_tensor(content):
    """Decode TensorFile bytes.

    :raises TensorFormatError: with the byte offset of the first problem.
    """
    if len(content) < 6:
        raise TensorFormatError("file too short for a header (%d bytes)"
                                % len(content), len(content))
    if content[:4] != MAGIC:
        raise TensorFormatError("bad magic %r, expected %r"
                                % (bytes(content[:4]), MAGIC), 0)
    dtype, rank = struct.unpack('<BB', content[4:6])
    if dtype != DTYPE_FLOAT32:
        raise TensorFormatError("unsupported dtype code %d" % dtype, 4)
    if rank != TENSOR_RANK:
        raise TensorFormatError("rank %d tensors are not supported, "
                                "expected %d" % (rank, TENSOR_RANK), 5)
    payload_start = 6 + 4 * rank
    if len(content) < payload_start:
        raise TensorFormatError("truncated dims", len(content))
    dims = tuple(int(d) for d in
                 numpy.frombuffer(content, dtype=_DIM, count=rank, offset=6))
    if 0 in dims:
        raise TensorFormatError("zero dimension in %r" % (dims,), 6)
    expected = 4 * functools.reduce(operator.mul, dims, 1)
    actual = len(content) - payload_start
    if actual != expected:
        raise TensorFormatError(
            "payload is %d bytes, dims %r need %d" % (actual, dims, expected),
            payload_start + min(actual, expected))
    values = numpy.frombuffer(content, dtype=_PAYLOAD, offset=payload_start)
    return Tensor(values.reshape(dims))


def write_tensor(tensor, path):
    with open(path, 'wb') as stream:
        stream.write(encode_tensor(tensor))
    LOG.debug("wrote tensor %r to %s", tensor.dims, path)


def read_tensor(path):
    with open(path, 'rb') as stream:
        tensor = decode_tensor(stream.read())
    LOG.debug("read tensor %r from %s", tensor.dims, path)
    return tensor


AnnotatedKeypoint = collections.namedtuple('AnnotatedKeypoint',
                                           ['x', 'y', 'visible'])


class AnnotationDoc(collections.namedtuple('AnnotationDoc', [
        'image_size', 'persons'])):
    """Keypoint annotations for one image.

    :ivar image_size: (width, height) in pixels.
    :ivar persons: Per person, 17 entries each None or an
        `AnnotatedKeypoint`.
    """

    __slots__ = ()

    def keypoints(self):
        """Visible keypoints as make_targets takes them."""
        return [[(k.x, k.y) if k is not None and k.visible else None
                 for k in person] for person in self.persons]

    def to_record(self):
        return collections.OrderedDict([
            ('version', DOCUMENT_VERSION),
            ('image_size', list(self.image_size)),
            ('persons', [collections.OrderedDict([
                ('keypoints', [None if k is None else
                               [k.x, k.y, bool(k.visible)]
                               for k in person])])
                for person in self.persons]),
        ])


def _load(path):
    with open(path, 'r') as stream:
        try:
            document = json.load(stream)
        except ValueError as e:
            raise AnnotationError("not a JSON document: %s" % e, path)
    if not isinstance(document, dict):
        raise AnnotationError("expected an object", path)
    version = document.get('version', DOCUMENT_VERSION)
    if version != DOCUMENT_VERSION:
        raise AnnotationError("unsupported version %r" % (version,),
                              'version')
    return document


def _number(value, location):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise AnnotationError("expected a number, got %r" % (value,),
                              location)
    return value


def _list(document, key, location):
    value = document.get(key)
    if not isinstance(value, list):
        raise AnnotationError("expected a list", location)
    return value


def annotations_from_record(document):
    """Validate and convert a decoded annotation document.

    :raises AnnotationError: naming the location of the first problem.
    """
    size = document.get('image_size')
    if (not isinstance(size, list) or len(size) != 2 or
            any(_number(v, 'image_size') <= 0 for v in size)):
        raise AnnotationError("expected [width, height]", 'image_size')
    width, height = size
    persons = []
    for p, person in enumerate(_list(document, 'persons', 'persons')):
        where = 'persons[%d]' % p
        if not isinstance(person, dict):
            raise AnnotationError("expected an object", where)
        entries = _list(person, 'keypoints', where + '.keypoints')
        if len(entries) != JOINT_COUNT:
            raise AnnotationError("expected %d keypoints, got %d"
                                  % (JOINT_COUNT, len(entries)),
                                  where + '.keypoints')
        keypoints = []
        for j, entry in enumerate(entries):
            at = '%s.keypoints[%d]' % (where, j)
            if entry is None:
                keypoints.append(None)
                continue
            if not isinstance(entry, list) or len(entry) != 3:
                raise AnnotationError("expected [x, y, visible]", at)
            x, y = _number(entry[0], at), _number(entry[1], at)
            visible = entry[2]
            if not isinstance(visible, bool):
                raise AnnotationError("visible must be true or false", at)
            if visible and not (0 <= x < width and 0 <= y < height):
                raise AnnotationError(
                    "keypoint (%r, %r) outside %dx%d image"
                    % (x, y, width, height), at)
            keypoints.append(AnnotatedKeypoint(x, y, visible))
        persons.append(tuple(keypoints))
    return AnnotationDoc(image_size=(width, height), persons=tuple(persons))


def read_annotations(path):
    doc = annotations_from_record(_load(path))
    LOG.debug("read %d annotated persons from %s", len(doc.persons), path)
    return doc


def write_annotations(doc, path):
    # validates before anything is written
    annotations_from_record(doc.to_record())
    _dump(doc.to_record(), path)


def poses_from_record(document):
    persons = []
    for p, person in enumerate(_list(document, 'persons', 'persons')):
        where = 'persons[%d]' % p
        if not isinstance(person, dict):
            raise AnnotationError("expected an object", where)
        keypoints = []
        seen = set()
        for k, entry in enumerate(_list(person, 'keypoints',
                                        where + '.keypoints')):
            at = '%s.keypoints[%d]' % (where, k)
            if not isinstance(entry, dict):
                raise AnnotationError("expected an object", at)
            try:
                joint = entry['joint_id']
                values = [_number(entry[key], at)
                          for key in ('x', 'y', 'score')]
            except KeyError as e:
                raise AnnotationError("missing field %s" % e, at)
            if (isinstance(joint, bool) or not isinstance(joint, int) or
                    not 0 <= joint < JOINT_COUNT):
                raise AnnotationError("bad joint_id %r" % (joint,), at)
            if joint in seen:
                raise AnnotationError("joint %d repeated" % joint, at)
            seen.add(joint)
            tag = tuple(_number(v, at) for v in entry.get('tag', ()))
            keypoints.append(decoder.Keypoint(joint, values[0], values[1],
                                              values[2], tag))
        score = _number(person.get('score', 0.0), where + '.score')
        persons.append(decoder.Person(
            keypoints=tuple(sorted(keypoints, key=lambda k: k.joint_id)),
            score=score))
    return decoder.PoseSet(persons=tuple(persons))


def write_poses(poses, path):
    _dump(poses.to_record(), path)
    LOG.debug("wrote %d persons to %s", len(poses), path)


def read_poses(path):
    return poses_from_record(_load(path))


def _dump(record, path):
    with open(path, 'w') as stream:
        json.dump(record, stream, indent=2)
        stream.write('\n')
