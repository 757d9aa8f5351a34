"""Glove frame wire codec.

One frame carries a single 20 ms transmission from one glove: the hand,
a sequence counter, a session-relative timestamp, and the 12 sensor
amplitudes in millivolts. Frames are fixed-length (41 octets) and
self-delimiting on a byte stream:

    magic 0xA5 (1) | version 0x01 (1) | hand (1) | seq u32 (4) |
    timestamp_ms u64 (8) | 12 x amplitude u16 (24) |
    CRC-16/CCITT-FALSE over the preceding 39 octets (2)

All multi-byte fields are little-endian. Fixed length, leading magic and
the trailing CRC allow a receiver to resynchronize after corruption
without any extra framing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

FRAME_MAGIC = 0xA5
FRAME_VERSION = 0x01
FRAME_SIZE = 41
CRC_OFFSET = 39  # CRC covers bytes [0, CRC_OFFSET)
SENSOR_COUNT = 12
AMPLITUDE_MAX = 0xFFFF
NOMINAL_INTERVAL_MS = 20
FRAMES_PER_SECOND = 1000 // NOMINAL_INTERVAL_MS

_BODY = struct.Struct("<BBBIQ12H")
_CRC = struct.Struct("<H")
assert _BODY.size == CRC_OFFSET and _BODY.size + _CRC.size == FRAME_SIZE


class Hand(IntEnum):
    """Which glove a frame or recording belongs to. Wire value is one octet."""

    LEFT = 0
    RIGHT = 1


SENSOR_LABELS = {
    1: "distal phalanx, thumb",
    2: "distal phalanx, index finger",
    3: "distal phalanx, middle finger",
    4: "distal phalanx, ring finger",
    5: "distal phalanx, small finger",
    6: "middle phalanx, ring finger",
    7: "middle phalanx, small finger",
    8: "proximal phalanx, index finger",
    9: "proximal phalanx, middle finger",
    10: "palm, thenar eminence",
    11: "palm, hypothenar eminence",
    12: "palm, center",
}


@dataclass(frozen=True)
class SensorId:
    """One of the 12 force-sensor locations of a glove, indexed 1..12."""

    index: int
    label: str

    def __post_init__(self):
        if not 1 <= self.index <= SENSOR_COUNT:
            raise ValueError(f"sensor index must be in 1..{SENSOR_COUNT}, got {self.index}")

    @classmethod
    def of(cls, index: int) -> "SensorId":
        return cls(index, SENSOR_LABELS.get(index, ""))


SENSORS = tuple(SensorId.of(i) for i in range(1, SENSOR_COUNT + 1))


class FrameError(ValueError):
    """A byte buffer that cannot be decoded as a glove frame."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class Truncated(FrameError):
    """Buffer length differs from the fixed 41-octet frame size."""


class BadMagic(FrameError):
    """First octet is not the frame magic 0xA5."""


class UnsupportedVersion(FrameError):
    """Well-formed frame with a protocol version this codec does not speak."""


class CrcMismatch(FrameError):
    """Checksum failure; the frame was corrupted in transit."""


class EmptyStream(ValueError):
    """Fewer frames than an operation needs."""


@dataclass(frozen=True)
class GloveFrame:
    """One 20 ms transmission from one glove.

    ``amplitudes`` holds the 12 sensor readings in mV, indexed by
    ``SensorId.index - 1``. ``timestamp_ms`` is milliseconds since
    session start.
    """

    hand: Hand
    seq: int
    timestamp_ms: int
    amplitudes: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.hand, Hand):
            object.__setattr__(self, "hand", Hand(self.hand))
        if not 0 <= self.seq <= 0xFFFFFFFF:
            raise ValueError(f"seq out of u32 range: {self.seq}")
        if not 0 <= self.timestamp_ms <= 0xFFFFFFFFFFFFFFFF:
            raise ValueError(f"timestamp_ms out of u64 range: {self.timestamp_ms}")
        if not isinstance(self.amplitudes, tuple):
            object.__setattr__(self, "amplitudes", tuple(self.amplitudes))
        if len(self.amplitudes) != SENSOR_COUNT:
            raise ValueError(f"expected {SENSOR_COUNT} amplitudes, got {len(self.amplitudes)}")
        for i, a in enumerate(self.amplitudes):
            if not 0 <= a <= AMPLITUDE_MAX:
                raise ValueError(f"amplitude s{i + 1} out of u16 range: {a}")

    def amplitude(self, sensor: int | SensorId) -> int:
        """Reading of one sensor (1-based index or SensorId), in mV."""
        index = sensor.index if isinstance(sensor, SensorId) else sensor
        if not 1 <= index <= SENSOR_COUNT:
            raise ValueError(f"sensor index must be in 1..{SENSOR_COUNT}, got {index}")
        return self.amplitudes[index - 1]


def _build_crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout."""
    crc = 0xFFFF
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ byte]
    return crc


def encode_frame(frame: GloveFrame) -> bytes:
    """Serialize a frame to its 41-octet wire form."""
    body = _BODY.pack(
        FRAME_MAGIC,
        FRAME_VERSION,
        int(frame.hand),
        frame.seq,
        frame.timestamp_ms,
        *frame.amplitudes,
    )
    return body + _CRC.pack(crc16(body))


def decode_frame(data: bytes) -> GloveFrame:
    """Parse one 41-octet buffer back into a GloveFrame.

    Raises Truncated, BadMagic, CrcMismatch or UnsupportedVersion; every
    error carries the offending byte offset.
    """
    if len(data) != FRAME_SIZE:
        raise Truncated(f"frame must be {FRAME_SIZE} octets, got {len(data)}", len(data))
    if data[0] != FRAME_MAGIC:
        raise BadMagic(f"expected magic 0x{FRAME_MAGIC:02X}, got 0x{data[0]:02X}", 0)
    expected = _CRC.unpack_from(data, CRC_OFFSET)[0]
    actual = crc16(data[:CRC_OFFSET])
    if actual != expected:
        raise CrcMismatch(f"crc 0x{actual:04X} != stored 0x{expected:04X}", CRC_OFFSET)
    if data[1] != FRAME_VERSION:
        raise UnsupportedVersion(f"protocol version {data[1]} not supported", 1)
    _, _, hand, seq, timestamp_ms, *amps = _BODY.unpack(data[:CRC_OFFSET])
    return GloveFrame(Hand(hand), seq, timestamp_ms, tuple(amps))


@dataclass(frozen=True)
class CadenceReport:
    """Deviations of a frame stream from the nominal 20 ms cadence."""

    nominal_ms: int
    tolerance_ms: float
    violations: tuple[tuple[int, int], ...]  # (seq of later frame, observed gap ms)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_cadence(frames, tolerance_ms: float = 0) -> CadenceReport:
    """Check inter-frame timestamp gaps against the 20 ms nominal spacing.

    Frames must be ordered by seq. Every adjacent pair whose gap deviates
    from the nominal spacing by more than ``tolerance_ms`` is reported.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise EmptyStream(f"cadence needs at least 2 frames, got {len(frames)}")
    if tolerance_ms < 0:
        raise ValueError("tolerance_ms must be >= 0")
    violations = []
    for prev, cur in zip(frames, frames[1:]):
        gap = cur.timestamp_ms - prev.timestamp_ms
        if abs(gap - NOMINAL_INTERVAL_MS) > tolerance_ms:
            violations.append((cur.seq, gap))
    return CadenceReport(NOMINAL_INTERVAL_MS, tolerance_ms, tuple(violations))
