import math
import random
import socket
import threading

import pytest

from gripstream.ingest import (
    CSV_HEADER,
    FrameStreamDecoder,
    MalformedFile,
    SessionRecorder,
    detect_gaps,
    load_session,
    save_session,
)
from gripstream.protocol import FRAME_SIZE, GloveFrame, Hand, encode_frame
from gripstream.recording import EmptyRecording, Expertise, SessionRecording
from gripstream.simulator import SessionSpec, UserProfile, stream_session, synthesize_session
from oracles import random_recording


def make_recording(count=10, hand=Hand.LEFT, start_seq=0, user_id="u1",
                   expertise=Expertise.NOVICE, session_index=1, amps=None):
    frames = [
        GloveFrame(hand, start_seq + i, i * 20, tuple(amps or [7 * i % 65536] * 12))
        for i in range(count)
    ]
    return SessionRecording(user_id, expertise, session_index, hand, frames)


def synth(duration_s=8.88, seed=3, hand=Hand.LEFT):
    models = {i: ((150.0, 30.0),) * 4 for i in range(1, 13)}
    profile = UserProfile("sim", Expertise.EXPERT, models)
    return synthesize_session(
        SessionSpec(user=profile, hand=hand, session_index=1, duration_s=duration_s, seed=seed)
    )


def wire_bytes(recording) -> bytearray:
    return bytearray(b"".join(encode_frame(f) for f in recording.frames))


# --- stream decoder ----------------------------------------------------------


def test_decoder_plain_stream():
    recording = make_recording(25)
    decoder = FrameStreamDecoder()
    frames = decoder.feed(bytes(wire_bytes(recording)))
    assert frames == recording.frames
    assert decoder.errors == 0
    assert decoder.pending == 0


def test_decoder_arbitrary_chunking():
    recording = make_recording(40)
    payload = bytes(wire_bytes(recording))
    rng = random.Random(17)
    decoder = FrameStreamDecoder()
    frames = []
    pos = 0
    while pos < len(payload):
        step = rng.randrange(1, 97)
        frames.extend(decoder.feed(payload[pos:pos + step]))
        pos += step
    assert frames == recording.frames
    assert decoder.errors == 0


def test_decoder_crc_corruption_drops_exactly_one_frame():
    recording = make_recording(30)
    payload = wire_bytes(recording)
    payload[10 * FRAME_SIZE + FRAME_SIZE - 1] ^= 0xFF  # CRC byte of frame 10
    decoder = FrameStreamDecoder()
    frames = decoder.feed(bytes(payload))
    assert decoder.errors == 1
    assert [f.seq for f in frames] == [s for s in range(30) if s != 10]


def test_decoder_magic_corruption_resyncs():
    recording = make_recording(30)
    payload = wire_bytes(recording)
    payload[12 * FRAME_SIZE] ^= 0xFF  # magic byte of frame 12
    decoder = FrameStreamDecoder()
    frames = decoder.feed(bytes(payload))
    assert decoder.errors >= 1
    assert [f.seq for f in frames] == [s for s in range(30) if s != 12]


def test_decoder_random_corruption_loses_at_most_k_frames():
    rng = random.Random(2024)
    for _ in range(20):
        recording = make_recording(60, amps=[rng.randrange(65536)] * 12)
        payload = wire_bytes(recording)
        k = rng.randrange(1, 6)
        hit = rng.sample(range(60), k)
        for frame_idx in hit:
            bit = rng.randrange(FRAME_SIZE * 8)
            payload[frame_idx * FRAME_SIZE + bit // 8] ^= 1 << (bit % 8)
        decoder = FrameStreamDecoder()
        frames = decoder.feed(bytes(payload))
        kept = {f.seq for f in frames}
        assert kept.issuperset(set(range(60)) - set(hit))
        assert len(frames) >= 60 - k
        assert decoder.errors >= 1


# --- recording over sockets --------------------------------------------------


def start_recorder(**kwargs):
    defaults = dict(user_id="u1", expertise=Expertise.NOVICE, session_index=1, timeout=10.0)
    defaults.update(kwargs)
    recorder = SessionRecorder("127.0.0.1", 0, **defaults)
    holder = {}

    def target():
        holder["recordings"] = recorder.run()

    thread = threading.Thread(target=target, daemon=True)
    thread.start()
    return recorder, thread, holder


def send_raw(address, payload: bytes):
    with socket.create_connection(address, timeout=5) as sock:
        sock.sendall(payload)


def test_record_loopback_equivalence():
    original = synth()  # 444 frames
    recorder, thread, holder = start_recorder(
        user_id=original.user_id,
        expertise=original.expertise,
        session_index=original.session_index,
    )
    stream_session(original, recorder.address, speed=math.inf)
    thread.join(timeout=10)
    (received,) = holder["recordings"]
    assert received == original
    assert received.decode_errors == 0


def test_record_two_gloves_simultaneously():
    left = synth(duration_s=2.0, seed=1, hand=Hand.LEFT)
    right = synth(duration_s=2.0, seed=2, hand=Hand.RIGHT)
    recorder, thread, holder = start_recorder(user_id="sim", expertise=Expertise.EXPERT,
                                              connections=2)
    senders = [
        threading.Thread(target=stream_session, args=(rec, recorder.address, 200.0))
        for rec in (left, right)
    ]
    for s in senders:
        s.start()
    for s in senders:
        s.join(timeout=10)
    thread.join(timeout=10)
    recordings = holder["recordings"]
    assert len(recordings) == 2
    by_hand = {rec.hand: rec for rec in recordings}
    assert by_hand[Hand.LEFT] == left
    assert by_hand[Hand.RIGHT] == right


def test_record_tallies_corrupt_frame():
    original = synth()  # 444 frames
    payload = wire_bytes(original)
    payload[200 * FRAME_SIZE + FRAME_SIZE - 1] ^= 0x01
    recorder, thread, holder = start_recorder()
    send_raw(recorder.address, bytes(payload))
    thread.join(timeout=10)
    (received,) = holder["recordings"]
    assert len(received.frames) == 443
    assert received.decode_errors == 1


def test_bind_failure_on_taken_port():
    from gripstream.ingest import BindFailure

    taken = socket.create_server(("127.0.0.1", 0))
    port = taken.getsockname()[1]
    try:
        with pytest.raises(BindFailure):
            SessionRecorder("127.0.0.1", port, user_id="u", expertise=Expertise.NOVICE,
                            session_index=1)
    finally:
        taken.close()


def test_record_drops_out_of_order_frames():
    hand = Hand.LEFT
    frames = [GloveFrame(hand, s, t, (5,) * 12)
              for s, t in ((0, 0), (1, 20), (5, 100), (3, 60), (6, 120))]
    payload = b"".join(encode_frame(f) for f in frames)
    recorder, thread, holder = start_recorder()
    send_raw(recorder.address, payload)
    thread.join(timeout=10)
    (received,) = holder["recordings"]
    assert [f.seq for f in received.frames] == [0, 1, 5, 6]
    assert received.dropped_frames == 1


# --- gap detection -----------------------------------------------------------


def test_detect_gaps_complete_stream():
    report = detect_gaps(make_recording(444))
    assert report.gaps == ()
    assert report.expected_frames == 444
    assert report.received_frames == 444
    assert report.missing == 0


def test_detect_gaps_constructed_hole():
    frames = [GloveFrame(Hand.LEFT, s, s * 20, (0,) * 12) for s in (0, 1, 2, 5, 6)]
    recording = SessionRecording("u", Expertise.NOVICE, 1, Hand.LEFT, frames)
    report = detect_gaps(recording)
    assert report.gaps == ((2, 2),)
    assert report.expected_frames == 7
    assert report.received_frames == 5


def test_detect_gaps_random_drop_accounts_for_everything():
    rng = random.Random(99)
    keep = sorted(set(rng.sample(range(1, 999), 900)) | {0, 999})
    frames = [GloveFrame(Hand.LEFT, s, s * 20, (0,) * 12) for s in keep]
    recording = SessionRecording("u", Expertise.NOVICE, 1, Hand.LEFT, frames)
    report = detect_gaps(recording)
    assert report.expected_frames == 1000
    assert report.received_frames + report.missing == 1000
    assert report.missing == 1000 - len(keep)


def test_detect_gaps_empty_recording():
    recording = SessionRecording("u", Expertise.NOVICE, 1, Hand.LEFT, [])
    with pytest.raises(EmptyRecording):
        detect_gaps(recording)


# --- persistence -------------------------------------------------------------


def test_round_trip_both_formats(tmp_path):
    original = synth()
    for fmt, name in (("binary", "r.bin"), ("csv", "r.csv")):
        path = tmp_path / name
        save_session(original, path, format=fmt)
        assert load_session(path) == original


def test_round_trip_randomized_recordings(tmp_path):
    rng = random.Random(5150)
    for i in range(20):
        recording = random_recording(rng)
        for fmt in ("binary", "csv"):
            path = tmp_path / f"r{i}.{fmt}"
            save_session(recording, path, format=fmt)
            assert load_session(path) == recording


def test_round_trip_empty_recording_binary(tmp_path):
    recording = SessionRecording("u", Expertise.TRAINED, 2, Hand.RIGHT, [])
    path = tmp_path / "empty.bin"
    save_session(recording, path, format="binary")
    assert load_session(path) == recording


def test_csv_single_frame_layout(tmp_path):
    recording = make_recording(1, amps=None)
    recording.frames[0] = GloveFrame(Hand.LEFT, 0, 0, tuple(range(1, 13)))
    path = tmp_path / "one.csv"
    save_session(recording, path, format="csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    assert lines[0] == CSV_HEADER
    row = lines[1].split(",")
    assert row[lines[0].split(",").index("s7")] == "7"


def test_binary_truncation_sweep(tmp_path):
    recording = make_recording(2, user_id="ab")
    path = tmp_path / "t.bin"
    save_session(recording, path, format="binary")
    blob = path.read_bytes()
    for cut in range(len(blob)):
        (tmp_path / "cut.bin").write_bytes(blob[:cut])
        with pytest.raises(MalformedFile):
            load_session(tmp_path / "cut.bin")


def test_binary_rejects_trailing_garbage_and_corruption(tmp_path):
    recording = make_recording(2)
    path = tmp_path / "t.bin"
    save_session(recording, path, format="binary")
    blob = bytearray(path.read_bytes())
    path.write_bytes(bytes(blob) + b"x")
    with pytest.raises(MalformedFile):
        load_session(path)
    blob[-1] ^= 0x40  # inside the last frame's CRC
    path.write_bytes(bytes(blob))
    with pytest.raises(MalformedFile) as exc:
        load_session(path)
    assert exc.value.offset is not None


def test_csv_header_must_match_exactly(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(CSV_HEADER.replace("s7", "sense7") + "\n", encoding="utf-8")
    with pytest.raises(MalformedFile) as exc:
        load_session(path)
    assert exc.value.line == 1


def test_csv_diagnostics_carry_line_and_column(tmp_path):
    recording = make_recording(3)
    path = tmp_path / "r.csv"
    save_session(recording, path, format="csv")
    lines = path.read_text(encoding="utf-8").splitlines()

    broken = lines[:2] + [lines[2].replace("u1", "u2", 1)] + lines[3:]
    path.write_text("\n".join(broken) + "\n", encoding="utf-8")
    with pytest.raises(MalformedFile, match="metadata"):
        load_session(path)

    row = lines[1].split(",")
    row[4] = "abc"  # seq
    path.write_text("\n".join([lines[0], ",".join(row)]) + "\n", encoding="utf-8")
    with pytest.raises(MalformedFile) as exc:
        load_session(path)
    assert exc.value.line == 2
    assert exc.value.column == "seq"

    path.write_text("\n".join([lines[0], lines[2], lines[1]]) + "\n", encoding="utf-8")
    with pytest.raises(MalformedFile, match="not increasing"):
        load_session(path)

    path.write_text(lines[0] + "\n", encoding="utf-8")
    with pytest.raises(MalformedFile, match="no data rows"):
        load_session(path)
