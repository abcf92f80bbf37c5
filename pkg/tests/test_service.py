import json

import numpy as np
import pytest
from starlette.testclient import TestClient

from wavecast import RenderOptions, render_passes
from wavecast.service import Frame, FrameOutbox, create_app, encode_frame, parse_frame
from wavecast.traversal import Camera


def _camera_msg(dims, iso, w, h, speculation=True):
    center = [(d - 1) / 2 for d in dims]
    eye = [center[0], center[1], center[2] + 1.8 * max(dims)]
    return {
        "type": "set_view",
        "camera": {"eye": eye, "look_at": center, "up": [0, 1, 0], "fov_y": 45.0},
        "iso": iso,
        "width": w,
        "height": h,
        "speculation": speculation,
    }


@pytest.fixture(scope="module")
def app(request):
    import wavecast as wc

    vol = wc.synthesize("sphere", (32, 32, 32))
    cv = wc.compress_volume(vol, 16)
    grids = wc.build_grids(cv)
    return create_app(cv, grids), cv, grids


def _collect_generation(ws, generation=None):
    """Receive frames until a final frame of the wanted generation arrives."""
    frames = []
    while True:
        data = ws.receive_bytes()
        f = parse_frame(data)
        frames.append(f)
        if f["final"] and (generation is None or f["generation"] == generation):
            return frames


def test_info_request(app):
    service, cv, _ = app
    client = TestClient(service)
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "info_request"}))
        info = json.loads(ws.receive_text())
    assert info["type"] == "info"
    assert info["dims"] == [32, 32, 32]
    lo, hi = info["value_range"]
    assert lo < 10.0 < hi


def test_frame_stream_matches_direct_render(app):
    service, cv, grids = app
    client = TestClient(service)
    msg = _camera_msg(cv.dims, 10.0, 40, 30)
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps(msg))
        frames = _collect_generation(ws)

    cam = Camera.look_at(msg["camera"]["eye"], msg["camera"]["look_at"], fov_y=45.0)
    expected = list(render_passes(cv, grids, cam, 10.0, RenderOptions(width=40, height=30)))
    assert len(frames) == len(expected)
    for f, (snap, stats) in zip(frames, expected):
        assert f["generation"] == 1
        assert f["pass_index"] == stats.pass_index
        assert f["width"] == 40 and f["height"] == 30
        assert f["completeness"] == pytest.approx(stats.completeness, abs=1e-7)
        assert f["rgba"] == snap.rgba.tobytes()
    assert frames[-1]["final"]
    assert frames[-1]["n_active"] == 0
    passes = [f["pass_index"] for f in frames]
    assert passes == sorted(passes)


def test_iso_outside_range_single_complete_frame(app):
    service, cv, _ = app
    client = TestClient(service)
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps(_camera_msg(cv.dims, 5000.0, 16, 16)))
        frames = _collect_generation(ws)
    assert len(frames) == 1
    assert frames[0]["final"] and frames[0]["completeness"] == 1.0


def test_rapid_set_view_generation_switch(app):
    service, cv, _ = app
    client = TestClient(service)
    with client.websocket_connect("/ws") as ws:
        # big slow render without speculation, then an immediate replacement
        ws.send_text(json.dumps(_camera_msg(cv.dims, 10.0, 96, 96, speculation=False)))
        ws.send_text(json.dumps(_camera_msg(cv.dims, 12.0, 24, 24)))
        frames = _collect_generation(ws, generation=2)
    seen_gen2 = False
    for f in frames:
        if f["generation"] == 2:
            seen_gen2 = True
        if seen_gen2:
            assert f["generation"] == 2, "older generation after newer frames"
    gen2 = [f for f in frames if f["generation"] == 2]
    assert gen2[0]["pass_index"] == 0
    assert gen2[-1]["final"]


def test_malformed_messages_keep_connection(app):
    service, cv, _ = app
    client = TestClient(service)
    with client.websocket_connect("/ws") as ws:
        ws.send_text("{not json")
        err = json.loads(ws.receive_text())
        assert err["type"] == "error" and err["code"] == "bad_json"
        ws.send_text(json.dumps({"type": "mystery"}))
        err = json.loads(ws.receive_text())
        assert err["code"] == "unknown_type"
        ws.send_text(json.dumps({"type": "set_view", "iso": 1.0}))
        err = json.loads(ws.receive_text())
        assert err["code"] == "bad_set_view" and err["reason"]
        # still alive
        ws.send_text(json.dumps({"type": "info_request"}))
        assert json.loads(ws.receive_text())["type"] == "info"


def test_frame_codec_round_trip():
    rgba = bytes(range(4)) * 6
    data = encode_frame(3, 7, True, 2, 3, 11, 0.5, rgba)
    f = parse_frame(data)
    assert f["generation"] == 3 and f["pass_index"] == 7
    assert f["final"] and f["width"] == 2 and f["height"] == 3
    assert f["n_active"] == 11 and f["completeness"] == 0.5
    assert f["rgba"] == rgba
    with pytest.raises(ValueError):
        parse_frame(data[:10])
    with pytest.raises(ValueError):
        parse_frame(b"\x00" * len(data))


def _mk(gen, idx, final=False):
    return Frame(generation=gen, pass_index=idx, final=final, payload=b"")


def test_outbox_backpressure_drops_oldest_nonfinal():
    box = FrameOutbox(max_pending=3)
    for i in range(5):
        box.push(_mk(1, i))
    assert len(box) == 3
    got = [box.pop(1).pass_index for _ in range(3)]
    assert got == [2, 3, 4]  # oldest non-final dropped, order preserved


def test_outbox_never_drops_final():
    box = FrameOutbox(max_pending=2)
    box.push(_mk(1, 0, final=True))
    box.push(_mk(1, 1))
    box.push(_mk(1, 2))
    box.push(_mk(1, 3))
    kept = []
    while True:
        f = box.pop(1)
        if f is None:
            break
        kept.append((f.pass_index, f.final))
    assert (0, True) in kept


def test_outbox_purges_stale_generations():
    box = FrameOutbox(max_pending=8)
    box.push(_mk(1, 0))
    box.push(_mk(1, 1, final=True))
    box.push(_mk(2, 0))
    frames = []
    while True:
        f = box.pop(2)
        if f is None:
            break
        frames.append(f)
    assert [f.generation for f in frames] == [2]


def test_outbox_pop_respects_current_generation():
    box = FrameOutbox(max_pending=8)
    box.push(_mk(1, 0))
    box.push(_mk(1, 1))
    assert box.pop(2) is None
