import threading
import time

import pytest

from conftest import good_response, make_sample, scripted_gateway
from cotforge.gateway import (
    CacheMissError,
    EndpointConfig,
    Gateway,
    MockTransport,
    ReplayTransport,
    TransientError,
    TransportError,
    request_hash,
)
from cotforge.prompts import PREDICT, render


def test_two_timeouts_then_success(templates):
    gw, tr = scripted_gateway([TransientError("timeout"), TransientError("timeout"), good_response("positive")])
    out = gw.complete(render(make_sample(1), templates, PREDICT))
    assert "Sentiment: positive" in out
    assert len(tr.requests) == 3 and gw.stats.retries == 2


def test_gives_up_after_max_attempts(templates):
    gw, tr = scripted_gateway([TransientError("503")] * 5, max_attempts=3)
    with pytest.raises(TransportError):
        gw.complete(render(make_sample(1), templates, PREDICT))
    assert len(tr.requests) == 3


def test_backoff_grows_geometrically(templates):
    slept = []
    tr = MockTransport([TransientError("x"), TransientError("x"), "ok"])
    gw = Gateway(EndpointConfig(backoff_initial=0.5, backoff_multiplier=2.0), tr, sleep=slept.append)
    gw.complete(render(make_sample(1), templates, PREDICT))
    assert slept == [0.5, 1.0]


def test_in_flight_cap_holds_under_load(templates):
    active, peak = [0], [0]
    lock = threading.Lock()

    def slow(path, body):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.01)
        with lock:
            active[0] -= 1
        return good_response("neutral")

    gw = Gateway(EndpointConfig(max_in_flight=3), MockTransport(slow))
    prompt = render(make_sample(1), templates, PREDICT)
    threads = [threading.Thread(target=gw.complete, args=(prompt,)) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 3 and gw.stats.max_in_flight_seen <= 3 and gw.stats.requests == 16


def test_record_then_replay(tmp_path, templates):
    cfg = EndpointConfig()
    prompt = render(make_sample(1), templates, PREDICT)
    live = Gateway(cfg, MockTransport(lambda p, b: good_response("negative")), tmp_path)
    first = live.complete(prompt)
    replay = Gateway(cfg, ReplayTransport(), tmp_path)
    assert replay.complete(prompt) == first
    assert replay.stats.requests == 0 and replay.stats.cache_hits == 1
    with pytest.raises(CacheMissError):
        replay.complete(prompt, seed=99)


def test_replay_needs_cache_dir():
    with pytest.raises(TransportError):
        Gateway(EndpointConfig(), ReplayTransport())


def test_request_hash_is_canonical():
    assert request_hash("/x", {"a": 1, "b": [1, 2]}) == request_hash("/x", {"b": [1, 2], "a": 1})
    assert request_hash("/x", {"a": 1}) != request_hash("/y", {"a": 1})


def test_embeddings():
    gw = Gateway(EndpointConfig(), MockTransport(lambda p, b: [[1.0, 0.0]] * len(b["input"])))
    assert gw.embed(["a", "b"]) == [[1.0, 0.0], [1.0, 0.0]]
    bad = Gateway(EndpointConfig(), MockTransport(lambda p, b: [[1.0]]))
    with pytest.raises(TransportError):
        bad.embed(["a", "b"])


def test_config_validation():
    with pytest.raises(ValueError):
        EndpointConfig(max_in_flight=0)
    with pytest.raises(ValueError):
        EndpointConfig.from_dict({"bogus": 1})
