import numpy as np
import pytest

from llmo.agents import AgentContext, HttpLlmAgent, HttpLlmAgentConfig, http_generate
from llmo.errors import AgentFailure, ApiFailure, TransportFailure
from llmo.population import Box, Population


@pytest.fixture
def key(monkeypatch):
    monkeypatch.setenv("LLMO_TEST_KEY", "sk-test")
    return "LLMO_TEST_KEY"


def cfg(stub, key, **kw):
    kw.setdefault("backoff", 0.0)
    return HttpLlmAgentConfig(stub.url, "stub-model", api_key_env=key, **kw)


def test_success_and_wire_format(stub, key):
    stub.script.append((200, "0.1,0.2", 0.0))
    out = http_generate(cfg(stub, key, temperature=0.7), "hello")
    assert out.text == "0.1,0.2" and out.retries == 0
    req = stub.requests[0]
    assert req["path"] == "/v1/chat/completions"
    assert req["auth"] == "Bearer sk-test"
    assert req["body"] == {"model": "stub-model", "messages": [{"role": "user", "content": "hello"}], "temperature": 0.7}


def test_retry_after_two_server_errors(stub, key):
    stub.script += [(500, None, 0.0), (500, None, 0.0), (200, "ok", 0.0)]
    out = http_generate(cfg(stub, key, retries=2), "p")
    assert out.text == "ok" and out.retries == 2
    assert [f.status for f in out.failures] == [500, 500]


def test_budget_exhausted_raises_api_failure(stub, key):
    stub.script += [(503, None, 0.0)] * 3
    with pytest.raises(ApiFailure) as info:
        http_generate(cfg(stub, key, retries=1), "p")
    assert info.value.status == 503 and info.value.attempts == 2


def test_timeout_on_all_attempts(stub, key):
    stub.script += [(200, "late", 1.0)] * 2
    with pytest.raises(TransportFailure) as info:
        http_generate(cfg(stub, key, retries=1, timeout=0.1), "p")
    assert info.value.attempts == 2


def test_connection_refused_is_transport_failure(key):
    c = HttpLlmAgentConfig("http://127.0.0.1:9", "m", api_key_env=key, retries=0, timeout=1.0)
    with pytest.raises(TransportFailure):
        http_generate(c, "p")


def test_missing_credential(stub, monkeypatch):
    monkeypatch.delenv("LLMO_ABSENT_KEY", raising=False)
    with pytest.raises(AgentFailure):
        http_generate(cfg(stub, "LLMO_ABSENT_KEY"), "p")
    assert not stub.requests


def test_agent_parses_stub_csv_into_population(stub, key):
    stub.script.append((200, "```\n100, 200\n300, 999\n```", 0.0))
    agent = HttpLlmAgent(cfg(stub, key))
    box = Box.uniform(2)
    ex = Population(np.array([[0.5, 0.5], [0.1, 0.2]]), np.array([1.0, 0.5]), box)
    out = agent.generate(ex, AgentContext(2, box, np.random.default_rng(0)))
    assert np.allclose(out.actions, np.array([[100, 200], [300, 999]]) / 999)
    prompt = stub.requests[0]["body"]["messages"][0]["content"]
    assert "In-context examples:" in prompt


def test_config_validation():
    with pytest.raises(ValueError):
        HttpLlmAgentConfig("http://x", "m", temperature=-1)
    with pytest.raises(ValueError):
        HttpLlmAgentConfig("http://x", "m", retries=-1)
