import pytest

from zagii.errors import (
    BackendUnavailable,
    InvalidRequest,
    ScriptExhausted,
    UnconfiguredTier,
)
from zagii.llm_gateway import (
    CompletionRequest,
    Gateway,
    ScriptedBackend,
    ScriptEntry,
    load_script_file,
    load_tiered_scripts,
    normalize_prompt,
    prompt_hash,
)


def _req(prompt="hello", role="thinking", **kwargs):
    return CompletionRequest(role_tag=role, prompt=prompt, **kwargs)


def test_ordered_script_replay():
    backend = ScriptedBackend("b", [ScriptEntry("ordered", "Hello, adventurer.")])
    gateway = Gateway(light=backend)
    assert gateway.complete(_req()).text == "Hello, adventurer."


def test_ordered_script_exhaustion():
    gateway = Gateway(light=ScriptedBackend("b", [ScriptEntry("ordered", "one")]))
    gateway.complete(_req())
    with pytest.raises(ScriptExhausted):
        gateway.complete(_req())


def test_exact_hash_determinism():
    key = prompt_hash("the same prompt")
    backend = ScriptedBackend("b", [ScriptEntry("exact_hash", "stable", key=key)])
    gateway = Gateway(light=backend)
    first = gateway.complete(_req("the same prompt"))
    second = gateway.complete(_req("the same prompt"))
    assert first.text == second.text == "stable"


def test_hash_normalization_cross_platform():
    assert prompt_hash("a\r\nb  \n") == prompt_hash("a\nb")


def test_normalize_prompt_trims_trailing_whitespace():
    assert normalize_prompt("x  \r\ny\t\n\n") == "x\ny"


def test_duplicate_hash_keys_rejected():
    key = prompt_hash("p")
    backend = ScriptedBackend("b", [ScriptEntry("exact_hash", "one", key=key)])
    with pytest.raises(ValueError):
        backend.add(ScriptEntry("exact_hash", "two", key=key))


def test_role_queues_isolate_consumption():
    backend = ScriptedBackend("b", [
        ScriptEntry("ordered", "think-1", role="thinking"),
        ScriptEntry("ordered", "check-1", role="goal_check"),
        ScriptEntry("ordered", "think-2", role="thinking"),
    ])
    gateway = Gateway(light=backend)
    assert gateway.complete(_req(role="goal_check")).text == "check-1"
    assert gateway.complete(_req(role="thinking")).text == "think-1"
    assert gateway.complete(_req(role="thinking")).text == "think-2"


def test_empty_prompt_is_invalid_request():
    gateway = Gateway(light=ScriptedBackend("b"))
    with pytest.raises(InvalidRequest):
        gateway.complete(_req(prompt=""))


def test_bad_max_tokens_and_temperature():
    gateway = Gateway(light=ScriptedBackend("b"))
    with pytest.raises(InvalidRequest):
        gateway.complete(_req(max_tokens=0))
    with pytest.raises(InvalidRequest):
        gateway.complete(_req(temperature=1.5))


def test_route_tier_mapping():
    light = ScriptedBackend("scripted_A")
    sota = ScriptedBackend("scripted_B")
    gateway = Gateway(light=light, sota=sota)
    assert gateway.route_tier("goal_check") == "scripted_A"
    assert gateway.route_tier("goal_check_sota") == "scripted_B"
    assert gateway.route_tier("thinking") == "scripted_A"


def test_route_tier_unconfigured():
    gateway = Gateway(light=ScriptedBackend("only"))
    with pytest.raises(UnconfiguredTier):
        gateway.route_tier("goal_check_sota")
    with pytest.raises(UnconfiguredTier):
        gateway.complete(_req(role="goal_check_sota"))


def test_route_tier_stable_across_calls():
    gateway = Gateway(light=ScriptedBackend("a"), sota=ScriptedBackend("b"))
    assert [gateway.route_tier("narrative") for _ in range(3)] == ["a", "a", "a"]


def test_scripted_fault_injection_unavailable():
    backend = ScriptedBackend("b", [ScriptEntry("ordered", "", fail="unavailable")])
    gateway = Gateway(light=backend)
    with pytest.raises(BackendUnavailable):
        gateway.complete(_req())


def test_scripted_fault_injection_hard():
    backend = ScriptedBackend("b", [ScriptEntry("ordered", "", fail="hard")])
    gateway = Gateway(light=backend)
    with pytest.raises(RuntimeError):
        gateway.complete(_req())


def test_remote_retries_then_propagates(monkeypatch):
    class Flaky:
        backend_id = "flaky"

        def __init__(self):
            self.calls = 0

        def complete(self, req):
            self.calls += 1
            raise BackendUnavailable("down")

    flaky = Flaky()
    gateway = Gateway(light=flaky, retry_delays=(0.0, 0.0))
    with pytest.raises(BackendUnavailable):
        gateway.complete(_req())
    assert flaky.calls == 3  # initial + R=2 retries


def test_remote_retry_recovers():
    class FlakyOnce:
        backend_id = "flaky"

        def __init__(self):
            self.calls = 0

        def complete(self, req):
            self.calls += 1
            if self.calls == 1:
                raise BackendUnavailable("hiccup")
            from zagii.llm_gateway import CompletionResult
            return CompletionResult(text="ok", backend_id="flaky", latency_ms=1)

    gateway = Gateway(light=FlakyOnce(), retry_delays=(0.0, 0.0))
    assert gateway.complete(_req()).text == "ok"


def test_prompt_delivered_unchanged():
    seen = {}

    class Spy:
        backend_id = "spy"

        def complete(self, req):
            seen["prompt"] = req.prompt
            from zagii.llm_gateway import CompletionResult
            return CompletionResult(text="", backend_id="spy", latency_ms=0)

    prompt = "exact\nbytes  here"
    Gateway(light=Spy()).complete(_req(prompt))
    assert seen["prompt"] == prompt


def test_script_file_round_trip(tmp_path):
    path = tmp_path / "thinking.jsonl"
    path.write_text('{"mode": "ordered", "response": "a"}\n'
                    '{"mode": "ordered", "response": "b"}\n')
    backend = load_script_file(path)
    gateway = Gateway(light=backend)
    assert gateway.complete(_req(role="thinking")).text == "a"
    assert gateway.complete(_req(role="thinking")).text == "b"


def test_tiered_script_dir(tmp_path):
    (tmp_path / "thinking.jsonl").write_text('{"response": "t"}\n')
    (tmp_path / "goal_check_sota.jsonl").write_text('{"response": "s"}\n')
    light, sota = load_tiered_scripts(tmp_path)
    gateway = Gateway(light=light, sota=sota)
    assert gateway.complete(_req(role="thinking")).text == "t"
    assert gateway.complete(_req(role="goal_check_sota")).text == "s"


def test_tiered_dir_without_sota(tmp_path):
    (tmp_path / "thinking.jsonl").write_text('{"response": "t"}\n')
    light, sota = load_tiered_scripts(tmp_path)
    assert sota is None


def test_gateway_config_file(tmp_path):
    import json as _json
    scripts = tmp_path / "light"
    scripts.mkdir()
    (scripts / "thinking.jsonl").write_text('{"response": "from config"}\n')
    sota_file = tmp_path / "sota.jsonl"
    sota_file.write_text('{"role": "goal_check_sota", "response": "sota says"}\n')
    config = tmp_path / "gateway.json"
    config.write_text(_json.dumps({"tiers": {
        "light": {"kind": "scripted", "scripts": str(scripts)},
        "sota": {"kind": "scripted", "scripts": str(sota_file)},
    }}))
    from zagii.llm_gateway import gateway_from_config
    gateway = gateway_from_config(config)
    assert gateway.complete(_req(role="thinking")).text == "from config"
    assert gateway.complete(_req(role="goal_check_sota")).text == "sota says"
