import pandas as pd
import pytest
from slack_sdk.errors import SlackApiError

from hwlrp import config, slack_notifier


class _FakeClient:
    def __init__(self, fail=False):
        self.fail = fail
        self.calls = []

    def chat_postMessage(self, **kwargs):
        self.calls.append(kwargs)
        if self.fail:
            raise SlackApiError("boom", {"ok": False, "error": "channel_not_found"})
        return {"ok": True, "ts": "1700000000.000100"}


@pytest.fixture
def unconfigured(monkeypatch):
    monkeypatch.setattr(config, "SLACK_BOT_TOKEN", None)
    monkeypatch.setattr(config, "SLACK_CHANNEL_ID", None)
    monkeypatch.setattr(slack_notifier, "_slack_client", None)


def test_summary_blocks_with_objectives():
    blocks = slack_notifier.build_run_summary_blocks(
        "solve", "minimal", "optimal", (191.756, 4.332, 2688.48), "2024-01-01T00:00:00+00:00", "2024-01-01T00:00:05+00:00",
    )
    assert len(blocks) == 3
    assert "solve" in blocks[0]["text"]["text"]
    table = blocks[2]["text"]["text"]
    assert table.startswith("```")
    assert "f1" in table and "191.756" in table


def test_summary_blocks_without_objectives():
    blocks = slack_notifier.build_run_summary_blocks("pareto", "x", "failed", None, "a", "b")
    assert len(blocks) == 2
    assert "failed" in blocks[1]["fields"][1]["text"]


def test_empty_table_placeholder():
    assert slack_notifier._as_mrkdwn_table(pd.DataFrame(columns=["a"])) == "_(データなし)_"


def test_unconfigured_slack_is_skipped(unconfigured):
    assert slack_notifier.send_run_summary("solve", "minimal", "optimal", None, "a", "b") is None


def test_post_returns_timestamp(monkeypatch):
    client = _FakeClient()
    monkeypatch.setattr(slack_notifier, "_client", lambda: client)
    monkeypatch.setattr(config, "SLACK_CHANNEL_ID", "C0123")
    ts = slack_notifier.send_run_summary("solve", "minimal", "optimal", (1.0, 2.0, 3.0), "a", "b")
    assert ts == "1700000000.000100"
    assert client.calls[0]["channel"] == "C0123"
    assert client.calls[0]["text"] == "HWLRP solve: optimal"


def test_api_error_is_not_fatal(monkeypatch):
    monkeypatch.setattr(slack_notifier, "_client", lambda: _FakeClient(fail=True))
    monkeypatch.setattr(config, "SLACK_CHANNEL_ID", "C0123")
    assert slack_notifier.send_run_summary("solve", "minimal", "optimal", None, "a", "b") is None
