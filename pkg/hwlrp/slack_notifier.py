from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from loguru import logger
from slack_sdk import WebClient
from slack_sdk.errors import SlackApiError

from . import config
from .reports import to_text

_slack_client: Optional[WebClient] = None

_OBJECTIVE_LABELS = {"f1": "f1 コスト", "f2": "f2 リスク", "f3": "f3 CO2"}


def _client() -> Optional[WebClient]:
    global _slack_client
    if _slack_client is None and config.SLACK_BOT_TOKEN:
        _slack_client = WebClient(token=config.SLACK_BOT_TOKEN)
    return _slack_client


def _post_message(blocks: List[Dict[str, Any]], text_fallback: str) -> Optional[str]:
    """Returns the message ts, or None when Slack is unconfigured or the post fails."""
    client = _client()
    channel = config.SLACK_CHANNEL_ID
    if client is None or not channel:
        logger.info("Slack is not configured; run summary not posted.")
        return None
    try:
        resp = client.chat_postMessage(channel=channel, text=text_fallback, blocks=blocks)
    except SlackApiError as e:
        reason = e.response.get("error", str(e)) if isinstance(e.response, dict) else str(e)
        logger.warning(f"Slack post to {channel} failed: {reason}")
        return None
    except Exception as e:
        logger.warning(f"Slack post to {channel} failed: {e}")
        return None
    return resp.get("ts")


def _as_mrkdwn_table(df: pd.DataFrame) -> str:
    """DataFrame as a code block; Slack keeps monospace alignment only inside one."""
    if df.empty:
        return "_(データなし)_"
    return f"```\n{to_text(df)}\n```"


def _field(label: str, value: str) -> Dict[str, str]:
    return {"type": "mrkdwn", "text": f"*{label}:*\n{value}"}


def build_run_summary_blocks(
    command: str,
    instance: str,
    status: str,
    objectives: Optional[Sequence[float]],
    started_at_iso: str,
    finished_at_iso: str,
) -> List[Dict[str, Any]]:
    blocks: List[Dict[str, Any]] = [
        {"type": "section", "text": {"type": "mrkdwn", "text": f"*HWLRP {command} 実行結果*"}},
        {
            "type": "section",
            "fields": [
                _field("インスタンス", instance),
                _field("ステータス", status),
                _field("開始", started_at_iso),
                _field("終了", finished_at_iso),
            ],
        },
    ]
    if objectives is not None:
        df = pd.DataFrame({
            "目的関数": [_OBJECTIVE_LABELS.get(name, name) for name in config.OBJECTIVES],
            "値": list(objectives),
        })
        blocks.append({"type": "section", "text": {"type": "mrkdwn", "text": _as_mrkdwn_table(df)}})
    return blocks


def send_run_summary(
    command: str,
    instance: str,
    status: str,
    objectives: Optional[Sequence[float]],
    started_at_iso: str,
    finished_at_iso: str,
) -> Optional[str]:
    """Post a short summary after a CLI run."""
    blocks = build_run_summary_blocks(command, instance, status, objectives, started_at_iso, finished_at_iso)
    return _post_message(blocks, text_fallback=f"HWLRP {command}: {status}")
