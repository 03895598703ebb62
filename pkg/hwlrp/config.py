import os
from dotenv import load_dotenv

# .envファイルから環境変数を読み込む (ローカル実行用)
# 既に設定済みの環境変数が優先される
load_dotenv()


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.split(",") if x.strip())


# --- Output Settings ---
OUTPUT_DIR = os.getenv('HWLRP_OUTPUT_DIR', 'out')

# --- Solver Settings ---
FEAS_TOL = float(os.getenv('HWLRP_FEAS_TOL', '1e-7'))
OPT_TOL = float(os.getenv('HWLRP_OPT_TOL', '1e-9'))
MIP_REL_GAP = float(os.getenv('HWLRP_MIP_REL_GAP', '1e-6'))
NODE_LIMIT = int(os.getenv('HWLRP_NODE_LIMIT', '1000000'))
# 未設定なら時間制限なし
TIME_LIMIT = float(os.getenv('HWLRP_TIME_LIMIT')) if os.getenv('HWLRP_TIME_LIMIT') else None
BACKEND = os.getenv('HWLRP_BACKEND', 'embedded')
BACKENDS = ('embedded', 'highs')

# --- Formulation Settings ---
# level-coupled: 開設したレベルの運用リスクのみ計上 / all-levels: 全レベルを合算
RISK_MODE = os.getenv('HWLRP_RISK_MODE', 'level-coupled')
RISK_MODES = ('level-coupled', 'all-levels')

# --- Augmented epsilon-constraint Settings ---
GRID_POINTS = int(os.getenv('HWLRP_GRID_POINTS', '5'))
EPS_CONSTANT_RANGE = (1e-6, 1e-3)
PRIMARY_OBJECTIVE = os.getenv('HWLRP_PRIMARY_OBJECTIVE', 'f1')
OBJECTIVES = ('f1', 'f2', 'f3')

# --- Sensitivity Settings ---
# 容量レベル (5, 10, 15) → 増加 (10, 15, 20) / 減少 (4, 7, 10)
CAPACITY_INCREASE = _floats(os.getenv('HWLRP_CAPACITY_INCREASE', '2.0,1.5,1.3333333333333333'))
CAPACITY_DECREASE = _floats(os.getenv('HWLRP_CAPACITY_DECREASE', '0.8,0.7,0.6666666666666666'))
WASTE_SCALE_FACTORS = _floats(os.getenv('HWLRP_WASTE_SCALE_FACTORS', '0.9,0.95,1.05,1.1'))

# --- Oracle Settings ---
ORACLE_LIMIT = int(os.getenv('HWLRP_ORACLE_LIMIT', '200000'))

# --- Slack Settings (任意：未設定なら通知はスキップ) ---
SLACK_BOT_TOKEN = os.getenv('SLACK_BOT_TOKEN')
SLACK_CHANNEL_ID = os.getenv('SLACK_CHANNEL_ID')


# --- Validation ---
def validate_config():
    """設定値が有効な範囲にあるか検証する"""
    problems = []
    for key, value in {
        "HWLRP_FEAS_TOL": FEAS_TOL,
        "HWLRP_OPT_TOL": OPT_TOL,
        "HWLRP_MIP_REL_GAP": MIP_REL_GAP,
    }.items():
        if not value > 0:
            problems.append(f"{key} must be > 0")
    if NODE_LIMIT < 1:
        problems.append("HWLRP_NODE_LIMIT must be >= 1")
    if TIME_LIMIT is not None and TIME_LIMIT <= 0:
        problems.append("HWLRP_TIME_LIMIT must be > 0")
    if BACKEND not in BACKENDS:
        problems.append(f"HWLRP_BACKEND must be one of {', '.join(BACKENDS)}")
    if RISK_MODE not in RISK_MODES:
        problems.append(f"HWLRP_RISK_MODE must be one of {', '.join(RISK_MODES)}")
    if GRID_POINTS < 2:
        problems.append("HWLRP_GRID_POINTS must be >= 2")
    if PRIMARY_OBJECTIVE not in OBJECTIVES:
        problems.append("HWLRP_PRIMARY_OBJECTIVE must be f1, f2 or f3")
    for key, factors in {
        "HWLRP_CAPACITY_INCREASE": CAPACITY_INCREASE,
        "HWLRP_CAPACITY_DECREASE": CAPACITY_DECREASE,
        "HWLRP_WASTE_SCALE_FACTORS": WASTE_SCALE_FACTORS,
    }.items():
        if not factors or any(f <= 0 for f in factors):
            problems.append(f"{key} must be a non-empty list of positive numbers")
    if ORACLE_LIMIT < 1:
        problems.append("HWLRP_ORACLE_LIMIT must be >= 1")
    if problems:
        raise ValueError(f"Invalid configuration: {'; '.join(problems)}")


# モジュール読み込み時に検証を実行
validate_config()
