import sys

from hwlrp.cli import main

if __name__ == '__main__':
    """
    コマンドラインからローカルで実行するためのエントリポイント。
    例: python main.py solve case-study --backend highs --objective f1
    """
    sys.exit(main())
