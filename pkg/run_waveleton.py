#!/usr/bin/env python3
"""
Waveleton - 命令行入口

使用方法:
    python3 run_waveleton.py filters --family symmlet --order 8
    python3 run_waveleton.py mra-demo --signal kick --levels 6 --out runs/kick
    python3 run_waveleton.py evolve --spec configs/evolve_example.json
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent / "src"))

from waveleton.cli import main  # noqa: E402


if __name__ == "__main__":
    exit(main())
