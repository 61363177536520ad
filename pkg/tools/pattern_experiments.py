"""
图样批量实验
对若干系数矩阵 × 滤波器 × 层数组合合成二维图样，汇总度量与分类
"""
import os
import sys
import argparse
from pathlib import Path
from typing import Any, Dict, List

from tqdm import tqdm

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from waveleton.config import get_config  # noqa: E402
from waveleton.errors import WaveletonError  # noqa: E402
from waveleton.formats import write_csv, write_json, write_pgm  # noqa: E402
from waveleton.patterns import (  # noqa: E402
    MatrixSpec, classify, compute_metrics, generate_matrix, mode_count, synthesize,
)
from waveleton.wavelet_core import filter_by_name  # noqa: E402

DEFAULT_MATRICES = ["ones", "band:2,5,1", "tri:2,5,1", "random:0", "random:1"]
DEFAULT_FILTERS = ["haar", "db2", "db4", "symmlet8"]


def run_experiments(matrices: List[str], filters: List[str], levels: List[int],
                    size: int, out_dir: Path = None) -> List[Dict[str, Any]]:
    """
    逐组合合成并计算度量

    Returns:
        每个组合一行的结果列表
    """
    thresholds = get_config().patterns
    rows = []
    combos = [(m, f, lv) for m in matrices for f in filters for lv in levels]
    for text, name, level in tqdm(combos, desc="patterns"):
        try:
            spec = MatrixSpec.parse(text)
            filt = filter_by_name(name)
            grid = synthesize(generate_matrix(spec, mode_count(level)), filt, level, (size, size))
            metrics = compute_metrics(grid, filt, level)
        except WaveletonError as e:
            print(f"跳过 {text} / {name} / L{level}: {e}")
            continue
        label = classify(metrics, thresholds)
        rows.append({"matrix": text, "filter": name, "level": level,
                     **metrics.to_dict(), "class": label.value})
        if out_dir is not None:
            stem = f"{text.replace(':', '_').replace(',', '-')}_{name}_L{level}"
            write_pgm(out_dir / f"{stem}.pgm", grid.values)
    return rows


def print_report(rows: List[Dict[str, Any]]):
    """打印汇总表与各类别计数"""
    print("=== 图样实验报告 ===")
    print(f"{'matrix':<14}{'filter':<10}{'L':>3}  {'c50':>8}{'PR':>10}{'H':>8}  class")
    for r in rows:
        print(f"{r['matrix']:<14}{r['filter']:<10}{r['level']:>3}  "
              f"{r['concentration_50']:>8.4f}{r['participation_ratio']:>10.4f}"
              f"{r['coeff_entropy']:>8.3f}  {r['class']}")
    print()
    counts: Dict[str, int] = {}
    for r in rows:
        counts[r["class"]] = counts.get(r["class"], 0) + 1
    print("=== 总结 ===")
    for label, count in sorted(counts.items()):
        print(f"- {label}: {count}")


def main():
    parser = argparse.ArgumentParser(description="批量合成图样并汇总度量")
    parser.add_argument("--matrices", nargs="+", default=DEFAULT_MATRICES)
    parser.add_argument("--filters", nargs="+", default=DEFAULT_FILTERS)
    parser.add_argument("--levels", type=int, nargs="+", default=[3, 4, 5])
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--out", type=str, default=None, help="输出目录 (保存 PGM、JSON 与 CSV)")
    args = parser.parse_args()

    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    rows = run_experiments(args.matrices, args.filters, args.levels, args.size, out_dir)
    print_report(rows)
    if out_dir is not None and rows:
        write_json(out_dir / "report.json", rows)
        header = list(rows[0].keys())
        write_csv(out_dir / "report.csv", header, ([r[k] for k in header] for r in rows))
        print(f"\n报告已保存: {out_dir}")


if __name__ == "__main__":
    main()
