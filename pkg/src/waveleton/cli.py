"""
命令行入口

    waveleton <subcommand> [选项] --out 目录

成功返回 0，校验错误返回 1，运行失败返回 2
"""
import sys
import argparse
import logging
from pathlib import Path
from typing import Dict, List, Optional

from .config import WaveletonConfig, load_env_file, set_config
from .errors import ConfigError, UsageError, WaveletonError
from .runner import RunConfig, Subcommand, SubcommandRunner

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """用法错误抛出 UsageError 而不是直接退出"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}", usage=self.format_usage())


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument('--config', '-c', type=str, default=None, help='配置文件路径 (YAML/JSON，可选)')
    parser.add_argument('--out', '-o', type=str, default=None, help='输出目录 (默认: runs/<子命令>)')
    parser.add_argument('--seed', type=int, default=None, help='随机种子 (覆盖配置)')
    parser.add_argument('--tol', type=str, nargs='+', default=None, metavar='KEY=VALUE',
                        help='容差覆盖，如 solver_residual=1e-12')
    parser.add_argument('--log-level', type=str, default=None, help='日志级别 (覆盖配置与环境变量)')


def _add_filter(parser: argparse.ArgumentParser, default: Optional[str] = None):
    parser.add_argument('--filter', '-f', type=str, default=default,
                        help='滤波器名称，如 haar / db3 / symmlet8 (默认取配置)')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="waveleton",
        description="小波相空间工具包: 滤波器、多分辨分析、非标准形式与 Wigner 动力学",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
子命令:
  filters           构造并导出滤波器系数
  dwt               周期离散小波变换
  mra-demo          逐层多分辨重构演示
  conn-coeffs       导数连接系数
  nsform            算子非标准形式及阈值稀疏化
  wigner-transform  波函数 → Wigner 函数
  evolve            相空间时间推进
  synth             由系数矩阵合成二维图样
  metrics           图样度量与分类

示例:
  waveleton filters --family daubechies --order 3 --out runs/db3
  waveleton mra-demo --signal rw_fractal --filter symmlet8 --levels 6
  waveleton evolve --spec configs/evolve_example.json --out runs/harmonic
        """
    )
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    p = sub.add_parser("filters", help="构造滤波器")
    p.add_argument('--family', type=str, required=True, choices=['haar', 'daubechies', 'symmlet'])
    p.add_argument('--order', type=int, default=1, help='消失矩阶数 M')
    _add_common(p)

    p = sub.add_parser("dwt", help="周期 DWT")
    p.add_argument('--input', '-i', type=str, default=None, help='单列 CSV 信号 (缺省时使用演示信号)')
    p.add_argument('--signal', type=str, default='kick', choices=['kick', 'multikick', 'rw_fractal'])
    p.add_argument('--params', type=str, default=None, help='演示信号参数 (JSON)')
    p.add_argument('--length', type=int, default=1024)
    p.add_argument('--levels', type=int, default=None)
    _add_filter(p)
    _add_common(p)

    p = sub.add_parser("mra-demo", help="多分辨重构演示")
    p.add_argument('--signal', type=str, default='kick', choices=['kick', 'multikick', 'rw_fractal'])
    p.add_argument('--params', type=str, default=None, help='演示信号参数 (JSON)')
    p.add_argument('--length', type=int, default=1024)
    p.add_argument('--levels', type=int, default=None)
    _add_filter(p)
    _add_common(p)

    p = sub.add_parser("conn-coeffs", help="连接系数")
    p.add_argument('--order', '-n', type=int, default=1, help='导数阶数 n')
    _add_filter(p)
    _add_common(p)

    p = sub.add_parser("nsform", help="非标准形式")
    p.add_argument('--op', type=str, default='ddx', help='ddx | d2dx2 | 核矩阵文件 (.csv/.npy)')
    p.add_argument('--size', type=int, default=256)
    p.add_argument('--levels', type=int, default=None)
    p.add_argument('--threshold', type=float, default=None)
    p.add_argument('--dump', action='store_true', help='导出各块三元组 blocks.csv')
    _add_filter(p)
    _add_common(p)

    p = sub.add_parser("wigner-transform", help="Wigner 变换")
    p.add_argument('--state', type=str, default='ground', help='ground | eigen:n | coherent:q0,p0')
    p.add_argument('--nq', type=int, default=None)
    p.add_argument('--np', dest='np', type=int, default=None)
    p.add_argument('--q-extent', type=float, nargs=2, default=None)
    p.add_argument('--p-extent', type=float, nargs=2, default=None, help='缺省时取共轭动量盒')
    p.add_argument('--hbar', type=float, default=None)
    p.add_argument('--mass', type=float, default=None)
    _add_common(p)

    p = sub.add_parser("evolve", help="相空间时间推进")
    p.add_argument('--spec', type=str, default=None, help='演化配置文件 (JSON/YAML)')
    p.add_argument('--dt', type=float, default=None)
    p.add_argument('--steps', type=int, default=None)
    p.add_argument('--integrator', type=str, default=None, choices=['rk4', 'cn', 'crank_nicolson'])
    _add_common(p)

    p = sub.add_parser("synth", help="合成二维图样")
    p.add_argument('--matrix', type=str, default='ones', help='ones | band:w,bv,ov | tri:w,bv,ov | random[:seed] | file.csv')
    p.add_argument('--level', type=int, default=None, help='求和所含的最大伸缩层 (矩阵阶数为 2^(level+1))')
    p.add_argument('--size', type=int, default=512, help='网格边长')
    p.add_argument('--basis', type=str, default='wavelet', choices=['wavelet', 'packet'])
    p.add_argument('--packet-depth', type=int, default=None, help='小波包均匀铺砌深度 (仅 --basis packet)')
    _add_filter(p)
    _add_common(p)

    p = sub.add_parser("metrics", help="图样度量")
    p.add_argument('--grid', type=str, required=True, help='.wgrd 网格文件或带 .json 附属文件的 CSV 网格')
    p.add_argument('--levels', type=int, default=None)
    _add_filter(p)
    _add_common(p)

    return parser


def _tolerance_overrides(items: Optional[List[str]]) -> Dict[str, float]:
    overrides = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"容差覆盖格式应为 KEY=VALUE: {item}")
        try:
            overrides[key] = float(value)
        except ValueError as e:
            raise UsageError(f"容差值不是数字: {item}") from e
    return overrides


def _settings(args: argparse.Namespace, overrides: Dict[str, float]) -> WaveletonConfig:
    settings = WaveletonConfig.load(args.config)
    for key, value in overrides.items():
        if not hasattr(settings.tolerances, key):
            raise ConfigError(f"未知容差: {key}")
        current = getattr(settings.tolerances, key)
        setattr(settings.tolerances, key, type(current)(value))
    if args.seed is not None:
        settings.seed = args.seed
    if args.log_level:
        settings.logging.level = args.log_level.upper()
    return settings


COMMON_KEYS = {"config", "out", "seed", "tol", "log_level", "subcommand"}


def run(argv: Optional[List[str]] = None) -> int:
    """解析参数并执行子命令，返回退出码"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.subcommand:
            raise UsageError("缺少子命令", usage=parser.format_help())
        subcommand = Subcommand.from_string(args.subcommand)
        overrides = _tolerance_overrides(args.tol)
        settings = _settings(args, overrides)
        settings.apply_logging()
        set_config(settings)

        params = {k: v for k, v in vars(args).items() if k not in COMMON_KEYS and v is not None}
        out_dir = Path(args.out) if args.out else Path("runs") / subcommand.value
        run_config = RunConfig(
            subcommand=subcommand,
            params=params,
            out_dir=out_dir,
            seed=settings.seed,
            tolerance_overrides=overrides,
            settings=settings,
        )
        logger.info(f"🚀 {subcommand.value} → {out_dir}")
        SubcommandRunner(run_config).run()
        logger.info(f"✅ {subcommand.value} 完成")
        return 0
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except UsageError as e:
        print(e.usage or parser.format_usage(), file=sys.stderr, end="")
        print(f"❌ UsageError: {e}", file=sys.stderr)
        return e.exit_code
    except WaveletonError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"❌ 运行失败: {e}")
        return 2


def main() -> int:
    load_env_file()
    return run(sys.argv[1:])
