"""
文件格式模块
WGRD 二进制网格、CSV + JSON 附属文件、PGM 热图以及各类 CSV 导出

所有写入都经临时文件原子替换，相同输入产生逐字节相同的文件
"""
import io
import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .errors import FormatError
from .tensor2d import Grid2D
from .utils import atomic_write_bytes

logger = logging.getLogger(__name__)

WGRD_MAGIC = b"WGRD"
WGRD_VERSION = 1
WGRD_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("nq", "<u4"),
    ("np", "<u4"),
    ("extents", "<f8", (4,)),
])

PathLike = Union[str, Path]


def write_wgrd(path: PathLike, grid: Grid2D):
    """magic + version u32 + nq u32 + np u32 + 4×f64 范围 + 行优先 f64 小端数据"""
    header = np.zeros(1, dtype=WGRD_HEADER)
    header["magic"] = WGRD_MAGIC
    header["version"] = WGRD_VERSION
    header["nq"], header["np"] = grid.values.shape
    header["extents"] = grid.extents
    payload = header.tobytes() + np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    atomic_write_bytes(path, payload)


def read_wgrd(path: PathLike) -> Grid2D:
    raw = Path(path).read_bytes()
    if len(raw) < WGRD_HEADER.itemsize:
        raise FormatError(f"{path} 太短，不是 WGRD 文件")
    header = np.frombuffer(raw[:WGRD_HEADER.itemsize], dtype=WGRD_HEADER)[0]
    if header["magic"] != WGRD_MAGIC:
        raise FormatError(f"{path} 魔数错误: {header['magic']!r}")
    if header["version"] != WGRD_VERSION:
        raise FormatError(f"{path} 版本 {header['version']} 不受支持")
    nq, n_p = int(header["nq"]), int(header["np"])
    data = np.frombuffer(raw[WGRD_HEADER.itemsize:], dtype="<f8")
    if data.size != nq * n_p:
        raise FormatError(f"{path} 数据长度 {data.size} 与 {nq}×{n_p} 不符")
    return Grid2D(data.reshape(nq, n_p).astype(float), *[float(e) for e in header["extents"]])


def dumps_json(data: Any) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True, default=_json_default)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"无法序列化 {type(value).__name__}")


def write_json(path: PathLike, data: Any):
    atomic_write_bytes(path, (dumps_json(data) + "\n").encode("utf-8"))


def _csv_bytes(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    return buffer.getvalue().encode("utf-8")


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    atomic_write_bytes(path, _csv_bytes(header, rows))


def write_grid_csv(path: PathLike, grid: Grid2D) -> Path:
    """CSV 网格 (行 = q) + 同名 .json 附属文件记录范围"""
    path = Path(path)
    rows = (list(row) for row in grid.values)
    header = [f"p{k}" for k in range(grid.values.shape[1])]
    write_csv(path, header, rows)
    sidecar = path.with_suffix(".json")
    write_json(sidecar, {
        "nq": grid.values.shape[0],
        "np": grid.values.shape[1],
        "extents": list(grid.extents),
    })
    return sidecar


def read_grid_csv(path: PathLike) -> Grid2D:
    path = Path(path)
    values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    return Grid2D(values, *meta["extents"])


def write_pgm(path: PathLike, values: np.ndarray):
    """
    P5 8 位灰度图，线性 min-max 映射 v → round(255·(v-min)/(max-min))
    常数场映射为 0；行 = q 自上而下
    """
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        scaled = np.rint(255.0 * (values - lo) / (hi - lo))
    else:
        scaled = np.zeros_like(values)
    pixels = scaled.astype(np.uint8)
    rows, cols = pixels.shape
    comment = f"# linear min-max mapping: min={lo!r} max={hi!r}\n"
    header = f"P5\n{comment}{cols} {rows}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + pixels.tobytes())


def read_pgm(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    lines = []
    offset = 0
    while len(lines) < 3:
        end = raw.index(b"\n", offset)
        line = raw[offset:end].strip()
        offset = end + 1
        if line.startswith(b"#"):
            continue
        lines.append(line)
    if lines[0] != b"P5":
        raise FormatError(f"{path} 不是 P5 PGM")
    cols, rows = (int(v) for v in lines[1].split())
    return np.frombuffer(raw[offset:offset + rows * cols], dtype=np.uint8).reshape(rows, cols)


def write_level_csv(path: PathLike, reconstructions: List[Tuple[str, np.ndarray]]):
    """逐层重构: 每层一列，表头为层名"""
    header = [name for name, _ in reconstructions]
    columns = np.column_stack([values for _, values in reconstructions])
    write_csv(path, header, (list(row) for row in columns))


def write_triplets_csv(path: PathLike, triplets: Iterable[Tuple[int, str, int, int, float]]):
    write_csv(path, ["level", "block", "row", "col", "value"], triplets)


def write_coo_csv(path: PathLike, triplets: Iterable[Tuple[int, int, float]]):
    write_csv(path, ["row", "col", "value"], triplets)


def write_diagnostics_csv(path: PathLike, diagnostics) -> None:
    """演化诊断: step, time, mass, purity, negativity"""
    rows = ((d.step, d.time, d.mass, d.purity, d.negativity) for d in diagnostics)
    write_csv(path, ["step", "time", "mass", "purity", "negativity"], rows)
