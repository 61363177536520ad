"""
工具函数
"""
import os
import re
import hashlib
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

from .errors import BadLength, ConfigError

logger = logging.getLogger(__name__)

THREADS_ENV = "WAVELETON_THREADS"


def is_power_of_two(n: int) -> bool:
    """判断正整数是否为 2 的幂"""
    return n > 0 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    """
    返回 J 使 n = 2^J

    Raises:
        BadLength: n 不是 2 的幂
    """
    if not is_power_of_two(n):
        raise BadLength(f"长度 {n} 不是 2 的幂")
    return n.bit_length() - 1


def parse_filter_name(name: str) -> Tuple[str, int]:
    """
    解析滤波器名称

    例如:
    - haar -> ("haar", 1)
    - db3 / daubechies3 / daubechies-3 -> ("daubechies", 3)
    - sym8 / symmlet8 -> ("symmlet", 8)
    """
    text = name.strip().lower()
    if text == "haar":
        return "haar", 1
    match = re.fullmatch(r'(db|daubechies|sym|symmlet)[-_]?(\d+)', text)
    if not match:
        raise ConfigError(f"无法识别的滤波器名称: {name}")
    family = "daubechies" if match.group(1).startswith("d") else "symmlet"
    return family, int(match.group(2))


def thread_cap(requested: Optional[int] = None) -> int:
    """并行线程数，受 WAVELETON_THREADS 限制"""
    workers = requested or os.cpu_count() or 1
    env_value = os.environ.get(THREADS_ENV)
    if env_value:
        try:
            workers = min(workers, max(1, int(env_value)))
        except ValueError:
            logger.warning(f"⚠️ 忽略非法的 {THREADS_ENV}={env_value}")
    return max(1, workers)


def sha256_file(path: Union[str, Path], chunk_size: int = 1 << 20) -> str:
    """计算文件 SHA-256"""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write_bytes(path: Union[str, Path], payload: bytes):
    """先写临时文件再替换，保证读者看不到半个文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, 'wb') as f:
        f.write(payload)
    os.replace(tmp, path)
