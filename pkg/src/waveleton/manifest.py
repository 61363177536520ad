"""
运行清单模块
记录配置回显、版本、各阶段耗时与输出文件校验和，运行结束时原子写入
"""
import json
import time
import logging
import threading
from pathlib import Path
from contextlib import contextmanager
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional

from .formats import dumps_json
from .utils import atomic_write_bytes, sha256_file

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class OutputRecord:
    """单个输出文件"""
    path: str
    sha256: str
    size: int


@dataclass
class RunManifest:
    """
    运行清单

    timings 不参与确定性比较，outputs 按路径排序
    """
    subcommand: str
    version: str
    config: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    outputs: List[OutputRecord] = field(default_factory=list)
    status: str = "running"
    error: Optional[str] = None

    def __post_init__(self):
        self._lock = threading.Lock()

    @contextmanager
    def phase(self, name: str):
        """计时一个阶段"""
        start = time.perf_counter()
        try:
            yield
        finally:
            with self._lock:
                self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start

    def add_output(self, path: Path, root: Path):
        path = Path(path)
        record = OutputRecord(
            path=path.relative_to(root).as_posix(),
            sha256=sha256_file(path),
            size=path.stat().st_size,
        )
        with self._lock:
            self.outputs = [o for o in self.outputs if o.path != record.path] + [record]
            self.outputs.sort(key=lambda o: o.path)

    def checksums(self) -> Dict[str, str]:
        return {o.path: o.sha256 for o in self.outputs}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "version": self.version,
            "status": self.status,
            "error": self.error,
            "config": self.config,
            "timings": self.timings,
            "outputs": [asdict(o) for o in self.outputs],
        }

    def save(self, out_dir: Path) -> Path:
        """原子写入 manifest.json"""
        path = Path(out_dir) / MANIFEST_NAME
        atomic_write_bytes(path, (dumps_json(self.to_dict()) + "\n").encode("utf-8"))
        logger.info(f"📋 清单已写入: {path} ({len(self.outputs)} 个输出)")
        return path

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        outputs = [OutputRecord(**o) for o in data.pop("outputs", [])]
        return cls(outputs=outputs, **data)
