"""
子命令运行器
负责执行各子命令、写出结果文件并维护运行清单
"""
import json
import math
import logging
from enum import Enum
from pathlib import Path
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np
import yaml

from . import __version__
from .config import WaveletonConfig
from .errors import BadParams, ConfigError
from .formats import (
    dumps_json, read_grid_csv, read_wgrd, write_csv, write_diagnostics_csv, write_json,
    write_level_csv, write_pgm, write_triplets_csv, write_wgrd,
)
from .manifest import RunManifest
from .mra import demo_signal, level_reconstructions, multi_norm, cutoff_level
from .operator_ns import (
    OperatorSpec, build_nonstandard_form, connection_coeffs, threshold_sparsity,
)
from .patterns import (
    MatrixKind, MatrixSpec, classify, compute_metrics, generate_matrix, mode_count, synthesize,
)
from .tensor2d import Grid2D
from .wavelet_core import dwt_periodic, filter_by_name, filter_to_json, make_filter, uniform_tiling
from .wigner_dyn import (
    LindbladParams, MixtureSpec, PolynomialPotential, WignerState,
    coherent_wavefunction, conjugate_momentum_extent, evolve, mixture_evolve,
    oscillator_eigenstate, phase_grid, quantumness_metrics, wigner_transform,
)

logger = logging.getLogger(__name__)


class Subcommand(Enum):
    """子命令枚举"""
    FILTERS = "filters"
    DWT = "dwt"
    MRA_DEMO = "mra-demo"
    CONN_COEFFS = "conn-coeffs"
    NSFORM = "nsform"
    WIGNER_TRANSFORM = "wigner-transform"
    EVOLVE = "evolve"
    SYNTH = "synth"
    METRICS = "metrics"

    @classmethod
    def from_string(cls, name: str) -> Optional["Subcommand"]:
        """从字符串创建子命令枚举"""
        try:
            return cls(name.lower().replace("_", "-"))
        except ValueError:
            return None


@dataclass
class RunConfig:
    """
    一次运行的完整配置

    params 为子命令参数 (命令行优先于配置文件)
    """
    subcommand: Subcommand
    params: Dict[str, Any]
    out_dir: Path
    seed: int = 0
    tolerance_overrides: Dict[str, float] = field(default_factory=dict)
    settings: WaveletonConfig = field(default_factory=WaveletonConfig)

    def echo(self) -> Dict[str, Any]:
        return {
            "subcommand": self.subcommand.value,
            "params": {k: v for k, v in sorted(self.params.items())},
            "seed": self.seed,
            "tolerance_overrides": self.tolerance_overrides,
        }


class SubcommandRunner:
    """执行子命令并写出清单"""

    def __init__(self, run_config: RunConfig):
        self.cfg = run_config
        self.out_dir = Path(run_config.out_dir)
        self.manifest = RunManifest(
            subcommand=run_config.subcommand.value,
            version=__version__,
            config=json.loads(dumps_json(run_config.echo())),
        )
        self._handlers: Dict[Subcommand, Callable[[], Dict[str, Any]]] = {
            Subcommand.FILTERS: self.run_filters,
            Subcommand.DWT: self.run_dwt,
            Subcommand.MRA_DEMO: self.run_mra_demo,
            Subcommand.CONN_COEFFS: self.run_conn_coeffs,
            Subcommand.NSFORM: self.run_nsform,
            Subcommand.WIGNER_TRANSFORM: self.run_wigner_transform,
            Subcommand.EVOLVE: self.run_evolve,
            Subcommand.SYNTH: self.run_synth,
            Subcommand.METRICS: self.run_metrics,
        }

    @property
    def params(self) -> Dict[str, Any]:
        return self.cfg.params

    def run(self) -> Dict[str, Any]:
        """执行并保存清单；异常时清单状态为 failed 后再抛出"""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        handler = self._handlers[self.cfg.subcommand]
        try:
            summary = handler()
            self.manifest.status = "success"
            return summary
        except Exception as e:
            self.manifest.status = "failed"
            self.manifest.error = f"{type(e).__name__}: {e}"
            raise
        finally:
            self.manifest.save(self.out_dir)

    def _emit(self, name: str, writer: Callable[[Path], Any]) -> Path:
        path = self.out_dir / name
        writer(path)
        self.manifest.add_output(path, self.out_dir)
        return path

    def _filter(self, key: str = "filter"):
        name = self.params.get(key)
        if name:
            return filter_by_name(name)
        w = self.cfg.settings.wavelet
        return make_filter(w.family, w.order if w.family != "haar" else 1)

    # ==================== 子命令 ====================

    def run_filters(self) -> Dict[str, Any]:
        with self.manifest.phase("build"):
            filt = make_filter(self.params["family"], int(self.params["order"]))
        text = filter_to_json(filt)
        self._emit("filter.json", lambda p: p.write_text(text + "\n", encoding="utf-8"))
        print(text)
        return json.loads(text)

    def _signal(self) -> np.ndarray:
        if self.params.get("input"):
            return np.loadtxt(self.params["input"], delimiter=",", ndmin=1).ravel()
        return demo_signal(self.params.get("signal", "kick"), self._signal_params(),
                           int(self.params.get("length", 1024)))

    def _signal_params(self) -> Dict[str, Any]:
        raw = self.params.get("params") or {}
        if isinstance(raw, str):
            raw = yaml.safe_load(raw) or {}
        mra = self.cfg.settings.mra
        kind = self.params.get("signal", "kick")
        defaults = {
            "kick": {"width": mra.kick_width},
            "multikick": {"width": mra.kick_width},
            "rw_fractal": {"a": mra.rw_a, "b": mra.rw_b, "terms": mra.rw_terms},
        }.get(kind, {})
        return {**defaults, **raw}

    def run_dwt(self) -> Dict[str, Any]:
        filt = self._filter()
        levels = int(self.params.get("levels", self.cfg.settings.wavelet.levels))
        with self.manifest.phase("transform"):
            decomp = dwt_periodic(self._signal(), filt, levels)
        rows = [("coarse", k, v) for k, v in enumerate(decomp.coarse)]
        for j, detail in zip(range(decomp.coarse_level, decomp.finest_level), decomp.details):
            rows.extend((f"D{j}", k, v) for k, v in enumerate(detail))
        self._emit("coefficients.csv", lambda p: write_csv(p, ["level", "index", "value"], rows))
        norm = multi_norm(decomp)
        summary = {"filter": filt.name, "levels": levels,
                   "per_level_energy": norm.per_level_energy.tolist(), "total": norm.total}
        self._emit("dwt.json", lambda p: write_json(p, summary))
        return summary

    def run_mra_demo(self) -> Dict[str, Any]:
        filt = self._filter()
        kind = self.params.get("signal", "kick")
        levels = int(self.params.get("levels", self.cfg.settings.wavelet.levels))
        params = self._signal_params()
        with self.manifest.phase("transform"):
            signal = demo_signal(kind, params, int(self.params.get("length", 1024)))
            decomp = dwt_periodic(signal, filt, levels)
            recon = level_reconstructions(decomp)
        norm = multi_norm(decomp)
        cutoff = cutoff_level(decomp, self.cfg.settings.mra.cutoff_eps * float(np.linalg.norm(signal) or 1.0))
        sidecar = {
            "signal_kind": kind,
            "params": params,
            "filter": filt.name,
            "levels": levels,
            "per_level_energy": norm.per_level_energy.tolist(),
            "cutoff_level": cutoff.level,
            "cutoff_converged": cutoff.converged,
        }
        self._emit("levels.csv", lambda p: write_level_csv(p, recon))
        self._emit("levels.json", lambda p: write_json(p, sidecar))
        return sidecar

    def run_conn_coeffs(self) -> Dict[str, Any]:
        filt = self._filter()
        n = int(self.params.get("order", 1))
        with self.manifest.phase("solve"):
            cc = connection_coeffs(filt, n)
        summary = {
            "filter": filt.name,
            "order": n,
            "shifts": cc.shifts.tolist(),
            "values": [float(v) for v in cc.values],
            "refinement_residual": cc.refinement_residual,
        }
        self._emit("connection.json", lambda p: write_json(p, summary))
        return summary

    def _operator_spec(self) -> OperatorSpec:
        op = self.params.get("op", "ddx")
        if op == "ddx":
            return OperatorSpec.derivative(1)
        if op == "d2dx2":
            return OperatorSpec.derivative(2)
        path = Path(op)
        if not path.exists():
            raise BadParams(f"未知算子或核文件不存在: {op}")
        values = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, delimiter=",", ndmin=2)
        return OperatorSpec.from_kernel(values)

    def run_nsform(self) -> Dict[str, Any]:
        filt = self._filter()
        size = int(self.params.get("size", 256))
        levels = int(self.params.get("levels", self.cfg.settings.wavelet.levels))
        eps = float(self.params.get("threshold", self.cfg.settings.operator.threshold))
        with self.manifest.phase("build"):
            nsf = build_nonstandard_form(self._operator_spec(), filt, levels, size)
        with self.manifest.phase("threshold"):
            nsf, stats = threshold_sparsity(nsf, eps)
        summary = {
            "op": self.params.get("op", "ddx"),
            "filter": filt.name,
            "levels": levels,
            "size": size,
            "threshold": eps,
            "nonzeros_before": stats.nonzeros_before,
            "nonzeros_after": stats.nonzeros_after,
            "nonzeros_per_row": stats.nonzeros_after / size,
            "max_apply_error_bound": stats.max_apply_error_bound,
        }
        self._emit("stats.json", lambda p: write_json(p, summary))
        if self.params.get("dump"):
            self._emit("blocks.csv", lambda p: write_triplets_csv(p, nsf.triplets()))
        print(dumps_json(summary))
        return summary

    def _phase_grid(self, spec: Dict[str, Any], hbar: float) -> Grid2D:
        nq = int(spec.get("nq", self.cfg.settings.dynamics.nq))
        n_p = int(spec.get("np", self.cfg.settings.dynamics.np))
        q_extent = spec.get("q_extent", self.cfg.settings.dynamics.q_extent)
        p_extent = (spec.get("p_extent") or self.cfg.settings.dynamics.p_extent
                    or conjugate_momentum_extent(q_extent, nq, hbar))
        return phase_grid(q_extent, p_extent, nq, n_p)

    def _wavefunction(self, state: Dict[str, Any], grid: Grid2D, hbar: float, mass: float) -> np.ndarray:
        kind = state.get("kind", "ground")
        omega = float(state.get("omega", self.cfg.settings.dynamics.omega))
        if kind in ("ground", "eigen"):
            n = int(state.get("n", 0))
            psi = oscillator_eigenstate(n, grid.q, hbar, mass, omega)
        elif kind == "coherent":
            psi = coherent_wavefunction(grid.q, float(state.get("q0", 0.0)), float(state.get("p0", 0.0)),
                                        hbar, mass, omega)
        else:
            raise BadParams(f"未知初态: {kind}")
        # 在网格上重新归一化
        return psi / math.sqrt(float(np.sum(np.abs(psi) ** 2) * grid.dq))

    def run_wigner_transform(self) -> Dict[str, Any]:
        hbar = float(self.params.get("hbar", self.cfg.settings.dynamics.hbar))
        mass = float(self.params.get("mass", self.cfg.settings.dynamics.mass))
        grid = self._phase_grid(self.params, hbar)
        state_spec = _parse_state(self.params.get("state", "ground"))
        with self.manifest.phase("transform"):
            psi = self._wavefunction(state_spec, grid, hbar, mass)
            state = wigner_transform(psi, hbar, grid, mass=mass)
        metrics = quantumness_metrics(state)
        summary = {
            "state": state_spec,
            "mass": state.total_mass(),
            "negativity_volume": metrics.negativity_volume,
            "purity": metrics.purity,
            "min_value": metrics.min_value,
        }
        self._emit("wigner.wgrd", lambda p: write_wgrd(p, state.grid))
        self._emit("metrics.json", lambda p: write_json(p, summary))
        return summary

    def run_evolve(self) -> Dict[str, Any]:
        spec = load_evolve_spec(self.params["spec"]) if self.params.get("spec") else {}
        for key in ("dt", "steps", "integrator"):
            if self.params.get(key) is not None:
                spec[key] = self.params[key]
        dyn = self.cfg.settings.dynamics
        hbar = float(spec.get("hbar", dyn.hbar))
        mass = float(spec.get("mass", dyn.mass))
        grid = self._phase_grid(spec.get("grid", {}), hbar)
        potential = PolynomialPotential(tuple(spec.get("potential", [0.0, 0.0, 0.5 * mass * dyn.omega ** 2])))
        lindblad = None
        if spec.get("lindblad"):
            lindblad = LindbladParams(float(spec["lindblad"].get("gamma", 0.0)),
                                      float(spec["lindblad"].get("D", 0.0)))
        dt = float(spec.get("dt", 1e-3))
        steps = int(spec.get("steps", 0))
        method = spec.get("integrator", dyn.method)
        method = METHOD_ALIASES.get(method, method)
        every = int(spec.get("output_every", dyn.output_every)) or max(steps, 1)

        initial = spec.get("initial", {"kind": "coherent", "q0": 2.0, "p0": 0.0})
        if initial.get("kind") == "wgrd":
            start = WignerState(read_wgrd(initial["path"]), hbar=hbar, mass=mass)
        else:
            psi = self._wavefunction(initial, grid, hbar, mass)
            start = wigner_transform(psi, hbar, grid, mass=mass)

        with self.manifest.phase("evolve"):
            if spec.get("mixture"):
                mix = MixtureSpec([(float(c["weight"]), PolynomialPotential(tuple(c["potential"])))
                                   for c in spec["mixture"]])
                result = mixture_evolve(mix, [start] * len(mix.components), dt, steps, lindblad,
                                        method, record_every=every)
                snapshots = result.combined
                diagnostics = result.diagnostics
            else:
                trajectory = evolve(start, potential, lindblad, dt, steps, method, record_every=every)
                snapshots, diagnostics = trajectory.states, trajectory.diagnostics

        for index, snap in enumerate(snapshots):
            self._emit(f"snapshot_{index:04d}.wgrd", lambda p, s=snap: write_wgrd(p, s.grid))
        self._emit("diagnostics.csv", lambda p: write_diagnostics_csv(p, diagnostics))
        final = quantumness_metrics(snapshots[-1])
        summary = {
            "steps": steps,
            "dt": dt,
            "method": method,
            "snapshots": len(snapshots),
            "final_mass": snapshots[-1].total_mass(),
            "final_purity": final.purity,
            "final_negativity": final.negativity_volume,
        }
        self._emit("evolve.json", lambda p: write_json(p, summary))
        return summary

    def run_synth(self) -> Dict[str, Any]:
        filt = self._filter()
        size = int(self.params.get("size", 512))
        level = int(self.params.get("level", self.cfg.settings.wavelet.levels))
        text = self.params.get("matrix", "ones")
        spec = MatrixSpec.parse(text)
        if spec.kind == MatrixKind.RANDOM and ":" not in text:
            spec.seed = self.cfg.seed
        basis = self.params.get("basis", "wavelet")
        depth = self.params.get("packet_depth")
        nodes = uniform_tiling(int(depth)) if basis == "packet" and depth is not None else None
        with self.manifest.phase("synthesize"):
            matrix = generate_matrix(spec, mode_count(level))
            grid = synthesize(matrix, filt, level, (size, size), basis=basis, nodes=nodes)
        with self.manifest.phase("metrics"):
            metrics = compute_metrics(grid, filt, level, basis=basis, nodes=nodes)
            label = classify(metrics, self.cfg.settings.patterns)
        summary = {
            "matrix": spec.describe(),
            "filter": filt.name,
            "level": level,
            "modes": mode_count(level),
            "basis": basis,
            "size": size,
            "metrics": metrics.to_dict(),
            "class": label.value,
        }
        self._emit("pattern.wgrd", lambda p: write_wgrd(p, grid))
        self._emit("pattern.pgm", lambda p: write_pgm(p, grid.values))
        self._emit("metrics.json", lambda p: write_json(p, summary))
        return summary

    def run_metrics(self) -> Dict[str, Any]:
        path = Path(self.params["grid"])
        grid = read_grid_csv(path) if path.suffix.lower() == ".csv" else read_wgrd(path)
        filt = filter_by_name(self.params["filter"]) if self.params.get("filter") else None
        levels = self.params.get("levels")
        with self.manifest.phase("metrics"):
            metrics = compute_metrics(grid, filt, int(levels) if levels is not None else None)
            label = classify(metrics, self.cfg.settings.patterns)
        summary = {"metrics": metrics.to_dict(), "class": label.value}
        self._emit("metrics.json", lambda p: write_json(p, summary))
        return summary


# ==================== 辅助 ====================

EVOLVE_KEYS = {
    "potential", "hbar", "mass", "grid", "initial", "integrator", "dt", "steps",
    "lindblad", "mixture", "output_every",
}
METHOD_ALIASES = {"cn": "crank_nicolson", "crank-nicolson": "crank_nicolson"}
GRID_KEYS = {"q_extent", "p_extent", "nq", "np"}
LINDBLAD_KEYS = {"gamma", "D"}


def load_evolve_spec(path: str) -> Dict[str, Any]:
    """读取 evolve 配置 (JSON/YAML)，拒绝未知键"""
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"配置文件不存在: {path}")
    with open(file_path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError("evolve 配置顶层必须是映射")
    for section, allowed in ((data, EVOLVE_KEYS), (data.get("grid") or {}, GRID_KEYS),
                             (data.get("lindblad") or {}, LINDBLAD_KEYS)):
        unknown = set(section) - allowed
        if unknown:
            raise ConfigError(f"evolve 配置含未知键: {sorted(unknown)}")
    return data


def _parse_state(text) -> Dict[str, Any]:
    """ground | eigen:n | coherent:q0,p0"""
    if isinstance(text, dict):
        return text
    head, _, tail = str(text).partition(":")
    try:
        if head == "ground":
            return {"kind": "eigen", "n": 0}
        if head == "eigen":
            return {"kind": "eigen", "n": int(tail)}
        if head == "coherent":
            q0, p0 = (float(v) for v in tail.split(","))
            return {"kind": "coherent", "q0": q0, "p0": p0}
    except ValueError as e:
        raise BadParams(f"无法解析初态 {text}: {e}") from e
    raise BadParams(f"未知初态: {text}")
