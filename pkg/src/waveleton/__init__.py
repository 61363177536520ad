"""
小波相空间工具包
周期小波变换、非标准形式算子与 Wigner 相空间动力学

使用方法:
    from waveleton import make_filter, dwt_periodic

    filt = make_filter("symmlet", 8)
    decomp = dwt_periodic(signal, filt, levels=6)
"""

from .errors import WaveletonError, ValidationError, ComputationError
from .config import WaveletonConfig, get_config, set_config
from .wavelet_core import (
    WaveletFilter,
    MraDecomposition,
    CascadeResult,
    PacketTree,
    make_filter,
    filter_by_name,
    cascade_eval,
    dwt_periodic,
    idwt_periodic,
    packet_decompose,
    packet_best_basis,
    packet_basis,
    uniform_tiling,
)
from .mra import reconstruct_level, multi_norm, cutoff_level, demo_signal
from .operator_ns import (
    ConnectionCoefficients,
    OperatorSpec,
    NonStandardForm,
    connection_coeffs,
    build_nonstandard_form,
    apply_nonstandard,
    threshold_sparsity,
)
from .tensor2d import Grid2D, Decomposition2D, dwt2, idwt2, basis_function_2d
from .wigner_dyn import (
    PolynomialPotential,
    WignerState,
    MixtureSpec,
    LindbladParams,
    wigner_transform,
    moyal_rhs,
    lindblad_rhs,
    evolve,
    mixture_evolve,
    quantumness_metrics,
)
from .galerkin import (
    QForm,
    ModeAnsatz,
    ReducedSystem,
    project_initial,
    assemble,
    gdr_residual,
    solve_evolution,
    solve_space_time,
    export_system,
)
from .patterns import (
    MatrixSpec,
    PatternMetrics,
    PatternClass,
    SynthesisBasis,
    generate_matrix,
    mode_count,
    synthesize,
    compute_metrics,
    classify,
    waveleton_persistence,
)

__all__ = [
    # 异常
    "WaveletonError",
    "ValidationError",
    "ComputationError",
    # 配置
    "WaveletonConfig",
    "get_config",
    "set_config",
    # 滤波器与变换
    "WaveletFilter",
    "MraDecomposition",
    "CascadeResult",
    "PacketTree",
    "make_filter",
    "filter_by_name",
    "cascade_eval",
    "dwt_periodic",
    "idwt_periodic",
    "packet_decompose",
    "packet_best_basis",
    "packet_basis",
    "uniform_tiling",
    # 多分辨分析
    "reconstruct_level",
    "multi_norm",
    "cutoff_level",
    "demo_signal",
    # 算子
    "ConnectionCoefficients",
    "OperatorSpec",
    "NonStandardForm",
    "connection_coeffs",
    "build_nonstandard_form",
    "apply_nonstandard",
    "threshold_sparsity",
    # 二维
    "Grid2D",
    "Decomposition2D",
    "dwt2",
    "idwt2",
    "basis_function_2d",
    # 相空间动力学
    "PolynomialPotential",
    "WignerState",
    "MixtureSpec",
    "LindbladParams",
    "wigner_transform",
    "moyal_rhs",
    "lindblad_rhs",
    "evolve",
    "mixture_evolve",
    "quantumness_metrics",
    # Galerkin 约化
    "QForm",
    "ModeAnsatz",
    "ReducedSystem",
    "project_initial",
    "assemble",
    "gdr_residual",
    "solve_evolution",
    "solve_space_time",
    "export_system",
    # 图样
    "MatrixSpec",
    "PatternMetrics",
    "PatternClass",
    "SynthesisBasis",
    "generate_matrix",
    "mode_count",
    "synthesize",
    "compute_metrics",
    "classify",
    "waveleton_persistence",
]

__version__ = "1.0.0"
