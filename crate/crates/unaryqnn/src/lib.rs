//! Unary-subspace quantum circuit simulation and the neural-network training
//! stack built on it: data loaders, inner-product estimators, orthogonal
//! pyramid layers, and experiment drivers for image-classification benchmarks.

pub mod circuit;
pub mod dataio;
pub mod dense;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod experiment;
pub mod loaders;
pub mod orthonn;
pub mod pyramid;
pub mod qnn;
pub mod selftest;
pub mod unary;

pub use circuit::{canonicalize_angle, decompose_rbs, rbs_matrix, Circuit, Gate};
pub use dataio::{
    binarize, convert_csv, fit_pca, medmnist_dir, prepare, read_medmnist, subsample_balanced,
    DatasetKind, MedmnistData, PcaModel, PreparedDataset, PreparedSplit, RawSplit, Task,
};
pub use dense::{dense_simulate, DenseState};
pub use error::{Error, Result};
pub use estimators::{
    classical_step_count, crossover_dimension, estimate_ip, estimate_matvec, quantum_step_count,
    signed_ip_circuit, square_ip_circuit, EstimatorMode, IpEstimate,
};
pub use eval::{
    acc_and_confusion, auc, crossover_report, evaluate, line_plot_svg, Confusion, CrossoverReport,
    MetricsReport, Series,
};
pub use experiment::{
    run_experiment, table1_runner, table1_to_csv, write_metrics, ExperimentConfig,
    ExperimentResult, Hyperparameters, InferModeSpec, Method, SuiteConfig, TrainModeSpec,
};
pub use loaders::{
    adjoint_loader, build_loader, compute_angles, load, LoaderAngles, LoaderTopology, TopologyKind,
};
pub use orthonn::{
    loglog_slope, qpc_backward, qpc_forward, qpc_train, scaling_benchmark, svb_train, OrthoNet,
    QpcCache, ScalingConfig, ScalingRow, SvbConfig, SvbNet,
};
pub use pyramid::{matrix_to_angles, param_count, OrthoMatrix, PyramidLayer};
pub use qnn::{history_csv, EpochStats, Mlp, TrainConfig};
pub use selftest::{all_passed, run_selftest, CheckOutcome};
pub use unary::{
    postselect_unary, run_circuit, sample_outcomes, sample_wire_counts, OutcomeCounts, UnaryState,
};
