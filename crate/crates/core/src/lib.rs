//! Structured graph learning for clustering and semi-supervised classification.
//!
//! An affinity graph is learned from feature data by combining an
//! adaptive-neighbor (local) term with a kernel self-expression (global)
//! term, while a penalty on the smallest Laplacian eigenvalues pushes the
//! graph towards exactly `c` connected components.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`kernel`] | feature matrices, squared distances, kernel pool |
//! | [`qp`] | simplex projection and column QP solver |
//! | [`graph`] | affinity graphs, Laplacians, smallest eigenpairs |
//! | [`sgsk`] | single-kernel learner |
//! | [`mkl`] | multiple-kernel learner |
//! | [`ssl`] | harmonic semi-supervised classification |
//! | [`metrics`] | component labels, accuracy, NMI, purity |
//! | [`data`] | dataset loading and synthetic generators |
//! | [`experiment`] | run configuration, orchestration and reports |

pub mod data;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod kernel;
pub mod metrics;
pub mod mkl;
pub mod qp;
pub mod sgsk;
pub mod ssl;

pub use data::{load_dataset, synthesize, write_csv, DataFormat, Dataset, SynthKind, SynthSpec};
pub use error::{Result, SglError};
pub use experiment::{
    emit_history, read_history, run_cluster, run_ssl, stratified_labels, InputSource, Metrics,
    Mode, RunConfig, RunReport, SslSummary,
};
pub use graph::{
    build_laplacian, smallest_eigpairs, AffinityGraph, GraphLaplacian, SpectralEmbedding,
};
pub use kernel::{
    build_kernel_bank, gaussian_kernel, linear_kernel, normalize_kernel, pairwise_sq_dist,
    polynomial_kernel, BankSpec, DistanceMatrix, FeatureMatrix, KernelKind, KernelMatrix,
};
pub use metrics::{clustering_accuracy, connected_components, labels_from_graph, nmi, purity};
pub use mkl::{combine_kernels, compute_h, sgmk_fit, update_weights, KernelWeights, SgmkResult};
pub use qp::{kkt_residual, project_simplex, solve_column_qp, QpOptions, QpProblem, QpSolution};
pub use sgsk::{
    adapt_gamma, estimate_alpha, objective_value, sgsk_fit, update_graph, HistoryRecord,
    SgskConfig, SgskResult,
};
pub use ssl::{decide_labels, harmonic_labels, sgmk_ssl_fit, LabelSet, SslResult};
