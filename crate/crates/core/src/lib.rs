//! Lifelong learning over a stream of tasks with gradient-mixing strategies.
//!
//! The library is generic over the floating-point type (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod continuum;
pub mod error;
pub mod idx;
pub mod memory;
pub mod metrics;
pub mod mix;
pub mod net;
pub mod qp;
pub mod scalar;
pub mod stream;

pub use continuum::{
    default_epsilon_grid, parse_trace_csv, run_continuum, run_continuum_traced, run_multitask,
    search_epsilon, trace_failure_row, trace_to_csv, EpsilonSearch, Method, Report, RunConfig,
    RunResult, TraceRow,
};
pub use error::{Error, Result};
pub use memory::{EpisodicMemory, MemoryMode};
pub use metrics::AccuracyMatrix;
pub use mix::{
    cos_theta_closed_forms, mega2_angle, mix_agem, mix_gem, mix_mega1, mix_mega2, mix_van,
    solve_coefficients, Alpha2, Diagnostics, MixDecision, MixInputs,
};
pub use net::{
    evaluate, init_params, loss_and_grad, loss_and_grad_multi, predict, sgd_step, Activation, Batch,
    LossGrad, NetworkSpec, ParamVector,
};
pub use qp::{solve_nqp, NqpOptions, NqpProblem, NqpSolution};
pub use scalar::Scalar;
pub use stream::{
    child_seed, make_permuted_stream, make_split_stream, make_synthetic_stream, partition_cv,
    subsample_base, synthetic_base, BaseData, Example, StreamConfig, StreamKind, SyntheticParams, TaskSpec,
};

pub type Params = ParamVector<f64>;
pub type Task = TaskSpec<f64>;
pub type Sample = Example<f64>;
pub type Matrix = AccuracyMatrix<f64>;
pub type Memory = EpisodicMemory<f64>;
pub type Config = RunConfig<f64>;
pub type Outcome = RunResult<f64>;
