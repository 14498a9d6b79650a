//! Distributed Nash equilibrium seeking for players with uncertain
//! nonlinear high-order dynamics over jointly strongly connected switching
//! networks — simulation library, analysis toolkit, and scenario runner.
//!
//! The crate is organized around the pieces of the closed loop:
//!
//! * [`game`] — games, pseudogradients, strong-monotonicity certificates,
//!   and reference Nash equilibria by two independent routes (closed form
//!   and pseudogradient flow).
//! * [`graph`] — switching directed communication graphs with dwell times
//!   and the joint-strong-connectivity checker.
//! * [`plant`] — uncertain nonlinear player dynamics in companion form,
//!   fictitious outputs, regressors, and disturbance generators.
//! * [`control`] — the four seeking laws as pure derivative maps, from the
//!   full-information baseline to adaptive seeking with sign-based
//!   disturbance rejection.
//! * [`sim`] — closed-loop assembly and fixed-step, event-aligned
//!   integration with Lyapunov monitors and CSV traces.
//! * [`analysis`] — exponential-rate fits, theorem-level verdicts,
//!   delta sweeps, and report rendering.
//! * [`scenario`] — the strict JSON scenario schema and builder.
//! * [`exec`] — sequential or rayon-parallel execution of sweeps and
//!   batches (`parallel` feature, on by default).

pub mod analysis;
pub mod control;
pub mod error;
pub mod exec;
pub mod game;
pub mod graph;
pub mod plant;
pub mod scenario;
pub mod sim;
pub mod svg;

pub use analysis::{
    delta_sweep, emit_report, fit_exponential_rate, theorem_verdict, AnalysisConfig,
    ConvergenceReport, ReportBundle, ReportFormat, StabilityClass, StabilityMap,
};
pub use control::{
    adaptive_control, delta_star_bound, disturbance_rejection_control, perfect_info_control,
    single_integrator_consensus_control, ControllerConfig, InitialEstimates, Law, SignMode,
};
pub use error::{Diagnostic, Error, Result};
pub use exec::{configure_threads, ExecMode};
pub use game::{CertifyMethod, CostFamily, GameSpec, MonotonicityCertificate, NeMethod};
pub use graph::{
    is_jointly_strongly_connected, is_strongly_connected, snapshot, GraphSnapshot, JscReport,
    SwitchingSchedule, Timeline,
};
pub use plant::{
    build_realization, fictitious_output_of, plant_derivative, CompanionRealization,
    DisturbanceKind, DisturbanceSpec, PlantSpec, Regressor,
};
pub use scenario::ScenarioFile;
pub use sim::{
    integrate, monitor_values, write_trace, ClosedLoop, Integration, Method, Plant, Scenario,
    SimTrace, StateLayout,
};
