//! Run orchestration behind the `kasner` binary: config, single runs, verification suites, sweeps.

pub mod config;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{BackgroundConfig, GaugeConfig, ReportKind, RunConfig};
pub use run::{execute, run, write_artifacts, RunOutcome};
pub use sweep::{sweep, SweepParam, SweepSummary};
pub use verify::{evaluate, verify, Suite, VerifyReport};

use crate::error::Error;

/// Environment variable read by the binary for the worker thread count.
pub const THREADS_ENV: &str = "KASNER_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CRITERION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit status for an error: input problems are configuration errors, everything the
/// integrator or a diagnostic raises on valid input is a numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Io(_)
        | Error::ExponentDomain { .. }
        | Error::ExponentSign { .. }
        | Error::InvalidLambda(_)
        | Error::InvalidOptions(_)
        | Error::ForwardParabolic { .. }
        | Error::NonpositiveTime(_)
        | Error::ZeroScalarAmplitude => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}
