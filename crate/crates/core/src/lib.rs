//! Moments, transients and workload of batch renewal arrivals with
//! per-type random delays and continuous discounting.
//!
//! Batches of `k` customer types arrive at the epochs of a renewal process.
//! All customers of type `j` in a batch share one delay `L_j`, and each
//! customer present at time `t` contributes its value discounted back from
//! its departure, `e^{-delta (T + L - t)}`. The crate computes the joint
//! moments of the discounted counts `Z(t)` in several independent ways:
//!
//! * [`moments`]: exact stationary moments for exponential delays,
//! * [`transient`]: grid solutions of the renewal equation for any time,
//! * [`expansion`]: asymptotic expansion of the first moment for rational
//!   interarrival transforms,
//! * [`sim`]: seeded, parallel Monte Carlo.
//!
//! [`workload`] specialises the first two moments to the derivative of the
//! discounted count with respect to `delta`.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod expansion;
pub mod model;
pub mod moments;
pub mod multi_index;
pub mod numeric;
pub mod sim;
pub mod transient;
pub mod workload;

pub use distributions::{DelayModel, HazardClass, InterarrivalModel, Law};
pub use error::{Error, Result};
pub use model::ModelSpec;
pub use moments::{chi11_closed_form, chi_first_general_delay, mgf_series, MomentTable};
pub use multi_index::{BatchMomentProvider, MultiIndex};
pub use transient::{bound_r, bound_transient, BoundTable, GridFunction, SolverOptions, TransientSolver};
