//! Monte Carlo oracle: direct simulation of the delayed batch process.
//!
//! Replication `r` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to
//! stream `r`, so results depend only on `(seed, reps)` and never on how
//! replications are spread over threads. Replications run on rayon; their
//! outputs are collected in order and reduced with compensated sums.
//! `DELAYQ_THREADS` caps the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::multi_index::MultiIndex;
use crate::numeric::CompensatedSum;
use crate::workload::check_scope;

/// State of one path at horizon `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub t: f64,
    /// `e^{delta t} Z_j(t)`, each contribution discounted as `e^{-delta (T + L - t)}`.
    pub z: Vec<f64>,
    /// Type-`j` batch mass still in the system.
    pub in_system: Vec<f64>,
    /// Sum of residual delays, weighted by batch size.
    pub workload: f64,
}

impl PathSample {
    fn empty(t: f64, k: usize) -> Self {
        Self {
            t,
            z: vec![0.0; k],
            in_system: vec![0.0; k],
            workload: 0.0,
        }
    }

    /// `prod_j z_j^{n_j}`.
    pub fn monomial(&self, n: &MultiIndex) -> f64 {
        self.z
            .iter()
            .zip(n.entries())
            .map(|(z, e)| z.powi(*e as i32))
            .product()
    }
}

/// Random stream of replication `rep`.
pub fn stream(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// One path observed at every horizon in `ts` (any order).
pub fn simulate_path_multi(model: &ModelSpec, ts: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<PathSample>> {
    let batch = model.batch();
    if !batch.is_samplable() {
        return Err(Error::Scope(
            "simulation needs multinomial or constant batches".into(),
        ));
    }
    if ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("horizons must be positive".into()));
    }
    let k = model.k();
    let delta = model.delta();
    let horizon = ts.iter().copied().fold(0.0, f64::max);
    let mut out: Vec<PathSample> = ts.iter().map(|t| PathSample::empty(*t, k)).collect();
    let mut x = vec![0.0; k];
    let mut arrival = 0.0;
    loop {
        arrival += model.interarrival().sample(rng);
        if arrival > horizon {
            break;
        }
        batch.sample_into(rng, &mut x)?;
        for (j, xj) in x.iter().enumerate() {
            let delay = model.delay(j).sample(rng);
            if *xj == 0.0 {
                continue;
            }
            let departure = arrival + delay;
            for s in out.iter_mut() {
                if arrival <= s.t && s.t < departure {
                    let residual = departure - s.t;
                    s.z[j] += (-delta * residual).exp() * xj;
                    s.in_system[j] += xj;
                    s.workload += residual * xj;
                }
            }
        }
    }
    Ok(out)
}

pub fn simulate_path(model: &ModelSpec, t: f64, rng: &mut ChaCha8Rng) -> Result<PathSample> {
    Ok(simulate_path_multi(model, &[t], rng)?.remove(0))
}

fn worker_cap() -> Option<usize> {
    std::env::var("DELAYQ_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

/// Runs `reps` replications, each observed at every horizon in `ts`.
/// Element `[r][i]` is replication `r` at `ts[i]`.
pub fn simulate_replications(
    model: &ModelSpec,
    ts: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<Vec<PathSample>>> {
    simulate_replications_with_threads(model, ts, reps, seed, worker_cap())
}

pub fn simulate_replications_with_threads(
    model: &ModelSpec,
    ts: &[f64],
    reps: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<Vec<PathSample>>> {
    let run = || {
        (0..reps as u64)
            .into_par_iter()
            .map(|r| simulate_path_multi(model, ts, &mut stream(seed, r)))
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Point estimate with standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub statistic: String,
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Sample mean and `sd / sqrt(n)`.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

/// Sample covariance with its leave-one-out jackknife standard error.
pub fn covariance_jackknife(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    assert_eq!(n, y.len());
    let nf = n as f64;
    let sx = x.iter().copied().collect::<CompensatedSum>().value();
    let sy = y.iter().copied().collect::<CompensatedSum>().value();
    let sxy = x.iter().zip(y).map(|(a, b)| a * b).collect::<CompensatedSum>().value();
    let cov = |sx: f64, sy: f64, sxy: f64, m: f64| (sxy - sx * sy / m) / (m - 1.0);
    let full = cov(sx, sy, sxy, nf);
    if n < 3 {
        return (full, f64::NAN);
    }
    let loo: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| cov(sx - a, sy - b, sxy - a * b, nf - 1.0))
        .collect();
    let mean_loo = loo.iter().copied().collect::<CompensatedSum>().value() / nf;
    let ss = loo
        .iter()
        .map(|v| (v - mean_loo) * (v - mean_loo))
        .collect::<CompensatedSum>()
        .value();
    (full, ((nf - 1.0) / nf * ss).sqrt())
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 replications, got {reps}")));
    }
    Ok(())
}

/// Estimate of `M~_n(t) = E prod_j (e^{delta t} Z_j(t))^{n_j}`.
pub fn estimate_joint_moment(
    model: &ModelSpec,
    n: &MultiIndex,
    t: f64,
    reps: usize,
    seed: u64,
) -> Result<SimEstimate> {
    Ok(convergence_sweep(model, n, &[t], reps, seed)?.remove(0).estimate)
}

/// Estimates of several moments at several horizons from one set of paths.
/// Result `[i][m]` is `ns[m]` at `ts[i]`.
pub fn estimate_joint_moments(
    model: &ModelSpec,
    ns: &[MultiIndex],
    ts: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<Vec<SimEstimate>>> {
    check_reps(reps)?;
    for n in ns {
        if n.k() != model.k() {
            return Err(Error::Dimension(format!("index {n} does not match k = {}", model.k())));
        }
    }
    let paths = simulate_replications(model, ts, reps, seed)?;
    Ok(ts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            ns.iter()
                .map(|n| {
                    let (estimate, std_error) = if n.is_zero() {
                        (1.0, 0.0)
                    } else {
                        let v: Vec<f64> = paths.iter().map(|p| p[i].monomial(n)).collect();
                        mean_and_se(&v)
                    };
                    SimEstimate {
                        statistic: format!("M_tilde{n}"),
                        t: *t,
                        estimate,
                        std_error,
                        reps,
                        seed,
                    }
                })
                .collect()
        })
        .collect())
}

/// `E[D(t)]` and `Cov(D(t), queue size)` for the single-type unit-batch queue.
pub fn estimate_workload(
    model: &ModelSpec,
    t: f64,
    reps: usize,
    seed: u64,
) -> Result<(SimEstimate, SimEstimate)> {
    check_scope(model)?;
    check_reps(reps)?;
    let paths = simulate_replications(model, &[t], reps, seed)?;
    let d: Vec<f64> = paths.iter().map(|p| p[0].workload).collect();
    let q: Vec<f64> = paths.iter().map(|p| p[0].in_system[0]).collect();
    let (mean, mean_se) = mean_and_se(&d);
    let (cov, cov_se) = covariance_jackknife(&d, &q);
    let est = |statistic: &str, estimate, std_error| SimEstimate {
        statistic: statistic.into(),
        t,
        estimate,
        std_error,
        reps,
        seed,
    };
    Ok((est("workload_mean", mean, mean_se), est("workload_queue_cov", cov, cov_se)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub estimate: SimEstimate,
    /// `|estimate - chi_n|` when a reference value was supplied.
    pub abs_error: Option<f64>,
}

/// `M~_n` estimated at each horizon from the same paths.
pub fn convergence_sweep(
    model: &ModelSpec,
    n: &MultiIndex,
    ts: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("horizons must be increasing".into()));
    }
    let rows = estimate_joint_moments(model, std::slice::from_ref(n), ts, reps, seed)?;
    Ok(rows
        .into_iter()
        .map(|mut r| SweepRow {
            estimate: r.remove(0),
            abs_error: None,
        })
        .collect())
}

/// Adds `|estimate - reference|` to every row.
pub fn with_reference(rows: Vec<SweepRow>, reference: f64) -> Vec<SweepRow> {
    rows.into_iter()
        .map(|r| SweepRow {
            abs_error: Some((r.estimate.estimate - reference).abs()),
            ..r
        })
        .collect()
}

/// Paired ratio of raw moments `M_n(t2) / M_n(t1)` and its delta-method SE.
///
/// Raw moments are `e^{-|n| delta t} M~_n(t)`; per path the raw monomial is
/// the rescaled one times `e^{-|n| delta t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRatio {
    pub t1: f64,
    pub t2: f64,
    pub ratio: f64,
    pub std_error: f64,
    /// `e^{-|n| delta (t2 - t1)}`.
    pub expected: f64,
}

pub fn decay_ratio(
    model: &ModelSpec,
    n: &MultiIndex,
    t1: f64,
    t2: f64,
    reps: usize,
    seed: u64,
) -> Result<DecayRatio> {
    check_reps(reps)?;
    let eta = n.order() as f64;
    let delta = model.delta();
    let paths = simulate_replications(model, &[t1, t2], reps, seed)?;
    let a: Vec<f64> = paths.iter().map(|p| p[0].monomial(n) * (-eta * delta * t1).exp()).collect();
    let b: Vec<f64> = paths.iter().map(|p| p[1].monomial(n) * (-eta * delta * t2).exp()).collect();
    let (ma, sa) = mean_and_se(&a);
    let (mb, sb) = mean_and_se(&b);
    let (cab, _) = covariance_jackknife(&a, &b);
    let nf = reps as f64;
    let ratio = mb / ma;
    // var(mb/ma) ~ (var b - 2 r cov + r^2 var a) / (n ma^2)
    let var = (sb * sb - 2.0 * ratio * cab / nf + ratio * ratio * sa * sa) / (ma * ma);
    Ok(DecayRatio {
        t1,
        t2,
        ratio,
        std_error: var.max(0.0).sqrt(),
        expected: (-eta * delta * (t2 - t1)).exp(),
    })
}
