//! Limiting workload of the G/M/inf queue and the discounted Little identity.
//!
//! The workload `D(t)` is the sum of residual service times at `t`. With
//! unit batches and `Exp(mu)` service its mean and its covariance with the
//! queue size have closed limits. Both are also derivatives in `delta` of
//! the discounted moments at `delta = 0`, which [`finite_difference_workload`]
//! uses as an independent check.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::multi_index::MultiIndex;
use crate::transient::{SolverOptions, TransientSolver};

/// `lim E[D(t)]` and `lim Cov(D(t), Z_1(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkloadLimits {
    pub mean_limit: f64,
    pub cov_limit: f64,
}

/// Single type, unit batches, exponential service; returns `mu`.
pub(crate) fn check_scope(model: &ModelSpec) -> Result<f64> {
    if model.k() != 1 {
        return Err(Error::Scope(format!("workload needs k = 1, got k = {}", model.k())));
    }
    if !model.batch().is_unit_scalar() {
        return Err(Error::Scope("workload needs unit batches".into()));
    }
    model
        .delay(0)
        .exponential_rate()
        .ok_or_else(|| Error::Scope("workload needs exponential service".into()))
}

/// `1 / (mu^2 E[tau])`.
pub fn workload_mean_limit(model: &ModelSpec) -> Result<f64> {
    let mu = check_scope(model)?;
    Ok(1.0 / (mu * mu * model.mean_interarrival()))
}

/// `(1 / (mu^2 E[tau])) (1 + L(mu) / (1 - L(mu)) - 1 / (mu E[tau]))`.
pub fn workload_cov_limit(model: &ModelSpec) -> Result<f64> {
    let mu = check_scope(model)?;
    let et = model.mean_interarrival();
    let l = model.interarrival().laplace_real(mu)?;
    Ok((1.0 + l / (1.0 - l) - 1.0 / (mu * et)) / (mu * mu * et))
}

pub fn workload_limits(model: &ModelSpec) -> Result<WorkloadLimits> {
    Ok(WorkloadLimits {
        mean_limit: workload_mean_limit(model)?,
        cov_limit: workload_cov_limit(model)?,
    })
}

/// Arrival rate times the expected discounted horizon, `Pr(L > E_delta) / (delta E[tau])`,
/// with `Pr(L > E_delta) = 1 - E e^{-delta L}` for `E_delta ~ Exp(delta)`.
///
/// At `delta = 0` this is the ordinary Little value `E[L] / E[tau]`.
pub fn little_generalized(model: &ModelSpec) -> Result<f64> {
    if model.k() != 1 || !model.batch().is_unit_scalar() {
        return Err(Error::Scope("the Little identity is stated for k = 1, unit batches".into()));
    }
    let delay = model.delay(0);
    let delta = model.delta();
    let horizon = if delta == 0.0 {
        delay.mean()
    } else {
        (1.0 - delay.laplace_real(delta)?) / delta
    };
    Ok(horizon / model.mean_interarrival())
}

/// Transient `E[D(t)]` and `Cov(D(t), Z(t))` from one-sided second-order
/// differences of `M~_1` and `M~_2` in `delta` at `0, eps, 2 eps`.
///
/// `-d/d delta M~_1 = E[D]` and `-d/d delta M~_2 = 2 E[D Z]` at `delta = 0`.
pub fn finite_difference_workload(
    model: &ModelSpec,
    t: f64,
    eps: f64,
    opts: SolverOptions,
) -> Result<WorkloadLimits> {
    check_scope(model)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let one = MultiIndex::unit(1, 0);
    let two = MultiIndex::new(vec![2])?;
    let mut m1 = [0.0; 3];
    let mut m2 = [0.0; 3];
    for (j, slot) in (0..3).zip(m1.iter_mut().zip(m2.iter_mut())) {
        let m = model.with_delta(j as f64 * eps)?;
        let mut s = TransientSolver::new(&m, opts)?;
        *slot.0 = s.solve_renewal(&one)?.at(t);
        *slot.1 = s.solve_renewal(&two)?.at(t);
    }
    let deriv = |v: &[f64; 3]| (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * eps);
    let mean = -deriv(&m1);
    let cross = -0.5 * deriv(&m2);
    Ok(WorkloadLimits {
        mean_limit: mean,
        cov_limit: cross - mean * m1[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{DelayModel, InterarrivalModel, Law};
    use crate::moments::{chi_first_general_delay, MomentTable};
    use crate::multi_index::BatchMomentProvider;

    fn mm(lambda: f64, mu: f64, delta: f64) -> ModelSpec {
        ModelSpec::poisson_exponential(lambda, mu, delta, BatchMomentProvider::unit(1)).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let w = workload_limits(&mm(1.0, 2.0, 0.0)).unwrap();
        assert!((w.mean_limit - 0.25).abs() < 1e-15);
        assert!((w.cov_limit - 0.25).abs() < 1e-15);
        let w = workload_limits(&mm(1.0, 1.0, 0.0)).unwrap();
        assert!((w.mean_limit - 1.0).abs() < 1e-15);
        assert!((w.cov_limit - 1.0).abs() < 1e-15);
        let erl = mm(1.0, 1.0, 0.0)
            .with_interarrival(InterarrivalModel::new(Law::Erlang { shape: 2, rate: 2.0 }).unwrap());
        assert!((workload_cov_limit(&erl).unwrap() - 0.8).abs() < 1e-14);
    }

    #[test]
    fn mean_limit_equals_equilibrium_form() {
        for (lambda, mu) in [(0.5, 0.3), (2.0, 1.7), (1.0, 4.0)] {
            let m = mm(lambda, mu, 0.0);
            let el2 = m.delay(0).second_moment();
            let alt = el2 / (2.0 * m.mean_interarrival());
            assert!((workload_mean_limit(&m).unwrap() - alt).abs() < 1e-12);
        }
    }

    #[test]
    fn scope_errors() {
        let two = ModelSpec::poisson_exponential(1.0, 1.0, 0.0, BatchMomentProvider::unit(2)).unwrap();
        assert!(matches!(workload_mean_limit(&two), Err(Error::Scope(_))));
        let batch = ModelSpec::poisson_exponential(1.0, 1.0, 0.0, BatchMomentProvider::Constant(vec![2.0])).unwrap();
        assert!(matches!(workload_cov_limit(&batch), Err(Error::Scope(_))));
        let unif = ModelSpec::new(
            InterarrivalModel::exponential(1.0).unwrap(),
            vec![DelayModel::new(Law::Uniform { b: 1.0 }).unwrap()],
            0.0,
            BatchMomentProvider::unit(1),
        )
        .unwrap();
        assert!(matches!(workload_mean_limit(&unif), Err(Error::Scope(_))));
    }

    #[test]
    fn little_identity_examples() {
        let m = mm(1.0, 2.0, 0.5);
        assert!((little_generalized(&m).unwrap() - 1.0 / 2.5).abs() < 1e-15);
        let det = ModelSpec::new(
            InterarrivalModel::exponential(2.0).unwrap(),
            vec![DelayModel::new(Law::Deterministic { d: 1.5 }).unwrap()],
            0.4,
            BatchMomentProvider::unit(1),
        )
        .unwrap();
        let want = 2.0 * (1.0 - (-0.4f64 * 1.5).exp()) / 0.4;
        assert!((little_generalized(&det).unwrap() - want).abs() < 1e-14);
        assert!((chi_first_general_delay(0, &det).unwrap() - want).abs() < 1e-12);
        let far = mm(1.0, 1.0, 1e9);
        assert!(little_generalized(&far).unwrap() < 1e-8);
        assert_eq!(little_generalized(&mm(3.0, 2.0, 0.0)).unwrap(), 1.5);
    }

    #[test]
    fn little_identity_matches_moment_engine() {
        for lambda in [0.5, 1.0, 2.0] {
            for mu in [0.3, 1.0, 3.0] {
                for delta in [0.01, 0.5, 2.0] {
                    let m = mm(lambda, mu, delta);
                    let chi = MomentTable::new(&m).unwrap().chi(&MultiIndex::unit(1, 0)).unwrap();
                    assert!((chi - little_generalized(&m).unwrap()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn finite_difference_matches_transient_mean() {
        let (lambda, mu, t) = (1.0, 1.0, 3.0);
        let m = mm(lambda, mu, 0.0);
        let w = finite_difference_workload(&m, t, 1e-4, SolverOptions::new(1e-3, 5.0)).unwrap();
        let exact = lambda / (mu * mu) * (1.0 - (-mu * t).exp());
        assert!((w.mean_limit - exact).abs() < 1e-5, "{} vs {exact}", w.mean_limit);
        // Poisson arrivals: Cov(D, Z) = E[D] at every t
        assert!((w.cov_limit - exact).abs() < 1e-4, "{} vs {exact}", w.cov_limit);
    }
}
