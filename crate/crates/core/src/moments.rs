//! Stationary joint moments `chi_n = lim_t M~_n(t)` for exponential delays.
//!
//! With a common delay rate `mu` every quantity reduces to values of the
//! interarrival transform `L(j mu)`, so the whole table is exact up to
//! floating point. The recursion runs over the partial order on
//! multi-indices through the auxiliary transforms `D_n(j)`, the Laplace
//! transforms of `b~_n` at `j mu`.

use std::collections::HashMap;

use serde::Serialize;

use crate::distributions::DelayModel;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::multi_index::{binom_product, MultiIndex};
use crate::numeric::{factorial, CompensatedSum};
use crate::transient::BoundTable;

/// Memoized `chi_n` and `D_n(j)` for one model.
#[derive(Debug, Clone)]
pub struct MomentTable {
    model: ModelSpec,
    mu: f64,
    mean_tau: f64,
    transform: HashMap<u32, f64>,
    chi: HashMap<MultiIndex, f64>,
    d: HashMap<(MultiIndex, u32), f64>,
}

impl MomentTable {
    /// Fails with `NonExponentialDelay` unless every delay is `Exp(mu)` with one `mu`.
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let mu = model.common_exponential_rate().ok_or_else(|| {
            Error::NonExponentialDelay(
                "the moment recursion needs exponential delays with a common rate".into(),
            )
        })?;
        Ok(Self {
            model: model.clone(),
            mu,
            mean_tau: model.mean_interarrival(),
            transform: HashMap::new(),
            chi: HashMap::new(),
            d: HashMap::new(),
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn check(&self, n: &MultiIndex) -> Result<()> {
        if n.k() != self.model.k() {
            return Err(Error::Dimension(format!(
                "index {n} has k = {}, model has k = {}",
                n.k(),
                self.model.k()
            )));
        }
        Ok(())
    }

    /// `L(j mu) = E e^{-j mu tau}`.
    pub fn transform_at(&mut self, j: u32) -> Result<f64> {
        if let Some(v) = self.transform.get(&j) {
            return Ok(*v);
        }
        let v = self.model.interarrival().laplace_real(j as f64 * self.mu)?;
        self.transform.insert(j, v);
        Ok(v)
    }

    /// `B_{l,n} = C(n,l) E[X^{n-l}] prod_{j in C_l} mu / (mu + (n_j - l_j) delta)`.
    pub fn coeff_b(&self, l: &MultiIndex, n: &MultiIndex) -> Result<f64> {
        self.check(n)?;
        coeff_b(l, n, &self.model, self.mu)
    }

    /// `D_n(j)`, the transform of `b~_n` at `j mu`. `j = 0` gives `E[tau] chi_n`.
    pub fn d_value(&mut self, n: &MultiIndex, j: u32) -> Result<f64> {
        self.check(n)?;
        if n.is_zero() {
            return Err(Error::InvalidParameter("D is defined for order >= 1".into()));
        }
        if let Some(v) = self.d.get(&(n.clone(), j)) {
            return Ok(*v);
        }
        let mu = self.mu;
        let lj = self.transform_at(j)?;
        let value = if let Some(i) = n.unit_position() {
            let ex = self.model.batch().moment(n)?;
            let _ = i;
            ex * mu / ((mu + self.model.delta()) * (j + 1) as f64 * mu) * lj
        } else {
            let mut acc = CompensatedSum::new();
            for l in n.iterate_below() {
                let b = self.coeff_b(&l, n)?;
                if b == 0.0 {
                    continue;
                }
                let c = MultiIndex::support_set(&l, n)?.len() as u32;
                if l.is_zero() {
                    acc.add(b * lj / ((j + c) as f64 * mu));
                } else {
                    let denom = 1.0 - self.transform_at(j + c)?;
                    if !(denom > 0.0) {
                        return Err(Error::Divergence(format!(
                            "1 - L({} mu) = {denom} is not positive",
                            j + c
                        )));
                    }
                    let inner = self.d_value(&l, j + c)?;
                    acc.add(b * lj / denom * inner);
                }
            }
            acc.value()
        };
        self.d.insert((n.clone(), j), value);
        Ok(value)
    }

    /// Stationary moment `chi_n`.
    pub fn chi(&mut self, n: &MultiIndex) -> Result<f64> {
        self.check(n)?;
        if n.is_zero() {
            return Ok(1.0);
        }
        if let Some(v) = self.chi.get(n) {
            return Ok(*v);
        }
        let mu = self.mu;
        let value = if n.unit_position().is_some() {
            self.model.batch().moment(n)? / (self.mean_tau * (mu + self.model.delta()))
        } else {
            let mut acc = CompensatedSum::new();
            for l in n.iterate_below() {
                let b = self.coeff_b(&l, n)?;
                if b == 0.0 {
                    continue;
                }
                let c = MultiIndex::support_set(&l, n)?.len() as u32;
                if l.is_zero() {
                    acc.add(b / (c as f64 * mu));
                } else {
                    let denom = 1.0 - self.transform_at(c)?;
                    if !(denom > 0.0) {
                        return Err(Error::Divergence(format!(
                            "1 - L({c} mu) = {denom} is not positive"
                        )));
                    }
                    acc.add(b * self.d_value(&l, c)? / denom);
                }
            }
            acc.value() / self.mean_tau
        };
        if !value.is_finite() {
            return Err(Error::Divergence(format!("chi_{n} is not finite")));
        }
        self.chi.insert(n.clone(), value);
        Ok(value)
    }

    /// `(chi_n, n)` for every index of order `1..=max_order`, sorted by order.
    pub fn all_up_to(&mut self, max_order: u32) -> Result<Vec<(MultiIndex, f64)>> {
        MultiIndex::all_up_to(self.model.k(), max_order)
            .into_iter()
            .map(|n| {
                let v = self.chi(&n)?;
                Ok((n, v))
            })
            .collect()
    }

    /// Two-type covariance summary.
    pub fn covariance_pair(&mut self) -> Result<CovariancePair> {
        if self.model.k() != 2 {
            return Err(Error::Dimension(format!(
                "covariance pair needs k = 2, model has k = {}",
                self.model.k()
            )));
        }
        let e1 = MultiIndex::unit(2, 0);
        let e2 = MultiIndex::unit(2, 1);
        let both = MultiIndex::new(vec![1, 1])?;
        let chi11 = self.chi(&both)?;
        let closed = chi11_closed_form(&self.model)?;
        let chi1 = self.chi(&e1)?;
        let chi2 = self.chi(&e2)?;
        Ok(CovariancePair {
            chi11,
            chi11_closed_form: closed,
            chi1,
            chi2,
            xi: chi11 - chi1 * chi2,
        })
    }
}

/// `B_{l,n}` without a table.
pub fn coeff_b(l: &MultiIndex, n: &MultiIndex, model: &ModelSpec, mu: f64) -> Result<f64> {
    let support = MultiIndex::support_set(l, n)?;
    let diff = n.checked_sub(l).expect("l < n");
    let mut v = binom_product(l, n) as f64 * model.batch().moment(&diff)?;
    for j in support {
        v *= mu / (mu + diff.entries()[j] as f64 * model.delta());
    }
    Ok(v)
}

/// `chi_{(1,1)}`, `chi_{(1,0)}`, `chi_{(0,1)}` and `xi = chi_{(1,1)} - chi_{(1,0)} chi_{(0,1)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovariancePair {
    pub chi11: f64,
    pub chi11_closed_form: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub xi: f64,
}

/// Closed form for `chi_{(1,1)}`:
/// `mu / (E[tau] (mu + delta)^2) (E[X1 X2] / 2 + E[X1] E[X2] L(mu) / (1 - L(mu)))`.
pub fn chi11_closed_form(model: &ModelSpec) -> Result<f64> {
    if model.k() != 2 {
        return Err(Error::Dimension("closed form is for k = 2".into()));
    }
    let mu = model
        .common_exponential_rate()
        .ok_or_else(|| Error::NonExponentialDelay("closed form needs Exp(mu) delays".into()))?;
    let batch = model.batch();
    let e12 = batch.moment(&MultiIndex::new(vec![1, 1])?)?;
    let e1 = batch.moment(&MultiIndex::unit(2, 0))?;
    let e2 = batch.moment(&MultiIndex::unit(2, 1))?;
    let l = model.interarrival().laplace_real(mu)?;
    let d = model.delta();
    Ok(mu / (model.mean_interarrival() * (mu + d) * (mu + d))
        * (0.5 * e12 + e1 * e2 * l / (1.0 - l)))
}

/// `chi_{n(i)} = E[X_i] int_0^inf e^{-delta x} Pr(L_i > x) dx / E[tau]` for any delay law.
pub fn chi_first_general_delay(i: usize, model: &ModelSpec) -> Result<f64> {
    if i >= model.k() {
        return Err(Error::Dimension(format!("type {i} out of range for k = {}", model.k())));
    }
    let ex = model.batch().moment(&MultiIndex::unit(model.k(), i))?;
    Ok(ex * discounted_horizon(model.delay(i), model.delta()) / model.mean_interarrival())
}

fn discounted_horizon(delay: &DelayModel, delta: f64) -> f64 {
    delay.discounted_survival_integral(delta)
}

/// Truncated joint transform `E exp(sum_i q_i Z_i)` with a certified tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfSeries {
    pub value: f64,
    pub tail_bound: f64,
    pub max_order: u32,
}

/// Sums `prod_i q_i^{n_i} / n_i! chi_n` over `|n| <= max_order`.
///
/// The tail is bounded through `chi_n <= R_n / E[tau]`. The bound for the
/// terms of order above `max_order` is a geometric extrapolation of the
/// ratios of the next few order totals; `Radius` is returned when the ratio
/// reaches 1 or the bound exceeds `tol`.
pub fn mgf_series(q: &[f64], table: &mut MomentTable, max_order: u32, tol: f64) -> Result<MgfSeries> {
    let k = table.model().k();
    if q.len() != k {
        return Err(Error::Dimension(format!("q has {} entries, k = {k}", q.len())));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("q must be finite".into()));
    }
    let weight = |n: &MultiIndex| -> f64 {
        n.entries()
            .iter()
            .zip(q)
            .map(|(e, x)| x.powi(*e as i32) / factorial(*e))
            .product()
    };
    let mut acc = CompensatedSum::new();
    acc.add(1.0);
    for (n, chi) in table.all_up_to(max_order)? {
        acc.add(weight(&n) * chi);
    }
    let value = acc.value();
    if q.iter().all(|x| *x == 0.0) {
        return Ok(MgfSeries {
            value,
            tail_bound: 0.0,
            max_order,
        });
    }

    const LOOKAHEAD: u32 = 4;
    let mut bounds = BoundTable::new(table.model());
    let mean_tau = table.model().mean_interarrival();
    let mut totals = Vec::new();
    for h in max_order + 1..=max_order + 1 + LOOKAHEAD {
        let mut t = 0.0;
        for n in MultiIndex::with_order(k, h) {
            t += weight(&n).abs() * bounds.bound_r(&n)? / mean_tau;
        }
        totals.push(t);
    }
    let ratio = totals
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .fold(0.0, f64::max);
    let tail_bound = if ratio >= 1.0 {
        f64::INFINITY
    } else {
        totals[0] / (1.0 - ratio)
    };
    if !(tail_bound <= tol) {
        return Err(Error::Radius {
            bound: tail_bound,
            tol,
        });
    }
    Ok(MgfSeries {
        value,
        tail_bound,
        max_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{InterarrivalModel, Law};
    use crate::multi_index::BatchMomentProvider;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poisson(lambda: f64, mu: f64, delta: f64, batch: BatchMomentProvider) -> ModelSpec {
        ModelSpec::poisson_exponential(lambda, mu, delta, batch).unwrap()
    }

    fn idx(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    /// Raw moments of Poisson(m) through Touchard polynomials.
    fn poisson_raw_moment(m: f64, n: u32) -> f64 {
        // Stirling numbers of the second kind by recurrence
        let n = n as usize;
        let mut s = vec![vec![0.0f64; n + 1]; n + 1];
        s[0][0] = 1.0;
        for a in 1..=n {
            for b in 1..=a {
                s[a][b] = b as f64 * s[a - 1][b] + s[a - 1][b - 1];
            }
        }
        (0..=n).map(|b| s[n][b] * m.powi(b as i32)).sum()
    }

    #[test]
    fn mm_inf_moments_are_poisson() {
        for (lambda, mu) in [(1.0, 1.0), (2.0, 1.0), (0.7, 1.9)] {
            let mut t = MomentTable::new(&poisson(lambda, mu, 0.0, BatchMomentProvider::unit(1))).unwrap();
            for n in 1..=5 {
                let got = t.chi(&idx(&[n])).unwrap();
                let want = poisson_raw_moment(lambda / mu, n);
                assert!((got - want).abs() < 1e-9 * want.max(1.0), "n={n}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn first_moment_examples() {
        let mut t = MomentTable::new(&poisson(1.0, 2.0, 0.0, BatchMomentProvider::unit(1))).unwrap();
        assert_eq!(t.chi(&idx(&[1])).unwrap(), 0.5);
        let mut t = MomentTable::new(&poisson(1.0, 1.0, 1.0, BatchMomentProvider::unit(1))).unwrap();
        assert_eq!(t.chi(&idx(&[1])).unwrap(), 0.5);
        assert_eq!(t.chi(&idx(&[0])).unwrap(), 1.0);
    }

    #[test]
    fn d_at_zero_matches_chi() {
        let ia = InterarrivalModel::new(Law::Erlang { shape: 2, rate: 3.0 }).unwrap();
        let m = poisson(1.0, 1.3, 0.25, BatchMomentProvider::Multinomial { m: 3, p: vec![0.3, 0.7] })
            .with_interarrival(ia);
        let mut t = MomentTable::new(&m).unwrap();
        for n in MultiIndex::all_up_to(2, 4) {
            let chi = t.chi(&n).unwrap();
            let d0 = t.d_value(&n, 0).unwrap();
            assert!((d0 / m.mean_interarrival() - chi).abs() < 1e-13 * chi.max(1.0));
        }
    }

    #[test]
    fn d_value_example() {
        let mut t = MomentTable::new(&poisson(1.0, 1.0, 0.0, BatchMomentProvider::unit(1))).unwrap();
        // E[X] mu / ((mu + delta) (j+1) mu) L(j mu) = 1/2 * 1/2
        assert_eq!(t.d_value(&idx(&[1]), 1).unwrap(), 0.25);
    }

    #[test]
    fn rejects_non_common_rates() {
        let m = ModelSpec::new(
            InterarrivalModel::exponential(1.0).unwrap(),
            vec![DelayModel::exponential(1.0).unwrap(), DelayModel::exponential(2.0).unwrap()],
            0.0,
            BatchMomentProvider::unit(2),
        )
        .unwrap();
        assert!(matches!(MomentTable::new(&m), Err(Error::NonExponentialDelay(_))));
        let m = poisson(1.0, 1.0, 0.0, BatchMomentProvider::unit(2));
        let mut t = MomentTable::new(&m).unwrap();
        assert!(matches!(t.chi(&idx(&[1])), Err(Error::Dimension(_))));
    }

    #[test]
    fn little_identity_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let lambda = rng.random_range(0.2..3.0);
            let mu = rng.random_range(0.2..3.0);
            let delta = rng.random_range(0.0..2.0);
            let m = poisson(lambda, mu, delta, BatchMomentProvider::unit(1));
            let mut t = MomentTable::new(&m).unwrap();
            let want = lambda / (mu + delta);
            assert!((t.chi(&idx(&[1])).unwrap() - want).abs() < 1e-12);
            assert!((chi_first_general_delay(0, &m).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn memoized_values_are_bit_identical() {
        let m = poisson(1.0, 1.0, 0.2, BatchMomentProvider::Multinomial { m: 2, p: vec![0.5, 0.5] });
        let mut a = MomentTable::new(&m).unwrap();
        let n = idx(&[2, 2]);
        let first = a.chi(&n).unwrap();
        let second = a.chi(&n).unwrap();
        let fresh = MomentTable::new(&m).unwrap().chi(&n).unwrap();
        assert_eq!(first.to_bits(), second.to_bits());
        assert_eq!(first.to_bits(), fresh.to_bits());
    }

    #[test]
    fn poisson_thinning_gives_independent_counts() {
        // Multinomial(1, p) batches at rate 1 split into independent Poisson streams.
        let m = poisson(1.0, 1.0, 0.0, BatchMomentProvider::Multinomial { m: 1, p: vec![0.5, 0.5] });
        let mut t = MomentTable::new(&m).unwrap();
        let c = t.covariance_pair().unwrap();
        assert!((c.chi11 - 0.25).abs() < 1e-14);
        assert!((c.chi11_closed_form - 0.25).abs() < 1e-14);
        assert!(c.xi.abs() < 1e-14);
        assert!((t.chi(&idx(&[2, 1])).unwrap() - 0.375).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_recursion_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let lambda = rng.random_range(0.3..3.0);
            let shape = rng.random_range(1..4u32);
            let ia = InterarrivalModel::new(Law::Erlang { shape, rate: lambda * shape as f64 }).unwrap();
            let p1 = rng.random_range(0.05..0.95);
            let m = poisson(
                1.0,
                rng.random_range(0.2..3.0),
                rng.random_range(0.0..1.5),
                BatchMomentProvider::Multinomial { m: rng.random_range(1..5), p: vec![p1, 1.0 - p1] },
            )
            .with_interarrival(ia);
            let mut t = MomentTable::new(&m).unwrap();
            let c = t.covariance_pair().unwrap();
            assert!(
                (c.chi11 - c.chi11_closed_form).abs() < 1e-12 * c.chi11.abs().max(1.0),
                "{} vs {}",
                c.chi11,
                c.chi11_closed_form
            );
        }
    }

    #[test]
    fn moments_scale_with_batch_moments() {
        // Constant batches c: chi_n scales like c^n.
        let base = poisson(1.0, 1.0, 0.3, BatchMomentProvider::Constant(vec![1.0]));
        let scaled = poisson(1.0, 1.0, 0.3, BatchMomentProvider::Constant(vec![2.5]));
        let mut a = MomentTable::new(&base).unwrap();
        let mut b = MomentTable::new(&scaled).unwrap();
        for n in 1..=4 {
            let x = a.chi(&idx(&[n])).unwrap();
            let y = b.chi(&idx(&[n])).unwrap();
            assert!((y - 2.5f64.powi(n as i32) * x).abs() < 1e-12 * y);
        }
    }

    #[test]
    fn chi_is_dominated_by_r_bound() {
        let m = poisson(1.0, 1.0, 0.0, BatchMomentProvider::Multinomial { m: 2, p: vec![0.5, 0.5] });
        let mut t = MomentTable::new(&m).unwrap();
        let mut r = BoundTable::new(&m);
        for n in MultiIndex::all_up_to(2, 4) {
            assert!(m.mean_interarrival() * t.chi(&n).unwrap() <= r.bound_r(&n).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn mgf_of_mm_inf_is_poisson() {
        let m = poisson(1.0, 1.0, 0.0, BatchMomentProvider::unit(1));
        let mut t = MomentTable::new(&m).unwrap();
        let q = 0.01f64;
        let s = mgf_series(&[q], &mut t, 6, 1e-6).unwrap();
        assert!((s.value - (q.exp() - 1.0).exp()).abs() < 1e-6);
        assert!(s.tail_bound < 1e-6);
        assert_eq!(mgf_series(&[0.0], &mut t, 3, 1e-6).unwrap().value, 1.0);
        assert!(matches!(mgf_series(&[5.0], &mut t, 2, 1e-6), Err(Error::Radius { .. })));
        assert!(matches!(mgf_series(&[0.1, 0.1], &mut t, 2, 1e-6), Err(Error::Dimension(_))));
    }

    #[test]
    fn mgf_is_monotone_in_nonnegative_q() {
        let m = poisson(1.0, 1.0, 0.2, BatchMomentProvider::Multinomial { m: 2, p: vec![0.4, 0.6] });
        let mut t = MomentTable::new(&m).unwrap();
        let a = mgf_series(&[0.01, 0.01], &mut t, 6, 1e-6).unwrap().value;
        let b = mgf_series(&[0.02, 0.01], &mut t, 6, 1e-6).unwrap().value;
        let c = mgf_series(&[0.02, 0.02], &mut t, 6, 1e-6).unwrap().value;
        assert!(a <= b && b <= c);
    }
}
