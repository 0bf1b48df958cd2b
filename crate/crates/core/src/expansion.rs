//! Exponential expansion of the first moment for rational interarrival laws.
//!
//! For an `Exp(mu)` delay the transform of `M~_{n(i)}` is
//! `c L(s) / ((s + mu)(1 - L(s)))` with `c = E[X_i] mu / (mu + delta)`.
//! Its poles are `0`, `-mu` and `-z_k` for the roots `z_k` of
//! `phi(z) = E e^{z tau} = 1` with positive real part, so
//!
//! `M~(t) = chi + A* e^{-mu t} + sum_k B_k e^{-z_k t}`.
//!
//! The roots come from the companion matrix of `num - den` after deflating
//! the trivial root at 0, polished by Newton steps. With every root kept the
//! expansion is exact; by default only the roots with `Re z < mu` are kept,
//! leaving an `O(e^{-mu t})` remainder.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::distributions::{Law, RationalTransform};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::multi_index::MultiIndex;
use crate::numeric::Poly;

/// A root `z` of `phi(z) = 1` with `gamma = -1 / (z phi'(z))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub z: Complex64,
    pub gamma: Complex64,
}

/// Roots sorted by real part, then imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    pub roots: Vec<Root>,
    pub mean: f64,
    pub second_moment: f64,
}

impl RootSet {
    /// Identity `sum_k gamma_k = 1 - E[tau^2] / (2 E[tau]^2)`; exact only for the full set.
    pub fn gamma_sum_defect(&self) -> f64 {
        let s: Complex64 = self.roots.iter().map(|r| r.gamma).sum();
        (s.re - (1.0 - self.second_moment / (2.0 * self.mean * self.mean))).abs()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RootOptions {
    /// Keep only roots with `Re z <= search_bound`. `None` keeps all.
    pub search_bound: Option<f64>,
}

fn rational(law: &Law) -> Result<RationalTransform> {
    law.rational_transform().ok_or_else(|| {
        Error::UnsupportedFamily(format!("{} has no rational transform", law.name()))
    })
}

/// Roots of `E e^{z tau} = 1` with positive real part.
pub fn find_roots(law: &Law, opts: RootOptions) -> Result<RootSet> {
    let rt = rational(law)?;
    let p = rt.numerator.sub(&rt.denominator).trimmed();
    let d = p.degree();
    let mut roots = Vec::new();
    if d >= 2 {
        // p(0) = 0; divide by z
        let q = Poly(p.0[1..].to_vec());
        let lead = q.0[q.degree()];
        let m = q.degree();
        let mut companion = DMatrix::<f64>::zeros(m, m);
        for i in 1..m {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..m {
            companion[(i, m - 1)] = -q.0[i] / lead;
        }
        let dp = p.derivative();
        for ev in companion.complex_eigenvalues().iter() {
            let mut z = Complex64::new(ev.re, ev.im);
            for _ in 0..50 {
                let step = p.eval(z) / dp.eval(z);
                z -= step;
                if step.norm() <= 1e-16 * z.norm().max(1.0) {
                    break;
                }
            }
            if z.im.abs() < 1e-12 * z.norm().max(1.0) {
                z.im = 0.0;
            }
            if z.re <= 1e-12 {
                continue;
            }
            if let Some(bound) = opts.search_bound {
                if z.re > bound {
                    continue;
                }
            }
            if rt.denominator.eval(z).norm() < 1e-12 {
                return Err(Error::Pole(format!("{z} (also a root)")));
            }
            let dphi = rt.derivative(z);
            if dphi.norm() < 1e-10 {
                return Err(Error::MultipleRoot(format!("phi'(z) vanishes at z = {z}")));
            }
            roots.push(Root {
                z,
                gamma: -1.0 / (z * dphi),
            });
        }
    }
    roots.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    for w in roots.windows(2) {
        if (w[0].z - w[1].z).norm() < 1e-8 * w[0].z.norm().max(1.0) {
            return Err(Error::MultipleRoot(format!(
                "roots {} and {} nearly coincide",
                w[0].z, w[1].z
            )));
        }
    }
    Ok(RootSet {
        roots,
        mean: law.mean(),
        second_moment: law.second_moment(),
    })
}

/// Renewal function `U(t) = t / E[tau] + E[tau^2] / (2 E[tau]^2) + sum_k gamma_k e^{-z_k t}`,
/// counting the renewal at 0.
pub fn v_expansion(t: f64, roots: &RootSet) -> f64 {
    let tail: Complex64 = roots
        .roots
        .iter()
        .map(|r| r.gamma * (-r.z * t).exp())
        .sum();
    t / roots.mean + roots.second_moment / (2.0 * roots.mean * roots.mean) + tail.re
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ExpansionOptions {
    /// Keep every root instead of only those with `Re z < mu`.
    pub keep_all_roots: bool,
    /// Use the opposite sign on the bracket in the root-sum form of `A*`.
    /// Kept to demonstrate that this variant disagrees with the solver.
    pub literal_sign: bool,
}

/// `B_k e^{-z_k t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionTerm {
    pub rate_re: f64,
    pub rate_im: f64,
    pub coeff_re: f64,
    pub coeff_im: f64,
}

impl ExpansionTerm {
    fn rate(&self) -> Complex64 {
        Complex64::new(self.rate_re, self.rate_im)
    }

    fn coeff(&self) -> Complex64 {
        Complex64::new(self.coeff_re, self.coeff_im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionResult {
    pub chi: f64,
    pub mu: f64,
    pub a_star: f64,
    pub b_terms: Vec<ExpansionTerm>,
    /// Number of roots with `Re z < mu`.
    pub i0: usize,
    /// Decay rate of the remainder, `min(mu, Re z_{i0+1})`; infinite when exact.
    pub error_rate: f64,
}

/// Coefficients of the expansion of `M~_{n(i)}`.
pub fn expansion_coeffs(i: usize, model: &ModelSpec, opts: ExpansionOptions) -> Result<ExpansionResult> {
    let k = model.k();
    if i >= k {
        return Err(Error::Dimension(format!("type {i} out of range for k = {k}")));
    }
    let mu = model.delay(i).exponential_rate().ok_or_else(|| {
        Error::NonExponentialDelay(format!("type {i} delay is not exponential"))
    })?;
    let law = model.interarrival().law();
    let rt = rational(law)?;
    if rt.denominator.eval_real(mu).abs() < 1e-12 {
        return Err(Error::Pole(format!("{} (mu = {mu})", -mu)));
    }
    let phi_mu = rt.numerator.eval_real(mu) / rt.denominator.eval_real(mu);
    if (1.0 - phi_mu).abs() < 1e-10 {
        return Err(Error::Nondegeneracy(format!("mu = {mu} is a root of phi(z) = 1")));
    }
    let all = find_roots(law, RootOptions::default())?;
    if all.roots.iter().any(|r| (r.z - mu).norm() < 1e-8 * mu.max(1.0)) {
        return Err(Error::Nondegeneracy(format!("mu = {mu} coincides with a root")));
    }
    let i0 = all.roots.iter().filter(|r| r.z.re < mu).count();
    let kept: Vec<Root> = if opts.keep_all_roots {
        all.roots.clone()
    } else {
        all.roots.iter().copied().filter(|r| r.z.re < mu).collect()
    };

    let ex = model.batch().moment(&MultiIndex::unit(k, i))?;
    let delta = model.delta();
    let c = ex * mu / (mu + delta);
    let mean = all.mean;
    let chi = ex / (mean * (mu + delta));

    // L(-mu) / (1 - L(-mu)) = L(-mu) (E tau^2 / (2 E tau^2) - 1/(mu E tau) - sum gamma_k mu / (z_k - mu))
    let root_sum: Complex64 = kept.iter().map(|r| r.gamma * mu / (r.z - mu)).sum();
    let ratio = all.second_moment / (2.0 * mean * mean);
    let bracket = if opts.literal_sign {
        -ratio + root_sum.re
    } else {
        ratio - root_sum.re
    };
    let a_star = c * bracket * phi_mu - chi * phi_mu;

    let b_terms = kept
        .iter()
        .map(|r| {
            let b = c * r.gamma * r.z / (r.z - mu);
            ExpansionTerm {
                rate_re: r.z.re,
                rate_im: r.z.im,
                coeff_re: b.re,
                coeff_im: b.im,
            }
        })
        .collect();
    let error_rate = if opts.keep_all_roots {
        f64::INFINITY
    } else {
        all.roots
            .get(i0)
            .map(|r| r.z.re)
            .unwrap_or(f64::INFINITY)
            .min(mu)
    };
    Ok(ExpansionResult {
        chi,
        mu,
        a_star,
        b_terms,
        i0,
        error_rate,
    })
}

/// Residue of the transform at `-mu`, `c L(-mu) / (1 - L(-mu))`, computed directly.
pub fn a_star_direct(i: usize, model: &ModelSpec) -> Result<f64> {
    let mu = model.delay(i).exponential_rate().ok_or_else(|| {
        Error::NonExponentialDelay(format!("type {i} delay is not exponential"))
    })?;
    let rt = rational(model.interarrival().law())?;
    let phi_mu = rt.numerator.eval_real(mu) / rt.denominator.eval_real(mu);
    let ex = model.batch().moment(&MultiIndex::unit(model.k(), i))?;
    Ok(ex * mu / (mu + model.delta()) * phi_mu / (1.0 - phi_mu))
}

/// `chi + A* e^{-mu t} + Re sum_k B_k e^{-z_k t}`.
pub fn expansion_eval(res: &ExpansionResult, t: f64) -> f64 {
    let tail: Complex64 = res
        .b_terms
        .iter()
        .map(|b| b.coeff() * (-b.rate() * t).exp())
        .sum();
    res.chi + res.a_star * (-res.mu * t).exp() + tail.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{DelayModel, InterarrivalModel};
    use crate::multi_index::BatchMomentProvider;
    use crate::transient::{SolverOptions, TransientSolver};

    fn model(law: Law, mu: f64, delta: f64) -> ModelSpec {
        ModelSpec::new(
            InterarrivalModel::new(law).unwrap(),
            vec![DelayModel::exponential(mu).unwrap()],
            delta,
            BatchMomentProvider::unit(1),
        )
        .unwrap()
    }

    #[test]
    fn erlang_and_hyperexponential_roots() {
        let r = find_roots(&Law::Erlang { shape: 2, rate: 2.0 }, RootOptions::default()).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0].z.re - 4.0).abs() < 1e-12);
        assert!((r.roots[0].gamma.re - 0.25).abs() < 1e-12);
        let h = Law::Hyperexponential {
            weights: vec![0.5, 0.5],
            rates: vec![1.0, 3.0],
        };
        let r = find_roots(&h, RootOptions::default()).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0].z.re - 2.0).abs() < 1e-12);
        assert!((r.roots[0].gamma.re + 0.25).abs() < 1e-12);
        let e = find_roots(&Law::Exponential { rate: 1.0 }, RootOptions::default()).unwrap();
        assert!(e.roots.is_empty());
        assert!(matches!(
            find_roots(&Law::Uniform { b: 1.0 }, RootOptions::default()),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn complex_roots_satisfy_gamma_identity() {
        for shape in 3..=6 {
            let law = Law::Erlang { shape, rate: 1.7 };
            let r = find_roots(&law, RootOptions::default()).unwrap();
            assert_eq!(r.roots.len(), shape as usize - 1);
            let rt = law.rational_transform().unwrap();
            for root in &r.roots {
                assert!((rt.eval(root.z) - 1.0).norm() < 1e-10);
            }
            assert!(r.gamma_sum_defect() < 1e-10);
        }
        let bounded = find_roots(
            &Law::Erlang { shape: 2, rate: 2.0 },
            RootOptions {
                search_bound: Some(2.0),
            },
        )
        .unwrap();
        assert!(bounded.roots.is_empty());
    }

    #[test]
    fn renewal_function_matches_erlang_closed_form() {
        let beta = 1.3;
        let r = find_roots(&Law::Erlang { shape: 2, rate: beta }, RootOptions::default()).unwrap();
        for t in [0.0, 0.1, 1.0, 5.0] {
            let exact = beta * t / 2.0 + 0.75 + 0.25 * (-2.0 * beta * t).exp();
            assert!((v_expansion(t, &r) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_residue_and_sign_variant() {
        let m = model(Law::Exponential { rate: 2.0 }, 1.0, 0.0);
        let exact = expansion_coeffs(0, &m, ExpansionOptions::default()).unwrap();
        assert!((exact.a_star + 2.0).abs() < 1e-12);
        assert!((exact.chi - 2.0).abs() < 1e-15);
        assert!((a_star_direct(0, &m).unwrap() + 2.0).abs() < 1e-12);
        let literal = expansion_coeffs(
            0,
            &m,
            ExpansionOptions {
                literal_sign: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((literal.a_star + 6.0).abs() < 1e-12);
    }

    #[test]
    fn full_expansion_is_exact() {
        let laws = [
            Law::Erlang { shape: 2, rate: 2.0 },
            Law::Erlang { shape: 4, rate: 3.0 },
            Law::Hyperexponential {
                weights: vec![0.5, 0.5],
                rates: vec![1.0, 3.0],
            },
        ];
        for law in laws {
            let m = model(law, 0.8, 0.3);
            let opts = ExpansionOptions {
                keep_all_roots: true,
                ..Default::default()
            };
            let e = expansion_coeffs(0, &m, opts).unwrap();
            assert!((e.a_star - a_star_direct(0, &m).unwrap()).abs() < 1e-10);
            let mut s = TransientSolver::new(&m, SolverOptions::new(2e-3, 10.0)).unwrap();
            let g = s.solve_renewal(&MultiIndex::unit(1, 0)).unwrap();
            for t in [0.5, 2.0, 6.0, 10.0] {
                assert!((expansion_eval(&e, t) - g.at(t)).abs() < 1e-8, "t = {t}");
            }
        }
    }

    #[test]
    fn truncation_remainder_rate() {
        let m = model(Law::Erlang { shape: 2, rate: 2.0 }, 0.5, 0.0);
        let e = expansion_coeffs(0, &m, ExpansionOptions::default()).unwrap();
        assert_eq!(e.i0, 0);
        assert!(e.b_terms.is_empty());
        assert_eq!(e.error_rate, 0.5);
        // dropped root shifts A* by c gamma mu / (z - mu) L(-mu) = 0.25 * 0.5/3.5 * 16/9
        let shift = a_star_direct(0, &m).unwrap() - e.a_star;
        assert!((shift + 0.25 * 0.5 / 3.5 * 16.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_parameters_are_rejected() {
        // Erlang(2,2): phi has a pole at 2 and a root at 4
        let pole = model(Law::Erlang { shape: 2, rate: 2.0 }, 2.0, 0.0);
        assert!(matches!(
            expansion_coeffs(0, &pole, ExpansionOptions::default()),
            Err(Error::Pole(_))
        ));
        let root = model(Law::Erlang { shape: 2, rate: 2.0 }, 4.0, 0.0);
        assert!(matches!(
            expansion_coeffs(0, &root, ExpansionOptions::default()),
            Err(Error::Nondegeneracy(_))
        ));
    }
}
