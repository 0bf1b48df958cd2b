//! Grid solutions of the renewal equation `M~_n = b~_n + M~_n * F`.
//!
//! Everything lives on a uniform grid `0, h, 2h, ..., t_max`. The
//! inhomogeneous term `b~_n` is a convolution of a lower-order kernel with
//! the interarrival density, evaluated with the trapezoidal rule. The
//! second-kind Volterra equation is marched with the same rule; the history
//! sum is evaluated by divide and conquer with FFT block products, which
//! keeps 10^5-point grids cheap.
//!
//! With `extrapolate` set (the default) every quantity is computed on both
//! `h` and `h/2` and combined as `(4 M_{h/2} - M_h) / 3`, cancelling the
//! `h^2` term of the trapezoidal error expansion.

use std::cell::RefCell;
use std::collections::HashMap;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::distributions::Law;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::multi_index::{binom_product, MultiIndex};

/// Uniformly sampled function of time on `[0, t_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    h: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || values.is_empty() {
            return Err(Error::InvalidParameter("grid needs h > 0 and samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite grid sample".into()));
        }
        Ok(Self { h, values })
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.h * (self.values.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self, i: usize) -> f64 {
        self.h * i as f64
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("non-empty")
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation, clamped to the grid.
    pub fn at(&self, t: f64) -> f64 {
        let x = (t / self.h).clamp(0.0, (self.values.len() - 1) as f64);
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.last();
        }
        let w = x - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Trapezoidal `int_0^{t_max} e^{-s t} g(t) dt`.
    pub fn laplace(&self, s: f64) -> f64 {
        let n = self.values.len();
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += w * (-s * self.time(i)).exp() * v;
        }
        acc * self.h
    }

    fn same_grid(&self, other: &GridFunction) -> bool {
        self.h == other.h && self.values.len() == other.values.len()
    }
}

/// Grid and scheme for the transient solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub h: f64,
    pub t_max: f64,
    pub extrapolate: bool,
}

impl SolverOptions {
    pub fn new(h: f64, t_max: f64) -> Self {
        Self {
            h,
            t_max,
            extrapolate: true,
        }
    }

    /// `h = 1e-3 E[tau]`, `t_max = 40 / mu` with `mu` the slowest delay rate `1 / max E[L]`.
    pub fn default_for(model: &ModelSpec) -> Self {
        let slowest = model
            .delays()
            .iter()
            .map(|d| d.mean())
            .fold(0.0, f64::max);
        Self::new(1e-3 * model.mean_interarrival(), 40.0 * slowest)
    }

    pub fn plain(mut self) -> Self {
        self.extrapolate = false;
        self
    }

    fn len(&self) -> usize {
        (self.t_max / self.h + 1e-9).floor() as usize + 1
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.t_max > 0.0 && self.h.is_finite() && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid needs h > 0 and t_max > 0, got h = {}, t_max = {}",
                self.h, self.t_max
            )));
        }
        if self.len() < 3 {
            return Err(Error::InvalidParameter("grid needs at least 3 points".into()));
        }
        Ok(())
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// First `out_len` terms of the linear convolution of `a` and `b`.
pub fn convolve(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_len];
    if a.is_empty() || b.is_empty() {
        return out;
    }
    if a.len().min(b.len()) <= 32 || a.len() * b.len() <= 1 << 14 {
        for (i, x) in a.iter().enumerate() {
            if i >= out_len {
                break;
            }
            for (j, y) in b.iter().enumerate().take(out_len - i) {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let full = a.len() + b.len() - 1;
    let size = full.next_power_of_two();
    let mut fa: Vec<Complex64> = a.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    fa.resize(size, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    fb.resize(size, Complex64::new(0.0, 0.0));
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(size), p.plan_fft_inverse(size))
    });
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    for (o, v) in out.iter_mut().zip(&fa) {
        *o = v.re * scale;
    }
    out
}

/// Trapezoidal `int_0^{t_i} g(t_i - s) f(s) ds` at every grid point.
pub fn trapezoid_convolution(g: &[f64], f: &[f64], h: f64) -> Vec<f64> {
    let n = g.len();
    let full = convolve(g, f, n);
    let mut out = vec![0.0; n];
    for i in 1..n {
        out[i] = h * (full[i] - 0.5 * (g[i] * f[0] + g[0] * f[i]));
    }
    out
}

/// Trapezoidal running integral `int_0^{t_i} g`.
pub fn cumulative_trapezoid(g: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    for i in 1..g.len() {
        out[i] = out[i - 1] + 0.5 * h * (g[i - 1] + g[i]);
    }
    out
}

/// Solves `m(t) = b(t) + int_0^t m(t - s) f(s) ds` with the trapezoidal rule.
pub fn solve_volterra(b: &[f64], f: &[f64], h: f64) -> Vec<f64> {
    let n = b.len();
    let mut m = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let denom = 1.0 - 0.5 * h * f[0];
    volterra_block(0, n, &mut m, &mut acc, b, f, h, denom);
    m
}

#[allow(clippy::too_many_arguments)]
fn volterra_block(
    lo: usize,
    hi: usize,
    m: &mut [f64],
    acc: &mut [f64],
    b: &[f64],
    f: &[f64],
    h: f64,
    denom: f64,
) {
    if hi - lo <= 64 {
        for i in lo..hi {
            if i == 0 {
                m[0] = b[0];
                continue;
            }
            let mut s = acc[i];
            for q in lo.max(1)..i {
                s += m[q] * f[i - q];
            }
            m[i] = (b[i] + h * s + 0.5 * h * f[i] * m[0]) / denom;
        }
        return;
    }
    let mid = (lo + hi) / 2;
    volterra_block(lo, mid, m, acc, b, f, h, denom);
    let mut src = m[lo..mid].to_vec();
    if lo == 0 {
        src[0] = 0.0;
    }
    let part = convolve(&src, &f[..hi - lo], hi - lo);
    for i in mid..hi {
        acc[i] += part[i - lo];
    }
    volterra_block(mid, hi, m, acc, b, f, h, denom);
}

/// Reference O(N^2) march, kept for cross-checking the block solver.
pub fn solve_volterra_direct(b: &[f64], f: &[f64], h: f64) -> Vec<f64> {
    let n = b.len();
    let mut m = vec![0.0; n];
    m[0] = b[0];
    let denom = 1.0 - 0.5 * h * f[0];
    for i in 1..n {
        let s: f64 = (1..i).map(|q| m[q] * f[i - q]).sum();
        m[i] = (b[i] + h * s + 0.5 * h * f[i] * m[0]) / denom;
    }
    m
}

/// How the renewal measure enters `M~ = b~ + int b~(t - y) u(y) dy`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RenewalMode {
    /// March the Volterra equation with the interarrival density.
    Volterra,
    /// Renewal density replaced by a constant: exact for Poisson arrivals,
    /// a one-sided bound when the constant is `f(0+)` and the hazard is monotone.
    ConstantDensity(f64),
}

/// Single-grid recursive solver over the partial order of multi-indices.
struct GridSolver {
    model: ModelSpec,
    h: f64,
    len: usize,
    density: Vec<f64>,
    mode: RenewalMode,
    solutions: HashMap<MultiIndex, Vec<f64>>,
    b_terms: HashMap<MultiIndex, Vec<f64>>,
}

impl GridSolver {
    fn new(model: &ModelSpec, h: f64, len: usize, mode: RenewalMode) -> Self {
        let ia = model.interarrival();
        let mut density: Vec<f64> = (0..len).map(|i| ia.density_value(h * i as f64)).collect();
        density[0] = ia.f0();
        Self {
            model: model.clone(),
            h,
            len,
            density,
            mode,
            solutions: HashMap::new(),
            b_terms: HashMap::new(),
        }
    }

    fn solution(&mut self, n: &MultiIndex) -> Result<&[f64]> {
        if n.is_zero() {
            return Err(Error::InvalidParameter("the zero index is the constant 1".into()));
        }
        if !self.solutions.contains_key(n) {
            let b = self.b_tilde(n)?.to_vec();
            let m = match self.mode {
                RenewalMode::Volterra => solve_volterra(&b, &self.density, self.h),
                RenewalMode::ConstantDensity(rate) => {
                    let cum = cumulative_trapezoid(&b, self.h);
                    b.iter().zip(&cum).map(|(x, c)| x + rate * c).collect()
                }
            };
            self.solutions.insert(n.clone(), m);
        }
        Ok(&self.solutions[n])
    }

    fn b_tilde(&mut self, n: &MultiIndex) -> Result<&[f64]> {
        if n.k() != self.model.k() {
            return Err(Error::Dimension(format!(
                "index {n} does not match k = {}",
                self.model.k()
            )));
        }
        if !self.b_terms.contains_key(n) {
            let below = n.iterate_below();
            let mut lower = HashMap::new();
            for l in below.iter().filter(|l| !l.is_zero()) {
                lower.insert(l.clone(), self.solution(l)?.to_vec());
            }
            let kernel = b_tilde_kernel(n, &self.model, &lower, self.h, self.len)?;
            let b = trapezoid_convolution(&kernel, &self.density, self.h);
            self.b_terms.insert(n.clone(), b);
        }
        Ok(&self.b_terms[n])
    }
}

/// `g(u) = sum_{l<n} C(n,l) E[X^{n-l}] M~_l(u) prod_{j in C_l} e^{(n_j-l_j) delta u} omega_bar_{(n_j-l_j) delta, j}(u)`.
fn b_tilde_kernel(
    n: &MultiIndex,
    model: &ModelSpec,
    lower: &HashMap<MultiIndex, Vec<f64>>,
    h: f64,
    len: usize,
) -> Result<Vec<f64>> {
    let delta = model.delta();
    let mut kernel = vec![0.0; len];
    for l in n.iterate_below() {
        let diff = n.checked_sub(&l).expect("l <= n");
        let coeff = binom_product(&l, n) as f64 * model.batch().moment(&diff)?;
        if coeff == 0.0 {
            continue;
        }
        let support = MultiIndex::support_set(&l, n)?;
        let lower_values = if l.is_zero() {
            None
        } else {
            let v = lower
                .get(&l)
                .ok_or_else(|| Error::GridMismatch(format!("missing lower solution for {l}")))?;
            if v.len() != len {
                return Err(Error::GridMismatch(format!("lower solution for {l} has wrong length")));
            }
            Some(v)
        };
        for (i, slot) in kernel.iter_mut().enumerate() {
            let u = h * i as f64;
            let mut term = coeff;
            for &j in &support {
                let m = (diff.entries()[j]) as f64;
                term *= model.delay(j).residual_discounted(m * delta, u);
            }
            if let Some(v) = lower_values {
                term *= v[i];
            }
            *slot += term;
        }
    }
    Ok(kernel)
}

/// Transient solver, optionally Richardson-extrapolated over `h` and `h/2`.
pub struct TransientSolver {
    opts: SolverOptions,
    coarse: GridSolver,
    fine: Option<GridSolver>,
}

impl TransientSolver {
    pub fn new(model: &ModelSpec, opts: SolverOptions) -> Result<Self> {
        Self::with_mode(model, opts, default_mode(model))
    }

    fn with_mode(model: &ModelSpec, opts: SolverOptions, mode: RenewalMode) -> Result<Self> {
        opts.validate()?;
        let len = opts.len();
        let coarse = GridSolver::new(model, opts.h, len, mode);
        let fine = opts
            .extrapolate
            .then(|| GridSolver::new(model, opts.h / 2.0, 2 * len - 1, mode));
        Ok(Self { opts, coarse, fine })
    }

    /// Forces the Volterra march even when a closed-form renewal density exists.
    pub fn volterra(model: &ModelSpec, opts: SolverOptions) -> Result<Self> {
        Self::with_mode(model, opts, RenewalMode::Volterra)
    }

    pub fn options(&self) -> SolverOptions {
        self.opts
    }

    /// `M~_n` on the grid.
    pub fn solve_renewal(&mut self, n: &MultiIndex) -> Result<GridFunction> {
        let coarse = self.coarse.solution(n)?.to_vec();
        let values = match &mut self.fine {
            Some(fine) => extrapolate(&coarse, fine.solution(n)?),
            None => coarse,
        };
        GridFunction::new(self.opts.h, values)
    }

    /// `b~_n` on the grid.
    pub fn build_b_tilde(&mut self, n: &MultiIndex) -> Result<GridFunction> {
        let coarse = self.coarse.b_tilde(n)?.to_vec();
        let values = match &mut self.fine {
            Some(fine) => extrapolate(&coarse, fine.b_tilde(n)?),
            None => coarse,
        };
        GridFunction::new(self.opts.h, values)
    }
}

fn default_mode(model: &ModelSpec) -> RenewalMode {
    match model.interarrival().law() {
        Law::Exponential { rate } => RenewalMode::ConstantDensity(*rate),
        _ => RenewalMode::Volterra,
    }
}

fn extrapolate(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    coarse
        .iter()
        .enumerate()
        .map(|(i, c)| (4.0 * fine[2 * i] - c) / 3.0)
        .collect()
}

/// Builds `b~_n` from caller-supplied lower solutions `M~_l`, `0 < l < n`.
pub fn build_b_tilde(
    n: &MultiIndex,
    model: &ModelSpec,
    lower_solutions: &HashMap<MultiIndex, GridFunction>,
    h: f64,
    len: usize,
) -> Result<GridFunction> {
    let mut lower = HashMap::new();
    for (l, g) in lower_solutions {
        if g.step() != h || g.len() != len {
            return Err(Error::GridMismatch(format!(
                "solution for {l} is on a different grid"
            )));
        }
        lower.insert(l.clone(), g.values().to_vec());
    }
    if let Some((a, b)) = lower_solutions
        .values()
        .zip(lower_solutions.values().skip(1))
        .find(|(a, b)| !a.same_grid(b))
    {
        return Err(Error::GridMismatch(format!(
            "grids of length {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    let kernel = b_tilde_kernel(n, model, &lower, h, len)?;
    let ia = model.interarrival();
    let mut density: Vec<f64> = (0..len).map(|i| ia.density_value(h * i as f64)).collect();
    density[0] = ia.f0();
    GridFunction::new(h, trapezoid_convolution(&kernel, &density, h))
}

/// Direction of a transient bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    Lower,
    Upper,
    /// Constant hazard: lower and upper at once.
    Exact,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransientBound {
    pub kind: BoundKind,
    pub values: GridFunction,
}

/// Transient bound `h_n(t)` from the monotone-hazard renewal density bounds.
///
/// `h_n = b^h_n + f(0+) int_0^t b^h_n`, where `b^h_n` is `b~_n` built from the
/// lower-order bounds `h_l` (`h_0 = 1`). For IFR arrivals the renewal
/// density is at least `f(0+)` and `h_n <= M~_n`; for DFR arrivals it is at
/// most `f(0+)` and `h_n >= M~_n`.
pub fn bound_transient(
    n: &MultiIndex,
    model: &ModelSpec,
    opts: SolverOptions,
) -> Result<TransientBound> {
    let hazard = model.interarrival().hazard_class();
    let kind = match (hazard.is_ifr(), hazard.is_dfr()) {
        (true, true) => BoundKind::Exact,
        (true, false) => BoundKind::Lower,
        (false, true) => BoundKind::Upper,
        (false, false) => return Err(Error::HazardClass),
    };
    let f0 = model.interarrival().f0();
    let mut solver = TransientSolver::with_mode(model, opts, RenewalMode::ConstantDensity(f0))?;
    Ok(TransientBound {
        kind,
        values: solver.solve_renewal(n)?,
    })
}

/// Uniform bounds `R_n >= sup_t M~_n(t)`, memoized over the partial order.
#[derive(Debug, Clone)]
pub struct BoundTable {
    model: ModelSpec,
    c: f64,
    values: HashMap<MultiIndex, f64>,
}

impl BoundTable {
    pub fn new(model: &ModelSpec) -> Self {
        Self {
            model: model.clone(),
            c: model.interarrival().density_sup(),
            values: HashMap::new(),
        }
    }

    /// The renewal-density bound `C` in use.
    pub fn density_bound(&self) -> f64 {
        self.c
    }

    pub fn bound_r(&mut self, n: &MultiIndex) -> Result<f64> {
        if n.k() != self.model.k() {
            return Err(Error::Dimension(format!("index {n} does not match k")));
        }
        if n.is_zero() {
            return Ok(1.0);
        }
        if let Some(v) = self.values.get(n) {
            return Ok(*v);
        }
        let value = if let Some(i) = n.unit_position() {
            // delta^{-1} (1 - E e^{-delta L}) = int e^{-delta x} Pr(L > x) dx, E[L] at delta = 0
            let horizon = self.model.delay(i).discounted_survival_integral(self.model.delta());
            self.c * self.model.batch().moment(n)? * horizon
        } else {
            let mut acc = 0.0;
            for l in n.iterate_below() {
                let diff = n.checked_sub(&l).expect("l <= n");
                let coeff = binom_product(&l, n) as f64 * self.model.batch().moment(&diff)?;
                if coeff == 0.0 {
                    continue;
                }
                let min_mean = MultiIndex::support_set(&l, n)?
                    .into_iter()
                    .map(|j| self.model.delay(j).mean())
                    .fold(f64::INFINITY, f64::min);
                acc += coeff * min_mean * self.bound_r(&l)?;
            }
            self.c * acc
        };
        self.values.insert(n.clone(), value);
        Ok(value)
    }
}

pub fn bound_r(n: &MultiIndex, model: &ModelSpec) -> Result<f64> {
    BoundTable::new(model).bound_r(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{DelayModel, InterarrivalModel};
    use crate::multi_index::BatchMomentProvider;

    fn mm_inf(lambda: f64, mu: f64, delta: f64) -> ModelSpec {
        ModelSpec::poisson_exponential(lambda, mu, delta, BatchMomentProvider::unit(1)).unwrap()
    }

    fn one() -> MultiIndex {
        MultiIndex::unit(1, 0)
    }

    #[test]
    fn block_volterra_matches_direct_march() {
        let h = 0.01;
        let n = 3000;
        let f: Vec<f64> = (0..n).map(|i| 4.0 * h * i as f64 * (-2.0 * h * i as f64).exp()).collect();
        let b: Vec<f64> = (0..n).map(|i| (h * i as f64).sin().abs()).collect();
        let fast = solve_volterra(&b, &f, h);
        let slow = solve_volterra_direct(&b, &f, h);
        for (a, c) in fast.iter().zip(&slow) {
            assert!((a - c).abs() < 1e-11, "{a} vs {c}");
        }
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 * 0.1).cos()).collect();
        let b: Vec<f64> = (0..700).map(|i| (-(i as f64) * 0.01).exp()).collect();
        let fast = convolve(&a, &b, 900);
        for (i, v) in fast.iter().enumerate() {
            let direct: f64 = (0..=i)
                .filter(|j| *j < a.len() && i - j < b.len())
                .map(|j| a[j] * b[i - j])
                .sum();
            assert!((v - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn b_tilde_closed_form_poisson() {
        // b~_1(t) = int_0^t e^{-(t-s)} e^{-s} ds = t e^{-t}
        let m = mm_inf(1.0, 1.0, 0.0);
        let mut s = TransientSolver::new(&m, SolverOptions::new(1e-3, 5.0)).unwrap();
        let b = s.build_b_tilde(&one()).unwrap();
        assert_eq!(b.values()[0], 0.0);
        assert!((b.at(1.0) - (-1.0f64).exp()).abs() < 1e-6);
        let plain = TransientSolver::new(&m, SolverOptions::new(1e-3, 5.0).plain())
            .unwrap()
            .build_b_tilde(&one())
            .unwrap();
        assert!((plain.at(1.0) - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn b_tilde_is_continuous_in_delta() {
        let opts = SolverOptions::new(1e-2, 5.0);
        let b0 = TransientSolver::new(&mm_inf(1.0, 1.0, 0.0), opts)
            .unwrap()
            .build_b_tilde(&one())
            .unwrap();
        for eps in [1e-4, 1e-6, 1e-8] {
            let b1 = TransientSolver::new(&mm_inf(1.0, 1.0, eps), opts)
                .unwrap()
                .build_b_tilde(&one())
                .unwrap();
            for (a, b) in b0.values().iter().zip(b1.values()) {
                assert!((a - b).abs() <= eps);
            }
        }
    }

    #[test]
    fn build_b_tilde_rejects_mismatched_grids() {
        let m = mm_inf(1.0, 1.0, 0.0);
        let mut lower = HashMap::new();
        lower.insert(one(), GridFunction::new(0.1, vec![0.0; 11]).unwrap());
        let n2 = MultiIndex::new(vec![2]).unwrap();
        assert!(matches!(
            build_b_tilde(&n2, &m, &lower, 0.05, 21),
            Err(Error::GridMismatch(_))
        ));
        assert!(matches!(
            build_b_tilde(&n2, &m, &HashMap::new(), 0.1, 11),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn mm_inf_transient_mean() {
        let m = mm_inf(1.0, 1.0, 0.0);
        let mut s = TransientSolver::new(&m, SolverOptions::new(1e-3, 40.0)).unwrap();
        let m1 = s.solve_renewal(&one()).unwrap();
        assert!((m1.at(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-5);
        assert!((m1.last() - 1.0).abs() < 1e-4);
        let m2 = s.solve_renewal(&MultiIndex::new(vec![2]).unwrap()).unwrap();
        assert!((m2.last() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn volterra_march_agrees_with_poisson_shortcut() {
        let m = mm_inf(1.5, 1.0, 0.3);
        let opts = SolverOptions::new(2e-3, 10.0);
        let n2 = MultiIndex::new(vec![2]).unwrap();
        let a = TransientSolver::new(&m, opts).unwrap().solve_renewal(&n2).unwrap();
        let b = TransientSolver::volterra(&m, opts).unwrap().solve_renewal(&n2).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn trapezoid_converges_at_second_order() {
        let ia = InterarrivalModel::new(Law::Erlang { shape: 2, rate: 2.0 }).unwrap();
        let m = ModelSpec::new(
            ia,
            vec![DelayModel::exponential(1.0).unwrap()],
            0.1,
            BatchMomentProvider::unit(1),
        )
        .unwrap();
        let at = |h: f64| {
            TransientSolver::new(&m, SolverOptions::new(h, 5.0).plain())
                .unwrap()
                .solve_renewal(&one())
                .unwrap()
                .last()
        };
        let (a, b, c) = (at(0.02), at(0.01), at(0.005));
        let ratio = (a - b) / (b - c);
        assert!(ratio > 4.0 / 1.5 && ratio < 4.0 * 1.5, "ratio {ratio}");
    }

    #[test]
    fn bound_r_examples() {
        let m = mm_inf(1.0, 1.0, 1.0);
        assert!((bound_r(&one(), &m).unwrap() - 0.5).abs() < 1e-15);
        let m0 = mm_inf(1.0, 1.0, 0.0);
        assert_eq!(bound_r(&one(), &m0).unwrap(), 1.0);
        // R_2 = C (E[X^2] E[L] R_0 + 2 E[X] E[L] R_1) = 1 + 2
        let r2 = bound_r(&MultiIndex::new(vec![2]).unwrap(), &m0).unwrap();
        assert_eq!(r2, 3.0);
        let mut s = TransientSolver::new(&m0, SolverOptions::new(1e-2, 40.0)).unwrap();
        assert!(s.solve_renewal(&MultiIndex::new(vec![2]).unwrap()).unwrap().sup() <= r2);
        // small delta approaches the delta = 0 base case
        let tiny = bound_r(&one(), &mm_inf(1.0, 1.0, 1e-9)).unwrap();
        assert!((tiny - 1.0).abs() < 1e-8);
    }

    #[test]
    fn transient_bound_poisson_is_exact() {
        let m = mm_inf(1.0, 1.0, 0.0);
        let opts = SolverOptions::new(1e-3, 10.0);
        let b = bound_transient(&one(), &m, opts).unwrap();
        assert_eq!(b.kind, BoundKind::Exact);
        assert!((b.values.at(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-9);
        let exact = TransientSolver::volterra(&m, opts).unwrap().solve_renewal(&one()).unwrap();
        for (x, y) in b.values.values().iter().zip(exact.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn transient_bound_directions() {
        let opts = SolverOptions::new(5e-3, 15.0);
        let erlang = InterarrivalModel::new(Law::Erlang { shape: 2, rate: 2.0 }).unwrap();
        let hyper = InterarrivalModel::new(Law::Hyperexponential {
            weights: vec![0.5, 0.5],
            rates: vec![1.0, 3.0],
        })
        .unwrap();
        for (ia, kind) in [(erlang, BoundKind::Lower), (hyper, BoundKind::Upper)] {
            let m = mm_inf(1.0, 1.0, 0.1).with_interarrival(ia);
            let b = bound_transient(&one(), &m, opts).unwrap();
            assert_eq!(b.kind, kind);
            let exact = TransientSolver::new(&m, opts).unwrap().solve_renewal(&one()).unwrap();
            for (h, x) in b.values.values().iter().zip(exact.values()) {
                match kind {
                    BoundKind::Lower => assert!(*h <= x + 1e-9),
                    _ => assert!(*h >= x - 1e-9),
                }
            }
        }
    }

    #[test]
    fn grid_function_helpers() {
        let g = GridFunction::new(0.5, vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(g.t_max(), 1.0);
        assert_eq!(g.at(0.25), 0.5);
        assert_eq!(g.at(5.0), 2.0);
        assert_eq!(g.sup(), 2.0);
        assert!(GridFunction::new(0.0, vec![1.0]).is_err());
        assert_eq!(SolverOptions::new(0.1, 1.0).len(), 11);
    }
}
