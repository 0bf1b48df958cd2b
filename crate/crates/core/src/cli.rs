//! Command-line front end. Every subcommand reads the same model file.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error.
//! CSV floats are written with 17 significant digits; JSON uses the
//! shortest round-trip representation.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::expansion::{expansion_coeffs, find_roots, ExpansionOptions, RootOptions};
use crate::model::ModelSpec;
use crate::moments::MomentTable;
use crate::multi_index::MultiIndex;
use crate::sim::{estimate_joint_moments, estimate_workload, SimEstimate};
use crate::transient::{bound_transient, BoundTable, SolverOptions, TransientSolver};
use crate::workload::workload_limits;

#[derive(Debug, Parser)]
#[command(name = "delayq", version, about = "Moments of discounted delayed batch renewal processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct GridArgs {
    /// Grid step (default 1e-3 E[tau]).
    #[arg(long)]
    pub h: Option<f64>,
    /// Grid end (default 40 times the largest mean delay).
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Plain trapezoid without Richardson extrapolation.
    #[arg(long)]
    pub plain: bool,
}

impl GridArgs {
    fn options(&self, model: &ModelSpec) -> SolverOptions {
        let d = SolverOptions::default_for(model);
        SolverOptions {
            h: self.h.unwrap_or(d.h),
            t_max: self.tmax.unwrap_or(d.t_max),
            extrapolate: !self.plain,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary moments chi_n.
    Chi {
        #[arg(long)]
        model: PathBuf,
        /// Multi-index such as `2,1`.
        #[arg(long, conflicts_with = "all_upto")]
        n: Option<String>,
        /// Every index of total order 1..=H.
        #[arg(long)]
        all_upto: Option<u32>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transient M~_n(t) on a grid with bounds (CSV: t, M_tilde, h_lower_or_upper, R_bound).
    Transient {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniform bounds R_n next to E[tau] chi_n.
    Bounds {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 3)]
        upto: u32,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exponential expansion of the first moment of one type.
    Expansion {
        #[arg(long)]
        model: PathBuf,
        /// Type, counted from 1.
        #[arg(long = "type", default_value_t = 1)]
        type_: usize,
        /// Opposite sign in the root-sum form of A* (fails validation).
        #[arg(long)]
        literal_sign: bool,
        /// Keep roots with Re z >= mu as well (exact expansion).
        #[arg(long)]
        keep_all_roots: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Limiting workload mean and covariance with the queue size.
    Workload {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimates, e.g. `--stats 'n=1,1;n=2,0;workload'`.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "n=1")]
        stats: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Moment engine vs renewal solver vs simulator for all orders up to `upto`.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 3)]
        upto: u32,
        #[arg(long, default_value_t = 30.0)]
        t_sim: f64,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes chi, bounds, transient and (when applicable) expansion and workload files.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Indices n <= (H, ..., H).
        #[arg(long, default_value_t = 2)]
        upto: u32,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

/// Result of a successful run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ValidationFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::ValidationFailed => 1,
        }
    }
}

pub const EXIT_CONFIG: u8 = 2;

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn parse_index(s: &str, model: &ModelSpec) -> Result<MultiIndex> {
    let n: MultiIndex = s
        .parse()
        .map_err(|e: Error| Error::Config(format!("bad index '{s}': {e}")))?;
    if n.k() != model.k() {
        return Err(Error::Config(format!(
            "index '{s}' has {} entries, model has k = {}",
            n.k(),
            model.k()
        )));
    }
    Ok(n)
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn index_header(k: usize) -> String {
    (1..=k).map(|j| format!("n_{j}")).collect::<Vec<_>>().join(",")
}

fn index_cells(n: &MultiIndex) -> String {
    n.entries().iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
}

/// Every nonzero index below `(h, ..., h)`.
pub fn box_indices(k: usize, h: u32) -> Vec<MultiIndex> {
    let top = MultiIndex::new(vec![h; k]).expect("k >= 1");
    let mut all: Vec<MultiIndex> = top
        .iterate_below()
        .into_iter()
        .chain(std::iter::once(top))
        .filter(|n| !n.is_zero())
        .collect();
    all.sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| a.cmp(b)));
    all
}

fn chi_table(model: &ModelSpec, indices: &[MultiIndex], format: Format) -> Result<String> {
    let mut table = MomentTable::new(model)?;
    let rows: Vec<(MultiIndex, f64)> = indices
        .iter()
        .map(|n| Ok((n.clone(), table.chi(n)?)))
        .collect::<Result<_>>()?;
    Ok(match format {
        Format::Json => to_json(&json!({
            "k": model.k(),
            "rows": rows.iter().map(|(n, v)| json!({"n": n.entries(), "chi": v})).collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut s = format!("{},chi\n", index_header(model.k()));
            for (n, v) in &rows {
                writeln!(s, "{},{}", index_cells(n), fmt_f64(*v)).unwrap();
            }
            s
        }
    })
}

fn bounds_table(model: &ModelSpec, indices: &[MultiIndex], format: Format) -> Result<String> {
    let mut bounds = BoundTable::new(model);
    let mut moments = MomentTable::new(model).ok();
    let et = model.mean_interarrival();
    let mut rows = Vec::new();
    for n in indices {
        let r = bounds.bound_r(n)?;
        let tau_chi = match moments.as_mut() {
            Some(t) => Some(et * t.chi(n)?),
            None => None,
        };
        rows.push((n, r, tau_chi));
    }
    Ok(match format {
        Format::Json => to_json(&json!({
            "density_bound": bounds.density_bound(),
            "rows": rows.iter().map(|(n, r, c)| json!({"n": n.entries(), "R": r, "tau_chi": c})).collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut s = format!("{},R_bound,tau_chi\n", index_header(model.k()));
            for (n, r, c) in &rows {
                let c = c.map(fmt_f64).unwrap_or_default();
                writeln!(s, "{},{},{}", index_cells(n), fmt_f64(*r), c).unwrap();
            }
            s
        }
    })
}

fn transient_csv(model: &ModelSpec, n: &MultiIndex, opts: SolverOptions) -> Result<String> {
    let mut solver = TransientSolver::new(model, opts)?;
    let m = solver.solve_renewal(n)?;
    let bound = match bound_transient(n, model, opts) {
        Ok(b) => Some(b),
        Err(Error::HazardClass) => None,
        Err(e) => return Err(e),
    };
    let r = BoundTable::new(model).bound_r(n)?;
    let mut s = String::from("t,M_tilde,h_lower_or_upper,R_bound\n");
    for (i, v) in m.values().iter().enumerate() {
        let h = bound
            .as_ref()
            .map(|b| fmt_f64(b.values.values()[i]))
            .unwrap_or_default();
        writeln!(s, "{},{},{},{}", fmt_f64(m.time(i)), fmt_f64(*v), h, fmt_f64(r)).unwrap();
    }
    Ok(s)
}

fn expansion_json(model: &ModelSpec, type_: usize, opts: ExpansionOptions) -> Result<String> {
    if type_ == 0 || type_ > model.k() {
        return Err(Error::Config(format!("--type must be in 1..={}", model.k())));
    }
    let res = expansion_coeffs(type_ - 1, model, opts)?;
    let roots = find_roots(model.interarrival().law(), RootOptions::default())?;
    Ok(to_json(&json!({
        "type": type_,
        "chi": res.chi,
        "mu": res.mu,
        "a_star": res.a_star,
        "terms": res.b_terms,
        "roots": roots.roots.iter().map(|r| json!({
            "z_re": r.z.re, "z_im": r.z.im, "gamma_re": r.gamma.re, "gamma_im": r.gamma.im
        })).collect::<Vec<_>>(),
        "truncation_order": res.i0,
        "error_rate": if res.error_rate.is_finite() { json!(res.error_rate) } else { json!(null) },
        "literal_sign": opts.literal_sign,
        "keep_all_roots": opts.keep_all_roots,
    })))
}

/// Requested simulator statistic.
#[derive(Debug, Clone, PartialEq)]
pub enum Stat {
    Moment(MultiIndex),
    Workload,
}

pub fn parse_stats(spec: &str, model: &ModelSpec) -> Result<Vec<Stat>> {
    spec.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s == "workload" {
                Ok(Stat::Workload)
            } else if let Some(rest) = s.strip_prefix("n=") {
                Ok(Stat::Moment(parse_index(rest, model)?))
            } else {
                Err(Error::Config(format!("unknown statistic '{s}'")))
            }
        })
        .collect()
}

fn simulate(model: &ModelSpec, t: f64, reps: usize, seed: u64, stats: &[Stat]) -> Result<Vec<SimEstimate>> {
    let ns: Vec<MultiIndex> = stats
        .iter()
        .filter_map(|s| match s {
            Stat::Moment(n) => Some(n.clone()),
            Stat::Workload => None,
        })
        .collect();
    let mut out = Vec::new();
    if !ns.is_empty() {
        out.extend(estimate_joint_moments(model, &ns, &[t], reps, seed)?.remove(0));
    }
    if stats.contains(&Stat::Workload) {
        let (m, c) = estimate_workload(model, t, reps, seed)?;
        out.push(m);
        out.push(c);
    }
    Ok(out)
}

/// Settings of the three-way check.
#[derive(Debug, Clone)]
pub struct ValidateConfig {
    pub upto: u32,
    pub t_sim: f64,
    pub reps: usize,
    pub seed: u64,
    pub grid: SolverOptions,
    /// Multiplies the analytic value of one index; used as a negative control.
    pub perturb: Option<(MultiIndex, f64)>,
}

/// One row of the three-way check.
#[derive(Debug, Clone, Serialize)]
pub struct TriadRow {
    pub n: Vec<u32>,
    pub chi: f64,
    pub volterra: f64,
    pub rel_err_volterra: f64,
    pub mc: f64,
    pub mc_se: f64,
    pub z_analytic_mc: f64,
    pub z_volterra_mc: f64,
    pub pass: bool,
}

pub const VOLTERRA_REL_TOL: f64 = 1e-3;
pub const MC_SE_TOL: f64 = 3.0;

/// Moment engine vs `M~_n(t_max)` (relative `1e-3`) vs simulator at `t_sim` (3 SE).
pub fn validate_triad(model: &ModelSpec, cfg: &ValidateConfig) -> Result<Vec<TriadRow>> {
    let indices = MultiIndex::all_up_to(model.k(), cfg.upto);
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let mut table = MomentTable::new(model)?;
    let mut solver = TransientSolver::new(model, cfg.grid)?;
    let mc = estimate_joint_moments(model, &indices, &[cfg.t_sim], cfg.reps, cfg.seed)?.remove(0);
    let mut rows = Vec::new();
    for (n, est) in indices.iter().zip(mc) {
        let mut chi = table.chi(n)?;
        if let Some((bad, factor)) = &cfg.perturb {
            if bad == n {
                chi *= factor;
            }
        }
        let volterra = solver.solve_renewal(n)?.last();
        let rel = (volterra - chi).abs() / chi.abs().max(f64::MIN_POSITIVE);
        let z_a = (est.estimate - chi).abs() / est.std_error;
        let z_v = (est.estimate - volterra).abs() / est.std_error;
        rows.push(TriadRow {
            n: n.entries().to_vec(),
            chi,
            volterra,
            rel_err_volterra: rel,
            mc: est.estimate,
            mc_se: est.std_error,
            z_analytic_mc: z_a,
            z_volterra_mc: z_v,
            pass: rel <= VOLTERRA_REL_TOL && z_a <= MC_SE_TOL && z_v <= MC_SE_TOL,
        });
    }
    Ok(rows)
}

fn triad_text(rows: &[TriadRow], k: usize, format: Format) -> String {
    match format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = format!(
                "{},chi,volterra,rel_err_volterra,mc,mc_se,z_analytic_mc,z_volterra_mc,status\n",
                index_header(k)
            );
            for r in rows {
                let cells = r.n.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",");
                writeln!(
                    s,
                    "{cells},{},{},{},{},{},{},{},{}",
                    fmt_f64(r.chi),
                    fmt_f64(r.volterra),
                    fmt_f64(r.rel_err_volterra),
                    fmt_f64(r.mc),
                    fmt_f64(r.mc_se),
                    fmt_f64(r.z_analytic_mc),
                    fmt_f64(r.z_volterra_mc),
                    if r.pass { "PASS" } else { "FAIL" }
                )
                .unwrap();
            }
            s
        }
    }
}

fn load(path: &Path) -> Result<ModelSpec> {
    ModelSpec::from_path(path)
}

/// Writes the report files into `dir` and returns their names.
pub fn cmd_report(model: &ModelSpec, dir: &Path, upto: u32, format: Format) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let ext = match format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        fs::write(dir.join(&name), text)?;
        written.push(name);
        Ok(())
    };
    if model.common_exponential_rate().is_some() {
        put(format!("chi.{ext}"), chi_table(model, &box_indices(model.k(), upto), format)?)?;
    }
    put(format!("bounds.{ext}"), bounds_table(model, &box_indices(model.k(), upto), format)?)?;
    // gnuplot-friendly: whitespace separated, '#' header
    let opts = SolverOptions::default_for(model);
    let mut solver = TransientSolver::new(model, opts)?;
    let mut dat = String::from("# t");
    let units: Vec<MultiIndex> = (0..model.k()).map(|i| MultiIndex::unit(model.k(), i)).collect();
    let grids = units
        .iter()
        .map(|n| {
            write!(dat, " M_tilde{n}").unwrap();
            solver.solve_renewal(n)
        })
        .collect::<Result<Vec<_>>>()?;
    dat.push('\n');
    let stride = ((0.01 / opts.h).round() as usize).max(1);
    for i in (0..grids[0].len()).step_by(stride) {
        dat.push_str(&fmt_f64(grids[0].time(i)));
        for g in &grids {
            dat.push(' ');
            dat.push_str(&fmt_f64(g.values()[i]));
        }
        dat.push('\n');
    }
    put("transient.dat".into(), dat)?;
    if let Ok(text) = expansion_json(model, 1, ExpansionOptions::default()) {
        put("expansion.json".into(), text)?;
    }
    if let Ok(w) = workload_limits(model) {
        put("workload.json".into(), to_json(&w))?;
    }
    Ok(written)
}

/// Runs one command, writing results to `out` or to the requested files.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Chi {
            model,
            n,
            all_upto,
            format,
            out,
        } => {
            let model = load(&model)?;
            let text = match (n, all_upto) {
                (Some(s), None) => {
                    let idx = parse_index(&s, &model)?;
                    let v = MomentTable::new(&model)?.chi(&idx)?;
                    match format {
                        Format::Json => to_json(&json!({"n": idx.entries(), "chi": v})),
                        Format::Csv => format!(
                            "{},chi\n{},{}\n",
                            index_header(model.k()),
                            index_cells(&idx),
                            fmt_f64(v)
                        ),
                    }
                }
                (None, Some(h)) => chi_table(&model, &MultiIndex::all_up_to(model.k(), h), format)?,
                _ => return Err(Error::Config("give exactly one of --n and --all-upto".into())),
            };
            emit(&out, &text, stdout)?;
        }
        Command::Transient { model, n, grid, out } => {
            let model = load(&model)?;
            let idx = parse_index(&n, &model)?;
            let text = transient_csv(&model, &idx, grid.options(&model))?;
            emit(&out, &text, stdout)?;
        }
        Command::Bounds {
            model,
            upto,
            format,
            out,
        } => {
            let model = load(&model)?;
            emit(&out, &bounds_table(&model, &MultiIndex::all_up_to(model.k(), upto), format)?, stdout)?;
        }
        Command::Expansion {
            model,
            type_,
            literal_sign,
            keep_all_roots,
            out,
        } => {
            let model = load(&model)?;
            let opts = ExpansionOptions {
                keep_all_roots,
                literal_sign,
            };
            emit(&out, &expansion_json(&model, type_, opts)?, stdout)?;
        }
        Command::Workload { model, out } => {
            let model = load(&model)?;
            emit(&out, &to_json(&workload_limits(&model)?), stdout)?;
        }
        Command::Simulate {
            model,
            t,
            reps,
            seed,
            stats,
            out,
        } => {
            let model = load(&model)?;
            let stats = parse_stats(&stats, &model)?;
            emit(&out, &to_json(&simulate(&model, t, reps, seed, &stats)?), stdout)?;
        }
        Command::Validate {
            model,
            upto,
            t_sim,
            reps,
            seed,
            grid,
            format,
            out,
        } => {
            let model = load(&model)?;
            let cfg = ValidateConfig {
                upto,
                t_sim,
                reps,
                seed,
                grid: grid.options(&model),
                perturb: None,
            };
            let rows = validate_triad(&model, &cfg)?;
            emit(&out, &triad_text(&rows, model.k(), format), stdout)?;
            if let Some(bad) = rows.iter().find(|r| !r.pass) {
                eprintln!("validation failed at n = {:?}", bad.n);
                return Ok(Outcome::ValidationFailed);
            }
        }
        Command::Report {
            model,
            out_dir,
            upto,
            format,
        } => {
            let model = load(&model)?;
            for name in cmd_report(&model, &out_dir, upto, format)? {
                writeln!(stdout, "{}", out_dir.join(name).display())?;
            }
        }
    }
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multi_index::BatchMomentProvider;

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        let back: f64 = fmt_f64(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn box_has_product_count() {
        assert_eq!(box_indices(2, 2).len(), 8);
        assert_eq!(box_indices(3, 1).len(), 7);
    }

    #[test]
    fn stats_parsing() {
        let m = ModelSpec::poisson_exponential(1.0, 1.0, 0.0, BatchMomentProvider::unit(2)).unwrap();
        let s = parse_stats("n=1,1; workload", &m).unwrap();
        assert_eq!(s[0], Stat::Moment(MultiIndex::new(vec![1, 1]).unwrap()));
        assert_eq!(s[1], Stat::Workload);
        assert!(parse_stats("n=1", &m).is_err());
        assert!(parse_stats("x", &m).is_err());
    }

    #[test]
    fn triad_negative_control_names_index() {
        let m = ModelSpec::poisson_exponential(1.0, 1.0, 0.0, BatchMomentProvider::unit(1)).unwrap();
        let bad = MultiIndex::new(vec![2]).unwrap();
        let cfg = ValidateConfig {
            upto: 2,
            t_sim: 20.0,
            reps: 20_000,
            seed: 1,
            grid: SolverOptions::new(1e-2, 30.0),
            perturb: Some((bad, 1.1)),
        };
        let rows = validate_triad(&m, &cfg).unwrap();
        assert!(rows[0].pass);
        assert!(!rows[1].pass);
        assert_eq!(rows[1].n, vec![2]);
        let empty = ValidateConfig { upto: 0, ..cfg };
        assert!(validate_triad(&m, &empty).unwrap().is_empty());
    }
}
