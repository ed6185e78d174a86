//! Command-line drivers: decay sweeps, iteration runs, witness searches,
//! corner audits, telescoping audits, and set generation. Flag precedence is
//! flags > config file > defaults; exit codes are 0 = verified/found,
//! 2 = checked-and-failed, 1 = operational error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bourgain::{make_schedule, run_iteration, telescope_audit};
use crate::bump::BumpKit;
use crate::counting::{corner_step, lower_bound_lemma};
use crate::curve::{calibrate_report, Curve, ScaleLattice};
use crate::error::{Error, Result};
use crate::grid::{max_mollify_ell, GridFunction};
use crate::oscillatory::{decay_fit, DEFAULT_SLOPE_SLACK};
use crate::patterns::{corner_search, search_scaled, search_unit, SearchConfig};
use crate::report::{write_csv, write_json, ReproHeader};
use crate::gen;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAILED_CHECK: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "curvegap", version, about = "Polynomial-pattern search in grid sets")]
pub struct Cli {
    /// JSON config file supplying defaults for omitted flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the dyadic decay of the shell multipliers and verify the slope
    Decay {
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        s: Option<u32>,
        /// window scale; defaults to the calibrated lattice spacing
        #[arg(long)]
        ell: Option<u32>,
        #[arg(long)]
        kmin: Option<i32>,
        #[arg(long)]
        kmax: Option<i32>,
        #[arg(long)]
        shell_points: Option<usize>,
        #[arg(long)]
        slack: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the density-increment iteration and emit the certified gap
    Iterate {
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        c_base: Option<f64>,
        #[arg(long)]
        gamma: Option<u32>,
        /// dichotomy floor constant; measured from the input when omitted
        #[arg(long)]
        c_floor: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Search for a two-point witness
    Search {
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<SearchModeArg>,
        #[arg(long)]
        gamma: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Audit one corner-splitting step (or search for a corner triple)
    Corner {
        #[arg(long)]
        grid: Option<PathBuf>,
        /// curve file whose two polynomials are P1, P2
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        s: Option<u32>,
        #[arg(long)]
        ell_prime: Option<u32>,
        #[arg(long)]
        ell: Option<u32>,
        #[arg(long)]
        ell_dprime: Option<u32>,
        /// run the witness search instead of the step audit
        #[arg(long)]
        search: bool,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Telescoping L2 budget audit across a scale list
    Telescope {
        #[arg(long)]
        grid: Option<PathBuf>,
        /// comma-separated increasing scales, e.g. 3,5,9,17
        #[arg(long)]
        ells: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a reproducible test set
    Gen {
        #[arg(long, value_enum)]
        kind: Option<GenKind>,
        #[arg(long, num_args = 1.., value_delimiter = ' ')]
        dims: Option<Vec<usize>>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// curve file (witness kinds)
        #[arg(long)]
        curve: Option<PathBuf>,
        /// planted parameter (witness kinds)
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        block: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
pub enum SearchModeArg {
    Unit,
    Scaled,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum GenKind {
    Random,
    Balls,
    Witness,
    CornerWitness,
    Cantor,
}

/// Values from an optional JSON config file; flags win over these.
struct FileCfg(serde_json::Value);

impl FileCfg {
    fn load(path: &Option<PathBuf>) -> Result<Self> {
        match path {
            None => Ok(FileCfg(serde_json::Value::Null)),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::io(p.display().to_string(), e))?;
                Ok(FileCfg(serde_json::from_str(&text)?))
            }
        }
    }
    fn f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(|v| v.as_f64())
    }
    fn u64(&self, key: &str) -> Option<u64> {
        self.0.get(key).and_then(|v| v.as_u64())
    }
    fn str(&self, key: &str) -> Option<String> {
        self.0.get(key).and_then(|v| v.as_str()).map(|s| s.to_string())
    }
    fn path(&self, key: &str) -> Option<PathBuf> {
        self.str(key).map(PathBuf::from)
    }
    fn dims(&self, key: &str) -> Option<Vec<usize>> {
        self.0.get(key).and_then(|v| v.as_array()).map(|a| {
            a.iter().filter_map(|x| x.as_u64().map(|u| u as usize)).collect()
        })
    }
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Precondition(format!("missing required value --{flag}")))
}

fn load_curve(path: &Path) -> Result<Curve> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Curve::from_json_str(&text)
}

/// Exit-code mapping: negative findings that the tool checked for are 2;
/// operational problems are 1.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoWitnessFound { .. }
        | Error::NoSliceFound { .. }
        | Error::BudgetExceeded { .. } => EXIT_FAILED_CHECK,
        _ => EXIT_ERROR,
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let file = FileCfg::load(&cli.config)?;
    match cli.command {
        Command::Decay { curve, s, ell, kmin, kmax, shell_points, slack, out, csv } => {
            let curve_path = need(curve.or(file.path("curve")), "curve")?;
            let c = load_curve(&curve_path)?;
            let s = s.or(file.u64("s").map(|v| v as u32)).unwrap_or(0);
            let kmin = kmin.or(file.u64("kmin").map(|v| v as i32)).unwrap_or(6);
            let kmax = kmax.or(file.u64("kmax").map(|v| v as i32)).unwrap_or(16);
            let shell = shell_points
                .or(file.u64("shell_points").map(|v| v as usize))
                .unwrap_or(if c.n >= 3 { 16384 } else { 4096 });
            let slack = slack.or(file.f64("slack")).unwrap_or(DEFAULT_SLOPE_SLACK);
            let ell = match ell.or(file.u64("ell").map(|v| v as u32)) {
                Some(l) => l,
                None => calibrate_report(&c, 256, 256)?.gamma,
            };
            let kit = BumpKit::new(c.n);
            let fit = decay_fit(&c, s, ell, kmin, kmax, shell, slack, &kit)?;
            let cfg = serde_json::json!({
                "command": "decay", "curve": curve_path.display().to_string(),
                "s": s, "ell": ell, "kmin": kmin, "kmax": kmax,
                "shell_points": shell, "slack": slack,
            });
            let header = ReproHeader::new(&cfg, 0, serde_json::json!({ "slack": slack }));
            if let Some(p) = out.or(file.path("out")) {
                write_json(&p, &header, &fit)?;
            }
            if let Some(p) = csv.or(file.path("csv")) {
                let rows: Vec<Vec<String>> = fit
                    .sup_values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| vec![(fit.k_min + i as i32).to_string(), format!("{v:e}")])
                    .collect();
                write_csv(&p, &header, &["k", "sup_m"], &rows)?;
            }
            println!(
                "slope {:.4} (target <= {:.4}): {}",
                fit.slope,
                -1.0 / c.d as f64 + slack,
                if fit.verdict { "pass" } else { "FAIL" }
            );
            Ok(if fit.verdict { EXIT_OK } else { EXIT_FAILED_CHECK })
        }

        Command::Iterate { grid, curve, eps, c_base, gamma, c_floor, out, csv } => {
            let grid_path = need(grid.or(file.path("grid")), "grid")?;
            let curve_path = need(curve.or(file.path("curve")), "curve")?;
            let f = GridFunction::load(&grid_path)?;
            let c = load_curve(&curve_path)?;
            let eps = need(eps.or(file.f64("eps")), "eps")?;
            let c_base = c_base.or(file.f64("c_base")).unwrap_or(2.0);
            let gamma = gamma.or(file.u64("gamma").map(|v| v as u32)).unwrap_or(1);
            let kit = BumpKit::new(f.n);
            let lat = ScaleLattice::new(gamma);
            let ell_max = max_mollify_ell(&f, &kit).ok_or_else(|| {
                Error::Resolution { ell: 0, dims: f.dims.clone(), min_cells: 4 }
            })?;
            let schedule = make_schedule(eps, &lat, c_base, ell_max)?;
            // measured constants: the trilinear floor on this input and the
            // telescoping constant over the scheduled scales
            let c_meas = match c_floor.or(file.f64("c_floor")) {
                Some(v) => v,
                None => {
                    let (_, _, ratio) = lower_bound_lemma(&f, &kit, 4)?;
                    0.5 * ratio.min(1.0)
                }
            };
            let tel = telescope_audit(&f, &kit, &schedule.ells)?;
            let schedule = schedule.with_budget(c_meas, tel.c_rho_measured);
            let trace = run_iteration(&f, &c, &kit, &schedule)?;
            let cfg = serde_json::json!({
                "command": "iterate", "grid": grid_path.display().to_string(),
                "curve": curve_path.display().to_string(), "eps": eps,
                "c_base": c_base, "gamma": gamma, "c_floor": c_meas,
            });
            let header = ReproHeader::new(&cfg, 0, serde_json::json!({}));
            if let Some(p) = out.or(file.path("out")) {
                write_json(&p, &header, &trace)?;
            }
            if let Some(p) = csv.or(file.path("csv")) {
                let rows: Vec<Vec<String>> = trace
                    .steps
                    .iter()
                    .map(|s| {
                        vec![
                            s.k.to_string(),
                            s.ell_prime.to_string(),
                            s.ell.to_string(),
                            s.ell_dprime.to_string(),
                            format!("{:?}", s.branch),
                            format!("{:e}", s.counting_value),
                            format!("{:e}", s.threshold),
                            format!("{:e}", s.increment_norm),
                        ]
                    })
                    .collect();
                write_csv(
                    &p,
                    &header,
                    &["k", "ell_prime", "ell", "ell_dprime", "branch", "counting", "threshold", "increment"],
                    &rows,
                )?;
            }
            println!(
                "terminated at step {} with delta = {:e} ({} increment steps)",
                trace.k0, trace.delta_emitted, trace.increment_steps
            );
            Ok(EXIT_OK)
        }

        Command::Search { grid, curve, eps, mode, gamma, out, csv } => {
            let grid_path = need(grid.or(file.path("grid")), "grid")?;
            let curve_path = need(curve.or(file.path("curve")), "curve")?;
            let e = GridFunction::load(&grid_path)?;
            let c = load_curve(&curve_path)?;
            let eps = need(eps.or(file.f64("eps")), "eps")?;
            let gamma = gamma.or(file.u64("gamma").map(|v| v as u32)).unwrap_or(1);
            let kit = BumpKit::new(e.n);
            let cfg_search = SearchConfig { epsilon: eps, ..Default::default() };
            let mode = mode.unwrap_or(match file.str("mode").as_deref() {
                Some("scaled") => SearchModeArg::Scaled,
                _ => SearchModeArg::Unit,
            });
            let w = match mode {
                SearchModeArg::Unit => search_unit(&e, &c, &kit, &cfg_search)?,
                SearchModeArg::Scaled => {
                    search_scaled(&e, &c, &kit, &ScaleLattice::new(gamma), &cfg_search)?
                }
            };
            let cfg = serde_json::json!({
                "command": "search", "grid": grid_path.display().to_string(),
                "curve": curve_path.display().to_string(), "eps": eps,
                "mode": format!("{mode:?}"), "gamma": gamma,
            });
            let header = ReproHeader::new(&cfg, 0, serde_json::json!({
                "noise_factor": cfg_search.noise_factor,
            }));
            if let Some(p) = out.or(file.path("out")) {
                write_json(&p, &header, &w)?;
            }
            if let Some(p) = csv.or(file.path("csv")) {
                let row = vec![
                    format!("{:?}", w.mode),
                    format!("{:e}", w.t),
                    format!("{:e}", w.overlap_mass),
                    format!("{:e}", w.gap_certified),
                    w.x.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(";"),
                ];
                write_csv(&p, &header, &["mode", "t", "overlap", "gap", "x"], &[row])?;
            }
            println!("witness at t = {:.6} (overlap {:e})", w.t, w.overlap_mass);
            Ok(EXIT_OK)
        }

        Command::Corner { grid, curve, s, ell_prime, ell, ell_dprime, search, eps, out } => {
            let grid_path = need(grid.or(file.path("grid")), "grid")?;
            let curve_path = need(curve.or(file.path("curve")), "curve")?;
            let f = GridFunction::load(&grid_path)?;
            let c = load_curve(&curve_path)?;
            if c.polys.len() != 2 {
                return Err(Error::Precondition(format!(
                    "corner commands need exactly two polynomials, got {}",
                    c.polys.len()
                )));
            }
            let kit = BumpKit::new(2);
            let s = s.or(file.u64("s").map(|v| v as u32)).unwrap_or(0);
            if search {
                let eps = need(eps.or(file.f64("eps")), "eps")?;
                let cfg_search = SearchConfig { epsilon: eps, ..Default::default() };
                let w = corner_search(
                    &f,
                    &c.polys[0],
                    &c.polys[1],
                    &kit,
                    &ScaleLattice::new(1),
                    &cfg_search,
                )?;
                let cfg = serde_json::json!({
                    "command": "corner-search", "grid": grid_path.display().to_string(),
                    "curve": curve_path.display().to_string(), "eps": eps,
                });
                let header = ReproHeader::new(&cfg, 0, serde_json::json!({}));
                if let Some(p) = out.or(file.path("out")) {
                    write_json(&p, &header, &w)?;
                }
                println!("corner witness at t = {:.6}", w.t);
                return Ok(EXIT_OK);
            }
            let ell_prime = ell_prime.or(file.u64("ell_prime").map(|v| v as u32)).unwrap_or(1);
            let ell = ell.or(file.u64("ell").map(|v| v as u32)).unwrap_or(3);
            let ell_dprime =
                ell_dprime.or(file.u64("ell_dprime").map(|v| v as u32)).unwrap_or(5);
            let audit = corner_step(
                &f, &c.polys[0], &c.polys[1], &kit, s, ell_prime, ell, ell_dprime, None,
            )?;
            let pass = audit.splitting_residual < 1e-6
                && audit.i2_ok
                && (audit.tilde_tau_mass - 1.0).abs() < 1e-6
                && audit.i1_dprime_positive;
            let cfg = serde_json::json!({
                "command": "corner", "grid": grid_path.display().to_string(),
                "curve": curve_path.display().to_string(),
                "s": s, "ell_prime": ell_prime, "ell": ell, "ell_dprime": ell_dprime,
            });
            let header = ReproHeader::new(&cfg, 0, serde_json::json!({
                "splitting": 1e-6, "kernel_mass": 1e-6,
            }));
            if let Some(p) = out.or(file.path("out")) {
                write_json(&p, &header, &audit)?;
            }
            println!(
                "corner audit: kernel mass {:.9}, splitting residual {:e}: {}",
                audit.tilde_tau_mass,
                audit.splitting_residual,
                if pass { "pass" } else { "FAIL" }
            );
            Ok(if pass { EXIT_OK } else { EXIT_FAILED_CHECK })
        }

        Command::Telescope { grid, ells, out } => {
            let grid_path = need(grid.or(file.path("grid")), "grid")?;
            let f = GridFunction::load(&grid_path)?;
            let spec = need(ells.or(file.str("ells")), "ells")?;
            let scales: Vec<u32> = spec
                .split(',')
                .map(|t| t.trim().parse::<u32>().map_err(|_| Error::Parse(format!("bad scale {t:?}"))))
                .collect::<Result<_>>()?;
            let kit = BumpKit::new(f.n);
            let audit = telescope_audit(&f, &kit, &scales)?;
            let pass = audit.grand_total <= audit.c_rho_measured * audit.f_l2_sq + 1e-12
                && audit
                    .pairs
                    .iter()
                    .all(|p| ((p.j1 + p.j2 + p.j3) - p.total_sq).abs() <= 1e-8 * p.total_sq.max(1e-300));
            let cfg = serde_json::json!({
                "command": "telescope", "grid": grid_path.display().to_string(), "ells": scales,
            });
            let header = ReproHeader::new(&cfg, 0, serde_json::json!({ "split": 1e-8 }));
            if let Some(p) = out.or(file.path("out")) {
                write_json(&p, &header, &audit)?;
            }
            println!(
                "telescoping total {:e} <= {:e}: {}",
                audit.grand_total,
                audit.c_rho_measured * audit.f_l2_sq,
                if pass { "pass" } else { "FAIL" }
            );
            Ok(if pass { EXIT_OK } else { EXIT_FAILED_CHECK })
        }

        Command::Gen { kind, dims, eps, seed, curve, t, block, count, depth, out } => {
            let kind = kind.unwrap_or(match file.str("kind").as_deref() {
                Some("balls") => GenKind::Balls,
                Some("witness") => GenKind::Witness,
                Some("corner-witness") => GenKind::CornerWitness,
                Some("cantor") => GenKind::Cantor,
                _ => GenKind::Random,
            });
            let dims = need(dims.or(file.dims("dims")), "dims")?;
            let seed = seed.or(file.u64("seed")).unwrap_or(0);
            let out_path = need(out.or(file.path("out")), "out")?;
            let domain = vec![[0.0, 1.0]; dims.len()];
            let mut planted: Option<Vec<f64>> = None;
            let g = match kind {
                GenKind::Random => {
                    let eps = need(eps.or(file.f64("eps")), "eps")?;
                    gen::random_density(&dims, &domain, eps, seed)
                }
                GenKind::Balls => {
                    let count = count.or(file.u64("count").map(|v| v as usize)).unwrap_or(8);
                    gen::union_of_balls(&dims, &domain, count, [0.03, 0.1], seed)
                }
                GenKind::Witness => {
                    let curve_path = need(curve.or(file.path("curve")), "curve")?;
                    let c = load_curve(&curve_path)?;
                    let t = need(t.or(file.f64("t")), "t")?;
                    let noise = eps.or(file.f64("eps")).unwrap_or(0.0);
                    let block = block.or(file.u64("block").map(|v| v as usize)).unwrap_or(2);
                    let (g, base) =
                        gen::constructed_witness(&dims, &domain, &c, 0, t, noise, block, seed)?;
                    planted = Some(base);
                    g
                }
                GenKind::CornerWitness => {
                    let curve_path = need(curve.or(file.path("curve")), "curve")?;
                    let c = load_curve(&curve_path)?;
                    if c.polys.len() != 2 {
                        return Err(Error::Precondition(
                            "corner witness generation needs exactly two polynomials".into(),
                        ));
                    }
                    let t = need(t.or(file.f64("t")), "t")?;
                    let noise = eps.or(file.f64("eps")).unwrap_or(0.0);
                    let block = block.or(file.u64("block").map(|v| v as usize)).unwrap_or(2);
                    let (g, base) = gen::constructed_corner(
                        &dims, &c.polys[0], &c.polys[1], 0, t, noise, block, seed,
                    )?;
                    planted = Some(base);
                    g
                }
                GenKind::Cantor => {
                    let depth = depth.or(file.u64("depth").map(|v| v as u32)).unwrap_or(3);
                    gen::cantor_like(&dims, &domain, depth)
                }
            };
            g.save(&out_path)?;
            let cfg = serde_json::json!({
                "command": "gen", "kind": format!("{kind:?}"), "dims": dims,
                "eps": eps, "seed": seed, "t": t,
            });
            let header = ReproHeader::new(&cfg, seed, serde_json::json!({}));
            let meta = serde_json::json!({
                "mass": g.integral(),
                "planted": planted,
            });
            let meta_path = out_path.with_extension("meta.json");
            write_json(&meta_path, &header, &meta)?;
            println!("wrote {} (mass {:.6})", out_path.display(), g.integral());
            Ok(EXIT_OK)
        }
    }
}
