//! The density-increment iteration: scale schedules, the per-step dichotomy,
//! the telescoping L2 budget that caps the number of increment steps, and the
//! certified gap emitted at termination.

use num_complex::Complex64;
use serde::Serialize;

use crate::bump::BumpKit;
use crate::counting::{bourgain_step, StepAudit};
use crate::curve::{pow2, Curve, ScaleLattice};
use crate::error::{Error, Result};
use crate::fft::{fft_nd, for_each_index, signed_freq};
use crate::grid::GridFunction;

/// Increasing mollification scales with the iteration budget.
#[derive(Debug, Clone, Serialize)]
pub struct Schedule {
    pub epsilon: f64,
    pub c_base: f64,
    pub ells: Vec<u32>,
    /// budget ceil(8 c^-2 C_rho eps^-4) + 1, set once the run constants are
    /// measured (two-pass construction)
    pub k_cap: usize,
    /// dichotomy floor constant used by the run
    pub c_measured: f64,
    /// telescoping constant used by the budget
    pub c_rho_measured: f64,
    /// true when the grid's resolvable mollification scale truncated the list
    pub resolution_limited: bool,
}

impl Schedule {
    /// Second pass: install the measured constants and the resulting budget.
    pub fn with_budget(mut self, c: f64, c_rho: f64) -> Self {
        self.c_measured = c;
        self.c_rho_measured = c_rho;
        self.k_cap = (8.0 * c_rho / (c * c * self.epsilon.powi(4))).ceil() as usize + 1;
        self
    }
}

/// Builds the scale list ell_1 < ell_2 < ... on the odd lattice, growing like
/// C_base^k * log2(1/eps), truncated at the resolution cap. The budget fields
/// start at placeholder values; call [`Schedule::with_budget`] after the run
/// constants are measured.
pub fn make_schedule(
    epsilon: f64,
    lattice: &ScaleLattice,
    c_base: f64,
    ell_max: u32,
) -> Result<Schedule> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Precondition(format!(
            "epsilon must lie in (0, 1/2), got {epsilon}"
        )));
    }
    if c_base <= 1.0 {
        return Err(Error::Precondition(format!(
            "growth base must exceed 1, got {c_base}"
        )));
    }
    let g = lattice.gamma;
    let log_inv = (1.0 / epsilon).log2();
    let mut ells: Vec<u32> = vec![lattice.ell_value(0)];
    let mut resolution_limited = false;
    for k in 1..64 {
        let target = c_base.powi(k) * log_inv;
        let prev = *ells.last().unwrap();
        // keep at least one admissible point strictly between consecutive
        // scales (the step audit needs a midpoint)
        let next = lattice.round_ell(target).max(prev + 4 * g);
        if next > ell_max {
            resolution_limited = true;
            break;
        }
        ells.push(next);
    }
    if ells.len() < 3 {
        return Err(Error::Schedule { found: ells.len() });
    }
    Ok(Schedule {
        epsilon,
        c_base,
        ells,
        k_cap: usize::MAX,
        c_measured: f64::NAN,
        c_rho_measured: f64::NAN,
        resolution_limited,
    })
}

/// Which side of the dichotomy a step landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// smoothed counting value cleared the threshold — terminal
    Large,
    /// mollification difference carried the density increment — continue
    Increment,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationStep {
    pub k: usize,
    pub ell_prime: u32,
    pub ell: u32,
    pub ell_dprime: u32,
    pub branch: Branch,
    pub counting_value: f64,
    pub threshold: f64,
    pub increment_norm: f64,
    pub increment_needed: f64,
    /// running sum of squared increment norms
    pub partial_sum_sq: f64,
    pub audit: StepAudit,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub schedule: Schedule,
    pub steps: Vec<IterationStep>,
    /// terminal step index (the step whose counting value was large)
    pub k0: usize,
    /// the certified statement: smoothed counting value at scale ell_{k0}
    /// exceeds 2^{-ell_{k0+1}-1} c eps^2
    pub certified_value: f64,
    pub delta_emitted: f64,
    pub resolution_limited: bool,
    /// number of increment steps actually taken
    pub increment_steps: usize,
    /// the budget the telescoping sum allows: C_rho ||f||_2^2 / (c eps^2 / 2)^2
    pub increment_budget: f64,
    pub budget_ok: bool,
    /// sum of squared increments against C_rho ||f||_2^2
    pub telescope_total: f64,
    pub telescope_cap: f64,
    pub telescope_ok: bool,
}

/// Runs the dichotomy over the schedule. Terminates at the first step whose
/// tau-smoothed counting value clears the threshold; records an increment
/// step otherwise, provided the mollification difference is large enough to
/// certify it. Fails with BudgetExceeded when neither branch is certifiable
/// or when the budget runs out.
pub fn run_iteration(
    f: &GridFunction,
    c: &Curve,
    kit: &BumpKit,
    schedule: &Schedule,
) -> Result<IterationTrace> {
    if !f.is_density() {
        return Err(Error::Precondition("iteration requires 0 <= f <= 1".into()));
    }
    let eps = schedule.epsilon;
    if f.integral() < eps - 1e-12 {
        return Err(Error::Precondition(format!(
            "integral of f = {} is below the declared density {eps}",
            f.integral()
        )));
    }
    if !(schedule.c_measured.is_finite() && schedule.c_rho_measured.is_finite()) {
        return Err(Error::Precondition(
            "schedule budget constants not installed; call with_budget first".into(),
        ));
    }
    let cc = schedule.c_measured;
    let lattice_gamma = {
        // recover the lattice spacing from the first scale (ell_1 = gamma)
        schedule.ells[0]
    };
    let lat = ScaleLattice::new(lattice_gamma);

    let mut steps: Vec<IterationStep> = Vec::new();
    let mut sum_sq = 0.0f64;
    let needed = cc * eps * eps / 2.0;
    let f_l2_sq = f.l2_norm().powi(2);
    let telescope_cap = schedule.c_rho_measured * f_l2_sq;
    let increment_budget = telescope_cap / (needed * needed);

    for k in 0..schedule.ells.len() - 1 {
        if k >= schedule.k_cap {
            break;
        }
        let ell_prime = schedule.ells[k];
        let ell_dprime = schedule.ells[k + 1];
        let mut ell = lat.round_ell((ell_prime + ell_dprime) as f64 / 2.0);
        if ell <= ell_prime {
            ell = ell_prime + 2 * lattice_gamma;
        }
        if ell >= ell_dprime {
            ell = ell_dprime - 2 * lattice_gamma;
        }
        let audit = bourgain_step(f, c, kit, ell_prime, ell, ell_dprime, None, cc)?;
        let threshold = pow2(-(ell_dprime as i64) - 1) * cc * eps * eps;
        let counting_value = audit.smoothed_form;
        let increment_norm = audit.bound_i2;
        if counting_value > threshold {
            sum_sq += 0.0;
            steps.push(IterationStep {
                k,
                ell_prime,
                ell,
                ell_dprime,
                branch: Branch::Large,
                counting_value,
                threshold,
                increment_norm,
                increment_needed: needed,
                partial_sum_sq: sum_sq,
                audit,
            });
            let increment_steps = steps.len() - 1;
            let telescope_total = sum_sq;
            return Ok(IterationTrace {
                schedule: schedule.clone(),
                k0: k,
                certified_value: counting_value,
                delta_emitted: threshold,
                resolution_limited: schedule.resolution_limited,
                increment_steps,
                increment_budget,
                budget_ok: (increment_steps as f64) <= increment_budget,
                telescope_total,
                telescope_cap,
                telescope_ok: telescope_total <= telescope_cap + 1e-12,
                steps,
            });
        }
        if increment_norm < needed {
            return Err(Error::BudgetExceeded {
                step: k,
                counting: counting_value,
                threshold,
                increment: increment_norm,
                needed,
            });
        }
        sum_sq += increment_norm * increment_norm;
        steps.push(IterationStep {
            k,
            ell_prime,
            ell,
            ell_dprime,
            branch: Branch::Increment,
            counting_value,
            threshold,
            increment_norm,
            increment_needed: needed,
            partial_sum_sq: sum_sq,
            audit,
        });
    }
    // schedule or budget exhausted without a large step
    let last = steps.last();
    Err(Error::BudgetExceeded {
        step: steps.len(),
        counting: last.map_or(0.0, |s| s.counting_value),
        threshold: last.map_or(0.0, |s| s.threshold),
        increment: last.map_or(0.0, |s| s.increment_norm),
        needed,
    })
}

// ---------------------------------------------------------------------------
// telescoping audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TelescopePair {
    pub ell_k: u32,
    pub ell_k1: u32,
    /// squared L2 norm of f*rho_{ell_{k+1}} - f*rho_{ell_k} (periodic
    /// spectral convolution)
    pub total_sq: f64,
    /// low-frequency part: |xi| <= 2^{ell_k/2}
    pub j1: f64,
    /// mid: 2^{ell_k/2} < |xi| <= 2^{ell_{k+1}/2}
    pub j2: f64,
    /// high: |xi| > 2^{ell_{k+1}/2}
    pub j3: f64,
    /// gradient bound (2 ||grad rho_hat||_inf 2^{-ell_k/2})^2 ||f||_2^2
    pub j1_bound: f64,
    /// measured kernel-spectrum sup over the high bins, squared, times
    /// ||f||_2^2
    pub j3_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TelescopeAudit {
    pub ells: Vec<u32>,
    pub pairs: Vec<TelescopePair>,
    pub j1_total: f64,
    pub j2_total: f64,
    pub j3_total: f64,
    pub grand_total: f64,
    pub f_l2_sq: f64,
    /// 2 pi times the first moment of rho (bounds sup |grad rho_hat|)
    pub grad_rho_hat_sup: f64,
    /// whether the mid pieces together stay under ||rho_hat||_inf^2 ||f||_2^2
    pub j2_trivial_ok: bool,
    /// (sum of J1 bounds + measured J2 + sum of J3 bounds) / ||f||_2^2
    pub c_rho_measured: f64,
}

/// Samples rho_ell on the grid of `f`, wrapped periodically at index 0 and
/// normalized to discrete unit mass, and returns its spectrum.
fn kernel_spectrum(f: &GridFunction, kit: &BumpKit, ell: u32) -> Vec<Complex64> {
    let h = f.cell_sizes();
    let scale = pow2(ell as i64);
    let mut vals = vec![0.0f64; f.values.len()];
    for_each_index(&f.dims, |flat, idx| {
        let r = idx
            .iter()
            .enumerate()
            .map(|(a, &m)| {
                let m = signed_freq(m, f.dims[a]) as f64 * h[a];
                m * m
            })
            .sum::<f64>()
            .sqrt();
        vals[flat] = kit.rho(r * scale);
    });
    let mass: f64 = vals.iter().sum();
    let mut spec: Vec<Complex64> =
        vals.iter().map(|&v| Complex64::new(v / mass, 0.0)).collect();
    fft_nd(&mut spec, &f.dims);
    spec
}

/// Splits each consecutive mollification difference by frequency and checks
/// the telescoping L2 budget with measured constants.
pub fn telescope_audit(f: &GridFunction, kit: &BumpKit, ells: &[u32]) -> Result<TelescopeAudit> {
    if ells.len() < 2 || ells.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("need at least two increasing scales".into()));
    }
    let n_cells = f.values.len();
    let cellvol = f.cell_volume();
    let lens = f.side_lengths();

    let mut f_hat: Vec<Complex64> =
        f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut f_hat, &f.dims);
    // physical frequency radius per bin
    let mut radii = vec![0.0f64; n_cells];
    for_each_index(&f.dims, |flat, idx| {
        radii[flat] = idx
            .iter()
            .enumerate()
            .map(|(a, &m)| {
                let xi = signed_freq(m, f.dims[a]) as f64 / lens[a];
                xi * xi
            })
            .sum::<f64>()
            .sqrt();
    });
    let parseval = cellvol / n_cells as f64;
    let f_l2_sq = f_hat.iter().map(|z| z.norm_sqr()).sum::<f64>() * parseval;
    let grad_rho_hat_sup = std::f64::consts::TAU * kit.rho_first_moment;

    let spectra: Vec<Vec<Complex64>> =
        ells.iter().map(|&l| kernel_spectrum(f, kit, l)).collect();

    let mut pairs = Vec::new();
    for k in 0..ells.len() - 1 {
        let a = 2f64.powf(ells[k] as f64 / 2.0);
        let b = 2f64.powf(ells[k + 1] as f64 / 2.0);
        let (mut j1, mut j2, mut j3) = (0.0, 0.0, 0.0);
        let mut high_sup = 0.0f64;
        for i in 0..n_cells {
            let dk = spectra[k + 1][i] - spectra[k][i];
            let e = (dk * f_hat[i]).norm_sqr() * parseval;
            if radii[i] <= a {
                j1 += e;
            } else if radii[i] <= b {
                j2 += e;
            } else {
                j3 += e;
                high_sup = high_sup.max(dk.norm());
            }
        }
        let j1_bound =
            (2.0 * grad_rho_hat_sup * 2f64.powf(-(ells[k] as f64) / 2.0)).powi(2) * f_l2_sq;
        pairs.push(TelescopePair {
            ell_k: ells[k],
            ell_k1: ells[k + 1],
            total_sq: j1 + j2 + j3,
            j1,
            j2,
            j3,
            j1_bound,
            j3_bound: high_sup * high_sup * f_l2_sq,
        });
    }
    let j1_total: f64 = pairs.iter().map(|p| p.j1).sum();
    let j2_total: f64 = pairs.iter().map(|p| p.j2).sum();
    let j3_total: f64 = pairs.iter().map(|p| p.j3).sum();
    let c_rho_measured = (pairs.iter().map(|p| p.j1_bound).sum::<f64>()
        + j2_total
        + pairs.iter().map(|p| p.j3_bound).sum::<f64>())
        / f_l2_sq.max(1e-300);
    Ok(TelescopeAudit {
        ells: ells.to_vec(),
        pairs,
        j1_total,
        j2_total,
        j3_total,
        grand_total: j1_total + j2_total + j3_total,
        f_l2_sq,
        grad_rho_hat_sup,
        j2_trivial_ok: j2_total <= f_l2_sq + 1e-12,
        c_rho_measured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{max_mollify_ell, mollify};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn line_curve() -> Curve {
        let maps: Vec<BTreeMap<u32, f64>> = vec![[(1u32, 1.0)].into_iter().collect()];
        crate::curve::make_curve(&maps).unwrap()
    }

    fn random_density(dims: &[usize], seed: u64, eps: f64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = GridFunction::zeros(dims, &vec![[0.0, 1.0]; dims.len()]);
        for v in g.values.iter_mut() {
            *v = if rng.gen::<f64>() < eps { 1.0 } else { 0.0 };
        }
        g
    }

    #[test]
    fn schedule_construction_and_lattice_membership() {
        let lat = ScaleLattice::new(3);
        let s = make_schedule(0.25, &lat, 2.0, 60).unwrap();
        assert!(s.ells.len() >= 3);
        assert!(s.ells.windows(2).all(|w| w[0] < w[1]));
        assert!(s.ells.iter().all(|&l| lat.is_admissible_ell(l)));
    }

    #[test]
    fn budget_nonincreasing_in_epsilon() {
        let lat = ScaleLattice::new(1);
        let a = make_schedule(0.1, &lat, 2.0, 40).unwrap().with_budget(0.5, 2.0);
        let b = make_schedule(0.2, &lat, 2.0, 40).unwrap().with_budget(0.5, 2.0);
        assert!(b.k_cap <= a.k_cap);
    }

    #[test]
    fn schedule_error_when_cap_too_low() {
        let lat = ScaleLattice::new(5);
        assert!(matches!(
            make_schedule(0.25, &lat, 2.0, 12),
            Err(Error::Schedule { .. })
        ));
    }

    #[test]
    fn presmoothed_function_terminates_immediately() {
        let kit = BumpKit::new(1);
        let c = line_curve();
        let raw = random_density(&[1024], 7, 0.3);
        let f = mollify(&raw, &kit, 2).unwrap().clamp(0.0, 1.0);
        let lat = ScaleLattice::new(1);
        let eps = (f.integral() * 0.9).min(0.45);
        let schedule = make_schedule(eps, &lat, 2.0, max_mollify_ell(&f, &kit).unwrap())
            .unwrap()
            .with_budget(0.1, 2.0);
        let trace = run_iteration(&f, &c, &kit, &schedule).unwrap();
        assert_eq!(trace.k0, 0);
        assert_eq!(trace.steps[0].branch, Branch::Large);
        assert!(trace.delta_emitted > 0.0);
    }

    #[test]
    fn random_sets_terminate_with_positive_delta() {
        let kit = BumpKit::new(1);
        let c = line_curve();
        let lat = ScaleLattice::new(1);
        for seed in 0..10 {
            let f = random_density(&[1024], seed, 0.25);
            let ell_max = max_mollify_ell(&f, &kit).unwrap();
            let schedule = make_schedule(0.18, &lat, 2.0, ell_max)
                .unwrap()
                .with_budget(0.1, 2.0);
            let trace = run_iteration(&f, &c, &kit, &schedule).unwrap();
            assert!(trace.k0 <= schedule.k_cap);
            assert!(trace.delta_emitted > 0.0);
            assert!(trace.budget_ok);
            assert!(trace.telescope_ok, "{} > {}", trace.telescope_total, trace.telescope_cap);
        }
    }

    #[test]
    fn traces_are_deterministic() {
        let kit = BumpKit::new(1);
        let c = line_curve();
        let lat = ScaleLattice::new(1);
        let f = random_density(&[1024], 3, 0.25);
        let schedule = make_schedule(0.2, &lat, 2.0, max_mollify_ell(&f, &kit).unwrap())
            .unwrap()
            .with_budget(0.1, 2.0);
        let t1 = run_iteration(&f, &c, &kit, &schedule).unwrap();
        let t2 = run_iteration(&f, &c, &kit, &schedule).unwrap();
        assert_eq!(
            serde_json::to_string(&t1).unwrap(),
            serde_json::to_string(&t2).unwrap()
        );
    }

    #[test]
    fn telescope_split_reproduces_total() {
        let kit = BumpKit::new(1);
        let f = random_density(&[512], 9, 0.3);
        let audit = telescope_audit(&f, &kit, &[3, 5, 9, 17]).unwrap();
        for p in &audit.pairs {
            let total = p.j1 + p.j2 + p.j3;
            assert!((total - p.total_sq).abs() <= 1e-8 * p.total_sq.max(1e-300));
            assert!(p.j1 <= p.j1_bound + 1e-12, "J1 {} bound {}", p.j1, p.j1_bound);
            assert!(p.j3 <= p.j3_bound + 1e-12, "J3 {} bound {}", p.j3, p.j3_bound);
        }
        assert!(audit.j2_trivial_ok);
        assert!(audit.grand_total <= audit.c_rho_measured * audit.f_l2_sq + 1e-12);
    }

    #[test]
    fn telescope_pure_wave_hits_one_class() {
        let kit = BumpKit::new(1);
        // frequency 8 wave: |xi| = 8 sits between 2^{5/2} and 2^{9/2} for the
        // (5, 9) pair, below 2^{9/2} for (9, 17) after the low split grows
        let f = GridFunction::from_fn(&[512], &[[0.0, 1.0]], |x| {
            (std::f64::consts::TAU * 8.0 * x[0]).cos()
        });
        let audit = telescope_audit(&f, &kit, &[5, 9]).unwrap();
        let p = &audit.pairs[0];
        // all the energy is at |xi| = 8, strictly in the mid window
        assert!(p.j2 > 0.0);
        assert!(p.j1.abs() < 1e-20 * p.j2);
        assert!(p.j3.abs() < 1e-20 * p.j2);
        assert!((p.total_sq - p.j2).abs() <= 1e-12 * p.j2);
    }

    #[test]
    fn budget_exceeded_surfaces_with_ledger() {
        let kit = BumpKit::new(1);
        let c = line_curve();
        let lat = ScaleLattice::new(1);
        let f = random_density(&[1024], 4, 0.25);
        // absurdly optimistic floor constant: branch 1 unreachable, branch 2
        // cannot certify the huge required increment
        let schedule = make_schedule(0.2, &lat, 2.0, max_mollify_ell(&f, &kit).unwrap())
            .unwrap()
            .with_budget(1e6, 2.0);
        match run_iteration(&f, &c, &kit, &schedule) {
            Err(Error::BudgetExceeded { counting, threshold, increment, needed, .. }) => {
                assert!(counting <= threshold);
                assert!(increment < needed);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}
