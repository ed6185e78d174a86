//! The two-point counting form, the mollification-splitting step audit, the
//! trilinear corner form, and the corner step audit with its change-of-
//! variables kernel and anisotropic partition metadata.

use rayon::prelude::*;
use serde::Serialize;

use crate::bump::BumpKit;
use crate::curve::{eval_curve, pow2, rescale_curve, Curve, Polynomial};
use crate::error::{Error, Result};
use crate::grid::{
    band_project, band_project_axis, covering_kmax, mollify, partial_convolve, sample_kernel_1d,
    GridFunction,
};
use crate::oscillatory::{apply_t, apply_t_adjoint, Route};
use crate::quad;

/// t-integration window of a counting form: the full interval [0,1] with
/// plain measure, or the dyadic window with weight tau_ell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TWindow {
    Full,
    Ell(u32),
}

#[derive(Debug, Clone, Serialize)]
pub struct CountingResult {
    pub value: f64,
    pub t_window: TWindow,
    pub t_nodes: usize,
    /// |value - value at half the node count|
    pub error_estimate: f64,
}

/// Composite Gauss–Legendre t-nodes with weights incorporating the window
/// measure; weights of the dyadic window are renormalized to exact unit mass.
fn window_nodes(
    shift_at: &dyn Fn(f64) -> Vec<f64>,
    cell_sizes: &[f64],
    window: TWindow,
    kit: &BumpKit,
    panels_scale: f64,
) -> Vec<(f64, f64, Vec<f64>)> {
    let (lo, hi) = match window {
        TWindow::Full => (0.0, 1.0),
        TWindow::Ell(ell) => (pow2(-(ell as i64) - 1), pow2(-(ell as i64) + 1)),
    };
    // displacement sweep to size the panel count: adjacent nodes should move
    // the shift by at most ~2 cells
    let probes = 64;
    let mut max_step_cells = 0.0f64;
    let mut prev = shift_at(lo);
    for i in 1..=probes {
        let t = lo + (hi - lo) * i as f64 / probes as f64;
        let cur = shift_at(t);
        for (a, h) in cell_sizes.iter().enumerate() {
            max_step_cells = max_step_cells.max((cur[a] - prev[a]).abs() / h);
        }
        prev = cur;
    }
    let needed = (max_step_cells * probes as f64 / 2.0).ceil() as usize;
    let panels = ((needed * panels_scale as usize).max(needed) / 8).clamp(8, 2048);
    let order = 8;
    let (xs, ws) = quad::gauss_legendre(order);
    let h = (hi - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = lo + (p as f64 + 0.5) * h;
        for (&x, &w) in xs.iter().zip(&ws) {
            let t = c + 0.5 * h * x;
            let weight = match window {
                TWindow::Full => 0.5 * h * w,
                TWindow::Ell(ell) => {
                    0.5 * h * w * pow2(ell as i64) * kit.tau(pow2(ell as i64) * t)
                }
            };
            nodes.push((t, weight, shift_at(t)));
        }
    }
    if let TWindow::Ell(_) = window {
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        for n in nodes.iter_mut() {
            n.1 /= total;
        }
    }
    nodes
}

fn overlap_sum(f: &GridFunction, g: &GridFunction, shift: &[f64]) -> f64 {
    let cellvol = f.cell_volume();
    let h = f.cell_sizes();
    let n = f.n;
    let dims = &f.dims;
    let mut acc = 0.0;
    let mut idx = vec![0usize; n];
    let mut y = vec![0.0; n];
    for (flat, &v) in f.values.iter().enumerate() {
        if v != 0.0 {
            let mut rem = flat;
            for a in (0..n).rev() {
                idx[a] = rem % dims[a];
                rem /= dims[a];
            }
            for a in 0..n {
                y[a] = f.domain[a][0] + (idx[a] as f64 + 0.5) * h[a] + shift[a];
            }
            acc += v * g.interp(&y);
        }
    }
    acc * cellvol
}

/// I = integral of f(x) f(x + gamma_s(t)) over x and the t-window.
pub fn two_point_form(
    f: &GridFunction,
    c: &Curve,
    s: u32,
    window: TWindow,
    kit: &BumpKit,
) -> Result<CountingResult> {
    if c.n != f.n {
        return Err(Error::Dimension { expected: c.n, got: f.n });
    }
    let cs = rescale_curve(c, s);
    let shift_at = |t: f64| eval_curve(&cs, t);
    let nodes = window_nodes(&shift_at, &f.cell_sizes(), window, kit, 1.0);
    let eval = |stride: usize| -> f64 {
        nodes
            .par_iter()
            .step_by(stride)
            .map(|(_, w, shift)| w * stride as f64 * overlap_sum(f, f, shift))
            .sum()
    };
    let value = eval(1);
    let coarse = eval(2);
    Ok(CountingResult {
        value,
        t_window: window,
        t_nodes: nodes.len(),
        error_estimate: (value - coarse).abs(),
    })
}

/// Lemma-style trilinear floor at s = 2: lhs = integral of f (f * rho_k),
/// rhs = (integral of f)^2; returns (lhs, rhs, lhs/rhs).
pub fn lower_bound_lemma(f: &GridFunction, kit: &BumpKit, k: u32) -> Result<(f64, f64, f64)> {
    let smoothed = mollify(f, kit, k)?;
    let lhs = f.inner(&smoothed);
    let total = f.integral();
    let rhs = total * total;
    Ok((lhs, rhs, lhs / rhs))
}

// ---------------------------------------------------------------------------
// two-point step audit
// ---------------------------------------------------------------------------

/// One mollification-splitting step: I = I1 + I2 + I3 with
/// I1 = <T* f, f*rho_ell'>, I2 = <T* f, f*rho_ell'' - f*rho_ell'>,
/// I3 = <T* f, f - f*rho_ell''>, each term audited against its bound.
#[derive(Debug, Clone, Serialize)]
pub struct StepAudit {
    pub ell_prime: u32,
    pub ell: u32,
    pub ell_dprime: u32,
    /// tau_ell-smoothed counting form <f, T f>
    pub smoothed_form: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    /// I1 with the t-shift removed: <f, f*rho_ell'>
    pub i1_prime: f64,
    /// splitting defect |I1+I2+I3 - smoothed_form| (relative)
    pub splitting_residual: f64,
    /// L2 norm of f*rho_ell'' - f*rho_ell' (the I2 bound for densities)
    pub bound_i2: f64,
    pub i2_ok: bool,
    /// displacement bound on |I1 - I1'|
    pub bound_i1_shift: f64,
    pub i1_shift_ok: bool,
    /// c * (integral f)^2 with the supplied floor constant
    pub lower_i1_prime: f64,
    pub c_floor: f64,
    pub i1_floor_ok: bool,
    /// chosen low-pass cut
    pub k0: i32,
    /// <T* f, low-pass of f - f*rho_ell''>
    pub low_pass_term: f64,
    /// measured band terms <T* f, Delta_k (f - f*rho_ell'')> for k > k0
    pub band_terms: Vec<(i32, f64)>,
    /// trivial per-band bounds ||f||_2 ||Delta_k g||_2
    pub band_bounds: Vec<(i32, f64)>,
    pub band_bounds_ok: bool,
    /// fitted decay slope of log2 |band term| against k (None when bands
    /// are too small to fit)
    pub band_slope: Option<f64>,
}

const AUDIT_TOL: f64 = 1e-9;

#[allow(clippy::too_many_arguments)]
pub fn bourgain_step(
    f: &GridFunction,
    c: &Curve,
    kit: &BumpKit,
    ell_prime: u32,
    ell: u32,
    ell_dprime: u32,
    k0: Option<i32>,
    c_floor: f64,
) -> Result<StepAudit> {
    if !(ell_prime < ell && ell < ell_dprime) {
        return Err(Error::Precondition(format!(
            "scales must increase: {ell_prime} < {ell} < {ell_dprime}"
        )));
    }
    if !f.is_density() {
        return Err(Error::Precondition("step audit requires 0 <= f <= 1".into()));
    }
    // adjoint smear: <g, T h> = <T* g, h> exactly on the grid
    let w = apply_t_adjoint(f, c, 0, ell, kit)?;
    let smoothed_form = w.inner(f);

    let fp1 = mollify(f, kit, ell_prime)?;
    let fp2 = mollify(f, kit, ell_dprime)?;
    let diff = fp2.subtract(&fp1);
    let g = f.subtract(&fp2);

    let i1 = w.inner(&fp1);
    let i2 = w.inner(&diff);
    let i3 = w.inner(&g);
    let i1_prime = f.inner(&fp1);

    let splitting_residual =
        ((i1 + i2 + i3) - smoothed_form).abs() / smoothed_form.abs().max(1e-300);

    let bound_i2 = diff.l2_norm();
    let i2_ok = i2.abs() <= bound_i2 * f.l2_norm().max(1.0) + AUDIT_TOL;

    // |I1 - I1'| <= ||grad rho||_L1 * 2^ell' * sup|gamma on window| * ||f||_inf * integral|f|
    let cs = rescale_curve(c, 0);
    let sup_gamma = (0..=200)
        .map(|i| {
            let t = pow2(-(ell as i64) - 1) * (1.0 + 3.0 * i as f64 / 200.0);
            eval_curve(&cs, t).iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max);
    let bound_i1_shift =
        kit.grad_rho_l1 * pow2(ell_prime as i64) * sup_gamma * f.linf_norm() * f.integral();
    let i1_shift_ok = (i1 - i1_prime).abs() <= bound_i1_shift + AUDIT_TOL;

    let lower_i1_prime = c_floor * f.integral().powi(2);
    let i1_floor_ok = i1_prime >= lower_i1_prime - AUDIT_TOL;

    // band terms of the high-pass remainder, measured through the adjoint
    let kmax = covering_kmax(&g);
    let k_lo = 1i32;
    let bd = band_project(&g, k_lo, kmax)?;
    let all_terms: Vec<(i32, f64, f64)> = bd
        .bands
        .iter()
        .map(|(k, b)| (*k, w.inner(b), b.l2_norm()))
        .collect();
    let chosen_k0 = k0.unwrap_or_else(|| {
        // balance the (unaudited) low-pass remainder against the summed tail
        (k_lo..kmax)
            .min_by(|&a, &b| {
                let cost = |cut: i32| -> f64 {
                    let tail: f64 = all_terms
                        .iter()
                        .filter(|(k, _, _)| *k > cut)
                        .map(|(_, e, _)| e.abs())
                        .sum();
                    let low: f64 = i3
                        - all_terms
                            .iter()
                            .filter(|(k, _, _)| *k > cut)
                            .map(|(_, e, _)| e)
                            .sum::<f64>();
                    low.abs() + tail
                };
                cost(a).partial_cmp(&cost(b)).unwrap()
            })
            .unwrap_or(k_lo)
    });
    let band_terms: Vec<(i32, f64)> = all_terms
        .iter()
        .filter(|(k, _, _)| *k > chosen_k0)
        .map(|(k, e, _)| (*k, *e))
        .collect();
    let low_pass_term = i3 - band_terms.iter().map(|(_, e)| e).sum::<f64>();
    let f_l2 = f.l2_norm();
    let band_bounds: Vec<(i32, f64)> = all_terms
        .iter()
        .filter(|(k, _, _)| *k > chosen_k0)
        .map(|(k, _, n2)| (*k, f_l2 * n2))
        .collect();
    let band_bounds_ok = band_terms
        .iter()
        .zip(&band_bounds)
        .all(|((_, e), (_, b))| e.abs() <= b + AUDIT_TOL);
    let band_slope = {
        let pts: Vec<(f64, f64)> = band_terms
            .iter()
            .filter(|(_, e)| e.abs() > 1e-14)
            .map(|(k, e)| (*k as f64, e.abs().log2()))
            .collect();
        if pts.len() >= 3 {
            Some(fit_slope(&pts))
        } else {
            None
        }
    };

    Ok(StepAudit {
        ell_prime,
        ell,
        ell_dprime,
        smoothed_form,
        i1,
        i2,
        i3,
        i1_prime,
        splitting_residual,
        bound_i2,
        i2_ok,
        bound_i1_shift,
        i1_shift_ok,
        lower_i1_prime,
        c_floor,
        i1_floor_ok,
        k0: chosen_k0,
        low_pass_term,
        band_terms,
        band_bounds,
        band_bounds_ok,
        band_slope,
    })
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Verdict roll-up used by iteration drivers: true when every audited
/// comparison held.
impl StepAudit {
    pub fn all_ok(&self) -> bool {
        self.i2_ok
            && self.i1_shift_ok
            && self.i1_floor_ok
            && self.band_bounds_ok
            && self.splitting_residual < 1e-6
    }
}

// ---------------------------------------------------------------------------
// corner machinery
// ---------------------------------------------------------------------------

/// P_{j,s}(t) = 2^{-s d_j} P_j(2^s t).
pub fn poly_rescaled(p: &Polynomial, s: u32, t: f64) -> f64 {
    pow2(-(s as i64) * p.deg as i64) * p.eval(pow2(s as i64) * t)
}

pub fn poly_rescaled_deriv(p: &Polynomial, s: u32, t: f64) -> f64 {
    pow2(s as i64 * (1 - p.deg as i64)) * p.eval_derivative(pow2(s as i64) * t)
}

fn check_corner_hypothesis(p1: &Polynomial, p2: &Polynomial) -> Result<()> {
    if p1.deg >= p2.deg {
        return Err(Error::Hypothesis {
            detail: format!(
                "corner forms need deg P1 < deg P2, got {} and {}",
                p1.deg, p2.deg
            ),
        });
    }
    Ok(())
}

/// Trilinear corner sum with `mid` in the x-shifted slot:
/// integral of f(x,y) mid(x+P1s(t), y) f(x, y+P2s(t)) over the t-window.
fn triform(
    f: &GridFunction,
    mid: &GridFunction,
    p1: &Polynomial,
    p2: &Polynomial,
    s: u32,
    nodes: &[(f64, f64)],
) -> f64 {
    let cellvol = f.cell_volume();
    let h = f.cell_sizes();
    let (n0, n1) = (f.dims[0], f.dims[1]);
    nodes
        .par_iter()
        .map(|&(t, w)| {
            let d1 = poly_rescaled(p1, s, t);
            let d2 = poly_rescaled(p2, s, t);
            let mut acc = 0.0;
            for i in 0..n0 {
                let x = f.domain[0][0] + (i as f64 + 0.5) * h[0];
                for j in 0..n1 {
                    let v = f.values[i * n1 + j];
                    if v == 0.0 {
                        continue;
                    }
                    let y = f.domain[1][0] + (j as f64 + 0.5) * h[1];
                    acc += v * mid.interp(&[x + d1, y]) * f.interp(&[x, y + d2]);
                }
            }
            w * acc * cellvol
        })
        .sum()
}

fn corner_nodes(
    p1: &Polynomial,
    p2: &Polynomial,
    s: u32,
    f: &GridFunction,
    window: TWindow,
    kit: &BumpKit,
) -> Vec<(f64, f64)> {
    let shift_at = |t: f64| vec![poly_rescaled(p1, s, t), poly_rescaled(p2, s, t)];
    window_nodes(&shift_at, &f.cell_sizes(), window, kit, 1.0)
        .into_iter()
        .map(|(t, w, _)| (t, w))
        .collect()
}

pub fn corner_form(
    f: &GridFunction,
    p1: &Polynomial,
    p2: &Polynomial,
    s: u32,
    window: TWindow,
    kit: &BumpKit,
) -> Result<CountingResult> {
    if f.n != 2 {
        return Err(Error::Dimension { expected: 2, got: f.n });
    }
    check_corner_hypothesis(p1, p2)?;
    let nodes = corner_nodes(p1, p2, s, f, window, kit);
    let value = triform(f, f, p1, p2, s, &nodes);
    let coarse_nodes: Vec<(f64, f64)> =
        nodes.iter().step_by(2).map(|&(t, w)| (t, 2.0 * w)).collect();
    let coarse = triform(f, f, p1, p2, s, &coarse_nodes);
    Ok(CountingResult {
        value,
        t_window: window,
        t_nodes: nodes.len(),
        error_estimate: (value - coarse).abs(),
    })
}

/// Corner splitting audit: middle-slot mollification along axis 1 at the
/// substitution scales, change-of-variables kernel mass check, band terms
/// along the shifted axis, and the anisotropic partition metadata.
#[derive(Debug, Clone, Serialize)]
pub struct CornerAudit {
    pub s: u32,
    pub ell_prime: u32,
    pub ell: u32,
    pub ell_dprime: u32,
    /// dominant exponents per component: sigma_j when s < ell, d_j otherwise
    pub r1: u32,
    pub r2: u32,
    /// substitution scale |a_{1,r1}| 2^{-s(d1-r1) - r1 ell} at ell', ell, ell''
    pub varsigma_prime: f64,
    pub varsigma: f64,
    pub varsigma_dprime: f64,
    /// anisotropic rescale factors 2^{(d_j - r_j)s + ell r_j}
    pub a1_rescale: f64,
    pub a2_rescale: f64,
    /// mass of the substituted kernel (should be 1)
    pub tilde_tau_mass: f64,
    pub tilde_tau_samples: Vec<(f64, f64)>,
    pub smoothed_form: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub splitting_residual: f64,
    pub bound_i2: f64,
    pub i2_ok: bool,
    /// measured L2 distance between the tilde-tau average and the
    /// rho-mollification at scale varsigma', and the scale of the tail the
    /// triangle estimate predicts
    pub swap_l2: f64,
    pub swap_tail_scale: f64,
    /// fully mollified trilinear value and its measured floor constant
    pub i1_dprime: f64,
    pub c_rho_measured: f64,
    pub i1_dprime_positive: bool,
    pub k0: i32,
    pub band_terms: Vec<(i32, f64)>,
    /// fitted decay exponent sigma of |I_{3,k}| ~ lambda^{-sigma}
    pub sigma_fitted: Option<f64>,
    /// whether r1 != r2 (the zero-loss regime flag of the bilinear bound)
    pub distinct_r_flags: bool,
    /// partition-of-unity data on [0,A1] x [0,A2]
    pub partition_squares: usize,
    pub partition_unity_residual: f64,
    /// heaviest per-square masses of f under the partition (capped list)
    pub partition_top_masses: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn corner_step(
    f: &GridFunction,
    p1: &Polynomial,
    p2: &Polynomial,
    kit: &BumpKit,
    s: u32,
    ell_prime: u32,
    ell: u32,
    ell_dprime: u32,
    k0: Option<i32>,
) -> Result<CornerAudit> {
    if f.n != 2 {
        return Err(Error::Dimension { expected: 2, got: f.n });
    }
    check_corner_hypothesis(p1, p2)?;
    if !(ell_prime < ell && ell < ell_dprime) {
        return Err(Error::Precondition(format!(
            "scales must increase: {ell_prime} < {ell} < {ell_dprime}"
        )));
    }
    if !f.is_density() {
        return Err(Error::Precondition("corner audit requires 0 <= f <= 1".into()));
    }

    // monotone branch of P_{1,s} on the t-window
    let (t_lo, t_hi) = (pow2(-(ell as i64) - 1), pow2(-(ell as i64) + 1));
    let probes = 400;
    let mut prev_sign = 0.0f64;
    for i in 0..=probes {
        let t = t_lo + (t_hi - t_lo) * i as f64 / probes as f64;
        let d = poly_rescaled_deriv(p1, s, t);
        if d == 0.0 || (prev_sign != 0.0 && d.signum() != prev_sign) {
            return Err(Error::Substitution { critical_t: t });
        }
        prev_sign = d.signum();
    }

    let r_of = |p: &Polynomial| if s < ell { p.sigma } else { p.deg };
    let r1 = r_of(p1);
    let r2 = r_of(p2);
    let a1r1 = p1.coeffs[&r1].abs();
    let a2r2 = p2.coeffs[&r2].abs();
    let varsigma_at = |lx: u32| {
        a1r1 * pow2(-(s as i64) * (p1.deg as i64 - r1 as i64) - r1 as i64 * lx as i64)
    };
    let varsigma_prime = varsigma_at(ell_prime);
    let varsigma = varsigma_at(ell);
    let varsigma_dprime = varsigma_at(ell_dprime);
    let a1_rescale = pow2((p1.deg as i64 - r1 as i64) * s as i64 + ell as i64 * r1 as i64);
    let a2_rescale = pow2((p2.deg as i64 - r2 as i64) * s as i64 + ell as i64 * r2 as i64);

    // tilde-tau: tau_ell pushed through omega = |P_{1,s}(t)|; its mass must
    // survive the substitution. Integrate in omega with t recovered by
    // bisection on the monotone branch.
    let omega_a = poly_rescaled(p1, s, t_lo).abs();
    let omega_b = poly_rescaled(p1, s, t_hi).abs();
    let (omega_lo, omega_hi) = if omega_a < omega_b { (omega_a, omega_b) } else { (omega_b, omega_a) };
    let t_of_omega = |omega: f64| -> f64 {
        let (mut a, mut b) = (t_lo, t_hi);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            let va = poly_rescaled(p1, s, a).abs() - omega;
            let vm = poly_rescaled(p1, s, m).abs() - omega;
            if (va <= 0.0) == (vm <= 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let tilde_tau = |omega: f64| -> f64 {
        if omega <= omega_lo || omega >= omega_hi {
            return 0.0;
        }
        let t = t_of_omega(omega);
        let tau_l = pow2(ell as i64) * kit.tau(pow2(ell as i64) * t);
        tau_l / poly_rescaled_deriv(p1, s, t).abs()
    };
    let tilde_tau_mass = quad::integrate(tilde_tau, omega_lo, omega_hi, 512, 16);
    let tilde_tau_samples: Vec<(f64, f64)> = (1..=16)
        .map(|i| {
            let omega = omega_lo + (omega_hi - omega_lo) * i as f64 / 17.0;
            (omega, tilde_tau(omega))
        })
        .collect();

    // middle-slot mollifications along axis 1 at the substitution scales
    let kit1 = BumpKit::new(1);
    let moll_axis1 = |scale: f64, lx: u32| -> Result<GridFunction> {
        let reach = kit1.rho_support * scale;
        let h0 = f.cell_sizes()[0];
        if (reach / h0).ceil() < 4.0 {
            return Err(Error::Resolution { ell: lx, dims: f.dims.clone(), min_cells: 4 });
        }
        let (profile, center) =
            sample_kernel_1d(f, |u| kit1.rho(u.abs() / scale) / scale, reach, 1, true);
        partial_convolve(f, &profile, center, 1)
    };
    let m1 = moll_axis1(varsigma_prime, ell_prime)?;
    let m2 = moll_axis1(varsigma_dprime, ell_dprime)?;
    let diff = m2.subtract(&m1);
    let g = f.subtract(&m2);

    let nodes = corner_nodes(p1, p2, s, f, TWindow::Ell(ell), kit);
    let smoothed_form = triform(f, f, p1, p2, s, &nodes);
    let i1 = triform(f, &m1, p1, p2, s, &nodes);
    let i2 = triform(f, &diff, p1, p2, s, &nodes);
    let i3 = triform(f, &g, p1, p2, s, &nodes);
    let splitting_residual =
        ((i1 + i2 + i3) - smoothed_form).abs() / smoothed_form.abs().max(1e-300);

    // Cauchy–Schwarz in (x,y) per t-node: the other two factors are densities
    let bound_i2 = diff.l2_norm();
    let i2_ok = i2.abs() <= bound_i2 + AUDIT_TOL;

    // swap audit: tilde-tau average (exact substitution of the t-average)
    // against the rho-mollification at the coarser scale
    let tau_avg = {
        let mut out = GridFunction::zeros(&f.dims, &f.domain);
        let h = f.cell_sizes();
        let (n0, n1) = (f.dims[0], f.dims[1]);
        let vals: Vec<f64> = (0..n0 * n1)
            .into_par_iter()
            .map(|flat| {
                let i = flat / n1;
                let j = flat % n1;
                let x = f.domain[0][0] + (i as f64 + 0.5) * h[0];
                let y = f.domain[1][0] + (j as f64 + 0.5) * h[1];
                nodes
                    .iter()
                    .map(|&(t, w)| w * f.interp(&[x - poly_rescaled(p1, s, t), y]))
                    .sum()
            })
            .collect();
        out.values = vals;
        out
    };
    let swap_l2 = tau_avg.subtract(&m1).l2_norm();
    let swap_tail_scale = pow2(ell_prime as i64 - ell as i64) + pow2(ell as i64 - ell_dprime as i64);

    // fully mollified trilinear value: both shifted slots replaced by
    // axis-aligned mollifications, floor c_rho (integral f)^3
    let scale2 = a2r2 * pow2(-(s as i64) * (p2.deg as i64 - r2 as i64) - r2 as i64 * ell_prime as i64);
    let m_axis2 = {
        let reach = kit1.rho_support * scale2;
        let h1 = f.cell_sizes()[1];
        if (reach / h1).ceil() < 4.0 {
            return Err(Error::Resolution { ell: ell_prime, dims: f.dims.clone(), min_cells: 4 });
        }
        let (profile, center) =
            sample_kernel_1d(f, |u| kit1.rho(u.abs() / scale2) / scale2, reach, 2, true);
        partial_convolve(f, &profile, center, 2)?
    };
    let i1_dprime = {
        let cellvol = f.cell_volume();
        f.values
            .iter()
            .zip(&m1.values)
            .zip(&m_axis2.values)
            .map(|((&a, &b), &c)| a * b * c)
            .sum::<f64>()
            * cellvol
    };
    let mass = f.integral();
    let c_rho_measured = i1_dprime / mass.powi(3).max(1e-300);

    // band terms along the shifted axis
    let lens = f.side_lengths();
    let kmax_axis = ((f.dims[0] as f64 / (2.0 * lens[0])).log2().floor()) as i32;
    let k_lo = 1i32;
    let mut all_terms = Vec::new();
    for k in k_lo..=kmax_axis {
        let gk = band_project_axis(&g, k, 1)?;
        all_terms.push((k, triform(f, &gk, p1, p2, s, &nodes)));
    }
    let chosen_k0 = k0.unwrap_or_else(|| {
        (k_lo..kmax_axis)
            .min_by(|&a, &b| {
                let cost = |cut: i32| -> f64 {
                    let tail: f64 = all_terms
                        .iter()
                        .filter(|(k, _)| *k > cut)
                        .map(|(_, e)| e.abs())
                        .sum();
                    let low = i3
                        - all_terms
                            .iter()
                            .filter(|(k, _)| *k > cut)
                            .map(|(_, e)| e)
                            .sum::<f64>();
                    low.abs() + tail
                };
                cost(a).partial_cmp(&cost(b)).unwrap()
            })
            .unwrap_or(k_lo)
    });
    let band_terms: Vec<(i32, f64)> =
        all_terms.iter().filter(|(k, _)| *k > chosen_k0).map(|&(k, e)| (k, e)).collect();
    let i4 = i3 - band_terms.iter().map(|(_, e)| e).sum::<f64>();
    let sigma_fitted = {
        let pts: Vec<(f64, f64)> = band_terms
            .iter()
            .filter(|(_, e)| e.abs() > 1e-14)
            .map(|(k, e)| (*k as f64, e.abs().log2()))
            .collect();
        if pts.len() >= 3 {
            Some(-fit_slope(&pts))
        } else {
            None
        }
    };

    // smooth partition of unity over unit squares of [0,A1] x [0,A2] in the
    // rescaled coordinates (A1 x, A2 y); overlap 2 per axis by construction
    let sq1 = a1_rescale.ceil().max(1.0) as i64;
    let sq2 = a2_rescale.ceil().max(1.0) as i64;
    let partition_squares = (sq1.saturating_mul(sq2)).min(1 << 22) as usize;
    let bump_1d = |u: f64, j: f64| {
        crate::bump::smoothstep(u - j) - crate::bump::smoothstep(u - j - 1.0)
    };
    let mut unity_residual = 0.0f64;
    let mut masses: std::collections::BTreeMap<(i64, i64), f64> = Default::default();
    {
        let h = f.cell_sizes();
        let (n0, n1) = (f.dims[0], f.dims[1]);
        let cellvol = f.cell_volume();
        for i in (0..n0).step_by((n0 / 64).max(1)) {
            for j in (0..n1).step_by((n1 / 64).max(1)) {
                let u = a1_rescale * (f.domain[0][0] + (i as f64 + 0.5) * h[0]);
                let v = a2_rescale * (f.domain[1][0] + (j as f64 + 0.5) * h[1]);
                let j1 = u.floor() as i64;
                let j2 = v.floor() as i64;
                let mut total = 0.0;
                for a in [j1 - 1, j1] {
                    for b in [j2 - 1, j2] {
                        let z = bump_1d(u, a as f64) * bump_1d(v, b as f64);
                        total += z;
                        let val = f.values[i * n1 + j];
                        if val != 0.0 && z > 0.0 {
                            *masses.entry((a, b)).or_insert(0.0) += z * val * cellvol;
                        }
                    }
                }
                unity_residual = unity_residual.max((total - 1.0).abs());
            }
        }
    }
    let mut top: Vec<f64> = masses.into_values().collect();
    top.sort_by(|a, b| b.partial_cmp(a).unwrap());
    top.truncate(64);

    Ok(CornerAudit {
        s,
        ell_prime,
        ell,
        ell_dprime,
        r1,
        r2,
        varsigma_prime,
        varsigma,
        varsigma_dprime,
        a1_rescale,
        a2_rescale,
        tilde_tau_mass,
        tilde_tau_samples,
        smoothed_form,
        i1,
        i2,
        i3,
        i4,
        splitting_residual,
        bound_i2,
        i2_ok,
        swap_l2,
        swap_tail_scale,
        i1_dprime,
        c_rho_measured,
        i1_dprime_positive: i1_dprime > 0.0,
        k0: chosen_k0,
        band_terms,
        sigma_fitted,
        distinct_r_flags: r1 != r2,
        partition_squares,
        partition_unity_residual: unity_residual,
        partition_top_masses: top,
    })
}

/// Check the identity <f, T h> == <T* f, h> numerically (exposed for tests
/// and the iteration driver's self-check).
pub fn adjoint_defect(
    f: &GridFunction,
    h: &GridFunction,
    c: &Curve,
    ell: u32,
    kit: &BumpKit,
) -> Result<f64> {
    let th = apply_t(h, c, 0, ell, kit, Route::Spatial)?;
    let wf = apply_t_adjoint(f, c, 0, ell, kit)?;
    Ok((f.inner(&th) - wf.inner(h)).abs())
}
