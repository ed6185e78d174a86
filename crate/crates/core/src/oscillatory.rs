//! The dyadic oscillatory multipliers attached to a rescaled curve, their
//! empirical decay fits over the frequency shell, and the curve-averaging
//! operator evaluated by two independent routes (spatial quadrature and
//! Fourier multiplier).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bump::BumpKit;
use crate::curve::{eval_curve, phase_from_table, phase_table, pow2, rescale_curve, Curve};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::GridFunction;
use crate::quad;

/// One evaluation of the shell multiplier
/// m(xi) = psi(|xi|) * integral of e^{2 pi i 2^k gamma_s(t) . xi} tau_ell(t) dt.
#[derive(Debug, Clone, Serialize)]
pub struct MultiplierSample {
    pub k: i32,
    pub s: u32,
    pub ell: u32,
    pub xi: Vec<f64>,
    /// oscillation parameter 2^{k - d ell}
    pub lambda: f64,
    pub value_re: f64,
    pub value_im: f64,
    pub quad_error: f64,
}

impl MultiplierSample {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.value_re, self.value_im)
    }
}

/// Absolute quadrature error target for a single multiplier sample.
pub const MULT_QUAD_TOL: f64 = 1e-9;

/// The phase in the unit t-window: after substituting u = 2^ell t the
/// multiplier integral becomes
/// integral over [1/2, 2] of e^{2 pi i lambda phi(u, xi)} tau(u) du
/// with lambda = 2^{k - d ell}.
pub fn phase(c: &Curve, s: u32, ell: u32, t: f64, xi: &[f64]) -> f64 {
    let table = phase_table(c, s, ell);
    phase_from_table(&table, xi, t)
}

pub fn multiplier(
    c: &Curve,
    k: i32,
    s: u32,
    ell: u32,
    xi: &[f64],
    kit: &BumpKit,
) -> Result<MultiplierSample> {
    let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lambda = pow2(k as i64 - c.d as i64 * ell as i64);
    let psi = kit.psi(r);
    if psi == 0.0 {
        return Ok(MultiplierSample {
            k,
            s,
            ell,
            xi: xi.to_vec(),
            lambda,
            value_re: 0.0,
            value_im: 0.0,
            quad_error: 0.0,
        });
    }
    let table = phase_table(c, s, ell);
    let (value, err, panels) = oscillatory_window_integral(
        |u| lambda * phase_from_table(&table, xi, u),
        kit,
        lambda.abs(),
    );
    if err > MULT_QUAD_TOL {
        return Err(Error::Quadrature { target: MULT_QUAD_TOL, achieved: err, panels });
    }
    let v = value * psi;
    Ok(MultiplierSample {
        k,
        s,
        ell,
        xi: xi.to_vec(),
        lambda,
        value_re: v.re,
        value_im: v.im,
        quad_error: err,
    })
}

/// integral over [1/2,2] of e^{2 pi i theta(u)} tau(u) du with a panel budget
/// proportional to the oscillation scale.
fn oscillatory_window_integral(
    theta: impl Fn(f64) -> f64 + Sync,
    kit: &BumpKit,
    osc_scale: f64,
) -> (Complex64, f64, usize) {
    let panels0 = ((osc_scale / 4.0) as usize).clamp(4, 1 << 14);
    let max_panels = (16.0 * (1.0 + osc_scale)) as usize;
    let max_panels = max_panels.clamp(1 << 10, 1 << 21);
    quad::integrate_complex_adaptive(
        |u| Complex64::from_polar(kit.tau(u), std::f64::consts::TAU * theta(u)),
        0.5,
        2.0,
        panels0,
        max_panels,
        MULT_QUAD_TOL,
        15,
    )
}

/// 1-based index of the largest coordinate by magnitude (ties break low).
/// Requires the shell 1/2 <= |xi| <= 4 and guarantees |xi_i0| >= |xi|/sqrt(n)
/// >= 1/(2 sqrt(n)).
pub fn pigeonhole_index(xi: &[f64]) -> Result<usize> {
    let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(0.5..=4.0).contains(&r) {
        return Err(Error::Shell { norm: r });
    }
    let mut best = 0usize;
    for (i, v) in xi.iter().enumerate() {
        if v.abs() > xi[best].abs() {
            best = i;
        }
    }
    Ok(best + 1)
}

/// Per-k shell suprema of |m| and the least-squares decay slope.
///
/// The suprema are maxima over a finite low-discrepancy sample of the shell,
/// hence lower bounds for the true suprema; the verdict is one-sided in the
/// same direction.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub s: u32,
    pub ell: u32,
    pub k_min: i32,
    pub k_max: i32,
    pub sup_values: Vec<f64>,
    pub argmax_xi: Vec<Vec<f64>>,
    pub i0: Vec<usize>,
    pub quad_error_max: f64,
    /// ks actually used by the fit (lambda >= 4)
    pub fit_ks: Vec<i32>,
    pub slope: f64,
    pub intercept: f64,
    pub slack: f64,
    pub verdict: bool,
}

pub const DEFAULT_SLOPE_SLACK: f64 = 0.1;

pub fn decay_fit(
    c: &Curve,
    s: u32,
    ell: u32,
    k_min: i32,
    k_max: i32,
    shell_pts: usize,
    slack: f64,
    kit: &BumpKit,
) -> Result<DecayFit> {
    if k_max - k_min < 6 {
        return Err(Error::Precondition(format!(
            "k range [{k_min},{k_max}] too short; need width >= 6"
        )));
    }
    if s > 0 && !c.distinct_degrees {
        return Err(Error::Hypothesis {
            detail: "rescaled decay (s > 0) needs pairwise distinct component degrees".into(),
        });
    }
    if s == 0 && !(c.is_full_rank() || c.distinct_degrees) {
        return Err(Error::Hypothesis {
            detail: "unit-scale decay needs linearly independent components or distinct degrees"
                .into(),
        });
    }
    let xis = crate::sample::shell_points(c.n, shell_pts);
    let table = phase_table(c, s, ell);
    let mut sup_values = Vec::new();
    let mut argmax_xi = Vec::new();
    let mut i0s = Vec::new();
    let mut quad_error_max = 0.0f64;
    for k in k_min..=k_max {
        let lambda = pow2(k as i64 - c.d as i64 * ell as i64);
        let evals: Vec<(f64, f64)> = xis
            .par_iter()
            .map(|xi| {
                let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                let psi = kit.psi(r);
                if psi == 0.0 {
                    return (0.0, 0.0);
                }
                let (v, err, _) = oscillatory_window_integral(
                    |u| lambda * phase_from_table(&table, xi, u),
                    kit,
                    lambda.abs(),
                );
                ((v * psi).norm(), err)
            })
            .collect();
        // deterministic indexed max
        let (best_i, &(best_v, _)) = evals
            .iter()
            .enumerate()
            .max_by(|(i, (a, _)), (j, (b, _))| a.partial_cmp(b).unwrap().then(j.cmp(i)))
            .unwrap();
        quad_error_max = evals.iter().fold(quad_error_max, |m, &(_, e)| m.max(e));
        sup_values.push(best_v.max(1e-300));
        argmax_xi.push(xis[best_i].clone());
        i0s.push(pigeonhole_index(&xis[best_i])?);
    }
    // fit log2(sup) against k, restricted past the pre-asymptotic regime
    let mut fit_ks = Vec::new();
    let mut pts = Vec::new();
    for (off, k) in (k_min..=k_max).enumerate() {
        let lambda = pow2(k as i64 - c.d as i64 * ell as i64);
        if lambda >= 4.0 {
            fit_ks.push(k);
            pts.push((k as f64, sup_values[off].log2()));
        }
    }
    if pts.len() < 2 {
        return Err(Error::Precondition(
            "fewer than two k values past lambda >= 4; widen the k range".into(),
        ));
    }
    let (slope, intercept) = least_squares(&pts);
    let verdict = slope <= -1.0 / c.d as f64 + slack;
    Ok(DecayFit {
        s,
        ell,
        k_min,
        k_max,
        sup_values,
        argmax_xi,
        i0: i0s,
        quad_error_max,
        fit_ks,
        slope,
        intercept,
        slack,
        verdict,
    })
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope, (sy - slope * sx) / n)
}

// ---------------------------------------------------------------------------
// the averaging operator
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// t-quadrature nodes + multilinear interpolation of f
    Spatial,
    /// FFT, exact multiplier at each significant discrete frequency, inverse
    Multiplier,
}

/// Maximum per-step node displacement (in grid cells) the spatial quadrature
/// tolerates before declaring the grid unresolvable.
pub const MAX_NODE_STEP_CELLS: f64 = 4.0;
const MAX_T_NODES: usize = 1 << 14;
/// Relative spectral magnitude below which multiplier-route bins are dropped.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

/// T f(x) = integral of f(x + gamma_s(t)) tau_ell(t) dt, i.e. after
/// u = 2^ell t: integral over [1/2,2] of f(x + gamma_s(2^-ell u)) tau(u) du.
pub fn apply_t(
    f: &GridFunction,
    c: &Curve,
    s: u32,
    ell: u32,
    kit: &BumpKit,
    route: Route,
) -> Result<GridFunction> {
    if c.n != f.n {
        return Err(Error::Dimension { expected: c.n, got: f.n });
    }
    match route {
        Route::Spatial => apply_t_spatial(f, c, s, ell, kit, 1.0),
        Route::Multiplier => apply_t_multiplier(f, c, s, ell, kit),
    }
}

/// The adjoint averaging operator: integral of f(x - gamma_s(t)) tau_ell(t) dt.
/// On the grid this is the exact transpose of the spatial route, so
/// inner(g, T f) == inner(T* g, f) to rounding.
pub fn apply_t_adjoint(
    f: &GridFunction,
    c: &Curve,
    s: u32,
    ell: u32,
    kit: &BumpKit,
) -> Result<GridFunction> {
    if c.n != f.n {
        return Err(Error::Dimension { expected: c.n, got: f.n });
    }
    apply_t_spatial(f, c, s, ell, kit, -1.0)
}

/// Displacement curve u -> gamma_s(2^-ell u) on the unit window.
fn displacement(cs: &Curve, ell: u32, u: f64) -> Vec<f64> {
    eval_curve(cs, pow2(-(ell as i64)) * u)
}

fn max_displacement(cs: &Curve, ell: u32) -> f64 {
    (0..=200)
        .map(|i| {
            let u = 0.5 + 1.5 * i as f64 / 200.0;
            displacement(cs, ell, u).iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

fn apply_t_spatial(
    f: &GridFunction,
    c: &Curve,
    s: u32,
    ell: u32,
    kit: &BumpKit,
    sign: f64,
) -> Result<GridFunction> {
    let cs = rescale_curve(c, s);
    let h = f.cell_sizes();
    // grow the node count until adjacent node displacements differ by at
    // most MAX_NODE_STEP_CELLS cells on every axis
    let mut nodes = 64usize;
    let (us, ws) = loop {
        let (xs, ws) = quad::gauss_legendre(nodes);
        let us: Vec<f64> = xs.iter().map(|x| 1.25 + 0.75 * x).collect();
        let mut ok = true;
        'check: for w in us.windows(2) {
            let a = displacement(&cs, ell, w[0]);
            let b = displacement(&cs, ell, w[1]);
            for i in 0..c.n {
                if (a[i] - b[i]).abs() > MAX_NODE_STEP_CELLS * h[i] {
                    ok = false;
                    break 'check;
                }
            }
        }
        if ok {
            break (us, ws);
        }
        nodes *= 2;
        if nodes > MAX_T_NODES {
            return Err(Error::Resolution {
                ell,
                dims: f.dims.clone(),
                min_cells: MAX_NODE_STEP_CELLS as usize,
            });
        }
    };
    // tau-weighted nodes, renormalized to exact unit mass so constants map
    // to constants
    let mut weights: Vec<f64> = us.iter().zip(&ws).map(|(&u, &w)| 0.75 * w * kit.tau(u)).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let shifts: Vec<Vec<f64>> = us
        .iter()
        .map(|&u| displacement(&cs, ell, u).into_iter().map(|v| sign * v).collect())
        .collect();

    let mut out = GridFunction::zeros(&f.dims, &f.domain);
    // precompute cell coordinates axis-wise
    let coords: Vec<Vec<f64>> = (0..f.n)
        .map(|a| (0..f.dims[a]).map(|i| f.domain[a][0] + (i as f64 + 0.5) * h[a]).collect())
        .collect();
    let dims = f.dims.clone();
    let n = f.n;
    out.values
        .par_iter_mut()
        .enumerate()
        .for_each(|(flat, v)| {
            let mut idx = vec![0usize; n];
            let mut rem = flat;
            for a in (0..n).rev() {
                idx[a] = rem % dims[a];
                rem /= dims[a];
            }
            let x: Vec<f64> = (0..n).map(|a| coords[a][idx[a]]).collect();
            let mut acc = 0.0;
            let mut y = vec![0.0; n];
            for (w, shift) in weights.iter().zip(&shifts) {
                for a in 0..n {
                    y[a] = x[a] + shift[a];
                }
                acc += w * f.interp(&y);
            }
            *v = acc;
        });
    Ok(out)
}

fn apply_t_multiplier(
    f: &GridFunction,
    c: &Curve,
    s: u32,
    ell: u32,
    kit: &BumpKit,
) -> Result<GridFunction> {
    let cs = rescale_curve(c, s);
    let reach = max_displacement(&cs, ell);
    let hmin = f.cell_sizes().iter().cloned().fold(f64::INFINITY, f64::min);
    let pad = (reach / hmin).ceil() as usize + 2;
    let fe = f.embed(pad);
    let out_spec = multiplier_route_spectrum(&fe, c, s, ell, kit, reach);

    // crop the padding back off
    let dims = fe.dims;
    let mut out = GridFunction::zeros(&f.dims, &f.domain);
    fft::for_each_index(&f.dims, |flat, idx| {
        let mut p = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            p = p * dims[a] + (i + pad);
        }
        out.values[flat] = out_spec[p].re;
    });
    Ok(out)
}

/// Multiplier route that treats the box as a torus (no zero padding). Equal
/// to the zero-extension operator whenever supp(f) keeps distance at least
/// the maximum curve displacement from the box boundary.
pub fn apply_t_periodic(
    f: &GridFunction,
    c: &Curve,
    s: u32,
    ell: u32,
    kit: &BumpKit,
) -> Result<GridFunction> {
    if c.n != f.n {
        return Err(Error::Dimension { expected: c.n, got: f.n });
    }
    let cs = rescale_curve(c, s);
    let reach = max_displacement(&cs, ell);
    let vals = multiplier_route_spectrum(f, c, s, ell, kit, reach);
    let mut out = GridFunction::zeros(&f.dims, &f.domain);
    for (v, c) in out.values.iter_mut().zip(&vals) {
        *v = c.re;
    }
    Ok(out)
}

/// Shared core: returns the inverse transform of mu(xi) * f-hat(xi) on the
/// given grid (periodic in its own box).
fn multiplier_route_spectrum(
    fe: &GridFunction,
    c: &Curve,
    s: u32,
    ell: u32,
    kit: &BumpKit,
    reach: f64,
) -> Vec<Complex64> {
    let mut spectrum: Vec<Complex64> =
        fe.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::fft_nd(&mut spectrum, &fe.dims);
    let peak = spectrum.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let floor = peak * SPECTRAL_FLOOR;

    let lens = fe.side_lengths();
    let dims = fe.dims.clone();
    // collect significant bins with their physical frequencies
    let mut bins: Vec<(usize, Vec<f64>)> = Vec::new();
    fft::for_each_index(&dims, |flat, idx| {
        if spectrum[flat].norm() >= floor {
            let xi: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(a, &m)| fft::signed_freq(m, dims[a]) as f64 / lens[a])
                .collect();
            bins.push((flat, xi));
        }
    });
    let table = phase_table(c, s, ell);
    let mus: Vec<(usize, Complex64)> = bins
        .par_iter()
        .map(|(flat, xi)| {
            // exact operator symbol at this frequency: the phase is
            // gamma_s(2^-ell u) . xi = 2^{-d ell} phi_{s,ell}(u, xi)
            let scale = pow2(-(c.d as i64) * ell as i64);
            let osc = xi.iter().map(|v| v * v).sum::<f64>().sqrt() * (1.0 + reach);
            let (v, _err, _) = oscillatory_window_integral(
                |u| scale * phase_from_table(&table, xi, u),
                kit,
                osc,
            );
            (*flat, v)
        })
        .collect();
    let mut out_spec = vec![Complex64::new(0.0, 0.0); spectrum.len()];
    for (flat, mu) in mus {
        out_spec[flat] = spectrum[flat] * mu;
    }
    fft::ifft_nd(&mut out_spec, &dims);
    out_spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn curve(specs: &[&[(u32, f64)]]) -> Curve {
        let maps: Vec<BTreeMap<u32, f64>> =
            specs.iter().map(|s| s.iter().copied().collect()).collect();
        crate::curve::make_curve(&maps).unwrap()
    }

    /// Random band-limited smooth function: a few low-frequency waves with a
    /// Gaussian spectral envelope.
    fn smooth_random(dims: &[usize], seed: u64, max_cycles: f64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.len();
        let modes: Vec<(Vec<f64>, f64, f64)> = (0..12)
            .map(|_| {
                let freq: Vec<f64> = (0..n)
                    .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * max_cycles)
                    .collect();
                let phase = rng.gen::<f64>() * std::f64::consts::TAU;
                let r2: f64 = freq.iter().map(|v| v * v).sum();
                let amp = (-r2 / (max_cycles * max_cycles)).exp();
                (freq, phase, amp)
            })
            .collect();
        // windowed to vanish smoothly at the boundary, so zero extension
        // introduces no jump
        GridFunction::from_fn(dims, &vec![[0.0, 1.0]; n], |x| {
            let window: f64 = x
                .iter()
                .map(|&xi| {
                    crate::bump::smoothstep((xi - 0.02) / 0.15)
                        * crate::bump::smoothstep((0.98 - xi) / 0.15)
                })
                .product();
            window
                * modes
                    .iter()
                    .map(|(fq, ph, amp)| {
                        let arg: f64 = fq.iter().zip(x).map(|(f, xi)| f * xi).sum::<f64>()
                            * std::f64::consts::TAU;
                        amp * (arg + ph).cos()
                    })
                    .sum::<f64>()
        })
    }

    #[test]
    fn phase_monomial_unit_scale_is_plain_dot() {
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        for &(t, x1, x2) in &[(0.7, 1.0, -0.5), (1.4, 0.3, 0.9)] {
            let v = phase(&c, 0, 0, t, &[x1, x2]);
            let expect = t * x1 + t * t * x2;
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
    }

    #[test]
    fn phase_zero_xi_is_zero() {
        let c = curve(&[&[(1, 2.0), (3, -1.0)], &[(2, 0.5)]]);
        for t in [0.5, 1.0, 1.9] {
            assert_eq!(phase(&c, 2, 3, t, &[0.0, 0.0]), 0.0);
        }
    }

    #[test]
    fn multiplier_vanishes_off_shell() {
        let kit = BumpKit::new(2);
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        for xi in [[0.2, 0.2], [3.0, 3.0]] {
            let m = multiplier(&c, 8, 0, 1, &xi, &kit).unwrap();
            assert_eq!(m.value().norm(), 0.0);
        }
    }

    #[test]
    fn multiplier_bounded_by_one() {
        let kit = BumpKit::new(2);
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        for xi in sample::shell_points(2, 50) {
            for k in [0, 4, 9] {
                let m = multiplier(&c, k, 0, 1, &xi, &kit).unwrap();
                assert!(m.value().norm() <= 1.0 + m.quad_error + 1e-9);
            }
        }
    }

    #[test]
    fn multiplier_matches_fourier_oracle_in_1d() {
        // n=1, P=t, s=0, ell=0: m = psi(|xi|) * tau-hat(-2^k xi)
        let kit = BumpKit::new(1);
        let c = curve(&[&[(1, 1.0)]]);
        for &(k, xi) in &[(0, 0.8), (1, 1.5), (3, -0.6), (2, 1.0)] {
            let m = multiplier(&c, k, 0, 0, &[xi], &kit).unwrap();
            // independent high-resolution fixed-panel quadrature of tau-hat
            let freq = pow2(k as i64) * xi;
            let re = quad::integrate(
                |t| kit.tau(t) * (std::f64::consts::TAU * freq * t).cos(),
                0.5,
                2.0,
                4096,
                10,
            );
            let im = quad::integrate(
                |t| kit.tau(t) * (std::f64::consts::TAU * freq * t).sin(),
                0.5,
                2.0,
                4096,
                10,
            );
            let oracle = Complex64::new(re, im) * kit.psi(xi.abs());
            assert!(
                (m.value() - oracle).norm() < 1e-8,
                "k={k} xi={xi}: {} vs {}",
                m.value(),
                oracle
            );
        }
    }

    #[test]
    fn pigeonhole_examples() {
        assert_eq!(pigeonhole_index(&[1.0, 0.0]).unwrap(), 1);
        let a = 1.0 / 2f64.sqrt();
        assert_eq!(pigeonhole_index(&[a, a]).unwrap(), 1);
        assert!(matches!(pigeonhole_index(&[0.1, 0.1]), Err(Error::Shell { .. })));
        for xi in sample::shell_points(3, 200) {
            let i0 = pigeonhole_index(&xi).unwrap();
            assert!(xi[i0 - 1].abs() >= 1.0 / (2.0 * 3f64.sqrt()) - 1e-12);
        }
    }

    #[test]
    fn decay_fit_parabola() {
        let kit = BumpKit::new(2);
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        let fit = decay_fit(&c, 0, 1, 4, 12, 256, DEFAULT_SLOPE_SLACK, &kit).unwrap();
        assert!(fit.verdict, "slope {}", fit.slope);
        assert!(fit.slope <= -0.5 + 0.1, "slope {}", fit.slope);
    }

    #[test]
    fn decay_fit_rejects_bad_hypothesis() {
        let kit = BumpKit::new(2);
        // equal degrees and dependent rows: neither hypothesis
        let c = curve(&[&[(1, 1.0), (2, 1.0)], &[(1, 2.0), (2, 2.0)]]);
        assert!(matches!(
            decay_fit(&c, 0, 1, 4, 12, 64, 0.1, &kit),
            Err(Error::Hypothesis { .. })
        ));
        assert!(matches!(
            decay_fit(&c, 2, 1, 4, 12, 64, 0.1, &kit),
            Err(Error::Hypothesis { .. })
        ));
    }

    #[test]
    fn apply_t_constant_maps_to_one_in_interior() {
        let kit = BumpKit::new(1);
        let c = curve(&[&[(1, 1.0)]]);
        let f = GridFunction::from_fn(&[512], &[[-2.0, 3.0]], |_| 1.0);
        let out = apply_t(&f, &c, 0, 2, &kit, Route::Spatial).unwrap();
        // displacement range is [2^-2/2, 2^-2*2] = [0.125, 0.5]
        let h = 5.0 / 512.0;
        for i in 0..512 {
            let x = -2.0 + (i as f64 + 0.5) * h;
            if x > -1.9 && x < 2.4 {
                assert!((out.values[i] - 1.0).abs() < 1e-6, "x={x} v={}", out.values[i]);
            }
        }
    }

    #[test]
    fn apply_t_is_an_l2_contraction() {
        let kit = BumpKit::new(1);
        let c = curve(&[&[(1, 1.0)]]);
        for seed in 0..3 {
            let f = smooth_random(&[256], seed, 6.0);
            let out = apply_t(&f, &c, 0, 2, &kit, Route::Spatial).unwrap();
            assert!(out.l2_norm() <= f.l2_norm() * (1.0 + 1e-6));
        }
    }

    #[test]
    fn routes_agree_on_smooth_functions_1d() {
        let kit = BumpKit::new(1);
        let c = curve(&[&[(1, 1.0)]]);
        let f = smooth_random(&[512], 7, 2.5);
        let a = apply_t(&f, &c, 0, 3, &kit, Route::Spatial).unwrap();
        let b = apply_t(&f, &c, 0, 3, &kit, Route::Multiplier).unwrap();
        let rel = a.subtract(&b).l2_norm() / f.l2_norm();
        assert!(rel < 1e-4, "route disagreement {rel}");
    }

    #[test]
    fn band_limited_operator_norm_matches_multiplier_sup() {
        let kit = BumpKit::new(1);
        let c = curve(&[&[(1, 1.0)]]);
        let ell = 2u32;
        let k = 4i32;
        // pure waves at frequency radius in [2^k, 2^{k+1})
        let f = GridFunction::from_fn(&[512], &[[0.0, 1.0]], |x| {
            (std::f64::consts::TAU * 20.0 * x[0]).cos()
                + 0.5 * (std::f64::consts::TAU * 24.0 * x[0]).sin()
        });
        // periodic route: the pure waves are exactly band-limited on the torus
        let tf = apply_t_periodic(&f, &c, 0, ell, &kit).unwrap();
        // sup of the symbol over every discrete frequency in band k,
        // expressed through the shell multiplier at eta = xi / 2^k
        let table = phase_table(&c, 0, ell);
        let lambda = pow2(k as i64 - c.d as i64 * ell as i64);
        let sup = (16..32)
            .map(|m| {
                let eta = m as f64 / pow2(k as i64);
                let (v, _, _) = oscillatory_window_integral(
                    |u| lambda * phase_from_table(&table, &[eta], u),
                    &kit,
                    lambda,
                );
                v.norm()
            })
            .fold(0.0f64, f64::max);
        assert!(
            tf.l2_norm() <= sup * f.l2_norm() * (1.0 + 1e-6),
            "{} vs {}",
            tf.l2_norm(),
            sup * f.l2_norm()
        );
    }
}
