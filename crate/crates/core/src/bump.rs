//! The bump-function kit: the radial mollifier profile rho, the t-window
//! weight tau, and the frequency-shell cutoff psi, with their normalization
//! constants computed once at construction.

use serde::Serialize;

use crate::quad;

/// exp(-1/u) for u > 0, extended by 0 — the standard flat-at-zero gadget.
fn q(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// Smooth transition: 0 at u <= 0, 1 at u >= 1, C^infinity throughout.
pub fn smoothstep(u: f64) -> f64 {
    let a = q(u);
    let b = q(1.0 - u);
    if a + b == 0.0 {
        if u >= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        a / (a + b)
    }
}

/// Surface area of the unit sphere in R^n.
fn sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            // 2 pi^{n/2} / Gamma(n/2), via the half-integer Gamma recurrence
            let mut g = if n % 2 == 0 { 1.0 } else { PI.sqrt() };
            let mut x = if n % 2 == 0 { 1.0 } else { 0.5 };
            while x < n as f64 / 2.0 - 0.25 {
                g *= x;
                x += 1.0;
            }
            2.0 * PI.powf(n as f64 / 2.0) / g
        }
    }
}

/// Normalization and shape constants for the three bump profiles, fixed per
/// ambient dimension.
///
/// - `rho` is radial: a plateau of radius sqrt(n) (covering the unit box,
///   whose corners sit at distance sqrt(n)) that falls smoothly to zero at
///   radius sqrt(n)+1, normalized to total integral 1.
/// - `tau(t) = c exp(-1/((t-1/2)(2-t)))` on (1/2, 2), normalized to
///   integral 1.
/// - `psi` is 1 on [1,2], supported on [1/2,4], smooth in between.
#[derive(Debug, Clone, Serialize)]
pub struct BumpKit {
    pub n: usize,
    /// rho(x) for |x| <= sqrt(n), after normalization
    pub plateau: f64,
    /// support radius of rho: sqrt(n) + 1
    pub rho_support: f64,
    /// plateau radius of rho: sqrt(n)
    pub rho_plateau_radius: f64,
    /// integral of |grad rho| over R^n (mean-value displacement constant)
    pub grad_rho_l1: f64,
    /// integral of |x| rho(x) dx (first moment; 2 pi times it bounds the
    /// sup norm of grad of the Fourier transform of rho)
    pub rho_first_moment: f64,
    /// normalization constant for tau
    pub tau_norm: f64,
    /// nodes per quadrature panel used for the constants above
    pub quad_order: usize,
}

const QUAD_ORDER: usize = 32;
const QUAD_PANELS: usize = 256;

impl BumpKit {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let r0 = (n as f64).sqrt();
        let r1 = r0 + 1.0;
        let raw = |r: f64| -> f64 {
            if r <= r0 {
                1.0
            } else if r >= r1 {
                0.0
            } else {
                smoothstep(r1 - r)
            }
        };
        let area = sphere_area(n);
        let total = area
            * quad::integrate(|r| r.powi(n as i32 - 1) * raw(r), 0.0, r1, QUAD_PANELS, QUAD_ORDER);
        let plateau = 1.0 / total;

        // |rho'(r)| via a central difference of the (smooth) raw profile
        let drho = |r: f64| -> f64 {
            let h = 1e-6;
            plateau * (raw(r + h) - raw(r - h)).abs() / (2.0 * h)
        };
        let grad_rho_l1 = area
            * quad::integrate(|r| r.powi(n as i32 - 1) * drho(r), r0, r1, QUAD_PANELS, QUAD_ORDER);
        let rho_first_moment = area
            * quad::integrate(
                |r| r.powi(n as i32) * plateau * raw(r),
                0.0,
                r1,
                QUAD_PANELS,
                QUAD_ORDER,
            );

        let tau_raw = |t: f64| q((t - 0.5) * (2.0 - t));
        let tau_total = quad::integrate(tau_raw, 0.5, 2.0, QUAD_PANELS, QUAD_ORDER);
        BumpKit {
            n,
            plateau,
            rho_support: r1,
            rho_plateau_radius: r0,
            grad_rho_l1,
            rho_first_moment,
            tau_norm: 1.0 / tau_total,
            quad_order: QUAD_ORDER,
        }
    }

    /// Radial profile of the normalized mollifier: rho(x) = self.rho(|x|).
    pub fn rho(&self, r: f64) -> f64 {
        if r <= self.rho_plateau_radius {
            self.plateau
        } else if r >= self.rho_support {
            0.0
        } else {
            self.plateau * smoothstep(self.rho_support - r)
        }
    }

    /// The t-window weight on (1/2, 2), integral 1.
    pub fn tau(&self, t: f64) -> f64 {
        if t <= 0.5 || t >= 2.0 {
            0.0
        } else {
            self.tau_norm * q((t - 0.5) * (2.0 - t))
        }
    }

    /// Frequency-shell cutoff: 1 on [1,2], 0 outside [1/2,4], smooth ramps.
    pub fn psi(&self, u: f64) -> f64 {
        if !(0.5..=4.0).contains(&u) {
            0.0
        } else if (1.0..=2.0).contains(&u) {
            1.0
        } else if u < 1.0 {
            smoothstep((u - 0.5) / 0.5)
        } else {
            smoothstep((4.0 - u) / 2.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_integrates_to_one() {
        for n in 1..=3 {
            let kit = BumpKit::new(n);
            let area = sphere_area(n);
            let total = area
                * quad::integrate(
                    |r| r.powi(n as i32 - 1) * kit.rho(r),
                    0.0,
                    kit.rho_support,
                    512,
                    32,
                );
            assert!((total - 1.0).abs() < 1e-8, "n={n} total={total}");
        }
    }

    #[test]
    fn rho_plateau_covers_unit_box() {
        let kit = BumpKit::new(3);
        // box corner (1,1,1) has radius sqrt(3) = plateau radius
        let corner = 3f64.sqrt();
        assert_eq!(kit.rho(corner), kit.rho(0.0));
        assert_eq!(kit.rho(kit.rho_support + 0.01), 0.0);
        // monotone non-increasing ramp
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let r = corner + (i as f64 / 199.0) * 1.0;
            let v = kit.rho(r);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn tau_normalized_and_supported() {
        let kit = BumpKit::new(2);
        assert_eq!(kit.tau(0.5), 0.0);
        assert_eq!(kit.tau(2.0), 0.0);
        assert_eq!(kit.tau(0.49), 0.0);
        assert!(kit.tau(1.0) > 0.0);
        let total = quad::integrate(|t| kit.tau(t), 0.5, 2.0, 512, 32);
        assert!((total - 1.0).abs() < 1e-10, "total={total}");
    }

    #[test]
    fn psi_plateau_and_support() {
        let kit = BumpKit::new(2);
        for u in [1.0, 1.3, 1.7, 2.0] {
            assert_eq!(kit.psi(u), 1.0);
        }
        for u in [0.4, 0.5, 4.0, 4.3] {
            assert_eq!(kit.psi(u), 0.0);
        }
        assert!(kit.psi(0.75) > 0.0 && kit.psi(0.75) < 1.0);
        assert!(kit.psi(3.0) > 0.0 && kit.psi(3.0) < 1.0);
    }

    #[test]
    fn displacement_constant_positive_and_finite() {
        for n in 1..=3 {
            let kit = BumpKit::new(n);
            assert!(kit.grad_rho_l1.is_finite() && kit.grad_rho_l1 > 0.0);
            assert!(kit.rho_first_moment.is_finite() && kit.rho_first_moment > 0.0);
        }
    }
}
