//! Gauss–Legendre quadrature primitives shared by the bump-profile
//! normalizations and the oscillatory multiplier integrals.

use num_complex::Complex64;

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton iteration on the
/// Legendre recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut p0 = 0.0;
        let mut dp = 0.0;
        for _ in 0..100 {
            p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                // one more recurrence pass at the converged node for the weight
                p0 = 1.0;
                let mut p1 = 0.0;
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                break;
            }
        }
        let _ = p0;
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre integral of `f` on [a, b] with `panels`
/// subintervals of `order` nodes each.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (xs, ws) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let c = lo + 0.5 * h;
        let r = 0.5 * h;
        let mut acc = 0.0;
        for (&x, &w) in xs.iter().zip(&ws) {
            acc += w * f(c + r * x);
        }
        total += acc * r;
    }
    total
}

/// Complex-valued composite integral with the panel count doubled until two
/// successive refinements agree to `abs_tol`, starting from `panels0` and
/// capped at `max_panels`. Returns (value, error estimate, panels used).
pub fn integrate_complex_adaptive(
    f: impl Fn(f64) -> Complex64 + Sync,
    a: f64,
    b: f64,
    panels0: usize,
    max_panels: usize,
    abs_tol: f64,
    order: usize,
) -> (Complex64, f64, usize) {
    let (xs, ws) = gauss_legendre(order);
    let eval = |panels: usize| -> Complex64 {
        let h = (b - a) / panels as f64;
        let mut total = Complex64::new(0.0, 0.0);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let c = lo + 0.5 * h;
            let r = 0.5 * h;
            let mut acc = Complex64::new(0.0, 0.0);
            for (&x, &w) in xs.iter().zip(&ws) {
                acc += f(c + r * x) * w;
            }
            total += acc * r;
        }
        total
    };
    let mut panels = panels0.max(1);
    let mut prev = eval(panels);
    loop {
        let next_panels = panels * 2;
        let cur = eval(next_panels);
        let err = (cur - prev).norm();
        if err <= abs_tol || next_panels >= max_panels {
            return (cur, err, next_panels);
        }
        prev = cur;
        panels = next_panels;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        // order-8 GL is exact through degree 15
        let v = integrate(|x| x.powi(14), -1.0, 1.0, 1, 8);
        assert!((v - 2.0 / 15.0).abs() < 1e-14, "{v}");
    }

    #[test]
    fn composite_matches_known_integral() {
        let v = integrate(|x| (-x * x).exp(), -8.0, 8.0, 32, 16);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn adaptive_handles_oscillation() {
        // integral of e^{2 pi i 40 t} over [0,1] is 0
        let (v, err, _) = integrate_complex_adaptive(
            |t| Complex64::from_polar(1.0, std::f64::consts::TAU * 40.0 * t),
            0.0,
            1.0,
            4,
            1 << 14,
            1e-10,
            15,
        );
        assert!(v.norm() < 1e-9, "{v}");
        assert!(err < 1e-9);
    }
}
