//! Deterministic low-discrepancy point sets used by the shell sweeps.

/// Kronecker (golden-ratio family) sequence in [0,1)^dim.
pub fn kronecker(dim: usize, count: usize) -> Vec<Vec<f64>> {
    // Generalized golden ratios: x_{d} root of x^(d+1) = x + 1.
    let mut phi = 2.0f64;
    for _ in 0..32 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dim).map(|j| (1.0 / phi).powi(j as i32)).collect();
    (0..count)
        .map(|i| {
            alphas
                .iter()
                .map(|a| {
                    let v = 0.5 + a * (i as f64 + 1.0);
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}

/// `count` points spread over the annulus 1/2 <= |xi| <= 4 in `n` dimensions.
///
/// Radii are mapped volume-uniformly; directions come from the Kronecker
/// sequence. These are sample points, so any supremum taken over them is a
/// lower bound for the true supremum over the shell.
pub fn shell_points(n: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(n >= 1);
    let r_lo: f64 = 0.5;
    let r_hi: f64 = 4.0;
    if n == 1 {
        // Two intervals [-4,-1/2] and [1/2,4]; alternate signs.
        return (0..count)
            .map(|i| {
                let u = (i as f64 + 0.5) / count as f64;
                let r = r_lo + (r_hi - r_lo) * u;
                vec![if i % 2 == 0 { r } else { -r }]
            })
            .collect();
    }
    let pts = kronecker(n, count);
    pts.into_iter()
        .map(|u| {
            // volume-uniform radius in n dimensions
            let un = u[0];
            let r = (r_lo.powi(n as i32) + (r_hi.powi(n as i32) - r_lo.powi(n as i32)) * un)
                .powf(1.0 / n as f64);
            let dir = match n {
                2 => {
                    let theta = std::f64::consts::TAU * u[1];
                    vec![theta.cos(), theta.sin()]
                }
                3 => {
                    let cos_t = 2.0 * u[1] - 1.0;
                    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
                    let phi = std::f64::consts::TAU * u[2];
                    vec![sin_t * phi.cos(), sin_t * phi.sin(), cos_t]
                }
                _ => {
                    // Box-Muller-free fallback: map to normals via inverse erf
                    // approximation is overkill; use coordinates of a Kronecker
                    // point on the cube re-normalized. Adequate for spread.
                    let mut v: Vec<f64> = u[1..].iter().map(|x| 2.0 * x - 1.0).collect();
                    v.push(2.0 * ((u[0] * 977.0).fract()) - 1.0);
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    v.iter().map(|x| x / norm).collect()
                }
            };
            dir.into_iter().map(|c| c * r).collect()
        })
        .collect()
}

/// Uniform grid of `count` points on [lo, hi] (cell midpoints).
pub fn midpoints(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let h = (hi - lo) / count as f64;
    (0..count).map(|i| lo + (i as f64 + 0.5) * h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_points_stay_in_shell() {
        for n in 1..=3 {
            for p in shell_points(n, 500) {
                let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((0.5..=4.0 + 1e-12).contains(&r), "n={n} r={r}");
            }
        }
    }

    #[test]
    fn kronecker_is_equidistributed_roughly() {
        let pts = kronecker(2, 4000);
        let in_quadrant = pts.iter().filter(|p| p[0] < 0.5 && p[1] < 0.5).count();
        let frac = in_quadrant as f64 / 4000.0;
        assert!((frac - 0.25).abs() < 0.02, "frac={frac}");
    }
}
