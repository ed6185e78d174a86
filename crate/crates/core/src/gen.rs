//! Seeded set generators: reproducible inputs for experiments — random
//! densities, unions of balls, planted-witness sets, and Cantor-like
//! product sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curve::{eval_curve, rescale_curve, Curve, Polynomial};
use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Independent cells: each is 1 with probability `eps`.
pub fn random_density(dims: &[usize], domain: &[[f64; 2]], eps: f64, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = GridFunction::zeros(dims, domain);
    for v in g.values.iter_mut() {
        *v = if rng.gen::<f64>() < eps { 1.0 } else { 0.0 };
    }
    g
}

/// Union of `count` balls with radii drawn from `radius` (fraction of the
/// shortest side), centers uniform in the box.
pub fn union_of_balls(
    dims: &[usize],
    domain: &[[f64; 2]],
    count: usize,
    radius: [f64; 2],
    seed: u64,
) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.len();
    let min_side = domain.iter().map(|d| d[1] - d[0]).fold(f64::INFINITY, f64::min);
    let balls: Vec<(Vec<f64>, f64)> = (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..n)
                .map(|a| domain[a][0] + rng.gen::<f64>() * (domain[a][1] - domain[a][0]))
                .collect();
            let r = min_side * (radius[0] + rng.gen::<f64>() * (radius[1] - radius[0]));
            (c, r)
        })
        .collect();
    GridFunction::from_fn(dims, domain, |x| {
        let hit = balls.iter().any(|(c, r)| {
            x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= *r
        });
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

/// Background noise plus a planted pair {x, x + gamma_s(t)} realized as
/// `block`-cell cubes, so the witness survives interpolation. Returns the
/// set and the planted base point.
pub fn constructed_witness(
    dims: &[usize],
    domain: &[[f64; 2]],
    c: &Curve,
    s: u32,
    t: f64,
    noise: f64,
    block: usize,
    seed: u64,
) -> Result<(GridFunction, Vec<f64>)> {
    let mut g = random_density(dims, domain, noise, seed);
    let h = g.cell_sizes();
    let n = dims.len();
    let shift = eval_curve(&rescale_curve(c, s), t);
    // base cell in the first third of the box, clear of the boundary
    let base_idx: Vec<usize> = dims.iter().map(|&d| d / 4).collect();
    let base: Vec<f64> = (0..n)
        .map(|a| domain[a][0] + (base_idx[a] as f64 + 0.5) * h[a])
        .collect();
    let target: Vec<f64> = base.iter().zip(&shift).map(|(a, b)| a + b).collect();
    for p in [&base, &target] {
        let idx: Vec<i64> = (0..n)
            .map(|a| ((p[a] - domain[a][0]) / h[a] - 0.5).round() as i64)
            .collect();
        if idx
            .iter()
            .enumerate()
            .any(|(a, &i)| i < 0 || i as usize + block > dims[a])
        {
            return Err(Error::Precondition(format!(
                "planted point {p:?} falls outside the grid"
            )));
        }
        stamp_block(&mut g, &idx, block);
    }
    Ok((g, base))
}

/// Noise plus a planted corner triple {(x,y), (x+P1s(t),y), (x,y+P2s(t))}.
pub fn constructed_corner(
    dims: &[usize],
    p1: &Polynomial,
    p2: &Polynomial,
    s: u32,
    t: f64,
    noise: f64,
    block: usize,
    seed: u64,
) -> Result<(GridFunction, Vec<f64>)> {
    let domain = vec![[0.0, 1.0]; 2];
    let mut g = random_density(dims, &domain, noise, seed);
    let h = g.cell_sizes();
    let d1 = crate::counting::poly_rescaled(p1, s, t);
    let d2 = crate::counting::poly_rescaled(p2, s, t);
    let base_idx = [dims[0] / 4, dims[1] / 4];
    let base = [
        (base_idx[0] as f64 + 0.5) * h[0],
        (base_idx[1] as f64 + 0.5) * h[1],
    ];
    let pts = [
        base,
        [base[0] + d1, base[1]],
        [base[0], base[1] + d2],
    ];
    for p in &pts {
        let idx: Vec<i64> = (0..2).map(|a| (p[a] / h[a] - 0.5).round() as i64).collect();
        if idx
            .iter()
            .enumerate()
            .any(|(a, &i)| i < 0 || i as usize + block > dims[a])
        {
            return Err(Error::Precondition(format!(
                "planted point {p:?} falls outside the grid"
            )));
        }
        stamp_block(&mut g, &idx, block);
    }
    Ok((g, base.to_vec()))
}

fn stamp_block(g: &mut GridFunction, idx: &[i64], block: usize) {
    let n = g.n;
    let mut offs = vec![0usize; n];
    loop {
        let mut flat = 0usize;
        for a in 0..n {
            flat = flat * g.dims[a] + (idx[a] as usize + offs[a]);
        }
        g.values[flat] = 1.0;
        let mut a = n;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            offs[a] += 1;
            if offs[a] < block {
                break;
            }
            offs[a] = 0;
        }
    }
}

/// Product of 1-D Cantor-like sets: at each of `depth` stages the kept
/// intervals lose their middle third.
pub fn cantor_like(dims: &[usize], domain: &[[f64; 2]], depth: u32) -> GridFunction {
    let keep_1d = |mut u: f64| -> bool {
        for _ in 0..depth {
            u *= 3.0;
            let cell = u.floor();
            if cell as i64 == 1 {
                return false;
            }
            u -= cell;
            if cell as i64 == 2 {
                u = u.clamp(0.0, 1.0);
            }
        }
        true
    };
    GridFunction::from_fn(dims, domain, |x| {
        let inside = x.iter().enumerate().all(|(a, &v)| {
            let u = (v - domain[a][0]) / (domain[a][1] - domain[a][0]);
            keep_1d(u)
        });
        if inside {
            1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::make_curve;
    use std::collections::BTreeMap;

    #[test]
    fn random_density_is_seed_deterministic() {
        let a = random_density(&[64, 64], &[[0.0, 1.0], [0.0, 1.0]], 0.2, 7);
        let b = random_density(&[64, 64], &[[0.0, 1.0], [0.0, 1.0]], 0.2, 7);
        assert_eq!(a.values, b.values);
        let c = random_density(&[64, 64], &[[0.0, 1.0], [0.0, 1.0]], 0.2, 8);
        assert_ne!(a.values, c.values);
        let density = a.integral();
        assert!((density - 0.2).abs() < 0.05, "{density}");
    }

    #[test]
    fn witness_planting_round_trips() {
        let maps: Vec<BTreeMap<u32, f64>> = vec![
            [(1u32, 1.0)].into_iter().collect(),
            [(2u32, 1.0)].into_iter().collect(),
        ];
        let c = make_curve(&maps).unwrap();
        let (g, base) =
            constructed_witness(&[128, 128], &[[0.0, 1.0], [0.0, 1.0]], &c, 0, 0.25, 0.0, 2, 1)
                .unwrap();
        let shift = eval_curve(&c, 0.25);
        let target: Vec<f64> = base.iter().zip(&shift).map(|(a, b)| a + b).collect();
        assert!(g.interp(&base) > 0.5);
        assert!(g.interp(&target) > 0.5);
    }

    #[test]
    fn cantor_mass_matches_dimension() {
        let g = cantor_like(&[2187], &[[0.0, 1.0]], 3);
        // (2/3)^3 of the mass survives three stages
        assert!((g.integral() - (2.0f64 / 3.0).powi(3)).abs() < 0.01);
    }

    #[test]
    fn balls_land_inside_box() {
        let g = union_of_balls(&[64, 64], &[[0.0, 1.0], [0.0, 1.0]], 5, [0.05, 0.1], 3);
        assert!(g.integral() > 0.0);
        assert!(g.is_density());
    }
}
