//! Witness search: concrete pattern instances {x, x + gamma(t)} in grid
//! sets on the unit cube, on [0, N]^n via rectangle reduction and
//! anisotropic rescaling, through slices for rank-deficient curves, and
//! corner triples in the plane.

use rayon::prelude::*;
use serde::Serialize;

use crate::bump::BumpKit;
use crate::curve::{
    analyze_dependence, eval_curve, make_curve, pow2, rescale_curve, Curve, Dependence,
    Polynomial, ScaleLattice,
};
use crate::error::{Error, Result};
use crate::grid::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SearchMode {
    Unit,
    Scaled,
    Slice,
    Corner,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SearchConfig {
    /// declared density floor of the input set
    pub epsilon: f64,
    /// coarsest dyadic t-level scanned (largest t first)
    pub ell_coarse: u32,
    /// finest dyadic t-level scanned (clamped to grid resolution)
    pub ell_fine: u32,
    /// t-samples per level across u in [1/2, 2]
    pub u_samples: usize,
    /// overlap must exceed this multiple of the estimated evaluation error
    pub noise_factor: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            epsilon: 0.01,
            ell_coarse: 0,
            ell_fine: 10,
            u_samples: 61,
            noise_factor: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RectangleReduction {
    pub s: u32,
    /// rounded box size 2^{sd}
    pub n_rounded: f64,
    pub offset: Vec<f64>,
    /// per-axis extents 2^{s d_i}
    pub extents: Vec<f64>,
    pub density_in_rect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SliceReduction {
    pub x0: Vec<f64>,
    pub n0: usize,
    pub basis_idx: Vec<usize>,
    /// reduction constant (1 + ||L||^2)^{-n0/2} / 2
    pub kappa: f64,
    pub slice_measure: f64,
    /// per-axis residual of y - x - gamma(t), in grid cells
    pub lift_residual_cells: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternWitness {
    pub mode: SearchMode,
    pub x: Vec<f64>,
    pub t: f64,
    /// dyadic level the witness was found at
    pub ell: u32,
    pub overlap_mass: f64,
    pub noise_threshold: f64,
    /// the gap the witness clears: t > gap_certified > 0
    pub gap_certified: f64,
    /// the configuration: two points, or three for corner mode
    pub points: Vec<Vec<f64>>,
    pub rectangle: Option<RectangleReduction>,
    pub slice: Option<SliceReduction>,
}

/// Overlap of E with its gamma_s(t)-translate, with the argmax cell and an
/// interpolation-error probe (linear vs nearest sampling).
fn overlap_at(e: &GridFunction, shift: &[f64]) -> (f64, f64, usize) {
    let cellvol = e.cell_volume();
    let h = e.cell_sizes();
    let n = e.n;
    let dims = &e.dims;
    let mut total = 0.0;
    let mut nearest_total = 0.0;
    let mut best = (0.0f64, 0usize);
    let mut idx = vec![0usize; n];
    let mut y = vec![0.0; n];
    for (flat, &v) in e.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let mut rem = flat;
        for a in (0..n).rev() {
            idx[a] = rem % dims[a];
            rem /= dims[a];
        }
        for a in 0..n {
            y[a] = e.domain[a][0] + (idx[a] as f64 + 0.5) * h[a] + shift[a];
        }
        let w = e.interp(&y);
        total += v * w;
        nearest_total += v * nearest_sample(e, &y);
        if v * w > best.0 {
            best = (v * w, flat);
        }
    }
    ((total * cellvol), (total - nearest_total).abs() * cellvol, best.1)
}

fn nearest_sample(e: &GridFunction, y: &[f64]) -> f64 {
    let h = e.cell_sizes();
    let mut flat = 0usize;
    for a in 0..e.n {
        let j = ((y[a] - e.domain[a][0]) / h[a] - 0.5).round();
        if j < 0.0 || j as usize >= e.dims[a] {
            return 0.0;
        }
        flat = flat * e.dims[a] + j as usize;
    }
    e.values[flat]
}

fn cell_center(e: &GridFunction, flat: usize) -> Vec<f64> {
    let h = e.cell_sizes();
    let mut idx = vec![0usize; e.n];
    let mut rem = flat;
    for a in (0..e.n).rev() {
        idx[a] = rem % e.dims[a];
        rem /= e.dims[a];
    }
    (0..e.n)
        .map(|a| e.domain[a][0] + (idx[a] as f64 + 0.5) * h[a])
        .collect()
}

/// Finest level still resolvable: t-window width 2^{-ell-1} should span at
/// least two cells of the finest axis.
fn resolution_cap(e: &GridFunction) -> u32 {
    let hmin = e.cell_sizes().into_iter().fold(f64::INFINITY, f64::min);
    let mut ell = 0u32;
    while pow2(-(ell as i64) - 1) >= 2.0 * hmin && ell < 60 {
        ell += 1;
    }
    ell.saturating_sub(1)
}

fn check_density(e: &GridFunction, cfg: &SearchConfig) -> Result<()> {
    if cfg.epsilon < e.cell_volume() {
        return Err(Error::Precondition(format!(
            "declared density {} is below one grid cell ({})",
            cfg.epsilon,
            e.cell_volume()
        )));
    }
    if e.integral() < cfg.epsilon - 1e-12 {
        return Err(Error::Precondition(format!(
            "set mass {} is below the declared density {}",
            e.integral(),
            cfg.epsilon
        )));
    }
    Ok(())
}

/// Coarse-to-fine scan returning the first (largest-t) hit whose overlap
/// clears the noise threshold.
fn scan_two_point(
    e: &GridFunction,
    c: &Curve,
    s: u32,
    cfg: &SearchConfig,
    mode: SearchMode,
) -> Result<PatternWitness> {
    let cs = rescale_curve(c, s);
    let fine = cfg.ell_fine.min(resolution_cap(e));
    let mut scanned = 0usize;
    let mut best_overall = 0.0f64;
    for ell in cfg.ell_coarse..=fine {
        // u descending: largest t first within the level
        let us: Vec<f64> = (0..cfg.u_samples)
            .map(|i| 2.0 - 1.5 * i as f64 / (cfg.u_samples - 1) as f64)
            .collect();
        let results: Vec<(f64, f64, f64, usize)> = us
            .par_iter()
            .map(|&u| {
                let t = pow2(-(ell as i64)) * u;
                let shift = eval_curve(&cs, t);
                let (mass, err, arg) = overlap_at(e, &shift);
                (t, mass, err, arg)
            })
            .collect();
        scanned += results.len();
        for (t, mass, err, arg) in results {
            best_overall = best_overall.max(mass);
            let threshold = cfg.noise_factor * err;
            if mass > threshold && mass > 0.0 {
                let x = cell_center(e, arg);
                let shift = eval_curve(&cs, t);
                let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
                return Ok(PatternWitness {
                    mode,
                    x: x.clone(),
                    t,
                    ell,
                    overlap_mass: mass,
                    noise_threshold: threshold,
                    gap_certified: pow2(-(ell as i64) - 2),
                    points: vec![x, y],
                    rectangle: None,
                    slice: None,
                });
            }
        }
    }
    Err(Error::NoWitnessFound { scanned, best_overlap: best_overall })
}

/// Witness search on the unit cube. Rank-deficient curves dispatch to the
/// slice path automatically.
pub fn search_unit(
    e: &GridFunction,
    c: &Curve,
    kit: &BumpKit,
    cfg: &SearchConfig,
) -> Result<PatternWitness> {
    if c.n != e.n {
        return Err(Error::Dimension { expected: c.n, got: e.n });
    }
    check_density(e, cfg)?;
    match analyze_dependence(c)? {
        Dependence::FullRank(_) => scan_two_point(e, c, 0, cfg, SearchMode::Unit),
        Dependence::Dependent(_) => slice_search(e, c, kit, cfg),
    }
}

/// Witness search on [0, N]^n: rounds N down to an admissible 2^{sd},
/// pigeonholes a dense rectangle of size 2^{sd_1} x ... x 2^{sd_n},
/// rescales it anisotropically to the unit cube, and maps the unit witness
/// back (t_original = 2^s t_unit).
pub fn search_scaled(
    e: &GridFunction,
    c: &Curve,
    _kit: &BumpKit,
    lattice: &ScaleLattice,
    cfg: &SearchConfig,
) -> Result<PatternWitness> {
    if c.n != e.n {
        return Err(Error::Dimension { expected: c.n, got: e.n });
    }
    if !c.distinct_degrees {
        return Err(Error::Hypothesis {
            detail: "scaled search needs pairwise distinct degrees".into(),
        });
    }
    let n_box = e.domain[0][1];
    let d = c.d as i64;
    // largest admissible even-lattice s with 2^{sd} <= N
    let mut s: Option<u32> = None;
    for j in 0..32u32 {
        let cand = lattice.s_value(j);
        if pow2(cand as i64 * d) <= n_box {
            s = Some(cand);
        } else {
            break;
        }
    }
    let s = s.ok_or(Error::Rounding { n: n_box })?;
    let n_rounded = pow2(s as i64 * d);
    if n_rounded < n_box / pow2(d) {
        return Err(Error::Rounding { n: n_box });
    }

    // exact partition of [0, N']^n into rectangle translates; pigeonhole the
    // densest one (its density is >= the mean, hence >= the global density)
    let extents: Vec<f64> = c.polys.iter().map(|p| pow2(s as i64 * p.deg as i64)).collect();
    let counts: Vec<usize> = extents.iter().map(|x| (n_rounded / x).round() as usize).collect();
    let h = e.cell_sizes();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut multi = vec![0usize; e.n];
    loop {
        let offset: Vec<f64> = multi.iter().zip(&extents).map(|(&m, &x)| m as f64 * x).collect();
        let mut mass = 0.0;
        rect_mass(e, &offset, &extents, &h, &mut mass);
        let vol: f64 = extents.iter().product();
        let density = mass / vol;
        if best.as_ref().map_or(true, |(b, _)| density > *b) {
            best = Some((density, multi.clone()));
        }
        // lexicographic advance
        let mut a = e.n;
        while a > 0 {
            a -= 1;
            multi[a] += 1;
            if multi[a] < counts[a] {
                break;
            }
            multi[a] = 0;
            if a == 0 {
                a = usize::MAX;
                break;
            }
        }
        if a == usize::MAX {
            break;
        }
    }
    let (density, multi) = best.unwrap();
    let offset: Vec<f64> = multi.iter().zip(&extents).map(|(&m, &x)| m as f64 * x).collect();

    // crop + anisotropic rescale to the unit cube (axis i by 2^{-s d_i})
    let sub_dims: Vec<usize> = extents.iter().zip(&h).map(|(&x, &hh)| (x / hh).round() as usize).collect();
    if sub_dims.iter().any(|&dd| dd < 8) {
        return Err(Error::Resolution {
            ell: s,
            dims: e.dims.clone(),
            min_cells: 8,
        });
    }
    let unit = GridFunction::from_fn(&sub_dims, &vec![[0.0, 1.0]; e.n], |y| {
        let x: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(a, &v)| offset[a] + v * extents[a])
            .collect();
        nearest_sample(e, &x)
    });

    let mut cfg_unit = *cfg;
    cfg_unit.epsilon = (density * 0.9).max(unit.cell_volume());
    let w = scan_two_point(&unit, c, s, &cfg_unit, SearchMode::Scaled)?;

    let back = |p: &[f64]| -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(a, &v)| offset[a] + v * extents[a])
            .collect()
    };
    let t_original = pow2(s as i64) * w.t;
    Ok(PatternWitness {
        mode: SearchMode::Scaled,
        x: back(&w.x),
        t: t_original,
        ell: w.ell,
        overlap_mass: w.overlap_mass,
        noise_threshold: w.noise_threshold,
        gap_certified: w.gap_certified * pow2(s as i64),
        points: w.points.iter().map(|p| back(p)).collect(),
        rectangle: Some(RectangleReduction {
            s,
            n_rounded,
            offset,
            extents,
            density_in_rect: density,
        }),
        slice: None,
    })
}

fn rect_mass(e: &GridFunction, offset: &[f64], extents: &[f64], h: &[f64], out: &mut f64) {
    // sum of cell masses whose midpoints fall in the rectangle
    let lo: Vec<usize> = offset
        .iter()
        .zip(h)
        .map(|(&o, &hh)| ((o / hh).round().max(0.0)) as usize)
        .collect();
    let hi: Vec<usize> = offset
        .iter()
        .zip(extents)
        .zip(h)
        .enumerate()
        .map(|(a, ((&o, &x), &hh))| (((o + x) / hh).round() as usize).min(e.dims[a]))
        .collect();
    let cellvol = e.cell_volume();
    let mut idx = lo.clone();
    if idx.iter().zip(&hi).any(|(a, b)| a >= b) {
        return;
    }
    loop {
        let mut flat = 0usize;
        for a in 0..e.n {
            flat = flat * e.dims[a] + idx[a];
        }
        *out += e.values[flat] * cellvol;
        let mut a = e.n;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < hi[a] {
                break;
            }
            idx[a] = lo[a];
        }
    }
}

/// Search through affine slices for rank-deficient curves: finds a translate
/// x0 + V with slice measure >= kappa * epsilon, reduces to [0,1]^{n0},
/// searches the reduced curve, and lifts the witness back.
pub fn slice_search(
    e: &GridFunction,
    c: &Curve,
    kit: &BumpKit,
    cfg: &SearchConfig,
) -> Result<PatternWitness> {
    let info = match analyze_dependence(c)? {
        Dependence::Dependent(info) => info,
        Dependence::FullRank(_) => {
            return Err(Error::Precondition(
                "slice search requires a rank-deficient curve; use search_unit".into(),
            ))
        }
    };
    check_density(e, cfg)?;
    let n = e.n;
    let n0 = info.n0;

    // lift map L1: R^{n0} -> R^n (identity on basis coords, L on the rest)
    let lift = |y: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (i, &bi) in info.basis_idx.iter().enumerate() {
            x[bi] = y[i];
        }
        for (j, &dj) in info.dependent_idx.iter().enumerate() {
            x[dj] = (0..n0).map(|i| info.l_matrix[i][j] * y[i]).sum();
        }
        x
    };
    let l_frobenius_sq: f64 = info.l_matrix.iter().flatten().map(|v| v * v).sum();
    let kappa = (1.0 + l_frobenius_sq).powf(-(n0 as f64) / 2.0) / 2.0;
    // Jacobian of L1 restricted to its image
    let jac = {
        // gram of the lift applied to the n0 unit vectors
        let cols: Vec<Vec<f64>> = (0..n0)
            .map(|i| {
                let mut y = vec![0.0; n0];
                y[i] = 1.0;
                lift(&y)
            })
            .collect();
        let mut gram = vec![vec![0.0; n0]; n0];
        for i in 0..n0 {
            for j in 0..n0 {
                gram[i][j] = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            }
        }
        det(&gram).sqrt()
    };

    // orthonormal complement of V = image of L1 (Gram-Schmidt on the
    // coordinate directions against the lifted basis)
    let v_basis: Vec<Vec<f64>> = {
        let mut basis: Vec<Vec<f64>> = (0..n0)
            .map(|i| {
                let mut y = vec![0.0; n0];
                y[i] = 1.0;
                lift(&y)
            })
            .collect();
        orthonormalize(&mut basis);
        basis
    };
    let complement: Vec<Vec<f64>> = {
        let mut out = Vec::new();
        for a in 0..n {
            let mut v = vec![0.0; n];
            v[a] = 1.0;
            for b in v_basis.iter().chain(out.iter()) {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for vi in v.iter_mut() {
                    *vi /= norm;
                }
                out.push(v);
            }
        }
        out
    };

    // slice parameter grid: y in [0,1]^{n0} at the resolution of the finest
    // input axis
    let m = *e.dims.iter().max().unwrap();
    let sub_dims = vec![m; n0];
    let floor = kappa * cfg.epsilon;
    // translate scan over the complement directions
    let offsets_1d = 128usize;
    let span: f64 = 2.0 * (n as f64).sqrt();
    let mut best_slice: Option<(f64, Vec<f64>, GridFunction)> = None;
    let mut multi = vec![0usize; complement.len()];
    'outer: loop {
        let mut x0 = vec![0.0; n];
        for (ci, cvec) in complement.iter().enumerate() {
            let coef = -span / 2.0 + span * multi[ci] as f64 / (offsets_1d - 1) as f64;
            for a in 0..n {
                x0[a] += coef * cvec[a];
            }
        }
        let reduced = GridFunction::from_fn(&sub_dims, &vec![[0.0, 1.0]; n0], |y| {
            let x: Vec<f64> = lift(y).iter().zip(&x0).map(|(a, b)| a + b).collect();
            nearest_sample(e, &x)
        });
        let measure = reduced.integral() * jac;
        if measure >= floor {
            best_slice = Some((measure, x0, reduced));
            break 'outer;
        }
        if best_slice.as_ref().map_or(true, |(b, _, _)| measure > *b) {
            best_slice = Some((measure, x0, reduced));
        }
        let mut a = complement.len();
        loop {
            if a == 0 {
                break 'outer;
            }
            a -= 1;
            multi[a] += 1;
            if multi[a] < offsets_1d {
                break;
            }
            multi[a] = 0;
        }
    }
    let (measure, x0, reduced) = best_slice.unwrap();
    if measure < floor {
        return Err(Error::NoSliceFound { floor, best: measure });
    }

    // reduced curve: the basis polynomials
    let reduced_curve = make_curve(
        &info
            .basis_idx
            .iter()
            .map(|&i| c.polys[i].coeffs.clone())
            .collect::<Vec<_>>(),
    )?;
    let mut cfg_sub = *cfg;
    cfg_sub.epsilon = (reduced.integral() * 0.9).max(reduced.cell_volume());
    let w = search_unit(&reduced, &reduced_curve, kit, &cfg_sub)?;

    // lift the witness and check the pattern identity
    let p1: Vec<f64> = lift(&w.points[0]).iter().zip(&x0).map(|(a, b)| a + b).collect();
    let p2: Vec<f64> = lift(&w.points[1]).iter().zip(&x0).map(|(a, b)| a + b).collect();
    let gamma_t = eval_curve(c, w.t);
    let h = e.cell_sizes();
    let residual_cells = (0..n)
        .map(|a| ((p2[a] - p1[a]) - gamma_t[a]).abs() / h[a])
        .fold(0.0, f64::max);
    if residual_cells > 2.0 {
        return Err(Error::Precondition(format!(
            "lifted witness misses the curve by {residual_cells:.2} cells"
        )));
    }
    Ok(PatternWitness {
        mode: SearchMode::Slice,
        x: p1.clone(),
        t: w.t,
        ell: w.ell,
        overlap_mass: w.overlap_mass,
        noise_threshold: w.noise_threshold,
        gap_certified: w.gap_certified,
        points: vec![p1, p2],
        rectangle: None,
        slice: Some(SliceReduction {
            x0,
            n0,
            basis_idx: info.basis_idx.clone(),
            kappa,
            slice_measure: measure,
            lift_residual_cells: residual_cells,
        }),
    })
}

fn det(m: &[Vec<f64>]) -> f64 {
    // small dense LU without pivoch growth concerns (n0 <= 3 in practice)
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut d = 1.0;
    for k in 0..n {
        let (piv, _) = a
            .iter()
            .enumerate()
            .skip(k)
            .map(|(i, row)| (i, row[k].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if piv != k {
            a.swap(piv, k);
            d = -d;
        }
        if a[k][k] == 0.0 {
            return 0.0;
        }
        d *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    d
}

fn orthonormalize(basis: &mut [Vec<f64>]) {
    for i in 0..basis.len() {
        for j in 0..i {
            let proj: f64 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
            let prev = basis[j].clone();
            for (v, p) in basis[i].iter_mut().zip(&prev) {
                *v -= proj * p;
            }
        }
        let norm: f64 = basis[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        for v in basis[i].iter_mut() {
            *v /= norm;
        }
    }
}

/// Corner-triple search on [0, N]^2: rectangle reduction at sizes
/// 2^{s d_1} x 2^{s d_2}, anisotropic rescale, and a trilinear t-scan.
pub fn corner_search(
    set: &GridFunction,
    p1: &Polynomial,
    p2: &Polynomial,
    _kit: &BumpKit,
    lattice: &ScaleLattice,
    cfg: &SearchConfig,
) -> Result<PatternWitness> {
    if set.n != 2 {
        return Err(Error::Dimension { expected: 2, got: set.n });
    }
    if p1.deg >= p2.deg {
        return Err(Error::Hypothesis {
            detail: format!("corner search needs deg P1 < deg P2, got {} and {}", p1.deg, p2.deg),
        });
    }
    check_density(set, cfg)?;
    let n_box = set.domain[0][1];
    let d = p2.deg.max(p1.deg) as i64;

    let (unit, s, rectangle) = if n_box > 1.0 {
        let mut s = None;
        for j in 0..32u32 {
            let cand = lattice.s_value(j);
            if pow2(cand as i64 * d) <= n_box {
                s = Some(cand);
            } else {
                break;
            }
        }
        let s = s.ok_or(Error::Rounding { n: n_box })?;
        let n_rounded = pow2(s as i64 * d);
        let extents = vec![pow2(s as i64 * p1.deg as i64), pow2(s as i64 * p2.deg as i64)];
        let counts: Vec<usize> =
            extents.iter().map(|x| (n_rounded / x).round() as usize).collect();
        let h = set.cell_sizes();
        let mut best: Option<(f64, [usize; 2])> = None;
        for m0 in 0..counts[0] {
            for m1 in 0..counts[1] {
                let offset = vec![m0 as f64 * extents[0], m1 as f64 * extents[1]];
                let mut mass = 0.0;
                rect_mass(set, &offset, &extents, &h, &mut mass);
                let density = mass / (extents[0] * extents[1]);
                if best.map_or(true, |(b, _)| density > b) {
                    best = Some((density, [m0, m1]));
                }
            }
        }
        let (density, m) = best.unwrap();
        let offset = vec![m[0] as f64 * extents[0], m[1] as f64 * extents[1]];
        let sub_dims: Vec<usize> =
            extents.iter().zip(&h).map(|(&x, &hh)| (x / hh).round() as usize).collect();
        if sub_dims.iter().any(|&dd| dd < 8) {
            return Err(Error::Resolution { ell: s, dims: set.dims.clone(), min_cells: 8 });
        }
        let unit = GridFunction::from_fn(&sub_dims, &[[0.0, 1.0], [0.0, 1.0]], |y| {
            nearest_sample(set, &[offset[0] + y[0] * extents[0], offset[1] + y[1] * extents[1]])
        });
        (
            unit,
            s,
            Some(RectangleReduction { s, n_rounded, offset, extents, density_in_rect: density }),
        )
    } else {
        (set.clone(), 0, None)
    };

    let fine = cfg.ell_fine.min(resolution_cap(&unit));
    let mut scanned = 0usize;
    let mut best_overall = 0.0f64;
    for ell in cfg.ell_coarse..=fine {
        let us: Vec<f64> = (0..cfg.u_samples)
            .map(|i| 2.0 - 1.5 * i as f64 / (cfg.u_samples - 1) as f64)
            .collect();
        let results: Vec<(f64, f64, f64, usize)> = us
            .par_iter()
            .map(|&u| {
                let t = pow2(-(ell as i64)) * u;
                let (mass, err, arg) = corner_overlap(&unit, p1, p2, s, t);
                (t, mass, err, arg)
            })
            .collect();
        scanned += results.len();
        for (t, mass, err, arg) in results {
            best_overall = best_overall.max(mass);
            let threshold = cfg.noise_factor * err;
            if mass > threshold && mass > 0.0 {
                let xy = cell_center(&unit, arg);
                let d1 = crate::counting::poly_rescaled(p1, s, t);
                let d2 = crate::counting::poly_rescaled(p2, s, t);
                let unit_points = vec![
                    xy.clone(),
                    vec![xy[0] + d1, xy[1]],
                    vec![xy[0], xy[1] + d2],
                ];
                let back = |p: &[f64]| -> Vec<f64> {
                    match &rectangle {
                        Some(r) => vec![
                            r.offset[0] + p[0] * r.extents[0],
                            r.offset[1] + p[1] * r.extents[1],
                        ],
                        None => p.to_vec(),
                    }
                };
                let t_out = pow2(s as i64) * t;
                return Ok(PatternWitness {
                    mode: SearchMode::Corner,
                    x: back(&xy),
                    t: t_out,
                    ell,
                    overlap_mass: mass,
                    noise_threshold: threshold,
                    gap_certified: pow2(-(ell as i64) - 2) * pow2(s as i64),
                    points: unit_points.iter().map(|p| back(p)).collect(),
                    rectangle,
                    slice: None,
                });
            }
        }
    }
    Err(Error::NoWitnessFound { scanned, best_overlap: best_overall })
}

fn corner_overlap(
    set: &GridFunction,
    p1: &Polynomial,
    p2: &Polynomial,
    s: u32,
    t: f64,
) -> (f64, f64, usize) {
    let d1 = crate::counting::poly_rescaled(p1, s, t);
    let d2 = crate::counting::poly_rescaled(p2, s, t);
    let cellvol = set.cell_volume();
    let h = set.cell_sizes();
    let (n0, n1) = (set.dims[0], set.dims[1]);
    let mut total = 0.0;
    let mut nearest_total = 0.0;
    let mut best = (0.0f64, 0usize);
    for i in 0..n0 {
        let x = set.domain[0][0] + (i as f64 + 0.5) * h[0];
        for j in 0..n1 {
            let v = set.values[i * n1 + j];
            if v == 0.0 {
                continue;
            }
            let y = set.domain[1][0] + (j as f64 + 0.5) * h[1];
            let w = set.interp(&[x + d1, y]) * set.interp(&[x, y + d2]);
            let wn = nearest_sample(set, &[x + d1, y]) * nearest_sample(set, &[x, y + d2]);
            total += v * w;
            nearest_total += v * wn;
            if v * w > best.0 {
                best = (v * w, i * n1 + j);
            }
        }
    }
    ((total * cellvol), (total - nearest_total).abs() * cellvol, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn curve(specs: &[&[(u32, f64)]]) -> Curve {
        let maps: Vec<BTreeMap<u32, f64>> =
            specs.iter().map(|s| s.iter().copied().collect()).collect();
        make_curve(&maps).unwrap()
    }

    fn kit(n: usize) -> BumpKit {
        BumpKit::new(n)
    }

    #[test]
    fn unit_full_cube_finds_largest_t() {
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        let e = GridFunction::from_fn(&[128, 128], &[[0.0, 1.0], [0.0, 1.0]], |_| 1.0);
        let cfg = SearchConfig { epsilon: 0.5, ..Default::default() };
        let w = search_unit(&e, &c, &kit(2), &cfg).unwrap();
        assert!(w.t > 0.5, "t = {}", w.t);
        assert!(w.t > w.gap_certified && w.gap_certified > 0.0);
        assert!(w.overlap_mass > w.noise_threshold);
        // points actually lie on the pattern
        let g = eval_curve(&c, w.t);
        for a in 0..2 {
            assert!((w.points[1][a] - w.points[0][a] - g[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_two_cell_constructed_witness() {
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        // cells at x and x + gamma(0.25) = x + (0.25, 0.0625); dims 128 makes
        // both offsets whole numbers of cells
        let dims = [128usize, 128];
        let h = 1.0 / 128.0;
        let base = [32usize, 32];
        let mut e = GridFunction::zeros(&dims, &[[0.0, 1.0], [0.0, 1.0]]);
        let target = [base[0] + 32, base[1] + 8];
        e.values[base[0] * 128 + base[1]] = 1.0;
        e.values[target[0] * 128 + target[1]] = 1.0;
        let cfg = SearchConfig {
            epsilon: 2.0 * h * h,
            ell_coarse: 1,
            ell_fine: 4,
            u_samples: 241,
            noise_factor: 4.0,
        };
        let w = search_unit(&e, &c, &kit(2), &cfg).unwrap();
        assert!((w.t - 0.25).abs() < 0.01, "t = {}", w.t);
    }

    #[test]
    fn unit_epsilon_below_cell_rejected() {
        let c = curve(&[&[(1, 1.0)]]);
        let e = GridFunction::from_fn(&[64], &[[0.0, 1.0]], |_| 1.0);
        let cfg = SearchConfig { epsilon: 1e-6, ..Default::default() };
        assert!(matches!(search_unit(&e, &c, &kit(1), &cfg), Err(Error::Precondition(_))));
    }

    #[test]
    fn witness_survives_grid_refinement() {
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        let e = GridFunction::from_fn(&[64, 64], &[[0.0, 1.0], [0.0, 1.0]], |x| {
            if (x[0] - 0.4).abs() < 0.3 && (x[1] - 0.4).abs() < 0.3 {
                1.0
            } else {
                0.0
            }
        });
        let cfg = SearchConfig { epsilon: 0.2, ..Default::default() };
        let w = search_unit(&e, &c, &kit(2), &cfg).unwrap();
        let refined = GridFunction::from_fn(&[128, 128], &[[0.0, 1.0], [0.0, 1.0]], |x| {
            nearest_sample(&e, x)
        });
        let shift = eval_curve(&c, w.t);
        let (mass, _, _) = overlap_at(&refined, &shift);
        assert!(mass > 0.0);
    }

    #[test]
    fn scaled_monomial_commutes_with_unit() {
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        let lat = ScaleLattice::new(1);
        // N = 2^{sd} = 16 with s = 2, d = 2; E = one dense block
        let e = GridFunction::from_fn(&[256, 256], &[[0.0, 16.0], [0.0, 16.0]], |x| {
            if x[0] < 4.0 && x[1] < 4.0 {
                1.0
            } else {
                0.0
            }
        });
        let cfg = SearchConfig { epsilon: 0.05, ..Default::default() };
        let w = search_scaled(&e, &c, &kit(2), &lat, &cfg).unwrap();
        let r = w.rectangle.as_ref().unwrap();
        assert_eq!(r.s, 2);
        assert!(r.density_in_rect >= 0.05);
        assert!(w.t > 0.0);
        // t_original = 2^s t_unit: re-run the unit search on the extracted
        // rectangle and compare exactly
        let h = e.cell_sizes();
        let sub_dims: Vec<usize> = r
            .extents
            .iter()
            .zip(&h)
            .map(|(&x, &hh)| (x / hh).round() as usize)
            .collect();
        let sub = GridFunction::from_fn(&sub_dims, &[[0.0, 1.0], [0.0, 1.0]], |y| {
            nearest_sample(&e, &[r.offset[0] + y[0] * r.extents[0], r.offset[1] + y[1] * r.extents[1]])
        });
        let mut cfg_unit = cfg;
        cfg_unit.epsilon = (r.density_in_rect * 0.9).max(sub.cell_volume());
        let wu = scan_two_point(&sub, &c, 2, &cfg_unit, SearchMode::Unit).unwrap();
        assert!((w.t - 4.0 * wu.t).abs() < 1e-12);
    }

    #[test]
    fn rectangle_pigeonhole_beats_mean_density() {
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        let lat = ScaleLattice::new(1);
        let e = GridFunction::from_fn(&[256, 256], &[[0.0, 16.0], [0.0, 16.0]], |x| {
            if (x[0] as usize + x[1] as usize) % 3 == 0 {
                1.0
            } else {
                0.0
            }
        });
        let global = e.integral() / (16.0 * 16.0);
        let cfg = SearchConfig { epsilon: global * 0.9, ..Default::default() };
        let w = search_scaled(&e, &c, &kit(2), &lat, &cfg).unwrap();
        assert!(w.rectangle.unwrap().density_in_rect >= global - 1e-12);
    }

    #[test]
    fn slice_diagonal_strip() {
        // gamma = (t, 2t): rank 1, L = [2]
        let c = curve(&[&[(1, 1.0)], &[(1, 2.0)]]);
        let e = GridFunction::from_fn(&[256, 256], &[[0.0, 1.0], [0.0, 1.0]], |x| {
            if (x[1] - 2.0 * x[0] + 0.5).abs() < 0.3 {
                1.0
            } else {
                0.0
            }
        });
        let cfg = SearchConfig { epsilon: 0.2, ..Default::default() };
        let w = search_unit(&e, &c, &kit(2), &cfg).unwrap();
        assert_eq!(w.mode, SearchMode::Slice);
        let info = w.slice.as_ref().unwrap();
        assert!(info.slice_measure >= info.kappa * cfg.epsilon);
        assert!(info.lift_residual_cells <= 2.0);
        // the two points really differ by gamma(t)
        let g = eval_curve(&c, w.t);
        let h = 1.0 / 256.0;
        for a in 0..2 {
            assert!((w.points[1][a] - w.points[0][a] - g[a]).abs() <= 2.0 * h);
        }
    }

    #[test]
    fn slice_rejects_full_rank() {
        let c = curve(&[&[(1, 1.0)], &[(2, 1.0)]]);
        let e = GridFunction::from_fn(&[64, 64], &[[0.0, 1.0], [0.0, 1.0]], |_| 1.0);
        let cfg = SearchConfig { epsilon: 0.5, ..Default::default() };
        assert!(matches!(
            slice_search(&e, &c, &kit(2), &cfg),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn corner_full_square() {
        let p1 = Polynomial::new(&[(1u32, 1.0)].into_iter().collect(), 0).unwrap();
        let p2 = Polynomial::new(&[(2u32, 1.0)].into_iter().collect(), 1).unwrap();
        let s = GridFunction::from_fn(&[128, 128], &[[0.0, 1.0], [0.0, 1.0]], |_| 1.0);
        let lat = ScaleLattice::new(1);
        let cfg = SearchConfig { epsilon: 0.5, ..Default::default() };
        let w = corner_search(&s, &p1, &p2, &kit(2), &lat, &cfg).unwrap();
        assert_eq!(w.points.len(), 3);
        assert!(w.t > 0.25);
        // triple shape
        assert!((w.points[1][0] - w.points[0][0] - w.t).abs() < 1e-12);
        assert!((w.points[2][1] - w.points[0][1] - w.t * w.t).abs() < 1e-12);
    }

    #[test]
    fn corner_three_cell_constructed_witness() {
        let p1 = Polynomial::new(&[(1u32, 1.0)].into_iter().collect(), 0).unwrap();
        let p2 = Polynomial::new(&[(2u32, 1.0)].into_iter().collect(), 1).unwrap();
        // t = 0.2 at dims 160: P1 = 0.2 = 32 cells, P2 = 0.04 = 6.4 cells —
        // use dims 200 so both are whole: 40 and 8 cells
        let dims = [200usize, 200];
        let mut set = GridFunction::zeros(&dims, &[[0.0, 1.0], [0.0, 1.0]]);
        let (i, j) = (60usize, 60usize);
        set.values[i * 200 + j] = 1.0;
        set.values[(i + 40) * 200 + j] = 1.0;
        set.values[i * 200 + (j + 8)] = 1.0;
        let h2 = set.cell_volume();
        let lat = ScaleLattice::new(1);
        let cfg = SearchConfig {
            epsilon: 3.0 * h2,
            ell_coarse: 2,
            ell_fine: 4,
            u_samples: 321,
            noise_factor: 4.0,
        };
        let w = corner_search(&set, &p1, &p2, &kit(2), &lat, &cfg).unwrap();
        assert!((w.t - 0.2).abs() < 0.01, "t = {}", w.t);
    }

    #[test]
    fn corner_density_precondition() {
        let p1 = Polynomial::new(&[(1u32, 1.0)].into_iter().collect(), 0).unwrap();
        let p2 = Polynomial::new(&[(2u32, 1.0)].into_iter().collect(), 1).unwrap();
        let set = GridFunction::zeros(&[64, 64], &[[0.0, 1.0], [0.0, 1.0]]);
        let lat = ScaleLattice::new(1);
        let cfg = SearchConfig { epsilon: 0.1, ..Default::default() };
        assert!(corner_search(&set, &p1, &p2, &kit(2), &lat, &cfg).is_err());
    }
}
