//! Polynomial curves gamma(t) = (P_1(t), ..., P_n(t)) with zero constant
//! term, their anisotropic rescalings, linear-dependence analysis, and the
//! dyadic scale-lattice calibration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample;

/// A real polynomial with zero constant term, stored sparsely by exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    /// exponent -> coefficient; no exponent 0, endpoints nonzero.
    pub coeffs: BTreeMap<u32, f64>,
    /// lowest exponent with nonzero coefficient
    pub sigma: u32,
    /// highest exponent with nonzero coefficient
    pub deg: u32,
}

impl Polynomial {
    pub fn new(raw: &BTreeMap<u32, f64>, index: usize) -> Result<Self> {
        if raw.contains_key(&0) {
            return Err(Error::ConstantTerm);
        }
        let coeffs: BTreeMap<u32, f64> =
            raw.iter().filter(|(_, &v)| v != 0.0).map(|(&k, &v)| (k, v)).collect();
        if coeffs.is_empty() {
            return Err(Error::ZeroPolynomial { index });
        }
        let sigma = *coeffs.keys().next().unwrap();
        let deg = *coeffs.keys().next_back().unwrap();
        Ok(Polynomial { coeffs, sigma, deg })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().map(|(&b, &a)| a * t.powi(b as i32)).sum()
    }

    pub fn eval_derivative(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&b, &a)| a * b as f64 * t.powi(b as i32 - 1))
            .sum()
    }
}

/// JSON wire format: {"polys":[{"coeffs":{"1":1.0}},{"coeffs":{"2":1.0}}]}
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSpec {
    pub polys: Vec<PolySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolySpec {
    pub coeffs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub polys: Vec<Polynomial>,
    /// ambient dimension
    pub n: usize,
    /// max degree over components
    pub d: u32,
    pub distinct_degrees: bool,
    /// n x d matrix, entry [i][j] = coefficient of t^(j+1) in P_i
    pub coeff_matrix: Vec<Vec<f64>>,
    pub rank: usize,
}

const RANK_TOL: f64 = 1e-10;

impl Curve {
    pub fn from_spec(spec: &CurveSpec) -> Result<Self> {
        let maps: Vec<BTreeMap<u32, f64>> = spec
            .polys
            .iter()
            .map(|p| {
                p.coeffs
                    .iter()
                    .map(|(k, &v)| {
                        k.parse::<u32>()
                            .map(|e| (e, v))
                            .map_err(|_| Error::Parse(format!("bad exponent key {k:?}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        make_curve(&maps)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: CurveSpec = serde_json::from_str(s)?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> CurveSpec {
        CurveSpec {
            polys: self
                .polys
                .iter()
                .map(|p| PolySpec {
                    coeffs: p.coeffs.iter().map(|(&b, &a)| (b.to_string(), a)).collect(),
                })
                .collect(),
        }
    }

    /// Coefficient of t^beta in component i (0 when absent).
    pub fn coeff(&self, i: usize, beta: u32) -> f64 {
        if beta == 0 || beta > self.d {
            0.0
        } else {
            self.coeff_matrix[i][(beta - 1) as usize]
        }
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.polys.iter().map(|p| p.deg).collect()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.n
    }
}

pub fn make_curve(poly_specs: &[BTreeMap<u32, f64>]) -> Result<Curve> {
    if poly_specs.is_empty() {
        return Err(Error::Parse("curve needs at least one polynomial".into()));
    }
    let polys: Vec<Polynomial> = poly_specs
        .iter()
        .enumerate()
        .map(|(i, m)| Polynomial::new(m, i))
        .collect::<Result<_>>()?;
    let n = polys.len();
    let d = polys.iter().map(|p| p.deg).max().unwrap();
    let mut degs: Vec<u32> = polys.iter().map(|p| p.deg).collect();
    degs.sort_unstable();
    let distinct_degrees = degs.windows(2).all(|w| w[0] != w[1]);

    let coeff_matrix: Vec<Vec<f64>> = polys
        .iter()
        .map(|p| (1..=d).map(|b| *p.coeffs.get(&b).unwrap_or(&0.0)).collect())
        .collect();
    let rank = matrix_rank(&coeff_matrix, RANK_TOL);
    Ok(Curve { polys, n, d, distinct_degrees, coeff_matrix, rank })
}

pub fn eval_curve(c: &Curve, t: f64) -> Vec<f64> {
    c.polys.iter().map(|p| p.eval(t)).collect()
}

/// gamma_s(t) = (2^{-d_i s} P_i(2^s t))_i as a new curve: the coefficient of
/// t^beta in component i becomes a_{i,beta} * 2^{s(beta - d_i)}.
pub fn rescale_curve(c: &Curve, s: u32) -> Curve {
    let maps: Vec<BTreeMap<u32, f64>> = c
        .polys
        .iter()
        .map(|p| {
            p.coeffs
                .iter()
                .map(|(&b, &a)| (b, a * pow2(s as i64 * (b as i64 - p.deg as i64))))
                .collect()
        })
        .collect();
    make_curve(&maps).expect("rescaling preserves validity")
}

pub fn pow2(e: i64) -> f64 {
    (e as f64).exp2()
}

// ---------------------------------------------------------------------------
// dependence analysis
// ---------------------------------------------------------------------------

/// Data about an invertible n0 x n0 minor of a full-rank coefficient matrix.
#[derive(Debug, Clone)]
pub struct MinorData {
    /// exponents J (subset of {1..d}) indexing the chosen columns
    pub exponents: Vec<u32>,
    pub matrix: Vec<Vec<f64>>,
    /// operator norm of the inverse minor (= 1 / smallest singular value)
    pub inverse_norm: f64,
}

#[derive(Debug, Clone)]
pub struct DependenceInfo {
    /// dimension of the row-space basis
    pub n0: usize,
    /// indices of a polynomial basis (earliest maximal independent subset)
    pub basis_idx: Vec<usize>,
    /// n0 x (n - n0) matrix with (P_dep) = (P_basis) . L
    pub l_matrix: Vec<Vec<f64>>,
    /// indices of the non-basis polynomials, aligned with l_matrix columns
    pub dependent_idx: Vec<usize>,
    /// invertible minor of the reduced (basis) curve
    pub minor: MinorData,
}

#[derive(Debug, Clone)]
pub enum Dependence {
    FullRank(MinorData),
    Dependent(DependenceInfo),
}

pub fn analyze_dependence(c: &Curve) -> Result<Dependence> {
    if c.rank == 0 {
        return Err(Error::DegenerateCurve);
    }
    let basis_idx = independent_rows(&c.coeff_matrix, RANK_TOL);
    debug_assert_eq!(basis_idx.len(), c.rank);
    let basis_rows: Vec<Vec<f64>> = basis_idx.iter().map(|&i| c.coeff_matrix[i].clone()).collect();
    let minor = best_minor(&basis_rows)?;

    if c.rank == c.n {
        return Ok(Dependence::FullRank(minor));
    }

    let dependent_idx: Vec<usize> = (0..c.n).filter(|i| !basis_idx.contains(i)).collect();
    let n0 = c.rank;
    // Solve B^T l = r for each dependent row r via normal equations B B^T.
    let gram = mat_mul_t(&basis_rows, &basis_rows);
    let mut l_matrix = vec![vec![0.0; dependent_idx.len()]; n0];
    for (j, &di) in dependent_idx.iter().enumerate() {
        let rhs: Vec<f64> = basis_rows
            .iter()
            .map(|b| dot(b, &c.coeff_matrix[di]))
            .collect();
        let sol = solve_spd(&gram, &rhs)
            .ok_or(Error::DegenerateCurve)?;
        for (i, v) in sol.into_iter().enumerate() {
            l_matrix[i][j] = v;
        }
    }
    Ok(Dependence::Dependent(DependenceInfo { n0, basis_idx, l_matrix, dependent_idx, minor }))
}

/// Greedy earliest maximal independent subset of rows.
fn independent_rows(m: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut idx = Vec::new();
    for (i, row) in m.iter().enumerate() {
        let mut r = row.clone();
        for k in &kept {
            let nk = dot(k, k);
            if nk > 0.0 {
                let c = dot(&r, k) / nk;
                for (x, y) in r.iter_mut().zip(k) {
                    *x -= c * y;
                }
            }
        }
        let scale = row.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
        if dot(&r, &r).sqrt() > tol * scale {
            kept.push(r);
            idx.push(i);
        }
    }
    idx
}

fn matrix_rank(m: &[Vec<f64>], tol: f64) -> usize {
    independent_rows(m, tol).len()
}

/// Choose the column subset J (|J| = rows) maximizing the minimum singular
/// value of the minor. All subsets are tried when the count is modest,
/// otherwise the pivot columns of a column-pivoted elimination are used.
fn best_minor(rows: &[Vec<f64>]) -> Result<MinorData> {
    let n0 = rows.len();
    let d = rows[0].len();
    let candidates: Vec<Vec<usize>> = if binomial(d, n0) <= 5000 {
        subsets(d, n0)
    } else {
        vec![pivot_columns(rows)]
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    for cand in candidates {
        let minor: Vec<Vec<f64>> =
            rows.iter().map(|r| cand.iter().map(|&j| r[j]).collect()).collect();
        let smin = min_singular_value(&minor);
        if best.as_ref().map_or(true, |(b, _)| smin > *b) {
            best = Some((smin, cand));
        }
    }
    let (smin, cols) = best.ok_or(Error::DegenerateCurve)?;
    if smin <= 0.0 || !smin.is_finite() {
        return Err(Error::DegenerateCurve);
    }
    let matrix: Vec<Vec<f64>> = rows.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect();
    Ok(MinorData {
        exponents: cols.iter().map(|&j| (j + 1) as u32).collect(),
        matrix,
        inverse_norm: 1.0 / smin,
    })
}

fn pivot_columns(rows: &[Vec<f64>]) -> Vec<usize> {
    let n0 = rows.len();
    let d = rows[0].len();
    // columns as vectors, greedy Gram-Schmidt by largest residual
    let cols: Vec<Vec<f64>> = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut residual = cols.clone();
    let mut chosen = Vec::new();
    for _ in 0..n0 {
        let (jbest, _) = residual
            .iter()
            .enumerate()
            .filter(|(j, _)| !chosen.contains(j))
            .map(|(j, v)| (j, dot(v, v)))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        chosen.push(jbest);
        let q = residual[jbest].clone();
        let nq = dot(&q, &q).max(1e-300);
        for v in residual.iter_mut() {
            let c = dot(v, &q) / nq;
            for (x, y) in v.iter_mut().zip(&q) {
                *x -= c * y;
            }
        }
    }
    chosen.sort_unstable();
    chosen
}

fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..d {
            cur.push(j);
            rec(j + 1, d, k, cur, out);
            cur.pop();
        }
    }
    rec(0, d, k, &mut cur, &mut out);
    out
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

/// Smallest singular value via Jacobi eigenvalues of M^T M (small matrices).
pub fn min_singular_value(m: &[Vec<f64>]) -> f64 {
    let k = m.len();
    let mut a = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = (0..k).map(|r| m[r][i] * m[r][j]).sum();
        }
    }
    // cyclic Jacobi
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..k {
            for q in (p + 1)..k {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let (aip, aiq) = (a[i][p], a[i][q]);
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..k {
                    let (api, aqi) = (a[p][i], a[q][i]);
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
            }
        }
    }
    (0..k).map(|i| a[i][i].max(0.0)).fold(f64::INFINITY, f64::min).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_mul_t(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().map(|r| b.iter().map(|s| dot(r, s)).collect()).collect()
}

/// Cholesky solve for small symmetric positive definite systems.
fn solve_spd(a: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (rhs[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - ((i + 1)..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// scale lattice
// ---------------------------------------------------------------------------

/// Admissible dyadic scales: s in Gamma*(even naturals incl. 0) and
/// ell in Gamma*(odd naturals). The parity split guarantees |ell - s| >= Gamma
/// and ell >= Gamma for every admissible pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleLattice {
    pub gamma: u32,
}

impl ScaleLattice {
    pub fn new(gamma: u32) -> Self {
        assert!(gamma >= 1);
        ScaleLattice { gamma }
    }

    pub fn s_value(&self, k: u32) -> u32 {
        self.gamma * 2 * k
    }

    pub fn ell_value(&self, k: u32) -> u32 {
        self.gamma * (2 * k + 1)
    }

    pub fn is_admissible_s(&self, s: u32) -> bool {
        s % self.gamma == 0 && (s / self.gamma) % 2 == 0
    }

    pub fn is_admissible_ell(&self, ell: u32) -> bool {
        ell >= self.gamma && ell % self.gamma == 0 && (ell / self.gamma) % 2 == 1
    }

    /// Nearest admissible ell to the real target (ties resolve downward only
    /// when both neighbors are admissible and equidistant).
    pub fn round_ell(&self, target: f64) -> u32 {
        let g = self.gamma as f64;
        let k = ((target / g - 1.0) / 2.0).round().max(0.0) as u32;
        self.ell_value(k)
    }
}

// ---------------------------------------------------------------------------
// calibration
// ---------------------------------------------------------------------------

const GAMMA_CAP: u32 = 64;

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub gamma: u32,
    /// min over the test grid of max_{1<=alpha<=d} |d^alpha phi / dt^alpha|
    pub derivative_margin: f64,
    /// smallest Gamma at which every component's lowest monomial dominates
    /// its tail at scale 2^{-Gamma}
    pub dominance_gamma: u32,
    pub n_xi: usize,
    pub n_t: usize,
    pub threshold: f64,
}

/// Coefficient table of the phase phi_{s,ell}(t, xi): entry [i][b] multiplies
/// xi_i * t^(b+1).
pub fn phase_table(c: &Curve, s: u32, ell: u32) -> Vec<Vec<f64>> {
    let d = c.d as i64;
    (0..c.n)
        .map(|i| {
            let di = c.polys[i].deg as i64;
            (1..=c.d)
                .map(|b| {
                    let a = c.coeff(i, b);
                    if a == 0.0 {
                        0.0
                    } else {
                        let e = s as i64 * (b as i64 - di) + (d - b as i64) * ell as i64;
                        a * pow2(e)
                    }
                })
                .collect()
        })
        .collect()
}

/// phi_{s,ell}(t, xi) from the coefficient-sum form.
pub fn phase_from_table(table: &[Vec<f64>], xi: &[f64], t: f64) -> f64 {
    let d = table[0].len();
    let mut coef = vec![0.0; d];
    for (row, &x) in table.iter().zip(xi) {
        for (cb, &w) in coef.iter_mut().zip(row) {
            *cb += w * x;
        }
    }
    // Horner from the top
    let mut acc = 0.0;
    for b in (0..d).rev() {
        acc = acc * t + coef[b];
    }
    acc * t
}

/// alpha-th t-derivative of the phase from the coefficient-sum form.
pub fn phase_derivative_from_table(table: &[Vec<f64>], xi: &[f64], t: f64, alpha: u32) -> f64 {
    let d = table[0].len();
    let mut out = 0.0;
    for b in alpha as usize..=d {
        let mut coef = 0.0;
        for (row, &x) in table.iter().zip(xi) {
            coef += row[b - 1] * x;
        }
        if coef == 0.0 {
            continue;
        }
        let mut fall = 1.0;
        for j in 0..alpha {
            fall *= (b as u32 - j) as f64;
        }
        out += coef * fall * t.powi(b as i32 - alpha as i32);
    }
    out
}

/// Certify the smallest Gamma <= 64 such that
/// (1) on every test pair (s, ell) from the candidate lattice and every
///     (xi, t) grid point of the shell 1/2 <= |xi| <= 4 and window [1/2, 2],
///     some t-derivative of order 1..=d of the phase has magnitude
///     >= 1/(2 sqrt(2n)) (the van der Corput floor), and
/// (2) each component's lowest monomial dominates the rest of the component
///     at scale t ~ 2^{-Gamma} (margin factor 2), which keeps the
///     substitution windows monotone.
pub fn calibrate_lattice(c: &Curve, n_xi: usize, n_t: usize) -> Result<ScaleLattice> {
    calibrate_report(c, n_xi, n_t).map(|r| ScaleLattice::new(r.gamma))
}

pub fn calibrate_report(c: &Curve, n_xi: usize, n_t: usize) -> Result<CalibrationReport> {
    if !(c.is_full_rank() || c.distinct_degrees) {
        return Err(Error::Hypothesis {
            detail: "calibration covers full-rank or distinct-degree curves only".into(),
        });
    }
    let threshold = 1.0 / (2.0 * (2.0 * c.n as f64).sqrt());
    let xis = sample::shell_points(c.n, n_xi);
    let ts = sample::midpoints(0.5, 2.0, n_t);
    let dominance_gamma = dominance_gamma(c).ok_or_else(|| calibration_error(c, GAMMA_CAP))?;

    let mut worst: Option<(Vec<f64>, f64, u32, u32, f64)> = None;
    for gamma in dominance_gamma..=GAMMA_CAP {
        let mut pairs: Vec<(u32, u32)> = vec![(0, gamma), (0, 3 * gamma)];
        if c.distinct_degrees {
            for s in [2 * gamma, 4 * gamma] {
                for ell in [gamma, 3 * gamma] {
                    pairs.push((s, ell));
                }
            }
        }
        let mut margin = f64::INFINITY;
        let mut ok = true;
        for &(s, ell) in &pairs {
            let table = phase_table(c, s, ell);
            let pair_min = xis
                .par_iter()
                .map(|xi| {
                    let mut local = f64::INFINITY;
                    for &t in &ts {
                        let best = (1..=c.d)
                            .map(|a| phase_derivative_from_table(&table, xi, t, a).abs())
                            .fold(0.0f64, f64::max);
                        if best < local {
                            local = best;
                        }
                    }
                    local
                })
                .reduce(|| f64::INFINITY, f64::min);
            margin = margin.min(pair_min);
            if pair_min < threshold {
                ok = false;
                // locate a violating point for the error report
                'outer: for xi in &xis {
                    for &t in &ts {
                        let best = (1..=c.d)
                            .map(|a| phase_derivative_from_table(&table, xi, t, a).abs())
                            .fold(0.0f64, f64::max);
                        if best < threshold
                            && worst.as_ref().map_or(true, |w| best < w.4)
                        {
                            worst = Some((xi.clone(), t, s, ell, best));
                            break 'outer;
                        }
                    }
                }
                break;
            }
        }
        if ok {
            return Ok(CalibrationReport {
                gamma,
                derivative_margin: margin,
                dominance_gamma,
                n_xi,
                n_t,
                threshold,
            });
        }
    }
    if let Some((xi, t, s, ell, value)) = worst {
        Err(Error::CalibrationFailed { cap: GAMMA_CAP, xi, t, s, ell, value })
    } else {
        Err(calibration_error(c, GAMMA_CAP))
    }
}

fn calibration_error(_c: &Curve, cap: u32) -> Error {
    Error::CalibrationFailed {
        cap,
        xi: vec![],
        t: 0.0,
        s: 0,
        ell: 0,
        value: f64::NAN,
    }
}

/// Smallest Gamma such that for every component i,
/// sum_{beta > sigma_i} |a_{i,beta}| 2^{(sigma_i - beta)(Gamma - 1)}
///   <= |a_{i,sigma_i}| / 2.
fn dominance_gamma(c: &Curve) -> Option<u32> {
    'gamma: for gamma in 1..=GAMMA_CAP {
        for p in &c.polys {
            let lead = p.coeffs[&p.sigma].abs();
            let tail: f64 = p
                .coeffs
                .iter()
                .filter(|(&b, _)| b > p.sigma)
                .map(|(&b, &a)| a.abs() * pow2(-((b - p.sigma) as i64) * (gamma as i64 - 1)))
                .sum();
            if tail > lead / 2.0 {
                continue 'gamma;
            }
        }
        return Some(gamma);
    }
    None
}
