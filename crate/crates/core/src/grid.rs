//! Grid-sampled functions on axis-aligned boxes: mollifier convolutions,
//! sharp Littlewood–Paley band projections, single-axis partial
//! convolutions, norms, and the sidecar+payload file format.

use std::io::{Read as _, Write as _};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bump::BumpKit;
use crate::curve::pow2;
use crate::error::{Error, Result};
use crate::fft;

/// A function sampled at cell midpoints of a regular grid on a box, stored
/// row-major, implicitly extended by zero outside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub n: usize,
    pub dims: Vec<usize>,
    /// per-axis [lower, upper]
    pub domain: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    dims: Vec<usize>,
    #[serde(rename = "box")]
    domain: Vec<[f64; 2]>,
    dtype: String,
    order: String,
}

impl GridFunction {
    pub fn zeros(dims: &[usize], domain: &[[f64; 2]]) -> Self {
        assert_eq!(dims.len(), domain.len());
        let total = dims.iter().product();
        GridFunction {
            n: dims.len(),
            dims: dims.to_vec(),
            domain: domain.to_vec(),
            values: vec![0.0; total],
        }
    }

    /// Sample `f` at every cell midpoint.
    pub fn from_fn(dims: &[usize], domain: &[[f64; 2]], f: impl Fn(&[f64]) -> f64) -> Self {
        let mut g = Self::zeros(dims, domain);
        let mut x = vec![0.0; g.n];
        let dims_owned = g.dims.clone();
        let dom = g.domain.clone();
        let h = g.cell_sizes();
        fft::for_each_index(&dims_owned, |flat, idx| {
            for a in 0..dom.len() {
                x[a] = dom[a][0] + (idx[a] as f64 + 0.5) * h[a];
            }
            g.values[flat] = f(&x);
        });
        g
    }

    pub fn cell_sizes(&self) -> Vec<f64> {
        self.dims
            .iter()
            .zip(&self.domain)
            .map(|(&d, b)| (b[1] - b[0]) / d as f64)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_sizes().iter().product()
    }

    pub fn side_lengths(&self) -> Vec<f64> {
        self.domain.iter().map(|b| b[1] - b[0]).collect()
    }

    /// Midpoint coordinate of the cell with multi-index `idx`.
    pub fn coord(&self, idx: &[usize]) -> Vec<f64> {
        let h = self.cell_sizes();
        idx.iter()
            .zip(&self.domain)
            .zip(&h)
            .map(|((&i, b), &hh)| b[0] + (i as f64 + 0.5) * hh)
            .collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate() {
            flat = flat * self.dims[a] + i;
        }
        flat
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    pub fn inner(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.cell_volume()
    }

    pub fn subtract(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.dims, other.dims);
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v -= w;
        }
        out
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= c;
        }
        out
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> GridFunction {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v = v.clamp(lo, hi);
        }
        out
    }

    /// True when all samples lie in [0, 1] (density subtype).
    pub fn is_density(&self) -> bool {
        self.values.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    /// Multilinear interpolation at `x`, zero outside the box.
    pub fn interp(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let h = self.cell_sizes();
        let mut base = vec![0i64; self.n];
        let mut frac = vec![0.0; self.n];
        for a in 0..self.n {
            let u = (x[a] - self.domain[a][0]) / h[a] - 0.5;
            let f = u.floor();
            base[a] = f as i64;
            frac[a] = u - f;
        }
        let mut out = 0.0;
        for corner in 0..(1usize << self.n) {
            let mut w = 1.0;
            let mut flat: i64 = 0;
            let mut inside = true;
            for a in 0..self.n {
                let up = (corner >> a) & 1 == 1;
                let i = base[a] + up as i64;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
                if i < 0 || i >= self.dims[a] as i64 {
                    inside = false;
                    break;
                }
                flat = flat * self.dims[a] as i64 + i;
            }
            if inside {
                out += w * self.values[flat as usize];
            }
        }
        out
    }

    /// Re-embed into a larger box with `pad` extra zero cells on every side
    /// of every axis, keeping the cell size. Convolutions on the embedded
    /// grid lose no mass at the original boundary as long as the kernel
    /// reach stays within the margin.
    pub fn embed(&self, pad: usize) -> GridFunction {
        let h = self.cell_sizes();
        let dims: Vec<usize> = self.dims.iter().map(|&d| d + 2 * pad).collect();
        let domain: Vec<[f64; 2]> = self
            .domain
            .iter()
            .zip(&h)
            .map(|(b, &hh)| [b[0] - pad as f64 * hh, b[1] + pad as f64 * hh])
            .collect();
        let mut out = GridFunction::zeros(&dims, &domain);
        fft::for_each_index(&self.dims, |flat, idx| {
            let mut p = 0usize;
            for (a, &i) in idx.iter().enumerate() {
                p = p * dims[a] + (i + pad);
            }
            out.values[p] = self.values[flat];
        });
        out
    }

    /// Largest frequency radius representable on this grid.
    pub fn nyquist_radius(&self) -> f64 {
        self.dims
            .iter()
            .zip(self.side_lengths())
            .map(|(&d, l)| {
                let m = d as f64 / 2.0 / l;
                m * m
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Write raw little-endian payload at `path` and the JSON sidecar at
    /// `path` + ".json".
    pub fn save(&self, path: &Path) -> Result<()> {
        let sidecar = Sidecar {
            n: self.n,
            dims: self.dims.clone(),
            domain: self.domain.clone(),
            dtype: "f64-le".into(),
            order: "row-major".into(),
        };
        let side_path = sidecar_path(path);
        let json = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(&side_path, json).map_err(|e| Error::io(side_path.display().to_string(), e))?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        file.write_all(&buf).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side_path = sidecar_path(path);
        let json = std::fs::read_to_string(&side_path)
            .map_err(|e| Error::io(side_path.display().to_string(), e))?;
        let sidecar: Sidecar = serde_json::from_str(&json)?;
        if sidecar.dtype != "f64-le" || sidecar.order != "row-major" {
            return Err(Error::Parse(format!(
                "unsupported grid encoding: dtype={} order={}",
                sidecar.dtype, sidecar.order
            )));
        }
        let total: usize = sidecar.dims.iter().product();
        let mut file =
            std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf).map_err(|e| Error::io(path.display().to_string(), e))?;
        if buf.len() != total * 8 {
            return Err(Error::Parse(format!(
                "payload length {} does not match dims (expected {})",
                buf.len(),
                total * 8
            )));
        }
        let values: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(GridFunction {
            n: sidecar.n,
            dims: sidecar.dims,
            domain: sidecar.domain,
            values,
        })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    s.into()
}

fn next_pow2(x: usize) -> usize {
    x.next_power_of_two()
}

// ---------------------------------------------------------------------------
// mollification
// ---------------------------------------------------------------------------

/// Minimum number of grid cells the mollifier radius must span per axis.
pub const MIN_KERNEL_CELLS: usize = 4;

/// f * rho_ell with rho_ell(x) = 2^{n ell} rho(2^ell x), computed by FFT on a
/// grid zero-padded far enough that wraparound never reaches the box. The
/// sampled kernel is renormalized to exact unit discrete mass, so the total
/// integral is preserved to rounding.
pub fn mollify(f: &GridFunction, kit: &BumpKit, ell: u32) -> Result<GridFunction> {
    let radius = kit.rho_support * pow2(-(ell as i64));
    let kernel = |x: &[f64]| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        pow2(kit.n as i64 * ell as i64) * kit.rho(pow2(ell as i64) * r)
    };
    convolve_padded(f, radius, kernel, ell)
}

/// General padded FFT convolution against a radially sampled kernel of the
/// given support radius, with discrete unit-mass renormalization.
fn convolve_padded(
    f: &GridFunction,
    radius: f64,
    kernel: impl Fn(&[f64]) -> f64,
    ell: u32,
) -> Result<GridFunction> {
    let h = f.cell_sizes();
    let reach: Vec<usize> = h.iter().map(|&hh| (radius / hh).ceil() as usize).collect();
    if reach.iter().min().copied().unwrap_or(0) < MIN_KERNEL_CELLS {
        return Err(Error::Resolution {
            ell,
            dims: f.dims.clone(),
            min_cells: MIN_KERNEL_CELLS,
        });
    }
    let padded: Vec<usize> = f
        .dims
        .iter()
        .zip(&reach)
        .map(|(&d, &k)| next_pow2(d + 2 * k + 2))
        .collect();
    let total: usize = padded.iter().product();

    // f on the padded grid
    let mut fd = vec![Complex64::new(0.0, 0.0); total];
    fft::for_each_index(&f.dims, |flat, idx| {
        let mut p = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            p = p * padded[a] + i;
        }
        fd[p] = Complex64::new(f.values[flat], 0.0);
    });

    // kernel centered at index 0 with wraparound for negative offsets
    let mut kd = vec![Complex64::new(0.0, 0.0); total];
    let kdims: Vec<usize> = reach.iter().map(|&k| 2 * k + 1).collect();
    let mut mass = 0.0;
    let mut entries: Vec<(usize, f64)> = Vec::new();
    fft::for_each_index(&kdims, |_, idx| {
        let offs: Vec<i64> = idx.iter().zip(&reach).map(|(&i, &k)| i as i64 - k as i64).collect();
        let x: Vec<f64> = offs.iter().zip(&h).map(|(&o, &hh)| o as f64 * hh).collect();
        let v = kernel(&x);
        if v != 0.0 {
            let mut p = 0usize;
            for (a, &o) in offs.iter().enumerate() {
                let wrapped = o.rem_euclid(padded[a] as i64) as usize;
                p = p * padded[a] + wrapped;
            }
            entries.push((p, v));
            mass += v;
        }
    });
    let cellvol = f.cell_volume();
    let norm = 1.0 / (mass * cellvol);
    for (p, v) in entries {
        kd[p] = Complex64::new(v * norm, 0.0);
    }

    fft::fft_nd(&mut fd, &padded);
    fft::fft_nd(&mut kd, &padded);
    for (a, b) in fd.iter_mut().zip(&kd) {
        *a *= b;
    }
    fft::ifft_nd(&mut fd, &padded);

    let mut out = GridFunction::zeros(&f.dims, &f.domain);
    fft::for_each_index(&f.dims, |flat, idx| {
        let mut p = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            p = p * padded[a] + i;
        }
        out.values[flat] = fd[p].re * cellvol;
    });
    Ok(out)
}

/// Largest ell such that the mollifier kernel still spans MIN_KERNEL_CELLS
/// cells on every axis of `f`.
pub fn max_mollify_ell(f: &GridFunction, kit: &BumpKit) -> Option<u32> {
    (0..64u32).filter(|&ell| {
        let radius = kit.rho_support * pow2(-(ell as i64));
        f.cell_sizes().iter().all(|&h| (radius / h).ceil() as usize >= MIN_KERNEL_CELLS)
    }).max()
}

// ---------------------------------------------------------------------------
// band projections
// ---------------------------------------------------------------------------

/// Sharp-cutoff Littlewood–Paley pieces: `low` carries discrete frequencies
/// with |xi| < 2^{k0}, band k carries 2^k <= |xi| < 2^{k+1}.
#[derive(Debug, Clone)]
pub struct BandDecomposition {
    pub k0: i32,
    pub low: GridFunction,
    pub bands: Vec<(i32, GridFunction)>,
}

impl BandDecomposition {
    /// Sum of all parts.
    pub fn reconstruct(&self) -> GridFunction {
        let mut out = self.low.clone();
        for (_, b) in &self.bands {
            for (v, w) in out.values.iter_mut().zip(&b.values) {
                *v += w;
            }
        }
        out
    }
}

/// Physical frequency radius of each DFT bin.
fn freq_radius(dims: &[usize], lens: &[f64], idx: &[usize]) -> f64 {
    idx.iter()
        .enumerate()
        .map(|(a, &m)| {
            let f = fft::signed_freq(m, dims[a]) as f64 / lens[a];
            f * f
        })
        .sum::<f64>()
        .sqrt()
}

pub fn band_project(f: &GridFunction, k0: i32, kmax: i32) -> Result<BandDecomposition> {
    if kmax < k0 {
        return Err(Error::Precondition(format!("kmax={kmax} below k0={k0}")));
    }
    let lens = f.side_lengths();
    let mut spectrum: Vec<Complex64> =
        f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::fft_nd(&mut spectrum, &f.dims);

    // classify every bin once
    let total = spectrum.len();
    let mut class = vec![i32::MIN; total]; // i32::MIN = above kmax (dropped)
    let mut kmax_count = 0usize;
    fft::for_each_index(&f.dims, |flat, idx| {
        let r = freq_radius(&f.dims, &lens, idx);
        let k = if r < pow2(k0 as i64) {
            k0 - 1 // sentinel for low-pass
        } else {
            // unique k with 2^k <= r < 2^{k+1}
            r.log2().floor() as i32
        };
        if k >= k0 && k <= kmax {
            class[flat] = k;
            if k == kmax {
                kmax_count += 1;
            }
        } else if k < k0 {
            class[flat] = k0 - 1;
        }
    });
    if kmax_count == 0 {
        return Err(Error::Nyquist { k: kmax, nyquist: f.nyquist_radius() });
    }

    let extract = |target: i32| -> GridFunction {
        let mut masked = vec![Complex64::new(0.0, 0.0); total];
        for (i, &c) in class.iter().enumerate() {
            if c == target {
                masked[i] = spectrum[i];
            }
        }
        fft::ifft_nd(&mut masked, &f.dims);
        let mut g = GridFunction::zeros(&f.dims, &f.domain);
        for (v, c) in g.values.iter_mut().zip(&masked) {
            *v = c.re;
        }
        g
    };

    let low = extract(k0 - 1);
    let bands: Vec<(i32, GridFunction)> = (k0..=kmax).map(|k| (k, extract(k))).collect();
    Ok(BandDecomposition { k0, low, bands })
}

/// Smallest kmax whose band still contains a discrete frequency, i.e. the
/// choice that makes the decomposition lossless.
pub fn covering_kmax(f: &GridFunction) -> i32 {
    let lens = f.side_lengths();
    let mut top = f64::MIN;
    fft::for_each_index(&f.dims, |_, idx| {
        let r = freq_radius(&f.dims, &lens, idx);
        if r > top {
            top = r;
        }
    });
    top.log2().floor() as i32
}

/// Band projection along a single axis (1-based): keeps bins whose |xi_axis|
/// lies in [2^k, 2^{k+1}), all other axes untouched.
pub fn band_project_axis(f: &GridFunction, k: i32, axis: usize) -> Result<GridFunction> {
    if axis == 0 || axis > f.n {
        return Err(Error::Dimension { expected: f.n, got: axis });
    }
    let a = axis - 1;
    let lens = f.side_lengths();
    let mut spectrum: Vec<Complex64> =
        f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::fft_nd(&mut spectrum, &f.dims);
    fft::for_each_index(&f.dims, |flat, idx| {
        let r = (fft::signed_freq(idx[a], f.dims[a]) as f64 / lens[a]).abs();
        if !(r >= pow2(k as i64) && r < pow2(k as i64 + 1)) {
            spectrum[flat] = Complex64::new(0.0, 0.0);
        }
    });
    fft::ifft_nd(&mut spectrum, &f.dims);
    let mut g = GridFunction::zeros(&f.dims, &f.domain);
    for (v, c) in g.values.iter_mut().zip(&spectrum) {
        *v = c.re;
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// partial convolution (2-D corner machinery)
// ---------------------------------------------------------------------------

/// Convolution along one axis only (axis is 1-based): out(x) =
/// sum_u profile[u] f(x - (u - center) h_axis e_axis) h_axis, zero-padded.
pub fn partial_convolve(
    f: &GridFunction,
    profile: &[f64],
    center: usize,
    axis: usize,
) -> Result<GridFunction> {
    if f.n != 2 {
        return Err(Error::Dimension { expected: 2, got: f.n });
    }
    if axis != 1 && axis != 2 {
        return Err(Error::Dimension { expected: 2, got: axis });
    }
    let a = axis - 1;
    let h = f.cell_sizes()[a];
    let (n0, n1) = (f.dims[0], f.dims[1]);
    let mut out = GridFunction::zeros(&f.dims, &f.domain);
    for i in 0..n0 {
        for j in 0..n1 {
            let mut acc = 0.0;
            for (u, &w) in profile.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let off = u as i64 - center as i64;
                let (si, sj) = if a == 0 { (i as i64 - off, j as i64) } else { (i as i64, j as i64 - off) };
                if si < 0 || si >= n0 as i64 || sj < 0 || sj >= n1 as i64 {
                    continue;
                }
                acc += w * f.values[si as usize * n1 + sj as usize];
            }
            out.values[i * n1 + j] = acc * h;
        }
    }
    Ok(out)
}

/// Sample a 1-D kernel t -> g(t) at the spacing of the given (1-based) axis,
/// over support radius `radius`; returns (profile, center index). The samples
/// are renormalized to exact unit discrete mass when `normalize` is set.
pub fn sample_kernel_1d(
    f: &GridFunction,
    g: impl Fn(f64) -> f64,
    radius: f64,
    axis: usize,
    normalize: bool,
) -> (Vec<f64>, usize) {
    let h = f.cell_sizes()[axis - 1];
    let k = (radius / h).ceil() as usize;
    let mut profile: Vec<f64> = (-(k as i64)..=k as i64).map(|o| g(o as f64 * h)).collect();
    if normalize {
        let mass: f64 = profile.iter().sum::<f64>() * h;
        if mass != 0.0 {
            for v in profile.iter_mut() {
                *v /= mass;
            }
        }
    }
    (profile, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(n: usize) -> Vec<[f64; 2]> {
        vec![[0.0, 1.0]; n]
    }

    fn random_grid(dims: &[usize], seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = GridFunction::zeros(dims, &unit_box(dims.len()));
        for v in g.values.iter_mut() {
            *v = rng.gen::<f64>();
        }
        g
    }

    #[test]
    fn integral_of_half_box_indicator() {
        let g = GridFunction::from_fn(&[64, 64], &unit_box(2), |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
        assert!((g.integral() - 0.5).abs() <= 1.0 / 64.0);
    }

    #[test]
    fn l2_of_constant() {
        let g = GridFunction::from_fn(&[32, 32], &[[0.0, 2.0], [0.0, 1.0]], |_| 3.0);
        assert!((g.l2_norm().powi(2) - 9.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn cauchy_schwarz_on_random_pairs() {
        for seed in 0..5 {
            let f = random_grid(&[64], seed);
            let g = random_grid(&[64], seed + 100);
            assert!(f.inner(&g).abs() <= f.l2_norm() * g.l2_norm() + 1e-12);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.grid");
        let g = random_grid(&[16, 8], 7);
        g.save(&path).unwrap();
        let back = GridFunction::load(&path).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn mollify_constant_is_constant_in_interior() {
        let kit = BumpKit::new(1);
        let f = GridFunction::from_fn(&[512], &unit_box(1), |_| 1.0);
        let ell = 5; // radius 2 * 2^-5 = 1/16, 32 cells
        let out = mollify(&f, &kit, ell).unwrap();
        let radius = kit.rho_support * pow2(-(ell as i64));
        let h = 1.0 / 512.0;
        for i in 0..512 {
            let x = (i as f64 + 0.5) * h;
            if x > radius && x < 1.0 - radius {
                assert!((out.values[i] - 1.0).abs() < 1e-6, "x={x} v={}", out.values[i]);
            }
        }
    }

    #[test]
    fn mollify_preserves_integral() {
        // Embed so the kernel reach stays inside the margin; the convolution
        // then loses no mass to cropping and Fubini gives exact equality.
        let kit = BumpKit::new(2);
        let f = random_grid(&[64, 64], 3);
        let ell = 3;
        let reach = (kit.rho_support * pow2(-(ell as i64)) * 64.0).ceil() as usize;
        let fe = f.embed(reach + 1);
        let out = mollify(&fe, &kit, ell).unwrap();
        let (a, b) = (fe.integral(), out.integral());
        assert!((a - b).abs() <= 1e-8 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn mollify_approximate_identity_monotone() {
        let kit = BumpKit::new(1);
        let f = GridFunction::from_fn(&[1024], &unit_box(1), |x| {
            (std::f64::consts::TAU * x[0]).sin().powi(2)
        });
        let mut prev = f64::INFINITY;
        for ell in [2u32, 4, 6] {
            let d = mollify(&f, &kit, ell).unwrap().subtract(&f).l2_norm();
            assert!(d <= prev + 1e-6, "ell={ell}: {d} > {prev}");
            prev = d;
        }
    }

    #[test]
    fn mollify_rejects_unresolvable_scale() {
        let kit = BumpKit::new(1);
        let f = random_grid(&[64], 1);
        assert!(matches!(mollify(&f, &kit, 8), Err(Error::Resolution { .. })));
    }

    #[test]
    fn mollify_contracts_l2() {
        let kit = BumpKit::new(2);
        for seed in 0..3 {
            let f = random_grid(&[64, 64], seed);
            let out = mollify(&f, &kit, 2).unwrap();
            assert!(out.l2_norm() <= f.l2_norm() * (1.0 + 1e-8));
        }
    }

    #[test]
    fn mollify_matches_direct_convolution_without_wraparound() {
        let kit = BumpKit::new(1);
        let f = random_grid(&[256], 11);
        let ell = 4;
        let out = mollify(&f, &kit, ell).unwrap();
        // direct non-periodic discrete convolution with the same sampled,
        // renormalized kernel
        let h = 1.0 / 256.0;
        let radius = kit.rho_support * pow2(-(ell as i64));
        let reach = (radius / h).ceil() as i64;
        let kernel: Vec<f64> = (-reach..=reach)
            .map(|o| pow2(ell as i64) * kit.rho(pow2(ell as i64) * (o as f64 * h).abs()))
            .collect();
        let mass: f64 = kernel.iter().sum::<f64>() * h;
        let mut worst = 0.0f64;
        for j in 0..256i64 {
            let mut acc = 0.0;
            for (u, &kv) in kernel.iter().enumerate() {
                let i = j - (u as i64 - reach);
                if (0..256).contains(&i) {
                    acc += f.values[i as usize] * kv / mass * h;
                }
            }
            worst = worst.max((acc - out.values[j as usize]).abs());
        }
        assert!(worst < 1e-9, "max deviation {worst}");
    }

    #[test]
    fn band_reconstruction_and_parseval() {
        let f = random_grid(&[64, 64], 5);
        let kmax = covering_kmax(&f);
        let bd = band_project(&f, 0, kmax).unwrap();
        let rec = bd.reconstruct();
        let err = rec.subtract(&f).linf_norm();
        assert!(err < 1e-10, "reconstruction error {err}");
        let sum_sq: f64 = bd.low.l2_norm().powi(2)
            + bd.bands.iter().map(|(_, b)| b.l2_norm().powi(2)).sum::<f64>();
        let target = f.l2_norm().powi(2);
        assert!((sum_sq - target).abs() <= 1e-10 * target, "{sum_sq} vs {target}");
    }

    #[test]
    fn pure_wave_lands_in_expected_band() {
        // frequency radius 12 = 1.5 * 2^3 -> band k = 3
        let f = GridFunction::from_fn(&[128], &unit_box(1), |x| {
            (std::f64::consts::TAU * 12.0 * x[0]).cos()
        });
        let bd = band_project(&f, 0, 5).unwrap();
        for (k, b) in &bd.bands {
            let frac = b.l2_norm() / f.l2_norm();
            if *k == 3 {
                assert!(frac > 0.999, "band 3 fraction {frac}");
            } else {
                assert!(frac < 1e-6, "band {k} fraction {frac}");
            }
        }
        assert!(bd.low.l2_norm() / f.l2_norm() < 1e-6);
    }

    #[test]
    fn band_project_rejects_empty_top_band() {
        let f = random_grid(&[32], 2);
        // Nyquist radius is 16; band 6 starts at 64 — empty.
        assert!(matches!(band_project(&f, 0, 6), Err(Error::Nyquist { .. })));
    }

    #[test]
    fn partial_convolve_identity_kernel() {
        let f = random_grid(&[32, 32], 9);
        let h = f.cell_sizes()[0];
        let out = partial_convolve(&f, &[1.0 / h], 0, 1).unwrap();
        let err = out.subtract(&f).linf_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn partial_convolve_constant_along_axis() {
        // f depends only on y; axis-1 (x) convolution with a unit-mass kernel
        // away from the boundary leaves it unchanged.
        let f = GridFunction::from_fn(&[64, 64], &unit_box(2), |x| (x[1] * 5.0).sin());
        let h = f.cell_sizes()[0];
        let profile = vec![1.0 / (5.0 * h); 5];
        let out = partial_convolve(&f, &profile, 2, 1).unwrap();
        for i in 2..62 {
            for j in 0..64 {
                let (a, b) = (out.values[i * 64 + j], f.values[i * 64 + j]);
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn partial_convolve_matches_tensor_product_2d() {
        let f = random_grid(&[32, 32], 21);
        let profile = [0.2, 1.0, 0.4];
        let out = partial_convolve(&f, &profile, 1, 2).unwrap();
        // direct: out(i,j) = sum_u profile[u] f(i, j-(u-1)) h
        let h = f.cell_sizes()[1];
        for i in 0..32usize {
            for j in 0..32i64 {
                let mut acc = 0.0;
                for (u, &w) in profile.iter().enumerate() {
                    let sj = j - (u as i64 - 1);
                    if (0..32).contains(&sj) {
                        acc += w * f.values[i * 32 + sj as usize];
                    }
                }
                acc *= h;
                let got = out.values[i * 32 + j as usize];
                assert!((acc - got).abs() < 1e-10, "{acc} vs {got}");
            }
        }
    }

    #[test]
    fn partial_convolve_rejects_non_2d() {
        let f = random_grid(&[32], 1);
        assert!(matches!(partial_convolve(&f, &[1.0], 0, 1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn interp_reproduces_multilinear_values() {
        let f = GridFunction::from_fn(&[64, 64], &unit_box(2), |x| 2.0 * x[0] + 3.0 * x[1]);
        // multilinear interpolation is exact on affine functions (interior)
        for &(x, y) in &[(0.3, 0.4), (0.51, 0.77), (0.123, 0.891)] {
            let v = f.interp(&[x, y]);
            assert!((v - (2.0 * x + 3.0 * y)).abs() < 1e-12, "{v}");
        }
        // zero extension outside
        assert_eq!(f.interp(&[-0.5, 0.5]), 0.0);
        assert_eq!(f.interp(&[0.5, 1.5]), 0.0);
    }
}
