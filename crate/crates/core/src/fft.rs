//! Thin n-dimensional wrappers over rustfft: row-major separable transforms
//! and the signed-frequency bookkeeping used by the band projections.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place forward DFT of row-major `data` with shape `dims`, one axis at a
/// time. No normalization.
pub fn fft_nd(data: &mut [Complex64], dims: &[usize]) {
    transform(data, dims, rustfft::FftDirection::Forward);
}

/// In-place inverse DFT, normalized by 1/prod(dims).
pub fn ifft_nd(data: &mut [Complex64], dims: &[usize]) {
    transform(data, dims, rustfft::FftDirection::Inverse);
    let scale = 1.0 / dims.iter().product::<usize>() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

fn transform(data: &mut [Complex64], dims: &[usize], dir: rustfft::FftDirection) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    let mut planner = FftPlanner::new();
    for axis in 0..dims.len() {
        let len = dims[axis];
        if len == 1 {
            continue;
        }
        let fft = planner.plan_fft(len, dir);
        let stride: usize = dims[axis + 1..].iter().product();
        let lines = total / len;
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for line in 0..lines {
            // decompose the line index into (outer block, inner offset)
            let outer = line / stride;
            let inner = line % stride;
            let base = outer * len * stride + inner;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = data[base + j * stride];
            }
            fft.process(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                data[base + j * stride] = *b;
            }
        }
    }
}

/// Signed frequency index of DFT bin m out of len: values in [-len/2, len/2).
pub fn signed_freq(m: usize, len: usize) -> i64 {
    if m <= (len - 1) / 2 {
        m as i64
    } else {
        m as i64 - len as i64
    }
}

/// Iterate row-major multi-indices of `dims`, calling `f(flat, idx)`.
pub fn for_each_index(dims: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = dims.iter().product();
    let mut idx = vec![0usize; dims.len()];
    for flat in 0..total {
        f(flat, &idx);
        for ax in (0..dims.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_2d() {
        let dims = [8usize, 4];
        let mut data: Vec<Complex64> = (0..32)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let orig = data.clone();
        fft_nd(&mut data, &dims);
        ifft_nd(&mut data, &dims);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn pure_wave_lands_in_single_bin() {
        let len = 16usize;
        let mut data: Vec<Complex64> = (0..len)
            .map(|j| Complex64::from_polar(1.0, std::f64::consts::TAU * 3.0 * j as f64 / len as f64))
            .collect();
        fft_nd(&mut data, &[len]);
        for (m, v) in data.iter().enumerate() {
            let expect = if m == 3 { len as f64 } else { 0.0 };
            assert!((v.norm() - expect).abs() < 1e-10, "bin {m}: {v}");
        }
    }

    #[test]
    fn signed_freq_ranges() {
        assert_eq!(signed_freq(0, 8), 0);
        assert_eq!(signed_freq(3, 8), 3);
        assert_eq!(signed_freq(4, 8), -4);
        assert_eq!(signed_freq(7, 8), -1);
    }
}
