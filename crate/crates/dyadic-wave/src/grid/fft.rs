//! Multi-dimensional FFT on row-major cubes, built from rustfft line transforms.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, inverse: bool) -> Plan {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Unnormalized in-place transform over every axis of an `n^dim` cube.
/// Forward uses `e^{-i}`, inverse `e^{+i}`; neither divides by the size.
pub fn transform_in_place(data: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    if n == 1 {
        return;
    }
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // last axis: contiguous lines
    fft.process_with_scratch(data, &mut scratch);
    if dim == 1 {
        return;
    }
    let total = data.len();
    let mut block = Vec::new();
    for axis in (0..dim - 1).rev() {
        let stride = n.pow((dim - 1 - axis) as u32);
        let span = stride * n;
        block.resize(span, Complex64::new(0.0, 0.0));
        for start in (0..total).step_by(span) {
            let chunk = &mut data[start..start + span];
            // gather lines: block[j*n + k] = chunk[k*stride + j]
            for k in 0..n {
                let row = &chunk[k * stride..(k + 1) * stride];
                for (j, v) in row.iter().enumerate() {
                    block[j * n + k] = *v;
                }
            }
            fft.process_with_scratch(&mut block, &mut scratch);
            for k in 0..n {
                let row = &mut chunk[k * stride..(k + 1) * stride];
                for (j, v) in row.iter_mut().enumerate() {
                    *v = block[j * n + k];
                }
            }
        }
    }
}

/// Forward coefficients `c_k = N^{-1} sum_j u_j e^{-2 pi i k j / n}`.
pub fn forward(samples: &[Complex64], n: usize, dim: usize) -> Vec<Complex64> {
    let mut out = samples.to_vec();
    transform_in_place(&mut out, n, dim, false);
    let scale = 1.0 / out.len() as f64;
    out.iter_mut().for_each(|c| *c *= scale);
    out
}

/// Synthesis `u_j = sum_k c_k e^{2 pi i k j / n}`.
pub fn inverse(spectrum: &[Complex64], n: usize, dim: usize) -> Vec<Complex64> {
    let mut out = spectrum.to_vec();
    transform_in_place(&mut out, n, dim, true);
    out
}
