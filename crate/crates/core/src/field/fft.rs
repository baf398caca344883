//! Unnormalized n-dimensional FFT over the flattened value layout
//! (axis 0 fastest). Built on rustfft; normalization is applied by the
//! callers in `mod.rs`.

use crate::Real;
use num_complex::Complex;
use rustfft::FftPlanner;

pub(super) fn fft_all_axes<T: Real>(
    data: &mut [Complex<T>],
    m: usize,
    dim: usize,
    forward: bool,
) {
    let mut planner = FftPlanner::<T>::new();
    let fft = if forward {
        planner.plan_fft_forward(m)
    } else {
        planner.plan_fft_inverse(m)
    };
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];

    // axis 0: contiguous lanes
    for lane in data.chunks_exact_mut(m) {
        fft.process_with_scratch(lane, &mut scratch);
    }

    // higher axes: gather strided lanes into a buffer
    let total = data.len();
    let mut lane = vec![Complex::new(T::zero(), T::zero()); m];
    for axis in 1..dim {
        let stride = m.pow(axis as u32);
        let block = stride * m;
        let blocks = total / block;
        for b in 0..blocks {
            for lo in 0..stride {
                let base = b * block + lo;
                for (t, item) in lane.iter_mut().enumerate() {
                    *item = data[base + t * stride];
                }
                fft.process_with_scratch(&mut lane, &mut scratch);
                for (t, item) in lane.iter().enumerate() {
                    data[base + t * stride] = *item;
                }
            }
        }
    }
}
