//! Unnormalized 3-D FFT on a cubic row-major array built from 1-D rustfft plans.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    /// Sum with e^{-2πi jm/n}.
    Forward,
    /// Sum with e^{+2πi jm/n}, no 1/n factor.
    Backward,
}

impl Fft3 {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            backward: planner.plan_fft_inverse(n),
        }
    }

    fn plan(&self, dir: Direction) -> &Arc<dyn Fft<f64>> {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    /// Transforms every contiguous row of length n in `data`.
    fn rows(&self, data: &mut [Complex64], dir: Direction) {
        let n = self.n;
        let plan = self.plan(dir);
        // Several rows per task keeps scheduling overhead small.
        let rows_per_task = (4096 / n).max(1);
        data.par_chunks_mut(n * rows_per_task).for_each_init(
            || vec![Complex64::default(); plan.get_inplace_scratch_len()],
            |scratch, chunk| plan.process_with_scratch(chunk, scratch),
        );
    }

    pub(crate) fn process(&self, data: &mut [Complex64], dir: Direction) {
        let n = self.n;
        let n2 = n * n;
        debug_assert_eq!(data.len(), n2 * n);
        let mut scratch = vec![Complex64::default(); data.len()];

        // Last axis: rows are already contiguous.
        self.rows(data, dir);

        // Middle axis: transpose each slab so that columns become rows.
        data.par_chunks_mut(n2)
            .zip(scratch.par_chunks_mut(n2))
            .for_each(|(slab, tmp)| {
                transpose::transpose(slab, tmp, n, n);
            });
        self.rows(&mut scratch, dir);
        data.par_chunks_mut(n2)
            .zip(scratch.par_chunks(n2))
            .for_each(|(slab, tmp)| {
                transpose::transpose(tmp, slab, n, n);
            });

        // First axis: view the cube as an n × n² matrix.
        transpose::transpose(data, &mut scratch, n2, n);
        self.rows(&mut scratch, dir);
        transpose::transpose(&scratch, data, n, n2);
    }
}
