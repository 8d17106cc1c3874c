//! Centered discrete Fourier transforms on odd-sized lattices.
//!
//! Forward: Û[p′,q′] = Σ_p Σ_q U[p,q] e^{−2πi pp′/(2P+1)} e^{−2πi qq′/(2Q+1)},
//! inverse carries the 1/((2P+1)(2Q+1)) factor. Indices run over [−P, P]
//! and are stored with the origin in the middle of each axis.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::field::{Domain, Se2Field};

/// Planned 2D centered transforms for an `nx × ny` slice (y contiguous).
#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            nx,
            ny,
            fx: planner.plan_fft_forward(nx),
            fy: planner.plan_fft_forward(ny),
            ix: planner.plan_fft_inverse(nx),
            iy: planner.plan_fft_inverse(ny),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Centered forward transform in place (no normalisation).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    /// Centered inverse transform in place, including 1/(nx·ny).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, true);
        let s = 1.0 / (self.nx * self.ny) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.nx * self.ny);
        let (nx, ny) = (self.nx, self.ny);
        let (px, py) = (nx / 2, ny / 2);
        let (fx, fy) = if inverse { (&self.ix, &self.iy) } else { (&self.fx, &self.fy) };
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); fx.get_inplace_scratch_len().max(fy.get_inplace_scratch_len())];
        for row in data.chunks_exact_mut(ny) {
            row.rotate_left(py);
            fy.process_with_scratch(row, &mut scratch);
            row.rotate_right(py);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); nx];
        for j in 0..ny {
            for i in 0..nx {
                col[i] = data[i * ny + j];
            }
            col.rotate_left(px);
            fx.process_with_scratch(&mut col, &mut scratch);
            col.rotate_right(px);
            for i in 0..nx {
                data[i * ny + j] = col[i];
            }
        }
    }
}

/// DC term of a slice: Σ_p Σ_q U[p,q].
pub fn slice_dc(slice: &[Complex64]) -> Complex64 {
    slice.iter().sum()
}

fn transform_field(u: &Se2Field, inverse: bool) -> Se2Field {
    let g = u.grid;
    let plan = Fft2::new(g.nx(), g.ny());
    let mut out = u.clone();
    out.data.par_chunks_mut(g.slice_len()).for_each(
        |slice| {
            if inverse {
                plan.inverse(slice)
            } else {
                plan.forward(slice)
            }
        },
    );
    out.domain = if inverse { Domain::Spatial } else { Domain::Frequency };
    out
}

/// Per-orientation centered DFT of a spatial field.
pub fn cdft(u: &Se2Field) -> Result<Se2Field> {
    u.require(Domain::Spatial)?;
    Ok(transform_field(u, false))
}

/// Inverse of [`cdft`].
pub fn cdft_inverse(u: &Se2Field) -> Result<Se2Field> {
    u.require(Domain::Frequency)?;
    Ok(transform_field(u, true))
}
