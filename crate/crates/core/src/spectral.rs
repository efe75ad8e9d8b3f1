//! Spectral evaluation of differential operators on periodic fields.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::operator::DifferentialOperator;
use crate::scheme::Grid;

/// Angular wavenumbers `2π·fftfreq(n)/L` for one axis.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let m = if i <= (n - 1) / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * PI * m / length
        })
        .collect()
}

fn transform_axis(data: &mut [Complex64], sizes: &[usize], axis: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let n = sizes[axis];
    let stride: usize = sizes[..axis].iter().product();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let block = stride * n;
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for start in (0..data.len()).step_by(block) {
        for offset in 0..stride {
            let base = start + offset;
            for (i, l) in line.iter_mut().enumerate() {
                *l = data[base + i * stride];
            }
            fft.process(&mut line);
            for (i, l) in line.iter().enumerate() {
                data[base + i * stride] = *l;
            }
        }
    }
}

/// Fourier coefficients of a real field stored with axis 0 fastest.
pub fn forward(field: &[f64], grid: &Grid) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    for axis in 0..grid.dim() {
        transform_axis(&mut data, grid.sizes(), axis, &mut planner, false);
    }
    data
}

/// Applies `op` to a periodic field through its Fourier symbol.
pub fn apply_operator(op: &DifferentialOperator, field: &[f64], grid: &Grid) -> Vec<f64> {
    assert_eq!(field.len(), grid.cells());
    let mut data = forward(field, grid);
    let ks: Vec<Vec<f64>> = grid
        .sizes()
        .iter()
        .zip(grid.lengths())
        .map(|(&n, &l)| wavenumbers(n, l))
        .collect();
    let mut k = vec![0.0; grid.dim()];
    for (cell, z) in data.iter_mut().enumerate() {
        for (axis, c) in grid.index_to_coords(cell).into_iter().enumerate() {
            k[axis] = ks[axis][c];
        }
        *z *= op.symbol(&k);
    }
    let mut planner = FftPlanner::new();
    for axis in 0..grid.dim() {
        transform_axis(&mut data, grid.sizes(), axis, &mut planner, true);
    }
    let norm = grid.cells() as f64;
    data.iter().map(|z| z.re / norm).collect()
}
