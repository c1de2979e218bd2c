use std::f64::consts::PI;
use std::sync::OnceLock;

use super::{BLOCK_SIZE, RESAMPLE_SIZE};

const N: usize = RESAMPLE_SIZE;
const K: usize = BLOCK_SIZE;

/// `cos(pi * (2x + 1) * u / 2N)` for the first `K` frequencies.
fn basis() -> &'static [[f64; N]; K] {
    static BASIS: OnceLock<[[f64; N]; K]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut table = [[0.0; N]; K];
        for (u, row) in table.iter_mut().enumerate() {
            for (x, c) in row.iter_mut().enumerate() {
                *c = (PI * (2 * x + 1) as f64 * u as f64 / (2 * N) as f64).cos();
            }
        }
        table
    })
}

/// Unnormalized 2D DCT-II of an `N`×`N` grid, restricted to the top-left
/// `K`×`K` block (row-major, index = `u * K + v` with `u` the vertical
/// frequency).
///
/// Coefficients whose magnitude is below rounding noise relative to the input
/// energy are snapped to zero so flat regions binarize deterministically.
pub fn low_frequency_block(grid: &[f64]) -> [f64; K * K] {
    assert_eq!(grid.len(), N * N);
    let basis = basis();

    // horizontal pass: rows × horizontal frequency
    let mut tmp = [[0.0f64; K]; N];
    for (y, out) in tmp.iter_mut().enumerate() {
        let row = &grid[y * N..(y + 1) * N];
        for (v, slot) in out.iter_mut().enumerate() {
            *slot = row.iter().zip(&basis[v]).map(|(p, c)| p * c).sum();
        }
    }

    let mut block = [0.0f64; K * K];
    for u in 0..K {
        for v in 0..K {
            block[u * K + v] = (0..N).map(|y| basis[u][y] * tmp[y][v]).sum();
        }
    }

    let energy: f64 = grid.iter().map(|p| p.abs()).sum();
    let eps = 1e-9 * (energy + 1.0);
    for c in block.iter_mut() {
        if c.abs() < eps {
            *c = 0.0;
        }
    }
    block
}
