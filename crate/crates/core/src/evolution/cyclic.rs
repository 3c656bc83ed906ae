//! Direct solver for cyclic pentadiagonal systems.
//!
//! The cyclic matrix is split into its open pentadiagonal part plus a
//! rank-4 wrap-around correction living in rows and columns
//! `{0, 1, L-2, L-1}`. The open part is factored by banded elimination and
//! the correction is folded back with the Woodbury identity, so a solve costs
//! O(L). A dense partially pivoted fallback covers the rare case where the
//! open part has a vanishing pivot.

use super::SystemBands;
use crate::error::EvolutionError;

/// Largest system handed to the dense fallback.
pub const DENSE_FALLBACK_MAX: usize = 256;

const PIVOT_EPS: f64 = 1e-300;

/// Row-major entry `(i, j)` of `bands + shift * I`, wrapping indices.
pub(crate) fn cyclic_entry(bands: &SystemBands, shift: f64, i: usize, j: usize) -> f64 {
    let l = bands.len();
    let off = (j + l - i) % l;
    match off {
        0 => bands.c[i] + shift,
        1 => bands.b[i],
        2 => bands.a[i],
        o if o == l - 1 => bands.d[i],
        o if o == l - 2 => bands.e[i],
        _ => 0.0,
    }
}

/// Banded LU of the open pentadiagonal part (no wrap-around), stored as
/// five diagonals per row at offsets -2..=2.
struct OpenBandLu {
    rows: Vec<[f64; 5]>,
}

impl OpenBandLu {
    fn factor(bands: &SystemBands, shift: f64) -> Option<Self> {
        let l = bands.len();
        let mut rows: Vec<[f64; 5]> = (0..l)
            .map(|i| {
                let mut r = [0.0; 5];
                for (k, slot) in r.iter_mut().enumerate() {
                    let j = i as isize + k as isize - 2;
                    if (0..l as isize).contains(&j) {
                        *slot = match k {
                            0 => bands.e[i],
                            1 => bands.d[i],
                            2 => bands.c[i] + shift,
                            3 => bands.b[i],
                            _ => bands.a[i],
                        };
                    }
                }
                r
            })
            .collect();
        // rows[i][k] holds entry (i, i + k - 2); store multipliers in the lower slots.
        for p in 0..l {
            let piv = rows[p][2];
            if !piv.is_finite() || piv.abs() < PIVOT_EPS {
                return None;
            }
            for i in (p + 1)..(p + 3).min(l) {
                let k_ip = p + 2 - i; // slot of column p in row i
                let m = rows[i][k_ip] / piv;
                rows[i][k_ip] = m;
                for col in (p + 1)..(p + 3).min(l) {
                    let k_pc = col + 2 - p;
                    let k_ic = col + 2 - i;
                    rows[i][k_ic] -= m * rows[p][k_pc];
                }
            }
        }
        Some(Self { rows })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let l = self.rows.len();
        for i in 0..l {
            for p in i.saturating_sub(2)..i {
                x[i] -= self.rows[i][p + 2 - i] * x[p];
            }
        }
        for i in (0..l).rev() {
            for col in (i + 1)..(i + 3).min(l) {
                x[i] -= self.rows[i][col + 2 - i] * x[col];
            }
            x[i] /= self.rows[i][2];
        }
    }
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Result<Vec<f64>, EvolutionError> {
    let n = rhs.len();
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap_or(col);
        if m[piv][col].abs() <= scale * 1e-14 {
            return Err(EvolutionError::SingularSystem);
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let pivot = m[col].clone();
        for r in (col + 1)..n {
            let f = m[r][col] / pivot[col];
            if f == 0.0 {
                continue;
            }
            for (x, p) in m[r][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Ok(x)
}

/// Solves `(A + shift * I) x = rhs` for the cyclic pentadiagonal `A` in `bands`.
pub fn solve_cyclic_pentadiagonal(
    bands: &SystemBands,
    shift: f64,
    rhs: &[f64],
) -> Result<Vec<f64>, EvolutionError> {
    let l = bands.len();
    assert_eq!(rhs.len(), l);
    match woodbury_solve(bands, shift, rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ if l <= DENSE_FALLBACK_MAX => {
            let m = (0..l)
                .map(|i| (0..l).map(|j| cyclic_entry(bands, shift, i, j)).collect())
                .collect();
            dense_solve(m, rhs.to_vec())
        }
        _ => Err(EvolutionError::SingularSystem),
    }
}

fn woodbury_solve(bands: &SystemBands, shift: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let l = bands.len();
    let lu = OpenBandLu::factor(bands, shift)?;
    let border = [0, 1, l - 2, l - 1];
    // Correction C = U V^T with U = e_{border[k]} and V^T row k = wrap entries of row border[k].
    let wrap_row = |i: usize| -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for j in 0..l {
            let open = (i as isize - j as isize).abs() <= 2;
            if !open {
                let v = cyclic_entry(bands, shift, i, j);
                if v != 0.0 {
                    out.push((j, v));
                }
            }
        }
        out
    };
    let vt: Vec<Vec<(usize, f64)>> = border.iter().map(|&i| wrap_row(i)).collect();

    let mut z = rhs.to_vec();
    lu.solve_in_place(&mut z);
    let zs: Vec<Vec<f64>> = border
        .iter()
        .map(|&i| {
            let mut col = vec![0.0; l];
            col[i] = 1.0;
            lu.solve_in_place(&mut col);
            col
        })
        .collect();
    let dot = |row: &[(usize, f64)], v: &[f64]| row.iter().map(|&(j, a)| a * v[j]).sum::<f64>();
    let small: Vec<Vec<f64>> = (0..4)
        .map(|r| {
            (0..4)
                .map(|c| f64::from(u8::from(r == c)) + dot(&vt[r], &zs[c]))
                .collect()
        })
        .collect();
    let small_rhs: Vec<f64> = (0..4).map(|r| dot(&vt[r], &z)).collect();
    let y = dense_solve(small, small_rhs).ok()?;
    for (k, col) in zs.iter().enumerate() {
        for (zi, ci) in z.iter_mut().zip(col) {
            *zi -= y[k] * ci;
        }
    }
    Some(z)
}
