//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::error::{Error, Result};

/// Eigenpairs sorted by ascending eigenvalue. `vectors[k]` is the unit
/// eigenvector for `values[k]`, sign-normalized so that its largest-magnitude
/// entry (lowest index on ties) is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi on a row-major `n × n` symmetric matrix. Sweeps until the
/// off-diagonal Frobenius norm drops to `tol`; fails after `max_sweeps`.
pub fn jacobi_eigen(matrix: &[f64], n: usize, tol: f64, max_sweeps: usize) -> Result<SymmetricEigen> {
    if matrix.len() != n * n {
        return Err(Error::Argument(format!(
            "matrix has {} entries, expected {}",
            matrix.len(),
            n * n
        )));
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                s += 2.0 * a[p * n + q] * a[p * n + q];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    let mut off = off_norm(&a);
    while off > tol {
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        off = off_norm(&a);
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| a[x * n + x].total_cmp(&a[y * n + y]).then(x.cmp(&y)));
    let values = idx.iter().map(|&k| a[k * n + k]).collect();
    let vectors = idx
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..n).map(|r| v[r * n + k]).collect();
            normalize_sign(&mut col);
            col
        })
        .collect();
    Ok(SymmetricEigen { values, vectors })
}

/// Index of the largest-magnitude entry, lowest index on ties.
pub fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

pub(crate) fn normalize_sign(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    if v[argmax_abs(v)] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
