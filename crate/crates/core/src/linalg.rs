//! Small dense helpers on top of nalgebra (faer for SVDs): vectorization, nullspaces,
//! a matrix logarithm near the identity and seeded random matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Row-major flattening of a square matrix.
pub fn vectorize(m: &DMatrix<f64>) -> DVector<f64> {
    let (r, c) = m.shape();
    DVector::from_iterator(r * c, (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])))
}

/// Inverse of [`vectorize`] for an `n x n` matrix.
pub fn unvectorize(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), n * n);
    DMatrix::from_row_slice(n, n, v.as_slice())
}

pub fn commutator(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    x * y - y * x
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Orthonormal basis (as columns) of the nullspace of `a`.
///
/// A singular value counts as zero when it is at most `rel_tol` times the
/// largest one; an all-zero matrix has the whole domain as nullspace.
pub fn nullspace(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    if rows == 0 {
        return DMatrix::identity(cols, cols);
    }
    let svd = to_faer(a).svd().expect("svd converges");
    let s = svd.S().column_vector();
    let v = svd.V();
    let smax = if s.nrows() > 0 { s[0] } else { 0.0 };
    let null_idx: Vec<usize> = (0..cols)
        .filter(|&k| k >= s.nrows() || smax == 0.0 || s[k] <= rel_tol * smax)
        .collect();
    DMatrix::from_fn(cols, null_idx.len(), |i, c| v[(i, null_idx[c])])
}

/// Minimum-norm least-squares solution of `a x = b`, discarding singular
/// values below `rel_tol` times the largest.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return DVector::zeros(cols);
    }
    let svd = to_faer(a).thin_svd().expect("svd converges");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let smax = (0..s.nrows()).map(|k| s[k]).fold(0.0, f64::max);
    let mut x = DVector::zeros(cols);
    for k in 0..s.nrows() {
        if s[k] <= rel_tol * smax || s[k] == 0.0 {
            continue;
        }
        let coeff: f64 = (0..rows).map(|i| u[(i, k)] * b[i]).sum::<f64>() / s[k];
        for j in 0..cols {
            x[j] += coeff * v[(j, k)];
        }
    }
    x
}

/// Numeric rank with a relative singular-value threshold.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        Some(&smax) if smax > 0.0 => sv.iter().filter(|&&s| s > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Singular values in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut sv = to_faer(a).singular_values().expect("svd converges");
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Eigenvalues as `(re, im)` pairs, sorted by real then imaginary part.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut ev: Vec<(f64, f64)> = to_faer(a)
        .eigenvalues()
        .expect("eigenvalues converge")
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    ev.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    ev
}

/// Largest distance between two spectra under a greedy nearest matching.
pub fn spectral_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for &(re, im) in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, &(r2, i2))| (k, (re - r2).hypot(im - i2)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("same length");
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

/// `tr(A^k)` for `k = 1..=n`; these determine the spectrum.
pub fn power_sums(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut p = a.clone();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            p = &p * a;
        }
        out.push(p.trace());
    }
    out
}

/// Principal matrix logarithm for matrices with spectrum away from the
/// closed negative real axis, by inverse scaling and squaring.
///
/// Square roots use the Denman–Beavers iteration; once the argument is within
/// 0.25 of the identity the series `2·atanh((A-I)(A+I)^-1)` is summed.
pub fn logm(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut x = a.clone();
    let mut squarings = 0u32;
    while (&x - &id).norm() > 0.25 {
        x = sqrtm_denman_beavers(&x)?;
        squarings += 1;
        if squarings > 60 {
            return None;
        }
    }
    let z = (&x - &id) * (&x + &id).try_inverse()?;
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut sum = z.clone();
    let mut k = 1.0;
    loop {
        term = &term * &z2;
        k += 2.0;
        let contrib = &term / k;
        sum += &contrib;
        if contrib.norm() <= 1e-18 * sum.norm().max(1e-300) || k > 400.0 {
            break;
        }
    }
    Some(sum * 2.0 * 2f64.powi(squarings as i32))
}

fn sqrtm_denman_beavers(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse()?;
        let z_inv = z.clone().try_inverse()?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            return Some(y);
        }
    }
    if y.iter().all(|v| v.is_finite()) {
        Some(y)
    } else {
        None
    }
}

/// Matrix with entries uniform in `[-scale, scale]`.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale)
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
}

/// Nested row-major arrays, the JSON shape for matrices.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Parse nested rows; `None` if ragged or empty.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first()?.len();
    if c == 0 || rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}
