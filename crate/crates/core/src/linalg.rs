//! Complex Hermitian helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// `u uᴴ`.
pub fn outer(u: &CVec) -> CMat {
    u * u.adjoint()
}

/// Real inner product `A • B = Re tr(Aᴴ B)`.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// `Re xᴴ A x`.
pub fn quad_form(a: &CMat, x: &CVec) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for j in 0..n {
        let xj = x[j];
        if xj == ZERO {
            continue;
        }
        let mut col = ZERO;
        for i in 0..n {
            col += x[i].conj() * a[(i, j)];
        }
        acc += (col * xj).re;
    }
    acc
}

/// `(A + Aᴴ) / 2`.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Real symmetric eigen-decomposition `(values, vectors)`, unsorted.
///
/// nalgebra's QR iteration occasionally returns NaN on finite input with many
/// exact zeros (Kronecker-structured constraints); in that case the cyclic
/// Jacobi method is used instead.
pub fn sym_eigen(a: &RMat) -> (DVector<f64>, RMat) {
    let se = SymmetricEigen::new(a.clone());
    if se.eigenvalues.iter().all(|x| x.is_finite()) && se.eigenvectors.iter().all(|x| x.is_finite()) {
        return (se.eigenvalues, se.eigenvectors);
    }
    jacobi_eigen(a)
}

/// Eigenvalues only; see [`sym_eigen`].
pub fn sym_eigenvalues(a: &RMat) -> DVector<f64> {
    let ev = a.clone().symmetric_eigenvalues();
    if ev.iter().all(|x| x.is_finite()) {
        return ev;
    }
    jacobi_eigen(a).0
}

/// Cyclic Jacobi with the usual threshold strategy.
pub fn jacobi_eigen(a: &RMat) -> (DVector<f64>, RMat) {
    let n = a.nrows();
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = RMat::identity(n, n);
    let frob = m.norm();
    if frob == 0.0 {
        return (DVector::zeros(n), v);
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for j in 0..n {
            for i in 0..j {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * frob {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diagonal(), v)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: CMat,
}

/// Hermitian eigen-decomposition computed through the real symmetric
/// embedding: nalgebra's complex `SymmetricEigen` can return inaccurate
/// eigenvectors when eigenvalues repeat, the real solver does not.
///
/// Each complex eigenvalue appears twice in the embedding. Eigenvectors are
/// recovered per cluster of (numerically) equal eigenvalues by pivoted
/// complex Gram–Schmidt over `x + iy` for the real vectors `[x; y]`.
pub fn eigh(a: &CMat) -> HermitianEigen {
    let n = a.nrows();
    if n == 0 {
        return HermitianEigen {
            values: vec![],
            vectors: CMat::zeros(0, 0),
        };
    }
    let h = hermitize(a);
    let (values, evecs) = sym_eigen(&embed(&h));
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let scale = values.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-9 * scale;

    let mut vectors: Vec<CVec> = Vec::with_capacity(n);
    let mut start = 0;
    while start < 2 * n {
        let mut end = start + 1;
        while end < 2 * n && values[order[end]] - values[order[end - 1]] <= tol {
            end += 1;
        }
        // complex dimension of the cluster
        let want = ((end - start) / 2).max(1).min(n - vectors.len());
        let mut cands: Vec<CVec> = order[start..end]
            .iter()
            .map(|&k| {
                let col = evecs.column(k);
                CVec::from_fn(n, |i, _| Complex64::new(col[i], col[i + n]))
            })
            .collect();
        // candidates are kept orthogonal to everything accepted so far
        for c in cands.iter_mut() {
            for _ in 0..2 {
                for v in &vectors {
                    let proj = v.dotc(c);
                    *c -= v * proj;
                }
            }
        }
        for _ in 0..want {
            let Some((best, _)) = cands
                .iter()
                .enumerate()
                .map(|(i, c)| (i, c.norm()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
            else {
                break;
            };
            let mut v = cands.swap_remove(best);
            if v.norm() < 1e-3 {
                break;
            }
            for u in &vectors {
                let proj = u.dotc(&v);
                v -= u * proj;
            }
            let norm = v.norm();
            let v = v / Complex64::new(norm, 0.0);
            for c in cands.iter_mut() {
                let proj = v.dotc(c);
                *c -= &v * proj;
            }
            vectors.push(v);
        }
        start = end;
    }
    // clusters that came up short (cannot happen for exact pairs) are
    // completed from the standard basis
    let mut e = 0;
    while vectors.len() < n && e < n {
        let mut c = CVec::zeros(n);
        c[e] = ONE;
        for _ in 0..2 {
            for v in &vectors {
                let proj = v.dotc(&c);
                c -= v * proj;
            }
        }
        if c.norm() > 1e-3 {
            let norm = c.norm();
            vectors.push(c / Complex64::new(norm, 0.0));
        }
        e += 1;
    }
    let mut pairs: Vec<(f64, CVec)> = vectors.into_iter().map(|v| (quad_form(&h, &v), v)).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = CMat::from_columns(&pairs.into_iter().map(|p| p.1).collect::<Vec<_>>());
    HermitianEigen { values, vectors }
}

/// Eigenvalues ascending, from the real embedding (each appears twice there).
pub fn eigvalsh(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 {
        return vec![];
    }
    let mut v: Vec<f64> = sym_eigenvalues(&embed(&hermitize(a))).iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

pub fn lambda_max(a: &CMat) -> f64 {
    eigvalsh(a).last().copied().unwrap_or(0.0)
}

pub fn lambda_min(a: &CMat) -> f64 {
    eigvalsh(a).first().copied().unwrap_or(0.0)
}

/// Checks `λ_min ≥ -rel_tol · max(trace, λ_max)`.
pub fn is_psd(a: &CMat, rel_tol: f64) -> bool {
    let ev = eigvalsh(a);
    let scale = ev.last().copied().unwrap_or(0.0).abs().max(a.trace().re.abs());
    ev.first().map_or(true, |&m| m >= -rel_tol * scale)
}

/// Rank-truncated factor `F` (r × n) with `Fᴴ F ≈ A`, keeping eigenpairs
/// above `rel_tol · λ_max`. Rows are `√λ_j v_jᴴ`, largest eigenvalue first.
pub fn psd_factor(a: &CMat, rel_tol: f64) -> Result<(CMat, usize)> {
    let n = a.nrows();
    let eig = eigh(a);
    let lmax = eig.values.last().copied().unwrap_or(0.0);
    let lmin = eig.values.first().copied().unwrap_or(0.0);
    let scale = lmin.abs().max(lmax.abs());
    if scale == 0.0 {
        return Ok((CMat::zeros(0, n), 0));
    }
    if lmin < -rel_tol * scale {
        return Err(Error::NotPsd { min_eig: lmin, max_eig: lmax });
    }
    let keep: Vec<usize> = (0..n).rev().filter(|&j| eig.values[j] > rel_tol * lmax).collect();
    let r = keep.len();
    let mut f = CMat::zeros(r, n);
    for (row, &j) in keep.iter().enumerate() {
        let s = eig.values[j].sqrt();
        let v = normalize_phase(&eig.vectors.column(j).into_owned());
        for c in 0..n {
            f[(row, c)] = v[c].conj() * s;
        }
    }
    Ok((f, r))
}

/// Hermitian square root with negative eigenvalues clipped to zero.
pub fn psd_sqrt(a: &CMat) -> CMat {
    let eig = eigh(a);
    let n = a.nrows();
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        let s = eig.values[j].max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * eig.vectors.adjoint()
}

/// Multiplies by a global phase so the first entry with non-negligible
/// magnitude is real and positive.
pub fn normalize_phase(v: &CVec) -> CVec {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return v.clone();
    }
    match v.iter().find(|z| z.norm() > 1e-12 * scale) {
        Some(z) => v * (z.conj() / z.norm()),
        None => v.clone(),
    }
}

/// Real embedding `[[Re X, -Im X], [Im X, Re X]]`; for Hermitian `A`,
/// `A • X = ½ emb(A) • emb(X)`, and `emb(F Fᴴ) = emb(F) emb(F)ᵀ` for any
/// rectangular `F`.
pub fn embed(a: &CMat) -> RMat {
    let (n, m) = a.shape();
    let mut out = RMat::zeros(2 * n, 2 * m);
    for j in 0..m {
        for i in 0..n {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + m)] = z.re;
            out[(i + n, j)] = z.im;
            out[(i, j + m)] = -z.im;
        }
    }
    out
}

/// Inverse of [`embed`], averaging the redundant blocks.
pub fn unembed(x: &RMat) -> CMat {
    let n = x.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        Complex64::new(
            0.5 * (x[(i, j)] + x[(i + n, j + n)]),
            0.5 * (x[(i + n, j)] - x[(i, j + n)]),
        )
    })
}

/// Column-major vectorization of a square matrix.
pub fn vec_of(v: &CMat) -> CVec {
    CVec::from_iterator(v.len(), v.iter().copied())
}

/// Inverse of [`vec_of`] for an `l × l` matrix.
pub fn unvec(w: &CVec, l: usize) -> CMat {
    CMat::from_column_slice(l, l, w.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream, Purpose};

    fn random_mat(n: usize, m: usize, seed: u64) -> CMat {
        let mut rng = stream(seed, Purpose::Verification, &[]);
        CMat::from_fn(n, m, |_, _| complex_normal(&mut rng))
    }

    #[test]
    fn embedding_preserves_inner_products() {
        let a = random_mat(4, 4, 1);
        let b = random_mat(4, 4, 2);
        let ha = hermitize(&a);
        let hb = hermitize(&b);
        let lhs = inner(&ha, &hb);
        let rhs = 0.5 * embed(&ha).dot(&embed(&hb));
        assert!((lhs - rhs).abs() < 1e-12);
        let back = unembed(&embed(&ha));
        assert!((back - ha).norm() < 1e-14);
    }

    #[test]
    fn embedding_of_factor_products() {
        let f = random_mat(4, 2, 7);
        let lhs = embed(&(&f * f.adjoint()));
        let ef = embed(&f);
        assert!((lhs - &ef * ef.transpose()).norm() < 1e-12);
    }

    #[test]
    fn factor_reconstructs_low_rank() {
        let b = random_mat(3, 6, 3);
        let omega = b.adjoint() * &b;
        let (f, r) = psd_factor(&omega, 1e-10).unwrap();
        assert_eq!(r, 3);
        let rec = f.adjoint() * &f;
        assert!((rec - &omega).norm() / omega.norm() < 1e-10);
    }

    #[test]
    fn factor_rejects_indefinite() {
        let mut a = CMat::identity(2, 2);
        a[(1, 1)] = Complex64::new(-1.0, 0.0);
        assert!(matches!(psd_factor(&a, 1e-8), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn quad_form_matches_dense() {
        let a = hermitize(&random_mat(5, 5, 4));
        let x = random_mat(5, 1, 5).column(0).into_owned();
        let dense = (x.adjoint() * &a * &x)[(0, 0)].re;
        assert!((quad_form(&a, &x) - dense).abs() < 1e-12);
    }

    #[test]
    fn vec_unvec_round_trip() {
        let v = random_mat(3, 3, 6);
        assert_eq!(unvec(&vec_of(&v), 3), v);
    }

    #[test]
    fn phase_normalization() {
        let v = CVec::from_vec(vec![Complex64::new(0.0, 2.0), Complex64::new(1.0, 1.0)]);
        let n = normalize_phase(&v);
        assert!(n[0].im.abs() < 1e-15 && n[0].re > 0.0);
        assert!((n.norm() - v.norm()).abs() < 1e-14);
    }

    #[test]
    fn eigh_handles_repeated_eigenvalues() {
        // rank-deficient Kronecker product with repeated eigenvalues
        let b = hermitize(&(random_mat(4, 4, 9) * random_mat(4, 4, 9).adjoint()));
        let mut e = CMat::zeros(4, 4);
        e[(1, 1)] = ONE;
        for a in [kron(&b, &e), kron(&b.map(|z| z.conj()), &CMat::identity(4, 4)), CMat::identity(5, 5), CMat::zeros(3, 3)] {
            let eig = eigh(&a);
            let n = a.nrows();
            let d = CMat::from_diagonal(&CVec::from_iterator(n, eig.values.iter().map(|&x| Complex64::new(x, 0.0))));
            let rec = &eig.vectors * d * eig.vectors.adjoint();
            assert!((rec - &a).norm() <= 1e-12 * a.norm().max(1.0));
            let ortho = eig.vectors.adjoint() * &eig.vectors - CMat::identity(n, n);
            assert!(ortho.norm() < 1e-12);
            let vals = eigvalsh(&a);
            for (x, y) in vals.iter().zip(&eig.values) {
                assert!((x - y).abs() < 1e-12 * a.norm().max(1.0));
            }
        }
    }

    #[test]
    fn jacobi_matches_qr() {
        let f = random_mat(6, 6, 4);
        let a = embed(&hermitize(&(&f * f.adjoint())));
        let (vals, vecs) = jacobi_eigen(&a);
        let rec = &vecs * RMat::from_diagonal(&vals) * vecs.transpose();
        assert!((rec - &a).norm() < 1e-12 * a.norm());
        let mut x: Vec<f64> = vals.iter().copied().collect();
        let mut y: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-11 * a.norm());
        }
        let (z, _) = jacobi_eigen(&RMat::zeros(3, 3));
        assert!(z.iter().all(|&v| v == 0.0));
    }
}
