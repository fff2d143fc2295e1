//! Dense complex kernels for the 2x2 and 4x4 matrices used throughout the crate.
//!
//! Matrices are plain `nalgebra` dynamic matrices; validation happens at the entry
//! of each operation. Spectra are returned in descending order, ties broken by the
//! original index, so outputs are deterministic.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;

/// Default tolerance on `|H - H^dagger|` for Hermitian inputs.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_TOL, 0)` are clamped to zero before square roots.
pub const PSD_TOL: f64 = 1e-10;
/// Trace deviation accepted for density matrices.
pub const TRACE_TOL: f64 = 1e-9;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn ensure_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

pub(crate) fn ensure_square(m: &CMatrix, expected: &'static str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Shape {
            expected,
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub(crate) fn ensure_shape(m: &CMatrix, n: usize, expected: &'static str) -> Result<()> {
    if m.nrows() == n && m.ncols() == n {
        Ok(())
    } else {
        Err(Error::Shape {
            expected,
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|x| c64(x, 0.0))
}

/// Kronecker product; the first factor indexes the high bit.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn block_diag(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub fn diag_from(values: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values))
}

/// Largest entry of `|U^dagger U - 1|`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &identity(n))
}

/// Largest entry of `|O^T O - 1|` for a real matrix.
pub fn orthogonality_defect(o: &RMatrix) -> f64 {
    if !o.is_square() {
        return f64::INFINITY;
    }
    let n = o.nrows();
    (o.transpose() * o - RMatrix::identity(n, n)).amax()
}

pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    max_abs_diff(h, &h.adjoint())
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Permutation that sorts `values` in descending order, ties kept in index order.
pub(crate) fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

fn permute_columns<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, order: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), order.len(), |r, c| m[(r, order[c])])
}

/// Singular value decomposition `M = U diag(sigma) V^dagger`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    /// Nonnegative, descending.
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        let s: Vec<C64> = self.sigma.iter().map(|&x| c64(x, 0.0)).collect();
        &self.u * diag_from(&s) * self.v.adjoint()
    }
}

/// One-sided Jacobi SVD. Accurate to working precision for the small matrices
/// used here, including rank-deficient ones.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    ensure_square(m, "a square matrix")?;
    ensure_finite(m, "svd input")?;
    let n = m.nrows();
    let rows = n;
    let mut a = m.clone();
    let mut v = identity(n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let ph = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let phc = ph.conj();
                for (mat, len) in [(&mut a, rows), (&mut v, n)] {
                    for r in 0..len {
                        let xp = mat[(r, p)];
                        let xq = mat[(r, q)] * phc;
                        mat[(r, p)] = xp * c - xq * s;
                        mat[(r, q)] = xp * s + xq * c;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let raw: Vec<f64> = (0..n).map(|k| a.column(k).norm()).collect();
    let order = descending_order(&raw);
    let sigma: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let v = permute_columns(&v, &order);
    let scale = sigma.first().copied().unwrap_or(0.0);
    let mut u = CMatrix::zeros(rows, rows);
    let mut filled = 0;
    let push = |u: &mut CMatrix, filled: &mut usize, mut col: nalgebra::DVector<C64>| -> bool {
        for k in 0..*filled {
            let proj = u.column(k).dotc(&col);
            col -= u.column(k) * proj;
        }
        let nrm = col.norm();
        if nrm > 0.5 {
            u.set_column(*filled, &(col / c64(nrm, 0.0)));
            *filled += 1;
            true
        } else {
            false
        }
    };
    for (k, &i) in order.iter().enumerate() {
        if sigma[k] > 1e-300 && sigma[k] > 1e-30 * scale {
            let col = a.column(i).map(|z| z / sigma[k]);
            if !push(&mut u, &mut filled, col) {
                break;
            }
        } else {
            break;
        }
    }
    let mut e = 0;
    while filled < rows && e < rows {
        let mut col = nalgebra::DVector::<C64>::zeros(rows);
        col[e] = c64(1.0, 0.0);
        push(&mut u, &mut filled, col);
        e += 1;
    }
    Ok(Svd { u, sigma, v })
}

/// Sum of singular values.
pub fn nuclear_norm(m: &CMatrix) -> Result<f64> {
    Ok(svd(m)?.sigma.iter().sum())
}

/// Closed form `sigma_1 + sigma_2 = sqrt(|M|_F^2 + 2|det M|)` for 2x2 input.
pub fn nuclear_norm_2x2(m: &CMatrix) -> Result<f64> {
    ensure_shape(m, 2, "a 2x2 matrix")?;
    ensure_finite(m, "nuclear_norm_2x2 input")?;
    Ok(nuclear_norm_2x2_raw(
        m[(0, 0)],
        m[(0, 1)],
        m[(1, 0)],
        m[(1, 1)],
    ))
}

#[inline]
pub(crate) fn nuclear_norm_2x2_raw(a: C64, b: C64, c: C64, d: C64) -> f64 {
    let frob2 = a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr();
    let det = (a * d - b * c).norm();
    (frob2 + 2.0 * det).sqrt()
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermEig {
    /// Descending.
    pub values: Vec<f64>,
    /// Unitary; column k belongs to `values[k]`.
    pub vectors: CMatrix,
}

pub fn herm_eig(h: &CMatrix) -> Result<HermEig> {
    herm_eig_with_tol(h, HERMITIAN_TOL)
}

pub fn herm_eig_with_tol(h: &CMatrix, tol: f64) -> Result<HermEig> {
    ensure_square(h, "a square matrix")?;
    ensure_finite(h, "herm_eig input")?;
    let asymmetry = hermiticity_defect(h);
    if asymmetry > tol {
        return Err(Error::NotHermitian { asymmetry });
    }
    let sym = (h + h.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(sym);
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = descending_order(&raw);
    Ok(HermEig {
        values: order.iter().map(|&i| raw[i]).collect(),
        vectors: permute_columns(&eig.eigenvectors, &order),
    })
}

/// Real symmetric eigen-decomposition, descending.
pub(crate) fn real_sym_eig(m: &RMatrix) -> (Vec<f64>, RMatrix) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = descending_order(&raw);
    (
        order.iter().map(|&i| raw[i]).collect(),
        permute_columns(&eig.eigenvectors, &order),
    )
}

pub fn matrix_sqrt_psd(h: &CMatrix) -> Result<CMatrix> {
    matrix_sqrt_psd_with_tol(h, PSD_TOL)
}

pub fn matrix_sqrt_psd_with_tol(h: &CMatrix, neg_tol: f64) -> Result<CMatrix> {
    let eig = herm_eig(h)?;
    if let Some(&min) = eig.values.last() {
        if min < -neg_tol {
            return Err(Error::NegativeEigenvalue { value: min });
        }
    }
    let roots: Vec<C64> = eig
        .values
        .iter()
        .map(|&l| c64(l.max(0.0).sqrt(), 0.0))
        .collect();
    let s = &eig.vectors * diag_from(&roots) * eig.vectors.adjoint();
    Ok((&s + s.adjoint()).map(|z| z * 0.5))
}

fn check_density(rho: &CMatrix) -> Result<()> {
    ensure_square(rho, "a square density matrix")?;
    ensure_finite(rho, "density matrix")?;
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(Error::InvalidDensity(format!(
            "trace {:.12}{:+.3e}i differs from 1",
            tr.re, tr.im
        )));
    }
    Ok(())
}

/// Uhlmann fidelity `Tr sqrt(rho^{1/2} sigma rho^{1/2})`.
///
/// Evaluated as the nuclear norm of `sqrt(rho) sqrt(sigma)`, which is the same
/// quantity but avoids square-rooting eigenvalues that sit at rounding level.
pub fn fidelity(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    check_density(rho)?;
    check_density(sigma)?;
    if rho.shape() != sigma.shape() {
        return Err(Error::Shape {
            expected: "matching density matrix dimensions",
            rows: sigma.nrows(),
            cols: sigma.ncols(),
        });
    }
    let a = matrix_sqrt_psd(rho)?;
    let b = matrix_sqrt_psd(sigma)?;
    nuclear_norm(&(a * b))
}
