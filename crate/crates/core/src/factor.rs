//! Takagi factorization, the orthogonal-phase decomposition of unitaries, and the
//! magic-basis isomorphism between `SU(2) x SU(2)` and `SO(4)`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use crate::error::{Error, Result};
use crate::linalg::{
    c64, descending_order, diag_from, ensure_finite, ensure_shape, ensure_square, frobenius,
    orthogonality_defect, real_sym_eig, to_complex, unitarity_defect, CMatrix, RMatrix, C64,
};

/// Accepted `|Q - Q^T|_F` for Takagi input.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Accepted unitarity defect for decomposition input.
pub const UNITARY_TOL: f64 = 1e-9;

/// `U^T Q U = diag(sigma)` with `U` unitary.
#[derive(Debug, Clone)]
pub struct TakagiFactorization {
    pub u: CMatrix,
    /// Nonnegative, descending.
    pub sigma: Vec<f64>,
}

impl TakagiFactorization {
    /// Largest entry of `|U^T Q U - diag(sigma)|`.
    pub fn residual(&self, q: &CMatrix) -> f64 {
        let d = self.u.transpose() * q * &self.u;
        let s: Vec<C64> = self.sigma.iter().map(|&x| c64(x, 0.0)).collect();
        (d - diag_from(&s))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.sigma.iter().filter(|&&s| s > tol).count()
    }
}

fn col_dot(a: &CMatrix, i: usize, b: &CMatrix, j: usize) -> C64 {
    (0..a.nrows()).map(|r| a[(r, i)].conj() * b[(r, j)]).sum()
}

/// Takagi factorization of a complex symmetric matrix.
///
/// Writing `Q = A + iB` and `u = x + iy`, the condition `Q u = sigma conj(u)` is the
/// real eigenproblem `[[A, -B], [-B, -A]] (x, y) = sigma (x, y)`. Its spectrum is
/// `+-sigma`; the top half yields the Takagi vectors. Null directions are completed
/// by Gram-Schmidt and the column phases are polished so the diagonal is real.
pub fn takagi(q: &CMatrix) -> Result<TakagiFactorization> {
    ensure_square(q, "a square symmetric matrix")?;
    ensure_finite(q, "takagi input")?;
    let asymmetry = frobenius(&(q - q.transpose()));
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let n = q.nrows();
    let sym = (q + q.transpose()).map(|z| z * 0.5);

    let mut m = RMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let z = sym[(r, c)];
            m[(r, c)] = z.re;
            m[(r, c + n)] = -z.im;
            m[(r + n, c)] = -z.im;
            m[(r + n, c + n)] = -z.re;
        }
    }
    let (_, vecs) = real_sym_eig(&m);

    // Complex modified Gram-Schmidt over the top-n eigenvectors; a column that
    // collapses belongs to the null space and is rebuilt afterwards.
    let mut u = CMatrix::zeros(n, n);
    let mut filled = 0;
    for k in 0..n {
        let mut v = CMatrix::from_fn(n, 1, |r, _| c64(vecs[(r, k)], vecs[(r + n, k)]));
        for j in 0..filled {
            let p = col_dot(&u, j, &v, 0);
            for r in 0..n {
                let ur = u[(r, j)];
                v[(r, 0)] -= ur * p;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.5 {
            for r in 0..n {
                u[(r, filled)] = v[(r, 0)] / norm;
            }
            filled += 1;
        }
    }
    complete_unitary(&mut u, filled);

    // Phase polish: make each diagonal entry of U^T Q U real and nonnegative.
    let d = u.transpose() * &sym * &u;
    for k in 0..n {
        let dk = d[(k, k)];
        if dk.norm() > 0.0 {
            let phase = C64::from_polar(1.0, -0.5 * dk.arg());
            for r in 0..n {
                u[(r, k)] *= phase;
            }
        }
    }
    let d = u.transpose() * &sym * &u;
    let raw: Vec<f64> = (0..n).map(|k| d[(k, k)].norm()).collect();
    let order = descending_order(&raw);
    let u = CMatrix::from_fn(n, n, |r, c| u[(r, order[c])]);
    Ok(TakagiFactorization {
        u,
        sigma: order.iter().map(|&i| raw[i]).collect(),
    })
}

/// Fills columns `filled..n` of `u` with an orthonormal completion drawn from the
/// standard basis.
pub(crate) fn complete_unitary(u: &mut CMatrix, mut filled: usize) {
    let n = u.nrows();
    let mut e = 0;
    while filled < u.ncols() && e < n {
        let mut v = CMatrix::zeros(n, 1);
        v[(e, 0)] = c64(1.0, 0.0);
        for _ in 0..2 {
            for j in 0..filled {
                let p = col_dot(u, j, &v, 0);
                for r in 0..n {
                    let ur = u[(r, j)];
                    v[(r, 0)] -= ur * p;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.5 {
            for r in 0..n {
                u[(r, filled)] = v[(r, 0)] / norm;
            }
            filled += 1;
        }
        e += 1;
    }
}

/// `U = O1 diag(exp(i delta)) O2^T` with real orthogonal `O1`, `O2`.
#[derive(Debug, Clone)]
pub struct OrthoPhaseDecomp {
    pub o1: RMatrix,
    pub o2: RMatrix,
    /// Each in `(-pi/2, pi/2]`.
    pub deltas: Vec<f64>,
}

impl OrthoPhaseDecomp {
    pub fn phase_matrix(&self) -> CMatrix {
        let d: Vec<C64> = self
            .deltas
            .iter()
            .map(|&x| C64::from_polar(1.0, x))
            .collect();
        diag_from(&d)
    }

    pub fn reconstruct(&self) -> CMatrix {
        to_complex(&self.o1) * self.phase_matrix() * to_complex(&self.o2).transpose()
    }

    pub fn sorted_deltas(&self) -> Vec<f64> {
        let mut d = self.deltas.clone();
        d.sort_by(f64::total_cmp);
        d
    }
}

/// Jacobi sweeps that jointly diagonalize commuting real symmetric matrices.
/// Returns the accumulated rotation `R` with `R^T A_i R` diagonal.
fn joint_diagonalize(mats: &mut [RMatrix]) -> RMatrix {
    let n = mats[0].nrows();
    let mut rot = RMatrix::identity(n, n);
    let scale: f64 = mats.iter().map(|m| m.norm()).sum::<f64>().max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for m in mats.iter() {
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[(p, q)] * m[(p, q)];
                }
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
                for m in mats.iter() {
                    let hx = m[(p, p)] - m[(q, q)];
                    let hy = 2.0 * m[(p, q)];
                    gxx += hx * hx;
                    gxy += hx * hy;
                    gyy += hy * hy;
                }
                if gxy.abs() <= 1e-300 && gyy <= gxx {
                    continue;
                }
                // top eigenvector of [[gxx, gxy], [gxy, gyy]]
                let half_tr = 0.5 * (gxx + gyy);
                let disc = (0.25 * (gxx - gyy).powi(2) + gxy * gxy).sqrt();
                let lam = half_tr + disc;
                let (mut vx, mut vy) = if (lam - gyy).abs() > (lam - gxx).abs() {
                    (lam - gyy, gxy)
                } else {
                    (gxy, lam - gxx)
                };
                if vx < 0.0 {
                    vx = -vx;
                    vy = -vy;
                }
                let theta = 0.5 * vy.atan2(vx);
                if theta.abs() < 1e-18 {
                    continue;
                }
                let (s, c) = theta.sin_cos();
                for m in mats.iter_mut() {
                    apply_rotation(m, p, q, c, s);
                }
                for r in 0..n {
                    let a = rot[(r, p)];
                    let b = rot[(r, q)];
                    rot[(r, p)] = c * a + s * b;
                    rot[(r, q)] = -s * a + c * b;
                }
            }
        }
    }
    rot
}

/// `M <- R^T M R` with `R` the identity except `R_pp = R_qq = c`, `R_qp = s`, `R_pq = -s`.
fn apply_rotation(m: &mut RMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    for r in 0..n {
        let a = m[(r, p)];
        let b = m[(r, q)];
        m[(r, p)] = c * a + s * b;
        m[(r, q)] = -s * a + c * b;
    }
    for col in 0..n {
        let a = m[(p, col)];
        let b = m[(q, col)];
        m[(p, col)] = c * a + s * b;
        m[(q, col)] = -s * a + c * b;
    }
}

/// Nearest orthogonal matrix in the Frobenius norm.
pub(crate) fn polar_orthogonal(m: &RMatrix) -> RMatrix {
    let dec = crate::linalg::svd(&to_complex(m)).expect("finite square input");
    (dec.u * dec.v.adjoint()).map(|z| z.re)
}

/// Decomposes a unitary as `O1 diag(exp(i delta)) O2^T`.
///
/// `O2` diagonalizes the symmetric unitary `U^T U = O2 diag(exp(2 i delta)) O2^T`; its
/// real and imaginary parts commute, so a joint Jacobi sweep finds it even when phases
/// are degenerate. `O1 = U O2 diag(exp(-i delta))` is then real.
pub fn ortho_phase_decompose(u: &CMatrix) -> Result<OrthoPhaseDecomp> {
    ensure_square(u, "a square unitary matrix")?;
    ensure_finite(u, "ortho_phase_decompose input")?;
    let defect = unitarity_defect(u);
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary { defect });
    }
    let n = u.nrows();
    let s = u.transpose() * u;
    let s = (&s + s.transpose()).map(|z| z * 0.5);
    let mut mats = [s.map(|z| z.re), s.map(|z| z.im)];
    let o2 = joint_diagonalize(&mut mats);

    let mut deltas: Vec<f64> = (0..n)
        .map(|k| 0.5 * mats[1][(k, k)].atan2(mats[0][(k, k)]))
        .collect();
    let mut flips = vec![1.0; n];
    for (d, f) in deltas.iter_mut().zip(flips.iter_mut()) {
        if *d <= -FRAC_PI_2 {
            *d += std::f64::consts::PI;
            *f = -1.0;
        }
    }
    let dconj: Vec<C64> = deltas
        .iter()
        .zip(&flips)
        .map(|(&d, &f)| C64::from_polar(f, -d))
        .collect();
    let o1_raw = (u * to_complex(&o2) * diag_from(&dconj)).map(|z| z.re);
    let o1 = polar_orthogonal(&o1_raw);
    Ok(OrthoPhaseDecomp { o1, o2, deltas })
}

/// The magic-basis matrix `T`.
pub fn magic_basis() -> CMatrix {
    let h = FRAC_1_SQRT_2;
    let o = c64(0.0, 0.0);
    let r = c64(h, 0.0);
    let i = c64(0.0, h);
    CMatrix::from_row_slice(4, 4, &[r, o, o, r, o, i, i, o, o, -r, r, o, i, o, o, -i])
}

fn check_su2(u: &CMatrix) -> Result<()> {
    ensure_shape(u, 2, "a 2x2 unitary")?;
    ensure_finite(u, "SU(2) input")?;
    let defect = unitarity_defect(u);
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary { defect });
    }
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    if (det - c64(1.0, 0.0)).norm() > UNITARY_TOL {
        return Err(Error::Determinant {
            re: det.re,
            im: det.im,
        });
    }
    Ok(())
}

/// Rescales a 2x2 unitary by a global phase so its determinant is 1.
pub fn to_su2(u: &CMatrix) -> CMatrix {
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    let phase = C64::from_polar(1.0, -0.5 * det.arg());
    u.map(|z| z * phase)
}

/// `T (u1 x u2) T^dagger`, a real matrix in `SO(4)`.
pub fn local_to_magic(u1: &CMatrix, u2: &CMatrix) -> Result<RMatrix> {
    check_su2(u1)?;
    check_su2(u2)?;
    let t = magic_basis();
    let o = &t * u1.kronecker(u2) * t.adjoint();
    Ok(o.map(|z| z.re))
}

fn check_so4(o: &RMatrix) -> Result<()> {
    if o.nrows() != 4 || o.ncols() != 4 {
        return Err(Error::Shape {
            expected: "a 4x4 orthogonal matrix",
            rows: o.nrows(),
            cols: o.ncols(),
        });
    }
    if o.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "orthogonal input",
        });
    }
    let defect = orthogonality_defect(o);
    if defect > UNITARY_TOL {
        return Err(Error::NotOrthogonal { defect });
    }
    let det = o.determinant();
    if (det - 1.0).abs() > 1e-6 {
        return Err(Error::Determinant { re: det, im: 0.0 });
    }
    Ok(())
}

/// Inverts [`local_to_magic`]: finds `u1, u2` in `SU(2)` with `T^dagger o T = u1 x u2`.
///
/// The pair is defined up to a simultaneous sign; the largest-modulus entry of `u1`
/// is chosen with positive real part (positive imaginary part on a tie).
pub fn magic_to_local(o: &RMatrix) -> Result<(CMatrix, CMatrix)> {
    check_so4(o)?;
    let t = magic_basis();
    let m = t.adjoint() * to_complex(o) * &t;

    let (mut r0, mut c0, mut best) = (0, 0, -1.0);
    for r in 0..4 {
        for c in 0..4 {
            let v = m[(r, c)].norm();
            if v > best {
                best = v;
                r0 = r;
                c0 = c;
            }
        }
    }
    let (i1, i2, j1, j2) = (r0 / 2, r0 % 2, c0 / 2, c0 % 2);
    let block = CMatrix::from_fn(2, 2, |a, b| m[(2 * a + i2, 2 * b + j2)]);
    let det = block[(0, 0)] * block[(1, 1)] - block[(0, 1)] * block[(1, 0)];
    let mut u1 = block.map(|z| z / det.sqrt());
    // make the dominant entry canonical
    let lead = (0..2)
        .flat_map(|a| (0..2).map(move |b| (a, b)))
        .max_by(|&x, &y| u1[x].norm().total_cmp(&u1[y].norm()))
        .map(|x| u1[x])
        .unwrap_or(c64(1.0, 0.0));
    let tiny = 1e-12 * lead.norm();
    if lead.re < -tiny || (lead.re.abs() <= tiny && lead.im < 0.0) {
        u1 = -u1;
    }
    let pivot = u1[(i1, j1)];
    let u2 = CMatrix::from_fn(2, 2, |x, y| m[(2 * i1 + x, 2 * j1 + y)] / pivot);
    Ok((u1, u2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_diff, svd};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn gauss(rng: &mut impl Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    fn random_complex(rng: &mut impl Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| c64(gauss(rng), gauss(rng)))
    }

    fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
        let m = random_complex(rng, n);
        let s = svd(&m).unwrap();
        s.u * s.v.adjoint()
    }

    fn random_orthogonal(rng: &mut impl Rng, n: usize) -> RMatrix {
        let m = RMatrix::from_fn(n, n, |_, _| gauss(rng));
        let mut o = m.qr().q();
        if o.determinant() < 0.0 {
            o.column_mut(0).neg_mut();
        }
        o
    }

    fn random_su2(rng: &mut impl Rng) -> CMatrix {
        to_su2(&random_unitary(rng, 2))
    }

    #[test]
    fn takagi_trivial_and_ghz() {
        let mut q = CMatrix::zeros(4, 4);
        q[(0, 0)] = c64(1.0, 0.0);
        let t = takagi(&q).unwrap();
        assert!((t.sigma[0] - 1.0).abs() < 1e-14);
        assert!(t.sigma[1..].iter().all(|s| s.abs() < 1e-14));
        assert!(t.residual(&q) < 1e-12);
        assert!(unitarity_defect(&t.u) < 1e-12);

        let mut q = CMatrix::zeros(4, 4);
        q[(0, 3)] = c64(-0.5, 0.0);
        q[(3, 0)] = c64(-0.5, 0.0);
        let t = takagi(&q).unwrap();
        let expect = [0.5, 0.5, 0.0, 0.0];
        for (s, e) in t.sigma.iter().zip(expect) {
            assert!((s - e).abs() < 1e-12);
        }
        assert!(t.residual(&q) < 1e-12);
    }

    #[test]
    fn takagi_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2, 4] {
            for _ in 0..300 {
                let a = random_complex(&mut rng, n);
                let q = a.transpose() * &a;
                let t = takagi(&q).unwrap();
                assert!(t.residual(&q) < 1e-9);
                assert!(unitarity_defect(&t.u) < 1e-10);
                let sv = svd(&q).unwrap().sigma;
                for (x, y) in t.sigma.iter().zip(&sv) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn takagi_degenerate_and_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            // Q = V^* diag(s) V^dagger with repeated and vanishing values
            let v = random_unitary(&mut rng, 4);
            let s = [c64(0.7, 0.), c64(0.7, 0.), c64(0.2, 0.), c64(0.0, 0.)];
            let q = v.map(|z| z.conj()) * diag_from(&s) * v.adjoint();
            let t = takagi(&q).unwrap();
            assert!(t.residual(&q) < 1e-9, "{}", t.residual(&q));
            assert!(unitarity_defect(&t.u) < 1e-10);
            assert_eq!(t.rank(1e-9), 3);
        }
        let t = takagi(&CMatrix::zeros(4, 4)).unwrap();
        assert!(unitarity_defect(&t.u) < 1e-12);
        assert!(t.sigma.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn takagi_rejects_asymmetric() {
        let mut q = identity(2);
        q[(0, 1)] = c64(1.0, 0.0);
        match takagi(&q) {
            Err(Error::NotSymmetric { asymmetry }) => {
                assert!((asymmetry - 2f64.sqrt()).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ortho_phase_trivial_cases() {
        let d = ortho_phase_decompose(&identity(4)).unwrap();
        assert!(d.deltas.iter().all(|x| x.abs() < 1e-14));

        let u = diag_from(&[c64(0., 1.), c64(1., 0.), c64(1., 0.), c64(1., 0.)]);
        let d = ortho_phase_decompose(&u).unwrap();
        let s = d.sorted_deltas();
        assert!(s[..3].iter().all(|x| x.abs() < 1e-14));
        assert!((s[3] - FRAC_PI_2).abs() < 1e-14);
        assert!(max_abs_diff(&d.reconstruct(), &u) < 1e-12);
    }

    fn wrap_half(x: f64) -> f64 {
        let mut y = x.rem_euclid(PI);
        if y > FRAC_PI_2 {
            y -= PI;
        }
        y
    }

    #[test]
    fn ortho_phase_of_magic_times_phases() {
        // With det D = 1 the phases of T D^dagger form {phi, -phi, pi/2 - phi, phi - pi/2}.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = magic_basis();
        for _ in 0..300 {
            let a0: f64 = rng.random_range(-PI..PI);
            let a1: f64 = rng.random_range(-PI..PI);
            let a2: f64 = rng.random_range(-PI..PI);
            let a = [a0, a1, a2, -(a0 + a1 + a2)];
            let dconj: Vec<C64> = a.iter().map(|&x| C64::from_polar(1.0, -x)).collect();
            let u = &t * diag_from(&dconj);
            let dec = ortho_phase_decompose(&u).unwrap();
            assert!(max_abs_diff(&dec.reconstruct(), &u) < 1e-9);
            let got = dec.sorted_deltas();
            let best = got
                .iter()
                .map(|&phi| {
                    let mut pat: Vec<f64> = [phi, -phi, FRAC_PI_2 - phi, phi - FRAC_PI_2]
                        .iter()
                        .map(|&x| wrap_half(x))
                        .collect();
                    pat.sort_by(f64::total_cmp);
                    multiset_gap(&pat, &got)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8, "{got:?}");
        }
    }

    /// Largest angular mismatch (mod pi) under the best pairing of two 4-sets.
    fn multiset_gap(a: &[f64], b: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        let mut idx = [0usize, 1, 2, 3];
        permute(&mut idx, 0, &mut |p| {
            let e = (0..4).map(|k| angle_gap(a[k], b[p[k]])).fold(0.0, f64::max);
            best = best.min(e);
        });
        best
    }

    fn permute(idx: &mut [usize; 4], k: usize, f: &mut impl FnMut(&[usize; 4])) {
        if k == 4 {
            f(idx);
            return;
        }
        for i in k..4 {
            idx.swap(k, i);
            permute(idx, k + 1, f);
            idx.swap(k, i);
        }
    }

    fn angle_gap(x: f64, y: f64) -> f64 {
        let d = (x - y).rem_euclid(PI);
        d.min(PI - d)
    }

    #[test]
    fn ortho_phase_random_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2, 4] {
            for _ in 0..300 {
                let u = random_unitary(&mut rng, n);
                let d = ortho_phase_decompose(&u).unwrap();
                assert!(max_abs_diff(&d.reconstruct(), &u) < 1e-9);
                assert!(orthogonality_defect(&d.o1) < 1e-10);
                assert!(orthogonality_defect(&d.o2) < 1e-10);
                assert!(d.deltas.iter().all(|&x| x > -FRAC_PI_2 && x <= FRAC_PI_2));
                // power sums of exp(2 i delta) are invariants of U^T U
                let s = u.transpose() * &u;
                let mut p = identity(n);
                for m in 1..=n {
                    p = &p * &s;
                    let tr = p.trace();
                    let sum: C64 = d
                        .deltas
                        .iter()
                        .map(|&x| C64::from_polar(1.0, 2.0 * m as f64 * x))
                        .sum();
                    assert!((tr - sum).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ortho_phase_degenerate_phases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let o1 = random_orthogonal(&mut rng, 4);
            let o2 = random_orthogonal(&mut rng, 4);
            let x: f64 = rng.random_range(-1.5..1.5);
            let y: f64 = rng.random_range(-1.5..1.5);
            let ph = [x, x, y, y];
            let d: Vec<C64> = ph.iter().map(|&t| C64::from_polar(1.0, t)).collect();
            let u = to_complex(&o1) * diag_from(&d) * to_complex(&o2).transpose();
            let dec = ortho_phase_decompose(&u).unwrap();
            assert!(max_abs_diff(&dec.reconstruct(), &u) < 1e-9);
            let mut want = ph.to_vec();
            want.sort_by(f64::total_cmp);
            for (a, b) in dec.sorted_deltas().iter().zip(&want) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        // real orthogonal input: all phases zero or pi/2
        let o = to_complex(&random_orthogonal(&mut rng, 4));
        let dec = ortho_phase_decompose(&o).unwrap();
        assert!(max_abs_diff(&dec.reconstruct(), &o) < 1e-9);
    }

    #[test]
    fn ortho_phase_rejects_non_unitary() {
        let m = identity(3).map(|z| z * 2.0);
        assert!(matches!(
            ortho_phase_decompose(&m),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn magic_identity_and_realness() {
        let o = local_to_magic(&identity(2), &identity(2)).unwrap();
        assert!((o - RMatrix::identity(4, 4)).amax() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = magic_basis();
        for _ in 0..200 {
            let (u1, u2) = (random_su2(&mut rng), random_su2(&mut rng));
            let full = &t * u1.kronecker(&u2) * t.adjoint();
            assert!(full.iter().all(|z| z.im.abs() < 1e-10));
            let o = local_to_magic(&u1, &u2).unwrap();
            assert!(orthogonality_defect(&o) < 1e-10);
            assert!((o.determinant() - 1.0).abs() < 1e-9);
        }
        let bad = diag_from(&[c64(0., 1.), c64(1., 0.)]);
        assert!(matches!(
            local_to_magic(&bad, &identity(2)),
            Err(Error::Determinant { .. })
        ));
    }

    #[test]
    fn magic_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b) = magic_to_local(&RMatrix::identity(4, 4)).unwrap();
        assert!(max_abs_diff(&a, &identity(2)) < 1e-14);
        assert!(max_abs_diff(&b, &identity(2)) < 1e-14);
        for _ in 0..300 {
            let (u1, u2) = (random_su2(&mut rng), random_su2(&mut rng));
            let o = local_to_magic(&u1, &u2).unwrap();
            let (v1, v2) = magic_to_local(&o).unwrap();
            let same = max_abs_diff(&v1, &u1) < 1e-9 && max_abs_diff(&v2, &u2) < 1e-9;
            let flipped = max_abs_diff(&v1, &-&u1) < 1e-9 && max_abs_diff(&v2, &-&u2) < 1e-9;
            assert!(same || flipped);
        }
    }

    #[test]
    fn magic_to_local_random_so4() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = magic_basis();
        for _ in 0..300 {
            let o = random_orthogonal(&mut rng, 4);
            let (u1, u2) = magic_to_local(&o).unwrap();
            let m = t.adjoint() * to_complex(&o) * &t;
            assert!(max_abs_diff(&m, &u1.kronecker(&u2)) < 1e-8);
            assert!(check_su2(&u1).is_ok() && check_su2(&u2).is_ok());
        }
        let mut refl = RMatrix::identity(4, 4);
        refl[(0, 0)] = -1.0;
        assert!(matches!(
            magic_to_local(&refl),
            Err(Error::Determinant { .. })
        ));
    }

    #[test]
    fn magic_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (u1, u2, v1, v2) = (
                random_su2(&mut rng),
                random_su2(&mut rng),
                random_su2(&mut rng),
                random_su2(&mut rng),
            );
            let lhs = local_to_magic(&u1, &u2).unwrap() * local_to_magic(&v1, &v2).unwrap();
            let rhs = local_to_magic(&(&u1 * &v1), &(&u2 * &v2)).unwrap();
            assert!((lhs - rhs).amax() < 1e-9);
        }
    }
}
