//! Concurrence of assistance for the keeper pair AB with C and D as assistants.
//!
//! A joint measurement on CD is a 4x4 unitary `V`; the measured kets are the columns
//! of `conj(V)`, and the average concurrence left with AB is `sum_k |(V^T Q V)_kk|`.

mod certify;
mod cflat;

use serde::{Deserialize, Serialize};

pub use certify::{
    decompose_phases, extract_local_basis, forward_pattern_state, locality_certificate,
    rank2_local_basis, CertificateReport, LocalityCertificate, PhaseDecomposition, Verdict,
    PATTERN_TOL, RANK_TOL,
};
pub(crate) use cflat::Blocks;
pub use cflat::{
    cflat, cflat_given_w, cflat_with, communication_free_basis, feed_forward_basis,
    su2_from_angles, CflatOptions, CflatResult,
};

use crate::error::{Error, Result};
use crate::factor::UNITARY_TOL;
use crate::linalg::{block_diag, fidelity, identity, svd, unitarity_defect, CMatrix, C64};
use crate::state::{q_matrix, spin_flip_mixed, FourQubitPure};

/// A joint von Neumann measurement on CD.
#[derive(Debug, Clone)]
pub struct JointMeasurement {
    v: CMatrix,
}

impl JointMeasurement {
    pub fn new(v: CMatrix) -> Result<Self> {
        crate::linalg::ensure_shape(&v, 4, "a 4x4 unitary")?;
        crate::linalg::ensure_finite(&v, "measurement matrix")?;
        let defect = unitarity_defect(&v);
        if defect > UNITARY_TOL {
            return Err(Error::NotUnitary { defect });
        }
        Ok(Self { v })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.v
    }
}

/// Local measurement bases for C and D in the same convention as the joint `V`.
///
/// Without feed-forward the joint matrix is `w_c x w_d`. With feed-forward, D uses
/// `v_d0` or `v_d1` depending on C's outcome and `w_d` is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    pub w_c: CMatrix,
    pub w_d: CMatrix,
    pub feed_forward: Option<(CMatrix, CMatrix)>,
}

impl LocalBasis {
    pub fn product(w_c: CMatrix, w_d: CMatrix) -> Self {
        Self {
            w_c,
            w_d,
            feed_forward: None,
        }
    }

    pub fn standard() -> Self {
        Self::product(identity(2), identity(2))
    }

    pub fn joint_matrix(&self) -> CMatrix {
        match &self.feed_forward {
            None => self.w_c.kronecker(&self.w_d),
            Some((v0, v1)) => self.w_c.kronecker(&identity(2)) * block_diag(v0, v1),
        }
    }

    pub fn measurement(&self) -> Result<JointMeasurement> {
        JointMeasurement::new(self.joint_matrix())
    }
}

/// `C#` as the sum of singular values of `Q`.
pub fn csharp(psi: &FourQubitPure) -> f64 {
    svd(&q_matrix(psi))
        .map(|s| s.sigma.iter().sum())
        .expect("Q of a valid state is finite")
}

/// `C#` as the fidelity between `rho_AB` and its spin flip.
pub fn csharp_fidelity(rho_ab: &CMatrix) -> Result<f64> {
    fidelity(rho_ab, &spin_flip_mixed(rho_ab)?)
}

/// `sum_k |(V^T Q V)_kk|`.
pub fn avg_concurrence(psi: &FourQubitPure, meas: &JointMeasurement) -> f64 {
    avg_concurrence_q(&q_matrix(psi), &meas.v)
}

pub(crate) fn avg_concurrence_q(q: &CMatrix, v: &CMatrix) -> f64 {
    (0..v.ncols())
        .map(|k| {
            let col = v.column(k);
            let qv = q * col;
            col.iter()
                .zip(qv.iter())
                .map(|(a, b)| a * b)
                .sum::<C64>()
                .norm()
        })
        .sum()
}

/// `(csharp - cflat) / cflat`; zero when both vanish and infinite when only `cflat` does.
pub fn relative_gain(csharp: f64, cflat: f64) -> f64 {
    const FLOOR: f64 = 1e-12;
    if cflat > FLOOR {
        (csharp - cflat) / cflat
    } else if csharp <= FLOOR {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn matrix_to_json(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| {
            (0..m.ncols())
                .map(|c| [m[(r, c)].re, m[(r, c)].im])
                .collect()
        })
        .collect()
}

pub fn matrix_from_json(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::StateFormat("ragged matrix".into()));
    }
    Ok(CMatrix::from_fn(n, m, |r, c| {
        C64::new(rows[r][c][0], rows[r][c][1])
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisJson {
    pub w_c: Vec<Vec<[f64; 2]>>,
    pub w_d: Vec<Vec<[f64; 2]>>,
}

impl BasisJson {
    pub fn from_basis(b: &LocalBasis) -> Self {
        Self {
            w_c: matrix_to_json(&b.w_c),
            w_d: matrix_to_json(&b.w_d),
        }
    }

    pub fn to_basis(&self) -> Result<LocalBasis> {
        Ok(LocalBasis::product(
            matrix_from_json(&self.w_c)?,
            matrix_from_json(&self.w_d)?,
        ))
    }
}

/// Summary of one state, serialized by `compute --json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub csharp: f64,
    pub cflat: f64,
    /// `None` when `cflat` vanishes while `csharp` does not.
    pub relative_gain: Option<f64>,
    pub rank_class: usize,
    pub verdict: Verdict,
    pub phi: Option<f64>,
    pub pattern_residual: f64,
    pub basis: BasisJson,
}

pub fn report(psi: &FourQubitPure) -> Result<Report> {
    let cs = csharp(psi);
    let cf = cflat(psi);
    let cert = locality_certificate(psi)?;
    let gain = relative_gain(cs, cf.value);
    Ok(Report {
        csharp: cs,
        cflat: cf.value,
        relative_gain: gain.is_finite().then_some(gain),
        rank_class: cert.rank_class,
        verdict: cert.verdict,
        phi: cert.phi,
        pattern_residual: cert.pattern_residual,
        basis: BasisJson::from_basis(&cf.basis),
    })
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::factor::takagi;
    use crate::linalg::{c64, max_abs_diff};
    use crate::state::{random_state, rho_ab, stream_rng, Fixture, Party};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn hadamard() -> CMatrix {
        let h = FRAC_1_SQRT_2;
        CMatrix::from_row_slice(2, 2, &[c64(h, 0.), c64(h, 0.), c64(h, 0.), c64(-h, 0.)])
    }

    #[test]
    fn csharp_of_fixtures() {
        assert!((csharp(&Fixture::Ghz.state()) - 1.0).abs() < 1e-12);
        assert!((csharp(&Fixture::Swap.state()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csharp_fidelity_examples() {
        let ghz = rho_ab(&Fixture::Ghz.state());
        assert!((csharp_fidelity(&ghz).unwrap() - 1.0).abs() < 1e-9);
        let mixed = identity(4).map(|z| z * 0.25);
        assert!((csharp_fidelity(&mixed).unwrap() - 1.0).abs() < 1e-9);
        let mut prod = CMatrix::zeros(4, 4);
        prod[(0, 0)] = c64(1.0, 0.0);
        assert!(csharp_fidelity(&prod).unwrap().abs() < 1e-9);
    }

    #[test]
    fn csharp_two_routes_agree() {
        for i in 0..300 {
            let psi = random_state(11, i);
            let a = csharp(&psi);
            let b = csharp_fidelity(&rho_ab(&psi)).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn avg_concurrence_examples() {
        let ghz = Fixture::Ghz.state();
        let h = hadamard();
        let m = JointMeasurement::new(h.kronecker(&h)).unwrap();
        assert!((avg_concurrence(&ghz, &m) - 1.0).abs() < 1e-12);

        let swap = Fixture::Swap.state();
        let m = JointMeasurement::new(identity(4)).unwrap();
        assert!(avg_concurrence(&swap, &m).abs() < 1e-15);

        for i in 0..100 {
            let psi = random_state(12, i);
            let t = takagi(&q_matrix(&psi)).unwrap();
            let m = JointMeasurement::new(t.u).unwrap();
            assert!((avg_concurrence(&psi, &m) - csharp(&psi)).abs() < 1e-10);
        }
        assert!(JointMeasurement::new(identity(4).map(|z| z * 2.0)).is_err());
    }

    #[test]
    fn joint_bound_on_random_unitaries() {
        let mut rng = stream_rng(5, 0);
        for i in 0..200 {
            let psi = random_state(13, i);
            let cs = csharp(&psi);
            for _ in 0..20 {
                let v = random_unitary(&mut rng, 4);
                let m = JointMeasurement::new(v).unwrap();
                assert!(avg_concurrence(&psi, &m) <= cs + 1e-9);
            }
        }
    }

    #[test]
    fn csharp_local_unitary_invariance() {
        let mut rng = stream_rng(6, 0);
        for i in 0..50 {
            let psi = random_state(14, i);
            let cs = csharp(&psi);
            for p in Party::ALL {
                let u = random_unitary(&mut rng, 2);
                let moved = psi.apply_local(p, &u).unwrap();
                assert!((csharp(&moved) - cs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn joint_matrix_forms() {
        let h = hadamard();
        let b = LocalBasis::product(h.clone(), identity(2));
        assert!(max_abs_diff(&b.joint_matrix(), &h.kronecker(&identity(2))) < 1e-15);
        let ff = LocalBasis {
            w_c: identity(2),
            w_d: identity(2),
            feed_forward: Some((h.clone(), identity(2))),
        };
        let j = ff.joint_matrix();
        assert!(max_abs_diff(&j, &block_diag(&h, &identity(2))) < 1e-15);
        assert!(ff.measurement().is_ok());
    }

    #[test]
    fn gain_edge_cases() {
        assert_eq!(relative_gain(0.0, 0.0), 0.0);
        assert!(relative_gain(1.0, 0.0).is_infinite());
        assert!((relative_gain(1.1, 1.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn report_round_trips_through_json() {
        let r = report(&Fixture::Ghz.state()).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(text.contains("\"always_local\""));
        let basis = back.basis.to_basis().unwrap();
        assert!(unitarity_defect(&basis.w_c) < 1e-9);
        let swap = report(&Fixture::Swap.state()).unwrap();
        assert_eq!(swap.relative_gain, None);
    }
}
