//! Deciding whether local measurements reach `C#`, and building them when they do.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{
    magic_basis, magic_to_local, ortho_phase_decompose, takagi, TakagiFactorization,
};
use crate::linalg::{c64, diag_from, svd, to_complex, CMatrix, RMatrix, C64};
use crate::optim::NelderMead;
use crate::state::{coeff_matrix, q_matrix, FourQubitPure, SpinFlipConstant};

use super::cflat::{communication_free_basis, feed_forward_basis, su2_from_angles};
use super::{BasisJson, LocalBasis};

/// Singular values of `Q` above this count toward the rank.
pub const RANK_TOL: f64 = 1e-9;
/// Largest accepted angular deviation (radians) from the phase pattern.
pub const PATTERN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    LocalSufficient,
    LocalInsufficient,
    AlwaysLocal,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::LocalSufficient => "local_sufficient",
            Verdict::LocalInsufficient => "local_insufficient",
            Verdict::AlwaysLocal => "always_local",
        }
    }
}

/// `X = phase * sqrt(YY)^dagger * omega * sqrt(Sigma) * P1 * F * P2^T * T`.
#[derive(Debug, Clone)]
pub struct PhaseDecomposition {
    /// Complex orthogonal: `omega^T omega = 1`.
    pub omega: CMatrix,
    pub sigma: Vec<f64>,
    pub p1: RMatrix,
    pub p2: RMatrix,
    /// Diagonal of `F`, unimodular with product 1.
    pub f: Vec<C64>,
    /// Global phase left over after normalizing `det(T U)`.
    pub phase: C64,
    /// Best-fit pattern angle, folded into `(0, pi/8]`; the corner class reports `pi/2`.
    pub phi: f64,
    pub pattern_residual: f64,
}

impl PhaseDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        let k = SpinFlipConstant::new();
        let roots: Vec<C64> = self
            .sigma
            .iter()
            .map(|&s| c64(s.max(0.0).sqrt(), 0.0))
            .collect();
        (k.sqrt_yy.adjoint() * &self.omega * diag_from(&roots))
            * to_complex(&self.p1)
            * diag_from(&self.f)
            * to_complex(&self.p2).transpose()
            * magic_basis()
            * self.phase
    }

    pub fn f_phases(&self) -> [f64; 4] {
        std::array::from_fn(|k| self.f[k].arg())
    }
}

#[derive(Debug, Clone)]
pub struct LocalityCertificate {
    pub rank_class: usize,
    pub sigma: Vec<f64>,
    /// Phases of `F`, rank 3 and 4 only.
    pub f_phases: Option<[f64; 4]>,
    pub phi: Option<f64>,
    pub pattern_residual: f64,
    pub verdict: Verdict,
    pub local_basis: Option<LocalBasis>,
}

/// JSON form of a [`LocalityCertificate`], written by `certify --json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub rank_class: usize,
    pub sigma: Vec<f64>,
    pub f_phases: Option<[f64; 4]>,
    pub phi: Option<f64>,
    pub pattern_residual: f64,
    pub verdict: Verdict,
    pub basis: Option<BasisJson>,
}

impl From<&LocalityCertificate> for CertificateReport {
    fn from(c: &LocalityCertificate) -> Self {
        Self {
            rank_class: c.rank_class,
            sigma: c.sigma.clone(),
            f_phases: c.f_phases,
            phi: c.phi,
            pattern_residual: c.pattern_residual,
            verdict: c.verdict,
            basis: c.local_basis.as_ref().map(BasisJson::from_basis),
        }
    }
}

/// Slot `j` of the pattern holds `sign * phi + offset` (mod pi).
const SLOTS: [(f64, f64); 4] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (-1.0, FRAC_PI_2),
    (1.0, -FRAC_PI_2),
];

#[derive(Debug, Clone, Copy)]
struct PatternFit {
    phi: f64,
    residual: f64,
    /// `assign[j]` is the index of the phase placed in slot `j`.
    assign: [usize; 4],
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&i| seen[i] = true);
                    if seen.iter().all(|&s| s) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Minimax fit of `phases` (mod pi) to `{phi, -phi, pi/2 - phi, phi - pi/2}`.
fn fit_pattern(phases: &[f64; 4]) -> PatternFit {
    let mut best = PatternFit {
        phi: 0.0,
        residual: f64::INFINITY,
        assign: [0, 1, 2, 3],
    };
    for assign in permutations4() {
        let mut est: [f64; 4] = std::array::from_fn(|j| {
            let (sign, offset) = SLOTS[j];
            (sign * (phases[assign[j]] - offset)).rem_euclid(PI)
        });
        est.sort_by(f64::total_cmp);
        // smallest arc on the circle of circumference pi covering all estimates
        let (mut gap, mut after) = (est[0] + PI - est[3], 0);
        for k in 0..3 {
            let g = est[k + 1] - est[k];
            if g > gap {
                gap = g;
                after = k + 1;
            }
        }
        let arc = PI - gap;
        if 0.5 * arc < best.residual {
            best = PatternFit {
                phi: (est[after] + 0.5 * arc).rem_euclid(PI),
                residual: 0.5 * arc,
                assign,
            };
        }
    }
    best
}

/// The phase set is unchanged under `phi -> -phi` and shifts by `pi/4` (the latter
/// also absorbs the branch of the global phase), so report the representative in
/// `(0, pi/8]`, or `pi/2` for the corner class.
fn fold_phi(phi: f64) -> f64 {
    let quarter = 0.25 * PI;
    let mut p = phi.rem_euclid(quarter);
    if p > 0.5 * quarter {
        p = quarter - p;
    }
    if p <= 1e-12 {
        FRAC_PI_2
    } else {
        p
    }
}

/// Complex orthogonal completion of the first `rank` columns of `omega`.
fn complete_complex_orthogonal(omega: &mut CMatrix, rank: usize) -> Result<()> {
    for k in rank..4 {
        let mut m = CMatrix::zeros(4, 4);
        for j in 0..k {
            for r in 0..4 {
                m[(j, r)] = omega[(r, j)];
            }
        }
        let v = svd(&m)?.v.column(3).into_owned();
        let norm2: C64 = v.iter().map(|z| z * z).sum();
        let scale = norm2.sqrt();
        if scale.norm() < 1e-12 {
            return Err(Error::Rank {
                rank,
                operation: "completing the complex orthogonal factor",
            });
        }
        for r in 0..4 {
            omega[(r, k)] = v[r] / scale;
        }
    }
    Ok(())
}

fn det4(m: &CMatrix) -> C64 {
    m.clone().determinant()
}

/// Builds the decomposition from a Takagi factor `u` of `Q`.
fn decompose_from(
    x: &CMatrix,
    u: &CMatrix,
    sigma: &[f64],
    rank: usize,
) -> Result<PhaseDecomposition> {
    let t = magic_basis();
    let w = &t * u;
    let c = det4(&w).powf(-0.25);
    let c = c / c.norm();
    let dec = ortho_phase_decompose(&w.map(|z| z * c))?;
    let (mut o3, mut o4) = (dec.o1, dec.o2);
    let mut e: Vec<C64> = dec
        .deltas
        .iter()
        .map(|&d| C64::from_polar(1.0, d))
        .collect();
    if o3.determinant() < 0.0 {
        o3.column_mut(0).neg_mut();
        e[0] = -e[0];
    }
    if o4.determinant() < 0.0 {
        o4.column_mut(0).neg_mut();
        e[0] = -e[0];
    }

    let f_phases: [f64; 4] = std::array::from_fn(|k| e[k].conj().arg());
    let fit = fit_pattern(&f_phases);
    let mut o7 = RMatrix::zeros(4, 4);
    for (j, &k) in fit.assign.iter().enumerate() {
        o7[(k, j)] = 1.0;
    }
    if o7.determinant() < 0.0 {
        o7.column_mut(0).neg_mut();
    }
    let f: Vec<C64> = fit.assign.iter().map(|&k| e[k].conj()).collect();

    let k = SpinFlipConstant::new();
    let y = &k.sqrt_yy * x * u;
    let mut omega = CMatrix::zeros(4, 4);
    for j in 0..rank {
        let s = sigma[j].sqrt();
        for r in 0..4 {
            omega[(r, j)] = y[(r, j)] / s;
        }
    }
    complete_complex_orthogonal(&mut omega, rank)?;

    Ok(PhaseDecomposition {
        omega,
        sigma: sigma.to_vec(),
        p1: &o4 * &o7,
        p2: &o3 * &o7,
        f,
        phase: c,
        phi: fold_phi(fit.phi),
        pattern_residual: fit.residual,
    })
}

fn rank_of(t: &TakagiFactorization) -> usize {
    t.rank(RANK_TOL)
}

/// Decomposes a rank-3 or rank-4 state.
///
/// For rank 3 the phase of the null Takagi vector is free and changes the phases of
/// `F`; it is chosen to minimize the pattern residual.
pub fn decompose_phases(psi: &FourQubitPure) -> Result<PhaseDecomposition> {
    let x = coeff_matrix(psi);
    let tak = takagi(&q_matrix(psi))?;
    let rank = rank_of(&tak);
    if rank < 3 {
        return Err(Error::Rank {
            rank,
            operation: "the orthogonal-phase state decomposition",
        });
    }
    if rank == 4 {
        return decompose_from(&x, &tak.u, &tak.sigma, 4);
    }

    let rotated = |psi_angle: f64| {
        let mut u = tak.u.clone();
        let ph = C64::from_polar(1.0, psi_angle);
        for r in 0..4 {
            u[(r, 3)] *= ph;
        }
        u
    };
    let residual = |a: f64| {
        decompose_from(&x, &rotated(a), &tak.sigma, 3)
            .map(|d| d.pattern_residual)
            .unwrap_or(f64::INFINITY)
    };
    const GRID: usize = 128;
    let mut grid: Vec<(f64, f64)> = (0..GRID)
        .map(|i| {
            let a = TAU * i as f64 / GRID as f64;
            (residual(a), a)
        })
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nm = NelderMead {
        step: TAU / GRID as f64,
        xtol: 1e-12,
        max_evals: 400,
    };
    let mut best = grid[0];
    for &(_, a0) in grid.iter().take(3) {
        let m = nm.minimize(|a| residual(a[0]), &[a0]);
        if m.value < best.0 {
            best = (m.value, m.x[0]);
        }
    }
    decompose_from(&x, &rotated(best.1), &tak.sigma, 3)
}

/// Reads the local bases off `P2` once the phase pattern holds.
pub fn extract_local_basis(dec: &PhaseDecomposition) -> Result<LocalBasis> {
    if dec.pattern_residual > PATTERN_TOL {
        return Err(Error::NotLocal {
            residual: dec.pattern_residual,
            threshold: PATTERN_TOL,
        });
    }
    let (u1, u2) = magic_to_local(&dec.p2)?;
    Ok(LocalBasis::product(u1, u2))
}

/// Bloch vector of the traceless Hermitian 2x2 matrix `h`.
fn bloch(h: &CMatrix) -> [f64; 3] {
    [
        h[(0, 1)].re,
        -h[(0, 1)].im,
        0.5 * (h[(0, 0)].re - h[(1, 1)].re),
    ]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Any unit vector orthogonal to `h`.
fn perpendicular(h: [f64; 3]) -> [f64; 3] {
    let axis = if h[0].abs() <= h[1].abs() && h[0].abs() <= h[2].abs() {
        [1.0, 0.0, 0.0]
    } else if h[1].abs() <= h[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let n = cross(h, axis);
    let l = norm3(n);
    [n[0] / l, n[1] / l, n[2] / l]
}

/// Local feed-forward basis reaching `C#` for states with `rank(Sigma) <= 2`.
///
/// With optimal kets `a`, `b` spanning the support of `Q`, C measures in a basis
/// `{c0, c1}` for which D's conditional states of `a` and `b` are orthogonal. That
/// needs `<c_i| A B^dagger |c_i> = 0`, i.e. a Bloch vector orthogonal to those of the
/// Hermitian and anti-Hermitian parts of `A B^dagger`.
pub fn rank2_local_basis(psi: &FourQubitPure) -> Result<LocalBasis> {
    let tak = takagi(&q_matrix(psi))?;
    let rank = rank_of(&tak);
    if rank > 2 {
        return Err(Error::Rank {
            rank,
            operation: "the rank-2 local construction",
        });
    }
    let reshape = |k: usize| CMatrix::from_fn(2, 2, |c, d| tak.u[(2 * c + d, k)].conj());
    let (a, b) = (reshape(0), reshape(1));
    let m = &a * b.adjoint();
    let h1 = (&m + m.adjoint()).map(|z| z * 0.5);
    let h2 = (&m - m.adjoint()).map(|z| z * c64(0.0, -0.5));
    let (b1, b2) = (bloch(&h1), bloch(&h2));
    let scale = norm3(b1).max(norm3(b2));
    let n = if scale < 1e-14 {
        [0.0, 0.0, 1.0]
    } else {
        let c = cross(b1, b2);
        let l = norm3(c);
        if l > 1e-10 * scale * scale {
            [c[0] / l, c[1] / l, c[2] / l]
        } else if norm3(b1) >= norm3(b2) {
            perpendicular(b1)
        } else {
            perpendicular(b2)
        }
    };
    let theta = n[2].clamp(-1.0, 1.0).acos();
    let phi = n[1].atan2(n[0]);
    let kets = su2_from_angles(theta, phi);
    feed_forward_basis(psi, &kets.map(|z| z.conj()))
}

pub fn locality_certificate(psi: &FourQubitPure) -> Result<LocalityCertificate> {
    let tak = takagi(&q_matrix(psi))?;
    let rank = rank_of(&tak);
    if rank <= 2 {
        let basis = if rank == 2 {
            let ff = rank2_local_basis(psi)?;
            communication_free_basis(psi, &ff.w_c)?
        } else {
            LocalBasis::standard()
        };
        return Ok(LocalityCertificate {
            rank_class: rank,
            sigma: tak.sigma,
            f_phases: None,
            phi: None,
            pattern_residual: 0.0,
            verdict: Verdict::AlwaysLocal,
            local_basis: Some(basis),
        });
    }
    let dec = decompose_phases(psi)?;
    let sufficient = dec.pattern_residual <= PATTERN_TOL;
    Ok(LocalityCertificate {
        rank_class: rank,
        sigma: tak.sigma,
        f_phases: Some(dec.f_phases()),
        phi: Some(dec.phi),
        pattern_residual: dec.pattern_residual,
        verdict: if sufficient {
            Verdict::LocalSufficient
        } else {
            Verdict::LocalInsufficient
        },
        local_basis: if sufficient {
            Some(extract_local_basis(&dec)?)
        } else {
            None
        },
    })
}

/// Builds the state with the given factors and `F` on the phase pattern for `phi`.
///
/// `omega` should be complex orthogonal and `p1`, `p2` real orthogonal; the result
/// is normalized.
pub fn forward_pattern_state(
    omega: &CMatrix,
    sigma: &[f64; 4],
    p1: &RMatrix,
    p2: &RMatrix,
    phi: f64,
) -> Result<FourQubitPure> {
    let k = SpinFlipConstant::new();
    let roots: Vec<C64> = sigma.iter().map(|&s| c64(s.sqrt(), 0.0)).collect();
    let f: Vec<C64> = SLOTS
        .iter()
        .map(|&(sign, offset)| C64::from_polar(1.0, sign * phi + offset))
        .collect();
    let x = k.sqrt_yy.adjoint()
        * omega
        * diag_from(&roots)
        * to_complex(p1)
        * diag_from(&f)
        * to_complex(p2).transpose()
        * magic_basis();
    let amps: [C64; 16] = std::array::from_fn(|i| x[(i / 4, i % 4)]);
    FourQubitPure::normalized(amps)
}
