//! Four-outcome POVMs on the first assistant, followed by an optimal von Neumann
//! measurement on the second.
//!
//! Searches return lower bounds on the POVM-assisted concurrence: the optimizer is a
//! multi-start simplex search with no guarantee of reaching the global optimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assist::{cflat, csharp_fidelity, Blocks};
use crate::error::{Error, Result};
use crate::linalg::{
    c64, ensure_finite, ensure_shape, herm_eig, hermiticity_defect, identity,
    matrix_sqrt_psd_with_tol, max_abs_diff, CMatrix, C64,
};
use crate::optim::NelderMead;
use crate::state::{
    permute_parties, q_matrix, rho_ab, stream_rng, FourQubitPure, Party, Permutation,
};

/// Slack for positivity and completeness of POVM elements.
pub const POVM_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Povm4 {
    elements: [CMatrix; 4],
}

impl Povm4 {
    pub fn new(elements: [CMatrix; 4]) -> Result<Self> {
        let mut total = CMatrix::zeros(2, 2);
        for (k, e) in elements.iter().enumerate() {
            ensure_shape(e, 2, "a 2x2 POVM element")?;
            ensure_finite(e, "POVM element")?;
            let asym = hermiticity_defect(e);
            if asym > POVM_TOL {
                return Err(Error::InvalidPovm(format!(
                    "element {k} is not Hermitian (defect {asym:.3e})"
                )));
            }
            let min = herm_eig(&(e + e.adjoint()).map(|z| z * 0.5))?.values[1];
            if min < -POVM_TOL {
                return Err(Error::InvalidPovm(format!(
                    "element {k} has eigenvalue {min:.3e}"
                )));
            }
            total += e;
        }
        let defect = max_abs_diff(&total, &identity(2));
        if defect > POVM_TOL {
            return Err(Error::InvalidPovm(format!(
                "elements sum to identity only within {defect:.3e}"
            )));
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[CMatrix; 4] {
        &self.elements
    }

    /// Rank-one elements `E_k = a_k^dagger a_k` from the rows `a_k` of a 4x2 isometry.
    pub fn from_isometry(a: &CMatrix) -> Result<Self> {
        if a.nrows() != 4 || a.ncols() != 2 {
            return Err(Error::Shape {
                expected: "a 4x2 isometry",
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        Self::new(std::array::from_fn(|k| {
            let row = a.row(k);
            row.adjoint() * row
        }))
    }

    /// Projectors onto the kets `conj(w[:, j])`, padded with two zero elements.
    pub fn projective(w: &CMatrix) -> Result<Self> {
        ensure_shape(w, 2, "a 2x2 unitary")?;
        let mut a = CMatrix::zeros(4, 2);
        a.view_mut((0, 0), (2, 2)).copy_from(&w.transpose());
        Self::from_isometry(&a)
    }

    /// Four copies of `1/4`: no information is extracted.
    pub fn trivial() -> Self {
        let quarter = identity(2).map(|z| z * 0.25);
        Self {
            elements: std::array::from_fn(|_| quarter.clone()),
        }
    }
}

/// Outcome of the first assistant's POVM.
#[derive(Debug, Clone)]
pub struct Conditional {
    pub prob: f64,
    /// Post-measurement state (Kraus operator `sqrt(E_k)`), `None` for a null outcome.
    pub state: Option<FourQubitPure>,
}

impl Conditional {
    pub fn rho_ab(&self) -> Option<CMatrix> {
        self.state.as_ref().map(rho_ab)
    }
}

/// Relabels the parties so the first assistant sits in slot C.
fn first_in_c(psi: &FourQubitPure, party: Party) -> Result<FourQubitPure> {
    match party {
        Party::C => Ok(*psi),
        Party::D => Ok(permute_parties(
            psi,
            Permutation::new([Party::A, Party::B, Party::D, Party::C])?,
        )),
        other => Err(Error::InvalidParty(other.as_char())),
    }
}

fn kraus_on_c(psi: &FourQubitPure, k: &CMatrix) -> [C64; 16] {
    let amps = psi.amplitudes();
    std::array::from_fn(|i| {
        let b = (i >> 1) & 1;
        let base = i & !2;
        k[(b, 0)] * amps[base] + k[(b, 1)] * amps[base | 2]
    })
}

pub fn conditional_states(
    psi: &FourQubitPure,
    povm: &Povm4,
    party: Party,
) -> Result<Vec<Conditional>> {
    let psi = first_in_c(psi, party)?;
    povm.elements
        .iter()
        .map(|e| {
            let k = matrix_sqrt_psd_with_tol(e, POVM_TOL)?;
            let amps = kraus_on_c(&psi, &k);
            let prob: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
            let state = if prob > 1e-300 {
                Some(FourQubitPure::normalized(amps)?)
            } else {
                None
            };
            Ok(Conditional { prob, state })
        })
        .collect()
}

/// `sum_k p_k F(rho_k, rho~_k)` over the conditional keeper states.
pub fn povm_value(psi: &FourQubitPure, povm: &Povm4, party: Party) -> Result<f64> {
    let mut total = 0.0;
    for cond in conditional_states(psi, povm, party)? {
        if let Some(rho) = cond.rho_ab() {
            total += cond.prob * csharp_fidelity(&rho)?;
        }
    }
    Ok(total)
}

/// Twelve real coordinates: per row, a real first entry and a complex second entry.
const N_PARAMS: usize = 12;

/// Polar retraction of the 4x2 matrix encoded by `p` onto the isometries.
fn rows_from_params(p: &[f64]) -> Option<[[C64; 2]; 4]> {
    let z: [[C64; 2]; 4] =
        std::array::from_fn(|k| [c64(p[3 * k], 0.0), c64(p[3 * k + 1], p[3 * k + 2])]);
    let s00: f64 = z.iter().map(|r| r[0].norm_sqr()).sum();
    let s11: f64 = z.iter().map(|r| r[1].norm_sqr()).sum();
    let s01: C64 = z.iter().map(|r| r[0].conj() * r[1]).sum();
    let det = s00 * s11 - s01.norm_sqr();
    let tr = s00 + s11;
    if det.is_nan() || det <= 1e-14 * tr * tr {
        return None;
    }
    // S^{-1/2} = t (S + sqrt(det) I)^{-1} with t = sqrt(tr + 2 sqrt(det))
    let delta = det.sqrt();
    let t = (tr + 2.0 * delta).sqrt();
    let (a, d) = (s00 + delta, s11 + delta);
    let shifted = a * d - s01.norm_sqr();
    let f = t / shifted;
    let r = [
        [c64(d * f, 0.0), -s01 * f],
        [-s01.conj() * f, c64(a * f, 0.0)],
    ];
    Some(std::array::from_fn(|k| {
        [
            z[k][0] * r[0][0] + z[k][1] * r[1][0],
            z[k][0] * r[0][1] + z[k][1] * r[1][1],
        ]
    }))
}

fn params_from_rows(rows: &[[C64; 2]; 4]) -> Vec<f64> {
    let mut p = Vec::with_capacity(N_PARAMS);
    for r in rows {
        let phase = if r[0].norm() > 0.0 {
            r[0].conj() / r[0].norm()
        } else {
            c64(1.0, 0.0)
        };
        let (x, y) = (r[0] * phase, r[1] * phase);
        p.extend_from_slice(&[x.re, y.re, y.im]);
    }
    p
}

fn rank_one_value(blocks: &Blocks, rows: &[[C64; 2]; 4]) -> f64 {
    rows.iter().map(|a| blocks.block_norm(a[0], a[1])).sum()
}

fn isometry(rows: &[[C64; 2]; 4]) -> CMatrix {
    CMatrix::from_fn(4, 2, |r, c| rows[r][c])
}

/// Best POVM found by [`povm_optimize`].
#[derive(Debug, Clone)]
pub struct PovmSearch {
    /// Lower bound on the POVM-assisted concurrence.
    pub value: f64,
    pub povm: Povm4,
    /// The assistant applying the POVM; the other responds projectively.
    pub party: Party,
    /// Local von Neumann optimum used as the baseline start.
    pub cflat: f64,
    pub restarts: usize,
}

/// Multi-start search over rank-one four-outcome POVMs on `party`.
///
/// The pool holds the projective optimum plus `restarts` random starts, each on its
/// own RNG stream, so the result depends only on `(seed, restarts)`.
pub fn povm_optimize(
    psi: &FourQubitPure,
    party: Party,
    restarts: usize,
    seed: u64,
) -> Result<PovmSearch> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    let moved = first_in_c(psi, party)?;
    let base = cflat(psi);
    let w = match party {
        Party::C => base.basis.w_c.clone(),
        _ => base.basis.w_d.clone(),
    };
    let baseline: [[C64; 2]; 4] = std::array::from_fn(|k| {
        if k < 2 {
            [w[(0, k)], w[(1, k)]]
        } else {
            [c64(0.0, 0.0); 2]
        }
    });
    let blocks = Blocks::new(&q_matrix(&moved));
    let objective = |p: &[f64]| match rows_from_params(p) {
        Some(rows) => -rank_one_value(&blocks, &rows),
        None => f64::INFINITY,
    };

    let runs: Vec<(f64, [[C64; 2]; 4])> = (0..=restarts)
        .into_par_iter()
        .map(|r| {
            let (start, step) = if r == 0 {
                (params_from_rows(&baseline), 0.05)
            } else {
                let mut rng = stream_rng(seed, r as u64);
                let p: Vec<f64> = (0..N_PARAMS)
                    .map(|_| {
                        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
                    })
                    .collect();
                (p, 0.3)
            };
            let coarse = NelderMead {
                step,
                xtol: 1e-10,
                max_evals: 6000,
            }
            .minimize(objective, &start);
            let fine = NelderMead {
                step: 0.02,
                xtol: 1e-11,
                max_evals: 4000,
            }
            .minimize(objective, &coarse.x);
            let x = if fine.value <= coarse.value {
                fine.x
            } else {
                coarse.x
            };
            let rows = rows_from_params(&x).unwrap_or(baseline);
            (rank_one_value(&blocks, &rows), rows)
        })
        .collect();

    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.0 > runs[best].0 {
            best = i;
        }
    }
    let (value, rows) = runs[best];
    Ok(PovmSearch {
        value,
        povm: Povm4::from_isometry(&isometry(&rows))?,
        party,
        cflat: base.value,
        restarts,
    })
}

/// JSON form of a [`PovmSearch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmReport {
    /// Measurement order, first assistant first, e.g. `"CD"`.
    pub order: String,
    pub value: f64,
    pub cflat: f64,
    /// `value - cflat`.
    pub gap: f64,
    pub restarts: usize,
    pub elements: Vec<Vec<Vec<[f64; 2]>>>,
}

impl PovmReport {
    pub fn from_search(s: &PovmSearch) -> Self {
        let second = if s.party == Party::C {
            Party::D
        } else {
            Party::C
        };
        Self {
            order: format!("{}{}", s.party, second),
            value: s.value,
            cflat: s.cflat,
            gap: s.value - s.cflat,
            restarts: s.restarts,
            elements: s
                .povm
                .elements
                .iter()
                .map(crate::assist::matrix_to_json)
                .collect(),
        }
    }

    pub fn povm(&self) -> Result<Povm4> {
        if self.elements.len() != 4 {
            return Err(Error::InvalidPovm(format!(
                "{} elements, expected 4",
                self.elements.len()
            )));
        }
        let mats = self
            .elements
            .iter()
            .map(|e| crate::assist::matrix_from_json(e))
            .collect::<Result<Vec<_>>>()?;
        let arr: [CMatrix; 4] = mats.try_into().expect("length checked");
        Povm4::new(arr)
    }
}
