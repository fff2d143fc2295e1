//! Local von Neumann measurements: C measures first in basis `W`, D responds.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::factor::{ortho_phase_decompose, takagi, UNITARY_TOL};
use crate::linalg::{
    c64, ensure_finite, ensure_shape, nuclear_norm_2x2_raw, to_complex, unitarity_defect, CMatrix,
    C64,
};
use crate::optim::NelderMead;
use crate::state::{permute_parties, q_matrix, FourQubitPure, Party, Permutation};

use super::LocalBasis;

/// `[[cos(t/2), -e^{-i p} sin(t/2)], [e^{i p} sin(t/2), cos(t/2)]]`.
pub fn su2_from_angles(theta: f64, phi: f64) -> CMatrix {
    let [a, b, c, d] = angles_to_entries(theta, phi);
    CMatrix::from_row_slice(2, 2, &[a, c, b, d])
}

/// Entries `(w00, w10, w01, w11)` of [`su2_from_angles`].
#[inline]
fn angles_to_entries(theta: f64, phi: f64) -> [C64; 4] {
    let (s, c) = (0.5 * theta).sin_cos();
    let e = C64::from_polar(1.0, phi);
    [c64(c, 0.0), e * s, -e.conj() * s, c64(c, 0.0)]
}

/// The 2x2 blocks `Q_00`, `Q_01 + Q_10`, `Q_11` of `Q`, row-major.
pub(crate) struct Blocks {
    q00: [C64; 4],
    s: [C64; 4],
    q11: [C64; 4],
}

impl Blocks {
    pub(crate) fn new(q: &CMatrix) -> Self {
        let blk = |a: usize, b: usize| {
            [
                q[(2 * a, 2 * b)],
                q[(2 * a, 2 * b + 1)],
                q[(2 * a + 1, 2 * b)],
                q[(2 * a + 1, 2 * b + 1)],
            ]
        };
        let (q01, q10) = (blk(0, 1), blk(1, 0));
        Self {
            q00: blk(0, 0),
            s: [
                q01[0] + q10[0],
                q01[1] + q10[1],
                q01[2] + q10[2],
                q01[3] + q10[3],
            ],
            q11: blk(1, 1),
        }
    }

    /// Nuclear norm of `x^2 Q_00 + x y (Q_01 + Q_10) + y^2 Q_11`.
    #[inline]
    pub(crate) fn block_norm(&self, x: C64, y: C64) -> f64 {
        let (xx, xy, yy) = (x * x, x * y, y * y);
        let m: [C64; 4] =
            std::array::from_fn(|k| xx * self.q00[k] + xy * self.s[k] + yy * self.q11[k]);
        nuclear_norm_2x2_raw(m[0], m[1], m[2], m[3])
    }

    /// `|Q_1|_* + |Q_2|_*` for the columns `(w00, w10)` and `(w01, w11)` of `W`.
    #[inline]
    fn value(&self, w: [C64; 4]) -> f64 {
        self.block_norm(w[0], w[1]) + self.block_norm(w[2], w[3])
    }
}

fn check_qubit_unitary(w: &CMatrix) -> Result<()> {
    ensure_shape(w, 2, "a 2x2 unitary")?;
    ensure_finite(w, "measurement basis")?;
    let defect = unitarity_defect(w);
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary { defect });
    }
    Ok(())
}

/// Best average concurrence when C measures in basis `w` and D answers optimally.
pub fn cflat_given_w(psi: &FourQubitPure, w: &CMatrix) -> Result<f64> {
    check_qubit_unitary(w)?;
    let b = Blocks::new(&q_matrix(psi));
    Ok(b.value([w[(0, 0)], w[(1, 0)], w[(0, 1)], w[(1, 1)]]))
}

/// Diagonal blocks of `(W^T x 1) Q (W x 1)`.
fn conditional_blocks(psi: &FourQubitPure, w: &CMatrix) -> (CMatrix, CMatrix) {
    let lift = w.kronecker(&crate::linalg::identity(2));
    let m = lift.transpose() * q_matrix(psi) * lift;
    let sym = (&m + m.transpose()).map(|z| z * 0.5);
    (
        sym.view((0, 0), (2, 2)).into_owned(),
        sym.view((2, 2), (2, 2)).into_owned(),
    )
}

/// C measures in `w`; D picks the Takagi basis of the block selected by C's outcome.
pub fn feed_forward_basis(psi: &FourQubitPure, w: &CMatrix) -> Result<LocalBasis> {
    check_qubit_unitary(w)?;
    let (q1, q2) = conditional_blocks(psi, w);
    let v1 = takagi(&q1)?.u;
    let v2 = takagi(&q2)?.u;
    Ok(LocalBasis {
        w_c: w.clone(),
        w_d: v1.clone(),
        feed_forward: Some((v1, v2)),
    })
}

/// A single basis for D that does as well as the feed-forward response to `w`.
///
/// Each conditional optimum is preserved by `V_i -> V_i O D` with real orthogonal `O`
/// and diagonal phases `D`; decomposing `V_2^dagger V_1 = O_1 E O_2^T` gives the
/// common choice `V_1 O_2 = V_2 O_1 E`.
pub fn communication_free_basis(psi: &FourQubitPure, w: &CMatrix) -> Result<LocalBasis> {
    let ff = feed_forward_basis(psi, w)?;
    let (v1, v2) = ff
        .feed_forward
        .expect("feed-forward basis carries both responses");
    let dec = ortho_phase_decompose(&(v2.adjoint() * &v1))?;
    let w_d = v1 * to_complex(&dec.o2);
    Ok(LocalBasis::product(w.clone(), w_d))
}

/// Search budget for [`cflat_with`].
#[derive(Debug, Clone, Copy)]
pub struct CflatOptions {
    pub grid_theta: usize,
    pub grid_phi: usize,
    /// Number of best grid cells refined by Nelder-Mead.
    pub starts: usize,
    pub xtol: f64,
    pub max_evals: usize,
}

impl Default for CflatOptions {
    fn default() -> Self {
        Self {
            grid_theta: 32,
            grid_phi: 64,
            starts: 5,
            xtol: 1e-9,
            max_evals: 600,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CflatResult {
    pub value: f64,
    /// Product basis attaining `value`.
    pub basis: LocalBasis,
    /// Optimum with C measuring first.
    pub c_first: f64,
    /// Optimum with D measuring first.
    pub d_first: f64,
    /// The assistant that measures first in the returned optimum.
    pub first: Party,
}

/// Maximizes [`cflat_given_w`] over `su2_from_angles(theta, phi)`.
fn optimize_first_basis(q: &CMatrix, opts: &CflatOptions) -> (f64, f64, f64) {
    let blocks = Blocks::new(q);
    let f = |theta: f64, phi: f64| blocks.value(angles_to_entries(theta, phi));
    let dt = PI / opts.grid_theta as f64;
    let dp = TAU / opts.grid_phi as f64;

    let mut cells: Vec<(f64, f64, f64)> = Vec::with_capacity(opts.grid_theta * opts.grid_phi);
    for i in 0..opts.grid_theta {
        let theta = (i as f64 + 0.5) * dt;
        for j in 0..opts.grid_phi {
            let phi = (j as f64 + 0.5) * dp;
            cells.push((f(theta, phi), theta, phi));
        }
    }
    // stable: ties keep grid order
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));

    let nm = NelderMead {
        step: 0.5 * dt,
        xtol: opts.xtol,
        max_evals: opts.max_evals,
    };
    let mut best = cells[0];
    for &(_, t0, p0) in cells.iter().take(opts.starts) {
        let m = nm.minimize(|x| -f(x[0], x[1]), &[t0, p0]);
        if -m.value > best.0 {
            best = (-m.value, m.x[0], m.x[1]);
        }
    }
    best
}

pub fn cflat(psi: &FourQubitPure) -> CflatResult {
    cflat_with(psi, &CflatOptions::default())
}

pub fn cflat_with(psi: &FourQubitPure, opts: &CflatOptions) -> CflatResult {
    let swap = Permutation::new([Party::A, Party::B, Party::D, Party::C]).expect("valid");
    let flipped = permute_parties(psi, swap);
    let (vc, tc, pc) = optimize_first_basis(&q_matrix(psi), opts);
    let (vd, td, pd) = optimize_first_basis(&q_matrix(&flipped), opts);

    let (value, first, basis) = if vc >= vd {
        let b = communication_free_basis(psi, &su2_from_angles(tc, pc))
            .expect("parametrized basis is unitary");
        (vc, Party::C, b)
    } else {
        let b = communication_free_basis(&flipped, &su2_from_angles(td, pd))
            .expect("parametrized basis is unitary");
        (vd, Party::D, LocalBasis::product(b.w_d, b.w_c))
    };
    CflatResult {
        value,
        basis,
        c_first: vc,
        d_first: vd,
        first,
    }
}
