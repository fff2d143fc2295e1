//! Four-qubit pure states: construction, fixtures, derived matrices, party
//! permutations and seeded sampling.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, C64};

/// Accepted deviation of `sum |c_i|^2` from 1 for constructed states.
pub const NORM_TOL: f64 = 1e-10;
/// Parsed state files may deviate this much from unit norm before rejection.
pub const FILE_NORM_TOL: f64 = 1e-6;

/// Amplitudes `c[8 bA + 4 bB + 2 bC + bD]` of a normalized state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourQubitPure {
    amps: [C64; 16],
}

impl FourQubitPure {
    pub fn new(amps: [C64; 16]) -> Result<Self> {
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { what: "amplitudes" });
        }
        let norm = norm_of(&amps);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amps })
    }

    /// Scales nonzero finite amplitudes to unit norm.
    pub fn normalized(amps: [C64; 16]) -> Result<Self> {
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { what: "amplitudes" });
        }
        let norm = norm_of(&amps);
        if norm == 0.0 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self {
            amps: amps.map(|z| z / norm),
        })
    }

    pub fn amplitudes(&self) -> &[C64; 16] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_of(&self.amps)
    }

    /// The computational basis state `|bA bB bC bD>`.
    pub fn basis(index: usize) -> Self {
        let mut amps = [c64(0.0, 0.0); 16];
        amps[index & 15] = c64(1.0, 0.0);
        Self { amps }
    }

    /// Applies a single-qubit unitary to one party.
    pub fn apply_local(&self, party: Party, u: &CMatrix) -> Result<Self> {
        if u.nrows() != 2 || u.ncols() != 2 {
            return Err(Error::Shape {
                expected: "a 2x2 unitary",
                rows: u.nrows(),
                cols: u.ncols(),
            });
        }
        let bit = 3 - party.index();
        let mut out = [c64(0.0, 0.0); 16];
        for (i, slot) in out.iter_mut().enumerate() {
            let b = (i >> bit) & 1;
            let base = i & !(1 << bit);
            *slot = u[(b, 0)] * self.amps[base] + u[(b, 1)] * self.amps[base | (1 << bit)];
        }
        Self::normalized(out)
    }
}

fn norm_of(amps: &[C64]) -> f64 {
    amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
    C,
    D,
}

impl Party {
    pub const ALL: [Party; 4] = [Party::A, Party::B, Party::C, Party::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Party::A),
            'B' => Some(Party::B),
            'C' => Some(Party::C),
            'D' => Some(Party::D),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        ['A', 'B', 'C', 'D'][self.index()]
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// `sigma_y x sigma_y` and its symmetric square root.
#[derive(Debug, Clone)]
pub struct SpinFlipConstant {
    pub yy: CMatrix,
    pub sqrt_yy: CMatrix,
}

impl SpinFlipConstant {
    pub fn new() -> Self {
        let o = c64(0.0, 0.0);
        let one = c64(1.0, 0.0);
        let yy = CMatrix::from_row_slice(
            4,
            4,
            &[o, o, o, -one, o, o, one, o, o, one, o, o, -one, o, o, o],
        );
        let p = c64(0.5, 0.5);
        let m = c64(-0.5, 0.5);
        let n = c64(0.5, -0.5);
        let sqrt_yy =
            CMatrix::from_row_slice(4, 4, &[p, o, o, m, o, p, n, o, o, n, p, o, m, o, o, p]);
        Self { yy, sqrt_yy }
    }
}

impl Default for SpinFlipConstant {
    fn default() -> Self {
        Self::new()
    }
}

/// `sigma_y x sigma_y`.
pub fn yy() -> CMatrix {
    SpinFlipConstant::new().yy
}

/// `X[(ab, cd)] = c[4 ab + cd]`.
pub fn coeff_matrix(psi: &FourQubitPure) -> CMatrix {
    CMatrix::from_fn(4, 4, |r, c| psi.amps[4 * r + c])
}

pub fn rho_ab(psi: &FourQubitPure) -> CMatrix {
    let x = coeff_matrix(psi);
    &x * x.adjoint()
}

pub fn rho_cd(psi: &FourQubitPure) -> CMatrix {
    let x = coeff_matrix(psi);
    x.transpose() * x.map(|z| z.conj())
}

/// `Q = X^T (sigma_y x sigma_y) X`, complex symmetric.
pub fn q_matrix(psi: &FourQubitPure) -> CMatrix {
    let x = coeff_matrix(psi);
    let q = x.transpose() * yy() * &x;
    (&q + q.transpose()).map(|z| z * 0.5)
}

/// `(sigma_y x sigma_y) conj(phi)` for a two-qubit vector.
pub fn spin_flip_pure(phi: &[C64; 4]) -> [C64; 4] {
    [-phi[3].conj(), phi[2].conj(), phi[1].conj(), -phi[0].conj()]
}

/// `(sigma_y x sigma_y) conj(rho) (sigma_y x sigma_y)`.
pub fn spin_flip_mixed(rho: &CMatrix) -> Result<CMatrix> {
    crate::linalg::ensure_shape(rho, 4, "a 4x4 two-qubit matrix")?;
    let y = yy();
    Ok(&y * rho.map(|z| z.conj()) * &y)
}

/// `2 |ad - bc|` for a normalized two-qubit vector `(a, b, c, d)`.
pub fn concurrence_pure(phi: &[C64; 4]) -> Result<f64> {
    let norm = norm_of(phi);
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(2.0 * (phi[0] * phi[3] - phi[1] * phi[2]).norm())
}

/// Party relabelling: slot `k` of the result holds the qubit of party `perm[k]` of
/// the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Permutation([Party; 4]);

impl Permutation {
    pub fn new(perm: [Party; 4]) -> Result<Self> {
        let mut seen = [false; 4];
        for p in perm {
            if seen[p.index()] {
                return Err(Error::InvalidPermutation(format!(
                    "party {p} appears twice"
                )));
            }
            seen[p.index()] = true;
        }
        Ok(Self(perm))
    }

    pub fn identity() -> Self {
        Self(Party::ALL)
    }

    /// Puts the two named keepers in slots A, B and the others, in order, in C, D.
    pub fn keepers(first: Party, second: Party) -> Result<Self> {
        if first == second {
            return Err(Error::InvalidPermutation(format!(
                "keeper pair {first}{second} repeats a party"
            )));
        }
        let mut order = vec![first, second];
        order.extend(
            Party::ALL
                .iter()
                .copied()
                .filter(|p| *p != first && *p != second),
        );
        Self::new([order[0], order[1], order[2], order[3]])
    }

    pub fn inverse(&self) -> Self {
        let mut inv = Party::ALL;
        for (slot, p) in self.0.iter().enumerate() {
            inv[p.index()] = Party::ALL[slot];
        }
        Self(inv)
    }

    pub fn parties(&self) -> [Party; 4] {
        self.0
    }
}

impl FromStr for Permutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parties: Vec<Party> = s
            .chars()
            .map(|c| {
                Party::from_char(c)
                    .ok_or_else(|| Error::InvalidPermutation(format!("unknown party `{c}`")))
            })
            .collect::<Result<_>>()?;
        if parties.len() != 4 {
            return Err(Error::InvalidPermutation(format!(
                "expected four parties, got `{s}`"
            )));
        }
        Self::new([parties[0], parties[1], parties[2], parties[3]])
    }
}

pub fn permute_parties(psi: &FourQubitPure, perm: Permutation) -> FourQubitPure {
    let mut out = [c64(0.0, 0.0); 16];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut src = 0;
        for (k, p) in perm.0.iter().enumerate() {
            let bit = (i >> (3 - k)) & 1;
            src |= bit << (3 - p.index());
        }
        *slot = psi.amps[src];
    }
    FourQubitPure { amps: out }
}

/// Generator for sample `index` of a campaign seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// How random amplitudes are drawn before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Complex Gaussian amplitudes: uniform on the unit sphere of C^16.
    Haar,
    /// A real Gaussian magnitude times an independent uniform phase.
    #[default]
    GaussianPhase,
}

impl Sampler {
    pub fn sample(self, seed: u64, index: u64) -> FourQubitPure {
        let mut rng = stream_rng(seed, index);
        self.sample_with(&mut rng)
    }

    pub fn sample_with(self, rng: &mut impl Rng) -> FourQubitPure {
        loop {
            let mut amps = [c64(0.0, 0.0); 16];
            for a in amps.iter_mut() {
                *a = match self {
                    Sampler::Haar => c64(rng.sample(StandardNormal), rng.sample(StandardNormal)),
                    Sampler::GaussianPhase => {
                        let r: f64 = rng.sample(StandardNormal);
                        C64::from_polar(r, rng.random::<f64>() * TAU)
                    }
                };
            }
            if let Ok(psi) = FourQubitPure::normalized(amps) {
                return psi;
            }
        }
    }
}

impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Sampler::Haar),
            "gaussian-phase" => Ok(Sampler::GaussianPhase),
            other => Err(Error::Config(format!(
                "unknown sampler `{other}` (expected haar or gaussian-phase)"
            ))),
        }
    }
}

/// Haar-random state for sample `index` under `seed`.
pub fn random_state(seed: u64, index: u64) -> FourQubitPure {
    Sampler::Haar.sample(seed, index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    Ghz,
    Swap,
    Comm75,
    Povm31,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [
        Fixture::Ghz,
        Fixture::Swap,
        Fixture::Comm75,
        Fixture::Povm31,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Ghz => "ghz",
            Fixture::Swap => "swap",
            Fixture::Comm75 => "comm75",
            Fixture::Povm31 => "povm31",
        }
    }

    /// Label written to state files; the comm75 state is rescaled to unit norm.
    pub fn label(self) -> String {
        match self {
            Fixture::Comm75 => "comm75 (renormalized)".to_string(),
            other => other.name().to_string(),
        }
    }

    pub fn state(self) -> FourQubitPure {
        let h = FRAC_1_SQRT_2;
        let zero = [0.0; 4];
        let phi_p = [h, 0.0, 0.0, h];
        let phi_m = [h, 0.0, 0.0, -h];
        let psi_p = [0.0, h, h, 0.0];
        let psi_m = [0.0, h, -h, 0.0];
        let ket = |cd: usize| {
            let mut v = zero;
            v[cd] = 1.0;
            v
        };
        let product = |terms: &[([f64; 4], [f64; 4])]| {
            let mut amps = [c64(0.0, 0.0); 16];
            for (ab, cd) in terms {
                for i in 0..4 {
                    for j in 0..4 {
                        amps[4 * i + j] += c64(ab[i] * cd[j], 0.0);
                    }
                }
            }
            FourQubitPure::normalized(amps).expect("fixture amplitudes are nonzero")
        };
        match self {
            Fixture::Ghz => {
                let mut amps = [c64(0.0, 0.0); 16];
                amps[0] = c64(h, 0.0);
                amps[15] = c64(h, 0.0);
                FourQubitPure { amps }
            }
            Fixture::Swap => {
                let mut amps = [c64(0.0, 0.0); 16];
                for r in 0..4 {
                    amps[5 * r] = c64(0.5, 0.0);
                }
                FourQubitPure { amps }
            }
            Fixture::Comm75 => {
                let one_plus = [0.0, 0.0, h, h];
                let one_minus = [0.0, 0.0, h, -h];
                product(&[
                    (phi_p, ket(0)),
                    (phi_m, ket(1)),
                    (psi_p, one_plus),
                    (psi_m, one_minus),
                ])
            }
            Fixture::Povm31 => {
                let plus_plus = [0.5; 4];
                product(&[(phi_p, plus_plus), (phi_m, ket(0)), (psi_m, ket(3))])
            }
        }
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFixture(s.to_string()))
    }
}

pub fn fixture(name: &str) -> Result<FourQubitPure> {
    Ok(name.parse::<Fixture>()?.state())
}

#[derive(Debug, Serialize, Deserialize)]
struct StateFile {
    amplitudes: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

/// Parses the JSON state format: `{"amplitudes": [[re, im]; 16], "label": ...}`.
///
/// States within `1e-12` of unit norm are kept bit-for-bit; larger deviations up to
/// [`FILE_NORM_TOL`] are rescaled.
pub fn parse_state(text: &str) -> Result<(FourQubitPure, Option<String>)> {
    let file: StateFile = serde_json::from_str(text)?;
    if file.amplitudes.len() != 16 {
        return Err(Error::StateFormat(format!(
            "expected 16 amplitudes, found {}",
            file.amplitudes.len()
        )));
    }
    let mut amps = [c64(0.0, 0.0); 16];
    for (slot, [re, im]) in amps.iter_mut().zip(&file.amplitudes) {
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::StateFormat("non-finite amplitude".into()));
        }
        *slot = c64(*re, *im);
    }
    let norm = norm_of(&amps);
    if (norm - 1.0).abs() > FILE_NORM_TOL {
        return Err(Error::StateFormat(format!(
            "norm {norm:.12} deviates from 1 by more than {FILE_NORM_TOL:e}"
        )));
    }
    let psi = if (norm - 1.0).abs() > 1e-12 {
        FourQubitPure::normalized(amps)?
    } else {
        FourQubitPure { amps }
    };
    Ok((psi, file.label))
}

pub fn state_to_json(psi: &FourQubitPure, label: Option<&str>) -> String {
    let file = StateFile {
        amplitudes: psi.amps.iter().map(|z| [z.re, z.im]).collect(),
        label: label.map(str::to_string),
    };
    serde_json::to_string_pretty(&file).expect("state file serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_diff, svd};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, Strategy};

    fn x_is(psi: &FourQubitPure, want: &CMatrix) -> bool {
        max_abs_diff(&coeff_matrix(psi), want) < 1e-15
    }

    #[test]
    fn coefficient_matrices_of_fixtures() {
        let h = FRAC_1_SQRT_2;
        let mut ghz = CMatrix::zeros(4, 4);
        ghz[(0, 0)] = c64(h, 0.0);
        ghz[(3, 3)] = c64(h, 0.0);
        assert!(x_is(&Fixture::Ghz.state(), &ghz));
        assert!(x_is(&Fixture::Swap.state(), &identity(4).map(|z| z * 0.5)));
        let mut e0 = CMatrix::zeros(4, 4);
        e0[(0, 0)] = c64(1.0, 0.0);
        assert!(x_is(&FourQubitPure::basis(0), &e0));
    }

    #[test]
    fn reduced_states() {
        let r = rho_ab(&Fixture::Ghz.state());
        let want = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c64(0.5, 0.),
            c64(0., 0.),
            c64(0., 0.),
            c64(0.5, 0.),
        ]));
        assert!(max_abs_diff(&r, &want) < 1e-15);
        let r = rho_ab(&Fixture::Swap.state());
        assert!(max_abs_diff(&r, &identity(4).map(|z| z * 0.25)) < 1e-15);
        let r = rho_ab(&FourQubitPure::basis(0));
        assert!(max_abs_diff(&(&r * &r), &r) < 1e-15);
        assert!((r.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn q_matrices() {
        let q = q_matrix(&Fixture::Ghz.state());
        for r in 0..4 {
            for c in 0..4 {
                let want = if (r, c) == (0, 3) || (r, c) == (3, 0) {
                    -0.5
                } else {
                    0.0
                };
                assert!((q[(r, c)] - c64(want, 0.0)).norm() < 1e-15);
            }
        }
        let q = q_matrix(&Fixture::Swap.state());
        assert!(max_abs_diff(&q, &yy().map(|z| z * 0.25)) < 1e-15);
        let q = q_matrix(&FourQubitPure::basis(0));
        assert!(q.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn sqrt_yy_squares_to_yy() {
        let k = SpinFlipConstant::new();
        assert!(max_abs_diff(&(&k.sqrt_yy * &k.sqrt_yy), &k.yy) < 1e-14);
        assert!(max_abs_diff(&k.sqrt_yy, &k.sqrt_yy.transpose()) == 0.0);
    }

    #[test]
    fn spin_flip_examples() {
        let h = FRAC_1_SQRT_2;
        let phi = [c64(h, 0.), c64(0., 0.), c64(0., 0.), c64(h, 0.)];
        let f = spin_flip_pure(&phi);
        for k in 0..4 {
            assert!((f[k] + phi[k]).norm() < 1e-15);
        }
        let rho = rho_ab(&Fixture::Ghz.state());
        assert!(max_abs_diff(&spin_flip_mixed(&rho).unwrap(), &rho) < 1e-15);
        assert!((concurrence_pure(&phi).unwrap() - 1.0).abs() < 1e-15);
        let zero = [c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(0., 0.)];
        assert_eq!(concurrence_pure(&zero).unwrap(), 0.0);
        let plus = [c64(0.5, 0.); 4];
        assert!(concurrence_pure(&plus).unwrap().abs() < 1e-15);
        assert!(matches!(
            concurrence_pure(&[c64(1., 0.); 4]),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn permutation_examples() {
        let ghz = Fixture::Ghz.state();
        assert_eq!(permute_parties(&ghz, Permutation::identity()), ghz);
        let cd: Permutation = "ABDC".parse().unwrap();
        assert_eq!(permute_parties(&ghz, cd), ghz);
        // B <-> C turns the pairing AC, BD into AB, CD
        let bc: Permutation = "ACBD".parse().unwrap();
        let r = rho_ab(&permute_parties(&Fixture::Swap.state(), bc));
        assert!(max_abs_diff(&(&r * &r), &r) < 1e-15);
        assert!((r[(0, 0)].re - 0.5).abs() < 1e-15 && (r[(0, 3)].re - 0.5).abs() < 1e-15);
        assert!("AABC".parse::<Permutation>().is_err());
        assert!("ABC".parse::<Permutation>().is_err());
        assert!("ABCX".parse::<Permutation>().is_err());
        assert!(Permutation::keepers(Party::A, Party::A).is_err());
        assert_eq!(
            Permutation::keepers(Party::B, Party::D).unwrap().parties(),
            [Party::B, Party::D, Party::A, Party::C]
        );
    }

    #[test]
    fn fixture_amplitudes() {
        let h = FRAC_1_SQRT_2;
        let g = Fixture::Ghz.state();
        assert_eq!(g.amplitudes()[0], c64(h, 0.0));
        assert_eq!(g.amplitudes()[15], c64(h, 0.0));
        assert!(g.amplitudes()[1..15].iter().all(|z| z.norm() == 0.0));

        // (1/sqrt 3)(Phi+ |++> + Phi- |00> + Psi- |11>)
        let p = Fixture::Povm31.state();
        let s3 = 1.0 / 3f64.sqrt();
        let want = |i: usize| {
            let (ab, cd) = (i / 4, i % 4);
            let phi_p = [h, 0., 0., h][ab];
            let phi_m = [h, 0., 0., -h][ab];
            let psi_m = [0., h, -h, 0.][ab];
            s3 * (phi_p * 0.5 + phi_m * [1., 0., 0., 0.][cd] + psi_m * [0., 0., 0., 1.][cd])
        };
        for i in 0..16 {
            assert!((p.amplitudes()[i] - c64(want(i), 0.0)).norm() < 1e-15);
        }
        // comm75: four orthonormal terms, each weight 1/2 after rescaling
        let c = Fixture::Comm75.state();
        assert!((c.norm() - 1.0).abs() < 1e-15);
        assert!((c.amplitudes()[0].re - 0.5 * h).abs() < 1e-15);
        assert!(matches!(fixture("w"), Err(Error::UnknownFixture(_))));
    }

    #[test]
    fn state_file_round_trip() {
        for f in Fixture::ALL {
            let psi = f.state();
            let text = state_to_json(&psi, Some(&f.label()));
            let (back, label) = parse_state(&text).unwrap();
            assert_eq!(back, psi);
            assert_eq!(label.as_deref(), Some(f.label().as_str()));
        }
        let text = state_to_json(&Fixture::Ghz.state(), None);
        assert!(text.contains("0.7071067811865476"));
    }

    #[test]
    fn state_file_rejections() {
        assert!(matches!(
            parse_state(r#"{"amplitudes": [[1, 0]]}"#),
            Err(Error::StateFormat(_))
        ));
        let mut rows = vec!["[0, 0]"; 16];
        rows[0] = "[2, 0]";
        let text = format!(r#"{{"amplitudes": [{}]}}"#, rows.join(","));
        assert!(matches!(parse_state(&text), Err(Error::StateFormat(_))));
        rows[0] = "[1.0000001, 0]";
        let text = format!(r#"{{"amplitudes": [{}]}}"#, rows.join(","));
        let (psi, _) = parse_state(&text).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-15);
        assert!(parse_state("{").is_err());
    }

    #[test]
    fn random_state_snapshot_and_norm() {
        let a = random_state(42, 0);
        let b = random_state(42, 0);
        assert_eq!(a, b);
        assert_ne!(a, random_state(42, 1));
        assert_ne!(a, random_state(43, 0));
        assert!((a.norm() - 1.0).abs() < 1e-14);
        let g = Sampler::GaussianPhase.sample(42, 0);
        assert!((g.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_state_moments() {
        let n = 10_000;
        let mut sums = [0.0f64; 16];
        let mut sq = [0.0f64; 16];
        let mut first: Vec<f64> = Vec::with_capacity(n);
        for i in 0..n {
            let psi = random_state(2024, i as u64);
            for (k, z) in psi.amplitudes().iter().enumerate() {
                let p = z.norm_sqr();
                sums[k] += p;
                sq[k] += p * p;
            }
            first.push(psi.amplitudes()[0].norm_sqr());
        }
        for k in 0..16 {
            let mean = sums[k] / n as f64;
            let var = sq[k] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - 1.0 / 16.0).abs() < 3.0 * se + 1e-12,
                "k={k} mean={mean}"
            );
        }
        // Kolmogorov-Smirnov against Beta(1, 15): F(x) = 1 - (1 - x)^15
        first.sort_by(f64::total_cmp);
        let d = first
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (1.0 - x).powi(15);
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (f - lo).abs().max((hi - f).abs())
            })
            .fold(0.0, f64::max);
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }

    fn arb_state() -> impl Strategy<Value = FourQubitPure> {
        (any::<u64>(), 0u64..1000).prop_map(|(s, i)| random_state(s, i))
    }

    fn arb_su2() -> impl Strategy<Value = CMatrix> {
        (any::<u64>()).prop_map(|s| {
            let mut rng = stream_rng(s, 7);
            let m = CMatrix::from_fn(2, 2, |_, _| {
                c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let d = svd(&m).unwrap();
            d.u * d.v.adjoint()
        })
    }

    proptest! {
        #[test]
        fn schmidt_spectra_agree(psi in arb_state()) {
            let a = crate::linalg::herm_eig(&rho_ab(&psi)).unwrap().values;
            let b = crate::linalg::herm_eig(&rho_cd(&psi)).unwrap().values;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn q_sigma_invariant_under_cd_locals(psi in arb_state(), u in arb_su2(), v in arb_su2()) {
            let s0: f64 = svd(&q_matrix(&psi)).unwrap().sigma.iter().sum();
            let moved = psi.apply_local(Party::C, &u).unwrap().apply_local(Party::D, &v).unwrap();
            let s1: f64 = svd(&q_matrix(&moved)).unwrap().sigma.iter().sum();
            prop_assert!((s0 - s1).abs() < 1e-9);
        }

        #[test]
        fn two_concurrence_forms_agree(s in any::<u64>()) {
            let mut rng = stream_rng(s, 1);
            let raw: Vec<C64> = (0..4)
                .map(|_| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let n = norm_of(&raw);
            let phi = [raw[0] / n, raw[1] / n, raw[2] / n, raw[3] / n];
            let flipped = spin_flip_pure(&phi);
            let overlap: C64 = phi.iter().zip(&flipped).map(|(a, b)| a.conj() * b).sum();
            prop_assert!((concurrence_pure(&phi).unwrap() - overlap.norm()).abs() < 1e-12);
        }

        #[test]
        fn spin_flip_is_an_involution(s in any::<u64>()) {
            let mut rng = stream_rng(s, 2);
            let a = CMatrix::from_fn(4, 4, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            let rho = &a * a.adjoint();
            let twice = spin_flip_mixed(&spin_flip_mixed(&rho).unwrap()).unwrap();
            prop_assert!(max_abs_diff(&twice, &rho) < 1e-12);
        }

        #[test]
        fn permutations_preserve_norm_and_invert(psi in arb_state(), k in 0usize..24) {
            let perms: Vec<[Party; 4]> = {
                let mut out = Vec::new();
                for a in Party::ALL { for b in Party::ALL { for c in Party::ALL { for d in Party::ALL {
                    let p = [a, b, c, d];
                    if Permutation::new(p).is_ok() { out.push(p); }
                }}}}
                out
            };
            let perm = Permutation::new(perms[k]).unwrap();
            let moved = permute_parties(&psi, perm);
            prop_assert!((moved.norm() - psi.norm()).abs() < 1e-15);
            prop_assert_eq!(permute_parties(&moved, perm.inverse()), psi);
        }
    }
}
