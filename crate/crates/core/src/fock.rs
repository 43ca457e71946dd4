//! Dense linear algebra over truncated single-mode and two-mode Fock spaces.
//!
//! Everything here is real-valued: coherent-state amplitudes and the ideal
//! BB84 encoding isometries have real matrix elements, so states and
//! operators are stored as real vectors and real symmetric matrices. An
//! extension to complex encodings would have to generalise this module and
//! the eigen/SDP layers above it.
//!
//! The two-mode basis is the set of pairs (m, m') with m + m' <= M,
//! enumerated lexicographically: (0,0), (0,1), ..., (0,M), (1,0), ...,
//! (M,0). All serialized operators reference this ordering.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance for the symmetry check on operator construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Number of modes a state or operator lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeCount {
    One,
    Two,
}

/// Dimension of the truncated basis for a given mode count.
pub fn basis_dimension(modes: ModeCount, truncation: usize) -> usize {
    match modes {
        ModeCount::One => truncation + 1,
        ModeCount::Two => (truncation + 1) * (truncation + 2) / 2,
    }
}

/// Lexicographic enumeration of all two-mode occupation pairs (m, m') with
/// m + m' <= truncation.
pub fn two_mode_enumerate(truncation: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(basis_dimension(ModeCount::Two, truncation));
    for m in 0..=truncation {
        for mp in 0..=(truncation - m) {
            pairs.push((m, mp));
        }
    }
    pairs
}

/// Index of the pair (m, m') in the enumeration of [`two_mode_enumerate`].
pub fn two_mode_index(m: usize, mp: usize, truncation: usize) -> usize {
    debug_assert!(m + mp <= truncation);
    // pairs with first coordinate < m: sum_{i<m} (truncation - i + 1)
    m * (truncation + 1) - m * (m.saturating_sub(1)) / 2 + mp
}

/// A real amplitude vector over a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    amps: DVector<f64>,
    modes: ModeCount,
    truncation: usize,
}

impl FockVector {
    pub fn new(amps: DVector<f64>, modes: ModeCount, truncation: usize) -> Result<Self> {
        let expect = basis_dimension(modes, truncation);
        if amps.len() != expect {
            return Err(Error::Usage(format!(
                "amplitude vector has length {}, basis dimension is {expect}",
                amps.len()
            )));
        }
        if !amps.iter().all(|a| a.is_finite()) {
            return Err(Error::Domain("non-finite amplitude".into()));
        }
        Ok(Self { amps, modes, truncation })
    }

    /// The single-mode Fock basis state |n>.
    pub fn single_basis(n: usize, truncation: usize) -> Self {
        let mut amps = DVector::zeros(truncation + 1);
        amps[n] = 1.0;
        Self { amps, modes: ModeCount::One, truncation }
    }

    /// The two-mode Fock basis state |m, m'>.
    pub fn two_mode_basis(m: usize, mp: usize, truncation: usize) -> Self {
        let mut amps = DVector::zeros(basis_dimension(ModeCount::Two, truncation));
        amps[two_mode_index(m, mp, truncation)] = 1.0;
        Self { amps, modes: ModeCount::Two, truncation }
    }

    pub fn amplitudes(&self) -> &DVector<f64> {
        &self.amps
    }

    pub fn modes(&self) -> ModeCount {
        self.modes
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amps.norm_squared()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.amps.dot(&other.amps)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { amps: &self.amps * factor, modes: self.modes, truncation: self.truncation }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        Ok(Self {
            amps: &self.amps + &other.amps,
            modes: self.modes,
            truncation: self.truncation,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        Ok(Self {
            amps: &self.amps - &other.amps,
            modes: self.modes,
            truncation: self.truncation,
        })
    }

    /// |v><v| as an operator on the same basis.
    pub fn outer(&self) -> FockOperator {
        FockOperator {
            mat: &self.amps * self.amps.transpose(),
            modes: self.modes,
            truncation: self.truncation,
        }
    }

    fn check_same_basis(&self, other: &Self) -> Result<()> {
        if self.modes != other.modes || self.truncation != other.truncation {
            return Err(Error::Usage("mismatched Fock bases".into()));
        }
        Ok(())
    }
}

/// A real symmetric operator over a truncated Fock basis.
#[derive(Debug, Clone)]
pub struct FockOperator {
    mat: DMatrix<f64>,
    modes: ModeCount,
    truncation: usize,
}

impl FockOperator {
    pub fn new(mat: DMatrix<f64>, modes: ModeCount, truncation: usize) -> Result<Self> {
        let d = basis_dimension(modes, truncation);
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::Usage(format!(
                "operator is {}x{}, basis dimension is {d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = (&mat - mat.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::Usage(format!(
                "operator is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        Ok(Self { mat, modes, truncation })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn modes(&self) -> ModeCount {
        self.modes
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn dimension(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { mat: &self.mat * factor, modes: self.modes, truncation: self.truncation }
    }

    /// <v|A|v>.
    pub fn expectation(&self, v: &FockVector) -> Result<f64> {
        if v.modes != self.modes || v.truncation != self.truncation {
            return Err(Error::Usage("vector basis does not match operator".into()));
        }
        Ok((v.amplitudes().transpose() * &self.mat * v.amplitudes())[(0, 0)])
    }

    /// Tr[A B].
    pub fn trace_product(&self, other: &Self) -> Result<f64> {
        if self.modes != other.modes || self.truncation != other.truncation {
            return Err(Error::Usage("mismatched operator bases".into()));
        }
        // symmetric matrices: Tr[AB] = sum_ij A_ij B_ij
        Ok(self.mat.iter().zip(other.mat.iter()).map(|(a, b)| a * b).sum())
    }
}

/// The four ideal BB84 encoding settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Z0,
    Z1,
    X0,
    X1,
}

impl Encoding {
    pub const ALL: [Encoding; 4] = [Encoding::Z0, Encoding::Z1, Encoding::X0, Encoding::X1];

    /// Stable index used by observation tables.
    pub fn index(self) -> usize {
        match self {
            Encoding::Z0 => 0,
            Encoding::Z1 => 1,
            Encoding::X0 => 2,
            Encoding::X1 => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Encoding::Z0 => "0_Z",
            Encoding::Z1 => "1_Z",
            Encoding::X0 => "0_X",
            Encoding::X1 => "1_X",
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Binomial coefficient C(n, k) as f64. Exact for the truncations used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Poisson weight mu^n e^{-mu} / n!.
pub fn poisson_weight(n: usize, mu: f64) -> f64 {
    mu.powi(n as i32) * (-mu).exp() / factorial(n)
}

/// Unnormalised projection of the coherent state |sqrt(mu)> onto the first
/// M+1 Fock states: amplitude e^{-mu/2} mu^{n/2} / sqrt(n!) on |n>.
pub fn coherent_amplitudes(mu: f64, truncation: usize) -> Result<FockVector> {
    if mu < 0.0 || !mu.is_finite() {
        return Err(Error::Domain(format!("mean photon number must be >= 0, got {mu}")));
    }
    if truncation < 1 {
        return Err(Error::Usage("truncation must be at least 1".into()));
    }
    let pref = (-mu / 2.0).exp();
    let amps = DVector::from_iterator(
        truncation + 1,
        (0..=truncation).map(|n| pref * mu.powf(n as f64 / 2.0) / factorial(n).sqrt()),
    );
    FockVector::new(amps, ModeCount::One, truncation)
}

/// Apply an ideal BB84 encoding isometry to a single-mode state.
///
/// Z0 puts the photons in the first output mode, Z1 in the second, and the
/// X settings distribute them binomially with sign (-1)^k for X1:
/// |m> -> sum_k (+-1)^k 2^{-m/2} sqrt(C(m,k)) |k, m-k>.
pub fn apply_encoding(e: Encoding, v: &FockVector) -> Result<FockVector> {
    if v.modes() != ModeCount::One {
        return Err(Error::Usage("encoding input must be single-mode".into()));
    }
    let m_max = v.truncation();
    let dim2 = basis_dimension(ModeCount::Two, m_max);
    let mut out = DVector::zeros(dim2);
    for (m, &amp) in v.amplitudes().iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        match e {
            Encoding::Z0 => out[two_mode_index(m, 0, m_max)] += amp,
            Encoding::Z1 => out[two_mode_index(0, m, m_max)] += amp,
            Encoding::X0 | Encoding::X1 => {
                let scale = 0.5f64.powi(m as i32).sqrt();
                for k in 0..=m {
                    let sign = if e == Encoding::X1 && k % 2 == 1 { -1.0 } else { 1.0 };
                    out[two_mode_index(k, m - k, m_max)] +=
                        sign * amp * scale * binomial(m, k).sqrt();
                }
            }
        }
    }
    FockVector::new(out, ModeCount::Two, m_max)
}

/// Matrix of the encoding isometry in the truncated bases (two-mode rows,
/// single-mode columns).
pub fn encoding_matrix(e: Encoding, truncation: usize) -> DMatrix<f64> {
    let rows = basis_dimension(ModeCount::Two, truncation);
    let mut mat = DMatrix::zeros(rows, truncation + 1);
    for m in 0..=truncation {
        let col = apply_encoding(e, &FockVector::single_basis(m, truncation))
            .expect("basis state encodes");
        mat.set_column(m, col.amplitudes());
    }
    mat
}

/// Conjugate a single-mode operator by an encoding isometry: V rho V^T.
pub fn conjugate_by_encoding(e: Encoding, rho: &FockOperator) -> Result<FockOperator> {
    if rho.modes() != ModeCount::One {
        return Err(Error::Usage("conjugation input must be single-mode".into()));
    }
    let v = encoding_matrix(e, rho.truncation());
    let out = &v * rho.matrix() * v.transpose();
    // isometry conjugation of a symmetric matrix stays symmetric
    FockOperator::new(out, ModeCount::Two, rho.truncation())
}
