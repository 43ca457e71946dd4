//! Truncated model states of the imperfectly phase-randomised source, their
//! eigendecompositions, and the perturbation corrections that connect the
//! truncated spectrum to the untruncated one.
//!
//! The model state of intensity mu with uniformity q, projected onto the
//! first M+1 Fock levels, has matrix elements
//!
//!     c_{m,m}  = mu^m e^{-mu} / m!
//!     c_{m,m'} = (1-q) mu^{(m+m')/2} e^{-mu} / sqrt(m! m'!)   (m != m')
//!
//! i.e. Poisson weights on the diagonal plus the coherences of the residual
//! fixed-phase component. Its eigenvectors are tagged by the Fock state they
//! overlap most with; tag n plays the role of the n-photon component.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{
    coherent_amplitudes, poisson_weight, FockOperator, FockVector, ModeCount,
};

/// Eigenvalues below this magnitude are clamped to zero before gap
/// computation; an order above eigensolver noise at these dimensions.
const EIGENVALUE_CLAMP: f64 = 1e-13;

/// Eigen-data of a projected model state plus its correction terms.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    mu: f64,
    q: f64,
    truncation: usize,
    /// The projected operator itself (unnormalised, trace = F_proj).
    projected: FockOperator,
    /// Unnormalised eigenvalues indexed by photon-number tag.
    eigenvalues: Vec<f64>,
    /// Eigenvectors indexed by tag, sign-fixed so <n|lambda_n> > 0.
    eigenvectors: Vec<FockVector>,
    f_proj: f64,
    eps_val: f64,
    /// Spectral gaps per tag; only meaningful once corrections are computed.
    gaps: Vec<f64>,
    /// Eigenvector fidelity lower bounds per tag, clamped to [0, 1].
    vec_fidelity: Vec<f64>,
}

/// Build the projected model state for intensity mu, uniformity q and
/// truncation M. Trace equals the Poisson mass of the first M+1 levels.
pub fn build_projected_model(mu: f64, q: f64, truncation: usize) -> Result<FockOperator> {
    if !(0.0..=1.0).contains(&q) || !q.is_finite() {
        return Err(Error::Domain(format!("uniformity q = {q} outside [0, 1]")));
    }
    let coherent = coherent_amplitudes(mu, truncation)?;
    let a = coherent.amplitudes();
    let d = truncation + 1;
    let mat = DMatrix::from_fn(d, d, |m, mp| {
        if m == mp {
            poisson_weight(m, mu)
        } else {
            (1.0 - q) * a[m] * a[mp]
        }
    });
    FockOperator::new(mat, ModeCount::One, truncation)
}

/// Eigendecompose a projected model state and assign photon-number tags.
///
/// Each eigenvector gets tag n = argmax_m |<m|v>|^2; the assignment must be
/// a bijection onto {0..M}, otherwise the spectrum is too scrambled for the
/// tag semantics to hold and a degeneracy error is returned.
pub fn spectral_decompose(rho: &FockOperator, mu: f64, q: f64) -> Result<SpectralModel> {
    if rho.modes() != ModeCount::One {
        return Err(Error::Usage("model states are single-mode".into()));
    }
    let truncation = rho.truncation();
    let d = truncation + 1;
    let eig = rho.matrix().clone().symmetric_eigen();

    // Tag in descending eigenvalue order. A numerically nonzero eigenvector
    // whose preferred Fock level is already claimed signals a genuinely
    // scrambled spectrum; null-space vectors have arbitrary directions and
    // simply take the best level still free.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b))
    });

    let mut by_tag: Vec<Option<(f64, FockVector)>> = vec![None; d];
    for i in order {
        let mut col = eig.eigenvectors.column(i).clone_owned();
        let overlap = |m: usize| col[m] * col[m];
        let preferred = (0..d).max_by(|&a, &b| overlap(a).partial_cmp(&overlap(b)).unwrap());
        let preferred = preferred.unwrap();
        let mut value = eig.eigenvalues[i];
        if value < -1e-12 {
            return Err(Error::Usage(format!(
                "projected model state is not PSD (eigenvalue {value:.3e})"
            )));
        }
        if value.abs() < EIGENVALUE_CLAMP {
            value = 0.0;
        }
        let tag = if by_tag[preferred].is_none() {
            preferred
        } else if value == 0.0 {
            (0..d)
                .filter(|&m| by_tag[m].is_none())
                .max_by(|&a, &b| overlap(a).partial_cmp(&overlap(b)).unwrap())
                .expect("as many free tags as remaining vectors")
        } else {
            return Err(Error::Degeneracy(format!(
                "two eigenvectors claim Fock tag {preferred} at mu={mu}, q={q}; \
                 the spectrum is too degenerate to label"
            )));
        };
        if col[tag] < 0.0 {
            col.neg_mut();
        }
        by_tag[tag] = Some((value, FockVector::new(col, ModeCount::One, truncation)?));
    }

    let mut eigenvalues = Vec::with_capacity(d);
    let mut eigenvectors = Vec::with_capacity(d);
    for slot in by_tag {
        let (value, vector) = slot.expect("every tag assigned");
        eigenvalues.push(value);
        eigenvectors.push(vector);
    }

    let f_proj = eigenvalues.iter().sum::<f64>().min(1.0);
    let eps_val = 2.0 * (1.0 - f_proj).max(0.0).sqrt();

    Ok(SpectralModel {
        mu,
        q,
        truncation,
        projected: rho.clone(),
        eigenvalues,
        eigenvectors,
        f_proj,
        eps_val,
        gaps: Vec::new(),
        vec_fidelity: Vec::new(),
    })
}

/// Populate the spectral gaps and eigenvector fidelity bounds.
///
/// delta_0 = p'_0 - p'_1 - eps; for n >= 1 the two-sided min of adjacent
/// gaps is used, with p'_{M+1} = 0. F_vec_n = 1 - (eps/delta_n)^2 clamped to
/// [0, 1]. When eps_val = 0 the projection is exact and every F_vec_n is 1
/// regardless of the gaps (this covers the vacuum intensity). A non-positive
/// gap at tag 1 with eps_val > 0 means the certified bounds do not apply and
/// is reported as an error rather than silently clamped.
pub fn correction_terms(mut model: SpectralModel) -> Result<SpectralModel> {
    let d = model.eigenvalues.len();
    let p = &model.eigenvalues;
    let eps = model.eps_val;

    let mut gaps = Vec::with_capacity(d);
    for n in 0..d {
        let upper = if n == 0 {
            f64::INFINITY
        } else {
            p[n - 1] - p[n] - eps
        };
        let lower = {
            let next = if n + 1 < d { p[n + 1] } else { 0.0 };
            p[n] - next - eps
        };
        let gap = if n == 0 { lower } else { upper.min(lower) };
        gaps.push(gap);
    }

    let vec_fidelity: Vec<f64> = gaps
        .iter()
        .map(|&gap| {
            if eps == 0.0 {
                1.0
            } else if gap <= 0.0 {
                0.0
            } else {
                (1.0 - (eps / gap).powi(2)).clamp(0.0, 1.0)
            }
        })
        .collect();

    if eps > 0.0 && d > 1 && gaps[1] <= 0.0 {
        return Err(Error::Gap(format!(
            "spectral gap at tag 1 is {:.3e} <= 0 for mu={}, q={} (eps_val={:.3e}); \
             the perturbation bounds do not apply at these parameters",
            gaps[1], model.mu, model.q, eps
        )));
    }

    model.gaps = gaps;
    model.vec_fidelity = vec_fidelity;
    Ok(model)
}

impl SpectralModel {
    /// Build, decompose and correct in one step.
    pub fn build(mu: f64, q: f64, truncation: usize) -> Result<Self> {
        let rho = build_projected_model(mu, q, truncation)?;
        correction_terms(spectral_decompose(&rho, mu, q)?)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn projected(&self) -> &FockOperator {
        &self.projected
    }

    /// Trace-renormalised projection (the density operator the SDP
    /// constraints are written against).
    pub fn renormalized(&self) -> FockOperator {
        self.projected.scale(1.0 / self.f_proj)
    }

    pub fn eigenvalue(&self, tag: usize) -> f64 {
        self.eigenvalues[tag]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, tag: usize) -> &FockVector {
        &self.eigenvectors[tag]
    }

    pub fn f_proj(&self) -> f64 {
        self.f_proj
    }

    pub fn eps_val(&self) -> f64 {
        self.eps_val
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    /// Eigenvector fidelity bound for the tag the key rate is built on.
    /// Errors if the corresponding gap is invalid.
    pub fn tag1_vector_fidelity(&self) -> Result<f64> {
        if self.gaps.is_empty() {
            return Err(Error::Usage("correction terms not computed".into()));
        }
        if self.eps_val > 0.0 && self.gaps[1] <= 0.0 {
            return Err(Error::Gap(format!(
                "spectral gap at tag 1 is non-positive for mu={}, q={}",
                self.mu, self.q
            )));
        }
        Ok(self.vec_fidelity[1])
    }

    pub fn vec_fidelity(&self) -> &[f64] {
        &self.vec_fidelity
    }

    /// Debug dump: one line per tag with eigenvalue, gap, and fidelity bound.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag,eigenvalue,gap,f_vec\n");
        for n in 0..self.eigenvalues.len() {
            let gap = self.gaps.get(n).copied().unwrap_or(f64::NAN);
            let fv = self.vec_fidelity.get(n).copied().unwrap_or(f64::NAN);
            out.push_str(&format!("{},{},{},{}\n", n, self.eigenvalues[n], gap, fv));
        }
        out
    }
}
