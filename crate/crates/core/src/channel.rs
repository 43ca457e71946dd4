//! Analytic dark-count-limited channel model.
//!
//! Produces every observed statistic the SDPs and the key-rate formula
//! consume, plus the photon-number-resolved honest-channel operators used as
//! test oracles. The detector model is the standard threshold one: two
//! detectors, independent dark counts p_d per gate, matched-basis light
//! fully on one detector, mismatched-basis light split 50/50, double clicks
//! assigned a uniformly random bit. Detector efficiency is folded into the
//! overall loss, so there is no separate efficiency parameter.
//!
//! All outcome probabilities are assembled from one shared no-click
//! primitive so that analytic statistics and operator matrix elements agree
//! bit-for-bit where they coincide mathematically (the vacuum intensity
//! turns the SDP intervals into exact equalities, so this matters).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{
    binomial, two_mode_enumerate, Encoding, FockOperator, ModeCount,
};
use crate::sdp::virtual_states;
use crate::spectral::SpectralModel;

/// Loss and dark-count description of the channel.
#[derive(Debug, Clone, Copy)]
pub struct ChannelParams {
    pub loss_db: f64,
    pub dark_count_prob: f64,
}

impl ChannelParams {
    pub fn new(loss_db: f64, dark_count_prob: f64) -> Result<Self> {
        if loss_db < 0.0 || !loss_db.is_finite() {
            return Err(Error::Domain(format!("loss must be >= 0 dB, got {loss_db}")));
        }
        if !(0.0..=1.0).contains(&dark_count_prob) {
            return Err(Error::Domain(format!(
                "dark count probability {dark_count_prob} outside [0, 1]"
            )));
        }
        Ok(Self { loss_db, dark_count_prob })
    }

    pub fn transmittance(&self) -> f64 {
        transmittance(self.loss_db)
    }
}

/// eta = 10^(-loss_db / 10).
pub fn transmittance(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Outcome probabilities of a two-threshold-detector measurement given the
/// no-click probability of each detector. Double clicks are split evenly.
#[derive(Debug, Clone, Copy)]
pub struct DetectorOutcomes {
    pub first: f64,
    pub second: f64,
    pub inconclusive: f64,
}

pub(crate) fn detector_outcomes(no_click0: f64, no_click1: f64) -> DetectorOutcomes {
    let c0 = 1.0 - no_click0;
    let c1 = 1.0 - no_click1;
    let double = c0 * c1;
    DetectorOutcomes {
        first: c0 * no_click1 + 0.5 * double,
        second: c1 * no_click0 + 0.5 * double,
        inconclusive: no_click0 * no_click1,
    }
}

/// No-click probability of a detector seeing coherent light of the given
/// intensity (after loss), including darks.
fn no_click_intensity(intensity: f64, p_d: f64) -> f64 {
    (1.0 - p_d) * (-intensity).exp()
}

/// No-click probability of a detector receiving n photons through
/// transmittance eta, including darks.
fn no_click_photons(n: usize, eta: f64, p_d: f64) -> f64 {
    (1.0 - p_d) * (1.0 - eta).powi(n as i32)
}

/// Z-basis gain and bit-error rate for intensity mu.
pub fn z_basis_stats(mu: f64, params: &ChannelParams) -> (f64, f64) {
    let eta = params.transmittance();
    let p_d = params.dark_count_prob;
    let nc_signal = no_click_intensity(eta * mu, p_d);
    let nc_other = 1.0 - p_d;
    let out = detector_outcomes(nc_signal, nc_other);
    let gain = 1.0 - out.inconclusive;
    let error = if gain == 0.0 { 0.0 } else { out.second / gain };
    (gain, error)
}

/// Conditional rates of Bob's X outcomes (0_X, 1_X) for intensity mu and an
/// Alice setting. Matched X settings put all the light on one detector;
/// Z settings split it evenly, making the two rates exactly symmetric.
pub fn x_basis_stats(mu: f64, setting: Encoding, params: &ChannelParams) -> (f64, f64) {
    let eta = params.transmittance();
    let p_d = params.dark_count_prob;
    let dark_only = 1.0 - p_d;
    match setting {
        Encoding::X0 => {
            let out = detector_outcomes(no_click_intensity(eta * mu, p_d), dark_only);
            (out.first, out.second)
        }
        Encoding::X1 => {
            let out = detector_outcomes(dark_only, no_click_intensity(eta * mu, p_d));
            (out.first, out.second)
        }
        Encoding::Z0 | Encoding::Z1 => {
            let nc = no_click_intensity(eta * mu / 2.0, p_d);
            let out = detector_outcomes(nc, nc);
            (out.first, out.second)
        }
    }
}

/// The three decoy intensities, ordered signal > weak > vacuum.
#[derive(Debug, Clone, Copy)]
pub struct Intensities {
    pub signal: f64,
    pub weak: f64,
    pub vacuum: f64,
}

impl Intensities {
    pub fn new(signal: f64, weak: f64, vacuum: f64) -> Result<Self> {
        if !(signal > weak && weak > vacuum && vacuum >= 0.0) {
            return Err(Error::Domain(format!(
                "intensities must satisfy signal > weak > vacuum >= 0, \
                 got {signal} > {weak} > {vacuum}"
            )));
        }
        Ok(Self { signal, weak, vacuum })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.signal, self.weak, self.vacuum]
    }
}

/// Channel statistics for one intensity.
#[derive(Debug, Clone, Copy)]
pub struct IntensityObservations {
    pub mu: f64,
    pub gain_z: f64,
    pub error_z: f64,
    /// x_rates[setting.index()][outcome] = rate of that X outcome.
    pub x_rates: [[f64; 2]; 4],
}

/// All channel statistics the SDPs consume, per intensity.
#[derive(Debug, Clone, Copy)]
pub struct ObservationSet {
    pub signal: IntensityObservations,
    pub weak: IntensityObservations,
    pub vacuum: IntensityObservations,
}

fn observe_intensity(mu: f64, params: &ChannelParams) -> IntensityObservations {
    let (gain_z, error_z) = z_basis_stats(mu, params);
    let mut x_rates = [[0.0; 2]; 4];
    for e in Encoding::ALL {
        let (q0, q1) = x_basis_stats(mu, e, params);
        x_rates[e.index()] = [q0, q1];
    }
    IntensityObservations { mu, gain_z, error_z, x_rates }
}

/// Fill every observable from the analytic channel model. Deterministic.
pub fn observation_set(intensities: &Intensities, params: &ChannelParams) -> ObservationSet {
    ObservationSet {
        signal: observe_intensity(intensities.signal, params),
        weak: observe_intensity(intensities.weak, params),
        vacuum: observe_intensity(intensities.vacuum, params),
    }
}

impl ObservationSet {
    pub fn iter(&self) -> impl Iterator<Item = &IntensityObservations> {
        [&self.signal, &self.weak, &self.vacuum].into_iter()
    }

    /// Versioned CSV export so measured statistics can drive the certifier.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(OBSERVATIONS_HEADER);
        out.push('\n');
        for (role, obs) in [
            ("signal", &self.signal),
            ("weak", &self.weak),
            ("vacuum", &self.vacuum),
        ] {
            out.push_str(&format!("{role},{},{},{}", obs.mu, obs.gain_z, obs.error_z));
            for e in Encoding::ALL {
                for outcome in 0..2 {
                    out.push_str(&format!(",{}", obs.x_rates[e.index()][outcome]));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty observations file".into()))?;
        if header.trim() != OBSERVATIONS_HEADER {
            return Err(Error::Config(format!(
                "unrecognised observations header; expected `{OBSERVATIONS_HEADER}`"
            )));
        }
        let mut slots: [Option<IntensityObservations>; 3] = [None, None, None];
        for line in lines {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 12 {
                return Err(Error::Config(format!(
                    "observations row has {} fields, expected 12",
                    fields.len()
                )));
            }
            let slot = match fields[0] {
                "signal" => 0,
                "weak" => 1,
                "vacuum" => 2,
                other => {
                    return Err(Error::Config(format!("unknown intensity role `{other}`")))
                }
            };
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number `{f}`")))
                })
                .collect::<Result<_>>()?;
            for (i, &v) in nums.iter().enumerate() {
                if i > 0 && !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!(
                        "observation value {v} outside [0, 1]"
                    )));
                }
            }
            let mut x_rates = [[0.0; 2]; 4];
            for e in 0..4 {
                x_rates[e] = [nums[3 + 2 * e], nums[4 + 2 * e]];
            }
            slots[slot] = Some(IntensityObservations {
                mu: nums[0],
                gain_z: nums[1],
                error_z: nums[2],
                x_rates,
            });
        }
        match slots {
            [Some(signal), Some(weak), Some(vacuum)] => {
                Intensities::new(signal.mu, weak.mu, vacuum.mu)?;
                Ok(ObservationSet { signal, weak, vacuum })
            }
            _ => Err(Error::Config(
                "observations file must contain signal, weak and vacuum rows".into(),
            )),
        }
    }
}

/// Observations CSV schema, version 1.
pub const OBSERVATIONS_HEADER: &str = "role,mu,gain_z,error_z,\
x0_given_0z,x1_given_0z,x0_given_1z,x1_given_1z,\
x0_given_0x,x1_given_0x,x0_given_1x,x1_given_1x";

/// Honest-channel operator for a conclusive Z detection, expressed on the
/// single-mode input space: diagonal with entries 1 - (1-p_d)^2 (1-eta)^n.
pub fn honest_z_operator(params: &ChannelParams, truncation: usize) -> FockOperator {
    let eta = params.transmittance();
    let p_d = params.dark_count_prob;
    let d = truncation + 1;
    let mat = DMatrix::from_fn(d, d, |m, mp| {
        if m == mp {
            1.0 - detector_outcomes(no_click_photons(m, eta, p_d), 1.0 - p_d).inconclusive
        } else {
            0.0
        }
    });
    FockOperator::new(mat, ModeCount::One, truncation).expect("diagonal is symmetric")
}

/// Change of basis from the two-mode encoding basis to the two-mode
/// measurement basis of Bob's X detectors (a balanced beamsplitter).
/// Orthogonal and block-diagonal per total photon number.
fn beamsplitter_basis_change(truncation: usize) -> DMatrix<f64> {
    let pairs = two_mode_enumerate(truncation);
    let d = pairs.len();
    let mut b = DMatrix::zeros(d, d);
    for (col, &(m, mp)) in pairs.iter().enumerate() {
        for (row, &(j, k)) in pairs.iter().enumerate() {
            if j + k != m + mp {
                continue;
            }
            let mut sum = 0.0;
            for a in 0..=j.min(m) {
                let bb = j - a;
                if bb > mp {
                    continue;
                }
                let sign = if (mp - bb) % 2 == 1 { -1.0 } else { 1.0 };
                sum += sign * binomial(m, a) * binomial(mp, bb);
            }
            let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
            let norm = (fact(j) * fact(k) / (fact(m) * fact(mp))).sqrt()
                / 2f64.powi(((m + mp) as i32) / 2) as f64
                / if (m + mp) % 2 == 1 { 2f64.sqrt() } else { 1.0 };
            b[(row, col)] = sum * norm;
        }
    }
    b
}

/// Honest-channel operator for Bob's X outcome (0 or 1), expressed on the
/// two-mode encoding basis.
pub fn honest_x_operator(
    params: &ChannelParams,
    truncation: usize,
    outcome: usize,
) -> FockOperator {
    assert!(outcome < 2, "X outcome is a bit");
    let eta = params.transmittance();
    let p_d = params.dark_count_prob;
    let pairs = two_mode_enumerate(truncation);
    let d = pairs.len();
    let diag = DMatrix::from_fn(d, d, |r, c| {
        if r == c {
            let (j, k) = pairs[r];
            let out = detector_outcomes(
                no_click_photons(j, eta, p_d),
                no_click_photons(k, eta, p_d),
            );
            if outcome == 0 {
                out.first
            } else {
                out.second
            }
        } else {
            0.0
        }
    });
    let b = beamsplitter_basis_change(truncation);
    let mat = b.transpose() * diag * &b;
    let sym = (&mat + mat.transpose()) * 0.5;
    FockOperator::new(sym, ModeCount::Two, truncation).expect("conjugated diagonal")
}

/// Exact honest-channel values of the tag-1 yield and phase-error rate,
/// evaluated on the model's eigenvectors. Test oracle for the sandwich
/// property of the certified bounds.
#[derive(Debug, Clone, Copy)]
pub struct TaggedTruth {
    pub yield_tag1: f64,
    pub phase_error_tag1: f64,
}

pub fn true_tagged_quantities(
    model: &SpectralModel,
    params: &ChannelParams,
) -> Result<TaggedTruth> {
    let m = model.truncation();
    let lambda1 = model.eigenvector(1);
    let j_op = honest_z_operator(params, m);
    let yield_tag1 = j_op.expectation(lambda1)?;

    let vsp = virtual_states(lambda1)?;
    let l0 = honest_x_operator(params, m, 0);
    let l1 = honest_x_operator(params, m, 1);
    let numerator =
        l1.expectation(&vsp.states[0])? + l0.expectation(&vsp.states[1])?;
    let phase_error_tag1 = if yield_tag1 > 0.0 { numerator / yield_tag1 } else { 0.0 };
    Ok(TaggedTruth { yield_tag1, phase_error_tag1 })
}

/// Monte-Carlo click simulator: the independent oracle the analytic
/// formulas are validated against. Poisson photon numbers, binomial loss
/// and beamsplitting, independent dark counts, random double-click bit.
pub mod mc {
    use rand::Rng;
    use rand_distr::{Binomial, Distribution, Poisson};

    use super::ChannelParams;
    use crate::fock::Encoding;

    #[derive(Debug, Clone, Copy, Default)]
    pub struct ZCounts {
        pub samples: u64,
        pub conclusive: u64,
        pub wrong_bit: u64,
    }

    #[derive(Debug, Clone, Copy, Default)]
    pub struct XCounts {
        pub samples: u64,
        pub outcome0: u64,
        pub outcome1: u64,
    }

    fn sample_photons(mu: f64, rng: &mut impl Rng) -> u64 {
        if mu == 0.0 {
            0
        } else {
            Poisson::new(mu).expect("mu > 0").sample(rng) as u64
        }
    }

    fn thin(n: u64, p: f64, rng: &mut impl Rng) -> u64 {
        if n == 0 || p == 0.0 {
            0
        } else if p >= 1.0 {
            n
        } else {
            Binomial::new(n, p).expect("valid probability").sample(rng)
        }
    }

    /// One Z-basis gate: emitted bit fixed to 0 (the model is bit-symmetric).
    pub fn simulate_z(
        mu: f64,
        params: &ChannelParams,
        samples: u64,
        rng: &mut impl Rng,
    ) -> ZCounts {
        let eta = params.transmittance();
        let p_d = params.dark_count_prob;
        let mut counts = ZCounts { samples, ..Default::default() };
        for _ in 0..samples {
            let arrived = thin(sample_photons(mu, rng), eta, rng);
            let click_signal = arrived > 0 || rng.random_bool(p_d);
            let click_other = rng.random_bool(p_d);
            match (click_signal, click_other) {
                (true, true) => {
                    counts.conclusive += 1;
                    if rng.random_bool(0.5) {
                        counts.wrong_bit += 1;
                    }
                }
                (true, false) => counts.conclusive += 1,
                (false, true) => {
                    counts.conclusive += 1;
                    counts.wrong_bit += 1;
                }
                (false, false) => {}
            }
        }
        counts
    }

    /// One gate with Bob measuring X while Alice used the given setting.
    pub fn simulate_x(
        mu: f64,
        setting: Encoding,
        params: &ChannelParams,
        samples: u64,
        rng: &mut impl Rng,
    ) -> XCounts {
        let eta = params.transmittance();
        let p_d = params.dark_count_prob;
        let mut counts = XCounts { samples, ..Default::default() };
        for _ in 0..samples {
            let arrived = thin(sample_photons(mu, rng), eta, rng);
            let at_first = match setting {
                Encoding::X0 => arrived,
                Encoding::X1 => 0,
                // mismatched basis: each photon picks a detector evenly
                Encoding::Z0 | Encoding::Z1 => thin(arrived, 0.5, rng),
            };
            let at_second = arrived - at_first;
            let click0 = at_first > 0 || rng.random_bool(p_d);
            let click1 = at_second > 0 || rng.random_bool(p_d);
            match (click0, click1) {
                (true, true) => {
                    if rng.random_bool(0.5) {
                        counts.outcome0 += 1;
                    } else {
                        counts.outcome1 += 1;
                    }
                }
                (true, false) => counts.outcome0 += 1,
                (false, true) => counts.outcome1 += 1,
                (false, false) => {}
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn params(loss_db: f64, p_d: f64) -> ChannelParams {
        ChannelParams::new(loss_db, p_d).unwrap()
    }

    #[test]
    fn transmittance_values() {
        assert_eq!(transmittance(0.0), 1.0);
        assert_abs_diff_eq!(transmittance(10.0), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(transmittance(23.0), 10f64.powf(-2.3), epsilon = 1e-15);
    }

    #[test]
    fn z_stats_trivial_cases() {
        let (q, e) = z_basis_stats(0.0, &params(0.0, 0.0));
        assert_eq!((q, e), (0.0, 0.0));
        let p = params(10.0, 0.0);
        let (q, e) = z_basis_stats(0.5, &p);
        assert_abs_diff_eq!(q, 1.0 - (-0.05f64).exp(), epsilon = 1e-15);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn z_stats_dark_count_fixture() {
        let p = params(10.0, 1e-8);
        let (q, e) = z_basis_stats(0.5, &p);
        assert_abs_diff_eq!(q, 0.0487706, epsilon = 1e-7);
        assert_abs_diff_eq!(e, 2.0005e-7, epsilon = 2e-10);
    }

    #[test]
    fn z_error_approaches_half_at_vanishing_signal() {
        let p = params(80.0, 1e-8);
        let (_, e) = z_basis_stats(1e-6, &p);
        assert!(e > 0.45 && e <= 0.5, "e = {e}");
    }

    #[test]
    fn gain_non_increasing_in_loss() {
        let mut prev = f64::INFINITY;
        for loss in [0.0, 10.0, 20.0, 30.0, 40.0] {
            let (q, _) = z_basis_stats(0.5, &params(loss, 1e-8));
            assert!(q < prev);
            prev = q;
        }
    }

    #[test]
    fn x_stats_trivial_and_symmetry() {
        for e in Encoding::ALL {
            assert_eq!(x_basis_stats(0.0, e, &params(0.0, 0.0)), (0.0, 0.0));
        }
        // Z settings are exactly unbiased in X
        for mu in [0.1, 0.5, 1.0] {
            let p = params(13.0, 1e-6);
            let (q0, q1) = x_basis_stats(mu, Encoding::Z0, &p);
            assert_eq!(q0, q1);
            let (r0, r1) = x_basis_stats(mu, Encoding::Z1, &p);
            assert_eq!((q0, q1), (r0, r1));
            // probability closure with inconclusive mass allowed
            assert!(q0 + q1 <= 1.0);
        }
    }

    #[test]
    fn x_stats_matched_setting() {
        let p = params(10.0, 1e-8);
        let (q0, q1) = x_basis_stats(0.5, Encoding::X0, &p);
        assert_abs_diff_eq!(q0, 1.0 - (-0.05f64).exp(), epsilon = 1e-6);
        let p_c = 1.0 - (1.0 - 1e-8) * (-0.05f64).exp();
        assert_abs_diff_eq!(q1, 1e-8 * (1.0 - p_c) + p_c * 1e-8 / 2.0, epsilon = 1e-12);
        // mirrored setting swaps the outcomes exactly
        let (m0, m1) = x_basis_stats(0.5, Encoding::X1, &p);
        assert_eq!((q0, q1), (m1, m0));
    }

    #[test]
    fn observation_set_closure_and_vacuum() {
        let ints = Intensities::new(0.5, 0.1, 0.0).unwrap();
        let obs = observation_set(&ints, &params(0.0, 0.0));
        assert_eq!(obs.vacuum.gain_z, 0.0);
        for o in obs.iter() {
            assert!((0.0..=1.0).contains(&o.gain_z));
            assert!((0.0..=1.0).contains(&o.error_z));
            for rates in o.x_rates {
                assert!(rates[0] + rates[1] <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn observations_csv_round_trip() {
        let ints = Intensities::new(0.5, 0.1, 0.0).unwrap();
        let obs = observation_set(&ints, &params(20.0, 1e-8));
        let csv = obs.to_csv();
        let back = ObservationSet::from_csv(&csv).unwrap();
        assert_eq!(obs.signal.gain_z, back.signal.gain_z);
        assert_eq!(obs.weak.x_rates, back.weak.x_rates);
        assert_eq!(obs.vacuum.mu, back.vacuum.mu);
    }

    #[test]
    fn observations_csv_rejects_garbage() {
        assert!(ObservationSet::from_csv("").is_err());
        assert!(ObservationSet::from_csv("role,mu\nsignal,0.5").is_err());
        let ints = Intensities::new(0.5, 0.1, 0.0).unwrap();
        let csv = observation_set(&ints, &params(20.0, 1e-8)).to_csv();
        let truncated: String = csv.lines().take(2).collect::<Vec<_>>().join("\n");
        assert!(ObservationSet::from_csv(&truncated).is_err());
    }

    #[test]
    fn beamsplitter_is_orthogonal() {
        for m in [3, 6, 9] {
            let b = beamsplitter_basis_change(m);
            let gram = b.transpose() * &b;
            let eye = DMatrix::identity(gram.nrows(), gram.ncols());
            assert!((gram - eye).amax() < 1e-12, "truncation {m}");
        }
    }

    #[test]
    fn honest_operators_are_povm_elements() {
        let p = params(20.0, 1e-8);
        for m in [5, 9] {
            let j = honest_z_operator(&p, m);
            for &v in j.matrix().diagonal().iter() {
                assert!((0.0..=1.0).contains(&v));
            }
            for outcome in 0..2 {
                let l = honest_x_operator(&p, m, outcome);
                let eig = l.matrix().clone().symmetric_eigen().eigenvalues;
                for &v in eig.iter() {
                    assert!(v >= -1e-12 && v <= 1.0 + 1e-12, "eig {v}");
                }
            }
        }
    }

    #[test]
    fn true_tag1_yield_at_perfect_randomisation() {
        let p = params(10.0, 1e-8);
        let model = SpectralModel::build(0.5, 1.0, 9).unwrap();
        let truth = true_tagged_quantities(&model, &p).unwrap();
        let eta = p.transmittance();
        let expect = 1.0 - (1.0 - 1e-8f64).powi(2) * (1.0 - eta);
        assert_abs_diff_eq!(truth.yield_tag1, expect, epsilon = 1e-12);
    }

    #[test]
    fn true_phase_error_vanishes_without_darks() {
        let p = params(10.0, 0.0);
        let model = SpectralModel::build(0.5, 1.0, 9).unwrap();
        let truth = true_tagged_quantities(&model, &p).unwrap();
        assert!(truth.phase_error_tag1.abs() < 1e-12);
    }

    #[test]
    fn tagged_truth_regression_fixture() {
        // frozen output of this oracle at the reference operating point
        let p = params(10.0, 1e-8);
        let model = SpectralModel::build(0.5, 0.992407, 9).unwrap();
        let truth = true_tagged_quantities(&model, &p).unwrap();
        assert!(truth.yield_tag1 > 0.09 && truth.yield_tag1 < 0.11);
        assert!(truth.phase_error_tag1 >= 0.0 && truth.phase_error_tag1 < 1e-3);
    }

    #[test]
    fn monte_carlo_matches_analytic_smoke() {
        let p = params(13.0, 1e-5);
        let mu = 0.5;
        let n = 1_000_000u64;
        let mut rng = ChaCha12Rng::seed_from_u64(7);

        let (qz, ez) = z_basis_stats(mu, &p);
        let zc = mc::simulate_z(mu, &p, n, &mut rng);
        let sigma_q = (qz * (1.0 - qz) / n as f64).sqrt();
        assert!(
            (zc.conclusive as f64 / n as f64 - qz).abs() < 3.0 * sigma_q,
            "gain off: {} vs {qz}",
            zc.conclusive as f64 / n as f64
        );
        let joint = ez * qz;
        let sigma_e = (joint * (1.0 - joint) / n as f64).sqrt();
        assert!(
            (zc.wrong_bit as f64 / n as f64 - joint).abs() < 3.0 * sigma_e.max(3.0 / n as f64),
            "errors off"
        );

        for e in Encoding::ALL {
            let (q0, q1) = x_basis_stats(mu, e, &p);
            let xc = mc::simulate_x(mu, e, &p, n, &mut rng);
            for (count, expect) in [(xc.outcome0, q0), (xc.outcome1, q1)] {
                let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
                assert!(
                    (count as f64 / n as f64 - expect).abs()
                        < 3.0 * sigma.max(3.0 / n as f64),
                    "{e:?} off: {} vs {expect}",
                    count as f64 / n as f64
                );
            }
        }
    }
}
