//! Key-rate assembly: combine certified bounds and observed statistics into
//! the asymptotic secret-key rate, optimise the signal intensity, and sweep
//! the loss grid.
//!
//! Rate per emitted key-group pulse:
//!
//!     (p'_1 - eps_val) Y_L [1 - h(e_ph_U)] - Q_Z f h(E_Z)
//!
//! floored at zero, with the raw phase-error bound clamped to 1/2 only
//! inside the entropy (h is symmetric about 1/2). Sifting and basis-choice
//! probabilities are set to one, their asymptotic limit.

use rayon::prelude::*;

use crate::channel::{observation_set, ChannelParams, Intensities, ObservationSet};
use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::fock::poisson_weight;
use crate::sdp::{
    build_phase_error_problem, build_yield_problem, phase_error_upper_bound, solve,
    virtual_states, yield_lower_bound, ModelSet,
};
use crate::spectral::SpectralModel;

/// Binary entropy in bits; h(0) = h(1) = 0. Inputs within 1e-12 of the unit
/// interval are clamped, anything further out is a domain error.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !x.is_finite() || x < -1e-12 || x > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    let x = x.clamp(0.0, 1.0);
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// One sweep entry.
#[derive(Debug, Clone, Copy)]
pub struct KeyRatePoint {
    pub loss_db: f64,
    pub q: f64,
    pub mu_s_opt: f64,
    pub yield_lower: f64,
    /// Raw certified upper bound on the tag-1 phase-error rate; 1.0 when the
    /// yield bound is zero and no phase-error SDP was solved (vacuous).
    pub e_ph_upper: f64,
    pub gain_z: f64,
    pub error_z: f64,
    pub rate: f64,
    pub reference_rate: f64,
    /// Set when every grid intensity certified to a zero rate.
    pub degraded: bool,
}

/// CSV schema of the sweep output, version 1.
pub const SWEEP_CSV_HEADER: &str =
    "loss_db,q,mu_s_opt,Y_L,e_ph_U,QZ_s,EZ_s,rate,reference_rate";

impl KeyRatePoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.loss_db,
            self.q,
            self.mu_s_opt,
            self.yield_lower,
            self.e_ph_upper,
            self.gain_z,
            self.error_z,
            self.rate,
            self.reference_rate
        )
    }
}

/// Write a sweep as CSV. The leading comment records the configured
/// correlation length; the asymptotic rate itself does not depend on it.
pub fn write_csv(points: &[KeyRatePoint], l_c: u32, out: &mut impl std::io::Write) -> Result<()> {
    writeln!(out, "# phasekey sweep v1 (l_c = {l_c}; asymptotic rate is l_c-independent)")?;
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for p in points {
        writeln!(out, "{}", p.csv_row())?;
    }
    Ok(())
}

/// The certified subkey rate. Negative values floor to zero; the eigenvalue
/// prefactor floors at zero if eps_val exceeds it.
pub fn subkey_rate(
    signal: &SpectralModel,
    yield_lower: f64,
    e_ph_upper: f64,
    gain_z: f64,
    error_z: f64,
    inefficiency: f64,
) -> Result<f64> {
    let prefactor = (signal.eigenvalue(1) - signal.eps_val()).max(0.0);
    let privacy = prefactor
        * yield_lower
        * (1.0 - binary_entropy(e_ph_upper.min(0.5))?);
    let correction = gain_z * inefficiency * binary_entropy(error_z)?;
    Ok((privacy - correction).max(0.0))
}

/// Ideal-phase-randomisation reference built from the exact honest-channel
/// single-photon yield and error rate. Deliberately optimistic (measured
/// bounds would sit below it), used for plots and sandwich tests.
pub fn reference_rate_ideal(mu_s: f64, params: &ChannelParams, inefficiency: f64) -> Result<f64> {
    let eta = params.transmittance();
    let p_d = params.dark_count_prob;
    let nc_signal = (1.0 - p_d) * (1.0 - eta);
    let nc_other = 1.0 - p_d;
    let y1 = 1.0 - nc_signal * nc_other;
    let e1 = if y1 > 0.0 {
        let out = crate::channel::detector_outcomes(nc_signal, nc_other);
        out.second / y1
    } else {
        0.0
    };
    let q1 = poisson_weight(1, mu_s) * y1;
    let (gain, error) = crate::channel::z_basis_stats(mu_s, params);
    let rate =
        q1 * (1.0 - binary_entropy(e1)?) - gain * inefficiency * binary_entropy(error)?;
    Ok(rate.max(0.0))
}

/// Everything certified at one (loss, mu_s) grid point.
#[derive(Debug, Clone, Copy)]
pub struct PointEvaluation {
    pub mu_s: f64,
    pub yield_lower: f64,
    pub e_ph_upper: f64,
    pub gain_z: f64,
    pub error_z: f64,
    pub rate: f64,
    pub reference_rate: f64,
}

/// Certify one point from externally supplied observations (measured or
/// simulated). The model intensities come from the observation set itself.
pub fn certify_observations(
    config: &ProtocolConfig,
    obs: &ObservationSet,
    loss_db: f64,
) -> Result<PointEvaluation> {
    let params = ChannelParams::new(loss_db, config.p_d)?;
    let models = ModelSet::build(
        obs.signal.mu,
        obs.weak.mu,
        obs.vacuum.mu,
        config.q,
        config.truncation,
    )?;
    certify(config, &models, obs, &params)
}

fn certify(
    config: &ProtocolConfig,
    models: &ModelSet,
    obs: &ObservationSet,
    params: &ChannelParams,
) -> Result<PointEvaluation> {
    let tol = config.solver_tol;
    let yield_cert = solve(&build_yield_problem(models, obs)?, tol)?;
    let yield_lower = yield_lower_bound(&yield_cert, &models.signal)?;

    let (e_ph_upper, rate) = if yield_lower > 0.0 {
        let vsp = virtual_states(models.signal.eigenvector(1))?;
        let cert0 = solve(&build_phase_error_problem(0, models, obs, &vsp)?, tol)?;
        let cert1 = solve(&build_phase_error_problem(1, models, obs, &vsp)?, tol)?;
        let e_ph =
            phase_error_upper_bound([&cert0, &cert1], &models.signal, yield_lower)?;
        let rate = subkey_rate(
            &models.signal,
            yield_lower,
            e_ph,
            obs.signal.gain_z,
            obs.signal.error_z,
            config.error_correction,
        )?;
        (e_ph, rate)
    } else {
        // no conclusive tag-1 detections certified; the vacuous bound is 1
        (1.0, 0.0)
    };

    Ok(PointEvaluation {
        mu_s: obs.signal.mu,
        yield_lower,
        e_ph_upper,
        gain_z: obs.signal.gain_z,
        error_z: obs.signal.error_z,
        rate,
        reference_rate: reference_rate_ideal(obs.signal.mu, params, config.error_correction)?,
    })
}

/// Full pipeline at one (loss, mu_s) point with simulated observations.
pub fn evaluate_point(
    config: &ProtocolConfig,
    loss_db: f64,
    mu_s: f64,
) -> Result<PointEvaluation> {
    let params = ChannelParams::new(loss_db, config.p_d)?;
    let intensities = Intensities::new(mu_s, mu_s * config.mu_w_ratio, 0.0)?;
    let obs = observation_set(&intensities, &params);
    let models = ModelSet::build(
        intensities.signal,
        intensities.weak,
        intensities.vacuum,
        config.q,
        config.truncation,
    )?;
    certify(config, &models, &obs, &params)
}

// Cheap per-candidate data from the yield stage: enough to bound the final
// rate from above without solving the phase-error SDPs.
struct YieldStage {
    index: usize,
    mu_s: f64,
    yield_lower: f64,
    gain_z: f64,
    error_z: f64,
    rate_upper: f64,
    reference_rate: f64,
}

fn yield_stage(config: &ProtocolConfig, loss_db: f64, index: usize, mu_s: f64) -> Result<YieldStage> {
    let params = ChannelParams::new(loss_db, config.p_d)?;
    let intensities = Intensities::new(mu_s, mu_s * config.mu_w_ratio, 0.0)?;
    let obs = observation_set(&intensities, &params);
    let models = ModelSet::build(
        intensities.signal,
        intensities.weak,
        intensities.vacuum,
        config.q,
        config.truncation,
    )?;
    let cert = solve(&build_yield_problem(&models, &obs)?, config.solver_tol)?;
    let yield_lower = yield_lower_bound(&cert, &models.signal)?;
    let prefactor = (models.signal.eigenvalue(1) - models.signal.eps_val()).max(0.0);
    let correction = obs.signal.gain_z
        * config.error_correction
        * binary_entropy(obs.signal.error_z)?;
    let rate_upper = (prefactor * yield_lower - correction).max(0.0);
    Ok(YieldStage {
        index,
        mu_s,
        yield_lower,
        gain_z: obs.signal.gain_z,
        error_z: obs.signal.error_z,
        rate_upper,
        reference_rate: reference_rate_ideal(mu_s, &params, config.error_correction)?,
    })
}

// Grid points that cannot be certified — spectral-gap or tag-degeneracy
// failures (e.g. mu_s = 1 at q = 1 where two Poisson weights tie exactly),
// or solves that stop short of the certification tolerance — are excluded
// from the optimisation rather than aborting it: omitting a candidate is
// conservative, and the reported optimum carries full certificates either
// way. Infeasibility still aborts; it means the observations themselves are
// inconsistent.
fn skippable(e: &Error) -> bool {
    matches!(e, Error::Gap(_) | Error::Degeneracy(_) | Error::SolverAccuracy(_))
}

fn stage_or_skip(res: Result<YieldStage>) -> Result<Option<YieldStage>> {
    match res {
        Ok(s) => Ok(Some(s)),
        Err(e) if skippable(&e) => {
            log::warn!("excluding grid intensity from optimisation: {e}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

const EVALUATION_WAVE: usize = 4;

/// Optimise the signal intensity at one loss point.
///
/// All grid intensities first pass through the cheap yield stage; the
/// expensive phase-error stage then runs in descending order of each
/// candidate's rate upper bound and stops as soon as the incumbent beats
/// every remaining bound. The evaluated set and the result are
/// deterministic. Ties break toward the smaller intensity.
pub fn optimize_mu_s(config: &ProtocolConfig, loss_db: f64) -> Result<KeyRatePoint> {
    if config.mu_s_grid.is_empty() {
        return Err(Error::Usage("empty signal-intensity grid".into()));
    }
    let staged: Vec<Option<YieldStage>> = config
        .mu_s_grid
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| stage_or_skip(yield_stage(config, loss_db, i, mu)))
        .collect::<Result<_>>()?;
    let candidates: Vec<YieldStage> = staged.into_iter().flatten().collect();
    if candidates.is_empty() {
        return Err(Error::Gap(format!(
            "no grid intensity admits certified bounds at loss {loss_db} dB, q {}",
            config.q
        )));
    }

    // order for the expensive stage: best possible rate first
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .rate_upper
            .partial_cmp(&candidates[a].rate_upper)
            .unwrap()
            .then(candidates[a].index.cmp(&candidates[b].index))
    });

    let mut best: Option<(usize, PointEvaluation)> = None; // (grid index, eval)
    let mut cursor = 0;
    while cursor < order.len() {
        let remaining_max = candidates[order[cursor]].rate_upper;
        if let Some((_, ref eval)) = best {
            if eval.rate > remaining_max {
                break;
            }
        }
        if remaining_max <= 0.0 {
            break;
        }
        let wave: Vec<usize> =
            order[cursor..(cursor + EVALUATION_WAVE).min(order.len())].to_vec();
        cursor += wave.len();
        let evals: Vec<(usize, Result<PointEvaluation>)> = wave
            .par_iter()
            .map(|&ci| {
                let c = &candidates[ci];
                (c.index, evaluate_point(config, loss_db, c.mu_s))
            })
            .collect();
        for (grid_index, eval) in evals {
            let eval = match eval {
                Ok(e) => e,
                Err(e) if skippable(&e) => {
                    log::warn!("excluding grid intensity from optimisation: {e}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let better = match &best {
                None => true,
                Some((bi, b)) => {
                    eval.rate > b.rate || (eval.rate == b.rate && grid_index < *bi)
                }
            };
            if better {
                best = Some((grid_index, eval));
            }
        }
    }

    if let Some((_, eval)) = best.filter(|(_, e)| e.rate > 0.0) {
        return Ok(KeyRatePoint {
            loss_db,
            q: config.q,
            mu_s_opt: eval.mu_s,
            yield_lower: eval.yield_lower,
            e_ph_upper: eval.e_ph_upper,
            gain_z: eval.gain_z,
            error_z: eval.error_z,
            rate: eval.rate,
            reference_rate: eval.reference_rate,
            degraded: false,
        });
    }

    // every certifiable intensity yields zero: report the smallest one
    let first = &candidates[0];
    log::warn!(
        "all grid intensities certify a zero rate at loss {loss_db} dB, q {}",
        config.q
    );
    Ok(KeyRatePoint {
        loss_db,
        q: config.q,
        mu_s_opt: first.mu_s,
        yield_lower: first.yield_lower,
        e_ph_upper: 1.0,
        gain_z: first.gain_z,
        error_z: first.error_z,
        rate: 0.0,
        reference_rate: first.reference_rate,
        degraded: true,
    })
}

/// One optimised point per loss-grid value, in grid order.
pub fn sweep_loss(config: &ProtocolConfig) -> Result<Vec<KeyRatePoint>> {
    if config.loss_grid_db.is_empty() {
        return Err(Error::Usage("empty loss grid".into()));
    }
    config
        .loss_grid_db
        .iter()
        .map(|&loss| optimize_mu_s(config, loss))
        .collect()
}
