use crate::dynamics::{propagate, EciState, ForceConfig};

use super::{diagonal, FilterError, ModeConfig, StateMatrix, StateVector, UkfConfig, STATE_DIM};

pub const SIGMA_COUNT: usize = 2 * STATE_DIM + 1;

const JITTER_START: f64 = 1e-9;
const JITTER_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoints {
    pub points: [StateVector; SIGMA_COUNT],
    pub mean_weights: [f64; SIGMA_COUNT],
    pub cov_weights: [f64; SIGMA_COUNT],
}

fn weights(cfg: &UkfConfig) -> ([f64; SIGMA_COUNT], [f64; SIGMA_COUNT]) {
    let n = STATE_DIM as f64;
    let lambda = cfg.lambda();
    let mut wm = [0.5 / (n + lambda); SIGMA_COUNT];
    let mut wc = wm;
    wm[0] = lambda / (n + lambda);
    wc[0] = wm[0] + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    (wm, wc)
}

/// Lower Cholesky factor of a symmetrized covariance. On failure, adds
/// diagonal jitter proportional to each diagonal entry, escalating by 10x
/// from 1e-9 to 1e-3.
pub fn sqrt_psd(cov: &StateMatrix) -> Result<StateMatrix, FilterError> {
    let sym = 0.5 * (cov + cov.transpose());
    if let Some(ch) = sym.cholesky() {
        return Ok(ch.l());
    }
    let diag = sym.diagonal();
    let fallback = diag.iter().map(|d| d.abs()).fold(0.0, f64::max).max(1e-12);
    let scale = diag.map(|d| if d > 0.0 { d } else { fallback });
    let mut eps = JITTER_START;
    while eps <= JITTER_LIMIT * 1.000001 {
        let jittered = sym + StateMatrix::from_diagonal(&(scale * eps));
        if let Some(ch) = jittered.cholesky() {
            return Ok(ch.l());
        }
        eps *= 10.0;
    }
    Err(FilterError::NotPositiveDefinite)
}

/// Symmetrizes and, if needed, jitters a covariance so it admits a Cholesky
/// factorization.
pub(crate) fn regularize(cov: &StateMatrix) -> Result<StateMatrix, FilterError> {
    let l = sqrt_psd(cov)?;
    let p = l * l.transpose();
    Ok(0.5 * (p + p.transpose()))
}

pub fn sigma_points(mean: &StateVector, cov: &StateMatrix, cfg: &UkfConfig) -> Result<SigmaPoints, FilterError> {
    let n = STATE_DIM as f64;
    let l = sqrt_psd(&(cov * (n + cfg.lambda())))?;
    let mut points = [*mean; SIGMA_COUNT];
    for k in 0..STATE_DIM {
        let col = l.column(k);
        points[1 + k] = mean + col;
        points[1 + STATE_DIM + k] = mean - col;
    }
    let (mean_weights, cov_weights) = weights(cfg);
    Ok(SigmaPoints { points, mean_weights, cov_weights })
}

/// Weighted moments of transformed sigma points. The mean is accumulated as
/// an offset from the central point to limit cancellation, since the
/// central weight is large and negative for small alpha.
fn moments(
    points: &[StateVector; SIGMA_COUNT],
    wm: &[f64; SIGMA_COUNT],
    wc: &[f64; SIGMA_COUNT],
) -> (StateVector, StateMatrix) {
    let center = points[0];
    let mut offset = StateVector::zeros();
    for i in 1..SIGMA_COUNT {
        offset += wm[i] * (points[i] - center);
    }
    let mean = center + offset;
    let mut cov = StateMatrix::zeros();
    for i in 0..SIGMA_COUNT {
        let d = points[i] - mean;
        cov += wc[i] * d * d.transpose();
    }
    (mean, 0.5 * (cov + cov.transpose()))
}

/// Integration settings shared by every prediction.
#[derive(Debug, Clone, Copy)]
pub struct PredictContext<'a> {
    pub force: &'a ForceConfig,
    pub ukf: &'a UkfConfig,
    pub max_step_s: f64,
    pub noise_interval_s: f64,
}

/// Propagates mean and covariance over `dt_s` seconds with one unscented
/// transform, then adds the mode's process noise scaled by elapsed time and
/// `q_scale`.
pub fn ukf_predict(
    mode: &ModeConfig,
    mean: &StateVector,
    cov: &StateMatrix,
    dt_s: f64,
    bstar: f64,
    q_scale: f64,
    ctx: &PredictContext<'_>,
) -> Result<(StateVector, StateMatrix), FilterError> {
    if dt_s == 0.0 {
        return Ok((*mean, *cov));
    }
    let sp = sigma_points(mean, cov, ctx.ukf)?;
    let mut moved = sp.points;
    for p in moved.iter_mut() {
        let s = propagate(&EciState::from_vector(p), 0.0, dt_s, ctx.force, bstar, ctx.max_step_s)
            .map_err(FilterError::ReentryDuringPredict)?;
        *p = s.to_vector();
    }
    let (m, p) = moments(&moved, &sp.mean_weights, &sp.cov_weights);
    let q = diagonal(mode.sigma_pos, mode.sigma_vel) * (dt_s.abs() / ctx.noise_interval_s * q_scale);
    Ok((m, p + q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult {
    pub mean: StateVector,
    pub cov: StateMatrix,
    pub innovation: StateVector,
    pub innovation_cov: StateMatrix,
    pub log_likelihood: f64,
}

/// log N(y; 0, S).
pub fn log_gaussian_density(y: &StateVector, s: &StateMatrix) -> Result<f64, FilterError> {
    let ch = (0.5 * (s + s.transpose())).cholesky().ok_or(FilterError::SingularInnovationCovariance)?;
    let z = ch.l().solve_lower_triangular(y).ok_or(FilterError::SingularInnovationCovariance)?;
    let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let n = STATE_DIM as f64;
    Ok(-0.5 * (z.norm_squared() + log_det + n * (2.0 * std::f64::consts::PI).ln()))
}

/// Observation update with an identity measurement model on the full state.
/// Moments are formed through the unscented transform; the covariance uses
/// the Joseph form, which is exact for the identity model.
pub fn ukf_update(
    pred_mean: &StateVector,
    pred_cov: &StateMatrix,
    obs: &StateVector,
    r: &StateMatrix,
    cfg: &UkfConfig,
) -> Result<UpdateResult, FilterError> {
    let sp = sigma_points(pred_mean, pred_cov, cfg)?;
    // identity measurement: z_i = x_i
    let (z_mean, z_cov) = moments(&sp.points, &sp.mean_weights, &sp.cov_weights);
    let mut cross = StateMatrix::zeros();
    for i in 0..SIGMA_COUNT {
        cross += sp.cov_weights[i] * (sp.points[i] - pred_mean) * (sp.points[i] - z_mean).transpose();
    }
    let s = z_cov + r;
    let s = 0.5 * (s + s.transpose());
    let ch = s.cholesky().ok_or(FilterError::SingularInnovationCovariance)?;
    // K = Pxz S^-1  <=>  S K^T = Pxz^T
    let gain = ch.solve(&cross.transpose()).transpose();
    let innovation = obs - z_mean;
    let mean = pred_mean + gain * innovation;
    let i_k = StateMatrix::identity() - gain;
    let joseph = i_k * pred_cov * i_k.transpose() + gain * r * gain.transpose();
    let cov = regularize(&joseph)?;
    let log_likelihood = log_gaussian_density(&innovation, &s)?;
    Ok(UpdateResult { mean, cov, innovation, innovation_cov: s, log_likelihood })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{kepler_to_eci, KeplerElements, MU_EARTH};
    use crate::filter::{ImmConfig, ModeSet, ObsNoise};
    use crate::tle::Source;
    use nalgebra::SMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng) -> StateMatrix {
        let a = SMatrix::<f64, 6, 6>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        a * a.transpose() + StateMatrix::identity() * 0.1
    }

    #[test]
    fn weights_and_symmetry() {
        let cfg = UkfConfig::default();
        let (wm, wc) = weights(&cfg);
        assert!((wm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((wc[0] - (wm[0] + 1.0 - 1e-4 + 2.0)).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mean = StateVector::from_fn(|_, _| rng.random_range(-1e3..1e3));
        let cov = random_spd(&mut rng);
        let sp = sigma_points(&mean, &cov, &cfg).unwrap();
        let (m, p) = moments(&sp.points, &sp.mean_weights, &sp.cov_weights);
        assert!((m - mean).norm() < 1e-12 * mean.norm().max(1.0));
        assert!((p - cov).norm() < 1e-8 * cov.norm());
    }

    #[test]
    fn jitter_recovers_semidefinite_and_rejects_indefinite() {
        let mut rank_deficient = StateMatrix::zeros();
        rank_deficient[(0, 0)] = 1.0;
        rank_deficient[(1, 1)] = 4.0;
        assert!(sqrt_psd(&rank_deficient).is_ok());
        let mut indefinite = StateMatrix::identity();
        indefinite[(2, 2)] = -5.0;
        assert_eq!(sqrt_psd(&indefinite), Err(FilterError::NotPositiveDefinite));
    }

    fn ctx<'a>(force: &'a ForceConfig, ukf: &'a UkfConfig) -> PredictContext<'a> {
        let imm = ImmConfig::default();
        PredictContext { force, ukf, max_step_s: imm.max_step_s, noise_interval_s: imm.process_noise_interval_s }
    }

    fn orbit_state() -> StateVector {
        let el = KeplerElements { a: 6_921e3, e: 0.001, i: 0.9, raan: 0.4, argp: 0.2, mean_anomaly: 1.0 };
        kepler_to_eci(&el, MU_EARTH).unwrap().to_vector()
    }

    #[test]
    fn predict_zero_dt_is_identity() {
        let force = ForceConfig::default();
        let ukf = UkfConfig::default();
        let mean = orbit_state();
        let cov = ObsNoise::default().matrix(Source::Tle);
        let (m, p) = ukf_predict(&ModeSet::default().decay, &mean, &cov, 0.0, 1e-4, 4.0, &ctx(&force, &ukf)).unwrap();
        assert_eq!(m, mean);
        assert_eq!(p, cov);
    }

    #[test]
    fn process_noise_adds_psd_term() {
        let force = ForceConfig::default();
        let ukf = UkfConfig::default();
        let mean = orbit_state();
        let cov = ObsNoise::default().matrix(Source::Tle);
        let modes = ModeSet::default();
        let quiet = ModeConfig { sigma_pos: 1e-9, sigma_vel: 1e-12, altitude_scaled: false };
        let (m0, p0) = ukf_predict(&quiet, &mean, &cov, 3600.0, 1e-4, 1.0, &ctx(&force, &ukf)).unwrap();
        let (m1, p1) = ukf_predict(&modes.decay, &mean, &cov, 3600.0, 1e-4, 4.0, &ctx(&force, &ukf)).unwrap();
        assert_eq!(m0, m1);
        let diff = p1 - p0;
        let expected = diagonal(2000.0, 0.1) * (4.0 * 3600.0 / ImmConfig::default().process_noise_interval_s);
        assert!((diff - expected).norm() < 1e-6 * expected.norm());
        assert!(diff.symmetric_eigenvalues().iter().all(|e| *e >= -1e-6));
    }

    #[test]
    fn update_matches_linear_kalman() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_spd(&mut rng) * 1e4;
        let r = ObsNoise::default().matrix(Source::Tle);
        let x = StateVector::from_fn(|_, _| rng.random_range(-10.0..10.0));
        let z = x + StateVector::from_fn(|_, _| rng.random_range(-50.0..50.0));
        let res = ukf_update(&x, &p, &z, &r, &UkfConfig::default()).unwrap();
        let s = p + r;
        let k = p * s.try_inverse().unwrap();
        let mean = x + k * (z - x);
        let cov = (StateMatrix::identity() - k) * p;
        assert!((res.mean - mean).norm() < 1e-6 * mean.norm().max(1.0));
        assert!((res.cov - cov).norm() < 1e-6 * cov.norm());
    }

    #[test]
    fn zero_innovation_keeps_mean_and_maximizes_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_spd(&mut rng) * 100.0;
        let r = ObsNoise::default().matrix(Source::Tle);
        let x = orbit_state();
        let res = ukf_update(&x, &p, &x, &r, &UkfConfig::default()).unwrap();
        assert!((res.mean - x).norm() < 1e-6);
        for _ in 0..50 {
            let off = x + StateVector::from_fn(|_, _| rng.random_range(-5.0..5.0));
            let other = ukf_update(&x, &p, &off, &r, &UkfConfig::default()).unwrap();
            assert!(other.log_likelihood < res.log_likelihood);
        }
    }

    #[test]
    fn tighter_noise_pulls_harder() {
        let p = diagonal(2000.0, 2.0);
        let x = orbit_state();
        let z = x + StateVector::new(1500.0, -800.0, 300.0, 1.0, -0.5, 0.2);
        let noise = ObsNoise::default();
        let cfg = UkfConfig::default();
        let tle = ukf_update(&x, &p, &z, &noise.matrix(Source::Tle), &cfg).unwrap();
        let sup = ukf_update(&x, &p, &z, &noise.matrix(Source::Supgp), &cfg).unwrap();
        assert!((sup.mean - z).norm() < (tle.mean - z).norm());
    }

    #[test]
    fn log_likelihood_matches_density_oracle() {
        // diagonal S, innovation of exactly one sigma per component
        let s = diagonal(1500.0, 1.5);
        let y = StateVector::new(1500.0, 1500.0, 1500.0, 1.5, 1.5, 1.5);
        let direct: f64 = (0..6)
            .map(|k| {
                let var = s[(k, k)];
                -0.5 * (y[k] * y[k] / var) - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
            })
            .sum();
        let ll = log_gaussian_density(&y, &s).unwrap();
        assert!((ll - direct).abs() < 1e-10);
        assert_eq!(log_gaussian_density(&y, &StateMatrix::zeros()), Err(FilterError::SingularInnovationCovariance));
    }
}
