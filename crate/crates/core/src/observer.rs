//! Conjugate-momentum residual observer.
//!
//! With `p = M(q) q_d` and `Ṁ = C + Cᵀ`, the momentum rate is
//! `ṗ = Cᵀ q_d − G + τ_known + τ_ext`. The residual
//!
//! ```text
//! r(t) = K ( p(t) − p(0) − ∫₀ᵗ (τ_known + Cᵀ q_d − G + r) ds )
//! ```
//!
//! therefore obeys `ṙ = K (τ_ext − r)`: a first-order low-pass of the
//! unknown generalized force, channel by channel, with time constants
//! `1/K_ii`. `τ_known` is `B_m u_m` plus any other measured load, such as
//! the mount wrench of a tethered run.

use crate::dynamics::{AeroInputMap, BodyWrench, DynamicsTerms, GeneralizedForce};
use crate::kinematics::{GeneralizedState, MorphologyParams, VelocityVector};
use crate::so3::Vec3;
use crate::{Error, Result};

/// Default per-channel gain: 100 Hz bandwidth.
pub const DEFAULT_GAIN: f64 = 2.0 * std::f64::consts::PI * 100.0;

#[derive(Clone, Debug)]
pub struct MomentumObserver {
    gain: VelocityVector,
    residual: GeneralizedForce,
    integral: GeneralizedForce,
    p0: VelocityVector,
    /// `Cᵀ q_d − G + τ_known` at the previous sample.
    prev_integrand: GeneralizedForce,
    prev_model: GeneralizedForce,
    primed: bool,
    samples: usize,
    params: MorphologyParams,
}

impl MomentumObserver {
    /// `gain` holds the diagonal of `K` (1/s).
    pub fn new(state: &GeneralizedState, gain: VelocityVector, params: &MorphologyParams) -> Result<Self> {
        if let Some(i) = gain.iter().position(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::InvalidArgument(format!("observer gain {i} must be positive, got {}", gain[i])));
        }
        params.validate()?;
        if !state.is_finite() {
            return Err(Error::NumericFault { sample: 0, reason: "non-finite initial state".into() });
        }
        let terms = DynamicsTerms::evaluate(state, params, AeroInputMap::BodyWrench);
        let qd = state.velocity_vector();
        let model = terms.coriolis.transpose() * qd - terms.gravity;
        Ok(MomentumObserver {
            gain,
            residual: GeneralizedForce::zeros(),
            integral: GeneralizedForce::zeros(),
            p0: terms.momentum(&qd),
            prev_integrand: model,
            prev_model: model,
            primed: false,
            samples: 0,
            params: params.clone(),
        })
    }

    pub fn with_uniform_gain(state: &GeneralizedState, gain: f64, params: &MorphologyParams) -> Result<Self> {
        Self::new(state, VelocityVector::from_element(gain), params)
    }

    /// Supplies the known generalized input at the initial instant, so the
    /// first quadrature interval uses both endpoints.
    pub fn with_initial_input(mut self, known: &GeneralizedForce) -> Self {
        self.prev_integrand = self.prev_model + known;
        self.primed = true;
        self
    }

    pub fn residual(&self) -> &GeneralizedForce {
        &self.residual
    }

    pub fn initial_momentum(&self) -> &VelocityVector {
        &self.p0
    }

    pub fn gain(&self) -> &VelocityVector {
        &self.gain
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Advances to the next sample, `dt` after the previous one.
    ///
    /// The integral is trapezoidal; the residual term inside it is treated
    /// implicitly, which makes each channel a bilinear first-order filter.
    pub fn update(&mut self, state: &GeneralizedState, known: &GeneralizedForce, dt: f64) -> Result<&GeneralizedForce> {
        let sample = self.samples + 1;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if !state.is_finite() || known.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericFault { sample, reason: "non-finite observer input".into() });
        }
        let terms = DynamicsTerms::evaluate(state, &self.params, AeroInputMap::BodyWrench);
        let qd = state.velocity_vector();
        let model = terms.coriolis.transpose() * qd - terms.gravity;
        let integrand = model + known;
        if !self.primed {
            self.prev_integrand = self.prev_model + known;
            self.primed = true;
        }
        let p = terms.momentum(&qd);
        let half = 0.5 * dt;
        let partial = self.integral + (self.prev_integrand + self.residual + integrand) * half;
        for i in 0..self.residual.len() {
            let k = self.gain[i];
            self.residual[i] = k * (p[i] - self.p0[i] - partial[i]) / (1.0 + k * half);
        }
        self.integral = partial + self.residual * half;
        if self.residual.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericFault { sample, reason: "non-finite residual".into() });
        }
        self.prev_integrand = integrand;
        self.prev_model = model;
        self.samples = sample;
        Ok(&self.residual)
    }
}

/// Translational rows of the residual: the estimated body force (N).
pub fn extract_body_force(residual: &GeneralizedForce) -> Vec3 {
    BodyWrench::from_rows(residual).force
}

/// Per-channel time constants `1/K_ii`.
pub fn convergence_rate(gain: &VelocityVector) -> VelocityVector {
    gain.map(|k| 1.0 / k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{step, AeroInput, StepInputs};
    use crate::kinematics::test_support::random_state;
    use crate::kinematics::JointVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_from_rest() {
        let p = MorphologyParams::default();
        let obs = MomentumObserver::with_uniform_gain(&GeneralizedState::default(), 50.0, &p).unwrap();
        assert_eq!(*obs.initial_momentum(), VelocityVector::zeros());
        assert_eq!(*obs.residual(), GeneralizedForce::zeros());
    }

    #[test]
    fn init_momentum_is_mass_times_velocity() {
        let p = MorphologyParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_state(&mut rng, 1.0);
        let obs = MomentumObserver::with_uniform_gain(&s, 50.0, &p).unwrap();
        let direct = crate::dynamics::mass_matrix(&s, &p) * s.velocity_vector();
        assert!((obs.initial_momentum() - direct).norm() < 1e-12);
        assert_eq!(*obs.residual(), GeneralizedForce::zeros());
    }

    #[test]
    fn rejects_bad_gain_and_nan() {
        let p = MorphologyParams::default();
        let s = GeneralizedState::default();
        let mut gain = VelocityVector::from_element(10.0);
        gain[4] = 0.0;
        assert!(matches!(MomentumObserver::new(&s, gain, &p), Err(Error::InvalidArgument(_))));
        let mut obs = MomentumObserver::with_uniform_gain(&s, 10.0, &p).unwrap();
        obs.update(&s, &GeneralizedForce::zeros(), 1e-3).unwrap();
        let mut bad = s.clone();
        bad.joints[2] = f64::NAN;
        match obs.update(&bad, &GeneralizedForce::zeros(), 1e-3) {
            Err(Error::NumericFault { sample, .. }) => assert_eq!(sample, 2),
            other => panic!("expected fault, got {other:?}"),
        }
    }

    #[test]
    fn residual_stays_zero_for_compensated_rest() {
        let p = MorphologyParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = random_state(&mut rng, 1.0);
        s.set_velocity_vector(&VelocityVector::zeros());
        let g = crate::dynamics::gravity_vector(&s, &p);
        let mut obs = MomentumObserver::with_uniform_gain(&s, 100.0, &p).unwrap().with_initial_input(&g);
        for _ in 0..1000 {
            let r = obs.update(&s, &g, 1e-3).unwrap();
            assert!(r.norm() < 1e-12);
        }
    }

    /// Free robot pushed by a constant generalized force on every channel.
    fn step_response(gain: f64, dt: f64, duration: f64) -> (Vec<f64>, Vec<GeneralizedForce>, GeneralizedForce) {
        let p = MorphologyParams::default();
        let mut a = GeneralizedForce::zeros();
        // Magnitudes sized to the inertia of each channel: body torque,
        // body force, joint torques.
        for i in 0..3 {
            a[i] = 1e-4 * (1.0 + i as f64 * 0.1);
        }
        for i in 3..6 {
            a[i] = 0.01 * (1.0 + i as f64 * 0.1);
        }
        for i in 6..14 {
            a[i] = 1e-5 * (1.0 + (i - 6) as f64 * 0.2);
        }
        let inputs = StepInputs { aero: AeroInput::Generalized(a), motor: JointVector::zeros() };
        let mut s = GeneralizedState::default();
        let mut obs =
            MomentumObserver::with_uniform_gain(&s, gain, &p).unwrap().with_initial_input(&GeneralizedForce::zeros());
        let n = (duration / dt).round() as usize;
        let mut times = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        for k in 1..=n {
            s = step(&s, &inputs, dt, &p).unwrap();
            out.push(*obs.update(&s, &GeneralizedForce::zeros(), dt).unwrap());
            times.push(k as f64 * dt);
        }
        (times, out, a)
    }

    #[test]
    fn constant_force_step_response() {
        let (times, r, a) = step_response(50.0, 1e-5, 0.1);
        for (t, ri) in times.iter().zip(&r) {
            for i in 0..14 {
                let expected = a[i] * (1.0 - (-50.0 * t).exp());
                let err = (ri[i] - expected).abs();
                assert!(err < 1e-6 && err < 1e-4 * a[i].abs(), "channel {i} at t={t}: {} vs {expected}", ri[i]);
            }
        }
    }

    fn settling_time(times: &[f64], r: &[GeneralizedForce], a: &GeneralizedForce, channel: usize) -> f64 {
        let target = 0.95 * a[channel];
        let k = r.iter().position(|x| x[channel] >= target).unwrap();
        // Linear interpolation between the bracketing samples.
        let (t0, t1) = (if k == 0 { 0.0 } else { times[k - 1] }, times[k]);
        let (y0, y1) = (if k == 0 { 0.0 } else { r[k - 1][channel] }, r[k][channel]);
        t0 + (target - y0) / (y1 - y0) * (t1 - t0)
    }

    #[test]
    fn convergence_time_constants() {
        let tau = convergence_rate(&VelocityVector::from_element(50.0));
        assert!(tau.iter().all(|t| (t - 0.02).abs() < 1e-15));

        let (t1, r1, a) = step_response(50.0, 1e-5, 0.1);
        let (t2, r2, _) = step_response(100.0, 1e-5, 0.05);
        for ch in [0, 4, 9] {
            let s1 = settling_time(&t1, &r1, &a, ch);
            let s2 = settling_time(&t2, &r2, &a, ch);
            assert!((s1 / (3.0 * 0.02) - 1.0).abs() < 0.05, "settling {s1}");
            assert!((s1 / s2 / 2.0 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn sinusoidal_force_frequency_response() {
        // Rigid channelwise filter check on the translational rows with
        // gravity off and joints locked by compensating torques.
        let p = MorphologyParams { gravity: 0.0, ..Default::default() };
        let omega_f = 2.0 * std::f64::consts::PI * 3.0;
        let k = 100.0 * omega_f;
        let dt = 1e-5;
        let amp = 0.02;
        let mut s = GeneralizedState::default();
        let mut obs =
            MomentumObserver::with_uniform_gain(&s, k, &p).unwrap().with_initial_input(&GeneralizedForce::zeros());
        let periods = 4.0;
        let n = (periods * 2.0 * std::f64::consts::PI / omega_f / dt).round() as usize;
        let mut last_cycle = Vec::new();
        let cycle_start = n - (2.0 * std::f64::consts::PI / omega_f / dt).round() as usize;
        for j in 0..n {
            let t_mid = (j as f64 + 0.5) * dt;
            let mut f = GeneralizedForce::zeros();
            f[5] = amp * (omega_f * t_mid).sin();
            s = step(&s, &StepInputs { aero: AeroInput::Generalized(f), motor: JointVector::zeros() }, dt, &p).unwrap();
            let r = obs.update(&s, &GeneralizedForce::zeros(), dt).unwrap();
            if j >= cycle_start {
                last_cycle.push(((j + 1) as f64 * dt, r[5]));
            }
        }
        // Project onto sin/cos over the last full cycle.
        let (mut a_s, mut a_c) = (0.0, 0.0);
        for (t, y) in &last_cycle {
            a_s += y * (omega_f * t).sin();
            a_c += y * (omega_f * t).cos();
        }
        let norm = 2.0 / last_cycle.len() as f64;
        let (a_s, a_c) = (a_s * norm, a_c * norm);
        let gain = (a_s * a_s + a_c * a_c).sqrt() / amp;
        let lag = (-a_c).atan2(a_s);
        let expected_gain = k / (k * k + omega_f * omega_f).sqrt();
        let expected_lag = (omega_f / k).atan();
        assert!((gain / expected_gain - 1.0).abs() < 0.01, "gain {gain}");
        assert!((lag / expected_lag - 1.0).abs() < 0.01, "lag {lag} vs {expected_lag}");
    }

    #[test]
    fn body_force_extraction() {
        assert_eq!(extract_body_force(&GeneralizedForce::zeros()), Vec3::zeros());
        let mut r = GeneralizedForce::zeros();
        r[3] = 0.1;
        r[4] = -0.05;
        r[5] = 0.2;
        r[0] = 7.0;
        assert_eq!(extract_body_force(&r), Vec3::new(0.1, -0.05, 0.2));
    }
}
