//! Browser bindings: a stand run with wingbeat-averaged forces, the observer
//! step response, and the gait joint angles.

use wasm_bindgen::prelude::*;

use morphwing::dynamics::{tethered_simulate, BodyWrench, MountPose};
use morphwing::harness::metrics::{phase_average, rmse, PHASE_BINS};
use morphwing::harness::pipeline::{observe_condition, observe_series};
use morphwing::harness::Config;
use morphwing::observer::extract_body_force;
use morphwing::so3::Vec3;
use morphwing::testbed::{generate_condition, ExperimentCondition, GaitParams, JointMotion, NoiseConfig};
use morphwing::{Error, Result};

fn js_error(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Phase-averaged truth and observer curves for one stand condition.
#[wasm_bindgen]
pub struct ForceRun {
    curves: Vec<f64>,
    rmse: Vec<f64>,
    downstroke: f64,
    upstroke: f64,
}

#[wasm_bindgen]
impl ForceRun {
    /// `PHASE_BINS` rows of `[phase %, truth x y z, observer x y z]`.
    pub fn curves(&self) -> Vec<f64> {
        self.curves.clone()
    }

    /// Observer RMSE per axis after the first cycle (N).
    pub fn rmse(&self) -> Vec<f64> {
        self.rmse.clone()
    }

    pub fn downstroke(&self) -> f64 {
        self.downstroke
    }

    pub fn upstroke(&self) -> f64 {
        self.upstroke
    }
}

/// Simulates ten wingbeats on the stand and runs the observer with a gain
/// of `bandwidth_ratio` times the flap rate.
#[wasm_bindgen]
pub fn run_condition(
    frequency: f64,
    wind: f64,
    pitch: f64,
    bandwidth_ratio: f64,
    wing_mass_error: f64,
    noisy: bool,
    seed: u64,
) -> std::result::Result<ForceRun, JsError> {
    simulate_condition(frequency, wind, pitch, bandwidth_ratio, wing_mass_error, noisy, seed).map_err(js_error)
}

pub fn simulate_condition(
    frequency: f64,
    wind: f64,
    pitch: f64,
    bandwidth_ratio: f64,
    wing_mass_error: f64,
    noisy: bool,
    seed: u64,
) -> Result<ForceRun> {
    let mut config = Config { seed, ..Config::default() };
    config.observer.wing_mass_error = wing_mass_error;
    config.observer.bandwidth_ratio = Some(bandwidth_ratio);
    config.validate()?;
    let mut spec = config.dataset_spec();
    if !noisy {
        spec.noise = NoiseConfig::none();
    }
    let c = ExperimentCondition { frequency, wind, pitch };
    let data = generate_condition(&spec, 0, &c)?;
    let est = observe_condition(&data, config.observer.gain_for(frequency), &config.observer_morphology())?;

    let start = (1.0 / (frequency * data.dt)).round() as usize;
    let times: Vec<f64> = (start..data.len()).map(|k| data.time(k)).collect();
    let bounds = data.gait.stroke_boundaries();
    let truth = phase_average(&times, &data.truth[start..], frequency, bounds)?;
    let observed = phase_average(&times, &est[start..], frequency, bounds)?;
    let phase = truth.phase_percent();
    let mut curves = Vec::with_capacity(7 * PHASE_BINS);
    for (i, p) in phase.iter().enumerate() {
        curves.push(*p);
        curves.extend(truth.mean[i].iter());
        curves.extend(observed.mean[i].iter());
    }
    let e = rmse(&data.truth[start..], &est[start..])?;
    Ok(ForceRun { curves, rmse: e.to_vec(), downstroke: bounds.0, upstroke: bounds.1 })
}

/// Observer response to a constant vertical force applied to the wings-still
/// stand. Rows of `[t, estimated F_z, A(1 − e^(−K t))]`.
#[wasm_bindgen]
pub fn step_response(gain: f64, force: f64, duration: f64) -> std::result::Result<Vec<f64>, JsError> {
    step_rows(gain, force, duration).map_err(js_error)
}

pub fn step_rows(gain: f64, force: f64, duration: f64) -> Result<Vec<f64>> {
    if !(gain > 0.0 && duration > 0.0 && force.is_finite()) {
        return Err(Error::InvalidArgument("gain and duration must be positive".into()));
    }
    let params = Config::default().morphology();
    let still = GaitParams { frequency: 1.0, joints: [JointMotion::default(); 8] };
    let dt = 1.0 / 7000.0;
    let n = (duration / dt).ceil() as usize + 1;
    let samples = tethered_simulate(
        &still,
        &MountPose::default(),
        |_, _| BodyWrench::from_force(Vec3::new(0.0, 0.0, force)),
        &params,
        dt,
        n,
    )?;
    let r = observe_series(samples.iter().map(|s| (s.t, s.state.clone(), s.reaction.generalized())), gain, &params)?;
    // The first sample only seeds the observer, so the applied force is
    // seen from t = 0 onward.
    let stride = (n / 400).max(1);
    let mut out = Vec::new();
    for (s, r) in samples.iter().zip(&r).step_by(stride) {
        out.extend([s.t, extract_body_force(r).z, force * (1.0 - (-gain * s.t).exp())]);
    }
    Ok(out)
}

/// Joint angles over one wingbeat, rows of `[phase %, 8 angles]`, for the
/// stand gait with its default left/right asymmetry.
#[wasm_bindgen]
pub fn gait_cycle(frequency: f64, points: usize) -> std::result::Result<Vec<f64>, JsError> {
    gait_rows(frequency, points).map_err(js_error)
}

pub fn gait_rows(frequency: f64, points: usize) -> Result<Vec<f64>> {
    let gait = Config::default().gait.params(frequency)?;
    let mut out = Vec::with_capacity(points * 9);
    for k in 0..points {
        let t = k as f64 / points as f64 * gait.period();
        let (q, _) = gait.joints_from_shaft(gait.shaft_angle(t), gait.shaft_rate());
        out.push(100.0 * k as f64 / points as f64);
        out.extend(q.iter());
    }
    Ok(out)
}
