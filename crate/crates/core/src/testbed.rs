//! Synthetic tethered test stand: prescribed gaits, a quasi-steady drag
//! model used as ground truth, and the condition grid.

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{tethered_simulate, BodyWrench, JointTrajectory, MountPose};
use crate::kinematics::{
    body_jacobians, body_orientations, com_positions, BodyId, GeneralizedState, JointVector, MorphologyParams, N_JOINTS,
};
use crate::so3::{rot_y, Vec3};
use crate::{Error, Result};

/// Sinusoidal motion of one joint: `mean + amplitude·cos(φ + phase)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointMotion {
    pub mean: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Periodic joint trajectories, all slaved to one shaft angle
/// `φ = 2π f t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaitParams {
    pub frequency: f64,
    /// Ordered like the joint block of `q_d`: left p, m, e, f then right.
    pub joints: [JointMotion; N_JOINTS],
}

impl GaitParams {
    /// Left motions mirrored onto the right side.
    pub fn symmetric(frequency: f64, left: [JointMotion; 4]) -> Result<Self> {
        let mut joints = [JointMotion::default(); N_JOINTS];
        joints[..4].copy_from_slice(&left);
        joints[4..].copy_from_slice(&left);
        let gait = GaitParams { frequency, joints };
        gait.validate()?;
        Ok(gait)
    }

    /// Scales the right amplitudes and delays the right phases, which
    /// breaks the lateral symmetry so the side force is not identically
    /// zero.
    pub fn with_lateral_asymmetry(mut self, amplitude_scale: f64, phase_lag: f64) -> Result<Self> {
        for j in &mut self.joints[4..] {
            j.amplitude *= amplitude_scale;
            j.phase -= phase_lag;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::Config(format!("flap frequency must be positive, got {}", self.frequency)));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if !(j.amplitude.is_finite() && j.amplitude >= 0.0) || !j.mean.is_finite() || !j.phase.is_finite() {
                return Err(Error::Config(format!("joint {i}: amplitudes must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    pub fn shaft_rate(&self) -> f64 {
        TAU * self.frequency
    }

    /// Shaft angle wrapped to `[0, 2π)`.
    pub fn shaft_angle(&self, t: f64) -> f64 {
        (self.shaft_rate() * t).rem_euclid(TAU)
    }

    /// Joint angles and rates from the shaft encoder reading.
    pub fn joints_from_shaft(&self, angle: f64, rate: f64) -> (JointVector, JointVector) {
        let mut q = JointVector::zeros();
        let mut qd = JointVector::zeros();
        for (i, j) in self.joints.iter().enumerate() {
            let (s, c) = (angle + j.phase).sin_cos();
            q[i] = j.mean + j.amplitude * c;
            qd[i] = -j.amplitude * rate * s;
        }
        (q, qd)
    }

    /// Cycle fractions in `[0, 1)` at which the downstroke and the upstroke
    /// begin: the maximum and minimum of the left plunge angle.
    pub fn stroke_boundaries(&self) -> (f64, f64) {
        let phase = self.joints[0].phase;
        // Adding zero turns a negative zero into zero.
        let down = (-phase / TAU).rem_euclid(1.0) + 0.0;
        (down, (down + 0.5).rem_euclid(1.0))
    }
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitConfig::default().symmetric_params(3.0).expect("default gait is valid")
    }
}

impl JointTrajectory for GaitParams {
    fn sample(&self, t: f64) -> (JointVector, JointVector, JointVector) {
        let w = self.shaft_rate();
        let mut q = JointVector::zeros();
        let mut qd = JointVector::zeros();
        let mut qdd = JointVector::zeros();
        for (i, j) in self.joints.iter().enumerate() {
            // Unwrapped angle keeps the sinusoid phase exact for long runs.
            let (s, c) = (w * t + j.phase).sin_cos();
            q[i] = j.mean + j.amplitude * c;
            qd[i] = -j.amplitude * w * s;
            qdd[i] = -j.amplitude * w * w * c;
        }
        (q, qd, qdd)
    }
}

/// `[gait]` table: one side's joint motions plus the lateral asymmetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitConfig {
    pub plunge: JointMotion,
    pub mediolateral: JointMotion,
    pub elbow: JointMotion,
    pub feathering: JointMotion,
    pub right_amplitude_scale: f64,
    pub right_phase_lag: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        // Plunge peaks at φ = 0, so the downstroke covers the first half
        // cycle; the elbow is most folded mid-upstroke.
        GaitConfig {
            plunge: JointMotion { mean: 0.0, amplitude: 0.6, phase: 0.0 },
            mediolateral: JointMotion { mean: 0.0, amplitude: 0.1, phase: 0.0 },
            elbow: JointMotion { mean: 0.4, amplitude: 0.4, phase: PI / 2.0 },
            feathering: JointMotion { mean: 0.0, amplitude: 0.15, phase: PI / 2.0 },
            right_amplitude_scale: 0.85,
            right_phase_lag: 0.25,
        }
    }
}

impl GaitConfig {
    fn left(&self) -> [JointMotion; 4] {
        [self.plunge, self.mediolateral, self.elbow, self.feathering]
    }

    /// The configured gait, asymmetry included.
    pub fn params(&self, frequency: f64) -> Result<GaitParams> {
        if !(self.right_amplitude_scale.is_finite() && self.right_amplitude_scale >= 0.0) {
            return Err(Error::Config("right_amplitude_scale must be non-negative".into()));
        }
        GaitParams::symmetric(frequency, self.left())?
            .with_lateral_asymmetry(self.right_amplitude_scale, self.right_phase_lag)
    }

    /// The configured left motions on both sides.
    pub fn symmetric_params(&self, frequency: f64) -> Result<GaitParams> {
        GaitParams::symmetric(frequency, self.left())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCondition {
    /// Hz.
    pub frequency: f64,
    /// m/s.
    pub wind: f64,
    /// Degrees, positive nose-up.
    pub pitch: f64,
}

impl ExperimentCondition {
    /// The load-cell mount: body at the origin, pitched about the world y
    /// axis.
    pub fn mount(&self) -> MountPose {
        MountPose { rotation: rot_y(-self.pitch.to_radians()), position: Vec3::zeros() }
    }

    /// Air velocity in the world frame. The fan sits ahead of the robot
    /// and blows toward −x.
    pub fn wind_velocity(&self) -> Vec3 {
        Vec3::new(-self.wind, 0.0, 0.0)
    }
}

pub const FREQUENCIES: [f64; 4] = [2.5, 3.0, 3.5, 4.0];
pub const WIND_SPEEDS: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
pub const PITCH_ANGLES: [f64; 5] = [0.0, -5.0, -10.0, -15.0, -20.0];
/// Wind speeds of the 40-condition preset.
pub const STANDARD_WIND_SPEEDS: [f64; 2] = [1.0, 2.0];

/// Ordered list of conditions; the index is the condition id.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionGrid {
    conditions: Vec<ExperimentCondition>,
}

impl ConditionGrid {
    /// Full cross product, frequency outermost and pitch innermost.
    pub fn cross(frequencies: &[f64], winds: &[f64], pitches: &[f64]) -> Result<Self> {
        for (name, list) in [("frequencies", frequencies), ("wind speeds", winds), ("pitch angles", pitches)] {
            if list.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("grid {name} must be finite")));
            }
            let mut sorted = list.to_vec();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config(format!("grid {name} contain duplicates")));
            }
        }
        if frequencies.iter().any(|f| *f <= 0.0) || winds.iter().any(|w| *w < 0.0) {
            return Err(Error::Config("grid frequencies must be positive and wind speeds non-negative".into()));
        }
        let mut conditions = Vec::with_capacity(frequencies.len() * winds.len() * pitches.len());
        for &frequency in frequencies {
            for &wind in winds {
                for &pitch in pitches {
                    conditions.push(ExperimentCondition { frequency, wind, pitch });
                }
            }
        }
        Ok(ConditionGrid { conditions })
    }

    /// 4 frequencies × 4 wind speeds × 5 pitch angles.
    pub fn full() -> Self {
        Self::cross(&FREQUENCIES, &WIND_SPEEDS, &PITCH_ANGLES).expect("static grid")
    }

    /// The 40-condition subset: every frequency and pitch at 1 and 2 m/s.
    pub fn standard() -> Self {
        Self::cross(&FREQUENCIES, &STANDARD_WIND_SPEEDS, &PITCH_ANGLES).expect("static grid")
    }

    pub fn conditions(&self) -> &[ExperimentCondition] {
        &self.conditions
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// `standard`, `full` or `custom`.
    pub preset: String,
    pub frequencies: Vec<f64>,
    pub wind_speeds: Vec<f64>,
    pub pitch_angles: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { preset: "standard".into(), frequencies: vec![], wind_speeds: vec![], pitch_angles: vec![] }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Result<ConditionGrid> {
        let has_lists = !(self.frequencies.is_empty() && self.wind_speeds.is_empty() && self.pitch_angles.is_empty());
        match self.preset.as_str() {
            "standard" | "full" if has_lists => {
                Err(Error::Config(format!("grid preset `{}` does not take explicit lists", self.preset)))
            }
            "standard" => Ok(ConditionGrid::standard()),
            "full" => Ok(ConditionGrid::full()),
            "custom" => ConditionGrid::cross(&self.frequencies, &self.wind_speeds, &self.pitch_angles),
            other => Err(Error::Config(format!("unknown grid preset `{other}`"))),
        }
    }
}

/// One drag panel rigidly attached to a body.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Panel {
    pub body: BodyId,
    /// Reference point relative to the body COM, body-local frame.
    pub offset: Vec3,
    /// Drag coefficient times area (m²).
    pub cd_area: f64,
}

/// Quasi-steady drag model: each panel feels `−½ρ·CdA·‖v_rel‖·v_rel`.
#[derive(Clone, Debug, PartialEq)]
pub struct AeroModelParams {
    pub air_density: f64,
    pub panels: Vec<Panel>,
}

impl AeroModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.air_density.is_finite() && self.air_density >= 0.0) {
            return Err(Error::Config("air density must be non-negative".into()));
        }
        if self.panels.iter().any(|p| p.body == BodyId::Body) {
            return Err(Error::Config("drag panels attach to arms and wings only".into()));
        }
        if self.panels.iter().any(|p| !(p.cd_area.is_finite() && p.cd_area >= 0.0)) {
            return Err(Error::Config("panel drag areas must be non-negative".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.panels {
            p.cd_area *= factor;
        }
        out
    }
}

impl Default for AeroModelParams {
    fn default() -> Self {
        AeroConfig::default().params()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroConfig {
    pub air_density: f64,
    /// Per arm, one panel at the arm COM.
    pub arm_cd_area: f64,
    /// Per wing panel; each wing carries two panels.
    pub wing_cd_area: f64,
    /// Spanwise offset of the wing panels from the wing COM (m).
    pub wing_panel_offset: f64,
}

impl Default for AeroConfig {
    fn default() -> Self {
        AeroConfig { air_density: 1.225, arm_cd_area: 0.0029, wing_cd_area: 0.0045, wing_panel_offset: 0.03 }
    }
}

impl AeroConfig {
    pub fn params(&self) -> AeroModelParams {
        let mut panels = Vec::new();
        for arm in [BodyId::ArmLeft, BodyId::ArmRight] {
            panels.push(Panel { body: arm, offset: Vec3::zeros(), cd_area: self.arm_cd_area });
        }
        for (wing, sign) in [(BodyId::WingLeft, 1.0), (BodyId::WingRight, -1.0)] {
            for d in [-1.0, 1.0] {
                let offset = Vec3::new(0.0, sign * d * self.wing_panel_offset, 0.0);
                panels.push(Panel { body: wing, offset, cd_area: self.wing_cd_area });
            }
        }
        AeroModelParams { air_density: self.air_density, panels }
    }
}

/// Panel drag summed into a wrench on the main body: force in the world
/// frame, torque about the body COM in the body frame.
pub fn aero_force(
    state: &GeneralizedState,
    condition: &ExperimentCondition,
    aero: &AeroModelParams,
    params: &MorphologyParams,
) -> BodyWrench {
    let coms = com_positions(state, params);
    let rots = body_orientations(state, params);
    let jacs = body_jacobians(state, params);
    let qd = state.velocity_vector();
    let wind = condition.wind_velocity();
    let mut force = Vec3::zeros();
    let mut moment = Vec3::zeros();
    for panel in &aero.panels {
        let i = panel.body.index();
        let r = rots[i] * panel.offset;
        let omega_local = jacs[i].angular * qd;
        let v = jacs[i].linear * qd + rots[i] * omega_local.cross(&panel.offset);
        let v_rel = v - wind;
        let f = v_rel * (-0.5 * aero.air_density * panel.cd_area * v_rel.norm());
        force += f;
        moment += (coms[i] + r - state.position).cross(&f);
    }
    BodyWrench { torque: state.rotation.transpose() * moment, force }
}

/// Load-cell noise standard deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// N per axis.
    pub force: f64,
    /// N·m per axis.
    pub torque: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { force: 0.005, torque: 5e-5 }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig { force: 0.0, torque: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub gait: GaitConfig,
    pub aero: AeroModelParams,
    pub morphology: MorphologyParams,
    pub noise: NoiseConfig,
    /// Flap cycles recorded per condition; at least 10.
    pub cycles: usize,
    pub dt: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(seed: u64) -> Self {
        DatasetSpec {
            gait: GaitConfig::default(),
            aero: AeroModelParams::default(),
            morphology: MorphologyParams::default(),
            noise: NoiseConfig::default(),
            cycles: 10,
            dt: 1.0 / 7000.0,
            seed,
        }
    }
}

/// Full-rate record of one tethered condition. Sample `k` is at `t = k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionData {
    pub id: usize,
    pub condition: ExperimentCondition,
    pub gait: GaitParams,
    pub dt: f64,
    /// Injected aerodynamic body force (world frame).
    pub truth: Vec<Vec3>,
    /// Mount wrench on the body, with sensor noise.
    pub load_cell: Vec<BodyWrench>,
    /// Aerodynamic force as a tared load cell would report it: the truth
    /// minus the same force noise realization.
    pub measured: Vec<Vec3>,
}

impl ConditionData {
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Tethered state at sample `k`, reconstructed from the shaft.
    pub fn state(&self, k: usize) -> GeneralizedState {
        let t = self.time(k);
        let (q, qd) = self.gait.joints_from_shaft(self.gait.shaft_angle(t), self.gait.shaft_rate());
        self.condition.mount().state(q, qd)
    }
}

/// Simulates one condition on the tethered stand.
pub fn generate_condition(spec: &DatasetSpec, id: usize, condition: &ExperimentCondition) -> Result<ConditionData> {
    if spec.cycles < 10 {
        return Err(Error::Config(format!("at least 10 flap cycles per condition are required, got {}", spec.cycles)));
    }
    if !(spec.dt > 0.0) {
        return Err(Error::Config(format!("sample interval must be positive, got {}", spec.dt)));
    }
    spec.aero.validate()?;
    let gait = spec.gait.params(condition.frequency)?;
    let n = (spec.cycles as f64 * gait.period() / spec.dt).round() as usize;
    let mount = condition.mount();
    let samples = tethered_simulate(
        &gait,
        &mount,
        |_, s| aero_force(s, condition, &spec.aero, &spec.morphology),
        &spec.morphology,
        spec.dt,
        n,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(id as u64);
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::Config(format!("noise level: {e}")));
    let (force_noise, torque_noise) = (normal(spec.noise.force)?, normal(spec.noise.torque)?);
    let mut draw = |d: &Normal<f64>| Vec3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng));

    let mut truth = Vec::with_capacity(n);
    let mut load_cell = Vec::with_capacity(n);
    let mut measured = Vec::with_capacity(n);
    for s in &samples {
        let nf = draw(&force_noise);
        let nt = draw(&torque_noise);
        truth.push(s.injected.force);
        load_cell.push(BodyWrench { torque: s.reaction.torque + nt, force: s.reaction.force + nf });
        measured.push(s.injected.force - nf);
    }
    Ok(ConditionData { id, condition: *condition, gait, dt: spec.dt, truth, load_cell, measured })
}

/// Every grid condition, generated in parallel and returned in grid order.
pub fn generate_dataset(grid: &ConditionGrid, spec: &DatasetSpec) -> Result<Vec<ConditionData>> {
    if grid.is_empty() {
        return Err(Error::Config("condition grid is empty".into()));
    }
    grid.conditions()
        .par_iter()
        .enumerate()
        .map(|(id, c)| generate_condition(spec, id, c).map_err(|e| e.in_stage("generate", Some(id))))
        .collect()
}
