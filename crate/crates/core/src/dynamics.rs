//! Equations of motion `M q̇_d + C q_d + G = B_a u_a + B_m u_m`.
//!
//! Terms are assembled body by body from the Jacobians of
//! [`crate::kinematics`]:
//!
//! ```text
//! M = Σ m Jvᵀ Jv + Jωᵀ Î Jω
//! C = Σ m Jvᵀ J̇v + Jωᵀ Î J̇ω − Jωᵀ S(Î ω_F) Jω
//! G = Σ m g Jvᵀ e_z
//! ```
//!
//! The gyroscopic part is written as `−S(Î ω_F)`, which is skew, so
//! `C + Cᵀ = Ṁ` holds identically. The body rows use the body-frame
//! angular velocity on SO(3) directly; no attitude parameterization is
//! involved.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::kinematics::{
    arm_angular_velocity, com_positions, jacobian_sets, side_chains, wing_angular_velocity, ArmAngles,
    GeneralizedState, JointVector, MorphologyParams, Side, VelocityVector, LEFT_JOINTS, LINEAR, NV, OMEGA,
};
use crate::so3::{exp_map, integrate_rotation, skew, RotationMatrix, Vec3};
use crate::{Error, Result};

pub type MassMatrix = SMatrix<f64, NV, NV>;
pub type GeneralizedForce = VelocityVector;

/// External wrench on the main body: torque in the body frame and force in
/// the inertial frame, matching the first six rows of `q_d`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BodyWrench {
    pub torque: Vec3,
    pub force: Vec3,
}

impl BodyWrench {
    pub fn from_force(force: Vec3) -> Self {
        BodyWrench { torque: Vec3::zeros(), force }
    }

    pub fn to_vector(&self) -> SVector<f64, 6> {
        SVector::<f64, 6>::from_iterator(self.torque.iter().chain(self.force.iter()).copied())
    }

    pub fn from_rows(v: &GeneralizedForce) -> Self {
        BodyWrench { torque: v.fixed_rows::<3>(OMEGA).into_owned(), force: v.fixed_rows::<3>(LINEAR).into_owned() }
    }

    pub fn generalized(&self) -> GeneralizedForce {
        let mut g = GeneralizedForce::zeros();
        g.fixed_rows_mut::<3>(OMEGA).copy_from(&self.torque);
        g.fixed_rows_mut::<3>(LINEAR).copy_from(&self.force);
        g
    }
}

impl std::ops::Add for BodyWrench {
    type Output = BodyWrench;
    fn add(self, o: BodyWrench) -> BodyWrench {
        BodyWrench { torque: self.torque + o.torque, force: self.force + o.force }
    }
}

impl std::ops::Sub for BodyWrench {
    type Output = BodyWrench;
    fn sub(self, o: BodyWrench) -> BodyWrench {
        BodyWrench { torque: self.torque - o.torque, force: self.force - o.force }
    }
}

/// How `u_a` enters the equations of motion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AeroInputMap {
    /// `B_a = [I₆; 0₈ₓ₆]`: a wrench on the main body.
    #[default]
    BodyWrench,
    /// `B_a = I₁₄`: arbitrary generalized force, used for testing.
    Full,
}

impl AeroInputMap {
    pub fn matrix(self) -> DMatrix<f64> {
        match self {
            AeroInputMap::BodyWrench => DMatrix::identity(NV, 6),
            AeroInputMap::Full => DMatrix::identity(NV, NV),
        }
    }

    /// `B_a u_a`, checking the width of `u_a`.
    pub fn apply(self, u_a: &[f64]) -> Result<GeneralizedForce> {
        let width = self.matrix().ncols();
        if u_a.len() != width {
            return Err(Error::Shape { expected: width, actual: u_a.len() });
        }
        let mut g = GeneralizedForce::zeros();
        g.as_mut_slice()[..width].copy_from_slice(u_a);
        Ok(g)
    }
}

/// Aerodynamic input in either of its two forms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AeroInput {
    Wrench(BodyWrench),
    Generalized(GeneralizedForce),
}

impl AeroInput {
    pub fn none() -> Self {
        AeroInput::Wrench(BodyWrench::default())
    }

    pub fn generalized(&self) -> GeneralizedForce {
        match self {
            AeroInput::Wrench(w) => w.generalized(),
            AeroInput::Generalized(g) => *g,
        }
    }
}

/// `B_m = [0₈ₓ₆, I₈]ᵀ`.
pub fn motor_input_matrix() -> SMatrix<f64, NV, 8> {
    let mut b = SMatrix::<f64, NV, 8>::zeros();
    b.fixed_view_mut::<8, 8>(LEFT_JOINTS, 0).fill_with_identity();
    b
}

pub fn motor_generalized(u_m: &JointVector) -> GeneralizedForce {
    let mut g = GeneralizedForce::zeros();
    g.fixed_rows_mut::<8>(LEFT_JOINTS).copy_from(u_m);
    g
}

#[derive(Clone, Debug)]
pub struct DynamicsTerms {
    pub mass: MassMatrix,
    pub coriolis: MassMatrix,
    pub gravity: GeneralizedForce,
    pub aero_map: DMatrix<f64>,
    pub motor_map: SMatrix<f64, NV, 8>,
}

impl DynamicsTerms {
    pub fn evaluate(state: &GeneralizedState, params: &MorphologyParams, map: AeroInputMap) -> Self {
        let (mass, coriolis, gravity) = assemble(state, params, true);
        DynamicsTerms { mass, coriolis, gravity, aero_map: map.matrix(), motor_map: motor_input_matrix() }
    }

    /// Conjugate momentum `p = M q_d`.
    pub fn momentum(&self, qd: &VelocityVector) -> VelocityVector {
        self.mass * qd
    }
}

fn assemble(
    state: &GeneralizedState,
    params: &MorphologyParams,
    with_coriolis: bool,
) -> (MassMatrix, MassMatrix, GeneralizedForce) {
    let sets = jacobian_sets(state, params);
    let mut mass = MassMatrix::zeros();
    let mut coriolis = MassMatrix::zeros();
    let mut gravity = GeneralizedForce::zeros();
    for (set, body) in sets.iter().zip(&params.bodies) {
        let jv = &set.jac.linear;
        let jw = &set.jac.angular;
        let inertia = body.inertia_matrix();
        let jv_t = jv.transpose();
        let jw_t = jw.transpose();
        let jw_t_i = jw_t * inertia;
        mass += jv_t * jv * body.mass + jw_t_i * jw;
        if with_coriolis {
            let spin = skew(&(inertia * set.omega_local));
            coriolis += jv_t * set.rate.linear * body.mass + jw_t_i * set.rate.angular - jw_t * spin * jw;
        }
        gravity += jv.row(2).transpose() * (body.mass * params.gravity);
    }
    (mass, coriolis, gravity)
}

/// Kinetic energy as a direct sum over bodies, using the chain rates and
/// the angular-velocity formulas rather than the Jacobians.
pub fn kinetic_energy(state: &GeneralizedState, params: &MorphologyParams) -> f64 {
    let chains = side_chains(state, params);
    let rb = state.rotation;
    let body = &params.bodies[0];
    let w = state.omega;
    let mut t = body.mass * state.velocity.norm_squared() + w.dot(&(body.inertia_matrix() * w));
    for (k, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let chain = &chains[k];
        let off = side.joint_offset() - LEFT_JOINTS;
        let angles = ArmAngles::from_slice(&state.joints.as_slice()[off..off + 4]);
        let rates = ArmAngles::from_slice(&state.joint_rates.as_slice()[off..off + 4]);
        let arm = &params.bodies[1 + k];
        let wing = &params.bodies[3 + k];
        let v_arm = state.velocity + rb * (w.cross(&chain.com_arm) + chain.com_arm_rate);
        let v_wing = state.velocity + rb * (w.cross(&chain.com_wing) + chain.com_wing_rate);
        let w_arm = arm_angular_velocity(side, &angles, &rates, &w);
        let w_wing = wing_angular_velocity(side, &angles, &rates, &w);
        t += arm.mass * v_arm.norm_squared() + w_arm.dot(&(arm.inertia_matrix() * w_arm));
        t += wing.mass * v_wing.norm_squared() + w_wing.dot(&(wing.inertia_matrix() * w_wing));
    }
    0.5 * t
}

pub fn potential_energy(state: &GeneralizedState, params: &MorphologyParams) -> f64 {
    com_positions(state, params).iter().zip(&params.bodies).map(|(p, b)| b.mass * params.gravity * p.z).sum()
}

pub fn total_energy(state: &GeneralizedState, params: &MorphologyParams) -> f64 {
    kinetic_energy(state, params) + potential_energy(state, params)
}

pub fn mass_matrix(state: &GeneralizedState, params: &MorphologyParams) -> MassMatrix {
    assemble(state, params, false).0
}

pub fn coriolis_matrix(state: &GeneralizedState, params: &MorphologyParams) -> MassMatrix {
    assemble(state, params, true).1
}

pub fn gravity_vector(state: &GeneralizedState, params: &MorphologyParams) -> GeneralizedForce {
    assemble(state, params, false).2
}

/// Solves the equations of motion for `q̇_d`.
pub fn forward_dynamics(
    state: &GeneralizedState,
    aero: &AeroInput,
    motor: &JointVector,
    params: &MorphologyParams,
) -> Result<VelocityVector> {
    let (mass, coriolis, gravity) = assemble(state, params, true);
    let qd = state.velocity_vector();
    let rhs = aero.generalized() + motor_generalized(motor) - coriolis * qd - gravity;
    let chol = mass
        .cholesky()
        .ok_or_else(|| Error::NumericFault { sample: 0, reason: "mass matrix is not positive definite".into() })?;
    Ok(chol.solve(&rhs))
}

/// Inputs held constant across one integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInputs {
    pub aero: AeroInput,
    pub motor: JointVector,
}

impl Default for StepInputs {
    fn default() -> Self {
        StepInputs { aero: AeroInput::none(), motor: JointVector::zeros() }
    }
}

/// Vector part of the integrator state: rotation increment relative to
/// the start of the step, position, joints and velocities.
type Flat = SVector<f64, 28>;

fn flat_eval(base: &GeneralizedState, y: &Flat) -> GeneralizedState {
    let phi = y.fixed_rows::<3>(0).into_owned();
    let mut s = GeneralizedState {
        rotation: base.rotation * exp_map(&phi),
        position: y.fixed_rows::<3>(3).into_owned(),
        joints: y.fixed_rows::<8>(6).into_owned(),
        ..GeneralizedState::default()
    };
    s.set_velocity_vector(&y.fixed_rows::<NV>(14).into_owned());
    s
}

/// One RK4 step. The attitude is propagated in the Lie algebra (RKMK
/// with the inverse dexp truncated after the second-order term), so the
/// combined scheme stays fourth order. The rotation is finally advanced by
/// [`integrate_rotation`] with the step-averaged body rate.
pub fn step(
    state: &GeneralizedState,
    inputs: &StepInputs,
    dt: f64,
    params: &MorphologyParams,
) -> Result<GeneralizedState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let deriv = |y: &Flat| -> Result<Flat> {
        let s = flat_eval(state, y);
        let acc = forward_dynamics(&s, &inputs.aero, &inputs.motor, params)?;
        let phi = y.fixed_rows::<3>(0).into_owned();
        let w = s.omega;
        let phi_dot = w + phi.cross(&w) * 0.5 + phi.cross(&phi.cross(&w)) / 12.0;
        let mut d = Flat::zeros();
        d.fixed_rows_mut::<3>(0).copy_from(&phi_dot);
        d.fixed_rows_mut::<3>(3).copy_from(&s.velocity);
        d.fixed_rows_mut::<8>(6).copy_from(&s.joint_rates);
        d.fixed_rows_mut::<NV>(14).copy_from(&acc);
        Ok(d)
    };
    let mut y0 = Flat::zeros();
    y0.fixed_rows_mut::<3>(3).copy_from(&state.position);
    y0.fixed_rows_mut::<8>(6).copy_from(&state.joints);
    y0.fixed_rows_mut::<NV>(14).copy_from(&state.velocity_vector());

    let k1 = deriv(&y0)?;
    let k2 = deriv(&(y0 + k1 * (0.5 * dt)))?;
    let k3 = deriv(&(y0 + k2 * (0.5 * dt)))?;
    let k4 = deriv(&(y0 + k3 * dt))?;
    let y1 = y0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

    let mean_rate: Vec3 = y1.fixed_rows::<3>(0).into_owned() / dt;
    let mut next = flat_eval(state, &y1);
    next.rotation = integrate_rotation(&state.rotation, &mean_rate, dt);
    if !next.is_finite() {
        return Err(Error::NumericFault { sample: 0, reason: "non-finite state after step".into() });
    }
    Ok(next)
}

/// Prescribed joint motion with analytic derivatives.
pub trait JointTrajectory {
    /// Angles, rates and accelerations at time `t`.
    fn sample(&self, t: f64) -> (JointVector, JointVector, JointVector);
}

/// Fixed body pose of a tethered run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MountPose {
    pub rotation: RotationMatrix,
    pub position: Vec3,
}

impl Default for MountPose {
    fn default() -> Self {
        MountPose { rotation: RotationMatrix::identity(), position: Vec3::zeros() }
    }
}

impl MountPose {
    pub fn state(&self, joints: JointVector, joint_rates: JointVector) -> GeneralizedState {
        GeneralizedState {
            rotation: self.rotation,
            position: self.position,
            joints,
            joint_rates,
            ..GeneralizedState::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct TetheredSample {
    pub t: f64,
    pub state: GeneralizedState,
    pub joint_accel: JointVector,
    /// Wrench the mount applies to the body.
    pub reaction: BodyWrench,
    /// Joint torques from inverse dynamics.
    pub motor: JointVector,
    pub injected: BodyWrench,
}

/// Mount reaction and joint torques for a clamped body. The reaction is
/// the body rows of `M q̈ + C q_d + G − B_a u_a` with the body rows of
/// `q̈` and `q_d` zero; the joint rows give `u_m`.
pub fn tethered_reaction(
    state: &GeneralizedState,
    joint_accel: &JointVector,
    injected: &BodyWrench,
    params: &MorphologyParams,
) -> (BodyWrench, JointVector) {
    let (mass, coriolis, gravity) = assemble(state, params, true);
    let mut acc = VelocityVector::zeros();
    acc.fixed_rows_mut::<8>(LEFT_JOINTS).copy_from(joint_accel);
    let tau = mass * acc + coriolis * state.velocity_vector() + gravity;
    let reaction = BodyWrench::from_rows(&tau) - *injected;
    (reaction, tau.fixed_rows::<8>(LEFT_JOINTS).into_owned())
}

/// Samples a body-clamped run at `n_samples` instants `t = k·dt`.
pub fn tethered_simulate<T, F>(
    trajectory: &T,
    mount: &MountPose,
    mut injected: F,
    params: &MorphologyParams,
    dt: f64,
    n_samples: usize,
) -> Result<Vec<TetheredSample>>
where
    T: JointTrajectory + ?Sized,
    F: FnMut(f64, &GeneralizedState) -> BodyWrench,
{
    params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    (0..n_samples)
        .map(|k| {
            let t = k as f64 * dt;
            let (joints, rates, accel) = trajectory.sample(t);
            let state = mount.state(joints, rates);
            if !state.is_finite() || accel.iter().any(|a| !a.is_finite()) {
                return Err(Error::NumericFault { sample: k, reason: "non-finite joint trajectory".into() });
            }
            let u_a = injected(t, &state);
            let (reaction, motor) = tethered_reaction(&state, &accel, &u_a, params);
            Ok(TetheredSample { t, state, joint_accel: accel, reaction, motor, injected: u_a })
        })
        .collect()
}
