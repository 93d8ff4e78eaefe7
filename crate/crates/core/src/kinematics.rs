//! Five-body frame chain: body, two armwings and two wings.
//!
//! Each side is a serial chain hanging off the body frame:
//! `R_A = R_z(θ_m) R_x(θ_p)` at the shoulder and `R_W = R_x(θ_e) R_z(θ_f)`
//! at the elbow. The right side is the mirror image of the left across the
//! sagittal (x–z) plane: with `P = diag(1, −1, 1)` every right-side
//! rotation is `P R_left P`, which amounts to negating all four right-side
//! angles inside the elementary rotations, and right link vectors are
//! `P l_left`. Equal left and right joint angles therefore describe a
//! symmetric posture.
//!
//! Body frame: x forward, y left, z up. Angular velocities are stored in
//! the local frame of the body they belong to.

use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::so3::{rot_x, rot_z, skew, RotationMatrix, Vec3};
use crate::{Error, Result};

/// Dimension of the generalized velocity `q_d`.
pub const NV: usize = 14;
pub const N_JOINTS: usize = 8;

pub type VelocityVector = SVector<f64, NV>;
pub type JointVector = SVector<f64, N_JOINTS>;
pub type Jacobian = SMatrix<f64, 3, NV>;

/// Column offsets inside `q_d`.
pub const OMEGA: usize = 0;
pub const LINEAR: usize = 3;
pub const LEFT_JOINTS: usize = 6;
pub const RIGHT_JOINTS: usize = 10;

/// Joint order within one side.
pub const PLUNGE: usize = 0;
pub const MEDIOLATERAL: usize = 1;
pub const ELBOW: usize = 2;
pub const FEATHERING: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    /// Index of this side's first joint within `q_d`.
    pub fn joint_offset(self) -> usize {
        match self {
            Side::Left => LEFT_JOINTS,
            Side::Right => RIGHT_JOINTS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BodyId {
    Body,
    ArmLeft,
    ArmRight,
    WingLeft,
    WingRight,
}

impl BodyId {
    pub const ALL: [BodyId; 5] = [BodyId::Body, BodyId::ArmLeft, BodyId::ArmRight, BodyId::WingLeft, BodyId::WingRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn side(self) -> Option<Side> {
        match self {
            BodyId::Body => None,
            BodyId::ArmLeft | BodyId::WingLeft => Some(Side::Left),
            BodyId::ArmRight | BodyId::WingRight => Some(Side::Right),
        }
    }
}

/// The four armwing angles of one side.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ArmAngles {
    pub plunge: f64,
    pub mediolateral: f64,
    pub elbow: f64,
    pub feathering: f64,
}

impl ArmAngles {
    pub fn to_array(self) -> [f64; 4] {
        [self.plunge, self.mediolateral, self.elbow, self.feathering]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        ArmAngles { plunge: v[PLUNGE], mediolateral: v[MEDIOLATERAL], elbow: v[ELBOW], feathering: v[FEATHERING] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JointAngles {
    pub left: ArmAngles,
    pub right: ArmAngles,
}

impl JointAngles {
    pub fn side(&self, side: Side) -> &ArmAngles {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn to_vector(&self) -> JointVector {
        let l = self.left.to_array();
        let r = self.right.to_array();
        JointVector::from_iterator(l.into_iter().chain(r))
    }

    pub fn from_vector(v: &JointVector) -> Self {
        JointAngles {
            left: ArmAngles::from_slice(&v.as_slice()[0..4]),
            right: ArmAngles::from_slice(&v.as_slice()[4..8]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyInertia {
    /// kg
    pub mass: f64,
    /// Principal moments about the body's own COM, local frame (kg·m²).
    pub inertia: [f64; 3],
}

impl BodyInertia {
    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vec3::from(self.inertia))
    }
}

/// Physical description of the robot. Fields are public for convenience;
/// anything that runs a simulation calls [`MorphologyParams::validate`]
/// first.
#[derive(Clone, Debug, PartialEq)]
pub struct MorphologyParams {
    pub bodies: [BodyInertia; 5],
    /// `l_1` (shoulder offset, body frame), `l_2` (arm, arm frame),
    /// `l_3` (wing COM offset from the elbow, wing frame).
    pub links_left: [Vec3; 3],
    pub links_right: [Vec3; 3],
    /// m/s²
    pub gravity: f64,
}

impl MorphologyParams {
    /// Builds a left/right symmetric robot from left-side link vectors.
    pub fn symmetric(
        body: BodyInertia,
        arm: BodyInertia,
        wing: BodyInertia,
        links_left: [Vec3; 3],
        gravity: f64,
    ) -> Self {
        let mirror = |v: Vec3| Vec3::new(v.x, -v.y, v.z);
        MorphologyParams {
            bodies: [body, arm, arm, wing, wing],
            links_left,
            links_right: links_left.map(mirror),
            gravity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (id, b) in BodyId::ALL.iter().zip(&self.bodies) {
            if !(b.mass.is_finite() && b.mass > 0.0) {
                return Err(Error::Morphology(format!("{id:?} mass must be positive, got {}", b.mass)));
            }
            if b.inertia.iter().any(|i| !(i.is_finite() && *i > 0.0)) {
                return Err(Error::Morphology(format!(
                    "{id:?} inertia diagonal must be positive, got {:?}",
                    b.inertia
                )));
            }
        }
        let finite = |ls: &[Vec3; 3]| ls.iter().all(|l| l.iter().all(|x| x.is_finite()));
        if !finite(&self.links_left) || !finite(&self.links_right) {
            return Err(Error::Morphology("link vectors must be finite".into()));
        }
        if !self.gravity.is_finite() {
            return Err(Error::Morphology("gravity must be finite".into()));
        }
        Ok(())
    }

    pub fn body(&self, id: BodyId) -> &BodyInertia {
        &self.bodies[id.index()]
    }

    pub fn links(&self, side: Side) -> &[Vec3; 3] {
        match side {
            Side::Left => &self.links_left,
            Side::Right => &self.links_right,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }

    /// Copy with both wing masses (and their inertias) scaled, used to
    /// model parameter mismatch in the observer.
    pub fn with_wing_mass_scale(&self, scale: f64) -> Self {
        let mut out = self.clone();
        for id in [BodyId::WingLeft, BodyId::WingRight] {
            let b = &mut out.bodies[id.index()];
            b.mass *= scale;
            b.inertia = b.inertia.map(|i| i * scale);
        }
        out
    }
}

impl Default for MorphologyParams {
    fn default() -> Self {
        MorphologyConfig::default().to_params()
    }
}

/// Plain key-value form of a symmetric morphology, as read from the
/// `[morphology]` table of a config file. All values SI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphologyConfig {
    pub body_mass: f64,
    pub body_inertia: [f64; 3],
    pub arm_mass: f64,
    pub arm_inertia: [f64; 3],
    pub wing_mass: f64,
    pub wing_inertia: [f64; 3],
    /// Left shoulder position relative to the body COM (body frame).
    pub shoulder_offset: [f64; 3],
    /// Left arm link, shoulder to elbow (arm frame).
    pub arm_link: [f64; 3],
    /// Left wing COM relative to the elbow (wing frame).
    pub wing_link: [f64; 3],
    pub gravity: f64,
}

impl Default for MorphologyConfig {
    fn default() -> Self {
        // 30 g total, 0.4 g per wing, 0.30 m span.
        let body_mass = 0.0262;
        let arm_mass = 0.0015;
        let wing_mass = 0.0004;
        let box_inertia = |m: f64, a: f64, b: f64, c: f64| {
            [m * (b * b + c * c) / 12.0, m * (a * a + c * c) / 12.0, m * (a * a + b * b) / 12.0]
        };
        MorphologyConfig {
            body_mass,
            body_inertia: box_inertia(body_mass, 0.08, 0.06, 0.03),
            arm_mass,
            // Slender rod along y, 4 mm radius.
            arm_inertia: [arm_mass * 0.06 * 0.06 / 12.0, arm_mass * 0.004 * 0.004 / 2.0, arm_mass * 0.06 * 0.06 / 12.0],
            wing_mass,
            // Thin plate in the x–y plane: 0.08 m chord, 0.06 m span.
            wing_inertia: [
                wing_mass * 0.06 * 0.06 / 12.0,
                wing_mass * 0.08 * 0.08 / 12.0,
                wing_mass * (0.06 * 0.06 + 0.08 * 0.08) / 12.0,
            ],
            shoulder_offset: [0.0, 0.03, 0.0],
            arm_link: [0.0, 0.06, 0.0],
            wing_link: [0.0, 0.06, 0.0],
            gravity: 9.81,
        }
    }
}

impl MorphologyConfig {
    pub fn to_params(&self) -> MorphologyParams {
        MorphologyParams::symmetric(
            BodyInertia { mass: self.body_mass, inertia: self.body_inertia },
            BodyInertia { mass: self.arm_mass, inertia: self.arm_inertia },
            BodyInertia { mass: self.wing_mass, inertia: self.wing_inertia },
            [Vec3::from(self.shoulder_offset), Vec3::from(self.arm_link), Vec3::from(self.wing_link)],
            self.gravity,
        )
    }

    /// Parses a standalone morphology file (`key = value` lines).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Configuration `q` and generalized velocity `q_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedState {
    pub rotation: RotationMatrix,
    pub position: Vec3,
    pub joints: JointVector,
    /// Body angular velocity, body frame.
    pub omega: Vec3,
    /// Body COM velocity, inertial frame.
    pub velocity: Vec3,
    pub joint_rates: JointVector,
}

impl Default for GeneralizedState {
    fn default() -> Self {
        GeneralizedState {
            rotation: Matrix3::identity(),
            position: Vec3::zeros(),
            joints: JointVector::zeros(),
            omega: Vec3::zeros(),
            velocity: Vec3::zeros(),
            joint_rates: JointVector::zeros(),
        }
    }
}

impl GeneralizedState {
    pub fn velocity_vector(&self) -> VelocityVector {
        let mut v = VelocityVector::zeros();
        v.fixed_rows_mut::<3>(OMEGA).copy_from(&self.omega);
        v.fixed_rows_mut::<3>(LINEAR).copy_from(&self.velocity);
        v.fixed_rows_mut::<8>(LEFT_JOINTS).copy_from(&self.joint_rates);
        v
    }

    pub fn set_velocity_vector(&mut self, v: &VelocityVector) {
        self.omega = v.fixed_rows::<3>(OMEGA).into_owned();
        self.velocity = v.fixed_rows::<3>(LINEAR).into_owned();
        self.joint_rates = v.fixed_rows::<8>(LEFT_JOINTS).into_owned();
    }

    pub fn joint_angles(&self) -> JointAngles {
        JointAngles::from_vector(&self.joints)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|x| x.is_finite())
            && self.position.iter().all(|x| x.is_finite())
            && self.joints.iter().all(|x| x.is_finite())
            && self.velocity_vector().iter().all(|x| x.is_finite())
    }

    /// Reflection of the whole configuration across the inertial x–z plane,
    /// with left and right joints exchanged.
    pub fn mirrored(&self) -> Self {
        let p = Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
        let swap = |v: &JointVector| {
            let mut out = JointVector::zeros();
            out.fixed_rows_mut::<4>(0).copy_from(&v.fixed_rows::<4>(4));
            out.fixed_rows_mut::<4>(4).copy_from(&v.fixed_rows::<4>(0));
            out
        };
        GeneralizedState {
            rotation: p * self.rotation * p,
            position: p * self.position,
            joints: swap(&self.joints),
            // Angular velocity is a pseudo-vector.
            omega: -(p * self.omega),
            velocity: p * self.velocity,
            joint_rates: swap(&self.joint_rates),
        }
    }
}

/// Arm rotation relative to the body frame.
pub fn arm_rotation(side: Side, mediolateral: f64, plunge: f64) -> RotationMatrix {
    let s = side.sign();
    rot_z(s * mediolateral) * rot_x(s * plunge)
}

/// Wing rotation relative to its arm frame.
pub fn wing_rotation(side: Side, elbow: f64, feathering: f64) -> RotationMatrix {
    let s = side.sign();
    rot_x(s * elbow) * rot_z(s * feathering)
}

/// Arm angular velocity expressed in the arm frame.
///
/// Sums the joint rates and the body rate in body coordinates, then
/// transports the result into the arm frame.
pub fn arm_angular_velocity(side: Side, angles: &ArmAngles, rates: &ArmAngles, omega_body: &Vec3) -> Vec3 {
    let s = side.sign();
    let rel = Vec3::z() * (s * rates.mediolateral) + rot_z(s * angles.mediolateral) * Vec3::x() * (s * rates.plunge);
    let q_arm = arm_rotation(side, angles.mediolateral, angles.plunge);
    q_arm.transpose() * (rel + omega_body)
}

/// Wing angular velocity expressed in the wing frame.
pub fn wing_angular_velocity(side: Side, angles: &ArmAngles, rates: &ArmAngles, omega_body: &Vec3) -> Vec3 {
    let s = side.sign();
    let omega_arm = arm_angular_velocity(side, angles, rates, omega_body);
    let rel = Vec3::x() * (s * rates.elbow) + rot_x(s * angles.elbow) * Vec3::z() * (s * rates.feathering);
    let r_wing = wing_rotation(side, angles.elbow, angles.feathering);
    r_wing.transpose() * (rel + omega_arm)
}

/// One side of the chain evaluated in body coordinates.
#[derive(Clone, Debug)]
pub(crate) struct SideChain {
    pub arm_rot: RotationMatrix,
    /// Wing orientation relative to the body (`R_A R_W`).
    pub wing_rot: RotationMatrix,
    /// Joint axes in body coordinates, ordered p, m, e, f.
    pub axes: [Vec3; 4],
    pub shoulder: Vec3,
    pub elbow: Vec3,
    pub com_arm: Vec3,
    pub com_wing: Vec3,
    // Time derivatives in body coordinates (relative to the body frame).
    pub axis_rates: [Vec3; 4],
    pub elbow_rate: Vec3,
    pub omega_arm: Vec3,
    pub omega_wing: Vec3,
    pub com_arm_rate: Vec3,
    pub com_wing_rate: Vec3,
}

impl SideChain {
    pub(crate) fn new(side: Side, angles: &[f64], rates: &[f64], links: &[Vec3; 3]) -> Self {
        let s = side.sign();
        let rz_m = rot_z(s * angles[MEDIOLATERAL]);
        let arm_rot = rz_m * rot_x(s * angles[PLUNGE]);
        let rx_e = rot_x(s * angles[ELBOW]);
        let wing_rot = arm_rot * rx_e * rot_z(s * angles[FEATHERING]);

        let mut axes = [Vec3::zeros(); 4];
        axes[MEDIOLATERAL] = Vec3::z() * s;
        axes[PLUNGE] = rz_m * Vec3::x() * s;
        axes[ELBOW] = arm_rot * Vec3::x() * s;
        axes[FEATHERING] = arm_rot * rx_e * Vec3::z() * s;

        let arm_vec = arm_rot * links[1];
        let wing_vec = wing_rot * links[2];
        let shoulder = links[0];
        let elbow = shoulder + arm_vec;
        let com_arm = shoulder + arm_vec * 0.5;
        let com_wing = elbow + wing_vec;

        // Chain order is m, p, e, f: each axis is carried by the joints
        // that precede it.
        let w_m = axes[MEDIOLATERAL] * rates[MEDIOLATERAL];
        let omega_arm = w_m + axes[PLUNGE] * rates[PLUNGE];
        let w_e = omega_arm + axes[ELBOW] * rates[ELBOW];
        let omega_wing = w_e + axes[FEATHERING] * rates[FEATHERING];
        let mut axis_rates = [Vec3::zeros(); 4];
        axis_rates[PLUNGE] = w_m.cross(&axes[PLUNGE]);
        axis_rates[ELBOW] = omega_arm.cross(&axes[ELBOW]);
        axis_rates[FEATHERING] = w_e.cross(&axes[FEATHERING]);

        let elbow_rate = omega_arm.cross(&arm_vec);
        SideChain {
            arm_rot,
            wing_rot,
            axes,
            shoulder,
            elbow,
            com_arm,
            com_wing,
            axis_rates,
            elbow_rate,
            omega_arm,
            omega_wing,
            com_arm_rate: elbow_rate * 0.5,
            com_wing_rate: elbow_rate + omega_wing.cross(&wing_vec),
        }
    }
}

pub(crate) fn side_chains(state: &GeneralizedState, params: &MorphologyParams) -> [SideChain; 2] {
    let j = state.joints.as_slice();
    let jr = state.joint_rates.as_slice();
    [
        SideChain::new(Side::Left, &j[0..4], &jr[0..4], params.links(Side::Left)),
        SideChain::new(Side::Right, &j[4..8], &jr[4..8], params.links(Side::Right)),
    ]
}

/// Inertial COM positions, indexed by [`BodyId::index`].
pub fn com_positions(state: &GeneralizedState, params: &MorphologyParams) -> [Vec3; 5] {
    let [l, r] = side_chains(state, params);
    let world = |s: Vec3| state.position + state.rotation * s;
    [state.position, world(l.com_arm), world(r.com_arm), world(l.com_wing), world(r.com_wing)]
}

/// Inertial orientations of the five bodies.
pub fn body_orientations(state: &GeneralizedState, params: &MorphologyParams) -> [RotationMatrix; 5] {
    let [l, r] = side_chains(state, params);
    let rb = state.rotation;
    [rb, rb * l.arm_rot, rb * r.arm_rot, rb * l.wing_rot, rb * r.wing_rot]
}

/// Linear (inertial) and angular (local frame) Jacobians of one body with
/// respect to `q_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyJacobian {
    pub linear: Jacobian,
    pub angular: Jacobian,
}

/// Jacobians together with their time derivatives along the current
/// velocity.
#[derive(Clone, Debug)]
pub(crate) struct JacobianSet {
    pub jac: BodyJacobian,
    pub rate: BodyJacobian,
    /// Local-frame angular velocity of the body.
    pub omega_local: Vec3,
}

pub fn body_jacobians(state: &GeneralizedState, params: &MorphologyParams) -> [BodyJacobian; 5] {
    jacobian_sets(state, params).map(|s| s.jac)
}

pub(crate) fn jacobian_sets(state: &GeneralizedState, params: &MorphologyParams) -> [JacobianSet; 5] {
    let chains = side_chains(state, params);
    let rb = state.rotation;
    let omega = state.omega;

    let mut body = JacobianSet {
        jac: BodyJacobian { linear: Jacobian::zeros(), angular: Jacobian::zeros() },
        rate: BodyJacobian { linear: Jacobian::zeros(), angular: Jacobian::zeros() },
        omega_local: omega,
    };
    body.jac.linear.fixed_view_mut::<3, 3>(0, LINEAR).copy_from(&Matrix3::identity());
    body.jac.angular.fixed_view_mut::<3, 3>(0, OMEGA).copy_from(&Matrix3::identity());

    let link_set = |side: Side, chain: &SideChain, wing: bool| -> JacobianSet {
        let (com, com_rate, q_rel, omega_rel, n_joints) = if wing {
            (chain.com_wing, chain.com_wing_rate, chain.wing_rot, chain.omega_wing, 4)
        } else {
            (chain.com_arm, chain.com_arm_rate, chain.arm_rot, chain.omega_arm, 2)
        };
        let mut jac = BodyJacobian { linear: Jacobian::zeros(), angular: Jacobian::zeros() };
        let mut rate = BodyJacobian { linear: Jacobian::zeros(), angular: Jacobian::zeros() };
        let qt = q_rel.transpose();

        jac.linear.fixed_view_mut::<3, 3>(0, OMEGA).copy_from(&(-rb * skew(&com)));
        jac.linear.fixed_view_mut::<3, 3>(0, LINEAR).copy_from(&Matrix3::identity());
        jac.angular.fixed_view_mut::<3, 3>(0, OMEGA).copy_from(&qt);
        rate.linear.fixed_view_mut::<3, 3>(0, OMEGA).copy_from(&(-rb * (skew(&omega) * skew(&com) + skew(&com_rate))));
        rate.angular.fixed_view_mut::<3, 3>(0, OMEGA).copy_from(&(-qt * skew(&omega_rel)));

        for k in 0..n_joints {
            let (pivot, pivot_rate) = if k == ELBOW || k == FEATHERING {
                (chain.elbow, chain.elbow_rate)
            } else {
                (chain.shoulder, Vec3::zeros())
            };
            let axis = chain.axes[k];
            let axis_rate = chain.axis_rates[k];
            let arm = com - pivot;
            let arm_rate = com_rate - pivot_rate;
            let col = side.joint_offset() + k;
            let dp = axis.cross(&arm);
            jac.linear.set_column(col, &(rb * dp));
            rate.linear.set_column(col, &(rb * (omega.cross(&dp) + axis_rate.cross(&arm) + axis.cross(&arm_rate))));
            jac.angular.set_column(col, &(qt * axis));
            rate.angular.set_column(col, &(qt * (axis_rate - omega_rel.cross(&axis))));
        }
        JacobianSet { jac, rate, omega_local: qt * (omega + omega_rel) }
    };

    let [l, r] = &chains;
    [
        body,
        link_set(Side::Left, l, false),
        link_set(Side::Right, r, false),
        link_set(Side::Left, l, true),
        link_set(Side::Right, r, true),
    ]
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::so3::{is_rotation, unskew};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

    #[test]
    fn arm_and_wing_rotations() {
        assert_eq!(arm_rotation(Side::Left, 0.0, 0.0), Matrix3::identity());
        assert_relative_eq!(arm_rotation(Side::Left, 0.0, 0.4), rot_x(0.4), epsilon = 1e-15);
        let expected = rot_z(FRAC_PI_4) * rot_x(FRAC_PI_6);
        assert_relative_eq!(arm_rotation(Side::Left, FRAC_PI_4, FRAC_PI_6), expected, epsilon = 1e-15);

        assert_eq!(wing_rotation(Side::Left, 0.0, 0.0), Matrix3::identity());
        assert_relative_eq!(wing_rotation(Side::Left, 0.3, 0.0), rot_x(0.3), epsilon = 1e-15);
        let expected = rot_x(FRAC_PI_6) * rot_z(FRAC_PI_4);
        assert_relative_eq!(wing_rotation(Side::Left, FRAC_PI_6, FRAC_PI_4), expected, epsilon = 1e-15);

        // Right side is the reflected left side.
        let p = Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
        let left = arm_rotation(Side::Left, 0.3, -0.8);
        assert_relative_eq!(arm_rotation(Side::Right, 0.3, -0.8), p * left * p, epsilon = 1e-15);
        assert!(is_rotation(&arm_rotation(Side::Right, 1.1, 2.0), 1e-12));
    }

    #[test]
    fn angular_velocity_simple_cases() {
        let zero = ArmAngles::default();
        assert_eq!(arm_angular_velocity(Side::Left, &zero, &zero, &Vec3::zeros()), Vec3::zeros());
        let rates = ArmAngles { plunge: 1.0, ..Default::default() };
        assert_relative_eq!(
            arm_angular_velocity(Side::Left, &zero, &rates, &Vec3::zeros()),
            Vec3::x(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            arm_angular_velocity(Side::Right, &zero, &rates, &Vec3::zeros()),
            -Vec3::x(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn angular_velocities_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..50 {
            let s = random_state(&mut rng, 1.5);
            let sp = advance(&s, h);
            let sm = advance(&s, -h);
            let rp = body_orientations(&sp, &MorphologyParams::default());
            let rm = body_orientations(&sm, &MorphologyParams::default());
            let r0 = body_orientations(&s, &MorphologyParams::default());
            for side in [Side::Left, Side::Right] {
                let off = side.joint_offset() - LEFT_JOINTS;
                let a = ArmAngles::from_slice(&s.joints.as_slice()[off..off + 4]);
                let ar = ArmAngles::from_slice(&s.joint_rates.as_slice()[off..off + 4]);
                let (ai, wi) = match side {
                    Side::Left => (1, 3),
                    Side::Right => (2, 4),
                };
                let fd = |i: usize| unskew(&(r0[i].transpose() * (rp[i] - rm[i]) / (2.0 * h)));
                let arm = arm_angular_velocity(side, &a, &ar, &s.omega);
                let wing = wing_angular_velocity(side, &a, &ar, &s.omega);
                assert!((arm - fd(ai)).norm() < 1e-6 * (1.0 + arm.norm()));
                assert!((wing - fd(wi)).norm() < 1e-6 * (1.0 + wing.norm()));
            }
        }
    }

    #[test]
    fn com_positions_at_rest_pose() {
        let params = MorphologyParams::default();
        let p = com_positions(&GeneralizedState::default(), &params);
        let l = params.links_left;
        assert_relative_eq!(p[BodyId::ArmLeft.index()], l[0] + l[1] * 0.5, epsilon = 1e-15);
        assert_relative_eq!(p[BodyId::WingLeft.index()], l[0] + l[1] + l[2], epsilon = 1e-15);
        assert_relative_eq!(p[BodyId::ArmRight.index()].y, -(l[0] + l[1] * 0.5).y, epsilon = 1e-15);
    }

    #[test]
    fn com_positions_translate_with_body() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = MorphologyParams::default();
        let s = random_state(&mut rng, 1.5);
        let d = Vec3::new(0.3, -2.0, 1.1);
        let mut moved = s.clone();
        moved.position += d;
        let a = com_positions(&s, &params);
        let b = com_positions(&moved, &params);
        for i in 0..5 {
            assert_relative_eq!(b[i], a[i] + d, epsilon = 1e-14);
        }
    }

    #[test]
    fn com_positions_match_transform_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = MorphologyParams::default();
        for _ in 0..200 {
            let s = random_state(&mut rng, std::f64::consts::PI);
            let a = com_positions(&s, &params);
            let b = com_positions_by_transforms(&s, &params);
            for i in 0..5 {
                assert!((a[i] - b[i]).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn mirror_symmetry_reflects_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = MorphologyParams::default();
        let s = random_state(&mut rng, 1.5);
        let m = s.mirrored();
        let a = com_positions(&s, &params);
        let b = com_positions(&m, &params);
        let reflect = |v: Vec3| Vec3::new(v.x, -v.y, v.z);
        // Left and right bodies trade places.
        let swap = [0usize, 2, 1, 4, 3];
        for i in 0..5 {
            assert_relative_eq!(b[swap[i]], reflect(a[i]), epsilon = 1e-14);
        }
    }

    #[test]
    fn wing_reach_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = MorphologyParams::default();
        let reach: f64 = params.links_left.iter().map(|l| l.norm()).sum();
        for _ in 0..500 {
            let s = random_state(&mut rng, std::f64::consts::PI);
            let p = com_positions(&s, &params);
            for id in [BodyId::WingLeft, BodyId::WingRight] {
                assert!((p[id.index()] - p[0]).norm() <= reach + 1e-12);
            }
        }
    }

    #[test]
    fn body_jacobian_of_main_body() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = random_state(&mut rng, 1.0);
        let j = &body_jacobians(&s, &MorphologyParams::default())[0];
        let mut jv = Jacobian::zeros();
        jv.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        let mut jw = Jacobian::zeros();
        jw.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        assert_eq!(j.linear, jv);
        assert_eq!(j.angular, jw);
    }

    fn fd_velocities(s: &GeneralizedState, params: &MorphologyParams, h: f64) -> ([Vec3; 5], [Vec3; 5]) {
        let sp = advance(s, h);
        let sm = advance(s, -h);
        let pp = com_positions(&sp, params);
        let pm = com_positions(&sm, params);
        let rp = body_orientations(&sp, params);
        let rm = body_orientations(&sm, params);
        let r0 = body_orientations(s, params);
        let lin = std::array::from_fn(|i| (pp[i] - pm[i]) / (2.0 * h));
        let ang = std::array::from_fn(|i| unskew(&(r0[i].transpose() * (rp[i] - rm[i]) / (2.0 * h))));
        (lin, ang)
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let params = MorphologyParams::default();
        for _ in 0..1000 {
            let s = random_state(&mut rng, std::f64::consts::FRAC_PI_2);
            let qd = s.velocity_vector();
            let jac = body_jacobians(&s, &params);
            let (lin, ang) = fd_velocities(&s, &params, 1e-6);
            for i in 0..5 {
                let v = jac[i].linear * qd;
                let w = jac[i].angular * qd;
                assert!((v - lin[i]).norm() <= 1e-6 * v.norm().max(1e-3), "body {i}");
                assert!((w - ang[i]).norm() <= 1e-6 * w.norm().max(1e-3), "body {i}");
            }
        }
    }

    #[test]
    fn jacobian_rates_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let params = MorphologyParams::default();
        let h = 1e-6;
        for _ in 0..100 {
            let s = random_state(&mut rng, std::f64::consts::FRAC_PI_2);
            let sets = jacobian_sets(&s, &params);
            let jp = body_jacobians(&advance(&s, h), &params);
            let jm = body_jacobians(&advance(&s, -h), &params);
            for i in 0..5 {
                let fd_lin = (jp[i].linear - jm[i].linear) / (2.0 * h);
                let fd_ang = (jp[i].angular - jm[i].angular) / (2.0 * h);
                let scale = fd_lin.norm().max(1e-3);
                assert!((sets[i].rate.linear - fd_lin).norm() < 1e-6 * scale, "linear {i}");
                let scale = fd_ang.norm().max(1e-3);
                assert!((sets[i].rate.angular - fd_ang).norm() < 1e-6 * scale, "angular {i}");
                assert!((sets[i].omega_local - sets[i].jac.angular * s.velocity_vector()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn morphology_validation() {
        let mut p = MorphologyParams::default();
        assert!(p.validate().is_ok());
        assert!((p.total_mass() - 0.030).abs() < 1e-12);
        p.bodies[3].mass = 0.0;
        assert!(matches!(p.validate(), Err(Error::Morphology(_))));
        let mut p = MorphologyParams::default();
        p.bodies[0].inertia[1] = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn morphology_config_parses_partial_files() {
        let cfg = MorphologyConfig::from_toml_str("wing_mass = 0.0005\ngravity = 0.0\n").unwrap();
        assert_eq!(cfg.wing_mass, 0.0005);
        assert_eq!(cfg.gravity, 0.0);
        assert_eq!(cfg.arm_mass, MorphologyConfig::default().arm_mass);
        assert!(MorphologyConfig::from_toml_str("wingmass = 1").is_err());
        let params = cfg.to_params();
        assert_eq!(params.links_right[0].y, -params.links_left[0].y);
    }
}
