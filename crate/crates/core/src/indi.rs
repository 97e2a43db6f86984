//! Incremental nonlinear dynamic inversion of the thrust vector.
//!
//! The filtered acceleration `a_f` and the filtered past input
//! `u_f = (φ_f, θ_f, T_f)` pass through identical Butterworth filters. The
//! increment `Δu = m G⁻¹(η_f, T_f)(ν − a_f)` is added to `u_f`.

use crate::filter::{Butterworth2, ButterworthCoefficients};
use crate::math::{cos, rotation, sin};
use crate::vehicle::{motor_speed_for_thrust, ImuSample, VehicleCommand, VehicleParams};
use crate::{Error, Mat3, Result, Vec2, Vec3, GRAVITY};

/// Determinant below which `G` is treated as singular.
pub const SINGULAR_DET: f64 = 1e-9;

/// Jacobian of `R(η)(0, 0, T)` with respect to `(φ, θ, T)`.
pub fn g_matrix(attitude: &Vec3, thrust: f64) -> Mat3 {
    let (sp, cp) = (sin(attitude.x), cos(attitude.x));
    let (st, ct) = (sin(attitude.y), cos(attitude.y));
    let (ss, cs) = (sin(attitude.z), cos(attitude.z));
    let t = thrust;
    Mat3::new(
        (ss * cp - cs * st * sp) * t,
        cs * ct * cp * t,
        cs * st * cp + ss * sp,
        (-ss * st * sp - cs * cp) * t,
        ss * ct * cp * t,
        ss * st * cp - cs * sp,
        -ct * sp * t,
        -st * cp * t,
        ct * cp,
    )
}

/// `Δu = m G⁻¹(ν − a_f)`.
pub fn indi_increment(attitude_f: &Vec3, thrust_f: f64, nu: &Vec3, accel_f: &Vec3, mass: f64) -> Result<Vec3> {
    let g = g_matrix(attitude_f, thrust_f);
    let det = g.determinant();
    if !(det.abs() >= SINGULAR_DET) {
        return Err(Error::SingularG { det });
    }
    let inv = g.try_inverse().ok_or(Error::SingularG { det })?;
    Ok(inv * (nu - accel_f) * mass)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AltitudeGains {
    /// [1/s²]
    pub k_p: f64,
    /// [1/s]
    pub k_v: f64,
}

impl Default for AltitudeGains {
    fn default() -> Self {
        Self { k_p: 2.0, k_v: 3.0 }
    }
}

impl AltitudeGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_p > 0.0 && self.k_p.is_finite()) {
            return Err(Error::InvalidParameter { name: "k_p", reason: "must be positive" });
        }
        if !(self.k_v > 0.0 && self.k_v.is_finite()) {
            return Err(Error::InvalidParameter { name: "k_v", reason: "must be positive" });
        }
        Ok(())
    }

    /// `k_v² ≥ 4 k_p`.
    pub fn is_overdamped(&self) -> bool {
        self.k_v * self.k_v >= 4.0 * self.k_p
    }
}

/// Vertical acceleration demand, z up.
pub fn altitude_acceleration(z: f64, z_desired: f64, vz: f64, gains: &AltitudeGains) -> f64 {
    gains.k_p * (z_desired - z) - gains.k_v * vz
}

/// Where the filtered attitude of the past input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AttitudeSource {
    /// Measured attitude and thrust rebuilt from measured motor speed.
    #[default]
    Measured,
    /// The previous command.
    Commanded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct IndiConfig {
    /// [Hz]
    pub cutoff: f64,
    /// Controller rate [Hz].
    pub rate: f64,
    pub altitude: AltitudeGains,
    pub attitude_source: AttitudeSource,
}

impl Default for IndiConfig {
    fn default() -> Self {
        Self {
            cutoff: 8.0,
            rate: 512.0,
            altitude: AltitudeGains::default(),
            attitude_source: AttitudeSource::Measured,
        }
    }
}

/// What the controller believes about its vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndiModel {
    pub mass: f64,
    pub n_motors: usize,
    /// Per-motor `c` in `T = c ω²` [N/Hz²].
    pub thrust_coefficient: f64,
    pub max_total_thrust: f64,
    pub attitude_limit: f64,
}

impl IndiModel {
    pub fn new(params: &VehicleParams, thrust_coefficient: f64) -> Self {
        Self {
            mass: params.mass,
            n_motors: params.n_motors,
            thrust_coefficient,
            max_total_thrust: params.max_total_thrust(),
            attitude_limit: params.attitude_limit,
        }
    }

    pub fn thrust_estimate(&self, motor_speed: f64) -> f64 {
        self.n_motors as f64 * self.thrust_coefficient * motor_speed * motor_speed
    }
}

/// Measurements available at one controller tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndiInput {
    pub imu: ImuSample,
    pub attitude: Vec3,
    /// [Hz]
    pub motor_speed: f64,
    pub position_z: f64,
    pub velocity_z: f64,
    /// Horizontal acceleration demand from guidance [m/s²].
    pub accel_xy: Vec2,
    pub altitude_setpoint: f64,
}

/// Diagnostics from one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IndiOutput {
    pub command: VehicleCommand,
    pub nu: Vec3,
    pub accel_f: Vec3,
    pub delta: Vec3,
    /// Total thrust after clamping [N].
    pub thrust_command: f64,
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndiController {
    config: IndiConfig,
    model: IndiModel,
    filter_a: Butterworth2<3>,
    filter_u: Butterworth2<3>,
    /// `(φ, θ, T)`.
    last_command: Vec3,
    warm: bool,
}

impl IndiController {
    pub fn new(config: IndiConfig, model: IndiModel) -> Result<Self> {
        config.altitude.validate()?;
        let coeffs = ButterworthCoefficients::low_pass(config.cutoff, config.rate)?;
        Ok(Self {
            config,
            model,
            filter_a: Butterworth2::new(coeffs),
            filter_u: Butterworth2::new(coeffs),
            last_command: Vec3::new(0.0, 0.0, model.mass * GRAVITY),
            warm: false,
        })
    }

    pub fn config(&self) -> &IndiConfig {
        &self.config
    }

    pub fn model(&self) -> &IndiModel {
        &self.model
    }

    /// `(φ, θ, T)` of the last command.
    pub fn last_command(&self) -> Vec3 {
        self.last_command
    }

    /// Primes the past-input memory, e.g. with the hover trim.
    pub fn set_last_command(&mut self, command: Vec3) {
        self.last_command = command;
    }

    pub fn filter_coefficients(&self) -> (&ButterworthCoefficients, &ButterworthCoefficients) {
        (self.filter_a.coefficients(), self.filter_u.coefficients())
    }

    fn motor_command(&self, u: &Vec3) -> VehicleCommand {
        VehicleCommand {
            roll: u.x,
            pitch: u.y,
            motor_speed: motor_speed_for_thrust(u.z, self.model.n_motors, self.model.thrust_coefficient),
        }
    }

    pub fn step(&mut self, input: &IndiInput) -> IndiOutput {
        let a0 = rotation(&input.attitude) * input.imu.specific_force - Vec3::new(0.0, 0.0, GRAVITY);
        let u0 = match self.config.attitude_source {
            AttitudeSource::Measured => Vec3::new(
                input.attitude.x,
                input.attitude.y,
                self.model.thrust_estimate(input.motor_speed),
            ),
            AttitudeSource::Commanded => self.last_command,
        };
        if !self.warm {
            self.filter_a.reset(a0.into());
            self.filter_u.reset(u0.into());
            self.warm = true;
        }
        let accel_f = Vec3::from(self.filter_a.apply(a0.into()));
        let u_f = Vec3::from(self.filter_u.apply(u0.into()));

        let nu_z = altitude_acceleration(input.position_z, input.altitude_setpoint, input.velocity_z, &self.config.altitude);
        let nu = Vec3::new(input.accel_xy.x, input.accel_xy.y, nu_z);
        let attitude_f = Vec3::new(u_f.x, u_f.y, input.attitude.z);

        match indi_increment(&attitude_f, u_f.z, &nu, &accel_f, self.model.mass) {
            Ok(delta) => {
                let lim = self.model.attitude_limit;
                let raw = u_f + delta;
                let u = Vec3::new(
                    raw.x.clamp(-lim, lim),
                    raw.y.clamp(-lim, lim),
                    raw.z.clamp(0.0, self.model.max_total_thrust),
                );
                self.last_command = u;
                IndiOutput {
                    command: self.motor_command(&u),
                    nu,
                    accel_f,
                    delta,
                    thrust_command: u.z,
                    singular: false,
                }
            }
            Err(_) => IndiOutput {
                command: self.motor_command(&self.last_command),
                nu,
                accel_f,
                delta: Vec3::zeros(),
                thrust_command: self.last_command.z,
                singular: true,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn thrust_vector(eta: &Vec3, t: f64) -> Vec3 {
        rotation(eta) * Vec3::new(0.0, 0.0, t)
    }

    #[test]
    fn hover_g_matrix() {
        let t = 3.9;
        let g = g_matrix(&Vec3::zeros(), t);
        assert_relative_eq!(g, Mat3::new(0.0, t, 0.0, -t, 0.0, 0.0, 0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_relative_eq!(g.determinant(), t * t, epsilon = 1e-12);
    }

    #[test]
    fn g_matrix_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let eta = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-3.0..3.0));
            let t = rng.random_range(1.0..6.0);
            let g = g_matrix(&eta, t);
            let h = 1e-6;
            for c in 0..3 {
                let (plus, minus) = if c < 2 {
                    let mut ep = eta;
                    let mut em = eta;
                    ep[c] += h;
                    em[c] -= h;
                    (thrust_vector(&ep, t), thrust_vector(&em, t))
                } else {
                    (thrust_vector(&eta, t + h), thrust_vector(&eta, t - h))
                };
                let fd = (plus - minus) / (2.0 * h);
                let col = g.column(c).into_owned();
                assert!((fd - col).norm() <= 1e-6 * col.norm().max(1.0));
            }
        }
    }

    #[test]
    fn increment_examples() {
        let m = 0.4;
        let tf = m * GRAVITY;
        let zero = indi_increment(&Vec3::zeros(), tf, &Vec3::new(0.3, 0.1, 0.2), &Vec3::new(0.3, 0.1, 0.2), m).unwrap();
        assert_eq!(zero, Vec3::zeros());
        let dz = indi_increment(&Vec3::zeros(), tf, &Vec3::new(0.0, 0.0, 0.7), &Vec3::zeros(), m).unwrap();
        assert_relative_eq!(dz, Vec3::new(0.0, 0.0, m * 0.7), epsilon = 1e-12);
        let dx = indi_increment(&Vec3::zeros(), tf, &Vec3::new(0.5, 0.0, 0.0), &Vec3::zeros(), m).unwrap();
        assert_relative_eq!(dx, Vec3::new(0.0, m * 0.5 / tf, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn zero_thrust_is_singular() {
        let r = indi_increment(&Vec3::zeros(), 0.0, &Vec3::new(1.0, 0.0, 0.0), &Vec3::zeros(), 0.4);
        assert!(matches!(r, Err(Error::SingularG { .. })));
    }

    #[test]
    fn altitude_pd_examples() {
        let gains = AltitudeGains::default();
        assert_eq!(altitude_acceleration(2.0, 2.0, 0.0, &gains), 0.0);
        assert_relative_eq!(altitude_acceleration(1.5, 2.0, 0.0, &gains), 1.0);
        assert!(gains.is_overdamped());
    }

    #[test]
    fn altitude_step_has_no_overshoot() {
        let gains = AltitudeGains::default();
        let dt = 1e-3;
        let (mut z, mut v) = (0.0_f64, 0.0_f64);
        let mut peak = f64::MIN;
        for _ in 0..20_000 {
            let a = altitude_acceleration(z, 1.0, v, &gains);
            v += a * dt;
            z += v * dt;
            peak = peak.max(z);
        }
        assert!(peak <= 1.0 + 1e-9);
        assert!((z - 1.0).abs() < 1e-6);
    }

    #[test]
    fn singular_tick_holds_last_command() {
        let params = VehicleParams::default();
        let mut c = IndiController::new(IndiConfig::default(), IndiModel::new(&params, params.thrust_coefficient)).unwrap();
        let input = IndiInput {
            imu: ImuSample { specific_force: Vec3::zeros(), gyro: Vec3::zeros() },
            attitude: Vec3::zeros(),
            motor_speed: 0.0,
            position_z: 1.0,
            velocity_z: 0.0,
            accel_xy: Vec2::new(1.0, 0.0),
            altitude_setpoint: 1.0,
        };
        let before = c.last_command();
        let out = c.step(&input);
        assert!(out.singular);
        assert_eq!(c.last_command(), before);
        assert_eq!(out.thrust_command, before.z);
    }

    #[test]
    fn both_filters_share_coefficients() {
        let params = VehicleParams::default();
        let c = IndiController::new(IndiConfig::default(), IndiModel::new(&params, params.thrust_coefficient)).unwrap();
        let (a, u) = c.filter_coefficients();
        assert_eq!(a, u);
    }
}
