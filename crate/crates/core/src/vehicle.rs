//! Rotorcraft plant: thrust along the body axis, first-order attitude and
//! motor lags, and an accelerometer model.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::math::{cos, exp, is_finite3, rotation, sin, sqrt};
use crate::{Error, Result, Vec3, GRAVITY};

/// Per-motor thrust coefficient [N/Hz²]: 1.6 N at 160 Hz.
pub const NOMINAL_THRUST_COEFFICIENT: f64 = 1.6 / (160.0 * 160.0);

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VehicleParams {
    /// [kg]
    pub mass: f64,
    /// [N]
    pub max_thrust_per_motor: f64,
    pub n_motors: usize,
    /// [s]
    pub motor_time_constant: f64,
    /// [s]
    pub attitude_time_constant: f64,
    /// Roll and pitch clamp [rad].
    pub attitude_limit: f64,
    /// True per-motor `c` in `T = c ω²` [N/Hz²].
    pub thrust_coefficient: f64,
    /// Yaw moment coefficient [m/s²/rpm]. Recorded only, motor mixing is not modelled.
    pub moment_coefficient: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 0.4,
            max_thrust_per_motor: 1.6,
            n_motors: 4,
            motor_time_constant: 0.02,
            attitude_time_constant: 0.05,
            attitude_limit: 0.35,
            thrust_coefficient: NOMINAL_THRUST_COEFFICIENT,
            moment_coefficient: 0.0006,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("max_thrust_per_motor", self.max_thrust_per_motor),
            ("motor_time_constant", self.motor_time_constant),
            ("attitude_time_constant", self.attitude_time_constant),
            ("attitude_limit", self.attitude_limit),
            ("thrust_coefficient", self.thrust_coefficient),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, reason: "must be positive and finite" });
            }
        }
        if self.n_motors == 0 {
            return Err(Error::InvalidParameter { name: "n_motors", reason: "must be at least 1" });
        }
        if self.attitude_limit >= core::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidParameter { name: "attitude_limit", reason: "must be below π/2" });
        }
        Ok(())
    }

    /// `n · max_thrust_per_motor` [N].
    pub fn max_total_thrust(&self) -> f64 {
        self.n_motors as f64 * self.max_thrust_per_motor
    }

    /// Highest motor speed the plant reaches [Hz].
    pub fn max_motor_speed(&self) -> f64 {
        sqrt(self.max_thrust_per_motor / self.thrust_coefficient)
    }
}

/// Per-motor thrust at speed `omega` [Hz], using the plant's true coefficient.
pub fn thrust_from_motor_speed(omega: f64, params: &VehicleParams) -> f64 {
    params.thrust_coefficient * omega * omega
}

/// Motor speed a controller believes produces `total` thrust, given its own coefficient.
pub fn motor_speed_for_thrust(total: f64, n_motors: usize, coefficient: f64) -> f64 {
    sqrt(total.max(0.0) / (n_motors as f64 * coefficient))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleState {
    /// [m], z up
    pub position: Vec3,
    /// [m/s]
    pub velocity: Vec3,
    /// Roll, pitch, yaw [rad].
    pub attitude: Vec3,
    /// Euler angle rates over the last step [rad/s].
    pub attitude_rate: Vec3,
    /// Common motor speed [Hz].
    pub motor_speed: f64,
    /// Total thrust [N].
    pub thrust: f64,
    /// Navigation-frame acceleration over the last step [m/s²].
    pub accel_true: Vec3,
}

impl VehicleState {
    /// Level hover at `position` with the motor speed that balances `load` extra newtons downward.
    pub fn hovering(position: Vec3, params: &VehicleParams, load: f64) -> Self {
        let thrust = (params.mass * GRAVITY + load).clamp(0.0, params.max_total_thrust());
        let motor_speed = motor_speed_for_thrust(thrust, params.n_motors, params.thrust_coefficient);
        Self {
            position,
            velocity: Vec3::zeros(),
            attitude: Vec3::zeros(),
            attitude_rate: Vec3::zeros(),
            motor_speed,
            thrust: params.n_motors as f64 * thrust_from_motor_speed(motor_speed, params),
            accel_true: Vec3::zeros(),
        }
    }
}

impl VehicleState {
    /// Steady flight at `velocity` with attitude and thrust trimmed against `external_force`.
    pub fn trimmed(position: Vec3, velocity: Vec3, params: &VehicleParams, external_force: &Vec3) -> Self {
        let need = Vec3::new(0.0, 0.0, params.mass * GRAVITY) - external_force;
        let total = need.norm().min(params.max_total_thrust());
        let limit = params.attitude_limit;
        let (roll, pitch) = if total > 0.0 {
            (
                libm::asin((-need.y / need.norm()).clamp(-1.0, 1.0)).clamp(-limit, limit),
                libm::atan2(need.x, need.z).clamp(-limit, limit),
            )
        } else {
            (0.0, 0.0)
        };
        let motor_speed = motor_speed_for_thrust(total, params.n_motors, params.thrust_coefficient);
        Self {
            position,
            velocity,
            attitude: Vec3::new(roll, pitch, 0.0),
            attitude_rate: Vec3::zeros(),
            motor_speed,
            thrust: params.n_motors as f64 * thrust_from_motor_speed(motor_speed, params),
            accel_true: Vec3::zeros(),
        }
    }
}

/// Attitude setpoint and motor speed command.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleCommand {
    pub roll: f64,
    pub pitch: f64,
    /// [Hz]
    pub motor_speed: f64,
}

/// Longest accepted plant step [s].
pub const MAX_STEP: f64 = 0.01;

/// Advances one plant step with symplectic Euler.
pub fn step_vehicle(
    state: &VehicleState,
    params: &VehicleParams,
    command: &VehicleCommand,
    external_force: &Vec3,
    dt: f64,
    time: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(Error::InvalidParameter { name: "dt", reason: "must lie in (0, 0.01] s" });
    }
    if !is_finite3(external_force) || !command.roll.is_finite() || !command.pitch.is_finite() {
        return Err(Error::NonFiniteState { what: "vehicle input", time });
    }
    let limit = params.attitude_limit;
    let target = Vec3::new(
        command.roll.clamp(-limit, limit),
        command.pitch.clamp(-limit, limit),
        state.attitude.z,
    );
    let alpha_att = 1.0 - exp(-dt / params.attitude_time_constant);
    let attitude = state.attitude + (target - state.attitude) * alpha_att;
    let attitude = Vec3::new(attitude.x.clamp(-limit, limit), attitude.y.clamp(-limit, limit), attitude.z);

    let speed_cmd = if command.motor_speed.is_finite() { command.motor_speed } else { 0.0 };
    let speed_cmd = speed_cmd.clamp(0.0, params.max_motor_speed());
    let alpha_motor = 1.0 - exp(-dt / params.motor_time_constant);
    let motor_speed = state.motor_speed + (speed_cmd - state.motor_speed) * alpha_motor;
    let thrust = (params.n_motors as f64 * thrust_from_motor_speed(motor_speed, params)).min(params.max_total_thrust());

    let force = rotation(&attitude) * Vec3::new(0.0, 0.0, thrust) + external_force;
    let accel = force / params.mass - Vec3::new(0.0, 0.0, GRAVITY);
    let velocity = state.velocity + accel * dt;
    let position = state.position + velocity * dt;

    let next = VehicleState {
        position,
        velocity,
        attitude,
        attitude_rate: (attitude - state.attitude) / dt,
        motor_speed,
        thrust,
        accel_true: accel,
    };
    if !(is_finite3(&next.position) && is_finite3(&next.velocity) && next.thrust.is_finite()) {
        return Err(Error::NonFiniteState { what: "vehicle state", time });
    }
    Ok(next)
}

/// Accelerometer corruption.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ImuNoise {
    /// White noise per axis [m/s²].
    pub sigma: f64,
    /// Vibration amplitude per axis [m/s²].
    pub vibration_amplitude: f64,
    /// [Hz]
    pub vibration_frequency: f64,
}

impl Default for ImuNoise {
    fn default() -> Self {
        Self {
            sigma: 0.2,
            vibration_amplitude: 0.5,
            vibration_frequency: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImuSample {
    /// Body frame, gravity excluded [m/s²].
    pub specific_force: Vec3,
    /// Euler angle rates [rad/s].
    pub gyro: Vec3,
}

/// Reads the accelerometer. `noise` adds white noise and a vibration tone; the
/// vibration phase is taken from `time`.
pub fn sample_imu<R: Rng + ?Sized>(state: &VehicleState, time: f64, noise: Option<(&ImuNoise, &mut R)>) -> ImuSample {
    let mut f = rotation(&state.attitude).transpose() * (state.accel_true + Vec3::new(0.0, 0.0, GRAVITY));
    if let Some((noise, rng)) = noise {
        if noise.sigma > 0.0 {
            if let Ok(normal) = Normal::new(0.0, noise.sigma) {
                for x in f.iter_mut() {
                    *x += normal.sample(rng);
                }
            }
        }
        let phase = core::f64::consts::TAU * noise.vibration_frequency * time;
        f += Vec3::new(sin(phase), cos(phase), sin(phase + 1.0)) * noise.vibration_amplitude;
    }
    ImuSample {
        specific_force: f,
        gyro: state.attitude_rate,
    }
}

/// Navigation-frame acceleration rebuilt from a sample: `R f − g ẑ`.
pub fn reconstruct_acceleration(sample: &ImuSample, attitude: &Vec3) -> Vec3 {
    rotation(attitude) * sample.specific_force - Vec3::new(0.0, 0.0, GRAVITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DT: f64 = 1.0 / 1024.0;

    fn hover_command(state: &VehicleState) -> VehicleCommand {
        VehicleCommand { roll: 0.0, pitch: 0.0, motor_speed: state.motor_speed }
    }

    #[test]
    fn motor_speed_examples() {
        let p = VehicleParams::default();
        assert_relative_eq!(thrust_from_motor_speed(160.0, &p), 1.6, epsilon = 1e-12);
        assert_eq!(thrust_from_motor_speed(0.0, &p), 0.0);
        assert_relative_eq!(thrust_from_motor_speed(160.0 / core::f64::consts::SQRT_2, &p), 0.8, epsilon = 1e-12);
        assert_relative_eq!(thrust_from_motor_speed(113.137, &p), 0.8, epsilon = 1e-5);
    }

    #[test]
    fn hover_is_stationary() {
        let p = VehicleParams::default();
        let mut s = VehicleState::hovering(Vec3::new(0.0, 0.0, 2.0), &p, 0.0);
        for k in 0..1024 {
            s = step_vehicle(&s, &p, &hover_command(&s), &Vec3::zeros(), DT, k as f64 * DT).unwrap();
        }
        assert!(s.accel_true.norm() < 1e-12);
        assert!((s.position - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn trimmed_state_balances_an_oblique_pull() {
        let p = VehicleParams::default();
        let pull = Vec3::new(-0.6, 0.5, -1.0);
        let s = VehicleState::trimmed(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), &p, &pull);
        let cmd = VehicleCommand { roll: s.attitude.x, pitch: s.attitude.y, motor_speed: s.motor_speed };
        let next = step_vehicle(&s, &p, &cmd, &pull, DT, 0.0).unwrap();
        assert!(next.accel_true.norm() < 1e-9);
    }

    #[test]
    fn horizontal_force_accelerates_by_f_over_m() {
        let p = VehicleParams::default();
        let s = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        let next = step_vehicle(&s, &p, &hover_command(&s), &Vec3::new(0.4, 0.0, 0.0), DT, 0.0).unwrap();
        assert_relative_eq!(next.accel_true, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn attitude_step_reaches_63_percent_at_time_constant() {
        let p = VehicleParams::default();
        let mut s = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        let cmd = VehicleCommand { roll: 0.2, pitch: 0.0, motor_speed: s.motor_speed };
        let steps = (p.attitude_time_constant / DT).round() as usize;
        for k in 0..steps {
            s = step_vehicle(&s, &p, &cmd, &Vec3::zeros(), DT, k as f64 * DT).unwrap();
        }
        let t = steps as f64 * DT;
        assert_relative_eq!(s.attitude.x / 0.2, 1.0 - exp(-t / p.attitude_time_constant), epsilon = 1e-12);
        assert!((s.attitude.x / 0.2 - 0.632).abs() < 0.01);
    }

    #[test]
    fn attitude_clamp_holds() {
        let p = VehicleParams::default();
        let mut s = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        let cmd = VehicleCommand { roll: 3.0, pitch: -3.0, motor_speed: s.motor_speed };
        for k in 0..2048 {
            s = step_vehicle(&s, &p, &cmd, &Vec3::zeros(), DT, k as f64 * DT).unwrap();
            assert!(s.attitude.x.abs() <= p.attitude_limit && s.attitude.y.abs() <= p.attitude_limit);
        }
    }

    #[test]
    fn thrust_never_exceeds_motor_limit() {
        let p = VehicleParams { thrust_coefficient: 1.2 * NOMINAL_THRUST_COEFFICIENT, ..Default::default() };
        let mut s = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        let cmd = VehicleCommand { roll: 0.0, pitch: 0.0, motor_speed: 1e4 };
        for k in 0..512 {
            s = step_vehicle(&s, &p, &cmd, &Vec3::zeros(), DT, k as f64 * DT).unwrap();
        }
        assert!(s.thrust <= p.max_total_thrust() + 1e-12);
        assert!(s.thrust > 0.99 * p.max_total_thrust());
    }

    #[test]
    fn momentum_bookkeeping() {
        let p = VehicleParams::default();
        let s = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        let f_ext = Vec3::new(0.3, -0.2, -1.27);
        let cmd = VehicleCommand { roll: 0.1, pitch: -0.05, motor_speed: 150.0 };
        let next = step_vehicle(&s, &p, &cmd, &f_ext, DT, 0.0).unwrap();
        let force = rotation(&next.attitude) * Vec3::new(0.0, 0.0, next.thrust) + f_ext - Vec3::new(0.0, 0.0, p.mass * GRAVITY);
        let impulse = force * DT;
        let dp = (next.velocity - s.velocity) * p.mass;
        assert!((dp - impulse).norm() <= 1e-9 * impulse.norm());
    }

    #[test]
    fn non_finite_force_is_rejected() {
        let p = VehicleParams::default();
        let s = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        let r = step_vehicle(&s, &p, &hover_command(&s), &Vec3::new(f64::NAN, 0.0, 0.0), DT, 0.0);
        assert!(matches!(r, Err(Error::NonFiniteState { .. })));
        assert!(step_vehicle(&s, &p, &hover_command(&s), &Vec3::zeros(), 0.02, 0.0).is_err());
    }

    #[test]
    fn imu_examples() {
        let p = VehicleParams::default();
        let s = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        let s = step_vehicle(&s, &p, &hover_command(&s), &Vec3::zeros(), DT, 0.0).unwrap();
        let imu = sample_imu::<ChaCha8Rng>(&s, 0.0, None);
        assert_relative_eq!(imu.specific_force, Vec3::new(0.0, 0.0, GRAVITY), epsilon = 1e-12);

        let cmd = VehicleCommand { roll: 0.0, pitch: 0.0, motor_speed: 0.0 };
        let mut fall = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        fall.motor_speed = 0.0;
        let fall = step_vehicle(&fall, &p, &cmd, &Vec3::zeros(), DT, 0.0).unwrap();
        assert!(sample_imu::<ChaCha8Rng>(&fall, 0.0, None).specific_force.norm() < 1e-12);
    }

    #[test]
    fn imu_reconstructs_rope_tension_under_retrimmed_hover() {
        let p = VehicleParams::default();
        let tension = 1.27;
        let s = VehicleState::hovering(Vec3::zeros(), &p, tension);
        let rope = Vec3::new(0.0, 0.0, -tension);
        let s = step_vehicle(&s, &p, &hover_command(&s), &rope, DT, 0.0).unwrap();
        assert!(s.accel_true.norm() < 1e-9);
        let f = sample_imu::<ChaCha8Rng>(&s, 0.0, None).specific_force;
        // thrust balances weight plus rope, so the accelerometer reads (mg + T)/m - T/m = g
        assert_relative_eq!(f.z, GRAVITY, epsilon = 1e-9);
        assert_relative_eq!(s.thrust / p.mass - f.z, tension / p.mass, epsilon = 1e-9);
    }

    #[test]
    fn imu_round_trip_is_exact_without_noise() {
        let p = VehicleParams::default();
        let s = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        let cmd = VehicleCommand { roll: 0.3, pitch: -0.2, motor_speed: 140.0 };
        let mut s = step_vehicle(&s, &p, &cmd, &Vec3::new(0.1, 0.2, -0.5), DT, 0.0).unwrap();
        s.attitude.z = 0.4;
        let imu = sample_imu::<ChaCha8Rng>(&s, 0.0, None);
        assert!((reconstruct_acceleration(&imu, &s.attitude) - s.accel_true).norm() < 1e-12);
    }

    #[test]
    fn noisy_imu_is_reproducible() {
        let p = VehicleParams::default();
        let s = VehicleState::hovering(Vec3::zeros(), &p, 0.0);
        let noise = ImuNoise::default();
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let fa = sample_imu(&s, 0.01, Some((&noise, &mut a)));
        let fb = sample_imu(&s, 0.01, Some((&noise, &mut b)));
        assert_eq!(fa, fb);
        assert!((fa.specific_force - Vec3::new(0.0, 0.0, GRAVITY)).norm() > 0.0);
    }
}
