//! Multi-rate closed loop: guidance, INDI and plant, with the payload coupled
//! through the ropes.
//!
//! Every plant tick the engine, in order:
//!
//! 1. on a guidance tick, snapshots the active [`MotionCommand`], advances the
//!    desired distances and recomputes every vehicle's horizontal demand from
//!    its local view;
//! 2. on a control tick, samples each IMU and runs each INDI controller;
//! 3. evaluates the rope forces;
//! 4. steps the vehicles and the payload.
//!
//! Guidance and control outputs are held between their ticks.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{check_len, relative_positions, FormationSpec};
use crate::guidance::{
    compose_motion, local_view, saturate, vehicle_acceleration, DisagreementSet, MotionBasis, MotionCommand,
    MotionLimits, DEFAULT_AXIS_LIMIT,
};
use crate::indi::{IndiConfig, IndiController, IndiInput, IndiModel, IndiOutput};
use crate::math::{cos, sin, sqrt};
use crate::payload::{hanging_equilibrium, payload_force, rope_forces, step_payload, PayloadParams, PayloadState};
use crate::vehicle::{sample_imu, step_vehicle, ImuNoise, VehicleCommand, VehicleParams, VehicleState};
use crate::{Error, Result, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Rates {
    /// [Hz]
    pub plant: u32,
    /// [Hz]
    pub control: u32,
    /// [Hz]
    pub guidance: u32,
    /// Trace record rate [Hz].
    pub record: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            plant: 1024,
            control: 512,
            guidance: 4,
            record: 50,
        }
    }
}

impl Rates {
    pub fn validate(&self) -> Result<()> {
        if self.plant == 0 || self.control == 0 || self.guidance == 0 || self.record == 0 {
            return Err(Error::InvalidParameter { name: "rates", reason: "must be positive" });
        }
        if !(self.guidance <= self.control && self.control <= self.plant) {
            return Err(Error::InvalidParameter { name: "rates", reason: "need guidance ≤ control ≤ plant" });
        }
        if !self.plant.is_multiple_of(self.control) || !self.control.is_multiple_of(self.guidance) {
            return Err(Error::InvalidParameter { name: "rates", reason: "must be integer multiples of each other" });
        }
        if self.record > self.plant {
            return Err(Error::InvalidParameter { name: "rates", reason: "record rate above plant rate" });
        }
        Ok(())
    }

    pub fn plant_dt(&self) -> f64 {
        1.0 / self.plant as f64
    }
}

/// A motion command that takes effect at `t` and holds until the next one.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScheduledCommand {
    pub t: f64,
    pub command: MotionCommand,
}

/// A constant force on one vehicle during `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExternalForce {
    pub vehicle: usize,
    /// [N]
    pub force: Vec3,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub spec: FormationSpec,
    /// Desired vertex positions in the formation body frame; the motion basis is solved on it.
    pub shape: Vec<Vec2>,
    pub initial_positions: Vec<Vec3>,
    pub initial_velocities: Vec<Vec3>,
    /// Parameters the controllers are designed with.
    pub vehicle: VehicleParams,
    /// Ratio of the true to the nominal thrust coefficient.
    pub plant_thrust_scale: f64,
    pub imu_noise: Option<ImuNoise>,
    pub indi: IndiConfig,
    pub payload: Option<PayloadParams>,
    /// `None` starts the payload hanging still below the team.
    pub payload_initial: Option<PayloadState>,
    pub rates: Rates,
    /// [s]
    pub duration: f64,
    /// Nominal altitude [m].
    pub altitude: f64,
    pub axis_limit: f64,
    pub limits: MotionLimits,
    pub commands: Vec<ScheduledCommand>,
    pub external_forces: Vec<ExternalForce>,
    pub seed: u64,
}

impl Scenario {
    /// Unit square hovering at 2 m with the payload, no commands.
    pub fn square(name: &str, initial_positions: Vec<Vec3>) -> Self {
        let n = initial_positions.len();
        Self {
            name: name.into(),
            spec: crate::graph::square_formation_spec(),
            shape: crate::graph::square_shape(1.0),
            initial_positions,
            initial_velocities: alloc::vec![Vec3::zeros(); n],
            vehicle: VehicleParams::default(),
            plant_thrust_scale: 1.0,
            imu_noise: Some(ImuNoise::default()),
            indi: IndiConfig::default(),
            payload: Some(PayloadParams::default()),
            payload_initial: None,
            rates: Rates::default(),
            duration: 20.0,
            altitude: 2.0,
            axis_limit: DEFAULT_AXIS_LIMIT,
            limits: MotionLimits::default(),
            commands: Vec::new(),
            external_forces: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.spec.vertex_count();
        check_len("shape", n, self.shape.len())?;
        check_len("initial_positions", n, self.initial_positions.len())?;
        check_len("initial_velocities", n, self.initial_velocities.len())?;
        self.vehicle.validate()?;
        self.rates.validate()?;
        if self.indi.rate != f64::from(self.rates.control) {
            return Err(Error::InvalidParameter { name: "indi.rate", reason: "must equal the control rate" });
        }
        if let Some(p) = &self.payload {
            p.validate(n)?;
            if self.rates.plant_dt() > crate::payload::MAX_PAYLOAD_STEP {
                return Err(Error::InvalidParameter { name: "rates", reason: "payload needs a plant rate of at least 1 kHz" });
            }
        }
        if !(self.plant_thrust_scale.is_finite() && self.plant_thrust_scale > 0.0) {
            return Err(Error::InvalidParameter { name: "plant_thrust_scale", reason: "must be positive" });
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidParameter { name: "duration", reason: "must be non-negative" });
        }
        if !(self.axis_limit.is_finite() && self.axis_limit > 0.0) {
            return Err(Error::InvalidParameter { name: "axis_limit", reason: "must be positive" });
        }
        if self.commands.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::InvalidParameter { name: "commands", reason: "must be sorted by time" });
        }
        if self.external_forces.iter().any(|f| f.vehicle >= n) {
            return Err(Error::InvalidParameter { name: "external_forces", reason: "vehicle index out of range" });
        }
        Ok(())
    }

    /// Plant parameters: the nominal ones with the thrust coefficient scaled.
    pub fn plant_params(&self) -> VehicleParams {
        VehicleParams {
            thrust_coefficient: self.vehicle.thrust_coefficient * self.plant_thrust_scale,
            ..self.vehicle
        }
    }
}

/// `shape` at `altitude` with each vertex displaced uniformly inside a disc of `radius`.
pub fn perturbed_positions(shape: &[Vec2], altitude: f64, radius: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    shape
        .iter()
        .map(|p| {
            let r = radius * sqrt(rng.random::<f64>());
            let a = core::f64::consts::TAU * rng.random::<f64>();
            Vec3::new(p.x + r * cos(a), p.y + r * sin(a), altitude)
        })
        .collect()
}

/// One vehicle with its controller.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRig {
    pub plant: VehicleParams,
    pub state: VehicleState,
    pub controller: IndiController,
    pub command: VehicleCommand,
    pub last: IndiOutput,
}

impl VehicleRig {
    /// Starts in trimmed flight against `external_force`.
    pub fn new(
        plant: VehicleParams,
        model: IndiModel,
        config: IndiConfig,
        position: Vec3,
        velocity: Vec3,
        external_force: &Vec3,
    ) -> Result<Self> {
        let state = VehicleState::trimmed(position, velocity, &plant, external_force);
        let mut controller = IndiController::new(config, model)?;
        controller.set_last_command(Vec3::new(state.attitude.x, state.attitude.y, state.thrust));
        let command = VehicleCommand {
            roll: state.attitude.x,
            pitch: state.attitude.y,
            motor_speed: state.motor_speed,
        };
        Ok(Self {
            plant,
            state,
            controller,
            command,
            last: IndiOutput {
                command,
                thrust_command: state.thrust,
                ..Default::default()
            },
        })
    }

    pub fn control<R: Rng + ?Sized>(&mut self, accel_xy: Vec2, altitude: f64, time: f64, noise: Option<(&ImuNoise, &mut R)>) -> IndiOutput {
        let imu = sample_imu(&self.state, time, noise);
        let out = self.controller.step(&IndiInput {
            imu,
            attitude: self.state.attitude,
            motor_speed: self.state.motor_speed,
            position_z: self.state.position.z,
            velocity_z: self.state.velocity.z,
            accel_xy,
            altitude_setpoint: altitude,
        });
        self.command = out.command;
        self.last = out;
        out
    }

    pub fn advance(&mut self, external_force: &Vec3, dt: f64, time: f64) -> Result<()> {
        self.state = step_vehicle(&self.state, &self.plant, &self.command, external_force, dt, time)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleRecord {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Vec3,
    /// Acceleration demand fed to INDI [m/s²].
    pub nu: Vec3,
    /// Filtered measured acceleration [m/s²].
    pub accel_f: Vec3,
    /// Last INDI increment `(Δφ, Δθ, ΔT)`.
    pub delta: Vec3,
    /// Rope force on the vehicle [N].
    pub tension: Vec3,
    /// [N]
    pub thrust: f64,
    pub saturated: bool,
    pub singular: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgeRecord {
    /// Horizontal distance [m].
    pub distance: f64,
    /// [m]
    pub desired: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub t: f64,
    pub command: MotionCommand,
    pub vehicles: Vec<VehicleRecord>,
    pub edges: Vec<EdgeRecord>,
    pub payload: Option<PayloadState>,
}

impl TraceRecord {
    pub fn max_abs_edge_error(&self) -> f64 {
        self.edges.iter().map(|e| (e.distance - e.desired).abs()).fold(0.0, f64::max)
    }

    pub fn centroid(&self) -> Vec3 {
        self.vehicles.iter().map(|v| v.position).sum::<Vec3>() / self.vehicles.len().max(1) as f64
    }

    pub fn mean_velocity(&self) -> Vec3 {
        self.vehicles.iter().map(|v| v.velocity).sum::<Vec3>() / self.vehicles.len().max(1) as f64
    }

    pub fn is_finite(&self) -> bool {
        let f3 = |v: &Vec3| v.iter().all(|x| x.is_finite());
        self.t.is_finite()
            && self.vehicles.iter().all(|v| {
                f3(&v.position) && f3(&v.velocity) && f3(&v.attitude) && f3(&v.nu) && f3(&v.accel_f) && f3(&v.delta) && f3(&v.tension) && v.thrust.is_finite()
            })
            && self.edges.iter().all(|e| e.distance.is_finite() && e.desired.is_finite())
            && self.payload.as_ref().is_none_or(|p| f3(&p.position) && f3(&p.velocity))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trace {
    pub scenario: String,
    pub seed: u64,
    pub edges: Vec<(usize, usize)>,
    pub records: Vec<TraceRecord>,
}

/// A run stopped by an error, with everything recorded up to that point.
#[derive(Debug, Clone, PartialEq)]
pub struct Aborted {
    pub error: Error,
    pub partial: Trace,
}

impl core::fmt::Display for Aborted {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} after {} records", self.error, self.partial.records.len())
    }
}

impl core::error::Error for Aborted {}

#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    basis: MotionBasis,
    spec: FormationSpec,
    disagreements: DisagreementSet,
    rigs: Vec<VehicleRig>,
    payload: Option<(PayloadParams, PayloadState)>,
    tensions: Vec<Vec3>,
    rng: ChaCha8Rng,
    tick: u64,
    accel_xy: Vec<Vec2>,
    saturated: Vec<bool>,
    active: MotionCommand,
    script_next: usize,
    interactive: bool,
    pending: Option<MotionCommand>,
    running: bool,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.spec.vertex_count();
        let basis = MotionBasis::new(&scenario.spec, &scenario.shape)?;
        let plant = scenario.plant_params();
        let model = IndiModel::new(&scenario.vehicle, scenario.vehicle.thrust_coefficient);

        let payload = match &scenario.payload {
            Some(params) => {
                let state = match scenario.payload_initial {
                    Some(s) => s,
                    None => {
                        let mut s = hanging_equilibrium(&scenario.initial_positions, params)?;
                        s.velocity = scenario.initial_velocities.iter().sum::<Vec3>() / n as f64;
                        s
                    }
                };
                Some((params.clone(), state))
            }
            None => None,
        };
        let tensions = match &payload {
            Some((params, state)) => rope_forces(state, &scenario.initial_positions, &scenario.initial_velocities, params),
            None => alloc::vec![Vec3::zeros(); n],
        };
        let rigs = (0..n)
            .map(|i| {
                VehicleRig::new(
                    plant,
                    model,
                    scenario.indi,
                    scenario.initial_positions[i],
                    scenario.initial_velocities[i],
                    &tensions[i],
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(1);
        Ok(Self {
            spec: scenario.spec.clone(),
            disagreements: DisagreementSet::zero(n, scenario.spec.edge_count()),
            basis,
            rigs,
            payload,
            tensions,
            rng,
            tick: 0,
            accel_xy: alloc::vec![Vec2::zeros(); n],
            saturated: alloc::vec![false; n],
            active: MotionCommand::default(),
            script_next: 0,
            interactive: false,
            pending: None,
            running: true,
            scenario,
        })
    }

    /// Live mode: the command script is ignored and [`Self::apply_live_command`] is accepted.
    pub fn interactive(scenario: Scenario) -> Result<Self> {
        let mut sim = Self::new(scenario)?;
        sim.interactive = true;
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 / self.scenario.rates.plant as f64
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn spec(&self) -> &FormationSpec {
        &self.spec
    }

    pub fn rigs(&self) -> &[VehicleRig] {
        &self.rigs
    }

    pub fn payload(&self) -> Option<&PayloadState> {
        self.payload.as_ref().map(|(_, s)| s)
    }

    pub fn active_command(&self) -> MotionCommand {
        self.active
    }

    pub fn disagreements(&self) -> &DisagreementSet {
        &self.disagreements
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn stop(&mut self) {
        self.running = false;
    }

    /// Clamps `cmd` and queues it for the next guidance tick. Returns the clamped command.
    pub fn apply_live_command(&mut self, cmd: MotionCommand) -> Result<MotionCommand> {
        if !(self.interactive && self.running) {
            return Err(Error::NotRunning);
        }
        let clamped = cmd.clamped(&self.scenario.limits);
        self.pending = Some(clamped);
        Ok(clamped)
    }

    fn scripted_command(&mut self, t: f64) -> MotionCommand {
        let script = &self.scenario.commands;
        while self.script_next < script.len() && script[self.script_next].t <= t + 1e-12 {
            self.active = script[self.script_next].command;
            self.script_next += 1;
        }
        self.active
    }

    fn guidance_tick(&mut self, t: f64) -> Result<()> {
        let cmd = if self.interactive {
            if let Some(p) = self.pending.take() {
                self.active = p;
            }
            self.active
        } else {
            self.scripted_command(t)
        };
        let cmd = cmd.clamped(&self.scenario.limits);
        self.active = cmd;
        let dt = 1.0 / self.scenario.rates.guidance as f64;
        let (dis, distances) = compose_motion(&cmd, &self.basis, &self.spec, dt, &self.scenario.limits)?;
        self.spec.desired_distances = distances;
        self.disagreements = dis;

        let positions: Vec<Vec2> = self.rigs.iter().map(|r| r.state.position.xy()).collect();
        let rel = relative_positions(&self.spec, &positions)?;
        for (i, rig) in self.rigs.iter().enumerate() {
            let view = local_view(&self.spec, &rel, &self.disagreements, i)?;
            let u = vehicle_acceleration(self.spec.gain_damping, self.spec.gain_shape, rig.state.velocity.xy(), &view)?;
            let (u, sat) = saturate(u, self.scenario.axis_limit);
            self.accel_xy[i] = u;
            self.saturated[i] = sat;
        }
        Ok(())
    }

    /// Advances one plant tick.
    pub fn step(&mut self) -> Result<()> {
        if !self.running {
            return Err(Error::NotRunning);
        }
        let rates = self.scenario.rates;
        let t = self.time();
        let dt = rates.plant_dt();
        if self.tick.is_multiple_of(u64::from(rates.plant / rates.guidance)) {
            self.guidance_tick(t)?;
        }
        if self.tick.is_multiple_of(u64::from(rates.plant / rates.control)) {
            let altitude = self.scenario.altitude + self.active.altitude_offset;
            let noise = self.scenario.imu_noise;
            for (i, rig) in self.rigs.iter_mut().enumerate() {
                let noise = noise.as_ref().map(|n| (n, &mut self.rng));
                rig.control(self.accel_xy[i], altitude, t, noise);
            }
        }

        if let Some((params, state)) = &self.payload {
            let positions: Vec<Vec3> = self.rigs.iter().map(|r| r.state.position).collect();
            let velocities: Vec<Vec3> = self.rigs.iter().map(|r| r.state.velocity).collect();
            self.tensions = rope_forces(state, &positions, &velocities, params);
        }
        for (i, rig) in self.rigs.iter_mut().enumerate() {
            let mut force = self.tensions[i];
            for f in &self.scenario.external_forces {
                if f.vehicle == i && f.start <= t && t < f.end {
                    force += f.force;
                }
            }
            rig.advance(&force, dt, t)?;
        }
        if let Some((params, state)) = &mut self.payload {
            let total = payload_force(&self.tensions, params);
            *state = step_payload(state, &total, params, dt, t)?;
        }
        self.tick += 1;
        Ok(())
    }

    pub fn record(&self) -> TraceRecord {
        let vehicles = self
            .rigs
            .iter()
            .enumerate()
            .map(|(i, r)| VehicleRecord {
                position: r.state.position,
                velocity: r.state.velocity,
                attitude: r.state.attitude,
                nu: r.last.nu,
                accel_f: r.last.accel_f,
                delta: r.last.delta,
                tension: self.tensions[i],
                thrust: r.state.thrust,
                saturated: self.saturated[i],
                singular: r.last.singular,
            })
            .collect();
        let edges = self
            .spec
            .graph
            .edges()
            .iter()
            .zip(&self.spec.desired_distances)
            .map(|(&(t, h), &d)| EdgeRecord {
                distance: (self.rigs[t].state.position.xy() - self.rigs[h].state.position.xy()).norm(),
                desired: d,
            })
            .collect();
        TraceRecord {
            t: self.time(),
            command: self.active,
            vehicles,
            edges,
            payload: self.payload().copied(),
        }
    }

    fn empty_trace(&self) -> Trace {
        Trace {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            edges: self.spec.graph.edges().to_vec(),
            records: Vec::new(),
        }
    }

    /// Runs to the scenario duration, recording at the record rate.
    pub fn run(&mut self) -> core::result::Result<Trace, Aborted> {
        let plant = u64::from(self.scenario.rates.plant);
        let record = u64::from(self.scenario.rates.record);
        let total = libm::round(self.scenario.duration * plant as f64) as u64;
        let mut trace = self.empty_trace();
        trace.records.push(self.record());
        while self.tick < total {
            if let Err(error) = self.step() {
                return Err(Aborted { error, partial: trace });
            }
            let k = self.tick;
            if (k * record) / plant > ((k - 1) * record) / plant {
                let r = self.record();
                if !r.is_finite() {
                    return Err(Aborted {
                        error: Error::NonFiniteState { what: "trace record", time: r.t },
                        partial: trace,
                    });
                }
                trace.records.push(r);
            }
        }
        self.running = false;
        Ok(trace)
    }
}

/// Builds and runs `scenario`. Invalid scenarios abort with an empty trace.
pub fn run_scenario(scenario: Scenario) -> core::result::Result<Trace, Aborted> {
    let name = scenario.name.clone();
    let seed = scenario.seed;
    let edges = scenario.spec.graph.edges().to_vec();
    match Simulation::new(scenario) {
        Ok(mut sim) => sim.run(),
        Err(error) => Err(Aborted {
            error,
            partial: Trace { scenario: name, seed, edges, records: Vec::new() },
        }),
    }
}
