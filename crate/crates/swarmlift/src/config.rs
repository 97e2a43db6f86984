//! Scenario files.
//!
//! A scenario is a TOML document. Every section is optional and falls back to
//! the defaults of the unit-square team; unknown keys are rejected so that
//! typos surface as errors with a line and column.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swarmlift_core::graph::{square_graph, square_shape, FormationGraph, FormationSpec, DEFAULT_GAIN_DAMPING, DEFAULT_GAIN_SHAPE};
use swarmlift_core::guidance::{MotionCommand, MotionLimits, DEFAULT_AXIS_LIMIT};
use swarmlift_core::indi::IndiConfig;
use swarmlift_core::payload::PayloadParams;
use swarmlift_core::sim::{perturbed_positions, ExternalForce, Rates, Scenario, ScheduledCommand};
use swarmlift_core::vehicle::{ImuNoise, VehicleParams};
use swarmlift_core::{Vec2, Vec3};
use thiserror::Error;

const BUNDLED: [(&str, &str); 6] = [
    ("hold_square", include_str!("../scenarios/hold_square.toml")),
    ("translate_reverse", include_str!("../scenarios/translate_reverse.toml")),
    ("spin", include_str!("../scenarios/spin.toml")),
    ("scale_up", include_str!("../scenarios/scale_up.toml")),
    ("paper_replica", include_str!("../scenarios/paper_replica.toml")),
    ("worst_case_pose", include_str!("../scenarios/worst_case_pose.toml")),
];

/// Names of the scenarios compiled into the binary.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: field `{field}`: {message}")]
    Invalid {
        origin: String,
        field: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    /// [s]
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Noise seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub formation: FormationSection,
    #[serde(default)]
    pub start: StartSection,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub imu: ImuSection,
    #[serde(default)]
    pub indi: IndiConfig,
    #[serde(default)]
    pub payload: PayloadSection,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub guidance: GuidanceSection,
    #[serde(default)]
    pub commands: Vec<CommandEntry>,
    #[serde(default)]
    pub forces: Vec<ForceEntry>,
    #[serde(default)]
    pub assertions: Assertions,
}

fn default_duration() -> f64 {
    20.0
}

/// Team geometry. Without `vertices` the team is a square of `side` with both diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationSection {
    /// [m]
    pub side: f64,
    /// Desired vertex positions in the body frame [m].
    pub vertices: Option<Vec<[f64; 2]>>,
    /// `[tail, head]` pairs, 0-based.
    pub edges: Option<Vec<[usize; 2]>>,
    pub gain_damping: f64,
    pub gain_shape: f64,
}

impl Default for FormationSection {
    fn default() -> Self {
        Self {
            side: 1.0,
            vertices: None,
            edges: None,
            gain_damping: DEFAULT_GAIN_DAMPING,
            gain_shape: DEFAULT_GAIN_SHAPE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartSection {
    /// Nominal altitude [m].
    pub altitude: f64,
    /// Radius of the disc each vertex is displaced within [m].
    pub perturbation: f64,
    /// Seed of the displacement draw.
    pub seed: u64,
    /// Explicit initial positions, overriding the perturbed shape [m].
    pub positions: Option<Vec<[f64; 3]>>,
    /// [m/s]
    pub velocities: Option<Vec<[f64; 3]>>,
}

impl Default for StartSection {
    fn default() -> Self {
        Self {
            altitude: 2.0,
            perturbation: 0.3,
            seed: 0,
            positions: None,
            velocities: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    /// True thrust coefficient over the controller's nominal one.
    pub thrust_scale: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self { thrust_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuSection {
    pub enabled: bool,
    pub sigma: f64,
    pub vibration_amplitude: f64,
    pub vibration_frequency: f64,
}

impl Default for ImuSection {
    fn default() -> Self {
        let n = ImuNoise::default();
        Self {
            enabled: true,
            sigma: n.sigma,
            vibration_amplitude: n.vibration_amplitude,
            vibration_frequency: n.vibration_frequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayloadSection {
    pub enabled: bool,
    pub mass: f64,
    pub rope_length: f64,
    pub rope_stiffness: f64,
    pub rope_damping: f64,
    pub attachment_offsets: Vec<[f64; 3]>,
}

impl Default for PayloadSection {
    fn default() -> Self {
        let p = PayloadParams::default();
        Self {
            enabled: true,
            mass: p.mass,
            rope_length: p.rope_length,
            rope_stiffness: p.rope_stiffness,
            rope_damping: p.rope_damping,
            attachment_offsets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceSection {
    /// Per-axis acceleration bound [m/s²].
    pub axis_limit: f64,
    pub limits: MotionLimits,
}

impl Default for GuidanceSection {
    fn default() -> Self {
        Self {
            axis_limit: DEFAULT_AXIS_LIMIT,
            limits: MotionLimits::default(),
        }
    }
}

/// A command taking effect at `t` and holding until the next entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandEntry {
    pub t: f64,
    #[serde(default)]
    pub translation: [f64; 2],
    #[serde(default)]
    pub spin: f64,
    #[serde(default)]
    pub scale_rate: f64,
    #[serde(default)]
    pub altitude_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceEntry {
    pub vehicle: usize,
    /// [N]
    pub force: [f64; 3],
    pub start: f64,
    pub end: f64,
}

/// Bounds checked against the metrics summary after a run. Absent bounds are not checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Assertions {
    pub max_edge_error: Option<f64>,
    pub final_edge_error: Option<f64>,
    pub max_payload_swing: Option<f64>,
    pub max_axis_accel: Option<f64>,
    pub max_tilt: Option<f64>,
    pub max_tension: Option<f64>,
    /// Mean formation velocity over the last `final_window` seconds [m/s].
    pub final_velocity: Option<[f64; 2]>,
    pub final_velocity_tolerance: Option<f64>,
    /// [s], default 5.
    pub final_window: Option<f64>,
}

fn to_vec3(v: &[f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn line_column(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ScenarioFile {
    /// Parses TOML; `origin` names the source in diagnostics.
    pub fn parse(source: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(source).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(source, s.start));
            ConfigError::Parse {
                origin: origin.into(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// Builds and validates the simulation scenario.
    pub fn to_scenario(&self, origin: &str) -> Result<Scenario, ConfigError> {
        let invalid = |field: &str, message: String| ConfigError::Invalid {
            origin: origin.into(),
            field: field.into(),
            message,
        };
        let f = &self.formation;
        let (graph, shape) = match (&f.vertices, &f.edges) {
            (None, None) => {
                if !(f.side > 0.0) {
                    return Err(invalid("formation.side", "must be positive".into()));
                }
                (square_graph(), square_shape(f.side))
            }
            (Some(v), Some(e)) => {
                let graph = FormationGraph::new(v.len(), e.iter().map(|p| (p[0], p[1])).collect())
                    .map_err(|err| invalid("formation.edges", err.to_string()))?;
                (graph, v.iter().map(|p| Vec2::new(p[0], p[1])).collect())
            }
            _ => return Err(invalid("formation", "`vertices` and `edges` must be given together".into())),
        };
        let spec = FormationSpec::from_shape(graph, &shape, f.gain_damping, f.gain_shape)
            .map_err(|err| invalid("formation", err.to_string()))?;
        let n = shape.len();

        let s = &self.start;
        let initial_positions = match &s.positions {
            Some(p) if p.len() != n => {
                return Err(invalid("start.positions", format!("expected {n} positions, found {}", p.len())));
            }
            Some(p) => p.iter().map(to_vec3).collect(),
            None => perturbed_positions(&shape, s.altitude, s.perturbation, s.seed),
        };
        let initial_velocities = match &s.velocities {
            Some(v) if v.len() != n => {
                return Err(invalid("start.velocities", format!("expected {n} velocities, found {}", v.len())));
            }
            Some(v) => v.iter().map(to_vec3).collect(),
            None => vec![Vec3::zeros(); n],
        };

        let imu = &self.imu;
        let p = &self.payload;
        let mut commands: Vec<ScheduledCommand> = self
            .commands
            .iter()
            .map(|c| ScheduledCommand {
                t: c.t,
                command: MotionCommand {
                    translation: c.translation,
                    spin: c.spin,
                    scale_rate: c.scale_rate,
                    altitude_offset: c.altitude_offset,
                },
            })
            .collect();
        commands.sort_by(|a, b| a.t.total_cmp(&b.t));

        let scenario = Scenario {
            name: self.name.clone(),
            spec,
            shape,
            initial_positions,
            initial_velocities,
            vehicle: self.vehicle,
            plant_thrust_scale: self.plant.thrust_scale,
            imu_noise: imu.enabled.then_some(ImuNoise {
                sigma: imu.sigma,
                vibration_amplitude: imu.vibration_amplitude,
                vibration_frequency: imu.vibration_frequency,
            }),
            indi: self.indi,
            payload: p.enabled.then(|| PayloadParams {
                mass: p.mass,
                rope_length: p.rope_length,
                rope_stiffness: p.rope_stiffness,
                rope_damping: p.rope_damping,
                attachment_offsets: p.attachment_offsets.iter().map(to_vec3).collect(),
            }),
            payload_initial: None,
            rates: self.rates,
            duration: self.duration,
            altitude: s.altitude,
            axis_limit: self.guidance.axis_limit,
            limits: self.guidance.limits,
            commands,
            external_forces: self
                .forces
                .iter()
                .map(|f| ExternalForce {
                    vehicle: f.vehicle,
                    force: to_vec3(&f.force),
                    start: f.start,
                    end: f.end,
                })
                .collect(),
            seed: self.seed,
        };
        scenario.validate().map_err(|err| {
            let field = match &err {
                swarmlift_core::Error::InvalidParameter { name, .. } => (*name).to_string(),
                _ => "scenario".to_string(),
            };
            invalid(&field, err.to_string())
        })?;
        Ok(scenario)
    }
}

/// Reads a scenario from `path`, or from the bundled set when `path` names
/// one of them and no such file exists.
pub fn load(path: &Path) -> Result<(ScenarioFile, Scenario), ConfigError> {
    let origin = path.display().to_string();
    let source = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(err) => match path.to_str().and_then(bundled_source) {
            Some(s) if !path.exists() => s.to_string(),
            _ => return Err(ConfigError::Io { path: path.into(), source: err }),
        },
    };
    let file = ScenarioFile::parse(&source, &origin)?;
    let scenario = file.to_scenario(&origin)?;
    Ok((file, scenario))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let file = ScenarioFile::parse("name = \"x\"\n", "t").unwrap();
        let s = file.to_scenario("t").unwrap();
        assert_eq!(s.duration, 20.0);
        assert_eq!(s.spec.vertex_count(), 4);
        assert!(s.payload.is_some() && s.imu_noise.is_some());
        assert_eq!(s.rates, Rates::default());
    }

    #[test]
    fn unknown_key_reports_line_and_column() {
        let src = "name = \"x\"\n[rates]\nplant = 1024\ncontroll = 512\n";
        match ScenarioFile::parse(src, "f.toml").unwrap_err() {
            ConfigError::Parse { line, column, message, .. } => {
                assert_eq!((line, column), (4, 1));
                assert!(message.contains("controll"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn wrong_type_reports_the_line() {
        let src = "name = \"x\"\nduration = \"long\"\n";
        let err = ScenarioFile::parse(src, "f.toml").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let src = "name = \"x\"\n[rates]\ncontrol = 500\n";
        let file = ScenarioFile::parse(src, "f.toml").unwrap();
        match file.to_scenario("f.toml").unwrap_err() {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "rates"),
            other => panic!("{other}"),
        }
        let src = "name = \"x\"\n[start]\npositions = [[0.0, 0.0, 2.0]]\n";
        let err = ScenarioFile::parse(src, "f.toml").unwrap().to_scenario("f.toml").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "start.positions"), "{err}");
    }

    #[test]
    fn every_bundled_scenario_is_valid() {
        for name in bundled_names() {
            let file = ScenarioFile::parse(bundled_source(name).unwrap(), name).unwrap();
            assert_eq!(file.name, name);
            file.to_scenario(name).unwrap();
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let file = ScenarioFile::parse(bundled_source("paper_replica").unwrap(), "p").unwrap();
        let again = ScenarioFile::parse(&file.to_toml(), "p").unwrap();
        assert_eq!(file, again);
    }

    #[test]
    fn custom_graph() {
        let src = "name = \"tri\"\n[payload]\nenabled = false\n[formation]\nvertices = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]]\nedges = [[0, 1], [1, 2], [2, 0]]\n";
        let s = ScenarioFile::parse(src, "t").unwrap().to_scenario("t").unwrap();
        assert_eq!(s.spec.edge_count(), 3);
        assert!((s.spec.desired_distances[0] - 1.0).abs() < 1e-12);
    }
}
