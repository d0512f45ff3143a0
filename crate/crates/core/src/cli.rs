//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 a feasibility check
//! failed, 3 the simulated body hit an obstacle.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::behavior::{BehaviorError, BehaviorState, Controller};
use crate::config::{enumerate_attachments, total_mass, ConfigError, LegId, LegTopology, RobotConfig, LEG_COUNT};
use crate::feasibility::{
    autonomy_minutes, max_body_weight, peak_power, static_joint_torques, FeasibilityError, JointTorques, PeakPower,
    TorqueScenario, PUBLISHED_BODY_WEIGHT_LIMIT_G,
};
use crate::kinematics::{physical_pose, LegPose};
use crate::runner::{run_scenario, RunOverrides, RunSummary, Scenario, ScenarioError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_COLLISION: u8 = 3;

/// Share of the robot weight carried by one foot when standing.
const STANCE_SUPPORT_FRACTION: f64 = 1.0 / 4.0;

#[derive(Debug, Parser)]
#[command(name = "quadstack", version, about = "Arachnoid quadruped control and simulation stack")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Static torque, power and autonomy report for a robot config.
    Feasibility {
        #[arg(long)]
        config: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario in the simulator.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario duration, seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSONL trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// List the servo-horn attachment variants of one leg.
    Enumerate {
        #[arg(long, value_enum)]
        topology: TopologyArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopologyArg {
    #[value(name = "2j")]
    TwoJoint,
    #[value(name = "3j")]
    ThreeJoint,
}

impl From<TopologyArg> for LegTopology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::TwoJoint => LegTopology::TwoJoint,
            TopologyArg::ThreeJoint => LegTopology::ThreeJoint,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        EXIT_USAGE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegTorqueReport {
    pub leg: &'static str,
    pub extended: JointTorques,
    pub stance: JointTorques,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub robot: String,
    pub topology: &'static str,
    pub total_mass_g: f64,
    /// Body weight limit with every pitch servo at nominal torque, grams.
    pub max_body_weight_g: f64,
    pub published_limit_g: f64,
    pub weight_ok: bool,
    pub joint_torques: Vec<LegTorqueReport>,
    pub stance_torque_ok: bool,
    pub peak_power: PeakPower,
    /// Runtime at the full converter capacity, minutes.
    pub autonomy_at_capacity_min: f64,
    /// Runtime at the computed peak draw, minutes.
    pub autonomy_at_peak_min: f64,
    pub feasible: bool,
}

pub fn feasibility_report(config: &RobotConfig) -> Result<FeasibilityReport, CliError> {
    let limit = max_body_weight(&TorqueScenario::from_config(config))?;
    let mass = total_mass(config);
    let stance = Controller::settled_pose(config, BehaviorState::Rest)?;
    let extended = LegPose::zero(config.topology);
    let joint_torques: Vec<_> = LegId::ALL
        .iter()
        .map(|&leg| {
            let att = config.attachment(leg);
            LegTorqueReport {
                leg: leg.short_name(),
                extended: static_joint_torques(config, &extended, STANCE_SUPPORT_FRACTION),
                stance: static_joint_torques(config, &physical_pose(att, &stance[leg.index()]), STANCE_SUPPORT_FRACTION),
            }
        })
        .collect();
    debug_assert_eq!(joint_torques.len(), LEG_COUNT);
    let stance_torque_ok = joint_torques.iter().all(|t| t.stance.feasible);
    let power = peak_power(&config.electronics);
    let weight_ok = mass <= limit;
    Ok(FeasibilityReport {
        robot: config.name.clone(),
        topology: config.topology.short_name(),
        total_mass_g: mass,
        max_body_weight_g: limit,
        published_limit_g: PUBLISHED_BODY_WEIGHT_LIMIT_G,
        weight_ok,
        joint_torques,
        stance_torque_ok,
        peak_power: power,
        autonomy_at_capacity_min: autonomy_minutes(&config.battery, power.capacity_w)?,
        autonomy_at_peak_min: autonomy_minutes(&config.battery, power.watts)?,
        feasible: weight_ok && stance_torque_ok && power.headroom,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

pub fn render_feasibility(r: &FeasibilityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "robot: {} ({})", r.robot, r.topology);
    let _ = writeln!(s, "total mass: {:.1} g", r.total_mass_g);
    let _ = writeln!(
        s,
        "max body weight (computed): {:.1} g  [{}]",
        r.max_body_weight_g,
        verdict(r.weight_ok)
    );
    let _ = writeln!(
        s,
        "max body weight (published reference): {:.0} g; depends on moment arms given only graphically, not reproduced here",
        r.published_limit_g
    );
    let _ = writeln!(s, "joint torques, one of four stance feet (N·cm); the extended pose is informational:");
    for t in &r.joint_torques {
        let fmt = |j: &JointTorques| match j.elevator_ncm {
            Some(e) => format!("elevator {e:.2} knee {:.2}", j.knee_ncm),
            None => format!("knee {:.2}", j.knee_ncm),
        };
        let _ = writeln!(
            s,
            "  {}: stance {} [{}]; extended {} [{}]",
            t.leg,
            fmt(&t.stance),
            verdict(t.stance.feasible),
            fmt(&t.extended),
            verdict(t.extended.feasible)
        );
    }
    if let Some(t) = r.joint_torques.first() {
        let _ = writeln!(s, "  nominal servo torque: {:.2} N·cm", t.stance.nominal_ncm);
    }
    let _ = writeln!(
        s,
        "peak power: {:.2} W of {:.1} W  [{}]",
        r.peak_power.watts,
        r.peak_power.capacity_w,
        verdict(r.peak_power.headroom)
    );
    let _ = writeln!(s, "autonomy at {:.1} W: {:.1} min", r.peak_power.capacity_w, r.autonomy_at_capacity_min);
    let _ = writeln!(s, "autonomy at {:.2} W: {:.1} min", r.peak_power.watts, r.autonomy_at_peak_min);
    let _ = writeln!(s, "feasible: {}", if r.feasible { "yes" } else { "no" });
    s
}

pub fn render_summary(m: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {} on {} (seed {})", m.scenario, m.robot, m.seed);
    let _ = writeln!(s, "ticks: {} ({:.2} s)", m.ticks, m.duration_s);
    let _ = writeln!(
        s,
        "distance: {:.2} cm (forward {:.2}, lateral {:.2}; commanded {:.2})",
        m.distance_cm, m.forward_cm, m.lateral_cm, m.commanded_distance_cm
    );
    let _ = writeln!(s, "heading change: {:.2} deg", m.heading_change_deg);
    match m.min_stability_margin_cm {
        Some(v) => {
            let _ = writeln!(s, "min stability margin: {v:.3} cm");
        }
        None => {
            let _ = writeln!(s, "min stability margin: n/a (fewer than three feet down at some tick)");
        }
    }
    let _ = writeln!(s, "tilt: max {:.2} deg, final {:.2} deg", m.max_tilt_deg, m.final_tilt_deg);
    let _ = writeln!(s, "collisions: {}", m.collisions);
    let _ = writeln!(s, "avoidance events: {}", m.avoidance_events);
    let _ = writeln!(s, "camera triggers: {}", m.camera_triggers);
    let _ = writeln!(s, "i2c transactions: {}", m.i2c_transactions);
    for t in &m.transitions {
        let _ = writeln!(s, "transition at {:.2} s: {} -> {}", t.t, t.from, t.to);
    }
    let _ = writeln!(s, "final state: {}", m.final_state);
    s
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

/// Runs one command, writing its report to `out`; returns the exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<u8, CliError> {
    match &cli.command {
        Command::Feasibility { config, json } => {
            let config = RobotConfig::load(config)?;
            for w in config.warnings() {
                log::warn!("{w}");
            }
            let report = feasibility_report(&config)?;
            if *json {
                writeln!(out, "{}", to_json(&report))?;
            } else {
                write!(out, "{}", render_feasibility(&report))?;
            }
            Ok(if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
        }
        Command::Simulate {
            config,
            scenario,
            duration,
            seed,
            trace,
            json,
        } => {
            let config = RobotConfig::load(config)?;
            let scenario = Scenario::load(scenario)?;
            log::info!("running {} on {}", scenario.name, config.name);
            let result = run_scenario(
                &config,
                &scenario,
                RunOverrides {
                    duration_s: *duration,
                    seed: *seed,
                },
            )?;
            if let Some(path) = trace {
                std::fs::write(path, result.trace_text()).map_err(|source| CliError::Write {
                    path: path.display().to_string(),
                    source,
                })?;
                log::info!("trace written to {}", path.display());
            }
            if *json {
                writeln!(out, "{}", to_json(&result.summary))?;
            } else {
                write!(out, "{}", render_summary(&result.summary))?;
            }
            Ok(if result.summary.collisions > 0 { EXIT_COLLISION } else { EXIT_OK })
        }
        Command::Enumerate { topology } => {
            let topology = LegTopology::from(*topology);
            let rows = enumerate_attachments(topology);
            for (i, a) in rows.iter().enumerate() {
                match a.elevator {
                    Some(e) => writeln!(
                        out,
                        "{i:2}  elevator option {e} ({:+.0} deg)  knee option {} ({:+.0} deg)",
                        a.elevator_offset_deg(),
                        a.knee.map_or_else(|| "-".into(), |k| k.to_string()),
                        a.knee_offset_deg()
                    )?,
                    None => writeln!(
                        out,
                        "{i:2}  knee option {} ({:+.0} deg)",
                        a.knee.map_or_else(|| "-".into(), |k| k.to_string()),
                        a.knee_offset_deg()
                    )?,
                }
            }
            writeln!(out, "count: {}", rows.len())?;
            Ok(EXIT_OK)
        }
    }
}
