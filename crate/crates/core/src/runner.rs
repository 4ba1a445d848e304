//! Executes a scenario and writes its artifacts.
//!
//! Every mode writes `summary.json`. Trajectory modes add `trajectory.csv`
//! (columns `t,y_x,y_y,y_z,yhat_x,yhat_y,yhat_z,theta,drift`), Monte Carlo adds
//! `runs.csv`, and verify mode adds `residuals.json`. CSV numbers carry 17
//! significant digits.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::observer::NoInnovation;
use crate::scenario::{Instance, Mode, Scenario, ScenarioError};
use crate::sim::{
    check_synchrony, closed_form_deviation, co_simulate, monte_carlo, simulate_lifted,
    simulate_projected, so2_oracle_run, CircleReport, MonteCarloReport, SimError, TrajectoryRecord,
};
use crate::verify::{verify_suite, PropertyResult};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest allowed `‖act(X̂, y0) − ŷ‖` between co-simulated observers.
pub const CONSISTENCY_TOL: f64 = 1e-6;
/// Largest allowed `|θ(t) − θ(0)|` with the innovation switched off.
pub const SYNCHRONY_TOL: f64 = 1e-8;

pub const TRAJECTORY_HEADER: &str = "t,y_x,y_y,y_z,yhat_x,yhat_y,yhat_z,theta,drift";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    /// Process exit code: 2 for input errors, 3 for runtime aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Scenario(_) => 2,
            RunError::Sim(_) | RunError::Io { .. } => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: Value,
    /// Checked properties: the verify suite, or the co-simulation and
    /// synchrony checks. Empty for plain runs.
    pub properties: Vec<PropertyResult>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }

    /// 0 on success, 1 when a checked property failed.
    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            1
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<I>(path: &Path, header: &str, rows: I) -> Result<(), RunError>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let body = || -> io::Result<()> {
        writeln!(w, "{header}")?;
        for row in rows {
            let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

fn trajectory_rows(record: &TrajectoryRecord) -> impl Iterator<Item = Vec<f64>> + '_ {
    record.samples.iter().map(|s| {
        let (y, yh) = (s.y.dir(), s.yhat.dir());
        vec![s.t, y.x, y.y, y.z, yh.x, yh.y, yh.z, s.theta, s.drift]
    })
}

fn circle_rows(report: &CircleReport) -> impl Iterator<Item = Vec<f64>> + '_ {
    report.samples.iter().map(|s| {
        let (y, yh) = (s.y.to_xyz(), s.yhat.to_xyz());
        vec![s.t, y[0], y[1], y[2], yh[0], yh[1], yh[2], s.theta, 0.0]
    })
}

pub fn write_trajectory_csv(path: &Path, record: &TrajectoryRecord) -> Result<(), RunError> {
    write_rows(path, TRAJECTORY_HEADER, trajectory_rows(record))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Runs `scenario` and writes its artifacts into `out_dir` (created if missing).
/// `seed` overrides the seed of Monte Carlo and verify runs.
pub fn run(scenario: &Scenario, out_dir: &Path, seed: Option<u64>) -> Result<RunOutcome, RunError> {
    scenario.validate()?;
    let mut scenario = scenario.clone();
    if let Some(seed) = seed {
        if let Some(mc) = scenario.monte_carlo.as_mut() {
            mc.seed = seed;
        }
        if scenario.mode == Mode::Verify {
            scenario.verify.get_or_insert_with(Default::default).seed = seed;
        }
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let trajectory_path = out_dir.join("trajectory.csv");
    let mut files = Vec::new();
    let mut properties = Vec::new();
    let mut extra = serde_json::Map::new();

    let summary_value: Value = match (scenario.instance, scenario.mode) {
        (Instance::So2S1, _) => {
            let (x0, xhat0) = scenario.circle_states()?;
            let report = so2_oracle_run(&scenario.circle_simulation()?, x0, xhat0)?;
            write_rows(&trajectory_path, TRAJECTORY_HEADER, circle_rows(&report))?;
            files.push(trajectory_path);
            let last = report.samples.last().expect("initial sample present");
            extra.insert("oracle_deviation".into(), json!(report.max_deviation));
            extra.insert("final_state_error".into(), json!(report.final_state_error));
            json!({
                "initial_angle": report.samples[0].theta,
                "final_angle": last.theta,
                "t_converged": report.samples.iter().find(|s| s.theta < scenario.threshold).map(|s| s.t),
                "fitted_rate": null,
                "max_drift": 0.0,
            })
        }
        (Instance::So3S2, Mode::Projected | Mode::Lifted) => {
            let sim = scenario.simulation()?;
            let cost = scenario.cost();
            let x0 = scenario.plant_state()?;
            let record = if scenario.mode == Mode::Projected {
                simulate_projected(&sim, &cost, x0, scenario.observer_output()?)?
            } else {
                simulate_lifted(&sim, &cost, x0, scenario.observer_state()?)?
            };
            write_trajectory_csv(&trajectory_path, &record)?;
            files.push(trajectory_path);
            if record.samples[0].theta < std::f64::consts::PI {
                extra.insert(
                    "closed_form_deviation".into(),
                    json!(closed_form_deviation(&record, scenario.k)?),
                );
            }
            serde_json::to_value(record.summarize(scenario.threshold)).expect("serializable")
        }
        (Instance::So3S2, Mode::CoSim) => {
            let sim = scenario.simulation()?;
            let report = co_simulate(
                &sim,
                &scenario.cost(),
                scenario.plant_state()?,
                scenario.observer_state()?,
            )?;
            write_trajectory_csv(&trajectory_path, &report.lifted)?;
            let projected_path = out_dir.join("trajectory_projected.csv");
            write_trajectory_csv(&projected_path, &report.projected)?;
            files.push(trajectory_path);
            files.push(projected_path);
            let result = PropertyResult::upper(
                "projection_consistency",
                report.max_consistency,
                CONSISTENCY_TOL,
            );
            extra.insert("projection_consistency".into(), json!(result));
            properties.push(result);
            serde_json::to_value(report.lifted.summarize(scenario.threshold)).expect("serializable")
        }
        (Instance::So3S2, Mode::Synchrony) => {
            let sim = scenario.simulation()?;
            let record = simulate_projected(
                &sim,
                &NoInnovation,
                scenario.plant_state()?,
                scenario.observer_output()?,
            )?;
            write_trajectory_csv(&trajectory_path, &record)?;
            files.push(trajectory_path);
            let result =
                PropertyResult::upper("synchrony", check_synchrony(&record), SYNCHRONY_TOL);
            extra.insert("synchrony".into(), json!(result));
            properties.push(result);
            serde_json::to_value(record.summarize(scenario.threshold)).expect("serializable")
        }
        (Instance::So3S2, Mode::MonteCarlo) => {
            let sim = scenario.simulation()?;
            let spec = scenario.monte_carlo.expect("validated");
            let report = monte_carlo(&sim, &scenario.cost(), scenario.plant_state()?, &spec)?;
            let runs_path = out_dir.join("runs.csv");
            write_runs_csv(&runs_path, &report)?;
            files.push(runs_path);
            extra.insert(
                "converged_fraction".into(),
                json!(report.converged_fraction),
            );
            extra.insert("runs".into(), json!(report.runs.len()));
            aggregate(&report)
        }
        (Instance::So3S2, Mode::Verify) => {
            let spec = scenario.verify.unwrap_or_default();
            properties = verify_suite(spec.samples, spec.seed);
            let residuals_path = out_dir.join("residuals.json");
            write_json(&residuals_path, &properties)?;
            files.push(residuals_path);
            extra.insert(
                "all_passed".into(),
                json!(properties.iter().all(|p| p.pass)),
            );
            Value::Null
        }
    };

    let mut summary = serde_json::Map::new();
    summary.insert("code_version".into(), json!(CODE_VERSION));
    summary.insert("mode".into(), json!(scenario.mode.to_string()));
    summary.insert("summary".into(), summary_value);
    summary.extend(extra);
    summary.insert(
        "scenario".into(),
        serde_json::to_value(&scenario).expect("serializable"),
    );
    let summary = Value::Object(summary);
    let summary_path = out_dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    files.push(summary_path);

    Ok(RunOutcome {
        summary,
        properties,
        files,
    })
}

fn write_runs_csv(path: &Path, report: &MonteCarloReport) -> Result<(), RunError> {
    let rows = report.runs.iter().enumerate().map(|(i, r)| {
        vec![
            i as f64,
            r.initial_angle,
            r.final_angle,
            r.t_converged.unwrap_or(f64::NAN),
            r.fitted_rate.unwrap_or(f64::NAN),
            r.max_drift,
        ]
    });
    write_rows(
        path,
        "run,initial_angle,final_angle,t_converged,fitted_rate,max_drift",
        rows,
    )
}

fn aggregate(report: &MonteCarloReport) -> Value {
    let worst_final = report
        .runs
        .iter()
        .map(|r| r.final_angle)
        .fold(0.0, f64::max);
    let worst_initial = report
        .runs
        .iter()
        .map(|r| r.initial_angle)
        .fold(0.0, f64::max);
    let slowest = report
        .runs
        .iter()
        .filter_map(|r| r.t_converged)
        .fold(0.0, f64::max);
    let max_drift = report.runs.iter().map(|r| r.max_drift).fold(0.0, f64::max);
    json!({
        "worst_initial_angle": worst_initial,
        "worst_final_angle": worst_final,
        "slowest_t_converged": slowest,
        "max_drift": max_drift,
    })
}

/// Runs the verification sweep alone.
pub fn run_verify(samples: usize, seed: u64, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let mut scenario = Scenario::minimal(Instance::So3S2);
    scenario.mode = Mode::Verify;
    scenario.verify = Some(crate::scenario::VerifySpec { samples, seed });
    run(&scenario, out_dir, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 12345.678] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn exit_codes() {
        let e = RunError::Scenario(ScenarioError::Field {
            path: "k".into(),
            message: "bad".into(),
        });
        assert_eq!(e.exit_code(), 2);
        let e = RunError::Sim(SimError::Horizon(0.0));
        assert_eq!(e.exit_code(), 3);

        let outcome = |pass: bool| RunOutcome {
            summary: Value::Null,
            properties: vec![PropertyResult::upper(
                "p",
                if pass { 0.0 } else { 1.0 },
                0.5,
            )],
            files: vec![],
        };
        assert_eq!(outcome(true).exit_code(), 0);
        assert_eq!(outcome(false).exit_code(), 1);
    }
}
