//! Subcommand orchestration: each experiment writes its artifacts into the
//! output directory and reports an exit code.
//!
//! Exit codes are 0 when every verdict passes, 1 for a runtime failure or a
//! failed verdict, and 2 for a configuration or medium validation failure.
//! Any nonzero exit leaves a `failure.json` record next to the artifacts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::config::RunConfig;
use super::csv;
use super::snapshot::save_snapshot;
use crate::dynamics::{evolve, tw_propagation_test};
use crate::effective_mass::{mass_report_for, MassOptions};
use crate::error::{Error, Result};
use crate::ground_state::{
    asymptotics_from, asymptotics_row, grid_for, solve_ground_state, BoxPolicy, GroundState, GroundStateOptions,
};
use crate::linear_response::hessian_gaps;
use crate::medium::{v_crit, validate, Medium};
use crate::model::Model;
use crate::state::PolaronState;
use crate::traveling_wave::{boosted, scf_traveling_wave, tw_energy_sweep, TwOptions, TwRow};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

/// Largest accepted norm drift of a dynamics run.
pub const DYNAMICS_NORM_TOL: f64 = 1e-10;
/// Largest accepted total momentum drift of a dynamics run.
pub const DYNAMICS_MOMENTUM_TOL: f64 = 1e-6;
/// Largest accepted relative energy drift of a dynamics run.
pub const DYNAMICS_ENERGY_TOL: f64 = 1e-3;
/// Relative tolerance on the recovered drift speed of a traveling wave.
pub const PROPAGATION_SPEED_TOL: f64 = 0.01;
/// Largest accepted profile error of a propagated traveling wave.
pub const PROPAGATION_PROFILE_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    ValidateMedium,
    GroundState,
    AsymptoticsSweep,
    TravelingWave,
    MassReport,
    Dynamics,
    GapScan,
    TwPropagation,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::ValidateMedium,
        Command::GroundState,
        Command::AsymptoticsSweep,
        Command::TravelingWave,
        Command::MassReport,
        Command::Dynamics,
        Command::GapScan,
        Command::TwPropagation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::ValidateMedium => "validate-medium",
            Command::GroundState => "ground-state",
            Command::AsymptoticsSweep => "asymptotics-sweep",
            Command::TravelingWave => "traveling-wave",
            Command::MassReport => "mass-report",
            Command::Dynamics => "dynamics",
            Command::GapScan => "gap-scan",
            Command::TwPropagation => "tw-propagation",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown subcommand `{s}`")))
    }
}

/// What a run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub command: Command,
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    /// Human-readable summary lines.
    pub messages: Vec<String>,
    /// Failed verdicts or the error that stopped the run.
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.exit_code == EXIT_PASS
    }
}

/// Exit code for an error: validation problems are distinguished from solver failures.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidMedium(_)
        | Error::InvalidGrid(_)
        | Error::InvalidArgument(_)
        | Error::BoxPolicy(_)
        | Error::Supersonic { .. } => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn error_kind(err: &Error) -> &'static str {
    if exit_code_for(err) == EXIT_VALIDATION {
        "validation"
    } else {
        "runtime"
    }
}

/// Collects artifacts, summary lines and verdicts while a command runs.
struct Session<'a> {
    cfg: &'a RunConfig,
    artifacts: Vec<PathBuf>,
    messages: Vec<String>,
    failures: Vec<String>,
    /// Set when a failure is a validation failure rather than a verdict.
    invalid: bool,
}

impl Session<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.outdir.join(name)
    }

    fn table(&mut self, name: &str, t: &csv::Table) -> Result<()> {
        let p = self.path(name);
        t.write(&p)?;
        self.artifacts.push(p);
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, body)?;
        self.artifacts.push(p);
        Ok(())
    }

    fn snapshot(&mut self, name: &str, model: &Model, state: &PolaronState) -> Result<()> {
        let p = self.path(name);
        save_snapshot(&p, model, state)?;
        self.artifacts.push(p);
        Ok(())
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn say(&mut self, line: String) {
        self.messages.push(line);
    }
}

fn gs_options(cfg: &RunConfig) -> GroundStateOptions {
    GroundStateOptions {
        tol: cfg.tol,
        max_iters: cfg.max_iters,
        policy: Some(BoxPolicy { c_box: cfg.c_box, ..BoxPolicy::default() }),
        ..GroundStateOptions::default()
    }
}

fn tw_options(cfg: &RunConfig) -> TwOptions {
    TwOptions { tol: cfg.tol, max_iters: cfg.max_iters, ..TwOptions::default() }
}

fn ground_state_at(cfg: &RunConfig, med: &Medium, alpha: f64) -> Result<GroundState> {
    let opts = gs_options(cfg);
    let grid = grid_for(med, alpha, &opts.policy.unwrap_or_default(), cfg.grid_n)?;
    solve_ground_state(&Model::new(grid, med.clone(), alpha)?, &opts)
}

fn speeds(cfg: &RunConfig, med: &Medium) -> Vec<f64> {
    let vc = v_crit(med);
    cfg.v_list.iter().map(|f| f * vc).collect()
}

/// Runs `cmd`, writing its artifacts and, on a nonzero exit, `failure.json`.
pub fn run(cmd: Command, cfg: &RunConfig) -> RunOutcome {
    let mut s = Session { cfg, artifacts: Vec::new(), messages: Vec::new(), failures: Vec::new(), invalid: false };
    let result = cfg
        .validate()
        .map_err(Error::from)
        .and_then(|()| std::fs::create_dir_all(&cfg.outdir).map_err(Error::from))
        .and_then(|()| {
            let p = cfg.write_resolved()?;
            s.artifacts.push(p);
            dispatch(cmd, &mut s)
        });
    let (exit_code, kind) = match &result {
        Ok(()) if s.failures.is_empty() => (EXIT_PASS, None),
        Ok(()) if s.invalid => (EXIT_VALIDATION, Some("validation")),
        Ok(()) => (EXIT_RUNTIME, Some("verdict")),
        Err(e) => {
            s.failures.push(e.to_string());
            (exit_code_for(e), Some(error_kind(e)))
        }
    };
    if let Some(kind) = kind {
        let record = json!({
            "command": cmd.name(),
            "exit_code": exit_code,
            "kind": kind,
            "failures": s.failures,
            "artifacts": s.artifacts.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
        let p = cfg.outdir.join("failure.json");
        if std::fs::create_dir_all(&cfg.outdir).is_ok()
            && std::fs::write(&p, serde_json::to_string_pretty(&record).unwrap_or_default() + "\n").is_ok()
        {
            s.artifacts.push(p);
        }
    }
    RunOutcome { command: cmd, exit_code, artifacts: s.artifacts, messages: s.messages, failures: s.failures }
}

fn dispatch(cmd: Command, s: &mut Session) -> Result<()> {
    let cfg = s.cfg;
    if cmd == Command::ValidateMedium {
        return validate_medium(s);
    }
    let med = cfg.medium()?;
    match cmd {
        Command::ValidateMedium => unreachable!(),
        Command::GroundState => ground_state(s, &med),
        Command::AsymptoticsSweep => asymptotics_sweep(s, &med),
        Command::TravelingWave => traveling_wave(s, &med),
        Command::MassReport => mass(s, &med),
        Command::Dynamics => dynamics(s, &med),
        Command::GapScan => gap_scan(s, &med),
        Command::TwPropagation => tw_propagation(s, &med),
    }
}

fn validate_medium(s: &mut Session) -> Result<()> {
    let cfg = s.cfg;
    let params: Vec<(&str, f64)> = cfg.medium_a.map(|a| ("a", a)).into_iter().collect();
    let med = Medium::from_name(&cfg.medium_name, &params, cfg.m_e)?;
    let report = validate(&med);
    s.text("medium_report.txt", &report.to_string())?;
    s.say(format!("medium `{}`: v_crit = {:e}", med.name(), report.v_crit));
    for c in report.failures() {
        s.failures.push(format!("{} ({}): {}; v_crit = {}", c.name, c.assumption, c.detail, report.v_crit));
    }
    s.invalid = !report.passed();
    Ok(())
}

fn ground_state(s: &mut Session, med: &Medium) -> Result<()> {
    let alpha = s.cfg.single_alpha()?;
    let gs = ground_state_at(s.cfg, med, alpha)?;
    s.snapshot("ground_state.plk", &gs.model, &gs.state)?;
    s.table("ground_state.csv", &csv::asymptotics_table(&[asymptotics_row(&gs)?]))?;
    s.say(format!(
        "alpha = {alpha}: e_alpha = {}, mu = {}, residual = {:e} after {} iterations (n = {}, L = {})",
        gs.e_alpha,
        gs.mu,
        gs.residual,
        gs.iterations,
        gs.grid().n(),
        gs.grid().length()
    ));
    Ok(())
}

fn asymptotics_sweep(s: &mut Session, med: &Medium) -> Result<()> {
    let states = s
        .cfg
        .alpha_list
        .iter()
        .map(|&a| ground_state_at(s.cfg, med, a))
        .collect::<Result<Vec<_>>>()?;
    let report = asymptotics_from(&states)?;
    s.table("asymptotics.csv", &csv::asymptotics_table(&report.rows))?;
    let slopes = csv::slopes_table(&report.slopes);
    s.table("slopes.csv", &slopes)?;
    for (name, slope, target, tol) in csv::slope_targets(&report.slopes) {
        s.say(format!("slope {name} = {slope:.4} (target {target})"));
        if !tol.is_nan() {
            s.check((slope - target).abs() <= tol, || format!("slope of {name} is {slope:.4}, expected {target} ± {tol}"));
        }
    }
    Ok(())
}

fn traveling_wave(s: &mut Session, med: &Medium) -> Result<()> {
    let gs = ground_state_at(s.cfg, med, s.cfg.single_alpha()?)?;
    let waves = tw_energy_sweep(&gs, &speeds(s.cfg, med), &tw_options(s.cfg))?;
    let rows: Vec<TwRow> = waves.iter().map(TwRow::from).collect();
    s.table("tw_sweep.csv", &csv::tw_sweep_table(&rows))?;
    if let Some(fastest) = waves.iter().max_by(|a, b| a.speed().total_cmp(&b.speed())) {
        s.snapshot("traveling_wave.plk", &fastest.model, &fastest.state)?;
    }
    for w in &waves {
        let v = w.speed();
        s.check(w.phase_condition, || format!("phase condition fails at |v| = {v}"));
        s.check(w.e_tw >= gs.e_alpha - 1e-9 * gs.e_alpha.abs(), || {
            format!("wave energy {} below the ground energy {} at |v| = {v}", w.e_tw, gs.e_alpha)
        });
    }
    s.say(format!("{} traveling waves at alpha = {}", waves.len(), gs.alpha));
    Ok(())
}

fn mass(s: &mut Session, med: &Medium) -> Result<()> {
    let gs = ground_state_at(s.cfg, med, s.cfg.single_alpha()?)?;
    let opts = MassOptions { momenta: s.cfg.p_list.clone(), tol: s.cfg.mass_tol, tw: tw_options(s.cfg), ..MassOptions::default() };
    let report = mass_report_for(&gs, &opts);
    s.table("mass_report.csv", &csv::mass_table(std::slice::from_ref(&report)))?;
    let text = csv::mass_text(&report);
    s.text("mass_report.txt", &text)?;
    s.messages.extend(text.lines().map(str::to_string));
    if !report.pass {
        s.failures.extend(report.failures.iter().cloned());
        if report.failures.is_empty() {
            s.failures.push(format!("mass estimates deviate by {:.4} > {}", report.max_deviation(), report.tol));
        }
    }
    Ok(())
}

/// A ground state boosted by a seeded random velocity with a weakened field.
pub fn kicked_state(gs: &GroundState, seed: u64) -> PolaronState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vc = v_crit(gs.model.medium());
    let kick: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.05..0.05) * vc);
    let scale = rng.gen_range(0.85..0.95);
    PolaronState {
        psi: boosted(gs.psi(), gs.model.m_e(), kick),
        phi: gs.phi().scaled(num_complex::Complex64::new(scale, 0.0)),
    }
}

fn dynamics(s: &mut Session, med: &Medium) -> Result<()> {
    let cfg = s.cfg;
    let gs = ground_state_at(cfg, med, cfg.single_alpha()?)?;
    let start = kicked_state(&gs, cfg.seed);
    let (end, log) = evolve(&gs.model, &start, cfg.t_final, cfg.dt, cfg.audit_every)?;
    s.table("dynamics.csv", &csv::dynamics_table(&log))?;
    s.snapshot("dynamics_final.plk", &gs.model, &end)?;
    let (e, n, p) = (log.max_energy_drift(), log.max_norm_drift(), log.max_momentum_drift());
    s.say(format!("max drifts: energy {e:e}, norm {n:e}, momentum {p:e}"));
    s.check(e <= DYNAMICS_ENERGY_TOL, || format!("energy drift {e:e} exceeds {DYNAMICS_ENERGY_TOL:e}"));
    s.check(n <= DYNAMICS_NORM_TOL, || format!("norm drift {n:e} exceeds {DYNAMICS_NORM_TOL:e}"));
    s.check(p <= DYNAMICS_MOMENTUM_TOL, || format!("momentum drift {p:e} exceeds {DYNAMICS_MOMENTUM_TOL:e}"));
    Ok(())
}

fn gap_scan(s: &mut Session, med: &Medium) -> Result<()> {
    let alphas = s.cfg.alpha.map_or_else(|| s.cfg.alpha_list.clone(), |a| vec![a]);
    let mut rows = Vec::with_capacity(alphas.len());
    for a in alphas {
        let gs = ground_state_at(s.cfg, med, a)?;
        let g = hessian_gaps(&gs)?;
        s.check(g.gap_im > 0.0, || format!("imaginary-sector gap {} is not positive at alpha = {a}", g.gap_im));
        s.check(g.gap_re > 0.0, || format!("real-sector gap {} is not positive at alpha = {a}", g.gap_re));
        s.say(format!("alpha = {a}: gap_im = {}, gap_re = {}", g.gap_im, g.gap_re));
        rows.push((a, g));
    }
    s.table("gaps.csv", &csv::gaps_table(&rows))
}

fn tw_propagation(s: &mut Session, med: &Medium) -> Result<()> {
    let cfg = s.cfg;
    let gs = ground_state_at(cfg, med, cfg.single_alpha()?)?;
    let v = speeds(cfg, med).into_iter().fold(0.0, f64::max);
    let tw = scf_traveling_wave(&gs, [0.0, 0.0, v], &tw_options(cfg))?;
    let steps = (cfg.t_final / cfg.dt).ceil().max(1.0) as usize;
    let audits = (steps / cfg.audit_every).max(1);
    let r = tw_propagation_test(&tw, cfg.t_final, cfg.dt, audits)?;
    s.table("tw_propagation.csv", &csv::dynamics_table(&r.log))?;
    s.text("tw_propagation.txt", &csv::propagation_text(&r))?;
    let speed_ok = if v > 0.0 {
        (r.drift_speed - v).abs() <= PROPAGATION_SPEED_TOL * v
    } else {
        r.drift_speed <= PROPAGATION_PROFILE_TOL
    };
    s.check(speed_ok, || format!("drift speed {} differs from |v| = {v}", r.drift_speed));
    s.check(r.profile_error <= PROPAGATION_PROFILE_TOL, || {
        format!("profile error {:e} exceeds {PROPAGATION_PROFILE_TOL:e}", r.profile_error)
    });
    s.say(format!("|v| = {v}: drift speed {}, profile error {:e}", r.drift_speed, r.profile_error));
    Ok(())
}

/// Reads `path` and runs `cmd`, mapping configuration errors to exit code 2.
pub fn run_file(cmd: Command, path: &Path) -> std::result::Result<RunOutcome, (i32, String)> {
    match RunConfig::from_file(path) {
        Ok(cfg) => Ok(run(cmd, &cfg)),
        Err(e) => Err((EXIT_VALIDATION, e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("ground_state".parse::<Command>().is_err());
    }

}
