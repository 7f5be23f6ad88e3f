//! Plot-ready CSV tables with fixed headers.
//!
//! Floats use Rust's shortest round-trip formatting, so identical runs give
//! identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::{PropagationReport, TrajectoryLog};
use crate::effective_mass::MassReport;
use crate::ground_state::{AsymptoticsRow, AsymptoticsSlopes};
use crate::linear_response::HessianGaps;
use crate::traveling_wave::TwRow;

pub const ASYMPTOTICS_HEADER: &str = "alpha,e_alpha,e_shift,dist_osc,x2norm,gradnorm,mu";
pub const TW_SWEEP_HEADER: &str = "v,E_tw,e_v,P_axis,res_psi,res_phi,iters";
pub const MASS_HEADER: &str = "alpha,m_formula,m_response,m_tw_fit,m_p_fit,max_dev,verdict";
pub const DYNAMICS_HEADER: &str = "t,energy_drift,norm_drift,momentum_drift";
pub const GAPS_HEADER: &str = "alpha,gap_im,gap_re,ritz_res_im,ritz_res_re";
pub const SLOPES_HEADER: &str = "quantity,slope,target,tolerance,pass";

/// A header plus rows of already formatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    header: String,
    rows: Vec<String>,
}

fn cell(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), cell)
}

impl Table {
    pub fn new(header: &str) -> Self {
        Self { header: header.to_string(), rows: Vec::new() }
    }

    pub fn push(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.header.split(',').count(), "row width must match the header");
        self.rows.push(cells.join(","));
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        let _ = writeln!(s, "{}", self.header);
        for r in &self.rows {
            let _ = writeln!(s, "{r}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }
}

pub fn asymptotics_table(rows: &[AsymptoticsRow]) -> Table {
    let mut t = Table::new(ASYMPTOTICS_HEADER);
    for r in rows {
        t.push(&[r.alpha, r.e_alpha, r.e_shift, r.dist_osc, r.x2norm, r.gradnorm, r.mu].map(cell));
    }
    t
}

/// Slopes with their targets as `(name, slope, target, tolerance)`; a NaN
/// tolerance marks a column that is reported without a verdict.
pub fn slope_targets(slopes: &AsymptoticsSlopes) -> [(&'static str, f64, f64, f64); 6] {
    [
        ("gradnorm", slopes.gradnorm, 0.25, 0.05),
        ("x2norm", slopes.x2norm, -0.5, 0.1),
        ("mu", slopes.mu, 1.0, f64::NAN),
        ("e_alpha", slopes.e_alpha, 1.0, f64::NAN),
        ("e_shift", slopes.e_shift, 0.5, f64::NAN),
        ("dist_osc", slopes.dist_osc, f64::NAN, f64::NAN),
    ]
}

pub fn slopes_table(slopes: &AsymptoticsSlopes) -> Table {
    let mut t = Table::new(SLOPES_HEADER);
    for (name, slope, target, tol) in slope_targets(slopes) {
        let pass = if tol.is_nan() { "n/a".to_string() } else { ((slope - target).abs() <= tol).to_string() };
        t.push(&[name.to_string(), cell(slope), cell(target), cell(tol), pass]);
    }
    t
}

pub fn tw_sweep_table(rows: &[TwRow]) -> Table {
    let mut t = Table::new(TW_SWEEP_HEADER);
    for r in rows {
        let mut cells = [r.v, r.e_tw, r.e_v, r.p_axis, r.res_psi, r.res_phi].map(cell).to_vec();
        cells.push(r.iters.to_string());
        t.push(&cells);
    }
    t
}

pub fn mass_table(reports: &[MassReport]) -> Table {
    let mut t = Table::new(MASS_HEADER);
    for r in reports {
        t.push(&[
            cell(r.alpha),
            cell(r.m_formula),
            opt(r.m_response),
            opt(r.m_tw_fit),
            opt(r.m_p_fit),
            cell(r.max_deviation()),
            if r.pass { "pass" } else { "fail" }.to_string(),
        ]);
    }
    t
}

/// Human-readable block accompanying the mass CSV.
pub fn mass_text(r: &MassReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "effective mass at alpha = {} ({}, n = {}, L = {})", r.alpha, r.medium, r.n, r.length);
    let _ = writeln!(s, "  m_e        {}", r.m_e);
    let _ = writeln!(s, "  m_formula  {}", r.m_formula);
    let _ = writeln!(s, "  m_response {}", opt(r.m_response));
    let _ = writeln!(s, "  m_tw_fit   {} (residual {})", opt(r.m_tw_fit), opt(r.tw_fit_residual));
    let _ = writeln!(s, "  m_p_fit    {} (residual {})", opt(r.m_p_fit), opt(r.p_fit_residual));
    let _ = writeln!(s, "  speeds     {:?}", r.speeds);
    let _ = writeln!(s, "  momenta    {:?}", r.momenta);
    let _ = writeln!(s, "  max deviation {} (tolerance {})", cell(r.max_deviation()), r.tol);
    for f in &r.failures {
        let _ = writeln!(s, "  failure: {f}");
    }
    let _ = writeln!(s, "  verdict {}", if r.pass { "pass" } else { "fail" });
    s
}

pub fn dynamics_table(log: &TrajectoryLog) -> Table {
    let mut t = Table::new(DYNAMICS_HEADER);
    for i in 0..log.times.len() {
        t.push(&[log.times[i], log.energy_drift[i], log.norm_drift[i], log.momentum_drift[i]].map(cell));
    }
    t
}

/// Summary of a traveling-wave propagation run.
pub fn propagation_text(r: &PropagationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "T            {}", r.t_final);
    let _ = writeln!(s, "speed        {}", r.speed);
    let _ = writeln!(s, "shift        {} {} {}", r.shift[0], r.shift[1], r.shift[2]);
    let _ = writeln!(s, "drift_speed  {}", r.drift_speed);
    let _ = writeln!(s, "profile_err  {}", r.profile_error);
    let _ = writeln!(s, "field_err    {}", r.field_error);
    let _ = writeln!(s, "phase        {}", r.phase);
    let _ = writeln!(s, "phase_slope  {}", r.phase_slope);
    let _ = writeln!(s, "e_v          {}", r.e_v);
    s
}

pub fn gaps_table(rows: &[(f64, HessianGaps)]) -> Table {
    let mut t = Table::new(GAPS_HEADER);
    for (alpha, g) in rows {
        t.push(&[*alpha, g.gap_im, g.gap_re, g.ritz_res_im, g.ritz_res_re].map(cell));
    }
    t
}
