//! Scenario configuration, run orchestration, and artifact emission.
//!
//! A scenario is a versioned JSON file describing the domain, the friction
//! coefficients, the forcing schedule, the initial condition, and the
//! outputs. Running one executes the minimizing-movements scheme, writes
//! the trace CSV and optional snapshots, evaluates the configured
//! certificates, and reports one line per certificate. Physics fields have
//! no silent defaults: an unknown version or field fails validation.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{solve_harmonic, write_profile_binary, write_profile_csv};
use crate::geometry::{
    read_mask_pgm, write_mask_pgm, Disk, Domain, HysteresisParams, Mask,
};
use crate::minmove::{run, Schedule, Trace};
use crate::radial::{radial_evolve, RadialStep, Regime};
use crate::verify::{
    check_dissipation_inequality, check_dynamic_slope, check_energy_balance, check_gronwall,
    check_stability, default_jump_threshold, jump_report, regularity_report,
    write_certificate_series, Certificate, JumpRecord, RegularityThresholds, SetRelation,
    DYNAMIC_SLOPE_QUANTILE, TOL_BALANCE, TOL_DYNAMIC_SLOPE, TOL_ENERGY, TOL_STABILITY,
};

pub const ALL_CERTIFICATES: &[&str] = &[
    "stability",
    "dissipation_inequality",
    "energy_balance",
    "gronwall",
    "dynamic_slope",
    "jumps",
    "regularity",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    pub domain: DomainConfig,
    pub params: ParamsConfig,
    pub schedule: ScheduleConfig,
    pub init: InitConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub h: f64,
    pub obstacle: ObstacleConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ObstacleConfig {
    /// 2d: one or more rasterized disks.
    Disks(Vec<DiskConfig>),
    /// 1d: the left end cell of the line.
    LeftEnd,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub mu_plus: f64,
    pub mu_minus: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Piecewise-linear forcing knots (t, F).
    pub knots: Vec<(f64, f64)>,
    pub delta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum InitConfig {
    /// Wet all cells within distance r0 of the obstacle centers
    /// (within x < r0 in 1d).
    Radial { r0: f64 },
    /// Load a PGM mask snapshot.
    MaskFile { path: String },
    /// Start from the bare forcing ring and let the settling step grow it.
    Settle,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// PGM mask snapshot stride in steps; 0 disables snapshots.
    pub snapshot_stride: usize,
    /// Certificate names to evaluate; subset of [`ALL_CERTIFICATES`].
    pub certificates: Vec<String>,
    /// Compare the measured equivalent-area radius against the exact
    /// radial branch evolution (radially symmetric scenarios only).
    #[serde(default)]
    pub compare_radial: bool,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = fs::read_to_string(path)?;
        let config: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| config_err("<json>", format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(config_err("version", format!("unknown version {}", self.version)));
        }
        if self.name.is_empty() {
            return Err(config_err("name", "scenario name must be nonempty"));
        }
        let d = &self.domain;
        match d.dim {
            1 => {
                if d.shape.len() != 1 {
                    return Err(config_err("domain.shape", "1d shape is [n]"));
                }
                if !matches!(d.obstacle, ObstacleConfig::LeftEnd) {
                    return Err(config_err("domain.obstacle", "1d domains use \"left_end\""));
                }
            }
            2 => {
                if d.shape.len() != 2 {
                    return Err(config_err("domain.shape", "2d shape is [nx, ny]"));
                }
                let disks = match &d.obstacle {
                    ObstacleConfig::Disks(disks) if !disks.is_empty() => disks,
                    _ => return Err(config_err("domain.obstacle", "2d domains need obstacle disks")),
                };
                let margin = 10.0 * d.h;
                let (w, hgt) = (d.shape[0] as f64 * d.h, d.shape[1] as f64 * d.h);
                for (i, disk) in disks.iter().enumerate() {
                    if !(disk.r > 0.0) {
                        return Err(config_err(
                            &format!("domain.obstacle.disks[{i}].r"),
                            "radius must be > 0",
                        ));
                    }
                    if disk.cx - disk.r < margin
                        || disk.cy - disk.r < margin
                        || disk.cx + disk.r > w - margin
                        || disk.cy + disk.r > hgt - margin
                    {
                        return Err(config_err(
                            &format!("domain.obstacle.disks[{i}]"),
                            "obstacle must sit inside the box with a margin of at least 10 cells",
                        ));
                    }
                }
            }
            other => return Err(config_err("domain.dim", format!("dim must be 1 or 2, got {other}"))),
        }
        if !(d.h > 0.0) {
            return Err(config_err("domain.h", "cell width must be > 0"));
        }
        HysteresisParams::new(self.params.mu_plus, self.params.mu_minus)
            .map_err(|e| config_err("params", e.to_string()))?;
        if self.schedule.knots.len() < 2 {
            return Err(config_err("schedule.knots", "need at least two knots"));
        }
        for (i, &(_, f)) in self.schedule.knots.iter().enumerate() {
            if !(f > 0.0) {
                return Err(config_err(
                    &format!("schedule.knots[{i}]"),
                    "forcing values must stay strictly positive",
                ));
            }
        }
        for (i, w) in self.schedule.knots.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(config_err(
                    &format!("schedule.knots[{}]", i + 1),
                    "knot times must increase strictly",
                ));
            }
        }
        if !(self.schedule.delta > 0.0) {
            return Err(config_err("schedule.delta", "delta must be > 0"));
        }
        if let InitConfig::Radial { r0 } = self.init {
            if !(r0 > 0.0) {
                return Err(config_err("init.r0", "initial radius must be > 0"));
            }
        }
        if self.output.dir.is_empty() {
            return Err(config_err("output.dir", "output directory must be nonempty"));
        }
        for name in &self.output.certificates {
            if !ALL_CERTIFICATES.contains(&name.as_str()) {
                return Err(config_err(
                    "output.certificates",
                    format!("unknown certificate `{name}`; known: {ALL_CERTIFICATES:?}"),
                ));
            }
        }
        Ok(())
    }

    pub fn build_domain(&self) -> Result<Domain> {
        match self.domain.dim {
            1 => Domain::line(self.domain.shape[0], self.domain.h),
            _ => {
                let disks: Vec<Disk> = match &self.domain.obstacle {
                    ObstacleConfig::Disks(d) => {
                        d.iter().map(|d| Disk { cx: d.cx, cy: d.cy, r: d.r }).collect()
                    }
                    ObstacleConfig::LeftEnd => unreachable!("validated"),
                };
                Domain::with_disk_obstacles(
                    self.domain.shape[0],
                    self.domain.shape[1],
                    self.domain.h,
                    &disks,
                )
            }
        }
    }

    pub fn build_schedule(&self) -> Result<Schedule> {
        Schedule::from_knots(&self.schedule.knots, self.schedule.delta)
    }

    pub fn build_init(&self, domain: &Domain, config_dir: &Path) -> Result<Mask> {
        match &self.init {
            InitConfig::Radial { r0 } => {
                let centers = self.obstacle_centers();
                Ok(domain.radial_mask(&centers, *r0))
            }
            InitConfig::MaskFile { path } => {
                let p = config_dir.join(path);
                read_mask_pgm(&p, domain)
            }
            InitConfig::Settle => Ok(domain.inner_ring_mask()),
        }
    }

    pub fn obstacle_centers(&self) -> Vec<(f64, f64)> {
        match &self.domain.obstacle {
            ObstacleConfig::Disks(d) => d.iter().map(|d| (d.cx, d.cy)).collect(),
            ObstacleConfig::LeftEnd => vec![(0.0, 0.0)],
        }
    }
}

/// CLI-level overrides of the scenario output options.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub snapshot_stride: Option<usize>,
    pub certificates: Option<Vec<String>>,
    pub quiet: bool,
}

/// Everything a scenario run produced.
pub struct ScenarioOutcome {
    pub name: String,
    pub trace: Trace,
    pub certificates: Vec<Certificate>,
    pub jumps: Vec<JumpRecord>,
    pub radial: Option<RadialComparison>,
    pub out_dir: PathBuf,
}

impl ScenarioOutcome {
    pub fn all_passed(&self) -> bool {
        self.certificates.iter().all(|c| c.pass)
    }
}

/// Runs a scenario from a config file: simulate, emit artifacts, certify.
pub fn run_scenario(config_path: &Path, options: &RunOptions) -> Result<ScenarioOutcome> {
    let config = ScenarioConfig::load(config_path)?;
    let config_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let domain = config.build_domain()?;
    let schedule = config.build_schedule()?;
    let params = HysteresisParams::new(config.params.mu_plus, config.params.mu_minus)?;
    let init = config.build_init(&domain, &config_dir)?;

    let out_dir = options
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    fs::create_dir_all(&out_dir)?;

    let trace = run(&schedule, &init, &domain, &params)?;
    trace.write_csv(&out_dir.join("trace.csv"))?;

    let stride = options.snapshot_stride.unwrap_or(config.output.snapshot_stride);
    if stride > 0 {
        let snap_dir = out_dir.join("masks");
        fs::create_dir_all(&snap_dir)?;
        for (k, s) in trace.steps.iter().enumerate() {
            if k % stride == 0 || k == trace.steps.len() - 1 {
                write_mask_pgm(
                    &snap_dir.join(format!("step_{k:05}.pgm")),
                    &s.mask,
                    &domain,
                    s.t,
                    s.forcing,
                )?;
            }
        }
    }

    // Final state snapshot in both formats.
    if let Some(last) = trace.steps.last() {
        let profile = solve_harmonic(&domain, &last.mask, last.forcing)?;
        write_profile_binary(&out_dir.join("final_profile.pdrp"), &profile, &domain)?;
        write_profile_csv(&out_dir.join("final_profile.csv"), &profile, &domain)?;
    }

    let radial = if config.output.compare_radial {
        let r_obs = match &config.domain.obstacle {
            ObstacleConfig::Disks(d) => d[0].r,
            ObstacleConfig::LeftEnd => 0.0,
        };
        let r0 = initial_radius(&config, &trace, r_obs);
        let cmp = compare_radial(&trace_rows(&trace), r0, r_obs, &params)?;
        cmp.write_csv(&out_dir.join("radial_compare.csv"))?;
        if !options.quiet {
            println!(
                "radial comparison: max error {:.4}, mean error {:.4}",
                cmp.max_error, cmp.mean_error
            );
        }
        Some(cmp)
    } else {
        None
    };

    let names = options
        .certificates
        .clone()
        .unwrap_or_else(|| config.output.certificates.clone());
    let mut certificates = Vec::new();
    let mut jumps = Vec::new();
    for name in &names {
        let mut cert = match name.as_str() {
            "stability" => check_stability(&trace, TOL_STABILITY),
            "dissipation_inequality" => check_dissipation_inequality(&trace, TOL_ENERGY)?,
            "energy_balance" => check_energy_balance(&trace, TOL_BALANCE)?,
            "gronwall" => check_gronwall(&trace, TOL_ENERGY)?,
            "dynamic_slope" => check_dynamic_slope(&trace, TOL_DYNAMIC_SLOPE, DYNAMIC_SLOPE_QUANTILE).0,
            "jumps" => {
                let report = jump_report(&trace, default_jump_threshold(&trace))?;
                let cert = jump_certificate(&report);
                jumps = report;
                cert
            }
            "regularity" => regularity_report(&trace, &RegularityThresholds::default()).0,
            _ => unreachable!("validated certificate names"),
        };
        let series_name = format!("cert_{name}_series.csv");
        write_certificate_series(&out_dir.join(&series_name), &cert)?;
        cert.series_path = Some(series_name);
        if !options.quiet {
            println!("{}", cert.summary());
        }
        certificates.push(cert);
    }
    let json = serde_json::to_string_pretty(&certificates)
        .map_err(|e| Error::Config { field: "<output>".into(), message: e.to_string() })?;
    fs::write(out_dir.join("certificates.json"), json)?;

    Ok(ScenarioOutcome { name: config.name, trace, certificates, jumps, radial, out_dir })
}

/// Folds a jump report into a certificate: every jump's right state must be
/// a fixed point and every per-component relation a containment.
pub fn jump_certificate(report: &[JumpRecord]) -> Certificate {
    let mut bad = 0usize;
    for j in report {
        if !j.right_is_minimizer {
            bad += 1;
        }
        bad += j
            .per_component
            .iter()
            .filter(|&&r| r == SetRelation::Incomparable)
            .count();
    }
    Certificate {
        name: "jumps".into(),
        pass: bad == 0,
        tolerance: 0.0,
        worst_residual: bad as f64,
        argmax_step: report.first().map_or(0, |j| j.step_index),
        violation_count: bad,
        vacuous: report.is_empty(),
        note: Some(format!("{} jump(s) detected", report.len())),
        series_path: None,
        series: report.iter().map(|j| j.changed).collect(),
    }
}

fn initial_radius(config: &ScenarioConfig, trace: &Trace, r_obs: f64) -> f64 {
    match config.init {
        InitConfig::Radial { r0 } => r0,
        // Feed the measured settled radius into the branch oracle.
        _ => equivalent_radius(trace.steps[0].energy.volume, r_obs, trace.domain.dim),
    }
}

/// One row of a trace as needed by the radial comparison.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: f64,
    pub forcing: f64,
    pub volume: f64,
}

pub fn trace_rows(trace: &Trace) -> Vec<TraceRow> {
    trace
        .steps
        .iter()
        .map(|s| TraceRow { t: s.t, forcing: s.forcing, volume: s.energy.volume })
        .collect()
}

/// Parses rows back out of a trace CSV written by [`Trace::write_csv`].
pub fn read_trace_rows(path: &Path) -> Result<Vec<TraceRow>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 3 {
            return Err(Error::Config {
                field: format!("trace.csv line {}", i + 1),
                message: "expected at least 3 columns".into(),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Config {
                field: format!("trace.csv line {}", i + 1),
                message: format!("bad number `{s}`"),
            })
        };
        out.push(TraceRow { t: parse(cols[0])?, forcing: parse(cols[1])?, volume: parse(cols[2])? });
    }
    Ok(out)
}

/// Equivalent-area radius √(|Ω|/π + r_obs²) in 2d; wet length plus nothing
/// in 1d.
pub fn equivalent_radius(volume: f64, r_obs: f64, dim: usize) -> f64 {
    if dim == 1 {
        volume
    } else {
        (volume / std::f64::consts::PI + r_obs * r_obs).sqrt()
    }
}

/// Per-step comparison of a radially symmetric trace against the exact
/// branch evolution.
pub struct RadialComparison {
    pub rows: Vec<RadialCompareRow>,
    pub max_error: f64,
    pub mean_error: f64,
    pub advancing_max_error: f64,
    pub receding_max_error: f64,
    /// The measured volume is constant across every consecutive pair of
    /// oracle-pinned steps.
    pub pinned_exactly_constant: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct RadialCompareRow {
    pub t: f64,
    pub forcing: f64,
    pub measured_r: f64,
    pub oracle_r: f64,
    pub error: f64,
    pub regime: Regime,
}

impl RadialComparison {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "t,F,measured_R,oracle_R,error,regime")?;
        for r in &self.rows {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                r.t,
                r.forcing,
                r.measured_r,
                r.oracle_r,
                r.error,
                r.regime.label()
            )?;
        }
        Ok(())
    }
}

/// Compares measured equivalent-area radii against [`radial_evolve`] from
/// the same forcing path.
pub fn compare_radial(
    rows: &[TraceRow],
    r0: f64,
    r_obs: f64,
    params: &HysteresisParams,
) -> Result<RadialComparison> {
    if rows.is_empty() {
        return Err(Error::InvalidParams("empty trace".into()));
    }
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let forcing: Vec<f64> = rows.iter().map(|r| r.forcing).collect();
    let delta = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
    let schedule = Schedule::new(times, forcing, delta)?;
    let oracle: Vec<RadialStep> = radial_evolve(&schedule, r0, params)?;
    let dim = if r_obs > 0.0 { 2 } else { 1 };

    let mut out_rows = Vec::with_capacity(rows.len());
    let mut max_error = 0.0f64;
    let mut sum = 0.0;
    let mut adv_max = 0.0f64;
    let mut rec_max = 0.0f64;
    let mut pinned_ok = true;
    for (k, (row, ora)) in rows.iter().zip(&oracle).enumerate() {
        let measured = equivalent_radius(row.volume, r_obs, dim);
        let error = (measured - ora.state.radius).abs();
        max_error = max_error.max(error);
        sum += error;
        match ora.regime {
            Regime::Advancing => adv_max = adv_max.max(error),
            Regime::Receding => rec_max = rec_max.max(error),
            Regime::Pinned => {
                if k > 0 && oracle[k - 1].regime == Regime::Pinned {
                    pinned_ok &= rows[k - 1].volume == row.volume;
                }
            }
        }
        out_rows.push(RadialCompareRow {
            t: row.t,
            forcing: row.forcing,
            measured_r: measured,
            oracle_r: ora.state.radius,
            error,
            regime: ora.regime,
        });
    }
    Ok(RadialComparison {
        max_error,
        mean_error: sum / rows.len() as f64,
        advancing_max_error: adv_max,
        receding_max_error: rec_max,
        pinned_exactly_constant: pinned_ok,
        rows: out_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config_json() -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "name": "test",
            "domain": {
                "dim": 2,
                "shape": [48, 48],
                "h": 0.125,
                "obstacle": { "disks": [ { "cx": 3.0, "cy": 3.0, "r": 1.0 } ] }
            },
            "params": { "mu_plus": 0.2, "mu_minus": 0.2 },
            "schedule": { "knots": [[0.0, 1.0], [1.0, 1.2]], "delta": 0.1 },
            "init": { "kind": "radial", "r0": 1.72 },
            "output": {
                "dir": "out/test",
                "snapshot_stride": 0,
                "certificates": ["stability"]
            }
        })
    }

    fn parse(v: serde_json::Value) -> Result<ScenarioConfig> {
        let c: ScenarioConfig = serde_json::from_value(v)
            .map_err(|e| config_err("<json>", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn valid_config_parses() {
        let c = parse(base_config_json()).unwrap();
        assert_eq!(c.name, "test");
        c.build_domain().unwrap();
        c.build_schedule().unwrap();
    }

    #[test]
    fn bad_mu_minus_is_rejected() {
        let mut v = base_config_json();
        v["params"]["mu_minus"] = serde_json::json!(1.5);
        match parse(v) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "params"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut v = base_config_json();
        v["version"] = serde_json::json!(2);
        assert!(matches!(parse(v), Err(Error::Config { field, .. }) if field == "version"));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let mut v = base_config_json();
        v["surprise"] = serde_json::json!(true);
        assert!(parse(v).is_err());
    }

    #[test]
    fn obstacle_margin_is_enforced() {
        let mut v = base_config_json();
        v["domain"]["obstacle"]["disks"][0]["cx"] = serde_json::json!(1.5);
        assert!(matches!(parse(v), Err(Error::Config { .. })));
    }

    #[test]
    fn unknown_certificate_is_rejected() {
        let mut v = base_config_json();
        v["output"]["certificates"] = serde_json::json!(["stability", "vibes"]);
        assert!(matches!(parse(v), Err(Error::Config { field, .. }) if field == "output.certificates"));
    }

    #[test]
    fn equivalent_radius_of_rasterized_annulus() {
        let h = 1.0 / 16.0;
        let c = 56.0 * h;
        let d =
            Domain::with_disk_obstacles(112, 112, h, &[Disk { cx: c, cy: c, r: 1.0 }]).unwrap();
        let m = d.radial_mask(&[(c, c)], std::f64::consts::E);
        let vol = crate::geometry::measure(&m, &d);
        let r = equivalent_radius(vol, 1.0, 2);
        assert!(
            (r - std::f64::consts::E).abs() < 2.0 * h,
            "equivalent radius {r} vs e"
        );
    }

    #[test]
    fn compare_radial_pinned_trace() {
        let p = HysteresisParams::new(0.2, 0.2).unwrap();
        let r0 = crate::radial::zeta(1.0).unwrap();
        let vol = std::f64::consts::PI * (r0 * r0 - 1.0);
        let rows: Vec<TraceRow> = (0..10)
            .map(|k| TraceRow { t: k as f64 * 0.1, forcing: 1.0, volume: vol })
            .collect();
        let cmp = compare_radial(&rows, r0, 1.0, &p).unwrap();
        assert!(cmp.pinned_exactly_constant);
        assert!(cmp.max_error < 1e-9);
    }
}
