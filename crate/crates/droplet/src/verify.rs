//! Certificates that a trace behaves like an energy solution.
//!
//! Each certificate is a pure function of the trace: stability of every
//! state (squared boundary slopes inside the pinning interval), the energy
//! dissipation inequality over all index pairs, the dissipation balance,
//! a Grönwall-type energy envelope, the dynamic slope statistics on moving
//! boundary cells, jump structure, and free-boundary regularity proxies.
//!
//! Residuals are reported nondimensionally (energies relative to the peak
//! energy of the trace, slopes in slope² units) so that one tolerance per
//! certificate applies across scenarios.

use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::geometry::{connected_components, diss, measure, CellClass, Mask};
use crate::minmove::{is_local_minimizer, Trace};

/// Default stability tolerance, in slope² units.
pub const TOL_STABILITY: f64 = 0.15;
/// Default nondimensional tolerance of the dissipation inequality and the
/// Grönwall envelope.
pub const TOL_ENERGY: f64 = 1e-6;
/// Default relative tolerance of the dissipation balance.
pub const TOL_BALANCE: f64 = 0.05;
/// Default relative half-width of the dynamic slope band.
pub const TOL_DYNAMIC_SLOPE: f64 = 0.15;
/// Default quantile the dynamic slope statistic must reach.
pub const DYNAMIC_SLOPE_QUANTILE: f64 = 0.9;

/// Pass/fail plus quantitative residuals of one checked property.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub name: String,
    pub pass: bool,
    pub tolerance: f64,
    /// Largest residual encountered; pass ⇔ worst_residual ≤ tolerance.
    pub worst_residual: f64,
    /// Step index where the worst residual occurs.
    pub argmax_step: usize,
    /// Number of individual samples or pairs beyond tolerance.
    pub violation_count: usize,
    /// The property had nothing to check (e.g. no moving cells).
    pub vacuous: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Filled by the writer when the residual series is exported.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series_path: Option<String>,
    /// Per-step residual series.
    #[serde(skip)]
    pub series: Vec<f64>,
}

impl Certificate {
    fn new(name: &str, tolerance: f64) -> Certificate {
        Certificate {
            name: name.to_string(),
            pass: true,
            tolerance,
            worst_residual: 0.0,
            argmax_step: 0,
            violation_count: 0,
            vacuous: false,
            note: None,
            series_path: None,
            series: Vec::new(),
        }
    }

    fn finish(mut self) -> Certificate {
        self.pass = self.worst_residual <= self.tolerance;
        self
    }

    pub fn summary(&self) -> String {
        let status = if self.pass {
            if self.vacuous {
                "PASS (vacuous)"
            } else {
                "PASS"
            }
        } else {
            "FAIL"
        };
        format!(
            "{:<24} {:>14} worst residual {:.3e} (tol {:.3e}) at step {}",
            self.name, status, self.worst_residual, self.tolerance, self.argmax_step
        )
    }
}

/// Writes the per-step residual series as `step,residual` CSV.
pub fn write_certificate_series(path: &Path, cert: &Certificate) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,residual")?;
    for (k, r) in cert.series.iter().enumerate() {
        writeln!(f, "{k},{r}")?;
    }
    Ok(())
}

/// Peak J over the trace, the energy scale residuals are measured against.
fn energy_scale(trace: &Trace) -> f64 {
    trace.steps.iter().map(|s| s.energy.j_energy).fold(f64::MIN_POSITIVE, f64::max)
}

/// Distance of a squared slope outside the pinning interval.
fn stability_residual(slope: f64, lo: f64, hi: f64) -> f64 {
    let s2 = slope * slope;
    (lo - s2).max(s2 - hi).max(0.0)
}

/// Every boundary slope sample of every state must satisfy
/// s² ∈ [1−μ₋ − tol, 1+μ₊ + tol].
pub fn check_stability(trace: &Trace, tol: f64) -> Certificate {
    let (lo, hi) = trace.params.pinning_interval();
    let mut cert = Certificate::new("stability", tol);
    for (k, s) in trace.steps.iter().enumerate() {
        let mut step_worst = 0.0f64;
        for &(_, slope) in &s.slope_samples {
            let r = stability_residual(slope, lo, hi);
            step_worst = step_worst.max(r);
            if r > tol {
                cert.violation_count += 1;
            }
        }
        if step_worst > cert.worst_residual {
            cert.worst_residual = step_worst;
            cert.argmax_step = k;
        }
        cert.series.push(step_worst);
    }
    cert.vacuous = trace.steps.iter().all(|s| s.slope_samples.is_empty());
    cert.finish()
}

/// Work term Σ 2·ΔF·P̄ with trapezoidal pressure averages, as prefix sums.
/// Second-order accurate discretization of ∫ 2Ḟ P dt; used by the balance
/// check.
fn trapezoid_work_prefix(trace: &Trace) -> Vec<f64> {
    let n = trace.steps.len();
    let mut w = vec![0.0; n];
    for m in 0..n.saturating_sub(1) {
        let a = &trace.steps[m];
        let b = &trace.steps[m + 1];
        w[m + 1] = w[m] + (b.forcing - a.forcing) * (a.energy.pressure + b.energy.pressure);
    }
    w
}

/// Work term of the time-discrete scheme: per step
/// (F_{m+1}² − F_m²)·P_m/F_m, the left-state pressure carried across the
/// step with the forcing-ratio correction. This is the exact amount the
/// scaled stay-put competitor supplies, so step optimality implies the
/// dissipation inequality against it at solver precision; the trapezoidal
/// form differs by O(h·ΔF) cell-quantization noise.
fn scheme_work_prefix(trace: &Trace) -> Vec<f64> {
    let n = trace.steps.len();
    let mut w = vec![0.0; n];
    for m in 0..n.saturating_sub(1) {
        let a = &trace.steps[m];
        let b = &trace.steps[m + 1];
        w[m + 1] = w[m]
            + (b.forcing * b.forcing - a.forcing * a.forcing) * a.energy.pressure / a.forcing;
    }
    w
}

/// For every pair k < l:
/// J_k − J_l + work(k, l) ≥ Diss(Ω_k, Ω_l) − tol·scale,
/// with the scheme's forcing-ratio-corrected work term.
///
/// All pairs are evaluated up to 2000 steps; longer traces fall back to
/// adjacent pairs plus pairs anchored at the initial state. A failing
/// adjacent pair indicates a stepper bug.
pub fn check_dissipation_inequality(trace: &Trace, tol: f64) -> Result<Certificate> {
    let mut cert = Certificate::new("dissipation_inequality", tol);
    let n = trace.steps.len();
    if n < 2 {
        cert.vacuous = true;
        return Ok(cert.finish());
    }
    let scale = energy_scale(trace);
    let w = scheme_work_prefix(trace);
    cert.series = vec![0.0; n];
    let all_pairs = n <= 2000;
    for k in 0..n - 1 {
        let mut row_worst = 0.0f64;
        let sk = &trace.steps[k];
        for l in (k + 1)..n {
            if !all_pairs && k != l - 1 && k != 0 {
                break;
            }
            let sl = &trace.steps[l];
            let d = diss(&sk.mask, &sl.mask, &trace.params, &trace.domain)?;
            let lhs = sk.energy.j_energy - sl.energy.j_energy + (w[l] - w[k]);
            let residual = (d - lhs) / scale;
            if residual > row_worst {
                row_worst = residual;
            }
            if residual > tol {
                cert.violation_count += 1;
            }
        }
        cert.series[k] = row_worst;
        if row_worst > cert.worst_residual {
            cert.worst_residual = row_worst;
            cert.argmax_step = k;
        }
    }
    Ok(cert.finish())
}

/// |J_0 − J_N + Σ 2ΔF·P̄ − DissBar| ≤ tol·DissBar, where DissBar is the
/// step-partition total Σ Diss(Ω_k, Ω_{k+1}).
///
/// For a trace whose per-step motion is not monotone the step partition is
/// only a lower bound for the continuum total variation; the certificate
/// carries a note in that case.
pub fn check_energy_balance(trace: &Trace, tol: f64) -> Result<Certificate> {
    let mut cert = Certificate::new("energy_balance", tol);
    let n = trace.steps.len();
    if n < 2 {
        cert.vacuous = true;
        return Ok(cert.finish());
    }
    let w = trapezoid_work_prefix(trace);
    let mut dissbar = 0.0;
    let mut grew = false;
    let mut shed = false;
    for k in 1..n {
        let a = &trace.steps[k - 1];
        let b = &trace.steps[k];
        dissbar += diss(&a.mask, &b.mask, &trace.params, &trace.domain)?;
        if !b.mask.is_subset_of(&a.mask) {
            grew = true;
        }
        if !a.mask.is_subset_of(&b.mask) {
            shed = true;
        }
    }
    let scale = if dissbar > 1e-12 * energy_scale(trace) { dissbar } else { energy_scale(trace) };
    let first = &trace.steps[0];
    let last = &trace.steps[n - 1];
    let balance = first.energy.j_energy - last.energy.j_energy + w[n - 1] - dissbar;
    cert.worst_residual = balance.abs() / scale;
    cert.argmax_step = n - 1;
    cert.series = vec![balance / scale];
    if grew && shed {
        cert.note = Some(
            "trace is non-monotone; the step-partition DissBar is a lower bound for the continuum total variation".into(),
        );
    }
    if cert.worst_residual > tol {
        cert.violation_count = 1;
    }
    Ok(cert.finish())
}

/// Rate-independent Grönwall envelope: at every step
///
///   J_k + (μ₊∧μ₋)·Var_k ≤ J_0 · exp(2·posvar(log F)_k) + tol,
///
/// where Var_k is the accumulated symmetric-difference measure and
/// posvar(log F) the positive variation of log F up to k. On nondecreasing
/// forcing the envelope equals J_0·F_k²/F_0².
pub fn check_gronwall(trace: &Trace, tol: f64) -> Result<Certificate> {
    let mut cert = Certificate::new("gronwall", tol);
    let n = trace.steps.len();
    if n == 0 {
        cert.vacuous = true;
        return Ok(cert.finish());
    }
    let j0 = trace.steps[0].energy.j_energy;
    let mu_min = trace.params.mu_plus.min(trace.params.mu_minus);
    let mut var = 0.0;
    let mut posvar_log_f = 0.0;
    for k in 0..n {
        if k > 0 {
            let a = &trace.steps[k - 1];
            let b = &trace.steps[k];
            var += measure(&a.mask.symmetric_difference(&b.mask), &trace.domain);
            posvar_log_f += (b.forcing / a.forcing).ln().max(0.0);
        }
        let bound = j0 * (2.0 * posvar_log_f).exp();
        let lhs = trace.steps[k].energy.j_energy + mu_min * var;
        let residual = (lhs - bound) / bound;
        cert.series.push(residual.max(0.0));
        if residual > cert.worst_residual {
            cert.worst_residual = residual;
            cert.argmax_step = k;
        }
        if residual > tol {
            cert.violation_count += 1;
        }
    }
    Ok(cert.finish())
}

/// Classification of a moving step: pooled slope² statistics of boundary
/// cells next to newly wet (advancing) and newly dry (receding) cells.
#[derive(Debug, Clone, Serialize)]
pub struct DynamicSlopeStats {
    pub advancing_samples: usize,
    pub advancing_in_band: usize,
    pub receding_samples: usize,
    pub receding_in_band: usize,
    pub advancing_median_sq: Option<f64>,
    pub receding_median_sq: Option<f64>,
}

/// ≥ `quantile` of advancing (receding) boundary samples must have slope²
/// within `tol` relative of 1+μ₊ (1−μ₋). Vacuous-pass when nothing moves.
pub fn check_dynamic_slope(trace: &Trace, tol: f64, quantile: f64) -> (Certificate, DynamicSlopeStats) {
    let mut cert = Certificate::new("dynamic_slope", 0.0);
    let target_adv = 1.0 + trace.params.mu_plus;
    let target_rec = 1.0 - trace.params.mu_minus;
    let mut adv: Vec<f64> = Vec::new();
    let mut rec: Vec<f64> = Vec::new();
    let nx = trace.domain.nx;
    let near = |cell: usize, changed: &Mask| -> bool {
        let (i, j) = (cell % nx, cell / nx);
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= nx as i64 || nj >= (trace.domain.ny) as i64 {
                    continue;
                }
                if changed.contains(nj as usize * nx + ni as usize) {
                    return true;
                }
            }
        }
        false
    };
    for k in 1..trace.steps.len() {
        let prev = &trace.steps[k - 1];
        let cur = &trace.steps[k];
        let newly_wet = cur.mask.difference(&prev.mask);
        let newly_dry = prev.mask.difference(&cur.mask);
        let mut step_adv_out = 0usize;
        let mut step_rec_out = 0usize;
        if newly_wet.is_empty() && newly_dry.is_empty() {
            cert.series.push(0.0);
            continue;
        }
        for &(cell, slope) in &cur.slope_samples {
            let s2 = slope * slope;
            if !newly_wet.is_empty() && near(cell, &newly_wet) {
                if (s2 - target_adv).abs() > tol * target_adv {
                    step_adv_out += 1;
                }
                adv.push(s2);
            }
            if !newly_dry.is_empty() && near(cell, &newly_dry) {
                if (s2 - target_rec).abs() > tol * target_rec {
                    step_rec_out += 1;
                }
                rec.push(s2);
            }
        }
        cert.series.push((step_adv_out + step_rec_out) as f64);
    }
    let in_band = |samples: &[f64], target: f64| -> usize {
        samples.iter().filter(|&&s2| (s2 - target).abs() <= tol * target).count()
    };
    let median = |samples: &mut Vec<f64>| -> Option<f64> {
        if samples.is_empty() {
            return None;
        }
        samples.sort_by(f64::total_cmp);
        Some(samples[samples.len() / 2])
    };
    let adv_in = in_band(&adv, target_adv);
    let rec_in = in_band(&rec, target_rec);
    let mut shortfall = 0.0f64;
    if !adv.is_empty() {
        shortfall = shortfall.max(quantile - adv_in as f64 / adv.len() as f64);
    }
    if !rec.is_empty() {
        shortfall = shortfall.max(quantile - rec_in as f64 / rec.len() as f64);
    }
    cert.worst_residual = shortfall.max(0.0);
    cert.violation_count = (adv.len() - adv_in) + (rec.len() - rec_in);
    cert.vacuous = adv.is_empty() && rec.is_empty();
    let mut adv_sorted = adv.clone();
    let mut rec_sorted = rec.clone();
    let stats = DynamicSlopeStats {
        advancing_samples: adv.len(),
        advancing_in_band: adv_in,
        receding_samples: rec.len(),
        receding_in_band: rec_in,
        advancing_median_sq: median(&mut adv_sorted),
        receding_median_sq: median(&mut rec_sorted),
    };
    (cert.finish(), stats)
}

/// Containment relation of the left and right state inside one connected
/// component of their union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SetRelation {
    LeftWithinRight,
    RightWithinLeft,
    Incomparable,
}

/// A detected jump: the step, the states around it, and the per-component
/// ordering structure.
#[derive(Debug, Clone)]
pub struct JumpRecord {
    pub step_index: usize,
    pub t: f64,
    pub left: Mask,
    pub right: Mask,
    /// measure(left Δ right).
    pub changed: f64,
    /// Relation of left vs right within each component of left ∪ right.
    pub per_component: Vec<SetRelation>,
    /// The right state is a single-flip fixed point of E(left, ·).
    pub right_is_minimizer: bool,
}

/// Detects steps with measure(Ω_k Δ Ω_{k+1}) > threshold and reports the
/// per-component containment plus a re-minimization check of the right state.
pub fn jump_report(trace: &Trace, threshold: f64) -> Result<Vec<JumpRecord>> {
    let mut out = Vec::new();
    for k in 1..trace.steps.len() {
        let left = &trace.steps[k - 1].mask;
        let right = &trace.steps[k].mask;
        let changed = measure(&left.symmetric_difference(right), &trace.domain);
        if changed <= threshold {
            continue;
        }
        let union = left.union(right);
        let mut per_component = Vec::new();
        for comp in connected_components(&union, &trace.domain) {
            let l = left.intersection(&comp);
            let r = right.intersection(&comp);
            let rel = if l.is_subset_of(&r) {
                SetRelation::LeftWithinRight
            } else if r.is_subset_of(&l) {
                SetRelation::RightWithinLeft
            } else {
                SetRelation::Incomparable
            };
            per_component.push(rel);
        }
        let right_is_minimizer = is_local_minimizer(
            left,
            right,
            trace.steps[k].forcing,
            &trace.domain,
            &trace.params,
        )?;
        out.push(JumpRecord {
            step_index: k,
            t: trace.steps[k].t,
            left: left.clone(),
            right: right.clone(),
            changed,
            per_component,
            right_is_minimizer,
        });
    }
    Ok(out)
}

/// Default jump threshold: 10 cells of area.
pub fn default_jump_threshold(trace: &Trace) -> f64 {
    10.0 * trace.domain.cell_volume()
}

/// Configurable pass thresholds of the regularity proxies.
#[derive(Debug, Clone, Copy)]
pub struct RegularityThresholds {
    /// Boundary Lipschitz proxy must stay below factor·√(1+μ₊)·F-scale.
    pub lipschitz_factor: f64,
    /// Nondegeneracy proxy must exceed this multiple of √(1−μ₋).
    pub nondegeneracy_min: f64,
    /// Density proxy must lie in [c, 1−c].
    pub density_c: f64,
}

impl Default for RegularityThresholds {
    fn default() -> Self {
        RegularityThresholds { lipschitz_factor: 1.5, nondegeneracy_min: 0.1, density_c: 0.1 }
    }
}

/// Per-state regularity proxies.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityRow {
    pub step: usize,
    pub lipschitz: f64,
    pub nondegeneracy: f64,
    pub density_min: f64,
    pub density_max: f64,
}

/// Lipschitz, nondegeneracy, and density proxies per state, folded into one
/// certificate: the worst normalized threshold violation across the trace.
pub fn regularity_report(
    trace: &Trace,
    thresholds: &RegularityThresholds,
) -> (Certificate, Vec<RegularityRow>) {
    let mut cert = Certificate::new("regularity", 0.0);
    let lam_hi = (1.0 + trace.params.mu_plus).sqrt();
    let lam_lo = (1.0 - trace.params.mu_minus).sqrt();
    let mut rows = Vec::with_capacity(trace.steps.len());
    for (k, s) in trace.steps.iter().enumerate() {
        let (dmin, dmax) = density_range(trace, k);
        rows.push(RegularityRow {
            step: k,
            lipschitz: s.lipschitz_proxy,
            nondegeneracy: s.nondegeneracy_proxy,
            density_min: dmin,
            density_max: dmax,
        });
        let lip_cap = thresholds.lipschitz_factor * lam_hi * s.forcing.max(1.0);
        let nd_floor = thresholds.nondegeneracy_min * lam_lo;
        let c = thresholds.density_c;
        let mut r = (s.lipschitz_proxy / lip_cap - 1.0).max(0.0);
        r = r.max(1.0 - s.nondegeneracy_proxy / nd_floor).min(f64::INFINITY);
        let r_density = ((c - dmin) / c).max((dmax - (1.0 - c)) / c).max(0.0);
        let residual = r.max(r_density).max(0.0);
        cert.series.push(residual);
        if residual > cert.worst_residual {
            cert.worst_residual = residual;
            cert.argmax_step = k;
        }
        if residual > 0.0 {
            cert.violation_count += 1;
        }
    }
    cert.vacuous = trace.steps.is_empty();
    (cert.finish(), rows)
}

/// Min and max wet fraction of the r = 4h disc around free boundary cells,
/// counted over non-obstacle cells.
fn density_range(trace: &Trace, step: usize) -> (f64, f64) {
    let domain = &trace.domain;
    let mask = &trace.steps[step].mask;
    let r = 4i64;
    let mut dmin = f64::INFINITY;
    let mut dmax = f64::NEG_INFINITY;
    let mut found = false;
    for &(cell, _) in &trace.steps[step].slope_samples {
        let (ci, cj) = domain.coords(cell);
        let mut wet = 0usize;
        let mut total = 0usize;
        for dj in -r..=r {
            for di in -r..=r {
                if di * di + dj * dj > r * r {
                    continue;
                }
                let (i, j) = (ci as i64 + di, cj as i64 + dj);
                if i < 0 || j < 0 || i >= domain.nx as i64 || j >= domain.ny as i64 {
                    continue;
                }
                let c = domain.index(i as usize, j as usize);
                if domain.class(c) == CellClass::Obstacle {
                    continue;
                }
                total += 1;
                if mask.contains(c) {
                    wet += 1;
                }
            }
        }
        if total > 0 {
            let frac = wet as f64 / total as f64;
            dmin = dmin.min(frac);
            dmax = dmax.max(frac);
            found = true;
        }
    }
    if !found {
        (0.5, 0.5)
    } else {
        (dmin, dmax)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{
        boundary_lipschitz_proxy, boundary_slope_samples, energy_report, nondegeneracy_proxy,
        solve_harmonic,
    };
    use crate::geometry::{Disk, Domain, HysteresisParams};
    use crate::minmove::{run, Schedule, TraceStep};

    fn halfline_trace(knots: &[(f64, f64)], delta: f64) -> Trace {
        let d = Domain::line(1600, 1e-3).unwrap();
        let p = HysteresisParams::new(0.21, 0.19).unwrap();
        let init = Mask::from_cells(d.num_cells(), &(1..=909).collect::<Vec<_>>());
        run(&Schedule::from_knots(knots, delta).unwrap(), &init, &d, &p).unwrap()
    }

    /// Builds a trace step directly from a mask (used to construct corrupted
    /// traces in tests).
    fn synth_step(domain: &Domain, mask: &Mask, forcing: f64, t: f64) -> TraceStep {
        let profile = solve_harmonic(domain, mask, forcing).unwrap();
        let energy = energy_report(&profile, domain).unwrap();
        TraceStep {
            t,
            forcing,
            mask: mask.clone(),
            energy,
            slope_samples: boundary_slope_samples(domain, &profile),
            lipschitz_proxy: boundary_lipschitz_proxy(domain, &profile),
            nondegeneracy_proxy: nondegeneracy_proxy(domain, &profile, 4),
            diss_increment: 0.0,
            cumulative_dissbar: 0.0,
            flips: 0,
            sweeps: 0,
            jump_flag: false,
        }
    }

    #[test]
    fn stability_passes_on_advancing_halfline() {
        let trace = halfline_trace(&[(0.0, 1.0), (1.0, 1.3)], 0.05);
        let cert = check_stability(&trace, TOL_STABILITY);
        assert!(cert.pass, "{}", cert.summary());
        assert_eq!(cert.violation_count, 0);
    }

    #[test]
    fn stability_fails_on_dilated_state() {
        let d = Domain::line(1600, 1e-3).unwrap();
        let p = HysteresisParams::new(0.21, 0.19).unwrap();
        // A state stretched far beyond its equilibrium: slope collapses.
        let mask = Mask::from_cells(d.num_cells(), &(1..=1400).collect::<Vec<_>>());
        let step = synth_step(&d, &mask, 1.0, 0.0);
        let trace = Trace { domain: d, params: p, steps: vec![step] };
        let cert = check_stability(&trace, TOL_STABILITY);
        assert!(!cert.pass);
        assert!(cert.violation_count > 0);
    }

    #[test]
    fn dissipation_inequality_holds_on_halfline_runs() {
        for knots in [
            vec![(0.0, 1.0), (1.0, 1.4)],
            vec![(0.0, 1.0), (1.0, 1.4), (2.0, 1.0)],
            vec![(0.0, 1.0), (1.0, 1.0)],
        ] {
            let trace = halfline_trace(&knots, 0.05);
            let cert = check_dissipation_inequality(&trace, TOL_ENERGY).unwrap();
            assert!(cert.pass, "{knots:?}: {}", cert.summary());
        }
    }

    #[test]
    fn balance_tight_on_monotone_halfline() {
        let trace = halfline_trace(&[(0.0, 1.0), (1.0, 1.4)], 0.02);
        let cert = check_energy_balance(&trace, TOL_BALANCE).unwrap();
        assert!(cert.pass, "{}", cert.summary());
    }

    #[test]
    fn balance_zero_on_constant_forcing() {
        let trace = halfline_trace(&[(0.0, 1.0), (1.0, 1.0)], 0.1);
        let cert = check_energy_balance(&trace, TOL_BALANCE).unwrap();
        assert!(cert.pass);
        assert!(cert.worst_residual < 1e-10, "residual {}", cert.worst_residual);
    }

    #[test]
    fn gronwall_envelope_on_ramps_and_loops() {
        for knots in [
            vec![(0.0, 1.0), (1.0, 1.4)],
            vec![(0.0, 1.0), (1.0, 0.8)],
            vec![(0.0, 1.0), (1.0, 1.4), (2.0, 1.0)],
        ] {
            let trace = halfline_trace(&knots, 0.05);
            let cert = check_gronwall(&trace, TOL_ENERGY).unwrap();
            assert!(cert.pass, "{knots:?}: {}", cert.summary());
        }
    }

    #[test]
    fn gronwall_matches_forcing_square_on_increasing_ramps() {
        // On a nondecreasing ramp the envelope is exactly J_0·F²/F_0².
        let trace = halfline_trace(&[(0.0, 1.0), (1.0, 1.4)], 0.05);
        let j0 = trace.steps[0].energy.j_energy;
        let cert = check_gronwall(&trace, TOL_ENERGY).unwrap();
        assert!(cert.pass);
        let last = trace.steps.last().unwrap();
        let bound = j0 * (last.forcing / trace.steps[0].forcing).powi(2);
        let mu = trace.params.mu_plus.min(trace.params.mu_minus);
        let mut var = 0.0;
        for w in trace.steps.windows(2) {
            var += measure(&w[0].mask.symmetric_difference(&w[1].mask), &trace.domain);
        }
        assert!(last.energy.j_energy + mu * var <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn dynamic_slope_vacuous_when_pinned() {
        let trace = halfline_trace(&[(0.0, 1.0), (1.0, 1.0)], 0.1);
        let (cert, stats) = check_dynamic_slope(&trace, TOL_DYNAMIC_SLOPE, DYNAMIC_SLOPE_QUANTILE);
        assert!(cert.pass && cert.vacuous);
        assert_eq!(stats.advancing_samples + stats.receding_samples, 0);
    }

    #[test]
    fn dynamic_slope_targets_on_halfline() {
        let trace = halfline_trace(&[(0.0, 1.0), (1.0, 1.5), (2.0, 1.05)], 0.02);
        let (cert, stats) = check_dynamic_slope(&trace, TOL_DYNAMIC_SLOPE, DYNAMIC_SLOPE_QUANTILE);
        assert!(cert.pass, "{}", cert.summary());
        assert!(stats.advancing_samples > 0 && stats.receding_samples > 0);
        let adv = stats.advancing_median_sq.unwrap();
        let rec = stats.receding_median_sq.unwrap();
        assert!((adv - 1.21).abs() < 0.1 * 1.21, "advancing median² {adv}");
        assert!((rec - 0.81).abs() < 0.1 * 0.81, "receding median² {rec}");
    }

    #[test]
    fn jump_report_empty_on_smooth_runs() {
        let trace = halfline_trace(&[(0.0, 1.0), (1.0, 1.3)], 0.02);
        let jumps = jump_report(&trace, default_jump_threshold(&trace)).unwrap();
        assert!(jumps.is_empty(), "unexpected jumps: {}", jumps.len());
    }

    #[test]
    fn jump_report_flags_large_changes() {
        let d = Domain::line(1600, 1e-3).unwrap();
        let p = HysteresisParams::new(0.21, 0.19).unwrap();
        let small = Mask::from_cells(d.num_cells(), &(1..=500).collect::<Vec<_>>());
        let big = Mask::from_cells(d.num_cells(), &(1..=909).collect::<Vec<_>>());
        let steps = vec![synth_step(&d, &small, 1.0, 0.0), synth_step(&d, &big, 1.0, 1.0)];
        let trace = Trace { domain: d, params: p, steps };
        let jumps = jump_report(&trace, 10.0 * 1e-3).unwrap();
        assert_eq!(jumps.len(), 1);
        let j = &jumps[0];
        assert_eq!(j.per_component, vec![SetRelation::LeftWithinRight]);
        assert!(j.right_is_minimizer);
    }

    #[test]
    fn regularity_radial_state() {
        let h = 1.0 / 16.0;
        let c = 56.0 * h;
        let d = Domain::with_disk_obstacles(112, 112, h, &[Disk { cx: c, cy: c, r: 1.0 }]).unwrap();
        let p = HysteresisParams::new(0.2, 0.2).unwrap();
        let mask = d.radial_mask(&[(c, c)], std::f64::consts::E);
        let f = std::f64::consts::E;
        let step = synth_step(&d, &mask, f, 0.0);
        // u = e(1 − ln r): |u'(R)| = λ = 1. The staircase corner factor of
        // the proxy measures about 1.22 on this grid.
        let lam = 1.0;
        assert!(
            step.lipschitz_proxy <= 1.3 * lam && step.lipschitz_proxy >= 0.8 * lam,
            "lipschitz proxy {} not near λ",
            step.lipschitz_proxy
        );
        let trace = Trace { domain: d, params: p, steps: vec![step] };
        let (cert, rows) = regularity_report(&trace, &RegularityThresholds::default());
        assert!(cert.pass, "{}", cert.summary());
        assert!((rows[0].density_min - 0.5).abs() < 0.35);
        assert!((rows[0].density_max - 0.5).abs() < 0.35);
    }

    #[test]
    fn regularity_fails_on_tendril() {
        let h = 1.0 / 12.0;
        let c = 40.0 * h;
        let d = Domain::with_disk_obstacles(80, 80, h, &[Disk { cx: c, cy: c, r: 1.0 }]).unwrap();
        let p = HysteresisParams::new(0.2, 0.2).unwrap();
        let mut mask = d.radial_mask(&[(c, c)], 2.0);
        // A one-cell-wide tendril sticking out of the droplet.
        let (ci, cj) = (40 + (2.0 / h) as usize, 40);
        for k in 0..8 {
            mask.insert(d.index(ci + k, cj));
        }
        let step = synth_step(&d, &mask, 1.0, 0.0);
        let trace = Trace { domain: d, params: p, steps: vec![step] };
        let (cert, rows) = regularity_report(&trace, &RegularityThresholds::default());
        assert!(!cert.pass, "tendril state passed: {:?}", rows[0]);
    }
}
