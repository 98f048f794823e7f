//! Closed-form radial solutions and the hysteresis branch evolution.
//!
//! In 2d with the unit-disk obstacle, the harmonic profile with forcing F
//! and boundary slope λ is
//!
//!   u(r) = F·(1 − ln r / ln R)₊  with  R = ζ(F/λ),
//!
//! where ζ is the inverse of R ↦ R·ln R on (1, ∞). A state (R, F) is
//! admissible when its slope λ = F/(R ln R) satisfies λ² ∈ [1−μ₋, 1+μ₊],
//! i.e. when
//!
//!   ζ((1+μ₊)^{−1/2} F) ≤ R ≤ ζ((1−μ₋)^{−1/2} F).
//!
//! Under a forcing schedule, R moves only along the two boundary branches of
//! that region: it advances with λ² = 1+μ₊ and recedes with λ² = 1−μ₋,
//! staying pinned in between. This module evolves that law exactly and is
//! the ground truth the grid simulator is checked against.
//!
//! The 1d analogue on the half line minimizes F²/R + Q·R, with optimum
//! R = F/√Q; it serves as the analytic oracle of the 1d stepper.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::HysteresisParams;
use crate::minmove::Schedule;

/// Inverse of R ↦ R·ln R: the unique R > 1 with R·ln R = s, to 1e-12
/// relative accuracy. Newton with a bisection safeguard on the monotone
/// bracket [1, 1 + s + √(2s)].
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::ZetaDomain { s });
    }
    let mut lo = 1.0f64;
    let mut hi = 1.0 + s + (2.0 * s).sqrt();
    let f = |r: f64| r * r.ln() - s;
    let mut r = 1.0 + s / (1.0 + (1.0 + s).ln());
    for _ in 0..200 {
        let fr = f(r);
        if fr > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        if fr.abs() <= 1e-14 * s.max(1.0) {
            return Ok(r);
        }
        let deriv = r.ln() + 1.0;
        let mut next = r - fr / deriv;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 1e-15 * r {
            return Ok(next);
        }
        r = next;
    }
    Ok(r)
}

/// A radially symmetric state: support radius, forcing, boundary slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialState {
    pub radius: f64,
    pub forcing: f64,
    /// |u'(R⁻)| = F/(R ln R).
    pub lambda: f64,
}

impl RadialState {
    pub fn new(radius: f64, forcing: f64) -> Result<Self> {
        if !(radius > 1.0) {
            return Err(Error::InvalidParams(format!("radius must exceed 1, got {radius}")));
        }
        if !(forcing > 0.0) {
            return Err(Error::InvalidParams(format!("forcing must be > 0, got {forcing}")));
        }
        Ok(RadialState { radius, forcing, lambda: forcing / (radius * radius.ln()) })
    }
}

/// The closed-form profile for slope λ and forcing F.
#[derive(Debug, Clone, Copy)]
pub struct RadialProfile {
    pub radius: f64,
    pub forcing: f64,
    pub lambda: f64,
}

/// Builds the radial profile with |u'(R)| = λ: support radius R = ζ(F/λ).
pub fn radial_profile(lambda: f64, forcing: f64) -> Result<RadialProfile> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParams(format!("lambda must be > 0, got {lambda}")));
    }
    if !(forcing > 0.0) {
        return Err(Error::InvalidParams(format!("forcing must be > 0, got {forcing}")));
    }
    let radius = zeta(forcing / lambda)?;
    Ok(RadialProfile { radius, forcing, lambda })
}

impl RadialProfile {
    /// u(r) = F(1 − ln r / ln R), clamped to 0 for r ≥ R and to F for r ≤ 1.
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 1.0 {
            return self.forcing;
        }
        if r >= self.radius {
            return 0.0;
        }
        self.forcing * (1.0 - r.ln() / self.radius.ln())
    }
}

/// Tests membership in the closed admissible region:
/// ζ((1+μ₊)^{−1/2}F) ≤ R ≤ ζ((1−μ₋)^{−1/2}F).
///
/// The branch values are computed as ζ(F/√(1±μ±)), the same expression the
/// evolution uses, so states sitting exactly on a branch test as inside.
pub fn in_region_s(state: &RadialState, params: &HysteresisParams) -> Result<bool> {
    let lower = zeta(state.forcing / (1.0 + params.mu_plus).sqrt())?;
    let upper = zeta(state.forcing / (1.0 - params.mu_minus).sqrt())?;
    Ok(state.radius >= lower && state.radius <= upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Pinned,
    Advancing,
    Receding,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Pinned => "pinned",
            Regime::Advancing => "advancing",
            Regime::Receding => "receding",
        }
    }
}

/// One record of the exact branch-following evolution.
#[derive(Debug, Clone, Copy)]
pub struct RadialStep {
    pub t: f64,
    pub state: RadialState,
    pub regime: Regime,
}

/// Exact rate-independent evolution of the radius under a forcing schedule:
/// R jumps to the advancing branch when it falls below it, to the receding
/// branch when it rises above it, and stays put otherwise.
pub fn radial_evolve(
    schedule: &Schedule,
    r0: f64,
    params: &HysteresisParams,
) -> Result<Vec<RadialStep>> {
    let f0 = schedule.forcing[0];
    let init = RadialState::new(r0, f0)?;
    if !in_region_s(&init, params)? {
        return Err(Error::OutsideRegion { radius: r0, forcing: f0 });
    }
    let lambda_adv = (1.0 + params.mu_plus).sqrt();
    let lambda_rec = (1.0 - params.mu_minus).sqrt();
    let mut radius = r0;
    let mut out = Vec::with_capacity(schedule.len());
    for (k, (&t, &f)) in schedule.times.iter().zip(&schedule.forcing).enumerate() {
        let adv = zeta(f / lambda_adv)?;
        let rec = zeta(f / lambda_rec)?;
        let (regime, lambda) = if adv > radius {
            radius = adv;
            (Regime::Advancing, lambda_adv)
        } else if rec < radius {
            radius = rec;
            (Regime::Receding, lambda_rec)
        } else {
            (Regime::Pinned, f / (radius * radius.ln()))
        };
        let state = RadialState { radius, forcing: f, lambda };
        debug_assert!(in_region_s(&state, params).unwrap(), "step {k} left the region");
        out.push(RadialStep { t, state, regime });
    }
    Ok(out)
}

/// 1d oracle: the minimizer of R ↦ F²/R + Q·R and its optimal energy 2F√Q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalflineOptimum {
    pub radius: f64,
    pub energy: f64,
}

pub fn halfline_optimum(forcing: f64, q: f64) -> Result<HalflineOptimum> {
    if !(forcing > 0.0) || !(q > 0.0) {
        return Err(Error::InvalidParams(format!(
            "halfline optimum needs F, Q > 0, got F={forcing}, Q={q}"
        )));
    }
    Ok(HalflineOptimum { radius: forcing / q.sqrt(), energy: 2.0 * forcing * q.sqrt() })
}

/// Writes the evolution as CSV with the fixed plotting schema
/// `t,F,R,lambda,regime`.
pub fn write_radial_csv(path: &Path, steps: &[RadialStep]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,F,R,lambda,regime")?;
    for s in steps {
        writeln!(
            f,
            "{},{},{},{},{}",
            s.t,
            s.state.forcing,
            s.state.radius,
            s.state.lambda,
            s.regime.label()
        )?;
    }
    Ok(())
}
