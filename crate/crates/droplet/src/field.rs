//! Masked harmonic solves with Dirichlet forcing, energy and pressure
//! evaluation, and free-boundary slope estimation.
//!
//! A profile u is the discrete harmonic function on a wet mask:
//!
//!   Δu = 0 on wet cells off the forcing ring,
//!   u = F on the inner boundary ring,
//!   u = 0 outside the mask,
//!
//! solved with the 5-point (3-point in 1d) stencil by conjugate gradients.
//! The Dirichlet energy is the edge sum D = Σ (u_i − u_j)²·h^{d−2} over
//! grid edges inside the physical domain, the exact discrete analogue of
//! ∫|∇u|², and the pressure P = D/F is its work conjugate: P·F = D holds
//! exactly in this discretization.

use std::io::{Read as _, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CellClass, Domain, Mask};

/// Relative residual target of the conjugate gradient solve.
pub const SOLVER_TOL: f64 = 1e-10;

/// Absolute tolerance for energy comparisons, after nondimensionalization
/// by F². Far above the solver residual, far below physical scales.
pub const ENERGY_CMP_TOL: f64 = 1e-8;

/// A solved height profile on a wet mask.
#[derive(Debug, Clone)]
pub struct Profile {
    /// Grid of heights, row-major; 0 outside the mask, F on the inner ring.
    pub values: Vec<f64>,
    pub mask: Mask,
    /// Dirichlet value on the inner boundary ring.
    pub forcing: f64,
    /// Achieved relative residual of the solve.
    pub residual: f64,
}

/// Energy bookkeeping of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// Edge-sum Dirichlet energy D.
    pub dirichlet: f64,
    /// Wet area |Ω ∩ U|.
    pub volume: f64,
    /// J = D + |Ω| (unit bulk coefficient).
    pub j_energy: f64,
    /// P = D / F.
    pub pressure: f64,
}

/// Solves the masked harmonic problem from a zero initial guess.
pub fn solve_harmonic(domain: &Domain, mask: &Mask, forcing: f64) -> Result<Profile> {
    solve_harmonic_from(domain, mask, forcing, None)
}

/// Solves the masked harmonic problem, optionally warm-starting from a full
/// grid of values (only the wet off-ring entries are used).
pub fn solve_harmonic_from(
    domain: &Domain,
    mask: &Mask,
    forcing: f64,
    warm: Option<&[f64]>,
) -> Result<Profile> {
    if !(forcing > 0.0) || !forcing.is_finite() {
        return Err(Error::InvalidParams(format!("forcing must be > 0, got {forcing}")));
    }
    domain.validate_mask(mask)?;

    let n_cells = domain.num_cells();
    let mut values = vec![0.0; n_cells];
    for &b in domain.inner_boundary() {
        values[b] = forcing;
    }

    // Unknowns: wet cells off the forcing ring, ascending order.
    let unknowns: Vec<usize> = mask
        .iter()
        .filter(|&c| domain.class(c) != CellClass::InnerBoundary)
        .collect();
    let n = unknowns.len();
    if n == 0 {
        return Ok(Profile { values, mask: mask.clone(), forcing, residual: 0.0 });
    }
    let mut slot = vec![usize::MAX; n_cells];
    for (k, &c) in unknowns.iter().enumerate() {
        slot[c] = k;
    }

    // Row structure: neighbor unknown slots, degree, fixed-value contribution.
    let mut nbrs = vec![[usize::MAX; 4]; n];
    let mut degree = vec![0.0f64; n];
    let mut rhs = vec![0.0f64; n];
    for (k, &c) in unknowns.iter().enumerate() {
        let mut m = 0;
        for nb in domain.neighbors(c) {
            if domain.class(nb) == CellClass::Obstacle {
                continue;
            }
            degree[k] += 1.0;
            if slot[nb] != usize::MAX {
                nbrs[k][m] = slot[nb];
                m += 1;
            } else {
                rhs[k] += values[nb];
            }
        }
    }

    let apply = |x: &[f64], out: &mut [f64]| {
        for k in 0..n {
            let mut acc = degree[k] * x[k];
            for &s in &nbrs[k] {
                if s == usize::MAX {
                    break;
                }
                acc -= x[s];
            }
            out[k] = acc;
        }
    };

    let mut x = vec![0.0f64; n];
    if let Some(w) = warm {
        for (k, &c) in unknowns.iter().enumerate() {
            x[k] = w[c];
        }
    }

    let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        // No forcing reaches the unknowns; the minimizer is identically zero.
        for (_, &c) in unknowns.iter().enumerate() {
            values[c] = 0.0;
        }
        return Ok(Profile { values, mask: mask.clone(), forcing, residual: 0.0 });
    }

    let mut r = vec![0.0f64; n];
    let mut ap = vec![0.0f64; n];
    apply(&x, &mut r);
    for k in 0..n {
        r[k] = rhs[k] - r[k];
    }
    // Jacobi-preconditioned CG on the SPD masked Laplacian.
    let mut z: Vec<f64> = (0..n).map(|k| r[k] / degree[k]).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = 50 * n;
    let mut iterations = 0;
    loop {
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= SOLVER_TOL * norm_b {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::SolverDiverged { residual: rnorm / norm_b, iterations });
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        for k in 0..n {
            z[k] = r[k] / degree[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        rz = rz_new;
        iterations += 1;
    }

    // Recompute the true residual once for the report.
    apply(&x, &mut ap);
    let true_res = (0..n)
        .map(|k| (rhs[k] - ap[k]).powi(2))
        .sum::<f64>()
        .sqrt()
        / norm_b;

    for (k, &c) in unknowns.iter().enumerate() {
        values[c] = x[k];
    }
    Ok(Profile { values, mask: mask.clone(), forcing, residual: true_res })
}

/// Edge-sum Dirichlet energy Σ (u_i − u_j)² h^{d−2} over edges with both
/// endpoints outside the obstacle, each unordered edge once.
pub fn dirichlet_energy(domain: &Domain, values: &[f64]) -> f64 {
    let scale = domain.h.powi(domain.dim as i32 - 2);
    let mut acc = 0.0;
    for j in 0..domain.ny {
        for i in 0..domain.nx {
            let c = domain.index(i, j);
            if domain.class(c) == CellClass::Obstacle {
                continue;
            }
            if i + 1 < domain.nx && domain.class(c + 1) != CellClass::Obstacle {
                let d = values[c] - values[c + 1];
                acc += d * d;
            }
            if domain.dim == 2 && j + 1 < domain.ny {
                let below = c + domain.nx;
                if domain.class(below) != CellClass::Obstacle {
                    let d = values[c] - values[below];
                    acc += d * d;
                }
            }
        }
    }
    acc * scale
}

/// Evaluates D, |Ω|, J = D + |Ω| and P = D/F for a solved profile.
pub fn energy_report(profile: &Profile, domain: &Domain) -> Result<EnergyReport> {
    if !(profile.forcing > 0.0) {
        return Err(Error::InvalidParams("pressure undefined for F <= 0".into()));
    }
    let dirichlet = dirichlet_energy(domain, &profile.values);
    let volume = crate::geometry::measure(&profile.mask, domain);
    Ok(EnergyReport {
        dirichlet,
        volume,
        j_energy: dirichlet + volume,
        pressure: dirichlet / profile.forcing,
    })
}

/// Wet cells with a dry non-obstacle neighbor, ascending.
pub fn free_boundary_cells(domain: &Domain, mask: &Mask) -> Vec<usize> {
    mask.iter()
        .filter(|&c| {
            domain
                .neighbors(c)
                .any(|nb| !mask.contains(nb) && domain.class(nb) != CellClass::Obstacle)
        })
        .collect()
}

/// Gradient-magnitude estimate at every free boundary cell, row-major.
///
/// Per axis: a one-sided difference anchored at the dry neighbor (second
/// order through the two wet cells behind it where available, first order
/// otherwise), a centered difference where both neighbors are wet. The
/// sample is the Euclidean norm of the per-axis components, so staircase
/// cells whose normal is diagonal are measured at full magnitude rather
/// than by their largest axis projection.
pub fn boundary_slope_samples(domain: &Domain, profile: &Profile) -> Vec<(usize, f64)> {
    let mask = &profile.mask;
    let u = &profile.values;
    let h = domain.h;
    let mut out = Vec::new();
    for c in free_boundary_cells(domain, mask) {
        let (i, j) = domain.coords(c);
        let mut sq = 0.0;
        let axes: &[(isize, usize)] =
            if domain.dim == 1 { &[(1, usize::MAX)] } else { &[(1, usize::MAX), (0, domain.nx)] };
        for &(is_x, stride) in axes {
            let (minus, plus) = if is_x == 1 {
                (
                    if i > 0 { Some(c - 1) } else { None },
                    if i + 1 < domain.nx { Some(c + 1) } else { None },
                )
            } else {
                (
                    if j > 0 { Some(c - stride) } else { None },
                    if j + 1 < domain.ny { Some(c + stride) } else { None },
                )
            };
            let st = |cell: Option<usize>| match cell {
                None => NeighborState::Obstacle,
                Some(nb) => {
                    if domain.class(nb) == CellClass::Obstacle {
                        NeighborState::Obstacle
                    } else if mask.contains(nb) {
                        NeighborState::Wet(nb)
                    } else {
                        NeighborState::Dry
                    }
                }
            };
            let g = match (st(minus), st(plus)) {
                (NeighborState::Wet(m), NeighborState::Dry) => one_sided(u, c, m, mask, h),
                (NeighborState::Dry, NeighborState::Wet(p)) => one_sided(u, c, p, mask, h),
                (NeighborState::Dry, NeighborState::Dry) => u[c] / h,
                (NeighborState::Obstacle, NeighborState::Dry)
                | (NeighborState::Dry, NeighborState::Obstacle) => u[c] / h,
                (NeighborState::Wet(m), NeighborState::Wet(p)) => (u[p] - u[m]) / (2.0 * h),
                (NeighborState::Obstacle, NeighborState::Wet(p))
                | (NeighborState::Wet(p), NeighborState::Obstacle) => (u[p] - u[c]) / h,
                (NeighborState::Obstacle, NeighborState::Obstacle) => 0.0,
            };
            sq += g * g;
        }
        out.push((c, sq.sqrt()));
    }
    out
}

enum NeighborState {
    Wet(usize),
    Dry,
    Obstacle,
}

/// One-sided derivative magnitude at the interface beyond `c`, looking back
/// through `behind`: (4u₀ − u₁)/2h using the known zero on the dry side,
/// exact for linear profiles; falls back to u₀/h when no second wet cell
/// is available or the quadratic fit turns negative.
fn one_sided(u: &[f64], c: usize, behind: usize, mask: &Mask, h: f64) -> f64 {
    let step = behind as isize - c as isize;
    let behind2 = behind as isize + step;
    if behind2 >= 0 && (behind2 as usize) < u.len() && mask.contains(behind2 as usize) {
        let g = (4.0 * u[c] - u[behind]) / (2.0 * h);
        if g >= 0.0 {
            return g;
        }
    }
    u[c] / h
}

/// Result of the discrete energy-difference inequality check.
#[derive(Debug, Clone, Copy)]
pub struct EnergyDifference {
    /// D(v₀) − D(v₁).
    pub lhs: f64,
    /// Σ (v₁ gradient)² over edges with both endpoints outside Ω(v₀).
    pub rhs: f64,
    pub ok: bool,
}

/// Checks D(v₀) − D(v₁) ≥ Σ_{edges off Ω₀} |∇v₁|² for an ordered pair
/// v₀ ≤ v₁ with equal forcing, v₁ discrete-harmonic on its mask.
pub fn energy_difference_check(
    v0: &Profile,
    v1: &Profile,
    domain: &Domain,
) -> Result<EnergyDifference> {
    if v0.values.len() != domain.num_cells() || v1.values.len() != domain.num_cells() {
        return Err(Error::MismatchedDomains {
            left_cells: v0.values.len(),
            right_cells: domain.num_cells(),
        });
    }
    if v0.forcing != v1.forcing {
        return Err(Error::InvalidParams(format!(
            "profiles must share the forcing value, got {} and {}",
            v0.forcing, v1.forcing
        )));
    }
    if v1.residual > 1e-6 {
        return Err(Error::InvalidParams(format!(
            "v1 is not harmonic on its mask (residual {})",
            v1.residual
        )));
    }
    let slack = 1e-12 * v0.forcing.max(1.0);
    for c in 0..domain.num_cells() {
        if v0.values[c] > v1.values[c] + slack {
            return Err(Error::OrderingViolated { cell: c, v0: v0.values[c], v1: v1.values[c] });
        }
    }
    let lhs = dirichlet_energy(domain, &v0.values) - dirichlet_energy(domain, &v1.values);
    let scale = domain.h.powi(domain.dim as i32 - 2);
    let mut rhs = 0.0;
    for j in 0..domain.ny {
        for i in 0..domain.nx {
            let c = domain.index(i, j);
            if domain.class(c) == CellClass::Obstacle || v0.mask.contains(c) {
                continue;
            }
            let mut edge = |nb: usize| {
                if domain.class(nb) != CellClass::Obstacle && !v0.mask.contains(nb) {
                    let d = v1.values[c] - v1.values[nb];
                    rhs += d * d;
                }
            };
            if i + 1 < domain.nx {
                edge(c + 1);
            }
            if domain.dim == 2 && j + 1 < domain.ny {
                edge(c + domain.nx);
            }
        }
    }
    rhs *= scale;
    let tol = ENERGY_CMP_TOL * v0.forcing * v0.forcing;
    Ok(EnergyDifference { lhs, rhs, ok: lhs >= rhs - tol })
}

/// Slope proxy at the free boundary: max of u/h over free boundary cells.
/// Estimates the boundary Lipschitz constant of the state.
pub fn boundary_lipschitz_proxy(domain: &Domain, profile: &Profile) -> f64 {
    free_boundary_cells(domain, &profile.mask)
        .iter()
        .map(|&c| profile.values[c] / domain.h)
        .fold(0.0, f64::max)
}

/// Nondegeneracy proxy: min over free boundary cells of sup_{B_r} u / r,
/// with r = `r_cells`·h over cell centers.
pub fn nondegeneracy_proxy(domain: &Domain, profile: &Profile, r_cells: usize) -> f64 {
    let fb = free_boundary_cells(domain, &profile.mask);
    if fb.is_empty() {
        return 0.0;
    }
    let r = r_cells as f64 * domain.h;
    let rc = r_cells as isize;
    let mut worst = f64::INFINITY;
    for &c in &fb {
        let (ci, cj) = domain.coords(c);
        let mut sup = 0.0f64;
        for dj in -rc..=rc {
            for di in -rc..=rc {
                if di * di + dj * dj > rc * rc {
                    continue;
                }
                let (i, j) = (ci as isize + di, cj as isize + dj);
                if i < 0 || j < 0 || i >= domain.nx as isize || j >= domain.ny as isize {
                    continue;
                }
                sup = sup.max(profile.values[domain.index(i as usize, j as usize)]);
            }
        }
        worst = worst.min(sup / r);
    }
    worst
}

/// Writes the profile as flat little-endian f64s behind a 32-byte header
/// ("PDRP", version, dims, h, F), row-major.
pub fn write_profile_binary(path: &Path, profile: &Profile, domain: &Domain) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(b"PDRP")?;
    f.write_all(&1u32.to_le_bytes())?;
    f.write_all(&(domain.nx as u32).to_le_bytes())?;
    f.write_all(&(domain.ny as u32).to_le_bytes())?;
    f.write_all(&domain.h.to_le_bytes())?;
    f.write_all(&profile.forcing.to_le_bytes())?;
    for v in &profile.values {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a profile snapshot written by [`write_profile_binary`].
pub fn read_profile_binary(path: &Path) -> Result<(usize, usize, f64, f64, Vec<f64>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != b"PDRP" {
        return Err(Error::InvalidParams("bad profile snapshot magic".into()));
    }
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != 1 {
        return Err(Error::InvalidParams(format!("unknown profile snapshot version {version}")));
    }
    f.read_exact(&mut b4)?;
    let nx = u32::from_le_bytes(b4) as usize;
    f.read_exact(&mut b4)?;
    let ny = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b8)?;
    let h = f64::from_le_bytes(b8);
    f.read_exact(&mut b8)?;
    let forcing = f64::from_le_bytes(b8);
    let mut values = vec![0.0f64; nx * ny];
    for v in values.iter_mut() {
        f.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    Ok((nx, ny, h, forcing, values))
}

/// CSV export (x, y, u), one row per non-obstacle cell.
pub fn write_profile_csv(path: &Path, profile: &Profile, domain: &Domain) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "x,y,u")?;
    for c in 0..domain.num_cells() {
        if domain.class(c) == CellClass::Obstacle {
            continue;
        }
        let (x, y) = domain.center(c);
        writeln!(f, "{x},{y},{}", profile.values[c])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Disk;

    fn line_domain(n: usize, h: f64) -> Domain {
        Domain::line(n, h).unwrap()
    }

    /// Annulus domain: obstacle disk of radius 1 centered in the box.
    fn annulus(n: usize, h: f64) -> Domain {
        let c = (n / 2) as f64 * h;
        Domain::with_disk_obstacles(n, n, h, &[Disk { cx: c, cy: c, r: 1.0 }]).unwrap()
    }

    fn annulus_mask(domain: &Domain, r: f64) -> Mask {
        let c = (domain.nx / 2) as f64 * domain.h;
        domain.radial_mask(&[(c, c)], r)
    }

    #[test]
    fn linear_profile_in_1d() {
        let n = 200;
        let h = 0.01;
        let d = line_domain(n, h);
        // Wet up to x = R; cell 1 carries F.
        let r_cells = 100;
        let cells: Vec<usize> = (1..=r_cells).collect();
        let m = Mask::from_cells(n, &cells);
        let p = solve_harmonic(&d, &m, 1.0).unwrap();
        // Effective support: linear from cell 1 down to zero at cell r_cells+1.
        let span = r_cells as f64; // edges from cell 1 to cell r_cells+1
        for k in 1..=r_cells {
            let expected = 1.0 - (k - 1) as f64 / span;
            assert!(
                (p.values[k] - expected).abs() < 1e-8,
                "cell {k}: {} vs {expected}",
                p.values[k]
            );
        }
        assert_eq!(p.values[r_cells + 1], 0.0);
    }

    #[test]
    fn solve_is_deterministic_bitwise() {
        let d = annulus(48, 0.125);
        let m = annulus_mask(&d, 2.0);
        let p1 = solve_harmonic(&d, &m, 1.5).unwrap();
        let p2 = solve_harmonic(&d, &m, 1.5).unwrap();
        assert_eq!(p1.values, p2.values);
    }

    #[test]
    fn maximum_principle() {
        let d = annulus(48, 0.125);
        let m = annulus_mask(&d, 2.2);
        let p = solve_harmonic(&d, &m, 2.0).unwrap();
        for (c, &v) in p.values.iter().enumerate() {
            assert!(v >= -1e-12, "negative value {v} at cell {c}");
            assert!(v <= 2.0 + 1e-12, "value {v} above forcing at cell {c}");
        }
    }

    #[test]
    fn annulus_profile_matches_log_solution() {
        // u(r) = F·(1 − ln r / ln R) with F = 1, R = e: u(2) = 1 − ln 2.
        let h = 1.0 / 16.0;
        let d = annulus(112, h);
        let m = annulus_mask(&d, std::f64::consts::E);
        let p = solve_harmonic(&d, &m, 1.0).unwrap();
        let c = (d.nx / 2) as f64 * h;
        // Probe the cell nearest (c + 2, c).
        let i = ((c + 2.0) / h - 0.5).round() as usize;
        let j = (c / h - 0.5).round() as usize;
        let cell = d.index(i, j);
        let (x, y) = d.center(cell);
        let r = ((x - c).powi(2) + (y - c).powi(2)).sqrt();
        let expected = 1.0 - r.ln();
        let got = p.values[cell];
        assert!(
            (got - expected).abs() < 4.0 * h,
            "u({r:.4}) = {got:.4}, expected {expected:.4}"
        );
    }

    #[test]
    fn bare_ring_energy_is_forced() {
        let d = annulus(32, 0.25);
        let m = d.inner_ring_mask();
        let f = 1.5;
        let p = solve_harmonic(&d, &m, f).unwrap();
        // Every edge from a ring cell to a dry non-obstacle cell carries F².
        let mut edges = 0usize;
        for &b in d.inner_boundary() {
            for nb in d.neighbors(b) {
                if d.class(nb) != CellClass::Obstacle && !m.contains(nb) {
                    edges += 1;
                }
            }
        }
        // Ring cells may also neighbor each other; those edges carry zero.
        let dd = dirichlet_energy(&d, &p.values);
        assert!(
            (dd - f * f * edges as f64).abs() < 1e-9,
            "D = {dd}, expected {}",
            f * f * edges as f64
        );
        for c in 0..d.num_cells() {
            if !m.contains(c) {
                assert_eq!(p.values[c], 0.0);
            }
        }
    }

    #[test]
    fn radial_energy_report() {
        let h = 1.0 / 16.0;
        let d = annulus(112, h);
        let m = annulus_mask(&d, std::f64::consts::E);
        let p = solve_harmonic(&d, &m, 1.0).unwrap();
        let rep = energy_report(&p, &d).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!(
            (rep.dirichlet - two_pi).abs() < 0.6,
            "D = {} vs 2π = {two_pi}",
            rep.dirichlet
        );
        let area = std::f64::consts::PI * (std::f64::consts::E.powi(2) - 1.0);
        assert!(
            (rep.volume - area).abs() < 0.05 * area,
            "volume {} vs {area}",
            rep.volume
        );
        assert_eq!(rep.j_energy, rep.dirichlet + rep.volume);
        assert_eq!(rep.pressure * p.forcing, rep.dirichlet);
    }

    #[test]
    fn slope_samples_1d_linear() {
        let n = 400;
        let h = 0.005;
        let d = line_domain(n, h);
        let r_cells = 200;
        let m = Mask::from_cells(n, &(1..=r_cells).collect::<Vec<_>>());
        let p = solve_harmonic(&d, &m, 1.0).unwrap();
        let samples = boundary_slope_samples(&d, &p);
        assert_eq!(samples.len(), 1);
        let span = r_cells as f64 * h;
        assert!(
            (samples[0].1 - 1.0 / span).abs() < 1e-6,
            "slope {} vs {}",
            samples[0].1,
            1.0 / span
        );
    }

    #[test]
    fn slope_samples_radial_median_near_lambda() {
        // u = e·(1 − ln r), support R = e, slope at the boundary = 1.
        let h = std::f64::consts::E / 40.0;
        let d = annulus(128, h);
        let m = annulus_mask(&d, std::f64::consts::E);
        let p = solve_harmonic(&d, &m, std::f64::consts::E).unwrap();
        let mut slopes: Vec<f64> = boundary_slope_samples(&d, &p).iter().map(|s| s.1).collect();
        slopes.sort_by(f64::total_cmp);
        let median = slopes[slopes.len() / 2];
        assert!(
            (median - 1.0).abs() < 0.1,
            "median slope {median} not within 10% of 1"
        );
    }

    #[test]
    fn slope_zero_on_flat_interior() {
        let d = annulus(32, 0.25);
        let mut m = annulus_mask(&d, 1.5);
        // Append a far-away flat zero-height blob.
        let far = d.index(27, 27);
        m.insert(far);
        let mut values = vec![0.0; d.num_cells()];
        for &b in d.inner_boundary() {
            values[b] = 1.0;
        }
        let p = Profile { values, mask: m.clone(), forcing: 1.0, residual: 0.0 };
        let samples = boundary_slope_samples(&d, &p);
        let s_far = samples.iter().find(|(c, _)| *c == far).unwrap();
        assert_eq!(s_far.1, 0.0);
    }

    #[test]
    fn energy_difference_trivial_and_1d() {
        let n = 400;
        let h = 0.005;
        let d = line_domain(n, h);
        let big = Mask::from_cells(n, &(1..=300).collect::<Vec<_>>());
        let v1 = solve_harmonic(&d, &big, 1.0).unwrap();
        let same = energy_difference_check(&v1, &v1, &d).unwrap();
        assert!(same.lhs.abs() < 1e-12 && same.rhs.abs() < 1e-12 && same.ok);

        let small = Mask::from_cells(n, &(1..=250).collect::<Vec<_>>());
        let v0 = solve_harmonic(&d, &small, 1.0).unwrap();
        let diff = energy_difference_check(&v0, &v1, &d).unwrap();
        // Closed forms: D = F²/R_eff with R_eff = (edge count)·h.
        let d0 = 1.0 / (250.0 * h);
        let d1 = 1.0 / (300.0 * h);
        assert!((diff.lhs - (d0 - d1)).abs() < 1e-8, "lhs {} vs {}", diff.lhs, d0 - d1);
        assert!(diff.ok);
        assert!(diff.lhs >= diff.rhs);
    }

    #[test]
    fn energy_difference_radial_pair() {
        let h = 1.0 / 12.0;
        let d = annulus(96, h);
        let inner = annulus_mask(&d, 2.0);
        let outer = annulus_mask(&d, 2.6);
        let v1 = solve_harmonic(&d, &outer, 1.0).unwrap();
        let v0 = solve_harmonic(&d, &inner, 1.0).unwrap();
        let res = energy_difference_check(&v0, &v1, &d).unwrap();
        assert!(res.ok, "lhs {} rhs {}", res.lhs, res.rhs);
        assert!(res.lhs > 0.0);
    }

    #[test]
    fn energy_difference_rejects_unordered() {
        let n = 100;
        let d = line_domain(n, 0.01);
        let a = Mask::from_cells(n, &(1..=50).collect::<Vec<_>>());
        let b = Mask::from_cells(n, &(1..=60).collect::<Vec<_>>());
        let va = solve_harmonic(&d, &a, 1.0).unwrap();
        let vb = solve_harmonic(&d, &b, 1.0).unwrap();
        // va has the smaller support, so vb ≤ va must fail somewhere.
        match energy_difference_check(&vb, &va, &d) {
            Err(Error::OrderingViolated { cell, .. }) => assert!(cell > 0),
            other => panic!("expected ordering violation, got {other:?}"),
        }
    }

    #[test]
    fn dirichlet_energy_decreases_as_mask_grows() {
        let h = 1.0 / 12.0;
        let d = annulus(96, h);
        let small = annulus_mask(&d, 1.8);
        let big = annulus_mask(&d, 2.4);
        let ds = energy_report(&solve_harmonic(&d, &small, 1.0).unwrap(), &d).unwrap().dirichlet;
        let db = energy_report(&solve_harmonic(&d, &big, 1.0).unwrap(), &d).unwrap().dirichlet;
        assert!(ds >= db - 1e-8, "D(small) = {ds} < D(big) = {db}");
    }

    #[test]
    fn refinement_convergence_is_first_order() {
        let err_at = |n: usize, h: f64| -> f64 {
            let d = annulus(n, h);
            let m = annulus_mask(&d, std::f64::consts::E);
            let p = solve_harmonic(&d, &m, 1.0).unwrap();
            let c = (d.nx / 2) as f64 * h;
            let mut worst = 0.0f64;
            for cell in m.iter() {
                let (x, y) = d.center(cell);
                let r = ((x - c).powi(2) + (y - c).powi(2)).sqrt();
                if r < std::f64::consts::E - 2.0 * h && r > 1.0 + 2.0 * h {
                    worst = worst.max((p.values[cell] - (1.0 - r.ln())).abs());
                }
            }
            worst
        };
        let coarse = err_at(80, 1.0 / 12.0);
        let fine = err_at(160, 1.0 / 24.0);
        assert!(
            fine <= 0.75 * coarse,
            "refinement did not reduce error: {coarse} -> {fine}"
        );
    }

    #[test]
    fn profile_binary_roundtrip() {
        let d = annulus(32, 0.25);
        let m = annulus_mask(&d, 1.6);
        let p = solve_harmonic(&d, &m, 1.25).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("state.pdrp");
        write_profile_binary(&path, &p, &d).unwrap();
        let (nx, ny, h, forcing, values) = read_profile_binary(&path).unwrap();
        assert_eq!((nx, ny), (32, 32));
        assert_eq!(h, 0.25);
        assert_eq!(forcing, 1.25);
        assert_eq!(values, p.values);
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 32 + 8 * d.num_cells() as u64);
    }
}
