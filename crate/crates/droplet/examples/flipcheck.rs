//! Compares exact global flip energies against the stepping threshold on a
//! rasterized disk, to separate window-evaluation bias from genuine lattice
//! pinning.

use droplet::field::{dirichlet_energy, free_boundary_cells, solve_harmonic};
use droplet::geometry::{measure, Disk, Domain, HysteresisParams, Mask};
use droplet::minmove::step;

fn main() {
    let h = 1.0 / 12.0;
    let n = 128;
    let c = (n / 2) as f64 * h;
    let domain = Domain::with_disk_obstacles(n, n, h, &[Disk { cx: c, cy: c, r: 1.0 }]).unwrap();
    let params = HysteresisParams::new(0.2, 0.2).unwrap();

    // Relax a rasterized branch state at F, then raise F and measure the
    // exact ΔE of every grow candidate.
    let f0 = 1.0;
    let r0 = 1.70704828963087;
    let init = domain.radial_mask(&[(c, c)], r0);
    let settled = step(&init, f0, &domain, &params).unwrap();

    for f in [1.0, 1.05, 1.1, 1.2, 1.3] {
        let base = solve_harmonic(&domain, &settled.mask, f).unwrap();
        let d_base = dirichlet_energy(&domain, &base.values);
        let vol = domain.cell_volume();
        let mut best = f64::INFINITY;
        let mut gains: Vec<f64> = Vec::new();
        for cell in 0..domain.num_cells() {
            if settled.mask.contains(cell) || !domain.is_wettable(cell) {
                continue;
            }
            if !domain.neighbors(cell).any(|nb| settled.mask.contains(nb)) {
                continue;
            }
            let mut m = settled.mask.clone();
            m.insert(cell);
            let p = solve_harmonic(&domain, &m, f).unwrap();
            let dd = dirichlet_energy(&domain, &p.values) - d_base;
            let de = dd + vol + params.mu_plus * vol;
            // Release in slope² units: −ΔD/h² vs threshold 1+μ₊.
            gains.push(-dd / vol);
            best = best.min(de);
        }
        gains.sort_by(f64::total_cmp);
        let n_g = gains.len();
        println!(
            "F={f:.2}: candidates {n_g}, release/h² min {:.3} median {:.3} max {:.3}; best ΔE/h² {:+.4} (accept iff < -(1+μ₊)=-1.2 .. i.e. release > 1.2)",
            gains[0],
            gains[n_g / 2],
            gains[n_g - 1],
            best / vol
        );
    }

    // Branch check: what the mask looks like after stepping at F=1.3.
    let after = step(&settled.mask, 1.3, &domain, &params).unwrap();
    let vol_after = measure(&after.mask, &domain);
    println!(
        "step to F=1.3: vol {:.4} (branch wants {:.4}), flips {}",
        vol_after,
        std::f64::consts::PI
            * ((droplet::radial::zeta(1.3 / 1.2f64.sqrt()).unwrap()).powi(2) - 1.0),
        after.flips
    );
    let fb = free_boundary_cells(&domain, &after.mask);
    println!("fb cells: {}", fb.len());
}
