//! Discrete domains, wet-region masks, and the dissipation distance.
//!
//! The computational region is a box of square cells with an obstacle
//! (the complement of the physical domain U) rasterized into it. A state's
//! wet region Ω is the set of cells where the height profile is positive.
//! Moving the wet region from Ω₀ to Ω₁ dissipates
//!
//!   Diss(Ω₀, Ω₁) = μ₊ |Ω₁ ∖ Ω₀| + μ₋ |Ω₀ ∖ Ω₁|,
//!
//! advancing contact line costing μ₊ per unit area and receding μ₋.
//! The distance satisfies the sharp triangle identity
//!
//!   Diss(A,B) + Diss(B,C) − Diss(A,C) = (μ₋+μ₊)·(|B ∖ (A∪C)| + |(A∩C) ∖ B|),
//!
//! which is exact in integer cell counts; [`triangle_defect`] exposes both
//! sides for certificate checks.
//!
//! Rasterization is cell-centered: a continuum set is represented by the
//! cells whose centers it contains. Adjacency is 4-neighbor in 2d and
//! 2-neighbor in 1d, matching the Laplacian stencil of the field module.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Friction coefficients of the contact line: μ₊ > 0 for advancing,
/// μ₋ ∈ (0,1) for receding.
///
/// μ₋ < 1 matters: it makes shedding a zero-height wet cell strictly
/// favorable, so phantom wet regions disconnected from the forcing cannot
/// survive a minimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisParams {
    pub mu_plus: f64,
    pub mu_minus: f64,
}

impl HysteresisParams {
    pub fn new(mu_plus: f64, mu_minus: f64) -> Result<Self> {
        if !(mu_plus > 0.0) || !mu_plus.is_finite() {
            return Err(Error::InvalidParams(format!("mu_plus must be > 0, got {mu_plus}")));
        }
        if !(mu_minus > 0.0 && mu_minus < 1.0) {
            return Err(Error::InvalidParams(format!(
                "mu_minus must lie in (0,1), got {mu_minus}"
            )));
        }
        Ok(Self { mu_plus, mu_minus })
    }

    /// Admissible squared-slope interval `[1−μ₋, 1+μ₊]` on a pinned free boundary.
    pub fn pinning_interval(&self) -> (f64, f64) {
        (1.0 - self.mu_minus, 1.0 + self.mu_plus)
    }
}

/// Classification of a grid cell. Every cell belongs to exactly one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    /// Complement of the physical domain; the forcing acts from here.
    Obstacle,
    /// Non-obstacle cell with an obstacle neighbor; carries the Dirichlet value F.
    InnerBoundary,
    /// Cells on the edge of the truncation box.
    OuterBoundary,
    Interior,
}

/// Disk used to rasterize an obstacle in 2d. Coordinates are physical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// A rectangular grid of square cells of width `h` with a classified obstacle.
///
/// Cell `(i, j)` has center `((i+0.5)·h, (j+0.5)·h)` and linear index
/// `j·nx + i` (row-major). In 1d, `ny == 1` and only the x axis is used.
#[derive(Debug, Clone)]
pub struct Domain {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    class: Vec<CellClass>,
    inner_boundary: Vec<usize>,
    outer_adjacent: Vec<bool>,
}

impl Domain {
    /// 1d half-line: cell 0 is the obstacle, cell 1 the forcing boundary,
    /// the last cell the truncation.
    pub fn line(n: usize, h: f64) -> Result<Domain> {
        if n < 4 {
            return Err(Error::InvalidParams(format!("1d domain needs >= 4 cells, got {n}")));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParams(format!("cell width must be > 0, got {h}")));
        }
        let mut class = vec![CellClass::Interior; n];
        class[0] = CellClass::Obstacle;
        class[1] = CellClass::InnerBoundary;
        class[n - 1] = CellClass::OuterBoundary;
        Ok(Self::finish(1, n, 1, h, class))
    }

    /// 2d box with one or more disk obstacles. Every disk must sit strictly
    /// inside the box (no obstacle cell on or adjacent to the box edge).
    pub fn with_disk_obstacles(nx: usize, ny: usize, h: f64, disks: &[Disk]) -> Result<Domain> {
        if nx < 5 || ny < 5 {
            return Err(Error::InvalidParams(format!("2d domain needs >= 5x5 cells, got {nx}x{ny}")));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParams(format!("cell width must be > 0, got {h}")));
        }
        if disks.is_empty() {
            return Err(Error::InvalidParams("at least one obstacle disk required".into()));
        }
        let mut class = vec![CellClass::Interior; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let idx = j * nx + i;
                let x = (i as f64 + 0.5) * h;
                let y = (j as f64 + 0.5) * h;
                let in_obstacle = disks
                    .iter()
                    .any(|d| (x - d.cx).powi(2) + (y - d.cy).powi(2) <= d.r * d.r);
                if in_obstacle {
                    class[idx] = CellClass::Obstacle;
                } else if i == 0 || i == nx - 1 || j == 0 || j == ny - 1 {
                    class[idx] = CellClass::OuterBoundary;
                }
            }
        }
        // Reject obstacles reaching the box edge: the inner ring must be
        // interior-adjacent on all sides.
        for j in 0..ny {
            for i in 0..nx {
                let idx = j * nx + i;
                if class[idx] != CellClass::Obstacle {
                    continue;
                }
                if i == 0 || i == nx - 1 || j == 0 || j == ny - 1 {
                    return Err(Error::InvalidParams(
                        "obstacle touches the box edge; enlarge the domain".into(),
                    ));
                }
                for nb in [idx - 1, idx + 1, idx - nx, idx + nx] {
                    if class[nb] == CellClass::OuterBoundary {
                        return Err(Error::InvalidParams(
                            "obstacle adjacent to the box edge; enlarge the domain".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self::finish(2, nx, ny, h, class))
    }

    fn finish(dim: usize, nx: usize, ny: usize, h: f64, mut class: Vec<CellClass>) -> Domain {
        let n = nx * ny;
        // Inner boundary = non-obstacle cells with an obstacle neighbor.
        for idx in 0..n {
            if class[idx] == CellClass::Obstacle {
                continue;
            }
            let (i, j) = (idx % nx, idx / nx);
            let mut touches = false;
            if i > 0 && class[idx - 1] == CellClass::Obstacle {
                touches = true;
            }
            if i + 1 < nx && class[idx + 1] == CellClass::Obstacle {
                touches = true;
            }
            if dim == 2 {
                if j > 0 && class[idx - nx] == CellClass::Obstacle {
                    touches = true;
                }
                if j + 1 < ny && class[idx + nx] == CellClass::Obstacle {
                    touches = true;
                }
            }
            if touches {
                class[idx] = CellClass::InnerBoundary;
            }
        }
        let inner_boundary: Vec<usize> = (0..n)
            .filter(|&i| class[i] == CellClass::InnerBoundary)
            .collect();
        let mut outer_adjacent = vec![false; n];
        for idx in 0..n {
            if class[idx] == CellClass::OuterBoundary {
                continue;
            }
            let (i, j) = (idx % nx, idx / nx);
            let mut adj = false;
            if i > 0 && class[idx - 1] == CellClass::OuterBoundary {
                adj = true;
            }
            if i + 1 < nx && class[idx + 1] == CellClass::OuterBoundary {
                adj = true;
            }
            if dim == 2 {
                if j > 0 && class[idx - nx] == CellClass::OuterBoundary {
                    adj = true;
                }
                if j + 1 < ny && class[idx + nx] == CellClass::OuterBoundary {
                    adj = true;
                }
            }
            outer_adjacent[idx] = adj;
        }
        Domain { dim, nx, ny, h, class, inner_boundary, outer_adjacent }
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn class(&self, cell: usize) -> CellClass {
        self.class[cell]
    }

    /// Cells of the inner boundary ring, ascending.
    pub fn inner_boundary(&self) -> &[usize] {
        &self.inner_boundary
    }

    /// True for non-outer cells 4-adjacent to the outer boundary.
    pub fn is_outer_adjacent(&self, cell: usize) -> bool {
        self.outer_adjacent[cell]
    }

    /// True for cells a mask may contain (interior or inner boundary).
    pub fn is_wettable(&self, cell: usize) -> bool {
        matches!(self.class[cell], CellClass::Interior | CellClass::InnerBoundary)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    /// Physical center of a cell.
    pub fn center(&self, cell: usize) -> (f64, f64) {
        let (i, j) = self.coords(cell);
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    /// Cell volume h^d.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Face area h^{d−1}.
    pub fn face_area(&self) -> f64 {
        self.h.powi(self.dim as i32 - 1)
    }

    /// 4-neighbors (2-neighbors in 1d) of a cell, within the grid.
    pub fn neighbors(&self, cell: usize) -> Neighbors {
        let (i, j) = self.coords(cell);
        let mut out = [usize::MAX; 4];
        let mut n = 0;
        if i > 0 {
            out[n] = cell - 1;
            n += 1;
        }
        if i + 1 < self.nx {
            out[n] = cell + 1;
            n += 1;
        }
        if self.dim == 2 {
            if j > 0 {
                out[n] = cell - self.nx;
                n += 1;
            }
            if j + 1 < self.ny {
                out[n] = cell + self.nx;
                n += 1;
            }
        }
        Neighbors { cells: out, len: n, pos: 0 }
    }

    /// Checks the mask invariants: right grid, contains the inner ring,
    /// avoids obstacle and outer boundary.
    pub fn validate_mask(&self, mask: &Mask) -> Result<()> {
        if mask.num_bits() != self.num_cells() {
            return Err(Error::MismatchedDomains {
                left_cells: mask.num_bits(),
                right_cells: self.num_cells(),
            });
        }
        for &b in &self.inner_boundary {
            if !mask.contains(b) {
                return Err(Error::InvalidMask(format!(
                    "inner boundary cell {b} is dry; the wet region must contain the forcing ring"
                )));
            }
        }
        for cell in mask.iter() {
            match self.class[cell] {
                CellClass::Obstacle => {
                    return Err(Error::InvalidMask(format!("cell {cell} lies in the obstacle")))
                }
                CellClass::OuterBoundary => {
                    return Err(Error::InvalidMask(format!(
                        "cell {cell} lies on the truncation box"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Mask holding exactly the inner boundary ring.
    pub fn inner_ring_mask(&self) -> Mask {
        let mut m = Mask::empty(self.num_cells());
        for &b in &self.inner_boundary {
            m.insert(b);
        }
        m
    }

    /// Rasterizes "within distance r of any obstacle-disk center" (2d) or
    /// "x < r" (1d), intersected with the wettable cells, plus the inner ring.
    pub fn radial_mask(&self, centers: &[(f64, f64)], r: f64) -> Mask {
        let mut m = self.inner_ring_mask();
        for cell in 0..self.num_cells() {
            if !self.is_wettable(cell) {
                continue;
            }
            let (x, y) = self.center(cell);
            let inside = if self.dim == 1 {
                x < r
            } else {
                centers
                    .iter()
                    .any(|&(cx, cy)| (x - cx).powi(2) + (y - cy).powi(2) <= r * r)
            };
            if inside {
                m.insert(cell);
            }
        }
        m
    }
}

/// Iterator over in-grid neighbors.
pub struct Neighbors {
    cells: [usize; 4],
    len: usize,
    pos: usize,
}

impl Iterator for Neighbors {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.pos < self.len {
            let c = self.cells[self.pos];
            self.pos += 1;
            Some(c)
        } else {
            None
        }
    }
}

/// A set of wet cells, stored as a bitset over the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    words: Vec<u64>,
    num_bits: usize,
}

impl Mask {
    pub fn empty(num_bits: usize) -> Mask {
        Mask { words: vec![0; num_bits.div_ceil(64)], num_bits }
    }

    pub fn from_cells(num_bits: usize, cells: &[usize]) -> Mask {
        let mut m = Mask::empty(num_bits);
        for &c in cells {
            m.insert(c);
        }
        m
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn contains(&self, cell: usize) -> bool {
        debug_assert!(cell < self.num_bits);
        self.words[cell / 64] >> (cell % 64) & 1 == 1
    }

    pub fn insert(&mut self, cell: usize) {
        debug_assert!(cell < self.num_bits);
        self.words[cell / 64] |= 1 << (cell % 64);
    }

    pub fn remove(&mut self, cell: usize) {
        debug_assert!(cell < self.num_bits);
        self.words[cell / 64] &= !(1 << (cell % 64));
    }

    pub fn set(&mut self, cell: usize, wet: bool) {
        if wet {
            self.insert(cell)
        } else {
            self.remove(cell)
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Ascending cell indices of the set bits.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let t = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + t)
                }
            })
        })
    }

    pub fn union(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn symmetric_difference(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a ^ b)
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(u64, u64) -> u64) -> Mask {
        assert_eq!(self.num_bits, other.num_bits, "masks on different grids");
        Mask {
            words: self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect(),
            num_bits: self.num_bits,
        }
    }

    /// |self ∖ other| in cells.
    pub fn count_difference(&self, other: &Mask) -> usize {
        assert_eq!(self.num_bits, other.num_bits, "masks on different grids");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(&a, &b)| (a & !b).count_ones() as usize)
            .sum()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        assert_eq!(self.num_bits, other.num_bits, "masks on different grids");
        self.words.iter().zip(&other.words).all(|(&a, &b)| a & !b == 0)
    }

    /// Orders masks by their bit strings read in ascending cell order, with
    /// "dry" before "wet" at the first differing cell.
    pub fn lex_cmp(&self, other: &Mask) -> std::cmp::Ordering {
        assert_eq!(self.num_bits, other.num_bits, "masks on different grids");
        for (a, b) in self.words.iter().zip(&other.words) {
            let diff = a ^ b;
            if diff != 0 {
                let bit = diff.trailing_zeros();
                let a_set = a >> bit & 1 == 1;
                return if a_set {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Less
                };
            }
        }
        std::cmp::Ordering::Equal
    }
}

fn check_same_domain(a: &Mask, b: &Mask, domain: &Domain) -> Result<()> {
    for m in [a, b] {
        if m.num_bits() != domain.num_cells() {
            return Err(Error::MismatchedDomains {
                left_cells: m.num_bits(),
                right_cells: domain.num_cells(),
            });
        }
    }
    Ok(())
}

/// Area |a| = (cell count) × h^d. Exact as an integer count times h^d.
pub fn measure(a: &Mask, domain: &Domain) -> f64 {
    a.count() as f64 * domain.cell_volume()
}

/// Dissipation distance μ₊|b∖a| + μ₋|a∖b|. Zero iff a = b.
pub fn diss(a: &Mask, b: &Mask, params: &HysteresisParams, domain: &Domain) -> Result<f64> {
    check_same_domain(a, b, domain)?;
    let grown = b.count_difference(a) as f64;
    let shed = a.count_difference(b) as f64;
    Ok((params.mu_plus * grown + params.mu_minus * shed) * domain.cell_volume())
}

/// Both sides of the sharp triangle identity, in energies and in the
/// underlying integer cell counts.
///
/// `lhs` and `rhs` are built from the same integer counts scaled by the same
/// factors, so `lhs == rhs` holds bitwise whenever the integer identity holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleDefect {
    /// Diss(a,b) + Diss(b,c) − Diss(a,c).
    pub lhs: f64,
    /// (μ₋+μ₊)·(|b∖(a∪c)| + |(a∩c)∖b|).
    pub rhs: f64,
    /// Integer combination |b∖a| + |c∖b| − |c∖a| (the μ₊ bracket).
    pub lhs_plus_cells: i64,
    /// Integer combination |a∖b| + |b∖c| − |a∖c| (the μ₋ bracket).
    pub lhs_minus_cells: i64,
    /// Integer count |b∖(a∪c)| + |(a∩c)∖b|.
    pub rhs_cells: i64,
}

/// Evaluates the triangle identity on a mask triple.
pub fn triangle_defect(
    a: &Mask,
    b: &Mask,
    c: &Mask,
    params: &HysteresisParams,
    domain: &Domain,
) -> Result<TriangleDefect> {
    check_same_domain(a, b, domain)?;
    check_same_domain(b, c, domain)?;
    let lhs_plus_cells = b.count_difference(a) as i64 + c.count_difference(b) as i64
        - c.count_difference(a) as i64;
    let lhs_minus_cells = a.count_difference(b) as i64 + b.count_difference(c) as i64
        - a.count_difference(c) as i64;
    let rhs_cells = (b.difference(&a.union(c)).count() + a.intersection(c).count_difference(b)) as i64;
    let vol = domain.cell_volume();
    let lhs =
        (params.mu_plus * lhs_plus_cells as f64 + params.mu_minus * lhs_minus_cells as f64) * vol;
    let rhs = (params.mu_plus * rhs_cells as f64 + params.mu_minus * rhs_cells as f64) * vol;
    Ok(TriangleDefect { lhs, rhs, lhs_plus_cells, lhs_minus_cells, rhs_cells })
}

/// Symmetric Hausdorff distance between two nonempty masks, over cell centers.
pub fn hausdorff_distance(a: &Mask, b: &Mask, domain: &Domain) -> Result<f64> {
    check_same_domain(a, b, domain)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMask);
    }
    let da = distance_sq_transform(b, domain);
    let db = distance_sq_transform(a, domain);
    let mut worst: i64 = 0;
    for cell in a.iter() {
        worst = worst.max(da[cell]);
    }
    for cell in b.iter() {
        worst = worst.max(db[cell]);
    }
    Ok((worst as f64).sqrt() * domain.h)
}

/// Exact squared Euclidean distance (in cell units) from every cell to the
/// nearest set cell, via the two-pass lower-envelope transform.
fn distance_sq_transform(seeds: &Mask, domain: &Domain) -> Vec<i64> {
    const INF: i64 = i64::MAX / 4;
    let (nx, ny) = (domain.nx, domain.ny);
    let mut d = vec![INF; nx * ny];
    // Pass 1: per column, distance along y to the nearest seed.
    for i in 0..nx {
        let mut best = INF;
        for j in 0..ny {
            let idx = j * nx + i;
            best = if seeds.contains(idx) { 0 } else { best.saturating_add(1) };
            d[idx] = best;
        }
        best = INF;
        for j in (0..ny).rev() {
            let idx = j * nx + i;
            best = if seeds.contains(idx) { 0 } else { best.saturating_add(1) };
            d[idx] = d[idx].min(best);
        }
        for j in 0..ny {
            let idx = j * nx + i;
            d[idx] = if d[idx] >= INF { INF } else { d[idx] * d[idx] };
        }
    }
    // Pass 2: per row, lower envelope of the parabolas x ↦ d[q] + (x−q)².
    let mut out = vec![INF; nx * ny];
    let mut v = vec![0usize; nx];
    let mut z = vec![0.0f64; nx + 1];
    for j in 0..ny {
        let row = |q: usize| d[j * nx + q];
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in 1..nx {
            if row(q) >= INF {
                continue;
            }
            loop {
                let p = v[k];
                let denom = 2 * (q - p) as i64;
                let s = if row(p) >= INF {
                    f64::NEG_INFINITY
                } else {
                    (row(q) + (q * q) as i64 - row(p) - (p * p) as i64) as f64 / denom as f64
                };
                if s <= z[k] && k > 0 {
                    k -= 1;
                } else {
                    if row(p) >= INF {
                        // Replace an unreachable parabola outright.
                        v[k] = q;
                        z[k + 1] = f64::INFINITY;
                    } else {
                        k += 1;
                        v[k] = q;
                        z[k] = s;
                        z[k + 1] = f64::INFINITY;
                    }
                    break;
                }
            }
        }
        let mut k2 = 0usize;
        for q in 0..nx {
            while z[k2 + 1] < q as f64 {
                k2 += 1;
            }
            let p = v[k2];
            out[j * nx + q] = if row(p) >= INF {
                INF
            } else {
                row(p) + ((q as i64 - p as i64) * (q as i64 - p as i64))
            };
        }
    }
    out
}

/// Interface length: faces between a mask and its complement within the box,
/// times h^{d−1}.
pub fn perimeter(a: &Mask, domain: &Domain) -> f64 {
    let mut faces = 0usize;
    for cell in a.iter() {
        for nb in domain.neighbors(cell) {
            if !a.contains(nb) {
                faces += 1;
            }
        }
    }
    faces as f64 * domain.face_area()
}

/// Partition of a mask into 4-connected (2-connected in 1d) components,
/// ordered by their smallest cell.
pub fn connected_components(a: &Mask, domain: &Domain) -> Vec<Mask> {
    let mut seen = Mask::empty(a.num_bits());
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in a.iter() {
        if seen.contains(start) {
            continue;
        }
        let mut comp = Mask::empty(a.num_bits());
        stack.push(start);
        seen.insert(start);
        while let Some(cell) = stack.pop() {
            comp.insert(cell);
            for nb in domain.neighbors(cell) {
                if a.contains(nb) && !seen.contains(nb) {
                    seen.insert(nb);
                    stack.push(nb);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Writes a mask snapshot as plain PGM (P2): 0 dry, 255 wet, 128 obstacle.
/// The comment line carries the time and forcing of the snapshot.
pub fn write_mask_pgm(
    path: &Path,
    mask: &Mask,
    domain: &Domain,
    t: f64,
    forcing: f64,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "P2")?;
    writeln!(f, "# t={t} F={forcing}")?;
    writeln!(f, "{} {}", domain.nx, domain.ny)?;
    writeln!(f, "255")?;
    for j in 0..domain.ny {
        let mut row = String::with_capacity(domain.nx * 4);
        for i in 0..domain.nx {
            let cell = domain.index(i, j);
            let v = if domain.class(cell) == CellClass::Obstacle {
                128
            } else if mask.contains(cell) {
                255
            } else {
                0
            };
            if i > 0 {
                row.push(' ');
            }
            row.push_str(&v.to_string());
        }
        writeln!(f, "{row}")?;
    }
    Ok(())
}

/// Reads a mask snapshot written by [`write_mask_pgm`]; cells with value 255
/// are wet. Dimensions must match the domain.
pub fn read_mask_pgm(path: &Path, domain: &Domain) -> Result<Mask> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split_whitespace());
    let magic = tokens.next().ok_or_else(|| Error::InvalidMask("empty pgm".into()))?;
    if magic != "P2" {
        return Err(Error::InvalidMask(format!("expected P2 pgm, got {magic}")));
    }
    let mut next_num = || -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidMask("truncated pgm header".into()))
    };
    let nx = next_num()?;
    let ny = next_num()?;
    let _maxval = next_num()?;
    if nx != domain.nx || ny != domain.ny {
        return Err(Error::InvalidMask(format!(
            "pgm is {nx}x{ny}, domain is {}x{}",
            domain.nx, domain.ny
        )));
    }
    let mut mask = Mask::empty(domain.num_cells());
    for cell in 0..domain.num_cells() {
        if next_num()? == 255 {
            mask.insert(cell);
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_params() -> HysteresisParams {
        HysteresisParams::new(0.5, 0.25).unwrap()
    }

    fn open_domain(nx: usize, ny: usize, h: f64) -> Domain {
        // Single-cell obstacle near the center keeps the classifier happy
        // while leaving almost the whole grid wettable.
        let cx = (nx / 2) as f64 * h + 0.5 * h;
        let cy = (ny / 2) as f64 * h + 0.5 * h;
        Domain::with_disk_obstacles(nx, ny, h, &[Disk { cx, cy, r: 0.25 * h }]).unwrap()
    }

    #[test]
    fn params_reject_bad_ranges() {
        assert!(HysteresisParams::new(0.0, 0.5).is_err());
        assert!(HysteresisParams::new(0.5, 0.0).is_err());
        assert!(HysteresisParams::new(0.5, 1.0).is_err());
        assert!(HysteresisParams::new(0.5, 1.5).is_err());
        assert!(HysteresisParams::new(0.3, 0.9).is_ok());
    }

    #[test]
    fn classification_is_a_partition() {
        let d = Domain::with_disk_obstacles(
            32,
            32,
            0.1,
            &[Disk { cx: 1.6, cy: 1.6, r: 0.35 }],
        )
        .unwrap();
        let mut counts = [0usize; 4];
        for c in 0..d.num_cells() {
            counts[match d.class(c) {
                CellClass::Obstacle => 0,
                CellClass::InnerBoundary => 1,
                CellClass::OuterBoundary => 2,
                CellClass::Interior => 3,
            }] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), d.num_cells());
        assert!(counts[0] > 0 && counts[1] > 0 && counts[2] > 0 && counts[3] > 0);
        // Inner boundary is exactly the non-obstacle cells with an obstacle neighbor.
        for c in 0..d.num_cells() {
            let touches = d.neighbors(c).any(|nb| d.class(nb) == CellClass::Obstacle);
            match d.class(c) {
                CellClass::InnerBoundary => assert!(touches),
                CellClass::Interior | CellClass::OuterBoundary => assert!(!touches),
                CellClass::Obstacle => {}
            }
        }
    }

    #[test]
    fn measure_empty_is_zero() {
        let d = Domain::line(16, 1.0).unwrap();
        assert_eq!(measure(&Mask::empty(d.num_cells()), &d), 0.0);
    }

    #[test]
    fn measure_counts_cells() {
        let d = open_domain(16, 16, 0.5);
        let cells: Vec<usize> = (0..d.num_cells()).filter(|&c| d.is_wettable(c)).take(7).collect();
        let m = Mask::from_cells(d.num_cells(), &cells);
        assert_eq!(measure(&m, &d), 7.0 * 0.25);
    }

    #[test]
    fn measure_of_rasterized_disk_approximates_area() {
        let d = open_domain(64, 64, 1.0);
        let mut m = Mask::empty(d.num_cells());
        let (cx, cy) = (32.0, 32.0);
        for c in 0..d.num_cells() {
            let (x, y) = d.center(c);
            if (x - cx).powi(2) + (y - cy).powi(2) <= 100.0 {
                m.insert(c);
            }
        }
        let exact = std::f64::consts::PI * 100.0;
        let got = measure(&m, &d);
        assert!(
            (got - exact).abs() < 0.15 * exact,
            "disk area {got} vs {exact}"
        );
    }

    #[test]
    fn diss_zero_iff_equal() {
        let d = Domain::line(32, 1.0).unwrap();
        let p = unit_params();
        let a = Mask::from_cells(d.num_cells(), &[1, 2, 3]);
        assert_eq!(diss(&a, &a, &p, &d).unwrap(), 0.0);
        let b = Mask::from_cells(d.num_cells(), &[1, 2, 3, 4]);
        assert!(diss(&a, &b, &p, &d).unwrap() > 0.0);
    }

    #[test]
    fn diss_growth_formula() {
        let d = Domain::line(32, 1.0).unwrap();
        let p = HysteresisParams::new(0.5, 0.25).unwrap();
        let a = Mask::from_cells(d.num_cells(), &[1, 2]);
        let b = Mask::from_cells(d.num_cells(), &[1, 2, 3, 4, 5]);
        assert_eq!(diss(&a, &b, &p, &d).unwrap(), 1.5);
    }

    #[test]
    fn diss_mismatched_domains_errors() {
        let d = Domain::line(32, 1.0).unwrap();
        let a = Mask::empty(32);
        let b = Mask::empty(16);
        assert!(matches!(
            diss(&a, &b, &unit_params(), &d),
            Err(Error::MismatchedDomains { .. })
        ));
    }

    #[test]
    fn diss_matches_per_cell_loop() {
        use rand::prelude::*;
        let d = open_domain(8, 8, 1.0);
        let p = unit_params();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut a = Mask::empty(d.num_cells());
            let mut b = Mask::empty(d.num_cells());
            for _ in 0..16 {
                a.insert(rng.gen_range(0..d.num_cells()));
                b.insert(rng.gen_range(0..d.num_cells()));
            }
            let mut expected = 0.0;
            for c in 0..d.num_cells() {
                if b.contains(c) && !a.contains(c) {
                    expected += p.mu_plus;
                }
                if a.contains(c) && !b.contains(c) {
                    expected += p.mu_minus;
                }
            }
            assert_eq!(diss(&a, &b, &p, &d).unwrap(), expected);
        }
    }

    #[test]
    fn triangle_zero_when_b_between() {
        let d = Domain::line(32, 1.0).unwrap();
        let p = unit_params();
        let a = Mask::from_cells(32, &[1, 2, 3]);
        let c = Mask::from_cells(32, &[1, 2, 3, 4, 5, 6]);
        let b = Mask::from_cells(32, &[1, 2, 3, 4]); // a∩c ⊆ b ⊆ a∪c
        let t = triangle_defect(&a, &b, &c, &p, &d).unwrap();
        assert_eq!(t.lhs, 0.0);
        assert_eq!(t.rhs, 0.0);
        assert_eq!(t.rhs_cells, 0);
    }

    #[test]
    fn triangle_symmetric_case() {
        let d = Domain::line(32, 1.0).unwrap();
        let p = unit_params();
        let a = Mask::from_cells(32, &[1, 2, 3, 8]);
        let b = Mask::from_cells(32, &[2, 3, 4, 9]);
        let t = triangle_defect(&a, &b, &a, &p, &d).unwrap();
        let sym = a.symmetric_difference(&b).count() as f64;
        assert_eq!(t.lhs, (p.mu_plus + p.mu_minus) * sym);
        assert_eq!(t.lhs, t.rhs);
    }

    proptest! {
        #[test]
        fn triangle_identity_exact(seed in 0u64..500) {
            use rand::prelude::*;
            let d = open_domain(12, 12, 1.0);
            let p = unit_params();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut rand_mask = || {
                let mut m = Mask::empty(d.num_cells());
                for c in 0..d.num_cells() {
                    if rng.gen_bool(0.4) {
                        m.insert(c);
                    }
                }
                m
            };
            let (a, b, c) = (rand_mask(), rand_mask(), rand_mask());
            let t = triangle_defect(&a, &b, &c, &p, &d).unwrap();
            prop_assert_eq!(t.lhs_plus_cells, t.rhs_cells);
            prop_assert_eq!(t.lhs_minus_cells, t.rhs_cells);
            prop_assert_eq!(t.lhs, t.rhs);
            // Triangle inequality follows from the nonnegative right side.
            let dab = diss(&a, &b, &p, &d).unwrap();
            let dbc = diss(&b, &c, &p, &d).unwrap();
            let dac = diss(&a, &c, &p, &d).unwrap();
            prop_assert!(dac <= dab + dbc + 1e-12);
        }
    }

    #[test]
    fn hausdorff_basic_cases() {
        let d = open_domain(24, 24, 0.5);
        let a = Mask::from_cells(d.num_cells(), &[d.index(3, 3)]);
        assert_eq!(hausdorff_distance(&a, &a, &d).unwrap(), 0.0);
        let b = Mask::from_cells(d.num_cells(), &[d.index(3, 8)]);
        assert!((hausdorff_distance(&a, &b, &d).unwrap() - 5.0 * 0.5).abs() < 1e-12);
        assert!(matches!(
            hausdorff_distance(&a, &Mask::empty(d.num_cells()), &d),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn hausdorff_one_ring_dilation_is_h() {
        let d = open_domain(24, 24, 0.25);
        let mut a = Mask::empty(d.num_cells());
        for i in 8..12 {
            for j in 8..12 {
                a.insert(d.index(i, j));
            }
        }
        let mut b = a.clone();
        for cell in a.iter() {
            for nb in d.neighbors(cell) {
                b.insert(nb);
            }
        }
        assert!((hausdorff_distance(&a, &b, &d).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hausdorff_is_euclidean() {
        let d = open_domain(32, 32, 1.0);
        let a = Mask::from_cells(d.num_cells(), &[d.index(4, 4)]);
        let b = Mask::from_cells(d.num_cells(), &[d.index(7, 8)]);
        assert!((hausdorff_distance(&a, &b, &d).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn perimeter_small_shapes() {
        let d = open_domain(16, 16, 1.0);
        let one = Mask::from_cells(d.num_cells(), &[d.index(2, 2)]);
        assert_eq!(perimeter(&one, &d), 4.0);
        let block = Mask::from_cells(
            d.num_cells(),
            &[d.index(2, 2), d.index(3, 2), d.index(2, 3), d.index(3, 3)],
        );
        assert_eq!(perimeter(&block, &d), 8.0);
    }

    #[test]
    fn perimeter_of_disk_close_to_circumference() {
        let n = 128;
        let d = open_domain(n, n, 1.0);
        let mut m = Mask::empty(d.num_cells());
        let c = (n / 2) as f64;
        for cell in 0..d.num_cells() {
            let (x, y) = d.center(cell);
            if (x - c).powi(2) + (y - c).powi(2) <= 400.0 {
                m.insert(cell);
            }
        }
        let circ = 2.0 * std::f64::consts::PI * 20.0;
        let got = perimeter(&m, &d);
        // Manhattan perimeter of a disk overestimates by at most 4/π.
        assert!(got >= 0.95 * circ && got <= 1.35 * circ, "perimeter {got} vs {circ}");
    }

    #[test]
    fn components_counting() {
        let d = open_domain(16, 16, 1.0);
        let blob = Mask::from_cells(
            d.num_cells(),
            &[d.index(2, 2), d.index(3, 2), d.index(3, 3)],
        );
        assert_eq!(connected_components(&blob, &d).len(), 1);
        let two = Mask::from_cells(d.num_cells(), &[d.index(2, 2), d.index(2, 5)]);
        assert_eq!(connected_components(&two, &d).len(), 2);
        // Checkerboard: no 4-adjacency.
        let mut check = Mask::empty(d.num_cells());
        let mut k = 0;
        for i in 1..7 {
            for j in 1..7 {
                if (i + j) % 2 == 0 {
                    check.insert(d.index(i, j));
                    k += 1;
                }
            }
        }
        assert_eq!(connected_components(&check, &d).len(), k);
    }

    proptest! {
        #[test]
        fn components_partition_input(seed in 0u64..200) {
            use rand::prelude::*;
            let d = open_domain(12, 12, 1.0);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut m = Mask::empty(d.num_cells());
            for c in 0..d.num_cells() {
                if rng.gen_bool(0.35) {
                    m.insert(c);
                }
            }
            let comps = connected_components(&m, &d);
            let mut union = Mask::empty(d.num_cells());
            let mut total = 0;
            for c in &comps {
                prop_assert!(c.intersection(&union).is_empty());
                union = union.union(c);
                total += c.count();
            }
            prop_assert_eq!(&union, &m);
            prop_assert_eq!(total, m.count());
        }
    }

    #[test]
    fn pgm_snapshot_roundtrip() {
        let d = open_domain(8, 8, 1.0);
        let m = d.radial_mask(&[d.center(d.index(4, 4))], 2.0);
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("snap.pgm");
        write_mask_pgm(&path, &m, &d, 0.5, 1.25).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "P2");
        assert!(lines.next().unwrap().contains("t=0.5 F=1.25"));
        assert_eq!(lines.next().unwrap(), "8 8");
        assert_eq!(lines.next().unwrap(), "255");
        let vals: Vec<u32> = lines
            .flat_map(|l| l.split_whitespace().map(|v| v.parse().unwrap()))
            .collect();
        assert_eq!(vals.len(), 64);
        assert_eq!(vals.iter().filter(|&&v| v == 255).count(), m.count());
        assert!(vals.contains(&128));
    }

    #[test]
    fn lex_order_prefers_dry_at_first_difference() {
        // First difference at cell 2: a is dry there, b is wet, so a < b.
        let a = Mask::from_cells(8, &[1, 3]);
        let b = Mask::from_cells(8, &[1, 2]);
        assert_eq!(a.lex_cmp(&b), std::cmp::Ordering::Less);
        assert_eq!(b.lex_cmp(&a), std::cmp::Ordering::Greater);
        assert_eq!(a.lex_cmp(&a), std::cmp::Ordering::Equal);
    }
}
