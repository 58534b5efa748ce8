//! Momentum occupation, real-space correlators and the real-space Chern
//! number of a physical covariance given on a momentum grid.
//!
//! Real-space entries follow `Γ_{(r,a),(r',b)} = N_c⁻¹ Σ_k e^{ik·(R−R')} Γ(k)_{ab}`
//! with `R, R'` the cell origins of `r, r'`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};
use crate::models::{Boundary, MomentumGrid};

/// Slack allowed outside `[0, 1]` before an occupation is an error.
pub const OCCUPATION_TOL: f64 = 1e-9;
/// Largest tolerated `‖Π² − Π‖∞` of the correlation projector.
pub const IDEMPOTENCE_TOL: f64 = 1e-8;
/// Largest tolerated imaginary part of a real-space entry.
pub const REALITY_TOL: f64 = 1e-9;

/// `⟨c†_{k,s} c_{k,s'}⟩` for every pair of cell sites.
pub fn occupation_matrix(gamma: &CMat) -> CMat {
    let m = gamma.nrows() / 2;
    // Γ̃_{ab} = −Γ(k)_{ba} is the covariance of the k-th Majorana pair as seen
    // by c_{k,s} = (γ¹_s − iγ²_s)/2
    let t = |s: usize, mu: usize, s2: usize, nu: usize| -gamma[(2 * s2 + nu, 2 * s + mu)];
    CMat::from_fn(m, m, |s, s2| {
        let diag = if s == s2 { 0.5 } else { 0.0 };
        Complex64::new(diag, 0.0) - Complex64::new(0.0, 0.25) * (t(s, 0, s2, 0) + t(s, 1, s2, 1))
            - (t(s, 0, s2, 1) - t(s, 1, s2, 0)) * 0.25
    })
}

fn checked_occupation(n: f64) -> Result<f64> {
    if !(-OCCUPATION_TOL..=1.0 + OCCUPATION_TOL).contains(&n) || n.is_nan() {
        return Err(Error::OccupationOutOfRange { value: n });
    }
    Ok(n.clamp(0.0, 1.0))
}

/// `n(k) = ⟨c†_k c_k⟩` for a single-site covariance `Γ(k)`.
pub fn occupation(gamma: &CMat) -> Result<f64> {
    if gamma.nrows() != 2 || gamma.ncols() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "occupation needs a 2x2 covariance, got {}x{}",
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    let g = |a: usize, b: usize| gamma[(a, b)];
    let n = Complex64::new(0.5, 0.0) + Complex64::new(0.0, 0.25) * (g(0, 0) + g(1, 1) + Complex64::new(0.0, 1.0) * (g(0, 1) - g(1, 0)));
    checked_occupation(n.re)
}

/// Occupation unfolded to every full-lattice momentum `q`, returned in the
/// order `qx index + lx · qy index`.
pub fn unfolded_occupation(gammas: &[CMat], grid: &MomentumGrid) -> Result<Vec<f64>> {
    let cell = grid.cell;
    let m = cell.sites();
    let occ: Vec<CMat> = gammas.iter().map(occupation_matrix).collect();
    let twist = |bc: Boundary| if bc == Boundary::AntiPeriodic { 0.5 } else { 0.0 };
    let mut out = Vec::with_capacity(grid.n_sites());
    for qy in 0..grid.ly {
        for qx in 0..grid.lx {
            let kx = 2.0 * PI * (qx as f64 + twist(grid.bc_x)) / grid.lx as f64;
            let ky = 2.0 * PI * (qy as f64 + twist(grid.bc_y)) / grid.ly as f64;
            let n = &occ[grid.fold(qx, qy)];
            let mut acc = Complex64::new(0.0, 0.0);
            for s in 0..m {
                for s2 in 0..m {
                    let (ax, ay) = cell.site_offset(s);
                    let (bx, by) = cell.site_offset(s2);
                    let dx = ax as f64 - bx as f64;
                    let dy = ay as f64 - by as f64;
                    acc += Complex64::from_polar(1.0, kx * dx + ky * dy) * n[(s, s2)];
                }
            }
            out.push(checked_occupation(acc.re / m as f64)?);
        }
    }
    Ok(out)
}

/// Translation-invariant real-space covariance, stored as one
/// `2m × 2m` block per cell displacement.
#[derive(Clone, Debug)]
pub struct RealSpaceCovariance {
    grid: MomentumGrid,
    blocks: Vec<RMat>,
    max_imag: f64,
}

impl RealSpaceCovariance {
    /// Inverse Fourier transform of `Γ(k)` given in grid order.
    pub fn from_momentum(gammas: &[CMat], grid: &MomentumGrid) -> Result<Self> {
        if gammas.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} covariances for {} k-points",
                gammas.len(),
                grid.len()
            )));
        }
        let dim = 2 * grid.cell.sites();
        if gammas.iter().any(|g| g.nrows() != dim || g.ncols() != dim) {
            return Err(Error::ShapeMismatch(format!("covariances must be {dim}x{dim}")));
        }
        let (nkx, nky) = (grid.nkx(), grid.nky());
        let (cx, cy) = (grid.cell.cx as f64, grid.cell.cy as f64);
        // separable sums: first over kx for every (Dx, ny), then over ky
        let kx: Vec<f64> = (0..nkx).map(|n| grid.kpoints[grid.index(n, 0)].kx).collect();
        let ky: Vec<f64> = (0..nky).map(|n| grid.kpoints[grid.index(0, n)].ky).collect();
        let mut partial = vec![CMat::zeros(dim, dim); nkx * nky];
        for dx in 0..nkx {
            for ny in 0..nky {
                let mut acc = CMat::zeros(dim, dim);
                for (nx, &k) in kx.iter().enumerate() {
                    let phase = Complex64::from_polar(1.0, k * cx * dx as f64);
                    acc += &gammas[grid.index(nx, ny)] * phase;
                }
                partial[dx + nkx * ny] = acc;
            }
        }
        let norm = 1.0 / (nkx * nky) as f64;
        let mut blocks = Vec::with_capacity(nkx * nky);
        let mut max_imag: f64 = 0.0;
        for dy in 0..nky {
            for dx in 0..nkx {
                let mut acc = CMat::zeros(dim, dim);
                for (ny, &k) in ky.iter().enumerate() {
                    let phase = Complex64::from_polar(1.0, k * cy * dy as f64);
                    acc += &partial[dx + nkx * ny] * phase;
                }
                max_imag = acc.iter().fold(max_imag, |m, v| m.max((v.im * norm).abs()));
                blocks.push(acc.map(|v| v.re * norm));
            }
        }
        Ok(RealSpaceCovariance {
            grid: grid.clone(),
            blocks,
            max_imag,
        })
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// Largest imaginary part discarded by the transform.
    pub fn max_imag(&self) -> f64 {
        self.max_imag
    }

    /// `Γ_{(x,y,a),(x',y',b)}` with `a, b ∈ {0, 1}` for `γ¹, γ²`.
    pub fn entry(&self, (x, y): (i64, i64), a: usize, (x2, y2): (i64, i64), b: usize) -> f64 {
        let cell = self.grid.cell;
        let ((ox, oy), s) = cell.locate(x, y);
        let ((ox2, oy2), s2) = cell.locate(x2, y2);
        let (nkx, nky) = (self.grid.nkx() as i64, self.grid.nky() as i64);
        let (ddx, ddy) = ((ox - ox2) / cell.cx as i64, (oy - oy2) / cell.cy as i64);
        let mut sign = 1.0;
        if self.grid.bc_x == Boundary::AntiPeriodic && ddx.div_euclid(nkx) % 2 != 0 {
            sign = -sign;
        }
        if self.grid.bc_y == Boundary::AntiPeriodic && ddy.div_euclid(nky) % 2 != 0 {
            sign = -sign;
        }
        let block = &self.blocks[(ddx.rem_euclid(nkx) + nkx * ddy.rem_euclid(nky)) as usize];
        sign * block[(2 * s + a, 2 * s2 + b)]
    }

    /// Real-space covariance restricted to `sites`, ordered
    /// `(site 0, γ¹), (site 0, γ²), (site 1, γ¹), …`.
    pub fn restrict(&self, rows: &[(i64, i64)], cols: &[(i64, i64)]) -> RMat {
        RMat::from_fn(2 * rows.len(), 2 * cols.len(), |i, j| {
            self.entry(rows[i / 2], i % 2, cols[j / 2], j % 2)
        })
    }
}

/// `i⟨γ¹_{(x,0)} γ²_{(0,0)}⟩`, i.e. the real covariance entry
/// `Γ_{(x,0,1),(0,0,2)}`; equals `1 − 2n` on site for `x = 0`.
pub fn realspace_correlator(real: &RealSpaceCovariance, x: i64) -> Result<f64> {
    if x.unsigned_abs() as usize >= real.grid.lx {
        return Err(Error::ShapeMismatch(format!("displacement {x} outside a lattice of width {}", real.grid.lx)));
    }
    if real.max_imag > REALITY_TOL {
        return Err(Error::ShapeMismatch(format!("real-space covariance has imaginary part {:e}", real.max_imag)));
    }
    Ok(real.entry((x, 0), 0, (0, 0), 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    A,
    B,
    C,
    D,
}

/// Three 120° sectors of radius `r` meeting at the lattice centre, in
/// counterclockwise order A, B, C, with everything else in D.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPartition {
    pub lx: usize,
    pub ly: usize,
    pub radius: f64,
    pub center: (f64, f64),
    /// Angle at which sector A starts; A covers `[θ₀, θ₀ + 2π/3)`.
    pub start_angle: f64,
    order: [Region; 3],
}

impl RegionPartition {
    pub fn new(lx: usize, ly: usize, radius: f64) -> Self {
        RegionPartition {
            lx,
            ly,
            radius,
            center: ((lx as f64 - 1.0) / 2.0, (ly as f64 - 1.0) / 2.0),
            start_angle: 0.0,
            order: [Region::A, Region::B, Region::C],
        }
    }

    /// Same geometry with the sectors of B and C exchanged.
    pub fn swapped_bc(&self) -> Self {
        let mut p = self.clone();
        p.order = [self.order[0], self.order[2], self.order[1]];
        p
    }

    pub fn region(&self, x: usize, y: usize) -> Region {
        let dx = x as f64 - self.center.0;
        let dy = y as f64 - self.center.1;
        if (dx * dx + dy * dy).sqrt() > self.radius {
            return Region::D;
        }
        let theta = (dy.atan2(dx) - self.start_angle).rem_euclid(2.0 * PI);
        let sector = ((theta / (2.0 * PI / 3.0)) as usize).min(2);
        self.order[sector]
    }

    pub fn sites(&self, region: Region) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for y in 0..self.ly {
            for x in 0..self.lx {
                if self.region(x, y) == region {
                    out.push((x as i64, y as i64));
                }
            }
        }
        out
    }
}

/// `max_k ‖Π(k)² − Π(k)‖∞` for the correlation projector
/// `Π = (I + iΓ)/2`, `Π_{ij} = ⟨γ_j γ_i⟩/2`.
pub fn projector_defect(gammas: &[CMat]) -> f64 {
    gammas
        .iter()
        .map(|g| {
            let n = g.nrows();
            let p = (CMat::identity(n, n) + g * Complex64::new(0.0, 1.0)) * Complex64::new(0.5, 0.0);
            let d = &p * &p - &p;
            d.iter().fold(0.0f64, |m, v| m.max(v.norm()))
        })
        .fold(0.0, f64::max)
}

/// Real-space Chern number
/// `ν = 12πi[Tr(Π Π_A Π Π_B Π Π_C) − Tr(Π Π_C Π Π_B Π Π_A)]` with the
/// correlation projector `Π = (I + iΓ)/2`, `2Π_{ij} = ⟨γ_j γ_i⟩`.
pub fn realspace_chern(real: &RealSpaceCovariance, gammas: &[CMat], partition: &RegionPartition) -> Result<f64> {
    let residual = projector_defect(gammas);
    if residual > IDEMPOTENCE_TOL {
        return Err(Error::NotIdempotent { residual });
    }
    if partition.lx != real.grid.lx || partition.ly != real.grid.ly {
        return Err(Error::ShapeMismatch("partition and covariance lattices differ".into()));
    }
    let a = partition.sites(Region::A);
    let b = partition.sites(Region::B);
    let c = partition.sites(Region::C);
    // off-diagonal blocks of Π are iΓ/2, so each triple product carries
    // (i/2)³ = −i/8 and ν reduces to real traces
    let gab = real.restrict(&a, &b);
    let gbc = real.restrict(&b, &c);
    let gca = real.restrict(&c, &a);
    let gac = real.restrict(&a, &c);
    let gcb = real.restrict(&c, &b);
    let gba = real.restrict(&b, &a);
    let forward = (gab * gbc * gca).trace();
    let backward = (gac * gcb * gba).trace();
    Ok(1.5 * PI * (forward - backward))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symplectic_form;
    use crate::linalg::to_complex;
    use crate::models::{CellShape, ModelKind, ModelSpec};

    #[test]
    fn vacuum_and_filled() {
        let j = to_complex(&symplectic_form(2, 0, 1));
        assert_eq!(occupation(&j).unwrap(), 0.0);
        assert_eq!(occupation(&(-j.clone())).unwrap(), 1.0);
        let n = occupation_matrix(&j);
        assert!(n[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn out_of_range_occupation_is_an_error() {
        let g = to_complex(&symplectic_form(2, 0, 1)) * Complex64::new(3.0, 0.0);
        assert!(matches!(occupation(&g), Err(Error::OccupationOutOfRange { .. })));
    }

    #[test]
    fn partition_covers_lattice_disjointly() {
        let p = RegionPartition::new(12, 12, 4.0);
        let counts: Vec<usize> = [Region::A, Region::B, Region::C, Region::D]
            .iter()
            .map(|r| p.sites(*r).len())
            .collect();
        assert_eq!(counts.iter().sum::<usize>(), 144);
        assert!(counts[..3].iter().all(|&c| c > 10));
        let q = p.swapped_bc();
        assert_eq!(p.sites(Region::B), q.sites(Region::C));
        assert_eq!(p.sites(Region::A), q.sites(Region::A));
    }

    #[test]
    fn correlator_on_vacuum_is_one() {
        let grid = MomentumGrid::new(4, 4, Boundary::AntiPeriodic, Boundary::Periodic, CellShape::SINGLE).unwrap();
        let j = to_complex(&symplectic_form(2, 0, 1));
        let gammas = vec![j; grid.len()];
        let real = RealSpaceCovariance::from_momentum(&gammas, &grid).unwrap();
        assert!((realspace_correlator(&real, 0).unwrap() - 1.0).abs() < 1e-14);
        assert!(realspace_correlator(&real, 2).unwrap().abs() < 1e-14);
    }

    #[test]
    fn exact_fermi_sea_occupation() {
        let grid = MomentumGrid::new(4, 4, Boundary::AntiPeriodic, Boundary::Periodic, CellShape::SINGLE).unwrap();
        let model = ModelSpec::new(ModelKind::FermiSurface, grid).unwrap();
        for (i, k) in model.grid.kpoints.iter().enumerate() {
            let n = occupation(&model.exact_covariance(i).unwrap()).unwrap();
            let eps = -2.0 * (k.kx.cos() + k.ky.cos());
            assert_eq!(n.round(), if eps < 0.0 { 1.0 } else { 0.0 });
            assert!((n - n.round()).abs() < 1e-12);
        }
    }
}
