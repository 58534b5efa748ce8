//! Benchmark free-fermion Hamiltonians on the square lattice, their
//! momentum-space Majorana form, and exact single-particle oracles.
//!
//! Conventions: `γ¹ = c† + c`, `γ² = −i(c† − c)`, so `c = (γ¹ − iγ²)/2`.
//! With a unit cell of `m` sites, modes at fixed cell momentum are ordered
//! `(γ¹_0, γ²_0, γ¹_1, γ²_1, …)` and the Fourier phase uses the cell origin.
//! `h(k)` is defined through `H = Σ_k γ†(k) h(k) γ(k)` and always satisfies
//! `h(−k) = −h(k)ᵀ`, which makes `Σ_k Tr h(k)` vanish.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigh, CMat, I};

/// Degeneracy threshold on single-particle eigenvalues of `h(k)`.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    AntiPeriodic,
}

impl Boundary {
    fn twist(self) -> f64 {
        match self {
            Boundary::Periodic => 0.0,
            Boundary::AntiPeriodic => 0.5,
        }
    }
}

/// Rectangular unit cell of `cx × cy` sites repeating with lattice vectors
/// `cx·x̂` and `cy·ŷ`. Sites are indexed `s = sx + cx·sy`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellShape {
    pub cx: usize,
    pub cy: usize,
}

impl CellShape {
    pub const SINGLE: CellShape = CellShape { cx: 1, cy: 1 };
    pub const COLUMN_PAIR: CellShape = CellShape { cx: 2, cy: 1 };
    pub const PLAQUETTE: CellShape = CellShape { cx: 2, cy: 2 };

    pub fn new(cx: usize, cy: usize) -> Result<Self> {
        if !(1..=2).contains(&cx) || !(1..=2).contains(&cy) {
            return Err(Error::InvalidLattice(format!(
                "unit cell {cx}x{cy} not supported (sides must be 1 or 2)"
            )));
        }
        Ok(CellShape { cx, cy })
    }

    pub fn sites(self) -> usize {
        self.cx * self.cy
    }

    pub fn site_offset(self, s: usize) -> (usize, usize) {
        (s % self.cx, s / self.cx)
    }

    pub fn site_index(self, sx: usize, sy: usize) -> usize {
        sx + self.cx * sy
    }

    /// Splits an absolute lattice position into (cell origin, site index).
    pub fn locate(self, x: i64, y: i64) -> ((i64, i64), usize) {
        let (cx, cy) = (self.cx as i64, self.cy as i64);
        let ox = x.div_euclid(cx) * cx;
        let oy = y.div_euclid(cy) * cy;
        ((ox, oy), self.site_index((x - ox) as usize, (y - oy) as usize))
    }
}

impl std::fmt::Display for CellShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.cx, self.cy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KPoint {
    pub nx: usize,
    pub ny: usize,
    pub kx: f64,
    pub ky: f64,
}

/// Allowed cell momenta for an `lx × ly` lattice with twisted boundaries.
/// `kx = 2π(nx + θx)/lx` with `θ = ½` for anti-periodic and `0` for periodic,
/// `nx` running over `lx/cx` values (the reduced zone of the cell).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumGrid {
    pub lx: usize,
    pub ly: usize,
    pub bc_x: Boundary,
    pub bc_y: Boundary,
    pub cell: CellShape,
    pub kpoints: Vec<KPoint>,
}

impl MomentumGrid {
    pub fn new(lx: usize, ly: usize, bc_x: Boundary, bc_y: Boundary, cell: CellShape) -> Result<Self> {
        if lx < 2 || ly < 2 {
            return Err(Error::InvalidLattice(format!("{lx}x{ly}: both sides must be at least 2")));
        }
        if (lx * ly) % 2 != 0 {
            return Err(Error::InvalidLattice(format!("{lx}x{ly}: site count must be even")));
        }
        if lx % cell.cx != 0 || ly % cell.cy != 0 {
            return Err(Error::InvalidLattice(format!("{lx}x{ly} is not tiled by a {cell} cell")));
        }
        let (nkx, nky) = (lx / cell.cx, ly / cell.cy);
        let mut kpoints = Vec::with_capacity(nkx * nky);
        for ny in 0..nky {
            for nx in 0..nkx {
                kpoints.push(KPoint {
                    nx,
                    ny,
                    kx: 2.0 * PI * (nx as f64 + bc_x.twist()) / lx as f64,
                    ky: 2.0 * PI * (ny as f64 + bc_y.twist()) / ly as f64,
                });
            }
        }
        Ok(MomentumGrid { lx, ly, bc_x, bc_y, cell, kpoints })
    }

    pub fn len(&self) -> usize {
        self.kpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kpoints.is_empty()
    }

    pub fn nkx(&self) -> usize {
        self.lx / self.cell.cx
    }

    pub fn nky(&self) -> usize {
        self.ly / self.cell.cy
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn index(&self, nx: usize, ny: usize) -> usize {
        nx + self.nkx() * ny
    }

    /// Index of `−k` within the grid.
    pub fn neg_index(&self, i: usize) -> usize {
        let k = self.kpoints[i];
        let flip = |n: usize, len: usize, bc: Boundary| match bc {
            Boundary::Periodic => (len - n) % len,
            Boundary::AntiPeriodic => len - 1 - n,
        };
        self.index(flip(k.nx, self.nkx(), self.bc_x), flip(k.ny, self.nky(), self.bc_y))
    }

    /// One k-point per `{k, −k}` pair, weighted by the pair size.
    pub fn representatives(&self) -> Vec<(usize, f64)> {
        (0..self.len())
            .filter_map(|i| {
                let j = self.neg_index(i);
                match i.cmp(&j) {
                    std::cmp::Ordering::Less => Some((i, 2.0)),
                    std::cmp::Ordering::Equal => Some((i, 1.0)),
                    std::cmp::Ordering::Greater => None,
                }
            })
            .collect()
    }

    /// Same lattice and boundaries with a different unit cell.
    pub fn with_cell(&self, cell: CellShape) -> Result<Self> {
        MomentumGrid::new(self.lx, self.ly, self.bc_x, self.bc_y, cell)
    }

    /// Folds a full-lattice momentum label `(qx index, qy index)` of the 1×1
    /// grid onto this grid's reduced zone.
    pub fn fold(&self, qnx: usize, qny: usize) -> usize {
        self.index(qnx % self.nkx(), qny % self.nky())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    /// Nearest-neighbour hopping, `ε(k) = −2(cos kx + cos ky)`.
    FermiSurface,
    /// Nearest-neighbour hopping plus a checkerboard potential `±1`.
    BandInsulator,
    /// Chiral p-wave superconductor: hopping, chemical-potential shift +2,
    /// pairing 1 on horizontal bonds and i on vertical bonds.
    PipSc,
    /// Decoupled chains along the `(1, direction)` diagonal.
    DiagonalChains { direction: i8 },
    /// Atomic limit: potential `even` on `(x+y)` even sites and `odd`
    /// elsewhere, no hopping.
    StaggeredOnsite { even: f64, odd: f64 },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::FermiSurface => "fermi-surface",
            ModelKind::BandInsulator => "band-insulator",
            ModelKind::PipSc => "pip-sc",
            ModelKind::DiagonalChains { .. } => "diagonal-chains",
            ModelKind::StaggeredOnsite { .. } => "staggered-onsite",
        }
    }

    /// Smallest unit cell on which the model is translation invariant.
    pub fn min_cell(&self) -> CellShape {
        if self.needs_checkerboard() {
            CellShape::PLAQUETTE
        } else {
            CellShape::SINGLE
        }
    }

    fn needs_checkerboard(&self) -> bool {
        match *self {
            ModelKind::BandInsulator => true,
            ModelKind::StaggeredOnsite { even, odd } => even != odd,
            _ => false,
        }
    }

    fn onsite(&self, x: i64, y: i64) -> f64 {
        let even = (x + y).rem_euclid(2) == 0;
        match *self {
            ModelKind::BandInsulator => {
                if even {
                    1.0
                } else {
                    -1.0
                }
            }
            ModelKind::PipSc => 2.0,
            ModelKind::StaggeredOnsite { even: e, odd: o } => {
                if even {
                    e
                } else {
                    o
                }
            }
            _ => 0.0,
        }
    }

    /// Hopping terms `t c†_{x+δ} c_x` (their conjugates are added implicitly).
    fn hoppings(&self) -> Vec<((i64, i64), f64)> {
        match *self {
            ModelKind::FermiSurface | ModelKind::BandInsulator | ModelKind::PipSc => {
                vec![((1, 0), -1.0), ((0, 1), -1.0)]
            }
            ModelKind::DiagonalChains { direction } => vec![((1, direction as i64), -1.0)],
            ModelKind::StaggeredOnsite { .. } => vec![],
        }
    }

    /// Pairing terms `D c_x c_{x+δ}` (their conjugates are added implicitly).
    fn pairings(&self) -> Vec<((i64, i64), Complex64)> {
        match self {
            ModelKind::PipSc => vec![((1, 0), Complex64::new(1.0, 0.0)), ((0, 1), I)],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub grid: MomentumGrid,
}

/// Majorana-basis Bloch Hamiltonian at one cell momentum.
#[derive(Clone, Debug)]
pub struct BlochHamiltonian {
    pub k: (f64, f64),
    pub h: CMat,
}

impl BlochHamiltonian {
    /// Quasiparticle (BdG) energies, ascending. Each complex-fermion band
    /// energy `ε` appears as the pair `±ε` for normal-state models.
    pub fn quasiparticle_energies(&self) -> Vec<f64> {
        let (vals, _) = hermitian_eigh(&self.h);
        vals.into_iter().map(|v| 4.0 * v).collect()
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind, grid: MomentumGrid) -> Result<Self> {
        if let ModelKind::DiagonalChains { direction } = kind {
            if direction != 1 && direction != -1 {
                return Err(Error::InvalidLattice(format!("chain direction must be ±1, got {direction}")));
            }
        }
        if kind.needs_checkerboard() && (grid.cell.cx != 2 || grid.cell.cy != 2) {
            return Err(Error::IncompatibleCell {
                model: kind.name(),
                need: "2x2".into(),
                got: grid.cell.to_string(),
            });
        }
        Ok(ModelSpec { kind, grid })
    }

    pub fn cell(&self) -> CellShape {
        self.grid.cell
    }

    /// Majorana dimension of `h(k)`.
    pub fn dim(&self) -> usize {
        2 * self.grid.cell.sites()
    }

    /// Normal-state block `h₀(k)` of the complex-fermion Hamiltonian in the
    /// cell basis, `H ⊃ Σ_k c†_k h₀(k) c_k`.
    pub fn normal_block(&self, kx: f64, ky: f64) -> CMat {
        let cell = self.grid.cell;
        let m = cell.sites();
        let mut h0 = CMat::zeros(m, m);
        for s in 0..m {
            let (sx, sy) = cell.site_offset(s);
            let (x, y) = (sx as i64, sy as i64);
            h0[(s, s)] += Complex64::new(self.kind.onsite(x, y), 0.0);
            for ((dx, dy), t) in self.kind.hoppings() {
                let ((ox, oy), s2) = cell.locate(x + dx, y + dy);
                let phase = Complex64::from_polar(1.0, -(kx * ox as f64 + ky * oy as f64));
                h0[(s2, s)] += phase * t;
                h0[(s, s2)] += phase.conj() * t;
            }
        }
        h0
    }

    fn raw_pairing(&self, kx: f64, ky: f64) -> CMat {
        let cell = self.grid.cell;
        let m = cell.sites();
        let mut delta = CMat::zeros(m, m);
        for s in 0..m {
            let (sx, sy) = cell.site_offset(s);
            let (x, y) = (sx as i64, sy as i64);
            for ((dx, dy), d) in self.kind.pairings() {
                // (D c_x c_y)† = D* c†_y c†_x
                let ((ox, oy), s2) = cell.locate(x + dx, y + dy);
                let phase = Complex64::from_polar(1.0, -(kx * ox as f64 + ky * oy as f64));
                delta[(s2, s)] += phase * d.conj() * 2.0;
            }
        }
        delta
    }

    /// Antisymmetrised pairing block `Δ(k)`, `H ⊃ ½ Σ_k c†_k Δ(k) c†_{−k} + h.c.`.
    pub fn pairing_block(&self, kx: f64, ky: f64) -> CMat {
        let plus = self.raw_pairing(kx, ky);
        let minus = self.raw_pairing(-kx, -ky);
        (plus - minus.transpose()) * Complex64::new(0.5, 0.0)
    }

    /// Complex-fermion band energies (eigenvalues of `h₀(k)`), ascending.
    pub fn band_energies(&self, kx: f64, ky: f64) -> Vec<f64> {
        hermitian_eigh(&self.normal_block(kx, ky)).0
    }

    pub fn bloch_hamiltonian(&self, kx: f64, ky: f64) -> BlochHamiltonian {
        let m = self.grid.cell.sites();
        let h0p = self.normal_block(kx, ky);
        let h0m = self.normal_block(-kx, -ky);
        let delta = self.pairing_block(kx, ky);
        let mut bdg = CMat::zeros(2 * m, 2 * m);
        bdg.view_mut((0, 0), (m, m)).copy_from(&h0p);
        bdg.view_mut((0, m), (m, m)).copy_from(&delta);
        bdg.view_mut((m, 0), (m, m)).copy_from(&delta.adjoint());
        bdg.view_mut((m, m), (m, m)).copy_from(&(-h0m.transpose()));
        // γ¹_s = c_{k,s} + c†_{−k,s}, γ²_s = i(c_{k,s} − c†_{−k,s})
        let mut u = CMat::zeros(2 * m, 2 * m);
        for s in 0..m {
            u[(2 * s, s)] = Complex64::new(1.0, 0.0);
            u[(2 * s, m + s)] = Complex64::new(1.0, 0.0);
            u[(2 * s + 1, s)] = I;
            u[(2 * s + 1, m + s)] = -I;
        }
        let h = &u * bdg * u.adjoint() * Complex64::new(0.125, 0.0);
        // exact Hermiticity, not just up to rounding
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        BlochHamiltonian { k: (kx, ky), h }
    }

    pub fn bloch_at(&self, index: usize) -> BlochHamiltonian {
        let k = self.grid.kpoints[index];
        self.bloch_hamiltonian(k.kx, k.ky)
    }

    /// Ground-state energy `Σ_k (Tr h(k) − Σ|λ(h(k))|)`, the minimum of
    /// `Σ_k iTr[h Γ] + Tr h` over pure Gaussian states.
    pub fn exact_ground_energy(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                let h = self.bloch_at(i).h;
                let (vals, _) = hermitian_eigh(&h);
                let tr: f64 = (0..h.nrows()).map(|j| h[(j, j)].re).sum();
                tr - vals.iter().map(|v| v.abs()).sum::<f64>()
            })
            .sum()
    }

    /// Energy-minimising pure covariance at k: `Γ(k) = i·sign(h(k))`.
    pub fn exact_covariance(&self, index: usize) -> Result<CMat> {
        let bloch = self.bloch_at(index);
        let (vals, vecs) = hermitian_eigh(&bloch.h);
        if let Some(&eig) = vals.iter().find(|v| v.abs() < DEGENERACY_TOL) {
            return Err(Error::DegenerateKPoint { kx: bloch.k.0, ky: bloch.k.1, eig });
        }
        let n = vals.len();
        let sign = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(vals[i].signum(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Ok(&vecs * sign * vecs.adjoint() * I)
    }

    /// Exact covariance at every grid point, in grid order.
    pub fn exact_state(&self) -> Result<Vec<CMat>> {
        (0..self.grid.len()).map(|i| self.exact_covariance(i)).collect()
    }
}

/// `build_grid` in free-function form.
pub fn build_grid(lx: usize, ly: usize, bc_x: Boundary, bc_y: Boundary, cell: CellShape) -> Result<MomentumGrid> {
    MomentumGrid::new(lx, ly, bc_x, bc_y, cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_c, purity_defect};

    fn grid(lx: usize, ly: usize, cell: CellShape) -> MomentumGrid {
        MomentumGrid::new(lx, ly, Boundary::AntiPeriodic, Boundary::Periodic, cell).unwrap()
    }

    #[test]
    fn two_by_two_grid_points() {
        let g = grid(2, 2, CellShape::SINGLE);
        let mut kx: Vec<f64> = g.kpoints.iter().map(|k| k.kx).collect();
        kx.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let ky: Vec<f64> = g.kpoints.iter().map(|k| k.ky).collect();
        assert_eq!(g.len(), 4);
        for k in &g.kpoints {
            assert!((k.kx - PI / 2.0).abs() < 1e-15 || (k.kx - 3.0 * PI / 2.0).abs() < 1e-15);
            assert!(k.ky.abs() < 1e-15 || (k.ky - PI).abs() < 1e-15);
        }
        assert!(ky.iter().any(|&v| v == 0.0));
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(grid(96, 96, CellShape::SINGLE).len(), 9216);
        let folded = grid(4, 4, CellShape::COLUMN_PAIR);
        assert_eq!(folded.len(), 8);
        assert!(folded.kpoints.iter().all(|k| k.kx < PI));
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(MomentumGrid::new(3, 3, Boundary::AntiPeriodic, Boundary::Periodic, CellShape::SINGLE).is_err());
        assert!(MomentumGrid::new(6, 3, Boundary::AntiPeriodic, Boundary::Periodic, CellShape::PLAQUETTE).is_err());
        assert!(MomentumGrid::new(1, 4, Boundary::AntiPeriodic, Boundary::Periodic, CellShape::SINGLE).is_err());
    }

    #[test]
    fn negation_is_closed_and_involutive() {
        for cell in [CellShape::SINGLE, CellShape::COLUMN_PAIR, CellShape::PLAQUETTE] {
            for (bx, by) in [
                (Boundary::AntiPeriodic, Boundary::Periodic),
                (Boundary::Periodic, Boundary::AntiPeriodic),
            ] {
                let g = MomentumGrid::new(6, 4, bx, by, cell).unwrap();
                for i in 0..g.len() {
                    let j = g.neg_index(i);
                    assert_eq!(g.neg_index(j), i);
                    let (a, b) = (g.kpoints[i], g.kpoints[j]);
                    let px = 2.0 * PI / cell.cx as f64;
                    let py = 2.0 * PI / cell.cy as f64;
                    assert!(((a.kx + b.kx) / px - ((a.kx + b.kx) / px).round()).abs() < 1e-12);
                    assert!(((a.ky + b.ky) / py - ((a.ky + b.ky) / py).round()).abs() < 1e-12);
                }
                let total: f64 = g.representatives().iter().map(|r| r.1).sum();
                assert_eq!(total as usize, g.len());
            }
        }
    }

    #[test]
    fn fermi_surface_band_energies() {
        let m = ModelSpec::new(ModelKind::FermiSurface, grid(4, 4, CellShape::SINGLE)).unwrap();
        let e = m.band_energies(PI / 2.0, 0.0);
        assert!((e[0] + 2.0).abs() < 1e-14);
        let e = m.band_energies(PI / 2.0, PI);
        assert!((e[0] - 2.0).abs() < 1e-14);
        let q = m.bloch_hamiltonian(PI / 2.0, 0.0).quasiparticle_energies();
        assert!((q[0] + 2.0).abs() < 1e-13 && (q[1] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_real() {
        let kinds = [
            ModelKind::FermiSurface,
            ModelKind::PipSc,
            ModelKind::DiagonalChains { direction: -1 },
        ];
        for kind in kinds {
            let m = ModelSpec::new(kind, grid(6, 4, CellShape::SINGLE)).unwrap();
            for i in 0..m.grid.len() {
                let h = m.bloch_at(i).h;
                let hm = m.bloch_at(m.grid.neg_index(i)).h;
                assert!(max_abs_c(&(&h - h.adjoint())) < 1e-15);
                assert!(max_abs_c(&(&hm + h.transpose())) < 1e-14, "{kind:?}");
            }
        }
        let m = ModelSpec::new(ModelKind::BandInsulator, grid(6, 4, CellShape::PLAQUETTE)).unwrap();
        for i in 0..m.grid.len() {
            let h = m.bloch_at(i).h;
            let hm = m.bloch_at(m.grid.neg_index(i)).h;
            assert!(max_abs_c(&(&hm + h.transpose())) < 1e-14);
        }
    }

    #[test]
    fn band_insulator_needs_plaquette_cell() {
        assert!(ModelSpec::new(ModelKind::BandInsulator, grid(4, 4, CellShape::COLUMN_PAIR)).is_err());
        assert!(ModelSpec::new(ModelKind::BandInsulator, grid(4, 4, CellShape::PLAQUETTE)).is_ok());
    }

    #[test]
    fn two_by_two_fermi_surface_energy() {
        let m = ModelSpec::new(ModelKind::FermiSurface, grid(2, 2, CellShape::SINGLE)).unwrap();
        assert!((m.exact_ground_energy() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn staggered_atomic_limit_energy() {
        let m = ModelSpec::new(
            ModelKind::StaggeredOnsite { even: 1.0, odd: -1.0 },
            grid(6, 4, CellShape::PLAQUETTE),
        )
        .unwrap();
        assert!((m.exact_ground_energy() + 12.0).abs() < 1e-12);
    }

    #[test]
    fn exact_covariance_is_pure_and_real() {
        let m = ModelSpec::new(ModelKind::PipSc, grid(8, 8, CellShape::SINGLE)).unwrap();
        let state = m.exact_state().unwrap();
        for (i, g) in state.iter().enumerate() {
            assert!(purity_defect(g) < 1e-12);
            let gm = &state[m.grid.neg_index(i)];
            assert!(max_abs_c(&(gm + g.transpose())) < 1e-12);
        }
    }

    #[test]
    fn degenerate_point_is_an_error() {
        let m = ModelSpec::new(
            ModelKind::StaggeredOnsite { even: 0.0, odd: 0.0 },
            grid(4, 4, CellShape::SINGLE),
        )
        .unwrap();
        assert!(matches!(m.exact_covariance(0), Err(Error::DegenerateKPoint { .. })));
    }
}
