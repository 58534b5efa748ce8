//! Local tensor covariances, the virtual Bell-pair covariance, and the
//! momentum-space contraction `Γ_TNS(k) = A + B (D + Γ_virtual(k))⁻¹ Bᵀ`.
//!
//! Per site the Majorana modes are ordered `p, l, d, r, u` with two physical
//! modes and `n_v` modes on each virtual leg. For a unit cell the site blocks
//! are stacked in site order for both the physical and the virtual modes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, CMat, ComplexLu, RMat};
use crate::models::CellShape;

/// Physical Majorana modes per site.
pub const N_PHYS: usize = 2;

/// Condition number above which a contraction is regularised.
pub const COND_LIMIT: f64 = 1e12;
/// Tikhonov shift for regularised contractions.
pub const TIKHONOV_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leg {
    P,
    L,
    D,
    R,
    U,
}

impl Leg {
    pub const VIRTUAL: [Leg; 4] = [Leg::L, Leg::D, Leg::R, Leg::U];

    pub fn symbol(self) -> char {
        match self {
            Leg::P => 'p',
            Leg::L => 'l',
            Leg::D => 'd',
            Leg::R => 'r',
            Leg::U => 'u',
        }
    }

    /// Position of a virtual leg inside the `l, d, r, u` block.
    pub fn virtual_slot(self) -> Option<usize> {
        Leg::VIRTUAL.iter().position(|&l| l == self)
    }
}

/// One Majorana mode on a tensor leg.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode {
    pub leg: Leg,
    pub index: usize,
}

pub fn leg_modes(leg: Leg, n_v: usize) -> impl Iterator<Item = Mode> {
    let n = if leg == Leg::P { N_PHYS } else { n_v };
    (0..n).map(move |index| Mode { leg, index })
}

/// `p, l, d, r, u` ordering of all modes on one tensor.
pub fn canonical_order(n_v: usize) -> Vec<Mode> {
    std::iter::once(Leg::P)
        .chain(Leg::VIRTUAL)
        .flat_map(|leg| leg_modes(leg, n_v))
        .collect()
}

/// Simultaneous row/column permutation of `gamma` from `from` ordering to
/// `to` ordering.
pub fn reorder_legs(gamma: &RMat, from: &[Mode], to: &[Mode]) -> Result<RMat> {
    let n = from.len();
    if to.len() != n || gamma.nrows() != n || gamma.ncols() != n {
        return Err(Error::ModeMismatch);
    }
    let mut src = Vec::with_capacity(n);
    for mode in to {
        match from.iter().position(|m| m == mode) {
            Some(i) => src.push(i),
            None => return Err(Error::ModeMismatch),
        }
    }
    let mut seen = vec![false; n];
    for &i in &src {
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::ModeMismatch);
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| gamma[(src[i], src[j])]))
}

/// Real-space covariance `Γ_ψ` of one local tensor in `p, l, d, r, u` order.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTensorCovariance {
    pub n_v: usize,
    pub gamma: RMat,
}

impl LocalTensorCovariance {
    pub fn new(n_v: usize, gamma: RMat) -> Result<Self> {
        let n = N_PHYS + 4 * n_v;
        if gamma.nrows() != n || gamma.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "local covariance for n_v = {n_v} must be {n}x{n}, got {}x{}",
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        Ok(LocalTensorCovariance { n_v, gamma })
    }

    /// Pure product state: physical block `a`, each `l` mode paired with the
    /// matching `r` mode and each `d` mode with the matching `u` mode.
    pub fn product(a: RMat, n_v: usize) -> Self {
        let n = N_PHYS + 4 * n_v;
        let mut gamma = RMat::zeros(n, n);
        gamma.view_mut((0, 0), (N_PHYS, N_PHYS)).copy_from(&a);
        for (from, to) in [(Leg::L, Leg::R), (Leg::D, Leg::U)] {
            for j in 0..n_v {
                let i = N_PHYS + n_v * from.virtual_slot().unwrap() + j;
                let k = N_PHYS + n_v * to.virtual_slot().unwrap() + j;
                gamma[(i, k)] = 1.0;
                gamma[(k, i)] = -1.0;
            }
        }
        LocalTensorCovariance { n_v, gamma }
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn a(&self) -> RMat {
        self.gamma.view((0, 0), (N_PHYS, N_PHYS)).into_owned()
    }

    pub fn b(&self) -> RMat {
        self.gamma.view((0, N_PHYS), (N_PHYS, 4 * self.n_v)).into_owned()
    }

    pub fn d(&self) -> RMat {
        let nv4 = 4 * self.n_v;
        self.gamma.view((N_PHYS, N_PHYS), (nv4, nv4)).into_owned()
    }

    pub fn antisymmetry_defect(&self) -> f64 {
        max_abs(&(&self.gamma + self.gamma.transpose()))
    }

    pub fn purity_defect(&self) -> f64 {
        let n = self.dim();
        max_abs(&(&self.gamma * self.gamma.transpose() - RMat::identity(n, n)))
    }

    /// Largest entry of the block spanned by `legs` (zero for outgoing legs
    /// of an isometric tensor).
    pub fn block_on(&self, legs: &[Leg]) -> f64 {
        let idx: Vec<usize> = canonical_order(self.n_v)
            .iter()
            .enumerate()
            .filter(|(_, m)| legs.contains(&m.leg))
            .map(|(i, _)| i)
            .collect();
        let mut worst: f64 = 0.0;
        for &i in &idx {
            for &j in &idx {
                worst = worst.max(self.gamma[(i, j)].abs());
            }
        }
        worst
    }
}

/// Bond dimension `χ = √2^{n_v}`.
pub fn bond_dimension(n_v: usize) -> f64 {
    2f64.powf(n_v as f64 / 2.0)
}

/// Bell-pair pairing pattern of the virtual modes inside one unit cell.
///
/// Each entry pairs an incoming-side mode (`l` or `d` of the neighbour) with
/// the matching outgoing-side mode (`r` or `u`) across a bond whose far end
/// sits in the cell displaced by `offset` lattice sites.
#[derive(Clone, Debug)]
pub struct VirtualBonds {
    pub n_v: usize,
    pub cell: CellShape,
    pairs: Vec<(usize, usize, (i64, i64))>,
}

impl VirtualBonds {
    pub fn new(n_v: usize, cell: CellShape) -> Self {
        let mut pairs = Vec::new();
        let base = |s: usize, leg: Leg| 4 * n_v * s + n_v * leg.virtual_slot().unwrap();
        for s in 0..cell.sites() {
            let (sx, sy) = cell.site_offset(s);
            let (x, y) = (sx as i64, sy as i64);
            for (out_leg, in_leg, (dx, dy)) in [(Leg::R, Leg::L, (1, 0)), (Leg::U, Leg::D, (0, 1))] {
                let (offset, t) = cell.locate(x + dx, y + dy);
                for j in 0..n_v {
                    pairs.push((base(t, in_leg) + j, base(s, out_leg) + j, offset));
                }
            }
        }
        VirtualBonds { n_v, cell, pairs }
    }

    pub fn dim(&self) -> usize {
        4 * self.n_v * self.cell.sites()
    }

    /// Adds `Γ_virtual(k)` into `m` in place.
    pub fn add_to(&self, m: &mut CMat, kx: f64, ky: f64) {
        for &(i, j, (ox, oy)) in &self.pairs {
            let phase = Complex64::from_polar(1.0, -(kx * ox as f64 + ky * oy as f64));
            m[(i, j)] -= phase;
            m[(j, i)] += phase.conj();
        }
    }
}

/// Momentum-space covariance of the virtual Bell pairs.
pub fn virtual_covariance(kx: f64, ky: f64, n_v: usize, cell: CellShape) -> CMat {
    let bonds = VirtualBonds::new(n_v, cell);
    let mut m = CMat::zeros(bonds.dim(), bonds.dim());
    bonds.add_to(&mut m, kx, ky);
    m
}

/// Cell-level blocks `A = ⊕A_s`, `B = ⊕B_s`, `D = ⊕D_s`.
#[derive(Clone, Debug)]
pub struct CellTensors {
    pub n_v: usize,
    pub sites: usize,
    pub a: RMat,
    pub b: RMat,
    pub d: RMat,
}

impl CellTensors {
    pub fn assemble(locals: &[LocalTensorCovariance]) -> Result<Self> {
        let Some(first) = locals.first() else {
            return Err(Error::ShapeMismatch("no local tensors".into()));
        };
        let n_v = first.n_v;
        if locals.iter().any(|l| l.n_v != n_v) {
            return Err(Error::ShapeMismatch("local tensors disagree on n_v".into()));
        }
        let m = locals.len();
        let nv4 = 4 * n_v;
        let mut a = RMat::zeros(N_PHYS * m, N_PHYS * m);
        let mut b = RMat::zeros(N_PHYS * m, nv4 * m);
        let mut d = RMat::zeros(nv4 * m, nv4 * m);
        for (s, local) in locals.iter().enumerate() {
            a.view_mut((N_PHYS * s, N_PHYS * s), (N_PHYS, N_PHYS)).copy_from(&local.a());
            b.view_mut((N_PHYS * s, nv4 * s), (N_PHYS, nv4)).copy_from(&local.b());
            d.view_mut((nv4 * s, nv4 * s), (nv4, nv4)).copy_from(&local.d());
        }
        Ok(CellTensors { n_v, sites: m, a, b, d })
    }

    pub fn phys_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn virt_dim(&self) -> usize {
        self.d.nrows()
    }
}

/// Result of contracting at one k-point.
#[derive(Clone, Debug)]
pub struct Contraction {
    /// Physical covariance `Γ_TNS(k)`.
    pub gamma: CMat,
    /// `Y = (D + Γ_virtual(k))⁻¹ Bᵀ` (regularised when flagged).
    pub y: CMat,
    /// 1-norm condition estimate of `D + Γ_virtual(k)`.
    pub condition: f64,
    pub flagged: bool,
}

/// Contracts the cell tensors against the virtual Bell pairs at `k`.
pub fn contract_physical(cell: &CellTensors, bonds: &VirtualBonds, kx: f64, ky: f64) -> Contraction {
    let np = cell.phys_dim();
    let nv = cell.virt_dim();
    let a = crate::linalg::to_complex(&cell.a);
    if nv == 0 {
        return Contraction {
            gamma: a,
            y: CMat::zeros(0, np),
            condition: 1.0,
            flagged: false,
        };
    }
    let mut m = crate::linalg::to_complex(&cell.d);
    bonds.add_to(&mut m, kx, ky);
    let bt = crate::linalg::to_complex(&cell.b.transpose());

    let lu = ComplexLu::new(&m);
    let solved = (!lu.is_singular()).then(|| lu.solve(&bt));
    let (y, condition, flagged) = match solved {
        Some(y) => {
            let cond = norm1(&m) * inverse_norm1_estimate(&lu, nv);
            if cond.is_finite() && cond <= COND_LIMIT {
                (y, cond, false)
            } else {
                (tikhonov_solve(&m, &bt), cond, true)
            }
        }
        None => (tikhonov_solve(&m, &bt), f64::INFINITY, true),
    };
    let gamma = a + crate::linalg::to_complex(&cell.b) * &y;
    Contraction { gamma, y, condition, flagged }
}

fn tikhonov_solve(m: &CMat, rhs: &CMat) -> CMat {
    let n = m.nrows();
    let mh = m.adjoint();
    let normal = &mh * m + CMat::identity(n, n) * Complex64::new(TIKHONOV_EPS, 0.0);
    normal
        .lu()
        .solve(&(mh * rhs))
        .unwrap_or_else(|| CMat::zeros(n, rhs.ncols()))
}

fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager's estimator of `‖M⁻¹‖₁`. Uses `M† = −M`, which holds for every
/// `D + Γ_virtual(k)` with `D` real antisymmetric.
fn inverse_norm1_estimate(lu: &ComplexLu, n: usize) -> f64 {
    let mut x = CMat::from_element(n, 1, Complex64::new(1.0 / n as f64, 0.0));
    let mut estimate = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x);
        estimate = y.iter().map(|v| v.norm()).sum::<f64>();
        let xi = y.map(|v| if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) });
        let z = lu.solve(&xi);
        // z = M^{-H} ξ = −M^{-1} ξ
        let z = -z;
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        let zx: f64 = z.iter().zip(x.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        if zmax <= zx {
            break;
        }
        x = CMat::zeros(n, 1);
        x[jmax] = Complex64::new(1.0, 0.0);
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_c, purity_defect};

    #[test]
    fn empty_virtual_covariance() {
        assert_eq!(virtual_covariance(0.3, 0.1, 0, CellShape::SINGLE).nrows(), 0);
    }

    #[test]
    fn virtual_covariance_at_zero_momentum() {
        let g = virtual_covariance(0.0, 0.0, 1, CellShape::SINGLE);
        // ordering l, d, r, u: Γ₁ occupies rows (l, d), columns (r, u)
        let gamma1 = g.view((0, 2), (2, 2)).into_owned();
        assert!(max_abs_c(&(gamma1 + CMat::identity(2, 2))) < 1e-15);
    }

    #[test]
    fn virtual_covariance_is_unitary_and_block_off_diagonal() {
        for cell in [CellShape::SINGLE, CellShape::COLUMN_PAIR, CellShape::PLAQUETTE] {
            let g = virtual_covariance(0.7, -1.3, 2, cell);
            assert!(purity_defect(&g) < 1e-14);
            assert!(max_abs_c(&(&g + g.adjoint())) < 1e-15);
        }
        let g = virtual_covariance(0.7, -1.3, 3, CellShape::SINGLE);
        let sv = g.clone().svd(false, false).singular_values;
        assert!(sv.iter().all(|s| (s - 1.0).abs() < 1e-14));
        // (l,d) x (l,d) and (r,u) x (r,u) blocks vanish
        assert!(max_abs_c(&g.view((0, 0), (6, 6)).into_owned()) == 0.0);
        assert!(max_abs_c(&g.view((6, 6), (6, 6)).into_owned()) == 0.0);
    }

    #[test]
    fn column_pair_phases() {
        let (kx, ky) = (0.4, 0.9);
        let g = virtual_covariance(kx, ky, 1, CellShape::COLUMN_PAIR);
        // site 0 r-leg pairs with site 1 l-leg inside the cell: phase 1
        let (l1, r0) = (4, 2);
        assert!((g[(l1, r0)] + Complex64::new(1.0, 0.0)).norm() < 1e-15);
        // site 1 r-leg pairs with site 0 l-leg of the next cell: e^{-2ikx}
        let (l0, r1) = (0, 6);
        assert!((g[(l0, r1)] + Complex64::from_polar(1.0, -2.0 * kx)).norm() < 1e-15);
        // vertical bonds stay on the same site with e^{-iky}
        let (d0, u0) = (1, 3);
        assert!((g[(d0, u0)] + Complex64::from_polar(1.0, -ky)).norm() < 1e-15);
    }

    #[test]
    fn reorder_identity_and_involution() {
        let order = canonical_order(1);
        let g = RMat::from_fn(6, 6, |i, j| (i as f64) - (j as f64) * 0.5);
        assert_eq!(reorder_legs(&g, &order, &order).unwrap(), g);
        let mut shuffled = order.clone();
        shuffled.reverse();
        shuffled.swap(0, 3);
        let there = reorder_legs(&g, &order, &shuffled).unwrap();
        let back = reorder_legs(&there, &shuffled, &order).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn reorder_rejects_mismatched_sets() {
        let a = canonical_order(1);
        let mut b = a.clone();
        b[5] = Mode { leg: Leg::U, index: 7 };
        assert!(reorder_legs(&RMat::zeros(6, 6), &a, &b).is_err());
        assert!(reorder_legs(&RMat::zeros(6, 6), &a, &a[..5]).is_err());
    }

    #[test]
    fn no_virtual_modes_reduce_to_a() {
        let a = crate::linalg::symplectic_form(2, 0, 1);
        let local = LocalTensorCovariance::product(a.clone(), 0);
        let cell = CellTensors::assemble(&[local]).unwrap();
        let c = contract_physical(&cell, &VirtualBonds::new(0, CellShape::SINGLE), 0.3, 0.2);
        assert!(max_abs_c(&(c.gamma - crate::linalg::to_complex(&a))) == 0.0);
    }

    #[test]
    fn product_state_is_k_independent() {
        let a = -crate::linalg::symplectic_form(2, 0, 1);
        let local = LocalTensorCovariance::product(a.clone(), 2);
        assert!(local.purity_defect() < 1e-15);
        let cell = CellTensors::assemble(&[local]).unwrap();
        let bonds = VirtualBonds::new(2, CellShape::SINGLE);
        for (kx, ky) in [(0.1, 0.2), (2.0, -1.0), (3.0, 0.5)] {
            let c = contract_physical(&cell, &bonds, kx, ky);
            assert!(!c.flagged);
            assert!(max_abs_c(&(c.gamma - crate::linalg::to_complex(&a))) < 1e-15);
        }
    }

    #[test]
    fn bond_dimension_bookkeeping() {
        assert_eq!(bond_dimension(8), 16.0);
        assert_eq!(bond_dimension(4), 4.0);
    }
}
