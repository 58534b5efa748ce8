#![allow(dead_code)]

use isogftns::linalg::{hermitian_eigh, CMat, RMat, I};
use isogftns::models::{Boundary, ModelKind};
use num_complex::Complex64;

/// Real-space lattice Hamiltonian
/// `Σ μ n + Σ t (c†_{x+δ} c_x + h.c.) + Σ (D c_x c_{x+δ} + h.c.)` written as
/// `½ Ψ† H_BdG Ψ` with `Ψ = (c_0 … c_{N−1}, c†_0 … c†_{N−1})` and sites
/// ordered `x + lx·y`. Boundary-crossing bonds pick up the twist signs;
/// x is always anti-periodic.
pub fn realspace_bdg(kind: ModelKind, lx: usize, ly: usize, bc_y: Boundary) -> CMat {
    let n = lx * ly;
    let idx = |x: i64, y: i64| (x.rem_euclid(lx as i64) + lx as i64 * y.rem_euclid(ly as i64)) as usize;
    let sign = |x: i64, y: i64| {
        let wx = x.div_euclid(lx as i64);
        let wy = y.div_euclid(ly as i64);
        let sx = if wx % 2 != 0 { -1.0 } else { 1.0 };
        let sy = if bc_y == Boundary::AntiPeriodic && wy % 2 != 0 { -1.0 } else { 1.0 };
        sx * sy
    };
    let (mu, hops, pairs): (Box<dyn Fn(i64, i64) -> f64>, Vec<((i64, i64), f64)>, Vec<((i64, i64), Complex64)>) = match kind {
        ModelKind::FermiSurface => (Box::new(|_, _| 0.0), vec![((1, 0), -1.0), ((0, 1), -1.0)], vec![]),
        ModelKind::BandInsulator => (
            Box::new(|x, y| if (x + y) % 2 == 0 { 1.0 } else { -1.0 }),
            vec![((1, 0), -1.0), ((0, 1), -1.0)],
            vec![],
        ),
        ModelKind::PipSc => (
            Box::new(|_, _| 2.0),
            vec![((1, 0), -1.0), ((0, 1), -1.0)],
            vec![((1, 0), Complex64::new(1.0, 0.0)), ((0, 1), I)],
        ),
        ModelKind::DiagonalChains { direction } => (Box::new(|_, _| 0.0), vec![((1, direction as i64), -1.0)], vec![]),
        ModelKind::StaggeredOnsite { even, odd } => (
            Box::new(move |x, y| if (x + y) % 2 == 0 { even } else { odd }),
            vec![],
            vec![],
        ),
    };
    let mut t = CMat::zeros(n, n);
    let mut p = CMat::zeros(n, n);
    for y in 0..ly as i64 {
        for x in 0..lx as i64 {
            let i = idx(x, y);
            t[(i, i)] += Complex64::new(mu(x, y), 0.0);
            for &((dx, dy), amp) in &hops {
                let j = idx(x + dx, y + dy);
                let a = amp * sign(x + dx, y + dy);
                t[(j, i)] += Complex64::new(a, 0.0);
                t[(i, j)] += Complex64::new(a, 0.0);
            }
            for &((dx, dy), d) in &pairs {
                let j = idx(x + dx, y + dy);
                let d = d * sign(x + dx, y + dy);
                // D c_i c_j = ½ (D c_i c_j − D c_j c_i)
                p[(i, j)] += d;
                p[(j, i)] -= d;
            }
        }
    }
    let delta = p.adjoint();
    let mut bdg = CMat::zeros(2 * n, 2 * n);
    bdg.view_mut((0, 0), (n, n)).copy_from(&t);
    bdg.view_mut((0, n), (n, n)).copy_from(&delta);
    bdg.view_mut((n, 0), (n, n)).copy_from(&delta.adjoint());
    bdg.view_mut((n, n), (n, n)).copy_from(&(-t.transpose()));
    bdg
}

/// Minus half the positive BdG eigenvalues.
pub fn realspace_ground_energy(kind: ModelKind, lx: usize, ly: usize, bc_y: Boundary) -> f64 {
    let (vals, _) = hermitian_eigh(&realspace_bdg(kind, lx, ly, bc_y));
    -0.5 * vals.iter().filter(|v| **v > 0.0).sum::<f64>()
}

/// Ground-state Majorana covariance `Γ = (i/2)⟨[γ, γ]⟩`, ordered
/// `(site, γ¹), (site, γ²)` with `γ¹ = c + c†`, `γ² = −i(c† − c)`.
/// Built from `⟨Ψ Ψ†⟩ = Σ_{E>0} w w†` over BdG eigenvectors `w`.
pub fn realspace_covariance(kind: ModelKind, lx: usize, ly: usize, bc_y: Boundary) -> RMat {
    let n = lx * ly;
    let (vals, vecs) = hermitian_eigh(&realspace_bdg(kind, lx, ly, bc_y));
    let mut c = CMat::zeros(2 * n, 2 * n);
    for (e, w) in vals.iter().zip(vecs.column_iter()) {
        assert!(e.abs() > 1e-9, "zero mode in the oracle");
        if *e > 0.0 {
            c += &w * w.adjoint();
        }
    }
    let mut t = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        t[(2 * i, i)] = Complex64::new(1.0, 0.0);
        t[(2 * i, n + i)] = Complex64::new(1.0, 0.0);
        t[(2 * i + 1, i)] = I;
        t[(2 * i + 1, n + i)] = -I;
    }
    let gg = &t * c * t.adjoint();
    RMat::from_fn(2 * n, 2 * n, |a, b| {
        let v = I * (gg[(a, b)] - if a == b { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        assert!(v.im.abs() < 1e-10, "complex covariance entry {v}");
        v.re
    })
}


