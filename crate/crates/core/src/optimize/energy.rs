//! Variational energy `Σ_k iTr[h(k) Γ_TNS(k)] + Tr h(k)` and its gradient.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{
    canonical_order, contract_physical, reorder_legs, CellTensors, LocalTensorCovariance, VirtualBonds, N_PHYS,
};
use crate::iso::{IsoParams, SiteLayout};
use num_complex::Complex64;

use crate::linalg::{CMat, RMat, I};
use crate::models::{CellShape, ModelSpec};

/// Largest tolerated imaginary residue of the trace sum.
pub const IMAG_TOL: f64 = 1e-9;

/// Cell large enough for both the model and the arrow pattern.
pub fn common_cell(a: CellShape, b: CellShape) -> CellShape {
    CellShape {
        cx: a.cx.max(b.cx),
        cy: a.cy.max(b.cy),
    }
}

#[derive(Clone, Debug)]
struct KTerm {
    index: usize,
    weight: f64,
    kx: f64,
    ky: f64,
    h: CMat,
}

/// Energy functional for one model and bond dimension, with the Bloch
/// Hamiltonians cached. Only one k-point of each `{k, −k}` pair is visited.
#[derive(Clone, Debug)]
pub struct EnergyProblem {
    model: ModelSpec,
    n_v: usize,
    bonds: VirtualBonds,
    terms: Vec<KTerm>,
    trace_total: f64,
}

/// Outcome of one energy evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Total energy over the lattice.
    pub energy: f64,
    /// Largest `|Re Tr[h Γ]|` seen, which vanishes for anti-Hermitian `Γ`.
    pub imag_residue: f64,
    /// Grid indices whose contraction needed regularisation.
    pub flagged: Vec<usize>,
}

impl EnergyProblem {
    pub fn new(model: &ModelSpec, n_v: usize) -> Self {
        let grid = &model.grid;
        let terms = grid
            .representatives()
            .into_iter()
            .map(|(index, weight)| {
                let k = grid.kpoints[index];
                KTerm {
                    index,
                    weight,
                    kx: k.kx,
                    ky: k.ky,
                    h: model.bloch_at(index).h,
                }
            })
            .collect();
        let trace_total = (0..grid.len())
            .map(|i| {
                let h = model.bloch_at(i).h;
                (0..h.nrows()).map(|j| h[(j, j)].re).sum::<f64>()
            })
            .sum();
        EnergyProblem {
            model: model.clone(),
            n_v,
            bonds: VirtualBonds::new(n_v, model.cell()),
            terms,
            trace_total,
        }
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn n_sites(&self) -> usize {
        self.model.grid.n_sites()
    }

    fn check(&self, locals: &[LocalTensorCovariance]) -> Result<CellTensors> {
        if locals.len() != self.model.cell().sites() {
            return Err(Error::ShapeMismatch(format!(
                "{} local tensors for a {} cell",
                locals.len(),
                self.model.cell()
            )));
        }
        if locals.iter().any(|l| l.n_v != self.n_v) {
            return Err(Error::ShapeMismatch(format!("local tensors must have n_v = {}", self.n_v)));
        }
        CellTensors::assemble(locals)
    }

    pub fn check_params(&self, params: &IsoParams) -> Result<()> {
        if params.cell != self.model.cell() || params.n_v != self.n_v {
            return Err(Error::ShapeMismatch(format!(
                "parameters (cell {}, n_v {}) do not match the problem (cell {}, n_v {})",
                params.cell,
                params.n_v,
                self.model.cell(),
                self.n_v
            )));
        }
        Ok(())
    }

    pub fn energy_of(&self, params: &IsoParams) -> Result<Evaluation> {
        self.check_params(params)?;
        self.energy(&params.local_covariances()?)
    }

    /// Energy of the state defined by one local covariance per cell site.
    pub fn energy(&self, locals: &[LocalTensorCovariance]) -> Result<Evaluation> {
        let cell = self.check(locals)?;
        let parts: Vec<(f64, f64, Option<usize>)> = self
            .terms
            .par_iter()
            .with_min_len(4)
            .map(|t| {
                let c = contract_physical(&cell, &self.bonds, t.kx, t.ky);
                let tr = trace_product(&t.h, &c.gamma);
                (t.weight * -tr.im, tr.re.abs(), c.flagged.then_some(t.index))
            })
            .collect();
        Ok(self.reduce(&parts))
    }

    fn reduce(&self, parts: &[(f64, f64, Option<usize>)]) -> Evaluation {
        let mut energy = self.trace_total;
        let mut imag_residue: f64 = 0.0;
        let mut flagged = Vec::new();
        for &(e, r, f) in parts {
            energy += e;
            imag_residue = imag_residue.max(r);
            flagged.extend(f);
        }
        Evaluation { energy, imag_residue, flagged }
    }

    /// Energy and `∂E/∂Γ_ψ` per site, as matrices `G` with
    /// `dE = Σ_ij G_ij dΓ_ij` over the upper `(A, B)` and `D` blocks.
    pub fn energy_and_local_gradient(&self, locals: &[LocalTensorCovariance]) -> Result<(Evaluation, Vec<RMat>)> {
        let cell = self.check(locals)?;
        let (np, nv) = (cell.phys_dim(), cell.virt_dim());
        let parts: Vec<((f64, f64, Option<usize>), RMat)> = self
            .terms
            .par_iter()
            .with_min_len(4)
            .map(|t| {
                let c = contract_physical(&cell, &self.bonds, t.kx, t.ky);
                let tr = trace_product(&t.h, &c.gamma);
                let mut g = RMat::zeros(np + nv, np + nv);
                // G_A = i hᵀ
                for r in 0..np {
                    for s in 0..np {
                        g[(r, s)] = -t.weight * t.h[(s, r)].im;
                    }
                }
                if nv > 0 {
                    let y = &c.y;
                    let yh = y * &t.h;
                    for r in 0..np {
                        for s in 0..nv {
                            // G_B = i (Y h)ᵀ − i h Y†
                            let mut hyd = Complex64::new(0.0, 0.0);
                            for u in 0..np {
                                hyd += t.h[(r, u)] * y[(s, u)].conj();
                            }
                            g[(r, np + s)] = t.weight * (I * (yh[(s, r)] - hyd)).re;
                        }
                    }
                    for r in 0..nv {
                        for s in 0..nv {
                            // G_D = i (Y h Y†)ᵀ
                            let mut acc = Complex64::new(0.0, 0.0);
                            for u in 0..np {
                                acc += yh[(s, u)] * y[(r, u)].conj();
                            }
                            g[(np + r, np + s)] = -t.weight * acc.im;
                        }
                    }
                }
                ((t.weight * -tr.im, tr.re.abs(), c.flagged.then_some(t.index)), g)
            })
            .collect();
        let mut total = RMat::zeros(np + nv, np + nv);
        let mut scalars = Vec::with_capacity(parts.len());
        for (s, g) in &parts {
            total += g;
            scalars.push(*s);
        }
        let eval = self.reduce(&scalars);
        let nv4 = 4 * self.n_v;
        let local = (0..locals.len())
            .map(|s| {
                let n = N_PHYS + nv4;
                let mut g = RMat::zeros(n, n);
                let (p0, v0) = (N_PHYS * s, nv4 * s);
                g.view_mut((0, 0), (N_PHYS, N_PHYS))
                    .copy_from(&total.view((p0, p0), (N_PHYS, N_PHYS)));
                g.view_mut((0, N_PHYS), (N_PHYS, nv4))
                    .copy_from(&total.view((p0, np + v0), (N_PHYS, nv4)));
                g.view_mut((N_PHYS, N_PHYS), (nv4, nv4))
                    .copy_from(&total.view((np + v0, np + v0), (nv4, nv4)));
                g
            })
            .collect();
        Ok((eval, local))
    }

    /// Energy and Riemannian gradient: per site the antisymmetric `Ω` with
    /// `d/dt E(Q·exp(tX))|₀ = Σ_ij Ω_ij X_ij`.
    pub fn energy_and_gradient(&self, params: &IsoParams) -> Result<(Evaluation, Vec<RMat>)> {
        self.check_params(params)?;
        let locals = params.local_covariances()?;
        let (eval, local_grads) = self.energy_and_local_gradient(&locals)?;
        let layouts = params.layouts()?;
        let omegas = params
            .q
            .iter()
            .zip(&layouts)
            .zip(&local_grads)
            .map(|((q, layout), g)| pull_back(q, layout, g, params.n_v))
            .collect::<Result<Vec<_>>>()?;
        Ok((eval, omegas))
    }

    /// Physical covariance `Γ_TNS(k)` at every grid point, in grid order.
    pub fn covariances(&self, locals: &[LocalTensorCovariance]) -> Result<Vec<CMat>> {
        let cell = self.check(locals)?;
        Ok(self
            .model
            .grid
            .kpoints
            .par_iter()
            .map(|k| contract_physical(&cell, &self.bonds, k.kx, k.ky).gamma)
            .collect())
    }
}

/// `Tr[h Γ]` without forming the product.
fn trace_product(h: &CMat, g: &CMat) -> num_complex::Complex64 {
    let n = h.nrows();
    let mut acc = num_complex::Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += h[(i, j)] * g[(j, i)];
        }
    }
    acc
}

/// Chain rule from `∂E/∂Γ_ψ` (canonical order) to the Lie-algebra gradient
/// of `Q` under `Q ← Q·exp(X)`.
pub fn pull_back(q: &RMat, layout: &SiteLayout, g: &RMat, n_v: usize) -> Result<RMat> {
    let g = reorder_legs(g, &canonical_order(n_v), &layout.io_order)?;
    let (n_in, n_out) = (layout.n_in, layout.n_out);
    let g_aa = g.view((0, 0), (n_in, n_in));
    let g_ab = g.view((0, n_in), (n_in, n_out));
    let g_ba = g.view((n_in, 0), (n_out, n_in));
    let k = layout.free_form();
    let w = q.transpose() * g_aa * q;
    let mut c = w.transpose() * &k - &w * &k;
    if n_out > 0 {
        let rhs = q.transpose() * (g_ab - g_ba.transpose());
        let mut head = c.columns_mut(0, n_out);
        head += rhs;
    }
    Ok((&c - c.transpose()) * 0.5)
}

/// Total energy of isometric parameters on a model.
pub fn expectation_energy(params: &IsoParams, model: &ModelSpec) -> Result<Evaluation> {
    EnergyProblem::new(model, params.n_v).energy_of(params)
}

/// Riemannian gradient (one antisymmetric matrix per cell site).
pub fn riemannian_gradient(params: &IsoParams, model: &ModelSpec) -> Result<Vec<RMat>> {
    EnergyProblem::new(model, params.n_v)
        .energy_and_gradient(params)
        .map(|(_, g)| g)
}

/// `Γ_TNS(k)` of isometric parameters at every grid point of `model`.
pub fn physical_covariances(params: &IsoParams, model: &ModelSpec) -> Result<Vec<CMat>> {
    let problem = EnergyProblem::new(model, params.n_v);
    problem.check_params(params)?;
    problem.covariances(&params.local_covariances()?)
}
