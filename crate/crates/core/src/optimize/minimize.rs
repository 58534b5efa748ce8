//! Multi-start Riemannian descent on products of special orthogonal groups.
//!
//! Points are `Q ∈ SO(n)` per site; tangent vectors are left-trivialised
//! generators `X` with `Q ← Q·Cay(X)`. Coordinates are the strict upper
//! triangles of the generators, so every inner product below is Euclidean in
//! those coordinates.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::energy::{common_cell, EnergyProblem, Evaluation};
use crate::error::{Error, Result};
use crate::iso::{random_init, ArrowPattern, IsoParams};
use crate::linalg::{cayley, orthogonality_defect, random_antisymmetric, reorthonormalize, RMat};
use crate::models::ModelSpec;

/// Re-orthonormalise once `‖QᵀQ − I‖∞` exceeds this.
const DRIFT_LIMIT: f64 = 1e-13;
/// Largest generator norm tried by the line search.
const MAX_STEP: f64 = 0.5;
/// Accepted steps over which the energy must fall by more than
/// `STALL_TOL · max(|E|, 1)` to keep descending.
const STALL_WINDOW: usize = 20;
const STALL_TOL: f64 = 1e-13;
/// Curvature pairs with `sᵀy` below this fraction of `|s||y|` are dropped.
const CURVATURE_EPS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub n_starts: usize,
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    pub perturb_every: usize,
    pub perturb_scale: f64,
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    pub lbfgs_memory: usize,
    pub grad_tol: f64,
    pub newton_polish: bool,
    pub newton_iters: usize,
    /// Seed a run at `n_v` from a converged `n_v − 1` run of the same start.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            n_starts: 30,
            phase1_iters: 2000,
            phase2_iters: 10000,
            perturb_every: 10000,
            perturb_scale: 1e-2,
            backtrack_factor: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 40,
            lbfgs_memory: 12,
            grad_tol: 1e-9,
            newton_polish: true,
            newton_iters: 30,
            warm_start: false,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_starts", self.n_starts),
            ("perturb_every", self.perturb_every),
            ("max_backtracks", self.max_backtracks),
            ("lbfgs_memory", self.lbfgs_memory),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::ShapeMismatch(format!("optimizer setting {name} must be positive")));
            }
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::ShapeMismatch("grad_tol must be positive".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::ShapeMismatch("backtrack_factor must lie in (0, 1)".into()));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::ShapeMismatch("sufficient_decrease must lie in (0, 1)".into()));
        }
        if !(self.perturb_scale >= 0.0) {
            return Err(Error::ShapeMismatch("perturb_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Energy and gradient-norm history of one descent run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub energies: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Energy-and-gradient evaluations spent, including rejected trials.
    pub evaluations: u64,
}

impl Trajectory {
    fn push(&mut self, energy: f64, grad_norm: f64) {
        self.energies.push(energy);
        self.grad_norms.push(grad_norm);
    }

    pub fn min_energy(&self) -> f64 {
        self.energies.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimReport {
    pub model: String,
    pub pattern: String,
    pub n_v: usize,
    pub lx: usize,
    pub ly: usize,
    pub starts: Vec<Trajectory>,
    pub best_start: usize,
    /// Continuation of the best start (phase 2 and polish).
    pub refinement: Trajectory,
    /// Total energy of the returned parameters.
    pub best_energy: f64,
    pub exact_energy: f64,
    pub error_per_site: f64,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub flagged_kpoints: Vec<usize>,
    pub max_imag_residue: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
    #[serde(skip)]
    pub params: Option<IsoParams>,
}

/// Flattened Riemannian gradient: strict upper triangles of `Ω_s` scaled by 2
/// so that `dE = Σ g_i θ_i` for `X_ij = θ`, `X_ji = −θ`.
fn flatten(omegas: &[RMat]) -> DVector<f64> {
    let n: usize = omegas.iter().map(|o| o.nrows() * o.nrows().saturating_sub(1) / 2).sum();
    let mut v = DVector::zeros(n);
    let mut idx = 0;
    for o in omegas {
        for i in 0..o.nrows() {
            for j in (i + 1)..o.ncols() {
                v[idx] = 2.0 * o[(i, j)];
                idx += 1;
            }
        }
    }
    v
}

fn unflatten(theta: &DVector<f64>, dims: &[usize]) -> Vec<RMat> {
    let mut idx = 0;
    dims.iter()
        .map(|&n| {
            let mut x = RMat::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    x[(i, j)] = theta[idx];
                    x[(j, i)] = -theta[idx];
                    idx += 1;
                }
            }
            x
        })
        .collect()
}

/// Frobenius norm of the Riemannian gradient `Ω`.
pub fn gradient_norm(omegas: &[RMat]) -> f64 {
    omegas.iter().map(|o| o.norm_squared()).sum::<f64>().sqrt()
}

/// `Q_s ← Q_s·Cay(X_s)`, re-orthonormalised when rounding drift shows.
pub fn retract(params: &IsoParams, step: &[RMat]) -> IsoParams {
    let q = params
        .q
        .iter()
        .zip(step)
        .map(|(q, x)| {
            let mut next = q * cayley(x);
            while orthogonality_defect(&next) > DRIFT_LIMIT {
                next = reorthonormalize(&next);
            }
            next
        })
        .collect();
    IsoParams { q, ..params.clone() }
}

/// A point on the manifold with its energy and flattened gradient.
#[derive(Clone, Debug)]
pub struct State {
    pub params: IsoParams,
    pub eval: Evaluation,
    pub grad: DVector<f64>,
    pub grad_norm: f64,
}

impl State {
    pub fn new(problem: &EnergyProblem, params: IsoParams) -> Result<Self> {
        let (eval, omegas) = problem.energy_and_gradient(&params)?;
        Ok(State {
            grad: flatten(&omegas),
            grad_norm: gradient_norm(&omegas),
            params,
            eval,
        })
    }

    fn dims(&self) -> Vec<usize> {
        self.params.q.iter().map(|q| q.nrows()).collect()
    }

    fn moved(&self, problem: &EnergyProblem, theta: &DVector<f64>) -> Result<State> {
        let step = unflatten(theta, &self.dims());
        State::new(problem, retract(&self.params, &step))
    }
}

struct Lbfgs {
    memory: usize,
    pairs: Vec<(DVector<f64>, DVector<f64>, f64)>,
}

impl Lbfgs {
    fn new(memory: usize) -> Self {
        Lbfgs { memory, pairs: Vec::new() }
    }

    fn reset(&mut self) {
        self.pairs.clear();
    }

    fn direction(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.last() {
            q *= s.dot(y) / y.dot(y);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        -q
    }

    fn update(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if sy > CURVATURE_EPS * s.norm() * y.norm() {
            if self.pairs.len() == self.memory {
                self.pairs.remove(0);
            }
            self.pairs.push((s, y, 1.0 / sy));
        }
    }
}

/// Armijo backtracking along `d` starting from step `alpha`.
fn line_search(
    problem: &EnergyProblem,
    state: &State,
    d: &DVector<f64>,
    mut alpha: f64,
    config: &OptimConfig,
    trajectory: &mut Trajectory,
) -> Result<Option<(State, DVector<f64>)>> {
    let slope = state.grad.dot(d);
    if slope >= 0.0 {
        return Ok(None);
    }
    for _ in 0..config.max_backtracks {
        let s = d * alpha;
        let trial = state.moved(problem, &s)?;
        trajectory.evaluations += 1;
        // never step from a regular contraction onto a regularised one
        let singular = !trial.eval.flagged.is_empty() && state.eval.flagged.is_empty();
        if !singular && trial.eval.energy <= state.eval.energy + config.sufficient_decrease * alpha * slope {
            return Ok(Some((trial, s)));
        }
        alpha *= config.backtrack_factor;
    }
    Ok(None)
}

/// L-BFGS with Armijo backtracking for at most `iters` accepted steps.
/// `on_step` sees the iteration index and may replace the current state
/// (used for perturbations); returning `Some` resets the curvature memory.
pub fn descend<F>(
    problem: &EnergyProblem,
    mut state: State,
    iters: usize,
    config: &OptimConfig,
    trajectory: &mut Trajectory,
    mut on_step: F,
) -> Result<State>
where
    F: FnMut(usize, &State) -> Result<Option<State>>,
{
    let mut lbfgs = Lbfgs::new(config.lbfgs_memory);
    let mut window = std::collections::VecDeque::with_capacity(STALL_WINDOW + 1);
    for it in 0..iters {
        if let Some(replacement) = on_step(it, &state)? {
            state = replacement;
            trajectory.evaluations += 1;
            lbfgs.reset();
            trajectory.push(state.eval.energy, state.grad_norm);
        }
        if state.grad_norm < config.grad_tol {
            break;
        }
        let mut d = lbfgs.direction(&state.grad);
        let mut alpha = (MAX_STEP / d.norm()).min(1.0);
        if lbfgs.pairs.is_empty() || state.grad.dot(&d) >= 0.0 {
            d = -&state.grad;
            alpha = (0.1 / d.norm()).min(1.0);
        }
        let mut step = line_search(problem, &state, &d, alpha, config, trajectory)?;
        if step.is_none() && !lbfgs.pairs.is_empty() {
            lbfgs.reset();
            d = -&state.grad;
            step = line_search(problem, &state, &d, (0.1 / d.norm()).min(1.0), config, trajectory)?;
        }
        let Some((next, s)) = step else {
            break;
        };
        let y = &next.grad - &state.grad;
        lbfgs.update(s, y);
        state = next;
        trajectory.push(state.eval.energy, state.grad_norm);
        window.push_back(state.eval.energy);
        if window.len() > STALL_WINDOW {
            let oldest = window.pop_front().unwrap_or(state.eval.energy);
            if oldest - state.eval.energy <= STALL_TOL * state.eval.energy.abs().max(1.0) {
                break;
            }
        }
    }
    Ok(state)
}

/// Steihaug–Toint truncated CG on the model `gᵀp + ½pᵀHp`, `|p| ≤ radius`.
fn steihaug<H>(g: &DVector<f64>, radius: f64, max_iter: usize, tol: f64, mut hess: H) -> Result<DVector<f64>>
where
    H: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut p = DVector::zeros(g.len());
    let mut r = g.clone();
    let mut d = -g;
    let boundary = |p: &DVector<f64>, d: &DVector<f64>| {
        let (a, b, c) = (d.dot(d), 2.0 * p.dot(d), p.dot(p) - radius * radius);
        let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
        p + d * tau
    };
    for _ in 0..max_iter {
        let hd = hess(&d)?;
        let curv = d.dot(&hd);
        if curv <= 0.0 {
            return Ok(boundary(&p, &d));
        }
        let alpha = r.dot(&r) / curv;
        let next = &p + &d * alpha;
        if next.norm() >= radius {
            return Ok(boundary(&p, &d));
        }
        let r_next = &r + hd * alpha;
        if r_next.norm() < tol {
            return Ok(next);
        }
        let beta = r_next.dot(&r_next) / r.dot(&r);
        d = -&r_next + d * beta;
        r = r_next;
        p = next;
    }
    Ok(p)
}

/// Trust-region Newton polish with forward-difference Hessian-vector
/// products of the analytic gradient.
pub fn newton_polish(
    problem: &EnergyProblem,
    mut state: State,
    config: &OptimConfig,
    trajectory: &mut Trajectory,
) -> Result<State> {
    let mut radius = 0.1;
    let fd_step = 1e-7;
    for _ in 0..config.newton_iters {
        if state.grad_norm < config.grad_tol {
            break;
        }
        let base = &state;
        let calls = std::cell::Cell::new(0u64);
        let hess = |v: &DVector<f64>| -> Result<DVector<f64>> {
            calls.set(calls.get() + 1);
            let n = v.norm();
            if n == 0.0 {
                return Ok(DVector::zeros(v.len()));
            }
            let moved = base.moved(problem, &(v * (fd_step / n)))?;
            Ok((&moved.grad - &base.grad) * (n / fd_step))
        };
        let g = state.grad.clone();
        let tol = (g.norm() * g.norm().sqrt().min(0.5)).max(config.grad_tol * 1e-2);
        let p = steihaug(&g, radius, g.len().min(200), tol, hess)?;
        let hp = {
            let n = p.norm();
            let moved = state.moved(problem, &(&p * (fd_step / n.max(f64::MIN_POSITIVE))))?;
            (&moved.grad - &state.grad) * (n / fd_step)
        };
        let predicted = -(g.dot(&p) + 0.5 * p.dot(&hp));
        let trial = state.moved(problem, &p)?;
        trajectory.evaluations += calls.get() + 2;
        let actual = state.eval.energy - trial.eval.energy;
        let singular = !trial.eval.flagged.is_empty() && state.eval.flagged.is_empty();
        let ratio = if predicted > 0.0 && !singular { actual / predicted } else { -1.0 };
        if ratio < 0.25 {
            radius *= 0.25;
        } else if ratio > 0.75 && p.norm() > 0.99 * radius {
            radius = (radius * 2.0).min(1.0);
        }
        if ratio > 0.1 && actual > 0.0 {
            state = trial;
            trajectory.push(state.eval.energy, state.grad_norm);
        }
        if radius < 1e-14 {
            break;
        }
    }
    Ok(state)
}

fn start_seed(config: &OptimConfig, start: usize) -> u64 {
    config
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(start as u64)
}

/// One phase-1 run from a random initial state.
fn run_start(problem: &EnergyProblem, pattern: &ArrowPattern, config: &OptimConfig, start: usize) -> Result<(State, Trajectory)> {
    let seed = start_seed(config, start);
    let params = random_init(pattern, problem.n_v(), problem.model().cell(), seed)?;
    phase_one(problem, params, config, seed)
}

fn phase_one(problem: &EnergyProblem, params: IsoParams, config: &OptimConfig, seed: u64) -> Result<(State, Trajectory)> {
    let mut trajectory = Trajectory { seed, ..Default::default() };
    let state = State::new(problem, params)?;
    trajectory.evaluations += 1;
    trajectory.push(state.eval.energy, state.grad_norm);
    let state = descend(problem, state, config.phase1_iters, config, &mut trajectory, |_, _| Ok(None))?;
    Ok((state, trajectory))
}

/// Multi-start minimisation of the variational energy.
pub fn minimize(model: &ModelSpec, pattern: &ArrowPattern, n_v: usize, config: &OptimConfig) -> Result<OptimReport> {
    minimize_from(model, pattern, n_v, config, None)
}

/// As [`minimize`], optionally seeding every start from `init` (e.g. an
/// embedded smaller-`n_v` solution) instead of random parameters.
pub fn minimize_from(
    model: &ModelSpec,
    pattern: &ArrowPattern,
    n_v: usize,
    config: &OptimConfig,
    init: Option<&IsoParams>,
) -> Result<OptimReport> {
    config.validate()?;
    let started = Instant::now();
    let cell = common_cell(model.cell(), pattern.min_cell());
    let model = if cell == model.cell() {
        model.clone()
    } else {
        ModelSpec::new(model.kind, model.grid.with_cell(cell)?)?
    };
    let problem = EnergyProblem::new(&model, n_v);

    let runs: Vec<(State, Trajectory)> = match init {
        None => (0..config.n_starts)
            .into_par_iter()
            .map(|s| run_start(&problem, pattern, config, s))
            .collect::<Result<_>>()?,
        Some(p) => {
            if p.n_v != n_v || p.cell != cell || &p.pattern != pattern {
                return Err(Error::ShapeMismatch("warm-start parameters do not match the run".into()));
            }
            vec![phase_one(&problem, p.clone(), config, start_seed(config, 0))?]
        }
    };
    let mut best_start = 0;
    for (i, (state, _)) in runs.iter().enumerate() {
        if state.eval.energy < runs[best_start].0.eval.energy {
            best_start = i;
        }
    }
    let (start_state, _) = runs[best_start].clone();
    let starts: Vec<Trajectory> = runs.into_iter().map(|(_, t)| t).collect();

    let mut refinement = Trajectory {
        seed: starts[best_start].seed,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut best = start_state.clone();
    let dims: Vec<usize> = start_state.params.q.iter().map(|q| q.nrows()).collect();
    // rounds of at most `perturb_every` steps, each restarted from a kick
    // of the best state so far
    let mut state = start_state;
    let mut remaining = config.phase2_iters;
    while remaining > 0 {
        let round = remaining.min(config.perturb_every);
        remaining -= round;
        state = descend(&problem, state, round, config, &mut refinement, |_, current| {
            if current.eval.energy < best.eval.energy {
                best = current.clone();
            }
            Ok(None)
        })?;
        if state.eval.energy < best.eval.energy {
            best = state.clone();
        }
        if remaining == 0 || config.perturb_scale == 0.0 {
            break;
        }
        let kick: Vec<RMat> = dims
            .iter()
            .map(|&n| random_antisymmetric(n, config.perturb_scale, &mut rng))
            .collect();
        state = State::new(&problem, retract(&best.params, &kick))?;
        refinement.evaluations += 1;
        refinement.push(state.eval.energy, state.grad_norm);
    }
    let mut best = best;
    if config.newton_polish && best.grad_norm > config.grad_tol {
        let polished = newton_polish(&problem, best.clone(), config, &mut refinement)?;
        if polished.eval.energy <= best.eval.energy {
            best = polished;
        }
    }

    let exact_energy = model.exact_ground_energy();
    let n_sites = model.grid.n_sites() as f64;
    let max_imag_residue = best.eval.imag_residue;
    if max_imag_residue > super::energy::IMAG_TOL {
        return Err(Error::ImaginaryEnergy { residue: max_imag_residue });
    }
    Ok(OptimReport {
        model: model.kind.name().to_string(),
        pattern: pattern.name().to_string(),
        n_v,
        lx: model.grid.lx,
        ly: model.grid.ly,
        best_start,
        refinement,
        best_energy: best.eval.energy,
        exact_energy,
        error_per_site: (best.eval.energy - exact_energy) / n_sites,
        final_grad_norm: best.grad_norm,
        converged: best.grad_norm <= config.grad_tol,
        flagged_kpoints: best.eval.flagged.clone(),
        max_imag_residue,
        wall_seconds: started.elapsed().as_secs_f64(),
        params: Some(best.params),
        starts,
    })
}
