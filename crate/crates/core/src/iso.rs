//! Parametrisation of local tensor covariances by special orthogonal
//! matrices, with or without isometric constraints.
//!
//! For an isometric tensor the modes are regrouped into incoming (`p` plus
//! incoming virtual legs) and outgoing legs. With `Q = [ℬ | R]` in SO(n_in),
//! `ℬ` the first `n_out` columns, the covariance in (in, out) grouping is
//!
//! ```text
//! Γ_ψ = [[ R J Rᵀ,  ℬ ],
//!        [  −ℬᵀ,    0 ]]
//! ```
//!
//! where `J` holds `(n_in − n_out)/2` symplectic blocks. The unconstrained
//! case is the same construction with no outgoing legs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{canonical_order, leg_modes, reorder_legs, Leg, LocalTensorCovariance, Mode};
use crate::linalg::{orthogonality_defect, random_special_orthogonal, symplectic_form, RMat};
use crate::models::CellShape;

/// Tolerance on `QᵀQ = I` when validating parameters.
pub const ORTHO_TOL: f64 = 1e-10;

/// Subset of the virtual legs `{l, d, r, u}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LegSet(u8);

impl LegSet {
    pub const EMPTY: LegSet = LegSet(0);

    pub fn from_legs(legs: &[Leg]) -> Self {
        let mut set = LegSet::EMPTY;
        for &leg in legs {
            set = set.with(leg);
        }
        set
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits < 16).then_some(LegSet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn with(self, leg: Leg) -> Self {
        match leg.virtual_slot() {
            Some(slot) => LegSet(self.0 | (1 << slot)),
            None => self,
        }
    }

    pub fn contains(self, leg: Leg) -> bool {
        leg.virtual_slot().is_some_and(|slot| self.0 & (1 << slot) != 0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn legs(self) -> impl Iterator<Item = Leg> {
        Leg::VIRTUAL.into_iter().filter(move |&l| self.contains(l))
    }

    /// Parses strings like `"ru"` or `"rd"`.
    pub fn parse(s: &str) -> Option<Self> {
        let mut set = LegSet::EMPTY;
        for ch in s.chars() {
            let leg = match ch {
                'l' => Leg::L,
                'd' => Leg::D,
                'r' => Leg::R,
                'u' => Leg::U,
                _ => return None,
            };
            set = set.with(leg);
        }
        Some(set)
    }
}

impl std::fmt::Display for LegSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for leg in self.legs() {
            write!(f, "{}", leg.symbol())?;
        }
        Ok(())
    }
}

/// Which virtual legs carry outgoing isometry arrows on each site.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ArrowPattern {
    Unconstrained,
    /// `{r, u}` outgoing everywhere.
    Uniform,
    /// `{r, u}` on even columns and `{r, d}` on odd columns.
    Alternating,
    /// Explicit outgoing set per site of the pattern's own cell: one set
    /// for 1×1, two for 2×1, four for 2×2. Larger cells repeat it.
    Custom(Vec<LegSet>),
}

impl ArrowPattern {
    pub fn id(&self) -> u32 {
        match self {
            ArrowPattern::Unconstrained => 0,
            ArrowPattern::Uniform => 1,
            ArrowPattern::Alternating => 2,
            ArrowPattern::Custom(_) => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ArrowPattern::Unconstrained => "unconstrained",
            ArrowPattern::Uniform => "uniform",
            ArrowPattern::Alternating => "alternating",
            ArrowPattern::Custom(_) => "custom",
        }
    }

    /// Smallest cell on which the pattern is translation invariant.
    pub fn min_cell(&self) -> CellShape {
        match self {
            ArrowPattern::Alternating => CellShape::COLUMN_PAIR,
            ArrowPattern::Custom(sets) if sets.len() == 2 => CellShape::COLUMN_PAIR,
            ArrowPattern::Custom(sets) if sets.len() == 4 => CellShape::PLAQUETTE,
            _ => CellShape::SINGLE,
        }
    }

    pub fn outgoing(&self, cell: CellShape, site: usize) -> Result<LegSet> {
        if site >= cell.sites() {
            return Err(Error::ShapeMismatch(format!("site {site} outside a {cell} cell")));
        }
        Ok(match self {
            ArrowPattern::Unconstrained => LegSet::EMPTY,
            ArrowPattern::Uniform => LegSet::from_legs(&[Leg::R, Leg::U]),
            ArrowPattern::Alternating => {
                if cell.cx % 2 != 0 {
                    return Err(Error::ShapeMismatch(format!(
                        "alternating arrows need an even number of columns per cell, got {cell}"
                    )));
                }
                if cell.site_offset(site).0 % 2 == 0 {
                    LegSet::from_legs(&[Leg::R, Leg::U])
                } else {
                    LegSet::from_legs(&[Leg::R, Leg::D])
                }
            }
            ArrowPattern::Custom(sets) => {
                let own = self.min_cell();
                if sets.len() != own.sites() || cell.cx % own.cx != 0 || cell.cy % own.cy != 0 {
                    return Err(Error::ShapeMismatch(format!(
                        "custom pattern lists {} sites and does not tile a {cell} cell",
                        sets.len()
                    )));
                }
                let (dx, dy) = cell.site_offset(site);
                sets[own.site_index(dx % own.cx, dy % own.cy)]
            }
        })
    }
}

/// Mode bookkeeping for one site under its arrow pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteLayout {
    pub outgoing: LegSet,
    pub n_in: usize,
    pub n_out: usize,
    /// Incoming modes followed by outgoing modes.
    pub io_order: Vec<Mode>,
}

impl SiteLayout {
    pub fn new(outgoing: LegSet, n_v: usize) -> Result<Self> {
        let incoming: Vec<Mode> = std::iter::once(Leg::P)
            .chain(Leg::VIRTUAL.into_iter().filter(|&l| !outgoing.contains(l)))
            .flat_map(|leg| leg_modes(leg, n_v))
            .collect();
        let out: Vec<Mode> = outgoing.legs().flat_map(|leg| leg_modes(leg, n_v)).collect();
        let (n_in, n_out) = (incoming.len(), out.len());
        if n_in < n_out || (n_in - n_out) % 2 != 0 {
            return Err(Error::OddFreeModes { n_in, n_out });
        }
        let mut io_order = incoming;
        io_order.extend(out);
        Ok(SiteLayout { outgoing, n_in, n_out, io_order })
    }

    /// `J` embedded on the `R` columns of `Q`.
    pub fn free_form(&self) -> RMat {
        symplectic_form(self.n_in, self.n_out, (self.n_in - self.n_out) / 2)
    }
}

/// Variational parameters: one special orthogonal `Q` per unit-cell site.
#[derive(Clone, Debug, PartialEq)]
pub struct IsoParams {
    pub pattern: ArrowPattern,
    pub n_v: usize,
    pub cell: CellShape,
    pub q: Vec<RMat>,
}

impl IsoParams {
    pub fn new(pattern: ArrowPattern, n_v: usize, cell: CellShape, q: Vec<RMat>) -> Result<Self> {
        let params = IsoParams { pattern, n_v, cell, q };
        params.validate()?;
        Ok(params)
    }

    pub fn layouts(&self) -> Result<Vec<SiteLayout>> {
        site_layouts(&self.pattern, self.n_v, self.cell)
    }

    pub fn validate(&self) -> Result<()> {
        let layouts = self.layouts()?;
        if self.q.len() != layouts.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} matrices for {} sites",
                self.q.len(),
                layouts.len()
            )));
        }
        for (s, (q, layout)) in self.q.iter().zip(&layouts).enumerate() {
            if q.nrows() != layout.n_in || q.ncols() != layout.n_in {
                return Err(Error::ShapeMismatch(format!(
                    "site {s}: Q must be {0}x{0}, got {1}x{2}",
                    layout.n_in,
                    q.nrows(),
                    q.ncols()
                )));
            }
            let defect = orthogonality_defect(q);
            if defect > ORTHO_TOL {
                return Err(Error::ShapeMismatch(format!("site {s}: Q not orthogonal (defect {defect:e})")));
            }
            if q.nrows() > 0 && q.determinant() < 0.0 {
                return Err(Error::ShapeMismatch(format!("site {s}: det Q = -1")));
            }
        }
        Ok(())
    }

    /// Number of real parameters `Σ n_in(n_in − 1)/2`.
    pub fn dimension(&self) -> usize {
        self.q.iter().map(|q| q.nrows() * q.nrows().saturating_sub(1) / 2).sum()
    }

    pub fn local_covariances(&self) -> Result<Vec<LocalTensorCovariance>> {
        (0..self.q.len()).map(|s| build_local_covariance(self, s)).collect()
    }

    /// Embeds into a larger `n_v`: existing modes keep their couplings, each
    /// new outgoing mode is wired to a new incoming mode, and leftover new
    /// modes pair up through `J`.
    pub fn embed(&self, n_v: usize) -> Result<IsoParams> {
        if n_v < self.n_v {
            return Err(Error::ShapeMismatch(format!("cannot shrink n_v from {} to {n_v}", self.n_v)));
        }
        let old_layouts = self.layouts()?;
        let new_layouts = site_layouts(&self.pattern, n_v, self.cell)?;
        let mut qs = Vec::with_capacity(self.q.len());
        for ((q, old), new) in self.q.iter().zip(&old_layouts).zip(&new_layouts) {
            let old_in = &old.io_order[..old.n_in];
            let new_in = &new.io_order[..new.n_in];
            let row_of = |m: &Mode| new_in.iter().position(|x| x == m).unwrap();
            let fresh_rows: Vec<usize> = (0..new.n_in).filter(|&r| !old_in.contains(&new_in[r])).collect();
            let mut fresh = fresh_rows.into_iter();
            let mut out = RMat::zeros(new.n_in, new.n_in);
            let old_out = &old.io_order[old.n_in..];
            let new_out = &new.io_order[new.n_in..];
            // ℬ columns follow the new outgoing order
            for (c, mode) in new_out.iter().enumerate() {
                if let Some(oc) = old_out.iter().position(|m| m == mode) {
                    for (r, m) in old_in.iter().enumerate() {
                        out[(row_of(m), c)] = q[(r, oc)];
                    }
                } else {
                    let r = fresh.next().ok_or(Error::OddFreeModes { n_in: new.n_in, n_out: new.n_out })?;
                    out[(r, c)] = 1.0;
                }
            }
            let mut c = new.n_out;
            for oc in old.n_out..old.n_in {
                for (r, m) in old_in.iter().enumerate() {
                    out[(row_of(m), c)] = q[(r, oc)];
                }
                c += 1;
            }
            for r in fresh {
                out[(r, c)] = 1.0;
                c += 1;
            }
            if out.nrows() > 0 && out.determinant() < 0.0 {
                let last = out.ncols() - 1;
                out.column_mut(last).neg_mut();
            }
            qs.push(out);
        }
        IsoParams::new(self.pattern.clone(), n_v, self.cell, qs)
    }
}

pub fn site_layouts(pattern: &ArrowPattern, n_v: usize, cell: CellShape) -> Result<Vec<SiteLayout>> {
    (0..cell.sites())
        .map(|s| SiteLayout::new(pattern.outgoing(cell, s)?, n_v))
        .collect()
}

/// Unconstrained parameters: one `O ∈ SO(2 + 4n_v)` per site.
#[derive(Clone, Debug, PartialEq)]
pub struct UnconstrainedParams {
    pub n_v: usize,
    pub cell: CellShape,
    pub o: Vec<RMat>,
}

impl From<UnconstrainedParams> for IsoParams {
    fn from(p: UnconstrainedParams) -> Self {
        IsoParams {
            pattern: ArrowPattern::Unconstrained,
            n_v: p.n_v,
            cell: p.cell,
            q: p.o,
        }
    }
}

/// Assembles `Γ_ψ` for one site in canonical `p, l, d, r, u` order.
pub fn build_local_covariance(params: &IsoParams, sublattice: usize) -> Result<LocalTensorCovariance> {
    let outgoing = params.pattern.outgoing(params.cell, sublattice)?;
    let layout = SiteLayout::new(outgoing, params.n_v)?;
    let q = params
        .q
        .get(sublattice)
        .ok_or_else(|| Error::ShapeMismatch(format!("no Q for site {sublattice}")))?;
    if q.nrows() != layout.n_in || q.ncols() != layout.n_in {
        return Err(Error::ShapeMismatch(format!("Q must be {0}x{0}", layout.n_in)));
    }
    let (n_in, n_out) = (layout.n_in, layout.n_out);
    let b = q.columns(0, n_out);
    let r = q.columns(n_out, n_in - n_out);
    let j = symplectic_form(n_in - n_out, 0, (n_in - n_out) / 2);
    let a = r * j * r.transpose();
    let n = n_in + n_out;
    let mut io = RMat::zeros(n, n);
    io.view_mut((0, 0), (n_in, n_in)).copy_from(&a);
    io.view_mut((0, n_in), (n_in, n_out)).copy_from(&b);
    io.view_mut((n_in, 0), (n_out, n_in)).copy_from(&(-b.transpose()));
    let gamma = reorder_legs(&io, &layout.io_order, &canonical_order(params.n_v))?;
    LocalTensorCovariance::new(params.n_v, gamma)
}

/// `Γ_ψ = O J Oᵀ` with `J` the full symplectic form.
pub fn build_local_covariance_unconstrained(params: &UnconstrainedParams, sublattice: usize) -> Result<LocalTensorCovariance> {
    let o = params
        .o
        .get(sublattice)
        .ok_or_else(|| Error::ShapeMismatch(format!("no O for site {sublattice}")))?;
    let n = 2 + 4 * params.n_v;
    if o.nrows() != n || o.ncols() != n {
        return Err(Error::ShapeMismatch(format!("O must be {n}x{n}")));
    }
    let j = symplectic_form(n, 0, n / 2);
    LocalTensorCovariance::new(params.n_v, o * j * o.transpose())
}

/// Haar-random special orthogonal parameters, deterministic in `seed`.
pub fn random_init(pattern: &ArrowPattern, n_v: usize, cell: CellShape, seed: u64) -> Result<IsoParams> {
    let layouts = site_layouts(pattern, n_v, cell)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = layouts
        .iter()
        .map(|l| random_special_orthogonal(l.n_in, &mut rng))
        .collect();
    IsoParams::new(pattern.clone(), n_v, cell, q)
}

pub fn random_init_unconstrained(n_v: usize, cell: CellShape, seed: u64) -> UnconstrainedParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = (0..cell.sites())
        .map(|_| random_special_orthogonal(2 + 4 * n_v, &mut rng))
        .collect();
    UnconstrainedParams { n_v, cell, o }
}

/// Variational manifolds whose dimensions are compared.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ManifoldKind {
    /// Translation-invariant MPS, local dimension `d`, bond dimension `chi`.
    Mps { d: f64, chi: f64 },
    IsoMps { d: f64, chi: f64 },
    Tns { d: f64, chi: f64 },
    IsoTns { d: f64, chi: f64 },
    /// Gaussian TNS with `n` Majorana modes per virtual leg.
    GaussianTns { n: usize },
    GaussianIsoTns { n: usize },
}

/// Complex dimension for the generic families, real dimension for the
/// Gaussian ones.
pub fn manifold_dimension(kind: ManifoldKind) -> f64 {
    match kind {
        ManifoldKind::Mps { d, chi } | ManifoldKind::IsoMps { d, chi } => (d - 1.0) * chi * chi,
        ManifoldKind::Tns { d, chi } => d * chi.powi(4) - 2.0 * chi * chi,
        ManifoldKind::IsoTns { d, chi } => (d - 0.5) * chi.powi(4) - chi * chi,
        ManifoldKind::GaussianTns { n } => ((4 * n + 2) * (4 * n + 1) / 2) as f64,
        ManifoldKind::GaussianIsoTns { n } => ((2 * n + 2) * (2 * n + 1) / 2) as f64,
    }
}

/// Bond-dimension inflation `(d / (d − ½))^{1/4}` that equalises the
/// dimensions of isometric and generic TNS at large `χ`.
pub fn iso_bond_ratio(d: f64) -> f64 {
    (d / (d - 0.5)).powf(0.25)
}
