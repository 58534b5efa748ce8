//! Quantum-double ground-state tensor of a finite group and a dense
//! isometry check.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute tolerance of [`isometry_check`].
pub const ISOMETRY_TOL: f64 = 1e-12;

/// Finite group given by its multiplication table `table[a][b] = a·b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupTable {
    name: String,
    table: Vec<Vec<usize>>,
    identity: usize,
    inverse: Vec<usize>,
}

impl GroupTable {
    /// Validates closure, associativity, identity and inverses.
    pub fn new(name: impl Into<String>, table: Vec<Vec<usize>>) -> Result<Self> {
        let n = table.len();
        if n == 0 {
            return Err(Error::InvalidGroup("empty table".into()));
        }
        if table.iter().any(|row| row.len() != n || row.iter().any(|&v| v >= n)) {
            return Err(Error::InvalidGroup(format!("table is not closed on {n} elements")));
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(Error::InvalidGroup(format!("({a}·{b})·{c} != {a}·({b}·{c})")));
                    }
                }
            }
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|a| table[e][a] == a && table[a][e] == a))
            .ok_or_else(|| Error::InvalidGroup("no identity element".into()))?;
        let inverse = (0..n)
            .map(|a| {
                (0..n)
                    .find(|&b| table[a][b] == identity && table[b][a] == identity)
                    .ok_or_else(|| Error::InvalidGroup(format!("element {a} has no inverse")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupTable {
            name: name.into(),
            table,
            identity,
            inverse,
        })
    }

    pub fn cyclic(n: usize) -> Result<Self> {
        let table = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
        GroupTable::new(format!("Z{n}"), table)
    }

    /// Permutations of `{0, 1, 2}` in lexicographic order, `(p·q)(i) = p(q(i))`.
    pub fn s3() -> Self {
        let perms: Vec<[usize; 3]> = vec![[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let index = |p: [usize; 3]| perms.iter().position(|q| *q == p).unwrap_or(0);
        let table = perms
            .iter()
            .map(|p| perms.iter().map(|q| index([p[q[0]], p[q[1]], p[q[2]]])).collect())
            .collect();
        GroupTable::new("S3", table).expect("S3 table is a group")
    }

    /// `Zn` for `n ≥ 1` or `S3`.
    pub fn by_name(name: &str) -> Result<Self> {
        let upper = name.to_ascii_uppercase();
        if upper == "S3" {
            return Ok(GroupTable::s3());
        }
        match upper.strip_prefix('Z').and_then(|n| n.parse::<usize>().ok()) {
            Some(n) if n >= 1 => GroupTable::cyclic(n),
            _ => Err(Error::InvalidGroup(format!("unknown group {name:?} (expected Zn or S3)"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }

    /// Left-regular representation `φ(g)_{ab} = δ_{a, g·b}`.
    pub fn regular(&self, g: usize) -> DMatrix<f64> {
        let n = self.order();
        DMatrix::from_fn(n, n, |a, b| if a == self.mul(g, b) { 1.0 } else { 0.0 })
    }
}

/// Real dense tensor, row-major with the last leg fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        DenseTensor { dims, data: vec![0.0; len] }
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn nonzeros(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

/// Leg order of [`quantum_double_tensor`].
pub const QD_LEGS: [&str; 8] = ["l", "r", "d", "u", "p1", "p2", "p3", "p4"];

/// `A_{lrdu}^{p1p2p3p4} = Σ_g φ(g)_{l p1} φ(g)_{u p4} φ(g⁻¹)_{p2 r} φ(g⁻¹)_{p3 d}`
/// with every leg of dimension `|G|`, legs ordered as [`QD_LEGS`].
pub fn quantum_double_tensor(group: &GroupTable) -> DenseTensor {
    let n = group.order();
    let mut t = DenseTensor::zeros(vec![n; 8]);
    // φ(g)_{l p1} ≠ 0 iff l = g·p1, φ(g⁻¹)_{p2 r} ≠ 0 iff r = g·p2
    for g in 0..n {
        for p1 in 0..n {
            for p2 in 0..n {
                for p3 in 0..n {
                    for p4 in 0..n {
                        let (l, r, d, u) = (group.mul(g, p1), group.mul(g, p2), group.mul(g, p3), group.mul(g, p4));
                        let at = t.offset(&[l, r, d, u, p1, p2, p3, p4]);
                        t.data[at] += 1.0;
                    }
                }
            }
        }
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsometryCheck {
    pub passes: bool,
    pub constant: f64,
    /// `max |M − c·I|` of the contraction `M`.
    pub residual: f64,
}

/// Contracts `tensor` with itself over `in_legs` and tests whether the result
/// is `c·I` on the remaining legs with `c > 0`.
pub fn isometry_check(tensor: &DenseTensor, in_legs: &[usize]) -> Result<IsometryCheck> {
    let rank = tensor.dims.len();
    if in_legs.iter().any(|&l| l >= rank) || (1..in_legs.len()).any(|i| in_legs[..i].contains(&in_legs[i])) {
        return Err(Error::ShapeMismatch(format!("invalid contracted legs {in_legs:?} for a rank-{rank} tensor")));
    }
    let out_legs: Vec<usize> = (0..rank).filter(|l| !in_legs.contains(l)).collect();
    let rows: usize = out_legs.iter().map(|&l| tensor.dims[l]).product();
    let cols: usize = in_legs.iter().map(|&l| tensor.dims[l]).product();
    let mut x = DMatrix::<f64>::zeros(rows, cols);
    let mut idx = vec![0usize; rank];
    for (flat, &v) in tensor.data.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let mut rem = flat;
        for leg in (0..rank).rev() {
            idx[leg] = rem % tensor.dims[leg];
            rem /= tensor.dims[leg];
        }
        let row = out_legs.iter().fold(0, |acc, &l| acc * tensor.dims[l] + idx[l]);
        let col = in_legs.iter().fold(0, |acc, &l| acc * tensor.dims[l] + idx[l]);
        x[(row, col)] = v;
    }
    let m = &x * x.transpose();
    let constant = m[(0, 0)];
    let residual = (0..rows)
        .flat_map(|i| (0..rows).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - if i == j { constant } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    Ok(IsometryCheck {
        passes: constant > 0.0 && residual <= ISOMETRY_TOL,
        constant,
        residual,
    })
}

/// Result of [`isometry_check`] for the physical legs plus each of the six
/// pairs of virtual legs.
pub fn quantum_double_checks(group: &GroupTable) -> Vec<([&'static str; 2], IsometryCheck)> {
    let tensor = quantum_double_tensor(group);
    let mut out = Vec::new();
    for a in 0..4 {
        for b in (a + 1)..4 {
            let legs = [a, b, 4, 5, 6, 7];
            let check = isometry_check(&tensor, &legs).expect("legs are distinct and in range");
            out.push(([QD_LEGS[a], QD_LEGS[b]], check));
        }
    }
    out
}
