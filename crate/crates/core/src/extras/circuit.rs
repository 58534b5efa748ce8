//! Sequential-circuit schedules for isometric arrow layouts on an open
//! `Lx × Ly` lattice.
//!
//! One gate per tensor. A gate consumes the bonds on its incoming legs and
//! produces the bonds on its outgoing legs plus one physical qubit, so it can
//! fire once every neighbour feeding it has fired. Legs on the lattice
//! boundary are trivial.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Leg;
use crate::iso::{ArrowPattern, LegSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub x: usize,
    pub y: usize,
    /// 1-based time step.
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSchedule {
    pub layout: String,
    pub lx: usize,
    pub ly: usize,
    pub chi: usize,
    pub depth: usize,
    /// Peak register size, see [`holographic_qubits`].
    pub qubits: usize,
    /// Row-major over `(x, y)` with `x` fastest.
    pub gates: Vec<Gate>,
}

impl CircuitSchedule {
    pub fn step(&self, x: usize, y: usize) -> usize {
        self.gates[x + self.lx * y].step
    }
}

fn neighbour(x: usize, y: usize, leg: Leg, lx: usize, ly: usize) -> Option<(usize, usize)> {
    match leg {
        Leg::L => x.checked_sub(1).map(|x| (x, y)),
        Leg::R => (x + 1 < lx).then_some((x + 1, y)),
        Leg::D => y.checked_sub(1).map(|y| (x, y)),
        Leg::U => (y + 1 < ly).then_some((x, y + 1)),
        Leg::P => None,
    }
}

fn opposite(leg: Leg) -> Leg {
    match leg {
        Leg::L => Leg::R,
        Leg::R => Leg::L,
        Leg::D => Leg::U,
        Leg::U => Leg::D,
        Leg::P => Leg::P,
    }
}

/// Outgoing legs of every tensor, the pattern tiled from the lattice origin.
pub fn arrow_field(pattern: &ArrowPattern, lx: usize, ly: usize) -> Result<Vec<LegSet>> {
    if pattern == &ArrowPattern::Unconstrained {
        return Err(Error::InvalidLayout("an unconstrained network has no arrows".into()));
    }
    let cell = pattern.min_cell();
    let mut field = Vec::with_capacity(lx * ly);
    for y in 0..ly {
        for x in 0..lx {
            let (_, site) = cell.locate(x as i64, y as i64);
            field.push(pattern.outgoing(cell, site)?);
        }
    }
    Ok(field)
}

/// Directed bonds `(producer, consumer)` as flat indices `x + lx·y`.
/// Every internal bond must have exactly one outgoing end.
pub fn bonds(field: &[LegSet], lx: usize, ly: usize) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for y in 0..ly {
        for x in 0..lx {
            let here = x + lx * y;
            for leg in [Leg::R, Leg::U] {
                let Some((nx, ny)) = neighbour(x, y, leg, lx, ly) else {
                    continue;
                };
                let there = nx + lx * ny;
                match (field[here].contains(leg), field[there].contains(opposite(leg))) {
                    (true, false) => out.push((here, there)),
                    (false, true) => out.push((there, here)),
                    (a, _) => {
                        return Err(Error::InvalidLayout(format!(
                            "bond ({x},{y})-({nx},{ny}) has {} outgoing ends",
                            if a { "two" } else { "no" }
                        )))
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Peak of `live(t)·⌈log₂χ⌉ + fired(t)` over time steps, where `live(t)`
/// counts bonds held from the step their producer fires through the step
/// their consumer fires, and `fired(t)` is one physical qubit per gate of
/// step `t`, measured and reset afterwards.
pub fn holographic_qubits(steps: &[usize], bonds: &[(usize, usize)], chi: usize) -> usize {
    let depth = steps.iter().copied().max().unwrap_or(0);
    let width = if chi <= 1 { 0 } else { (usize::BITS - (chi - 1).leading_zeros()) as usize };
    let mut live = vec![0isize; depth + 2];
    for &(p, c) in bonds {
        live[steps[p]] += 1;
        live[steps[c] + 1] -= 1;
    }
    let mut fired = vec![0usize; depth + 1];
    for &s in steps {
        fired[s] += 1;
    }
    let mut held = 0isize;
    (1..=depth)
        .map(|t| {
            held += live[t];
            held as usize * width + fired[t]
        })
        .max()
        .unwrap_or(0)
}

/// Greedy earliest-fire schedule: each gate fires one step after the last of
/// its producers.
pub fn schedule_circuit(pattern: &ArrowPattern, lx: usize, ly: usize, chi: usize) -> Result<CircuitSchedule> {
    if lx < 2 || ly < 2 {
        return Err(Error::InvalidLattice(format!("{lx}x{ly}: both sides must be at least 2")));
    }
    let field = arrow_field(pattern, lx, ly)?;
    let edges = bonds(&field, lx, ly)?;
    let n = lx * ly;
    let mut consumers = vec![Vec::new(); n];
    let mut pending = vec![0usize; n];
    for &(p, c) in &edges {
        consumers[p].push(c);
        pending[c] += 1;
    }
    let mut steps = vec![0usize; n];
    let mut ready: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    for &i in &ready {
        steps[i] = 1;
    }
    let mut done = 0;
    while let Some(i) = ready.pop() {
        done += 1;
        for &c in &consumers[i] {
            steps[c] = steps[c].max(steps[i] + 1);
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.push(c);
            }
        }
    }
    if done != n {
        return Err(Error::InvalidLayout("arrows form a directed cycle".into()));
    }
    let gates = (0..n)
        .map(|i| Gate {
            x: i % lx,
            y: i / lx,
            step: steps[i],
        })
        .collect();
    Ok(CircuitSchedule {
        layout: pattern.name().to_string(),
        lx,
        ly,
        chi,
        depth: steps.iter().copied().max().unwrap_or(0),
        qubits: holographic_qubits(&steps, &edges, chi),
        gates,
    })
}
