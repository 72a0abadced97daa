//! Exact short-time propagators exp(−iH_eff·h) on a binary ladder of step
//! sizes h₀, h₀/2, h₀/4, …, stored per invariant block of H_eff.

use num_complex::Complex64;

use super::{Operator, StateVector};
use crate::atom::N_LEVELS;

#[derive(Debug, Clone)]
struct Block {
    indices: Vec<usize>,
    /// −i·H restricted to the block, row-major.
    generator: Vec<Complex64>,
    /// One row-major matrix per ladder level.
    ladder: Vec<Vec<Complex64>>,
}

impl Block {
    fn dim(&self) -> usize {
        self.indices.len()
    }

    fn apply(&self, matrix: &[Complex64], psi: &mut StateVector) {
        let n = self.dim();
        let mut local = [Complex64::new(0.0, 0.0); N_LEVELS];
        for (k, &i) in self.indices.iter().enumerate() {
            local[k] = psi[i];
        }
        for (r, &i) in self.indices.iter().enumerate() {
            let row = &matrix[r * n..(r + 1) * n];
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..n {
                acc += row[c] * local[c];
            }
            psi[i] = acc;
        }
    }
}

/// Block-diagonal ladder of propagators for one time-independent H_eff.
#[derive(Debug, Clone)]
pub struct Propagator {
    blocks: Vec<Block>,
    steps: Vec<f64>,
}

impl Propagator {
    /// Builds the ladder from `coarsest` down to the first step ≤ `finest`.
    pub fn new(h: &Operator, coarsest: f64, finest: f64) -> Self {
        assert!(coarsest > 0.0 && finest > 0.0 && finest <= coarsest);
        let mut steps = vec![coarsest];
        while *steps.last().unwrap() > finest {
            let next = steps.last().unwrap() / 2.0;
            steps.push(next);
        }
        let finest_step = *steps.last().unwrap();

        let blocks = connected_blocks(h)
            .into_iter()
            .map(|indices| {
                let n = indices.len();
                let mut generator = vec![Complex64::new(0.0, 0.0); n * n];
                for (r, &i) in indices.iter().enumerate() {
                    for (c, &j) in indices.iter().enumerate() {
                        generator[r * n + c] = -Complex64::i() * h[(i, j)];
                    }
                }
                let mut ladder = vec![Vec::new(); steps.len()];
                let last = steps.len() - 1;
                ladder[last] = expm(&generator, n, finest_step);
                for k in (0..last).rev() {
                    ladder[k] = matmul(&ladder[k + 1], &ladder[k + 1], n);
                }
                Block {
                    indices,
                    generator,
                    ladder,
                }
            })
            .collect();
        Self { blocks, steps }
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn finest_step(&self) -> f64 {
        *self.steps.last().unwrap()
    }

    /// ψ ← exp(−iH·h_k)ψ
    pub fn step(&self, level: usize, psi: &mut StateVector) {
        for b in &self.blocks {
            b.apply(&b.ladder[level], psi);
        }
    }

    /// ψ ← exp(−iH·dt)ψ for arbitrary dt, without using the ladder.
    pub fn evolve_exact(&self, dt: f64, psi: &mut StateVector) {
        for b in &self.blocks {
            let u = expm(&b.generator, b.dim(), dt);
            b.apply(&u, psi);
        }
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Block::dim).collect()
    }
}

/// Connected components of the coupling graph of `h`.
fn connected_blocks(h: &Operator) -> Vec<Vec<usize>> {
    let mut label: Vec<Option<usize>> = vec![None; N_LEVELS];
    let mut blocks = Vec::new();
    for start in 0..N_LEVELS {
        if label[start].is_some() {
            continue;
        }
        let id = blocks.len();
        let mut members = vec![start];
        label[start] = Some(id);
        let mut cursor = 0;
        while cursor < members.len() {
            let i = members[cursor];
            cursor += 1;
            for j in 0..N_LEVELS {
                if label[j].is_none() && (h[(i, j)].norm() > 0.0 || h[(j, i)].norm() > 0.0) {
                    label[j] = Some(id);
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }
    blocks
}

fn matmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for k in 0..n {
            let a_rk = a[r * n + k];
            if a_rk.norm_sqr() == 0.0 {
                continue;
            }
            for c in 0..n {
                out[r * n + c] += a_rk * b[k * n + c];
            }
        }
    }
    out
}

/// exp(G·dt) by scaling and squaring with a Taylor core.
fn expm(generator: &[Complex64], n: usize, dt: f64) -> Vec<Complex64> {
    let norm1 = (0..n)
        .map(|c| (0..n).map(|r| generator[r * n + c].norm()).sum::<f64>())
        .fold(0.0, f64::max)
        * dt.abs();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a: Vec<Complex64> = generator.iter().map(|g| g * (dt * scale)).collect();

    let mut result = vec![Complex64::new(0.0, 0.0); n * n];
    let mut term = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        result[i * n + i] = Complex64::new(1.0, 0.0);
        term[i * n + i] = Complex64::new(1.0, 0.0);
    }
    for k in 1..=18 {
        term = matmul(&term, &a, n);
        let inv = 1.0 / k as f64;
        for t in term.iter_mut() {
            *t *= inv;
        }
        for (r, t) in result.iter_mut().zip(&term) {
            *r += *t;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, n);
    }
    result
}
