use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

type C = Complex64;

/// Pauli basis {1, σx, σy, σz}.
pub fn pauli(m: usize) -> Matrix2<C> {
    let (o, i, z) = (C::new(1.0, 0.0), C::new(0.0, 1.0), C::new(0.0, 0.0));
    match m {
        0 => Matrix2::new(o, z, z, o),
        1 => Matrix2::new(z, o, o, z),
        2 => Matrix2::new(z, -i, i, z),
        3 => Matrix2::new(o, z, z, -o),
        _ => panic!("Pauli index {m} out of range"),
    }
}

/// ρ = (1 + r·σ)/2.
pub fn density_from_bloch(r: [f64; 3]) -> Matrix2<C> {
    (pauli(0) + pauli(1) * C::from(r[0]) + pauli(2) * C::from(r[1]) + pauli(3) * C::from(r[2]))
        * C::from(0.5)
}

/// ε(ρ) = Σ χ_mn σ_m ρ σ_n.
pub fn apply_chi(chi: &Matrix4<C>, rho: &Matrix2<C>) -> Matrix2<C> {
    let mut out = Matrix2::zeros();
    for m in 0..4 {
        for n in 0..4 {
            out += pauli(m) * rho * pauli(n) * chi[(m, n)];
        }
    }
    out
}

/// Input state and the state the process returned for it, as Bloch vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographyInput {
    pub input: [f64; 3],
    pub output: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiMatrix {
    pub chi: Matrix4<C>,
}

impl ChiMatrix {
    /// |χ₀₀|, the weight of the identity component.
    pub fn process_fidelity(&self) -> f64 {
        self.chi[(0, 0)].norm()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.chi - self.chi.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C {
        self.chi.trace()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (self.chi + self.chi.adjoint()) * C::from(0.5);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Negative eigenvalues below −tol are reported, never clipped.
    pub fn negative_eigenvalues(&self, tol: f64) -> Vec<f64> {
        self.eigenvalues().into_iter().filter(|&e| e < -tol).collect()
    }

    pub fn summary(&self) -> ChiSummary {
        ChiSummary {
            re: std::array::from_fn(|m| std::array::from_fn(|n| self.chi[(m, n)].re)),
            im: std::array::from_fn(|m| std::array::from_fn(|n| self.chi[(m, n)].im)),
            process_fidelity: self.process_fidelity(),
            hermiticity_error: self.hermiticity_error(),
            trace_error: (self.trace() - C::from(1.0)).norm(),
            eigenvalues: self.eigenvalues(),
            physical: self.negative_eigenvalues(1e-9).is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSummary {
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
    pub process_fidelity: f64,
    pub hermiticity_error: f64,
    pub trace_error: f64,
    pub eigenvalues: Vec<f64>,
    pub physical: bool,
}

/// Linear-inversion process tomography. With more inputs than needed the
/// χ matrix is the least-squares solution. Fails unless the inputs span the
/// full operator space.
pub fn process_tomography(inputs: &[TomographyInput]) -> Result<ChiMatrix> {
    let rows = 4 * inputs.len();
    let mut a = DMatrix::<C>::zeros(rows, 16);
    let mut y = DVector::<C>::zeros(rows);
    for (k, inp) in inputs.iter().enumerate() {
        let rho = density_from_bloch(inp.input);
        let out = density_from_bloch(inp.output);
        for m in 0..4 {
            for n in 0..4 {
                let term = pauli(m) * rho * pauli(n);
                for e in 0..4 {
                    a[(4 * k + e, 4 * m + n)] = term[(e / 2, e % 2)];
                }
            }
        }
        for e in 0..4 {
            y[4 * k + e] = out[(e / 2, e % 2)];
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < 16 {
        return Err(Error::analysis(format!(
            "input states are not informationally complete (rank {rank} of 16)"
        )));
    }
    let x = svd
        .solve(&y, 1e-10 * smax)
        .map_err(|e| Error::analysis(format!("chi inversion failed: {e}")))?;
    let mut chi = Matrix4::from_fn(|m, n| x[4 * m + n]);
    // Remove round-off asymmetry; the exact solution is Hermitian for Hermitian data.
    chi = (chi + chi.adjoint()) * C::from(0.5);
    Ok(ChiMatrix { chi })
}

/// Uhlmann fidelity of a pure target |n⟩ with a (possibly unphysical) output r.
pub fn pure_state_fidelity(target: [f64; 3], output: [f64; 3]) -> f64 {
    0.5 * (1.0 + target.iter().zip(output).map(|(a, b)| a * b).sum::<f64>())
}

/// Average fidelity over a qubit 2-design implied by process fidelity F:
/// (2F + 1)/3.
pub fn two_design_average(process_fidelity: f64) -> f64 {
    (2.0 * process_fidelity + 1.0) / 3.0
}

/// Rotation of the equatorial plane, in radians, that best maps the input
/// Bloch vectors onto the outputs.
pub fn fit_frame_rotation(pairs: &[TomographyInput]) -> f64 {
    let (mut dot, mut cross) = (0.0, 0.0);
    for p in pairs {
        dot += p.input[0] * p.output[0] + p.input[1] * p.output[1];
        cross += p.input[0] * p.output[1] - p.input[1] * p.output[0];
    }
    cross.atan2(dot)
}

pub fn rotate_z(v: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}
