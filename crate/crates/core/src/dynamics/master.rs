//! Direct Lindblad integration of the full 13-level density matrix.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use super::{effective_hamiltonian, free_hamiltonian, jump_channels, DriveField, Operator};
use crate::atom::{LevelScheme, N_LEVELS};
use crate::error::{Error, Result};

const RTOL: f64 = 1e-9;
const ATOL: f64 = 1e-11;
const PHYSICAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    pub time: f64,
    pub rho: Operator,
}

impl OracleSample {
    pub fn populations(&self) -> [f64; N_LEVELS] {
        std::array::from_fn(|i| self.rho[(i, i)].re)
    }

    pub fn coherence(&self, i: usize, j: usize) -> Complex64 {
        self.rho[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }
}

struct Lindbladian {
    h: Operator,
    /// (rate, L) pairs.
    collapse: Vec<(f64, Operator)>,
}

impl Lindbladian {
    fn rhs(&self, rho: &Operator) -> Operator {
        let i = Complex64::i();
        let hr = self.h * rho;
        let mut out = (hr - rho * self.h.adjoint()) * (-i);
        for (rate, l) in &self.collapse {
            out += l * rho * l.adjoint() * Complex64::new(*rate, 0.0);
        }
        out
    }
}

fn collapse_operators(scheme: &LevelScheme) -> Vec<(f64, Operator)> {
    jump_channels(scheme)
        .into_iter()
        .filter(|c| c.rate > 0.0)
        .map(|c| {
            let mut l = Operator::zeros();
            for &(from, to, amp) in &c.transitions {
                l[(to, from)] += Complex64::new(amp, 0.0);
            }
            (c.rate, l)
        })
        .collect()
}

fn check_physical(rho: &Operator) -> Result<()> {
    let herm = (rho - rho.adjoint()).norm();
    if herm > PHYSICAL_TOL {
        return Err(Error::domain(format!("initial density matrix not Hermitian ({herm:.2e})")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > PHYSICAL_TOL || tr.im.abs() > PHYSICAL_TOL {
        return Err(Error::domain(format!("initial density matrix has trace {tr}")));
    }
    let sym = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let min = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -PHYSICAL_TOL {
        return Err(Error::domain(format!(
            "initial density matrix not positive semidefinite (eigenvalue {min:.2e})"
        )));
    }
    Ok(())
}

/// Integrates dρ/dt = −i(H_eff ρ − ρ H_eff†) + Σ_k γ_k L_k ρ L_k† from t = 0
/// and returns ρ at each time of `t_grid` (sorted, ≥ 0).
pub fn master_equation_oracle(
    rho0: &Operator,
    scheme: &LevelScheme,
    drive: &DriveField,
    t_grid: &[f64],
) -> Result<Vec<OracleSample>> {
    scheme.validate()?;
    drive.validate()?;
    check_physical(rho0)?;
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::domain("t_grid must be finite and >= 0"));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("t_grid must be sorted"));
    }
    let collapse = collapse_operators(scheme);
    let on = Lindbladian {
        h: effective_hamiltonian(scheme, drive),
        collapse: collapse.clone(),
    };
    let off = Lindbladian {
        h: free_hamiltonian(scheme, drive.detuning),
        collapse,
    };

    let mut rho = *rho0;
    let mut t = 0.0;
    let mut h_try = 1e-3;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        while t < target {
            // Split at the drive edges so each piece has a constant generator.
            let edge = [drive.window.0, drive.window.1]
                .into_iter()
                .filter(|&e| e > t)
                .fold(target, f64::min);
            let lind = if drive.is_on(t) { &on } else { &off };
            h_try = integrate(lind, &mut rho, t, edge, h_try);
            t = edge;
        }
        out.push(OracleSample { time: target, rho });
    }
    Ok(out)
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive integration over [t0, t1]; returns the last accepted step size.
fn integrate(lind: &Lindbladian, rho: &mut Operator, t0: f64, t1: f64, mut h: f64) -> f64 {
    let mut t = t0;
    let mut last_ok = h;
    while t1 - t > 1e-15 {
        let step = h.min(t1 - t);
        let mut k: [Operator; 7] = [Operator::zeros(); 7];
        for s in 0..7 {
            let mut y = *rho;
            for (j, &a) in A[s].iter().enumerate().take(s) {
                if a != 0.0 {
                    y += k[j] * Complex64::new(a * step, 0.0);
                }
            }
            k[s] = lind.rhs(&y);
        }
        let mut high = *rho;
        let mut err = Operator::zeros();
        for s in 0..7 {
            high += k[s] * Complex64::new(B5[s] * step, 0.0);
            err += k[s] * Complex64::new((B5[s] - B4[s]) * step, 0.0);
        }
        let mut e = 0.0f64;
        for (d, y) in err.iter().zip(high.iter()) {
            let scale = ATOL + RTOL * y.norm();
            e = e.max(d.norm() / scale);
        }
        if e <= 1.0 {
            *rho = high;
            t += step;
            last_ok = step;
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h = step * factor;
    }
    last_ok.max(h.min(1.0))
}
