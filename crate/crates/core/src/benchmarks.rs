//! Ready-made synthetic instances used by the studies and tests.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh1D;
use crate::problem::{synthesize_data, Bilinear, CoefficientProblem, DenseLinearProblem, FemProblem, ScalarFn};

/// `-u'' + q u = f` on (0, 1) with `u† = A sin(πx)` and a smooth `q†`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothCoefficient {
    pub amplitude: f64,
    pub data_cells: usize,
    pub initial_cells: usize,
    /// Constant prior, also the starting guess.
    pub q0: f64,
    pub delta: f64,
    pub seed: u64,
}

impl Default for SmoothCoefficient {
    fn default() -> Self {
        SmoothCoefficient { amplitude: 100.0, data_cells: 4096, initial_cells: 8, q0: 1.0, delta: 1e-2, seed: 7 }
    }
}

pub fn smooth_q_dagger(x: f64) -> f64 {
    1.0 + 0.5 * (2.0 * PI * x).sin() + x
}

pub struct SmoothInstance {
    pub problem: CoefficientProblem,
    pub mesh0: Mesh1D,
    pub q_start: f64,
    /// `u†`, the exact state (before noise).
    pub exact_state: ScalarFn,
}

impl SmoothCoefficient {
    pub fn build(&self) -> Result<SmoothInstance> {
        if !(self.amplitude > 0.0) || self.data_cells < 2 || self.initial_cells < 2 {
            return Err(Error::invalid("smooth benchmark needs amplitude > 0 and at least two cells"));
        }
        let a = self.amplitude;
        let source: ScalarFn = Arc::new(move |x| a * (PI * PI + smooth_q_dagger(x)) * (PI * x).sin());
        let q0 = self.q0;
        let prior: ScalarFn = Arc::new(move |_| q0);
        let data_mesh = Mesh1D::uniform(0.0, 1.0, self.data_cells)?;
        let (_, noisy) = synthesize_data(Bilinear, source.clone(), smooth_q_dagger, self.delta, self.seed, data_mesh)?;
        let problem = FemProblem::new(Bilinear, source, prior, noisy, self.delta);
        Ok(SmoothInstance {
            problem,
            mesh0: Mesh1D::uniform(0.0, 1.0, self.initial_cells)?,
            q_start: self.q0,
            exact_state: Arc::new(move |x| a * (PI * x).sin()),
        })
    }
}

/// Dense linear instance `T = U diag(σ_j) Vᵀ` with `σ_j = j^{-decay}` and a
/// manufactured exact solution `q† = q_0 + (TᵀT)^ν s`. The source element
/// has coefficients `±j^{-source_decay}` in the right singular basis, which
/// for `source_decay = 1/2` makes the source condition sharp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenseRate {
    pub n: usize,
    pub decay: f64,
    pub nu: f64,
    pub source_norm: f64,
    pub source_decay: f64,
    pub delta: f64,
    pub seed: u64,
}

impl Default for DenseRate {
    fn default() -> Self {
        DenseRate { n: 64, decay: 2.0, nu: 0.5, source_norm: 100.0, source_decay: 0.5, delta: 1e-2, seed: 11 }
    }
}

pub struct DenseInstance {
    pub problem: DenseLinearProblem,
    pub q_dagger: Vec<f64>,
    pub source: Vec<f64>,
    pub exact_data: Vec<f64>,
}

/// Random orthogonal matrix from the QR factors of a Gaussian matrix.
fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = DVector::from_fn(n, |i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 });
    q * DMatrix::from_diagonal(&signs)
}

impl DenseRate {
    fn factors(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let u = orthogonal(self.n, &mut rng);
        let v = orthogonal(self.n, &mut rng);
        (u, v)
    }

    pub fn operator(&self) -> DMatrix<f64> {
        let (u, v) = self.factors();
        let s = DVector::from_fn(self.n, |j, _| ((j + 1) as f64).powf(-self.decay));
        &u * DMatrix::from_diagonal(&s) * v.transpose()
    }

    /// Source element of norm `source_norm`.
    pub fn source(&self) -> Vec<f64> {
        let (_, v) = self.factors();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let c = DVector::from_fn(self.n, |j, _| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * ((j + 1) as f64).powf(-self.source_decay)
        });
        let s = v * c;
        let norm = s.norm();
        s.iter().map(|x| x * self.source_norm / norm).collect()
    }

    pub fn build(&self) -> Result<DenseInstance> {
        if self.n == 0 || !(self.nu > 0.0) || !(self.delta >= 0.0) {
            return Err(Error::invalid("dense benchmark needs n > 0, nu > 0 and delta >= 0"));
        }
        let t = self.operator();
        let source = self.source();
        let q0 = vec![0.0; self.n];
        let q_dagger = crate::misfit::manufacture_source(&t, &crate::misfit::RateFunction::holder(self.nu)?, &source, &q0)?;
        let exact_data = (&t * DVector::from_column_slice(&q_dagger)).as_slice().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(1));
        let e: Vec<f64> = (0..self.n).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).collect();
        let en = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        let data: Vec<f64> = exact_data.iter().zip(&e).map(|(y, e)| y + self.delta * e / en).collect();
        let problem = DenseLinearProblem::new(t, data, q0, self.delta)?;
        Ok(DenseInstance { problem, q_dagger, source, exact_data })
    }
}
