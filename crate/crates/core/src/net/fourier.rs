use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::grid::Coordinate;

/// Gaussian random Fourier features `[cos(2 pi B c), sin(2 pi B c)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierMapping {
    /// M x 2 projection, entries drawn from `N(0, scale^2)`.
    pub b_matrix: Vec<[f64; 2]>,
    pub scale: f64,
}

impl FourierMapping {
    pub fn new<R: Rng>(mapping_size: usize, scale: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, scale).expect("finite non-negative scale");
        let b_matrix = (0..mapping_size).map(|_| [rng.sample(normal), rng.sample(normal)]).collect();
        Self { b_matrix, scale }
    }

    pub fn mapping_size(&self) -> usize {
        self.b_matrix.len()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.b_matrix.len()
    }

    pub fn map_into(&self, c: Coordinate, out: &mut [f64]) {
        let m = self.mapping_size();
        for (i, b) in self.b_matrix.iter().enumerate() {
            let (s, co) = (2.0 * PI * (b[0] * c.f + b[1] * c.t)).sin_cos();
            out[i] = co;
            out[m + i] = s;
        }
    }

    pub fn map(&self, c: Coordinate) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.map_into(c, &mut out);
        out
    }

    pub fn map_batch(&self, coords: &[Coordinate]) -> Matrix {
        let mut out = Matrix::zeros(coords.len(), self.output_dim());
        for (r, &c) in coords.iter().enumerate() {
            self.map_into(c, out.row_mut(r));
        }
        out
    }
}
