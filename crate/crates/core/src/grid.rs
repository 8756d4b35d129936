//! Periodic computational box and sampled real fields.

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub half_width: f64,
}

pub fn make_grid(points_per_axis: usize, half_width: f64) -> Result<GridSpec> {
    if !points_per_axis.is_power_of_two() {
        return Err(LabError::Grid("points_per_axis must be a power of two".into()));
    }
    if points_per_axis < 16 {
        return Err(LabError::Grid("points_per_axis must be at least 16".into()));
    }
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(LabError::Grid("half_width must be positive".into()));
    }
    Ok(GridSpec {
        points_per_axis,
        half_width,
    })
}

impl GridSpec {
    pub fn n(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    pub fn len(&self) -> usize {
        self.points_per_axis * self.points_per_axis
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points_per_axis).map(|i| self.coord(i)).collect()
    }

    /// Signed mode number for storage index `m`.
    pub fn mode(&self, m: usize) -> i64 {
        let n = self.points_per_axis as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    pub fn wavenumber(&self, m: usize) -> f64 {
        std::f64::consts::PI * self.mode(m) as f64 / self.half_width
    }

    /// Largest wavenumber magnitude represented.
    pub fn max_wavenumber(&self) -> f64 {
        std::f64::consts::PI * (self.points_per_axis / 2) as f64 / self.half_width
    }

    /// Index of the node at the origin.
    pub fn origin_index(&self) -> usize {
        self.points_per_axis / 2
    }
}

/// Real samples on the grid; `values[j * n + i]` is the value at `(x_i, x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::Grid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Numerical("field contains non-finite values".into()));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let xs = grid.coords();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..n {
            for i in 0..n {
                values.push(f(xs[i], xs[j]));
            }
        }
        ScalarField { grid, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.n() + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, a: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.add(&other.scale(-1.0))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Continuum L² inner product approximated by the grid sum.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        let h = self.grid.spacing();
        h * h
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Largest deviation from "even in x1, odd in x2", relative to max|v|.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.n();
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for j in 0..n {
            let jm = (n - j) % n;
            for i in 0..n {
                let im = (n - i) % n;
                let v = self.at(i, j);
                worst = worst
                    .max((v - self.at(im, j)).abs())
                    .max((v + self.at(i, jm)).abs());
            }
        }
        worst / scale
    }

    /// Largest deviation from a prescribed parity pair; `even_x1`/`even_x2`
    /// select v(-x1,x2)=±v and v(x1,-x2)=±v.
    pub fn parity_defect(&self, even_x1: bool, even_x2: bool) -> f64 {
        let n = self.grid.n();
        let s1 = if even_x1 { 1.0 } else { -1.0 };
        let s2 = if even_x2 { 1.0 } else { -1.0 };
        let mut worst = 0.0f64;
        for j in 0..n {
            let jm = (n - j) % n;
            for i in 0..n {
                let im = (n - i) % n;
                let v = self.at(i, j);
                worst = worst
                    .max((v - s1 * self.at(im, j)).abs())
                    .max((v - s2 * self.at(i, jm)).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.symmetry_defect() <= tol
    }
}
