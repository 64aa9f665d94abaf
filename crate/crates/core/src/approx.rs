//! Discounted moments read off a matrix generator.
//!
//! All actions run in the centered basis, where entries stay moderate even
//! when the expansion point is far from zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expmv::{expmv_grid, TimeGrid};
use crate::generator::MatrixGenerator;
use crate::models::MigrationMatrix;

impl MatrixGenerator {
    /// `E_x[exp(-∫_0^t r(X_s) ds)]` for every grid time: the action on the
    /// constant function, evaluated at `x`.
    pub fn bond_prices(&self, x: f64, grid: &TimeGrid, tol: f64) -> Result<Vec<f64>> {
        if self.layout().m() != 1 || self.layout().n() != 1 {
            return Err(Error::InvalidModel(format!(
                "bond prices need a univariate short-rate model, got {}",
                self.model().tag()
            )));
        }
        let mut f = DMatrix::zeros(self.dim(), 1);
        f[(0, 0)] = 1.0;
        let res = expmv_grid(self.centered(), &f, grid, tol)?;
        let b = self.basis_values(&[x])?;
        Ok(res
            .values
            .iter()
            .map(|g| g.column(0).iter().zip(&b).map(|(c, v)| c * v).sum())
            .collect())
    }

    /// Continuously compounded yields `-ln(P)/t`.
    pub fn bond_yields(&self, x: f64, grid: &TimeGrid, tol: f64) -> Result<Vec<f64>> {
        let prices = self.bond_prices(x, grid, tol)?;
        Ok(prices
            .iter()
            .zip(grid.times())
            .map(|(p, &t)| if t == 0.0 { 0.0 } else { -p.ln() / t })
            .collect())
    }

    /// Migration matrices `P_ij(t, y)` for every grid time. Column `j` of the
    /// action starts from the rating indicator `1{z = e_j}`.
    pub fn migration_matrices(
        &self,
        y: &[f64],
        grid: &TimeGrid,
        tol: f64,
    ) -> Result<Vec<MigrationMatrix>> {
        let m = self.layout().m();
        let mut f = DMatrix::zeros(self.dim(), m);
        for j in 0..m {
            f[(j, j)] = 1.0;
        }
        let res = expmv_grid(self.centered(), &f, grid, tol)?;
        let b = self.basis_values(y)?;
        Ok(res
            .values
            .iter()
            .zip(grid.times())
            .map(|(g, &t)| {
                let p = DMatrix::from_fn(m, m, |i, j| {
                    b.iter()
                        .enumerate()
                        .map(|(a, v)| g[(a * m + i, j)] * v)
                        .sum()
                });
                MigrationMatrix {
                    p,
                    t,
                    y: y.to_vec(),
                }
            })
            .collect())
    }
}
