//! Bicubic Hermite table of an axisymmetric potential.
//!
//! Each node stores `U`, `∂ρU`, `∂zU` and `∂ρ∂zU`, so the interpolant is C¹ and
//! reproduces the stored derivatives exactly at the nodes.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisymmetricTable {
    rho0: f64,
    d_rho: f64,
    n_rho: usize,
    z0: f64,
    d_z: f64,
    n_z: usize,
    /// `[U, U_ρ, U_z, U_ρz]` per node, `z` fastest.
    nodes: Vec<[f64; 4]>,
}

#[inline]
fn hermite(s: f64) -> ([f64; 4], [f64; 4]) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        [
            2.0 * s3 - 3.0 * s2 + 1.0,
            s3 - 2.0 * s2 + s,
            -2.0 * s3 + 3.0 * s2,
            s3 - s2,
        ],
        [
            6.0 * s2 - 6.0 * s,
            3.0 * s2 - 4.0 * s + 1.0,
            -6.0 * s2 + 6.0 * s,
            3.0 * s2 - 2.0 * s,
        ],
    )
}

impl AxisymmetricTable {
    /// Builds a table on uniform axes from node data `[U, U_ρ, U_z, U_ρz]`.
    pub fn new(rho: (f64, f64, usize), z: (f64, f64, usize), nodes: Vec<[f64; 4]>) -> Result<Self> {
        let (rho0, rho1, n_rho) = rho;
        let (z0, z1, n_z) = z;
        if n_rho < 2 || n_z < 2 || !(rho1 > rho0) || !(z1 > z0) {
            return Err(Error::InvalidInput("table axes need >= 2 increasing nodes".into()));
        }
        if nodes.len() != n_rho * n_z {
            return Err(Error::InvalidInput("table node count does not match axes".into()));
        }
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential table"));
        }
        Ok(Self {
            rho0,
            d_rho: (rho1 - rho0) / (n_rho - 1) as f64,
            n_rho,
            z0,
            d_z: (z1 - z0) / (n_z - 1) as f64,
            n_z,
            nodes,
        })
    }

    pub fn rho_range(&self) -> (f64, f64) {
        (self.rho0, self.rho0 + self.d_rho * (self.n_rho - 1) as f64)
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.z0, self.z0 + self.d_z * (self.n_z - 1) as f64)
    }

    pub fn node_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|n| n[0])
    }

    fn locate(x: f64, x0: f64, dx: f64, n: usize) -> (usize, f64) {
        let u = ((x - x0) / dx).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        (i, u - i as f64)
    }

    /// `(U, ∂ρU, ∂zU)` at `(ρ, z)`; coordinates outside the table are clamped.
    pub fn eval(&self, rho: f64, z: f64) -> (f64, f64, f64) {
        let (i, s) = Self::locate(rho, self.rho0, self.d_rho, self.n_rho);
        let (j, t) = Self::locate(z, self.z0, self.d_z, self.n_z);
        let (hs, dhs) = hermite(s);
        let (ht, dht) = hermite(t);
        let (hr, hz) = (self.d_rho, self.d_z);
        let mut u = 0.0;
        let mut ur = 0.0;
        let mut uz = 0.0;
        for (a, (ia, ib)) in [(0usize, (0usize, 1usize)), (1, (2, 3))] {
            for (b, (ja, jb)) in [(0usize, (0usize, 1usize)), (1, (2, 3))] {
                let n = &self.nodes[(i + a) * self.n_z + j + b];
                let c = [n[0], hr * n[1], hz * n[2], hr * hz * n[3]];
                // Basis pairs: (value, value), (slope, value), (value, slope), (slope, slope).
                let terms = [(ia, ja), (ib, ja), (ia, jb), (ib, jb)];
                for (k, &(p, q)) in terms.iter().enumerate() {
                    u += c[k] * hs[p] * ht[q];
                    ur += c[k] * dhs[p] * ht[q];
                    uz += c[k] * hs[p] * dht[q];
                }
            }
        }
        (u, ur / hr, uz / hz)
    }
}
