//! Gauss-Legendre rules mapped onto finite intervals.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Nodes and weights of an `order`-point Gauss-Legendre rule on `[a, b]`.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn new(order: usize, a: f64, b: f64) -> Self {
        let order = NonZeroUsize::new(order.max(1)).unwrap();
        let quad = GaussLegendre::new(order);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let (nodes, weights) = quad.iter().map(|&(x, w)| (mid + half * x, half * w)).unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}
