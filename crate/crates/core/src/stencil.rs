//! Centred finite-difference stencils on equally spaced grids.

/// Fornberg's recursion: weights for derivatives `0..=max_order` at `x0`
/// from function values at `nodes`. Row `m` of the result holds the weights
/// of the m-th derivative.
pub fn fornberg_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Unit-spacing weights for derivatives `1..=4` on offsets `-radius..=radius`.
#[derive(Debug, Clone)]
pub struct CentralStencil {
    radius: usize,
    /// `weights[k - 1]` differentiates k times.
    weights: Vec<Vec<f64>>,
}

impl CentralStencil {
    pub fn new(radius: usize) -> Self {
        let nodes: Vec<f64> = (-(radius as i64)..=radius as i64).map(|k| k as f64).collect();
        let all = fornberg_weights(0.0, &nodes, 4);
        Self {
            radius,
            weights: all.into_iter().skip(1).collect(),
        }
    }

    /// The nine-point stencil.
    pub fn nine_point() -> Self {
        Self::new(4)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self, order: usize) -> &[f64] {
        &self.weights[order - 1]
    }

    /// `order`-th derivative from `values` sampled at `center + k·step`,
    /// `k = -radius..=radius`.
    pub fn derivative(&self, values: &[f64], step: f64, order: usize) -> f64 {
        assert_eq!(values.len(), 2 * self.radius + 1, "stencil/sample size mismatch");
        assert!((1..=4).contains(&order), "derivative order 1..=4");
        // Pair symmetric terms so exact symmetry in `values` cancels exactly.
        let w = self.weights(order);
        let r = self.radius;
        let mut acc = w[r] * values[r];
        for k in 1..=r {
            acc += w[r + k] * values[r + k] + w[r - k] * values[r - k];
        }
        acc / step.powi(order as i32)
    }
}
