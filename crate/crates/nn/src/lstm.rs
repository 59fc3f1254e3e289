//! LSTM layers built from graph operations.

use rand::Rng;

use crate::graph::{Graph, NodeId};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Matrix;

/// Gate order in the packed weights: input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub input_dim: usize,
    pub hidden: usize,
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

impl Lstm {
    /// Uniform init in ±1/√hidden, forget-gate bias 1.
    pub fn init(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let wx = store.add_uniform(format!("{prefix}.wx"), input_dim, 4 * hidden, bound, rng);
        let wh = store.add_uniform(format!("{prefix}.wh"), hidden, 4 * hidden, bound, rng);
        let mut bias = Matrix::zeros(1, 4 * hidden);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let b = store.add(format!("{prefix}.bias"), bias, false);
        Lstm { input_dim, hidden, wx, wh, b }
    }

    pub fn lookup(store: &ParamStore, prefix: &str) -> Option<Self> {
        let wx = store.id(&format!("{prefix}.wx"))?;
        let wh = store.id(&format!("{prefix}.wh"))?;
        let b = store.id(&format!("{prefix}.bias"))?;
        let (input_dim, h4) = store.get(wx).shape();
        Some(Lstm { input_dim, hidden: h4 / 4, wx, wh, b })
    }

    /// Runs over `steps` time-major blocks of `batch` rows each.
    /// Returns the hidden state of every step and the final `(h, c)`.
    pub fn run(&self, g: &mut Graph<'_>, xs: NodeId, batch: usize, state: Option<(NodeId, NodeId)>) -> (Vec<NodeId>, (NodeId, NodeId)) {
        let steps = g.shape(xs).0 / batch;
        let h4 = self.hidden * 4;
        let wx = g.param(self.wx);
        let b = g.param(self.b);
        let wh = g.param(self.wh);
        let proj = g.matmul(xs, wx);
        let proj = g.add_row(proj, b);
        let (mut h, mut c) = match state {
            Some(s) => s,
            None => {
                let z = g.input(Matrix::zeros(batch, self.hidden));
                (z, z)
            }
        };
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = g.slice_rows(proj, t * batch, batch);
            let hh = g.matmul(h, wh);
            let z = g.add(xt, hh);
            debug_assert_eq!(g.shape(z).1, h4);
            let zi = g.slice_cols(z, 0, self.hidden);
            let zf = g.slice_cols(z, self.hidden, self.hidden);
            let zg = g.slice_cols(z, 2 * self.hidden, self.hidden);
            let zo = g.slice_cols(z, 3 * self.hidden, self.hidden);
            let i = g.sigmoid(zi);
            let f = g.sigmoid(zf);
            let cand = g.tanh(zg);
            let o = g.sigmoid(zo);
            let keep = g.mul(f, c);
            let write = g.mul(i, cand);
            c = g.add(keep, write);
            let tc = g.tanh(c);
            h = g.mul(o, tc);
            outputs.push(h);
        }
        (outputs, (h, c))
    }
}
