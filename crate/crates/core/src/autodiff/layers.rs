use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::ParamSet;
use crate::numerics::RngStream;

/// Affine map `x W + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, input: usize, output: usize, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let w = ps.add_uniform(format!("{name}.weight"), (input, output), bound, rng);
        let b = ps.add_uniform(format!("{name}.bias"), (1, output), bound, rng);
        Linear { w, b, input, output }
    }

    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Var {
        let xw = g.matmul(x, vars[self.w]);
        g.add_row(xw, vars[self.b])
    }
}

/// Single-layer GRU with fused `[reset, update, candidate]` gate weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub w_in: usize,
    pub w_hid: usize,
    pub b_in: usize,
    pub b_hid: usize,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(ps: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_in = ps.add_uniform(format!("{name}.w_in"), (input, 3 * hidden), bound, rng);
        let w_hid = ps.add_uniform(format!("{name}.w_hid"), (hidden, 3 * hidden), bound, rng);
        let b_in = ps.add_uniform(format!("{name}.b_in"), (1, 3 * hidden), bound, rng);
        let b_hid = ps.add_uniform(format!("{name}.b_hid"), (1, 3 * hidden), bound, rng);
        Gru {
            w_in,
            w_hid,
            b_in,
            b_hid,
            input,
            hidden,
        }
    }

    pub fn initial_state(&self, g: &mut Graph, batch: usize) -> Var {
        g.constant(ndarray::Array2::zeros((batch, self.hidden)))
    }

    pub fn step(&self, g: &mut Graph, vars: &[Var], x: Var, h: Var) -> Var {
        let gi = g.matmul(x, vars[self.w_in]);
        let gi = g.add_row(gi, vars[self.b_in]);
        let gh = g.matmul(h, vars[self.w_hid]);
        let gh = g.add_row(gh, vars[self.b_hid]);
        g.gru_cell(gi, gh, h)
    }

    /// Run over a sequence of `B×input` inputs and return every hidden state.
    pub fn run(&self, g: &mut Graph, vars: &[Var], inputs: &[Var], reverse: bool) -> Vec<Var> {
        let batch = g.value(inputs[0]).nrows();
        let mut h = self.initial_state(g, batch);
        let mut out = vec![h; inputs.len()];
        let order: Vec<usize> = if reverse {
            (0..inputs.len()).rev().collect()
        } else {
            (0..inputs.len()).collect()
        };
        for t in order {
            h = self.step(g, vars, inputs[t], h);
            out[t] = h;
        }
        out
    }
}
