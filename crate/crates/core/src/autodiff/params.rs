use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::graph::{Grads, Graph, Mat, Var};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Named, ordered collection of trainable matrices.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "Vec<TensorRecord>", try_from = "Vec<TensorRecord>")]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Mat>,
}

/// On-disk form of one parameter: name, shape manifest, row-major data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl From<ParamSet> for Vec<TensorRecord> {
    fn from(p: ParamSet) -> Self {
        p.names
            .into_iter()
            .zip(p.values)
            .map(|(name, m)| TensorRecord {
                name,
                shape: [m.nrows(), m.ncols()],
                data: m.as_standard_layout().iter().copied().collect(),
            })
            .collect()
    }
}

impl TryFrom<Vec<TensorRecord>> for ParamSet {
    type Error = String;

    fn try_from(records: Vec<TensorRecord>) -> std::result::Result<Self, String> {
        let mut p = ParamSet::default();
        for r in records {
            let m = Array2::from_shape_vec((r.shape[0], r.shape[1]), r.data)
                .map_err(|e| format!("tensor {}: {e}", r.name))?;
            if m.iter().any(|v| !v.is_finite()) {
                return Err(format!("tensor {} has non-finite entries", r.name));
            }
            p.names.push(r.name);
            p.values.push(m);
        }
        Ok(p)
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    /// Uniform initialization in `[-bound, bound]`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: (usize, usize),
        bound: f64,
        rng: &mut RngStream,
    ) -> usize {
        let m = Array2::from_shape_simple_fn(shape, || (2.0 * rng.uniform() - 1.0) * bound);
        self.add(name, m)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &Mat {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Mat {
        &mut self.values[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Same tensor names and shapes in the same order.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.names == other.names && self.values.iter().zip(&other.values).all(|(a, b)| a.dim() == b.dim())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }

    pub fn map_inplace(&mut self, mut f: impl FnMut(&mut f64)) {
        for m in &mut self.values {
            m.iter_mut().for_each(&mut f);
        }
    }

    /// Concatenate all parameters row-major into one vector.
    /// `self ← decay·self + (1 − decay)·current`, tensor by tensor.
    pub fn ema_update(&mut self, current: &ParamSet, decay: f64) {
        for (avg, cur) in self.values.iter_mut().zip(&current.values) {
            avg.zip_mut_with(cur, |a, c| *a = decay * *a + (1.0 - decay) * c);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for m in &self.values {
            out.extend(m.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::input(format!(
                "expected {} scalars, got {}",
                self.num_scalars(),
                flat.len()
            )));
        }
        let mut off = 0;
        for m in &mut self.values {
            for v in m.iter_mut() {
                *v = flat[off];
                off += 1;
            }
        }
        Ok(())
    }

    /// Place every parameter on the graph as a tracked leaf.
    pub fn attach(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|m| g.param(m.clone())).collect()
    }

    /// Place every parameter on the graph as a constant (inference).
    pub fn attach_const(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|m| g.constant(m.clone())).collect()
    }

    /// Collect gradients for leaves created by [`ParamSet::attach`].
    pub fn collect_grads(&self, grads: &Grads, vars: &[Var]) -> Vec<Mat> {
        vars.iter()
            .zip(&self.values)
            .map(|(v, m)| grads.get_or_zeros(*v, m))
            .collect()
    }
}

pub fn flatten_grads(grads: &[Mat]) -> Vec<f64> {
    grads.iter().flat_map(|m| m.iter().copied()).collect()
}

/// Adam with bias correction and optional global gradient-norm clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, clip_norm: Option<f64>) -> Self {
        let zeros: Vec<Mat> = (0..params.len())
            .map(|i| Mat::zeros(params.get(i).raw_dim()))
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Mat]) {
        let mut scale = 1.0;
        if let Some(max) = self.clip_norm {
            let norm = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
            if norm > max {
                scale = max / norm;
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(i);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                let g = g * scale;
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            });
        }
    }
}
