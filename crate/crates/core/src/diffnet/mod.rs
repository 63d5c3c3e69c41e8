//! Minimal dense-network engine.
//!
//! Only what the FB losses need: batched forward passes through
//! rectifier MLPs, exact reverse-mode gradients for a given output
//! cotangent, Adam, and Polyak-averaged target copies. There is no general
//! graph engine; the two losses in [`crate::train`] drive forward/backward
//! explicitly.

mod adam;
mod target;

use std::io::{Read, Write};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{FbError, Result};

pub use adam::{Adam, AdamConfig};
pub use target::TargetCopy;

/// One affine layer; `weight` is `inputs × outputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }
}

/// Multi-layer perceptron: ReLU on hidden layers, identity on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Per-row output block selection for the last layer.
///
/// Row `i` only evaluates output columns
/// `blocks[i] * width .. (blocks[i] + 1) * width`. This is how F(s, a, z) is
/// evaluated for the single action of each transition without paying for the
/// other `|A| - 1` blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSelect {
    pub width: usize,
    pub blocks: Vec<usize>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[l]` the post-activation output of layer `l - 1`.
    acts: Vec<Array2<f64>>,
    output: Array2<f64>,
    select: Option<BlockSelect>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }
}

/// Gradient with the same layout as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    layers: Vec<Layer>,
}

impl Gradient {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradient {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Parameter blocks in declaration order (weight, bias, weight, …).
    pub fn values(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }
}

impl DenseNet {
    /// Kaiming-uniform weights (bound `√(6 / fan_in)`), biases uniform in
    /// `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least one layer");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let bias_bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        rng.random_range(-bound..bound)
                    }),
                    bias: Array1::from_shape_simple_fn(fan_out, || {
                        rng.random_range(-bias_bound..bias_bound)
                    }),
                }
            })
            .collect();
        DenseNet { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least one layer");
        DenseNet {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(FbError::Format("network without layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.ncols() {
                return Err(FbError::shape(l.weight.ncols(), l.bias.len()));
            }
            if i > 0 && layers[i - 1].weight.ncols() != l.weight.nrows() {
                return Err(FbError::shape(layers[i - 1].weight.ncols(), l.weight.nrows()));
            }
        }
        Ok(DenseNet { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.weight.ncols()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Parameter blocks in declaration order (weight, bias, weight, …).
    pub fn values(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values().flat_map(|s| s.iter().copied()).collect()
    }

    /// Overwrite all parameters from a flat vector in declaration order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(FbError::shape(self.num_params(), flat.len()));
        }
        let mut offset = 0;
        for block in self.values_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = affine_input(&x, &self.layers[0]);
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = affine(&h.view(), layer);
            }
            if i < last {
                relu_inplace(&mut h);
            }
        }
        Ok(h)
    }

    /// Forward pass keeping the activations needed by [`DenseNet::backward`].
    pub fn forward_cached(&self, x: Array2<f64>, select: Option<BlockSelect>) -> Result<ForwardCache> {
        self.check_input(x.ncols())?;
        if let Some(sel) = &select {
            if sel.blocks.len() != x.nrows() {
                return Err(FbError::shape(x.nrows(), sel.blocks.len()));
            }
            if sel.width == 0 || self.output_dim() % sel.width != 0 {
                return Err(FbError::shape(
                    format!("a divisor of {}", self.output_dim()),
                    sel.width,
                ));
            }
            let n_blocks = self.output_dim() / sel.width;
            if let Some(&bad) = sel.blocks.iter().find(|&&b| b >= n_blocks) {
                return Err(FbError::shape(format!("block < {n_blocks}"), bad));
            }
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(x);
        for (i, layer) in self.layers[..last].iter().enumerate() {
            let x = acts.last().unwrap().view();
            let mut h = if i == 0 { affine_input(&x, layer) } else { affine(&x, layer) };
            relu_inplace(&mut h);
            acts.push(h);
        }
        let h = acts.last().unwrap();
        let output = match &select {
            None if last == 0 => affine_input(&h.view(), &self.layers[0]),
            None => affine(&h.view(), &self.layers[last]),
            Some(sel) => affine_blocks(h, &self.layers[last], sel),
        };
        Ok(ForwardCache { acts, output, select })
    }

    /// Reverse-mode gradient of `⟨output, cotangent⟩` with respect to all
    /// parameters.
    pub fn backward(&self, cache: &ForwardCache, cotangent: ArrayView2<f64>) -> Result<Gradient> {
        Ok(self.backward_impl(cache, cotangent, false)?.0)
    }

    /// Like [`DenseNet::backward`], also returning the input gradient.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache,
        cotangent: ArrayView2<f64>,
    ) -> Result<(Gradient, Array2<f64>)> {
        let (g, dx) = self.backward_impl(cache, cotangent, true)?;
        Ok((g, dx.expect("input gradient requested")))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        cotangent: ArrayView2<f64>,
        want_input: bool,
    ) -> Result<(Gradient, Option<Array2<f64>>)> {
        if cotangent.dim() != cache.output.dim() {
            return Err(FbError::shape(
                format!("{:?}", cache.output.dim()),
                format!("{:?}", cotangent.dim()),
            ));
        }
        let mut grad = Gradient::zeros_like(self);
        let last = self.layers.len() - 1;
        let mut delta = match &cache.select {
            None => {
                let g = &mut grad.layers[last];
                general_mat_mul(1.0, &cache.acts[last].t(), &cotangent, 0.0, &mut g.weight);
                g.bias = cotangent.sum_axis(Axis(0));
                if last == 0 && !want_input {
                    return Ok((grad, None));
                }
                cotangent.dot(&self.layers[last].weight.t())
            }
            Some(sel) => backward_blocks(
                &cache.acts[last],
                &self.layers[last],
                &mut grad.layers[last],
                sel,
                cotangent,
            ),
        };
        for l in (0..last).rev() {
            // ReLU derivative: pass where the activation is positive.
            Zip::from(&mut delta).and(&cache.acts[l + 1]).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            let g = &mut grad.layers[l];
            if l == 0 {
                input_weight_grad(&cache.acts[0], &delta, &mut g.weight);
            } else {
                general_mat_mul(1.0, &cache.acts[l].t(), &delta, 0.0, &mut g.weight);
            }
            g.bias = delta.sum_axis(Axis(0));
            if l > 0 || want_input {
                delta = delta.dot(&self.layers[l].weight.t());
            }
        }
        Ok((grad, want_input.then_some(delta)))
    }

    /// Little-endian f64 parameters in declaration order.
    pub fn write_params<W: Write>(&self, w: &mut W) -> Result<()> {
        for block in self.values() {
            for v in block {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_params<R: Read>(sizes: &[usize], r: &mut R) -> Result<Self> {
        let mut net = DenseNet::zeros(sizes);
        let mut buf = [0u8; 8];
        for block in net.values_mut() {
            for v in block.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        Ok(net)
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(FbError::shape(self.input_dim(), cols));
        }
        Ok(())
    }
}

/// Inputs at most this dense take the sparse first-layer path (one-hot
/// features).
const SPARSE_DENSITY: f64 = 0.25;

/// Non-zero `(column, value)` entries per row, if `x` is sparse enough.
fn sparse_rows(x: &ArrayView2<f64>) -> Option<Vec<Vec<(usize, f64)>>> {
    let nnz = x.iter().filter(|v| **v != 0.0).count();
    if x.is_empty() || nnz as f64 > SPARSE_DENSITY * x.len() as f64 {
        return None;
    }
    Some(
        x.rows()
            .into_iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (j, v)).collect())
            .collect(),
    )
}

/// First layer: like [`affine`] but skips zero inputs when most are zero.
fn affine_input(x: &ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let Some(rows) = sparse_rows(x) else {
        return affine(x, layer);
    };
    let mut out = Array2::from_shape_fn((x.nrows(), layer.bias.len()), |(_, j)| layer.bias[j]);
    for (i, row) in rows.iter().enumerate() {
        let mut o = out.row_mut(i);
        for &(j, v) in row {
            o.scaled_add(v, &layer.weight.row(j));
        }
    }
    out
}

/// `out = xᵀ delta`, skipping zero inputs when most are zero.
fn input_weight_grad(x: &Array2<f64>, delta: &Array2<f64>, out: &mut Array2<f64>) {
    let Some(rows) = sparse_rows(&x.view()) else {
        general_mat_mul(1.0, &x.t(), delta, 0.0, out);
        return;
    };
    out.fill(0.0);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            out.row_mut(j).scaled_add(v, &delta.row(i));
        }
    }
}

fn affine(x: &ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut out = Array2::from_shape_fn((x.nrows(), layer.bias.len()), |(_, j)| layer.bias[j]);
    general_mat_mul(1.0, x, &layer.weight, 1.0, &mut out);
    out
}

fn relu_inplace(h: &mut Array2<f64>) {
    h.mapv_inplace(|v| v.max(0.0));
}

/// Rows grouped by selected block, in ascending row order.
fn group_rows(sel: &BlockSelect, n_blocks: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); n_blocks];
    for (row, &b) in sel.blocks.iter().enumerate() {
        groups[b].push(row);
    }
    groups
}

fn affine_blocks(h: &Array2<f64>, layer: &Layer, sel: &BlockSelect) -> Array2<f64> {
    let w = sel.width;
    let n_blocks = layer.weight.ncols() / w;
    let mut out = Array2::zeros((h.nrows(), w));
    for (b, rows) in group_rows(sel, n_blocks).into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let hg = h.select(Axis(0), &rows);
        let cols = s![.., b * w..(b + 1) * w];
        let mut og = Array2::from_shape_fn((rows.len(), w), |(_, j)| layer.bias[b * w + j]);
        general_mat_mul(1.0, &hg, &layer.weight.slice(cols), 1.0, &mut og);
        for (k, &r) in rows.iter().enumerate() {
            out.row_mut(r).assign(&og.row(k));
        }
    }
    out
}

fn backward_blocks(
    h: &Array2<f64>,
    layer: &Layer,
    grad: &mut Layer,
    sel: &BlockSelect,
    cotangent: ArrayView2<f64>,
) -> Array2<f64> {
    let w = sel.width;
    let n_blocks = layer.weight.ncols() / w;
    let mut dh = Array2::zeros(h.dim());
    for (b, rows) in group_rows(sel, n_blocks).into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let hg = h.select(Axis(0), &rows);
        let cg = cotangent.select(Axis(0), &rows);
        let cols = s![.., b * w..(b + 1) * w];
        general_mat_mul(1.0, &hg.t(), &cg, 0.0, &mut grad.weight.slice_mut(cols));
        grad.bias.slice_mut(s![b * w..(b + 1) * w]).assign(&cg.sum_axis(Axis(0)));
        let dg = cg.dot(&layer.weight.slice(cols).t());
        for (k, &r) in rows.iter().enumerate() {
            dh.row_mut(r).assign(&dg.row(k));
        }
    }
    dh
}
