use std::collections::VecDeque;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis, Zip};

use crate::augment::roll_axis;
use crate::error::{Error, Result};

/// Affine map `y = x·Wᵀ + b` with `W` stored `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::shape(
                format!("bias of length {}", weight.nrows()),
                format!("bias of length {}", bias.len()),
            ));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// `x` is `[T × in]`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    pub fn forward_vec(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalization over the feature axis with learned scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub eps: f64,
}

impl LayerNorm {
    pub fn identity(width: usize, eps: f64) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            eps,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn apply_row(&self, mut row: ndarray::ArrayViewMut1<'_, f64>) {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + self.eps).sqrt();
        Zip::from(&mut row)
            .and(&self.gamma)
            .and(&self.beta)
            .for_each(|v, &g, &b| *v = (*v - mean) * inv * g + b);
    }

    pub fn apply(&self, x: &mut Array2<f64>) {
        for row in x.axis_iter_mut(Axis(0)) {
            self.apply_row(row);
        }
    }
}

fn relu_inplace<D: ndarray::Dimension>(x: &mut ndarray::Array<f64, D>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Averages an MLP over cyclic rotations of the electrode axis.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationInvariantMlp {
    pub layers: Vec<Linear>,
    pub offsets: Vec<i64>,
    pub channels: usize,
    pub bins: usize,
}

impl RotationInvariantMlp {
    pub fn new(layers: Vec<Linear>, offsets: Vec<i64>, channels: usize, bins: usize) -> Result<Self> {
        for &o in &offsets {
            if o.unsigned_abs() as usize >= channels {
                return Err(Error::OffsetOutOfRange { offset: o, channels });
            }
        }
        if offsets.is_empty() {
            return Err(Error::InvalidConfig("offset set is empty".into()));
        }
        let mut width = channels * bins;
        for (i, l) in layers.iter().enumerate() {
            if l.inputs() != width {
                return Err(Error::shape(
                    format!("mlp layer {i} with {width} inputs"),
                    format!("{} inputs", l.inputs()),
                ));
            }
            width = l.outputs();
        }
        Ok(Self {
            layers,
            offsets,
            channels,
            bins,
        })
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .last()
            .map_or(self.channels * self.bins, Linear::outputs)
    }

    fn mlp(&self, mut h: Array2<f64>) -> Array2<f64> {
        for layer in &self.layers {
            h = layer.forward(h.view());
            relu_inplace(&mut h);
        }
        h
    }

    /// `x` is `[T × channel × bin]`; returns `[T × D]`.
    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Result<Array2<f64>> {
        let (t, c, f) = x.dim();
        if c != self.channels || f != self.bins {
            return Err(Error::shape(
                format!("[T × {} × {}]", self.channels, self.bins),
                format!("{:?}", x.shape()),
            ));
        }
        let owned = x.to_owned();
        let mut acc = Array2::zeros((t, self.output_width()));
        for &o in &self.offsets {
            let rolled = roll_axis(&owned, Axis(1), o)
                .into_shape_with_order((t, c * f))
                .expect("standard layout");
            acc += &self.mlp(rolled);
        }
        acc /= self.offsets.len() as f64;
        Ok(acc)
    }

    /// One `[channel × bin]` frame; same result as [`Self::forward`] on a
    /// single-frame input.
    pub fn forward_frame(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let (c, f) = x.dim();
        if c != self.channels || f != self.bins {
            return Err(Error::shape(
                format!("[{} × {}]", self.channels, self.bins),
                format!("{:?}", x.shape()),
            ));
        }
        let owned = x.to_owned();
        let mut acc = Array1::zeros(self.output_width());
        for &o in &self.offsets {
            let mut h = roll_axis(&owned, Axis(0), o)
                .into_shape_with_order(c * f)
                .expect("standard layout");
            for layer in &self.layers {
                h = layer.forward_vec(h.view());
                relu_inplace(&mut h);
            }
            acc += &h;
        }
        acc /= self.offsets.len() as f64;
        Ok(acc)
    }
}

/// Temporal convolution over `K` channels, shared across the hidden width,
/// followed by ReLU, a residual connection and LayerNorm.
#[derive(Clone, Debug, PartialEq)]
pub struct TdsConvBlock {
    /// `[K_out × K_in × lag]`: `kernel[k, k', i]` multiplies the input `i` frames back.
    pub kernel: Array3<f64>,
    pub bias: Array1<f64>,
    pub norm: Option<LayerNorm>,
}

impl TdsConvBlock {
    pub fn channels(&self) -> usize {
        self.kernel.len_of(Axis(0))
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel.len_of(Axis(2))
    }

    fn check(&self, width: usize) -> Result<usize> {
        let k = self.channels();
        if k == 0 || !width.is_multiple_of(k) {
            return Err(Error::InvalidConfig(format!(
                "feature width {width} is not divisible by {k} conv channels"
            )));
        }
        Ok(width / k)
    }

    /// `x` is `[T × D]` with `D = K·H`; feature `d` maps to channel `d / H`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (t, d) = x.dim();
        let h = self.check(d)?;
        let k = self.channels();
        // [K × (T·H)], column t·H + j.
        let xk = x
            .as_standard_layout()
            .into_shape_with_order((t, k, h))
            .map_err(|e| Error::shape("contiguous input", e.to_string()))?
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((k, t * h))
            .expect("standard layout");
        let mut z = Array2::<f64>::zeros((k, t * h));
        for lag in 0..self.kernel_width().min(t) {
            let theta = self.kernel.slice(s![.., .., lag]);
            let src = xk.slice(s![.., ..(t - lag) * h]);
            let mut dst = z.slice_mut(s![.., lag * h..]);
            general_mat_mul(1.0, &theta, &src, 1.0, &mut dst);
        }
        for (mut row, &b) in z.axis_iter_mut(Axis(0)).zip(&self.bias) {
            row.mapv_inplace(|v| (v + b).max(0.0));
        }
        let mut out = z
            .into_shape_with_order((k, t, h))
            .expect("standard layout")
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((t, d))
            .expect("standard layout");
        out += &x;
        if let Some(norm) = &self.norm {
            norm.apply(&mut out);
        }
        Ok(out)
    }

    /// Single-frame update given the most recent inputs, newest last.
    fn step(&self, history: &VecDeque<Array1<f64>>) -> Array1<f64> {
        let x = history.back().expect("non-empty history");
        let d = x.len();
        let k = self.channels();
        let h = d / k;
        let mut z = Array2::<f64>::zeros((k, h));
        for (lag, past) in history.iter().rev().enumerate() {
            let past = past.view().into_shape_with_order((k, h)).expect("contiguous");
            let theta = self.kernel.slice(s![.., .., lag]);
            general_mat_mul(1.0, &theta, &past, 1.0, &mut z);
        }
        for (mut row, &b) in z.axis_iter_mut(Axis(0)).zip(&self.bias) {
            row.mapv_inplace(|v| (v + b).max(0.0));
        }
        let mut out = z.into_shape_with_order(d).expect("standard layout") + x;
        if let Some(norm) = &self.norm {
            norm.apply_row(out.view_mut());
        }
        out
    }
}

/// `LayerNorm(FC₂(ReLU(FC₁(z))) + z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TdsFcBlock {
    pub fc1: Linear,
    pub fc2: Linear,
    pub norm: Option<LayerNorm>,
}

impl TdsFcBlock {
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let d = x.ncols();
        if self.fc1.inputs() != d || self.fc2.outputs() != d || self.fc1.outputs() != self.fc2.inputs()
        {
            return Err(Error::shape(
                format!("fc layers of width {d}"),
                format!(
                    "{}→{}, {}→{}",
                    self.fc1.inputs(),
                    self.fc1.outputs(),
                    self.fc2.inputs(),
                    self.fc2.outputs()
                ),
            ));
        }
        let mut h = self.fc1.forward(x);
        relu_inplace(&mut h);
        let mut out = self.fc2.forward(h.view());
        out += &x;
        if let Some(norm) = &self.norm {
            norm.apply(&mut out);
        }
        Ok(out)
    }

    fn step(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut h = self.fc1.forward_vec(x);
        relu_inplace(&mut h);
        let mut out = self.fc2.forward_vec(h.view()) + x;
        if let Some(norm) = &self.norm {
            norm.apply_row(out.view_mut());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdsBlock {
    pub conv: TdsConvBlock,
    pub fc: TdsFcBlock,
}

/// Alternating convolution and fully connected blocks at a fixed width.
#[derive(Clone, Debug, PartialEq)]
pub struct TdsStack {
    pub blocks: Vec<TdsBlock>,
}

impl TdsStack {
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut h = x.to_owned();
        for block in &self.blocks {
            h = block.conv.forward(h.view())?;
            h = block.fc.forward(h.view())?;
        }
        Ok(h)
    }

    /// Frames of context the stack sees, counting the current one.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .blocks
            .iter()
            .map(|b| b.conv.kernel_width() - 1)
            .sum::<usize>()
    }
}

/// Per-stream convolution histories for frame-at-a-time inference.
#[derive(Clone, Debug)]
pub struct StackState {
    histories: Vec<VecDeque<Array1<f64>>>,
}

impl StackState {
    pub fn new(stack: &TdsStack) -> Self {
        Self {
            histories: stack
                .blocks
                .iter()
                .map(|b| VecDeque::with_capacity(b.conv.kernel_width()))
                .collect(),
        }
    }

    pub fn step(&mut self, stack: &TdsStack, x: Array1<f64>) -> Array1<f64> {
        let mut h = x;
        for (block, hist) in stack.blocks.iter().zip(&mut self.histories) {
            if hist.len() == block.conv.kernel_width() {
                hist.pop_front();
            }
            hist.push_back(h);
            h = block.conv.step(hist);
            h = block.fc.step(h.view());
        }
        h
    }
}
