//! Network representation: affine layers, elementwise activations and the
//! margin objective used for robustness certificates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    ParamRamp,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::ParamRamp => "param_ramp",
        }
    }
}

/// An elementwise activation.
///
/// `param_ramp` is a leaky ReLU whose identity piece is bent back to slope
/// `eta` at a per-neuron point `r > 0`:
/// `eta z` for `z < 0`, `z` on `[0, r]`, `r + eta (z - r)` for `z > r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSpec {
    kind: ActivationKind,
    eta: f64,
    ramp: Option<Vec<f64>>,
}

impl ActivationSpec {
    pub fn relu() -> Self {
        Self {
            kind: ActivationKind::Relu,
            eta: 0.0,
            ramp: None,
        }
    }

    pub fn leaky_relu(eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self {
            kind: ActivationKind::LeakyRelu,
            eta,
            ramp: None,
        })
    }

    pub fn param_ramp(eta: f64, ramp_points: Vec<f64>) -> Result<Self> {
        check_eta(eta)?;
        check_ramp(&ramp_points)?;
        Ok(Self {
            kind: ActivationKind::ParamRamp,
            eta,
            ramp: Some(ramp_points),
        })
    }

    #[inline]
    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Bend points `r`, present only for `param_ramp`.
    #[inline]
    pub fn ramp_points(&self) -> Option<&[f64]> {
        self.ramp.as_deref()
    }

    /// Bend point of neuron `i`, or `None` for ReLU-type activations.
    #[inline]
    pub fn ramp_point(&self, i: usize) -> Option<f64> {
        self.ramp.as_ref().map(|r| r[i])
    }

    /// Replaces the leakage slope. ReLU keeps its zero slope.
    pub fn set_eta(&mut self, eta: f64) -> Result<()> {
        check_eta(eta)?;
        if self.kind != ActivationKind::Relu {
            self.eta = eta;
        }
        Ok(())
    }

    pub fn set_ramp_points(&mut self, r: Vec<f64>) -> Result<()> {
        if self.kind != ActivationKind::ParamRamp {
            return Err(Error::InvalidActivation(format!(
                "{} has no ramp points",
                self.kind.name()
            )));
        }
        check_ramp(&r)?;
        self.ramp = Some(r);
        Ok(())
    }

    pub(crate) fn ramp_points_mut(&mut self) -> Option<&mut Vec<f64>> {
        self.ramp.as_mut()
    }

    /// Evaluates the activation of neuron `i` at `z`.
    #[inline]
    pub fn eval_scalar(&self, z: f64, i: usize) -> f64 {
        match self.ramp_point(i) {
            Some(r) => ramp(z, self.eta, r),
            None => leaky(z, self.eta),
        }
    }

    /// Slope of the piece in use at `z`; at a kink the right-hand piece.
    #[inline]
    pub fn derivative_scalar(&self, z: f64, i: usize) -> f64 {
        if z < 0.0 {
            return self.eta;
        }
        match self.ramp_point(i) {
            Some(r) if z >= r => self.eta,
            _ => 1.0,
        }
    }

    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_width(z.len(), 0)?;
        Ok(z
            .iter()
            .enumerate()
            .map(|(i, &v)| self.eval_scalar(v, i))
            .collect())
    }

    fn check_width(&self, width: usize, layer: usize) -> Result<()> {
        match &self.ramp {
            Some(r) if r.len() != width => Err(Error::DimensionMismatch {
                layer,
                what: "ramp points",
                expected: width,
                found: r.len(),
            }),
            _ => Ok(()),
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter { name: "eta", value: eta });
    }
    Ok(())
}

fn check_ramp(r: &[f64]) -> Result<()> {
    match r.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        Some(&bad) => Err(Error::InvalidParameter {
            name: "ramp point",
            value: bad,
        }),
        None => Ok(()),
    }
}

#[inline]
pub fn leaky(z: f64, eta: f64) -> f64 {
    if z < 0.0 {
        eta * z
    } else {
        z
    }
}

#[inline]
pub fn ramp(z: f64, eta: f64, r: f64) -> f64 {
    if z < 0.0 {
        eta * z
    } else if z < r {
        z
    } else {
        r + eta * (z - r)
    }
}

/// `z -> W z + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl AffineLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        let layer = Self { weight, bias };
        layer.validate(0)?;
        Ok(layer)
    }

    fn validate(&self, layer: usize) -> Result<()> {
        if self.weight.rows() != self.bias.len() {
            return Err(Error::DimensionMismatch {
                layer,
                what: "bias",
                expected: self.weight.rows(),
                found: self.bias.len(),
            });
        }
        if !self.weight.is_finite() {
            return Err(Error::NonFinite("weight"));
        }
        if !self.bias.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("bias"));
        }
        Ok(())
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        let mut z = self.weight.matvec(a);
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub affine: AffineLayer,
    pub activation: Option<ActivationSpec>,
}

/// An `m`-layer feed-forward network `z(k) = W(k) a(k-1) + b(k)`,
/// `a(k) = sigma(z(k))`, with `a(0) = x` and output `z(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Forward pass output: every pre-activation, the last one being the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub preacts: Vec<Vec<f64>>,
}

impl Forward {
    pub fn logits(&self) -> &[f64] {
        self.preacts.last().map_or(&[], |v| v.as_slice())
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid("network has no layers".into()));
        }
        let last = layers.len() - 1;
        for (k, layer) in layers.iter().enumerate() {
            layer.affine.validate(k)?;
            if k > 0 {
                let prev = layers[k - 1].affine.outputs();
                if layer.affine.inputs() != prev {
                    return Err(Error::DimensionMismatch {
                        layer: k,
                        what: "weight columns",
                        expected: prev,
                        found: layer.affine.inputs(),
                    });
                }
            }
            match (&layer.activation, k == last) {
                (Some(_), true) => {
                    return Err(Error::InvalidActivation(
                        "the output layer must not have an activation".into(),
                    ))
                }
                (None, false) => {
                    return Err(Error::InvalidActivation(format!(
                        "hidden layer {k} needs an activation"
                    )))
                }
                (Some(act), false) => act.check_width(layer.affine.outputs(), k)?,
                (None, true) => {}
            }
        }
        Ok(Self { layers })
    }

    /// A network with He-normal weights and zero biases.
    ///
    /// `dims` lists `n_0, n_1, ..., n_m`; every hidden layer gets a clone of
    /// `activation`, with ramp points (if any) resized to the layer width.
    pub fn random<R: Rng + ?Sized>(
        dims: &[usize],
        activation: &ActivationSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Invalid("need at least input and output dims".into()));
        }
        let m = dims.len() - 1;
        let mut layers = Vec::with_capacity(m);
        for k in 0..m {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let std = crate::math::sqrt(2.0 / fan_in.max(1) as f64);
            let data = (0..fan_in * fan_out)
                .map(|_| std * crate::math::standard_normal(rng))
                .collect();
            let affine = AffineLayer::new(Matrix::new(fan_out, fan_in, data)?, vec![0.0; fan_out])?;
            let act = (k + 1 < m).then(|| resize_activation(activation, fan_out));
            layers.push(Layer {
                affine,
                activation: act,
            });
        }
        Self::new(layers)
    }

    #[inline]
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for in-crate training; callers keep dimensions intact.
    #[inline]
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Number of affine layers `m`.
    #[inline]
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.layers[0].affine.inputs()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].affine.outputs()
    }

    /// Widths `n_0, ..., n_m`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.affine.outputs()));
        d
    }

    /// Activation of hidden layer `k` (0-based over layers).
    pub fn activation(&self, k: usize) -> Option<&ActivationSpec> {
        self.layers[k].activation.as_ref()
    }

    /// Sets `eta` on every hidden activation that has a leakage slope.
    pub fn set_eta(&mut self, eta: f64) -> Result<()> {
        for layer in &mut self.layers {
            if let Some(act) = layer.activation.as_mut() {
                act.set_eta(eta)?;
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                layer: 0,
                what: "input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine.apply(&a);
            if let Some(act) = &layer.activation {
                a = z
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| act.eval_scalar(v, i))
                    .collect();
            }
            preacts.push(z);
        }
        Ok(Forward { preacts })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.preacts.pop().unwrap_or_default())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

fn resize_activation(act: &ActivationSpec, width: usize) -> ActivationSpec {
    let mut a = act.clone();
    if let Some(r) = a.ramp.as_mut() {
        let fill = r.first().copied().unwrap_or(1.0);
        r.resize(width, fill);
        r.truncate(width);
    }
    a
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// A linear objective `W_obj z(m) + b_obj` over the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSpec {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl MarginSpec {
    /// Margin between class `y` and every class: row `i` is `e_y - e_i`.
    pub fn from_label(y: usize, classes: usize) -> Result<Self> {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        let mut weight = Matrix::zeros(classes, classes);
        for i in 0..classes {
            if i != y {
                weight.set(i, y, 1.0);
                weight.set(i, i, -1.0);
            }
        }
        Ok(Self {
            weight,
            bias: vec![0.0; classes],
        })
    }

    /// Identity objective: bounds of the raw outputs.
    pub fn identity(n: usize) -> Self {
        Self {
            weight: Matrix::identity(n),
            bias: vec![0.0; n],
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.weight.matvec(z);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        out
    }
}

/// Materializes a single-channel-group 2-D convolution as an affine layer.
///
/// Input and output are flattened channel-major (`c, row, col`). `kernels`
/// holds `out_channels * in_channels * k * k` weights in that order.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_affine(
    in_channels: usize,
    height: usize,
    width: usize,
    out_channels: usize,
    k: usize,
    stride: usize,
    padding: usize,
    kernels: &[f64],
    bias: &[f64],
) -> Result<AffineLayer> {
    if kernels.len() != out_channels * in_channels * k * k {
        return Err(Error::DimensionMismatch {
            layer: 0,
            what: "conv kernels",
            expected: out_channels * in_channels * k * k,
            found: kernels.len(),
        });
    }
    if bias.len() != out_channels {
        return Err(Error::DimensionMismatch {
            layer: 0,
            what: "conv bias",
            expected: out_channels,
            found: bias.len(),
        });
    }
    if stride == 0 || height + 2 * padding < k || width + 2 * padding < k {
        return Err(Error::Invalid("convolution does not fit the input".into()));
    }
    let out_h = (height + 2 * padding - k) / stride + 1;
    let out_w = (width + 2 * padding - k) / stride + 1;
    let n_in = in_channels * height * width;
    let n_out = out_channels * out_h * out_w;
    let mut weight = Matrix::zeros(n_out, n_in);
    let mut b = Vec::with_capacity(n_out);
    for oc in 0..out_channels {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let row = (oc * out_h + oy) * out_w + ox;
                b.push(bias[oc]);
                for ic in 0..in_channels {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= height as isize || ix >= width as isize {
                                continue;
                            }
                            let col = (ic * height + iy as usize) * width + ix as usize;
                            let w = kernels[((oc * in_channels + ic) * k + ky) * k + kx];
                            let cur = weight.get(row, col);
                            weight.set(row, col, cur + w);
                        }
                    }
                }
            }
        }
    }
    AffineLayer::new(weight, b)
}
