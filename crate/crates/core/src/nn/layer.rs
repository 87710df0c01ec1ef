use serde::{Deserialize, Serialize};

/// Tensor shape in channel-major layout. Flat vectors use `channels = len`,
/// `height = width = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn image(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn flat(len: usize) -> Self {
        Self { channels: len, height: 1, width: 1 }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Architecture descriptor of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fully connected layer producing `outputs` values.
    Dense {
        outputs: usize,
    },
    /// Valid (unpadded) stride-1 convolution with square kernels.
    Conv2d {
        channels: usize,
        kernel: usize,
    },
    Relu,
    /// Non-overlapping max pooling with a square window.
    MaxPool2d {
        size: usize,
    },
    Flatten,
}

/// A layer with resolved shapes and its own flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub params: Vec<f64>,
}

impl Layer {
    pub(crate) fn resolve(spec: LayerSpec, input: Shape) -> Option<(Shape, usize)> {
        match spec {
            LayerSpec::Dense { outputs } => {
                (outputs > 0).then(|| (Shape::flat(outputs), outputs * input.len() + outputs))
            }
            LayerSpec::Conv2d { channels, kernel } => {
                if channels == 0 || kernel == 0 || kernel > input.height || kernel > input.width {
                    return None;
                }
                let out = Shape::image(channels, input.height - kernel + 1, input.width - kernel + 1);
                Some((out, channels * input.channels * kernel * kernel + channels))
            }
            LayerSpec::Relu => Some((input, 0)),
            LayerSpec::MaxPool2d { size } => {
                if size == 0 || input.height < size || input.width < size {
                    return None;
                }
                Some((Shape::image(input.channels, input.height / size, input.width / size), 0))
            }
            LayerSpec::Flatten => Some((Shape::flat(input.len()), 0)),
        }
    }

    /// Number of weights feeding one output unit.
    pub(crate) fn fan_in(&self) -> usize {
        match self.spec {
            LayerSpec::Dense { .. } => self.input.len(),
            LayerSpec::Conv2d { kernel, .. } => self.input.channels * kernel * kernel,
            _ => 0,
        }
    }

    /// Number of leading parameters that are weights (the rest are biases).
    pub(crate) fn weight_count(&self) -> usize {
        match self.spec {
            LayerSpec::Dense { outputs } => outputs * self.input.len(),
            LayerSpec::Conv2d { channels, .. } => self.params.len() - channels,
            _ => 0,
        }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self.spec {
            LayerSpec::Dense { outputs } => {
                let n_in = self.input.len();
                let (w, b) = self.params.split_at(outputs * n_in);
                (0..outputs)
                    .map(|o| {
                        let row = &w[o * n_in..(o + 1) * n_in];
                        b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect()
            }
            LayerSpec::Conv2d { channels, kernel } => {
                let Shape { channels: ic, height: ih, width: iw } = self.input;
                let Shape { height: oh, width: ow, .. } = self.output;
                let (w, b) = self.params.split_at(self.weight_count());
                let mut out = vec![0.0; channels * oh * ow];
                for oc in 0..channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b[oc];
                            for c in 0..ic {
                                for ky in 0..kernel {
                                    let wrow = ((oc * ic + c) * kernel + ky) * kernel;
                                    let xrow = (c * ih + oy + ky) * iw + ox;
                                    for kx in 0..kernel {
                                        acc += w[wrow + kx] * x[xrow + kx];
                                    }
                                }
                            }
                            out[(oc * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                out
            }
            LayerSpec::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            LayerSpec::MaxPool2d { size } => {
                let Shape { channels, height: ih, width: iw } = self.input;
                let Shape { height: oh, width: ow, .. } = self.output;
                let mut out = vec![0.0; channels * oh * ow];
                for c in 0..channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut m = f64::NEG_INFINITY;
                            for dy in 0..size {
                                for dx in 0..size {
                                    m = m.max(x[(c * ih + oy * size + dy) * iw + ox * size + dx]);
                                }
                            }
                            out[(c * oh + oy) * ow + ox] = m;
                        }
                    }
                }
                out
            }
            LayerSpec::Flatten => x.to_vec(),
        }
    }

    /// Back-propagates `grad_out` through the layer. Parameter gradients are
    /// added into `grad_params`; the input gradient is returned.
    pub(crate) fn backward(&self, x: &[f64], grad_out: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        match self.spec {
            LayerSpec::Dense { outputs } => {
                let n_in = self.input.len();
                let w = &self.params[..outputs * n_in];
                let (gw, gb) = grad_params.split_at_mut(outputs * n_in);
                let mut gx = vec![0.0; n_in];
                for o in 0..outputs {
                    let g = grad_out[o];
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let grow = &mut gw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        grow[i] += g * x[i];
                        gx[i] += g * row[i];
                    }
                }
                gx
            }
            LayerSpec::Conv2d { channels, kernel } => {
                let Shape { channels: ic, height: ih, width: iw } = self.input;
                let Shape { height: oh, width: ow, .. } = self.output;
                let wc = self.weight_count();
                let w = &self.params[..wc];
                let (gw, gb) = grad_params.split_at_mut(wc);
                let mut gx = vec![0.0; x.len()];
                for oc in 0..channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = grad_out[(oc * oh + oy) * ow + ox];
                            if g == 0.0 {
                                continue;
                            }
                            gb[oc] += g;
                            for c in 0..ic {
                                for ky in 0..kernel {
                                    let wrow = ((oc * ic + c) * kernel + ky) * kernel;
                                    let xrow = (c * ih + oy + ky) * iw + ox;
                                    for kx in 0..kernel {
                                        gw[wrow + kx] += g * x[xrow + kx];
                                        gx[xrow + kx] += g * w[wrow + kx];
                                    }
                                }
                            }
                        }
                    }
                }
                gx
            }
            LayerSpec::Relu => x.iter().zip(grad_out).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(),
            LayerSpec::MaxPool2d { size } => {
                let Shape { channels, height: ih, width: iw } = self.input;
                let Shape { height: oh, width: ow, .. } = self.output;
                let mut gx = vec![0.0; x.len()];
                for c in 0..channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut arg = 0;
                            let mut m = f64::NEG_INFINITY;
                            for dy in 0..size {
                                for dx in 0..size {
                                    let idx = (c * ih + oy * size + dy) * iw + ox * size + dx;
                                    if x[idx] > m {
                                        m = x[idx];
                                        arg = idx;
                                    }
                                }
                            }
                            gx[arg] += grad_out[(c * oh + oy) * ow + ox];
                        }
                    }
                }
                gx
            }
            LayerSpec::Flatten => grad_out.to_vec(),
        }
    }
}
