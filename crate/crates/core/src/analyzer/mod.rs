//! Autoregressive pixel analyzer.
//!
//! Two streams share the input image:
//!
//! * a causal stream: one strictly-causal masked convolution, then residual
//!   blocks of two centre-inclusive masked convolutions, then a
//!   per-pixel fully connected head emitting `3·M` mixture parameters
//!   (logits, means, log-scales). Outputs at a pixel see only earlier pixels
//!   in raster order; the first pixel sees nothing but the biases.
//! * a non-causal edge stream (two 3×3 convolutions and a per-pixel output
//!   layer) producing one edge logit per pixel.
//!
//! Training minimizes `λ_I·L_I + λ_E·L_E`, where `L_I` is the image negative
//! log-likelihood in nats and `L_E` the mean squared error between
//! `sigmoid(e)` and the Prewitt map.

mod conv;
mod weights;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use conv::{ConvLayer, Mask};
pub use weights::{load_weights, save_weights, ModelWeights, Tensor, FORMAT_VERSION};

use crate::edge::{prewitt, EdgeMap};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mixture::{self, HeadActivations, PixelDistribution, LEVELS, MAX_COMPONENTS};
use conv::{elu, elu_grad};

/// Half the intensity range; inputs are mapped to `x / 127.5 - 1` and means
/// to `127.5 · (1 + raw)`.
const HALF_RANGE: f64 = 127.5;
const EDGE_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    /// Side length of the (square) input images.
    pub side: usize,
    /// Mixture components per pixel.
    pub components: usize,
    /// Channels of the causal stream.
    pub hidden: usize,
    pub residual_blocks: usize,
    /// Channels of the edge stream.
    pub edge_hidden: usize,
    /// Kernel size of the causal convolutions (odd).
    pub kernel: usize,
    pub lambda_image: f64,
    pub lambda_edge: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            side: 32,
            components: 5,
            hidden: 32,
            residual_blocks: 3,
            edge_hidden: 8,
            kernel: 3,
            lambda_image: 1.0,
            lambda_edge: 1.0,
            learning_rate: 2e-3,
            batch_size: 8,
            epochs: 10,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.side < crate::image::MIN_SIDE {
            return fail(format!("side {} is below the minimum", self.side));
        }
        if self.components == 0 || self.components > MAX_COMPONENTS {
            return fail(format!("components must be in 1..={MAX_COMPONENTS}"));
        }
        if self.hidden == 0 || self.edge_hidden == 0 {
            return fail("channel counts must be positive".into());
        }
        if self.kernel.is_multiple_of(2) || self.kernel < 3 {
            return fail(format!("kernel {} must be odd and at least 3", self.kernel));
        }
        if !(self.lambda_image >= 0.0 && self.lambda_edge >= 0.0) {
            return fail("loss weights must be nonnegative".into());
        }
        if self.lambda_image == 0.0 && self.lambda_edge == 0.0 {
            return fail("loss weights cannot both be zero".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning rate must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive".into());
        }
        Ok(())
    }

    /// Errors unless both configs describe the same network shape.
    pub fn ensure_same_architecture(&self, other: &AnalyzerConfig) -> Result<()> {
        let a = (
            self.side,
            self.components,
            self.hidden,
            self.residual_blocks,
            self.edge_hidden,
            self.kernel,
        );
        let b = (
            other.side,
            other.components,
            other.hidden,
            other.residual_blocks,
            other.edge_hidden,
            other.kernel,
        );
        if a != b {
            return Err(Error::Config(format!(
                "weights describe (side, M, hidden, blocks, edge_hidden, kernel) = {a:?}, requested {b:?}"
            )));
        }
        Ok(())
    }
}

/// One loss evaluation. `total == λ_I·image + λ_E·edge` by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total: f64,
    /// Negative log-likelihood, nats per image.
    pub image: f64,
    /// Mean squared edge error.
    pub edge: f64,
}

impl LossReport {
    pub fn combine(cfg: &AnalyzerConfig, image: f64, edge: f64) -> Self {
        Self {
            total: cfg.lambda_image * image + cfg.lambda_edge * edge,
            image,
            edge,
        }
    }
}

/// Layer structure derived from an [`AnalyzerConfig`].
#[derive(Debug, Clone)]
pub struct Network {
    cfg: AnalyzerConfig,
    input: ConvLayer,
    blocks: Vec<[ConvLayer; 2]>,
    head: ConvLayer,
    edge1: ConvLayer,
    edge2: ConvLayer,
    edge_out: ConvLayer,
}

fn names(prefix: &str) -> (String, String) {
    (format!("{prefix}.weight"), format!("{prefix}.bias"))
}

struct CausalCache {
    x: Vec<f64>,
    /// Residual stream before each block and after the last one.
    stream: Vec<Vec<f64>>,
    /// conv1 outputs per block.
    inner: Vec<Vec<f64>>,
    head: Vec<f64>,
}

struct EdgeCache {
    pre1: Vec<f64>,
    pre2: Vec<f64>,
    logits: Vec<f64>,
}

impl Network {
    pub fn new(cfg: &AnalyzerConfig) -> Self {
        let c = cfg.hidden;
        let ce = cfg.edge_hidden;
        Self {
            cfg: cfg.clone(),
            input: ConvLayer::new(1, c, cfg.kernel, Mask::Causal),
            blocks: (0..cfg.residual_blocks)
                .map(|_| {
                    [
                        ConvLayer::new(c, c, cfg.kernel, Mask::CausalWithCentre),
                        ConvLayer::new(c, c, cfg.kernel, Mask::CausalWithCentre),
                    ]
                })
                .collect(),
            head: ConvLayer::new(c, 3 * cfg.components, 1, Mask::Full),
            edge1: ConvLayer::new(1, ce, EDGE_KERNEL, Mask::Full),
            edge2: ConvLayer::new(ce, ce, EDGE_KERNEL, Mask::Full),
            edge_out: ConvLayer::new(ce, 1, 1, Mask::Full),
        }
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.cfg
    }

    fn layers(&self) -> Vec<(String, &ConvLayer)> {
        let mut out = vec![("causal.input".to_string(), &self.input)];
        for (b, [c1, c2]) in self.blocks.iter().enumerate() {
            out.push((format!("causal.block{b}.conv1"), c1));
            out.push((format!("causal.block{b}.conv2"), c2));
        }
        out.push(("head.mixture".into(), &self.head));
        out.push(("edge.conv1".into(), &self.edge1));
        out.push(("edge.conv2".into(), &self.edge2));
        out.push(("edge.output".into(), &self.edge_out));
        out
    }

    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (prefix, layer) in self.layers() {
            let (w, b) = names(&prefix);
            out.push((w, layer.weight_shape()));
            out.push((b, vec![layer.cout]));
        }
        out
    }

    /// He-style Gaussian initialization over visible taps. Second convs of
    /// residual blocks start at a tenth of that scale; mixture means start
    /// spread across the intensity range with a wide logistic scale.
    pub fn init_weights(&self, seed: u64) -> ModelWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = std::collections::BTreeMap::new();
        let m = self.cfg.components;
        for (prefix, layer) in self.layers() {
            let (wn, bn) = names(&prefix);
            let mut std = (2.0 / layer.fan_in() as f64).sqrt();
            if prefix.ends_with("conv2") && prefix.starts_with("causal") {
                std *= 0.1;
            }
            if prefix == "head.mixture" {
                std *= 0.1;
            }
            let mut w = Tensor::zeros(layer.weight_shape());
            let kk = layer.kernel * layer.kernel;
            for (i, v) in w.values.iter_mut().enumerate() {
                let sample: f64 = StandardNormal.sample(&mut rng);
                // masked taps stay at zero
                if layer.is_tap_visible(i % kk) {
                    *v = std * sample;
                }
            }
            let mut b = Tensor::zeros(vec![layer.cout]);
            if prefix == "head.mixture" {
                for c in 0..m {
                    b.values[m + c] = if m > 1 {
                        -0.6 + 1.2 * c as f64 / (m - 1) as f64
                    } else {
                        0.0
                    };
                    b.values[2 * m + c] = 16f64.ln();
                }
            }
            tensors.insert(wn, w);
            tensors.insert(bn, b);
        }
        ModelWeights {
            config: self.cfg.clone(),
            tensors,
        }
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.dims() != (self.cfg.side, self.cfg.side) {
            return Err(Error::DimensionMismatch {
                left: (self.cfg.side, self.cfg.side),
                right: img.dims(),
            });
        }
        Ok(())
    }

    fn normalized_input(img: &Image, rows: usize) -> Vec<f64> {
        img.pixels()[..rows * img.width()]
            .iter()
            .map(|&p| p as f64 / HALF_RANGE - 1.0)
            .collect()
    }

    fn apply(
        layer: &ConvLayer,
        w: &ModelWeights,
        prefix: &str,
        input: &[f64],
        h: usize,
        wd: usize,
    ) -> Vec<f64> {
        let (wn, bn) = names(prefix);
        let mut out = vec![0.0; layer.cout * h * wd];
        layer.forward(w.get(&wn), w.get(&bn), input, h, wd, &mut out);
        out
    }

    /// Causal stream on the top `rows` rows of `img`.
    fn causal_forward(&self, w: &ModelWeights, img: &Image, rows: usize) -> CausalCache {
        let wd = img.width();
        let x = Self::normalized_input(img, rows);
        let mut stream = vec![Self::apply(&self.input, w, "causal.input", &x, rows, wd)];
        let mut inner = Vec::with_capacity(self.blocks.len());
        for (b, [c1, c2]) in self.blocks.iter().enumerate() {
            let h = stream.last().unwrap();
            let a: Vec<f64> = h.iter().map(|&v| elu(v)).collect();
            let u = Self::apply(c1, w, &format!("causal.block{b}.conv1"), &a, rows, wd);
            let a2: Vec<f64> = u.iter().map(|&v| elu(v)).collect();
            let v = Self::apply(c2, w, &format!("causal.block{b}.conv2"), &a2, rows, wd);
            let next: Vec<f64> = h.iter().zip(&v).map(|(a, b)| a + b).collect();
            inner.push(u);
            stream.push(next);
        }
        let z: Vec<f64> = stream.last().unwrap().iter().map(|&v| elu(v)).collect();
        let head = Self::apply(&self.head, w, "head.mixture", &z, rows, wd);
        CausalCache {
            x,
            stream,
            inner,
            head,
        }
    }

    fn edge_forward(&self, w: &ModelWeights, x: &[f64], h: usize, wd: usize) -> EdgeCache {
        let pre1 = Self::apply(&self.edge1, w, "edge.conv1", x, h, wd);
        let a1: Vec<f64> = pre1.iter().map(|&v| elu(v)).collect();
        let pre2 = Self::apply(&self.edge2, w, "edge.conv2", &a1, h, wd);
        let a2: Vec<f64> = pre2.iter().map(|&v| elu(v)).collect();
        let logits = Self::apply(&self.edge_out, w, "edge.output", &a2, h, wd);
        EdgeCache { pre1, pre2, logits }
    }

    /// Unpacks the channel-major head output into per-pixel fields.
    fn unpack_head(&self, raw: &[f64], rows: usize, wd: usize, edge_logits: Vec<f64>) -> HeadActivations {
        let m = self.cfg.components;
        let plane = rows * wd;
        let mut logits = vec![0.0; plane * m];
        let mut means = vec![0.0; plane * m];
        let mut log_scales = vec![0.0; plane * m];
        for p in 0..plane {
            for c in 0..m {
                logits[p * m + c] = raw[c * plane + p];
                means[p * m + c] = HALF_RANGE * (1.0 + raw[(m + c) * plane + p]);
                log_scales[p * m + c] = raw[(2 * m + c) * plane + p];
            }
        }
        HeadActivations {
            height: rows,
            width: wd,
            components: m,
            edge_logits,
            logits,
            means,
            log_scales,
        }
    }

    pub fn forward(&self, w: &ModelWeights, img: &Image) -> Result<HeadActivations> {
        self.check_image(img)?;
        let (h, wd) = img.dims();
        let causal = self.causal_forward(w, img, h);
        let edge = self.edge_forward(w, &causal.x, h, wd);
        let out = self.unpack_head(&causal.head, h, wd, edge.logits);
        out.validate()
            .map_err(|_| Error::NonFinite("analyzer activations".into()))?;
        Ok(out)
    }

    /// Distribution of pixel `index` given the pixels before it, computed
    /// from the rows up to and including the pixel's row only.
    pub fn conditional(&self, w: &ModelWeights, img: &Image, index: usize) -> Result<Vec<f64>> {
        self.check_image(img)?;
        let wd = img.width();
        let rows = index / wd + 1;
        let causal = self.causal_forward(w, img, rows);
        let head = self.unpack_head(&causal.head, rows, wd, vec![0.0; rows * wd]);
        let mix = head.mixture_at(index);
        if mix
            .logits
            .iter()
            .chain(mix.means)
            .chain(mix.log_scales)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite(format!("analyzer output at pixel {index}")));
        }
        let mut out = vec![0.0; LEVELS];
        mixture::pixel_probabilities(mix, &mut out);
        Ok(out)
    }

    /// Loss on one image and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, w: &ModelWeights, img: &Image) -> Result<(LossReport, ModelWeights)> {
        self.check_image(img)?;
        let (h, wd) = img.dims();
        let plane = h * wd;
        let m = self.cfg.components;
        let (li, le) = (self.cfg.lambda_image, self.cfg.lambda_edge);
        let mut grads = w.zeros_like();

        let causal = self.causal_forward(w, img, h);
        let edge = self.edge_forward(w, &causal.x, h, wd);
        let head = self.unpack_head(&causal.head, h, wd, edge.logits.clone());

        // image loss
        let mut nll = 0.0;
        let mut g_head = vec![0.0; 3 * m * plane];
        let (mut dl, mut dm, mut ds) = ([0.0; MAX_COMPONENTS], [0.0; MAX_COMPONENTS], [0.0; MAX_COMPONENTS]);
        for (p, &x) in img.pixels().iter().enumerate() {
            let lp = mixture::log_prob_with_grad(
                head.mixture_at(p),
                x as usize,
                &mut dl[..m],
                &mut dm[..m],
                &mut ds[..m],
            );
            nll -= lp;
            for c in 0..m {
                g_head[c * plane + p] = -li * dl[c];
                g_head[(m + c) * plane + p] = -li * dm[c] * HALF_RANGE;
                g_head[(2 * m + c) * plane + p] = -li * ds[c];
            }
        }

        // edge loss
        let target = prewitt(img);
        let mut mse = 0.0;
        let mut g_edge = vec![0.0; plane];
        for ((g, &logit), &t) in g_edge.iter_mut().zip(&edge.logits).zip(target.values()) {
            let s = mixture::sigmoid(logit);
            let diff = s - t;
            mse += diff * diff;
            *g = le * 2.0 * diff * s * (1.0 - s) / plane as f64;
        }
        mse /= plane as f64;
        let report = LossReport::combine(&self.cfg, nll, mse);
        if !report.total.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }

        if li != 0.0 {
            self.causal_backward(w, &causal, &g_head, h, wd, &mut grads);
        }
        if le != 0.0 {
            self.edge_backward(w, &causal.x, &edge, &g_edge, h, wd, &mut grads);
        }
        Ok((report, grads))
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_layer(
        layer: &ConvLayer,
        prefix: &str,
        w: &ModelWeights,
        input: &[f64],
        grad_out: &[f64],
        h: usize,
        wd: usize,
        grads: &mut ModelWeights,
        want_input: bool,
    ) -> Vec<f64> {
        let (wn, bn) = names(prefix);
        let mut gw = std::mem::take(&mut grads.tensors.get_mut(&wn).unwrap().values);
        let mut gb = std::mem::take(&mut grads.tensors.get_mut(&bn).unwrap().values);
        let mut gin = if want_input { vec![0.0; input.len()] } else { Vec::new() };
        layer.backward(
            w.get(&wn),
            input,
            grad_out,
            h,
            wd,
            &mut gw,
            &mut gb,
            want_input.then_some(&mut gin[..]),
        );
        grads.tensors.get_mut(&wn).unwrap().values = gw;
        grads.tensors.get_mut(&bn).unwrap().values = gb;
        gin
    }

    fn causal_backward(
        &self,
        w: &ModelWeights,
        cache: &CausalCache,
        g_head: &[f64],
        h: usize,
        wd: usize,
        grads: &mut ModelWeights,
    ) {
        let last = cache.stream.last().unwrap();
        let z: Vec<f64> = last.iter().map(|&v| elu(v)).collect();
        let gz = Self::backprop_layer(&self.head, "head.mixture", w, &z, g_head, h, wd, grads, true);
        let mut g_stream: Vec<f64> = gz.iter().zip(last).map(|(g, &v)| g * elu_grad(v)).collect();
        for (b, [c1, c2]) in self.blocks.iter().enumerate().rev() {
            let hb = &cache.stream[b];
            let u = &cache.inner[b];
            let a: Vec<f64> = hb.iter().map(|&v| elu(v)).collect();
            let a2: Vec<f64> = u.iter().map(|&v| elu(v)).collect();
            let ga2 = Self::backprop_layer(
                c2,
                &format!("causal.block{b}.conv2"),
                w,
                &a2,
                &g_stream,
                h,
                wd,
                grads,
                true,
            );
            let gu: Vec<f64> = ga2.iter().zip(u).map(|(g, &v)| g * elu_grad(v)).collect();
            let ga = Self::backprop_layer(
                c1,
                &format!("causal.block{b}.conv1"),
                w,
                &a,
                &gu,
                h,
                wd,
                grads,
                true,
            );
            for ((gs, g), &v) in g_stream.iter_mut().zip(&ga).zip(hb) {
                *gs += g * elu_grad(v);
            }
        }
        Self::backprop_layer(&self.input, "causal.input", w, &cache.x, &g_stream, h, wd, grads, false);
    }

    #[allow(clippy::too_many_arguments)]
    fn edge_backward(
        &self,
        w: &ModelWeights,
        x: &[f64],
        cache: &EdgeCache,
        g_logits: &[f64],
        h: usize,
        wd: usize,
        grads: &mut ModelWeights,
    ) {
        let a1: Vec<f64> = cache.pre1.iter().map(|&v| elu(v)).collect();
        let a2: Vec<f64> = cache.pre2.iter().map(|&v| elu(v)).collect();
        let ga2 = Self::backprop_layer(&self.edge_out, "edge.output", w, &a2, g_logits, h, wd, grads, true);
        let g2: Vec<f64> = ga2.iter().zip(&cache.pre2).map(|(g, &v)| g * elu_grad(v)).collect();
        let ga1 = Self::backprop_layer(&self.edge2, "edge.conv2", w, &a1, &g2, h, wd, grads, true);
        let g1: Vec<f64> = ga1.iter().zip(&cache.pre1).map(|(g, &v)| g * elu_grad(v)).collect();
        Self::backprop_layer(&self.edge1, "edge.conv1", w, x, &g1, h, wd, grads, false);
    }

    /// Loss on one image without gradients.
    pub fn loss(&self, w: &ModelWeights, img: &Image) -> Result<LossReport> {
        let head = self.forward(w, img)?;
        let nll = -mixture::pixel_log_prob(&head, img)?.iter().sum::<f64>();
        let mse = edge_mse(&head, img);
        Ok(LossReport::combine(&self.cfg, nll, mse))
    }
}

fn edge_mse(head: &HeadActivations, img: &Image) -> f64 {
    let target = prewitt(img);
    let n = head.edge_logits.len() as f64;
    head.edge_logits
        .iter()
        .zip(target.values())
        .map(|(&e, &t)| {
            let d = t - mixture::sigmoid(e);
            d * d
        })
        .sum::<f64>()
        / n
}

/// Trained (or freshly initialized) analyzer.
#[derive(Debug, Clone)]
pub struct Analyzer {
    network: Network,
    weights: ModelWeights,
}

impl Analyzer {
    pub fn new(weights: ModelWeights) -> Result<Self> {
        weights.config.validate()?;
        weights.check_layout()?;
        Ok(Self {
            network: Network::new(&weights.config),
            weights,
        })
    }

    pub fn initialized(cfg: &AnalyzerConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(Network::new(cfg).init_weights(cfg.seed))
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn into_weights(self) -> ModelWeights {
        self.weights
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.weights.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn forward(&self, img: &Image) -> Result<HeadActivations> {
        self.network.forward(&self.weights, img)
    }

    pub fn image_nll(&self, img: &Image) -> Result<f64> {
        let head = self.forward(img)?;
        let nll = -mixture::pixel_log_prob(&head, img)?.iter().sum::<f64>();
        if !nll.is_finite() {
            return Err(Error::NonFinite("image negative log-likelihood".into()));
        }
        Ok(nll)
    }

    pub fn edge_loss(&self, img: &Image) -> Result<f64> {
        Ok(edge_mse(&self.forward(img)?, img))
    }

    pub fn loss(&self, img: &Image) -> Result<LossReport> {
        self.network.loss(&self.weights, img)
    }

    /// `sigmoid(e)`, normalized by its maximum.
    pub fn predicted_edges(&self, img: &Image) -> Result<EdgeMap> {
        let head = self.forward(img)?;
        predicted_edge_map(&head)
    }
}

/// `sigmoid(e)` per pixel divided by the image maximum.
pub fn predicted_edge_map(head: &HeadActivations) -> Result<EdgeMap> {
    let raw = head.edge_logits.iter().map(|&e| mixture::sigmoid(e)).collect();
    EdgeMap::normalized(head.width, head.height, raw)
}

impl crate::eraser::PixelModel for Analyzer {
    fn pixel_distribution(&self, img: &Image) -> Result<PixelDistribution> {
        mixture::to_pixel_distribution(&self.forward(img)?)
    }

    fn edge_map(&self, img: &Image) -> Result<EdgeMap> {
        self.predicted_edges(img)
    }

    fn analyze(&self, img: &Image) -> Result<(PixelDistribution, EdgeMap)> {
        let head = self.forward(img)?;
        Ok((mixture::to_pixel_distribution(&head)?, predicted_edge_map(&head)?))
    }

    fn conditional(&self, img: &Image, index: usize) -> Result<Vec<f64>> {
        self.network.conditional(&self.weights, img, index)
    }
}

pub fn forward(weights: &ModelWeights, img: &Image) -> Result<HeadActivations> {
    Network::new(&weights.config).forward(weights, img)
}

pub fn image_nll(weights: &ModelWeights, img: &Image) -> Result<f64> {
    Analyzer::new(weights.clone())?.image_nll(img)
}

pub fn edge_loss(weights: &ModelWeights, img: &Image) -> Result<f64> {
    Ok(edge_mse(&forward(weights, img)?, img))
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub report: LossReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    /// One report per optimizer step (batch mean).
    pub steps: Vec<LossReport>,
    pub epochs: Vec<EpochLog>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, w: &mut ModelWeights, g: &ModelWeights, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, &gi), m), v) in w
            .values_mut()
            .zip(g.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * gi;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * gi * gi;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains from a seeded initialization. See [`train_with`].
pub fn train(dataset: &[Image], cfg: &AnalyzerConfig) -> Result<TrainOutcome> {
    train_with(dataset, cfg, None, |_| {})
}

/// Mini-batch gradient descent on `λ_I·L_I + λ_E·L_E`.
///
/// Per-image gradients within a batch may be computed concurrently; they are
/// summed in batch order so results do not depend on scheduling. Starting
/// weights default to a seeded initialization; shuffling uses the same seed.
pub fn train_with(
    dataset: &[Image],
    cfg: &AnalyzerConfig,
    initial: Option<ModelWeights>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let net = Network::new(cfg);
    for img in dataset {
        net.check_image(img)?;
    }
    let mut weights = match initial {
        Some(w) => {
            w.config.ensure_same_architecture(cfg)?;
            ModelWeights {
                config: cfg.clone(),
                tensors: w.tensors,
            }
        }
        None => net.init_weights(cfg.seed),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_da7a);
    let mut adam = Adam::new(weights.parameter_count());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut steps = Vec::new();
    let mut epochs = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_i, mut sum_e) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let results = crate::par::map(batch, |&i| net.loss_and_grad(&weights, &dataset[i]));
            let mut grad = weights.zeros_like();
            let (mut bi, mut be) = (0.0, 0.0);
            for r in results {
                let (report, g) = r.map_err(|_| Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                })?;
                bi += report.image;
                be += report.edge;
                grad.add_scaled(&g, 1.0);
            }
            let n = batch.len() as f64;
            for v in grad.values_mut() {
                *v /= n;
            }
            let report = LossReport::combine(cfg, bi / n, be / n);
            if !report.total.is_finite() || !grad.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: report.total,
                });
            }
            steps.push(report);
            sum_i += bi;
            sum_e += be;
            match cfg.optimizer {
                OptimizerKind::Sgd => weights.add_scaled(&grad, -cfg.learning_rate),
                OptimizerKind::Adam => adam.step(&mut weights, &grad, cfg.learning_rate),
            }
            if !weights.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
        }
        let n = dataset.len() as f64;
        let log = EpochLog {
            epoch,
            report: LossReport::combine(cfg, sum_i / n, sum_e / n),
        };
        on_epoch(&log);
        epochs.push(log);
    }
    Ok(TrainOutcome {
        weights,
        steps,
        epochs,
    })
}

/// Writes `epoch,L,L_I,L_E` rows.
pub fn write_training_log(epochs: &[EpochLog], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "L", "L_I", "L_E"])?;
    for e in epochs {
        w.write_record(&[
            e.epoch.to_string(),
            e.report.total.to_string(),
            e.report.image.to_string(),
            e.report.edge.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("training log", e))?;
    Ok(())
}
