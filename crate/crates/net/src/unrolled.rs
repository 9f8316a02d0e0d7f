//! Unrolled proximal splitting: alternate a learned regularizer with a data
//! consistency step for `K` iterations, processing all repetitions of a
//! slice jointly.
//!
//! Regularizer arithmetic runs in `T`; the Fourier transforms and data
//! consistency run in `f64`, so the final outputs are consistent with the
//! measurements to double precision whatever `T` is.

use std::fmt;
use std::str::FromStr;

use pfrecon_core::model::{data_consistency_adjoint_inplace, data_consistency_inplace};
use pfrecon_core::{zero_fill, Complex64, ComplexImage, KSpaceData, Pff, RepetitionSet, SamplingMask};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{hash_cache, Aggregation};
use crate::conv::Geom;
use crate::error::{Error, Result};
use crate::gru::{stack_backward, stack_forward, CellGrads, CellWeights, StackCache, StackDims};
use crate::params::{ParamSet, Tensor};
use crate::real::Real;
use crate::resnet::{resnet_backward, resnet_forward, ConvGrads, ConvWeights, ResNetCache, ResNetDims};

/// How the regularizer is reused across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One ConvGRU stack whose hidden states carry over between iterations.
    Recurrent,
    /// One ResNet applied at every iteration.
    WeightShared,
    /// A separate ResNet per iteration.
    Cascaded,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Recurrent => "recurrent",
            Self::WeightShared => "weight_shared",
            Self::Cascaded => "cascaded",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "recurrent" => Ok(Self::Recurrent),
            "weight_shared" => Ok(Self::WeightShared),
            "cascaded" => Ok(Self::Cascaded),
            _ => Err(format!("unknown strategy {s:?}")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub strategy: Strategy,
    /// Unrolled iterations `K`.
    pub iterations: usize,
    /// ConvGRU cells or residual blocks `G`.
    pub depth: usize,
    /// Feature channels `F`.
    pub width: usize,
    pub aggregation: Aggregation,
    pub pff: Pff,
    /// Data-consistency weight; 0 is the hard projection.
    #[serde(default)]
    pub lambda: f64,
}

impl ModelConfig {
    /// The recurrent network: K = 5, G = 10, F = 32, max aggregation.
    pub fn drpf() -> Self {
        Self {
            strategy: Strategy::Recurrent,
            iterations: 5,
            depth: 10,
            width: 32,
            aggregation: Aggregation::Max,
            pff: Pff::FIVE_EIGHTHS,
            lambda: 0.0,
        }
    }

    /// ResNet ablation: K = 5, G = 6 blocks, F = 64, max aggregation.
    pub fn resnet(strategy: Strategy) -> Self {
        Self {
            strategy,
            depth: 6,
            width: 64,
            ..Self::drpf()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.depth == 0 || self.width == 0 {
            return Err(Error::Config(format!(
                "iterations, depth and width must be positive (got {}, {}, {})",
                self.iterations, self.depth, self.width
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    fn stack(&self) -> StackDims {
        StackDims {
            depth: self.depth,
            width: self.width,
        }
    }

    fn resnet_dims(&self) -> ResNetDims {
        ResNetDims {
            depth: self.depth,
            width: self.width,
        }
    }

    /// Number of distinct ResNet copies.
    fn copies(&self) -> usize {
        match self.strategy {
            Strategy::Recurrent => 0,
            Strategy::WeightShared => 1,
            Strategy::Cascaded => self.iterations,
        }
    }

    fn resnet_prefix(&self, copy: usize) -> String {
        match self.strategy {
            Strategy::Cascaded => format!("iter{copy}"),
            _ => "resnet".to_string(),
        }
    }

    /// Names and shapes of every trainable tensor, in storage order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        match self.strategy {
            Strategy::Recurrent => {
                let st = self.stack();
                for g in 0..self.depth {
                    let c = st.cell(g);
                    out.push((format!("gru.{g}.wx"), vec![3, c.c_hidden, c.c_in, 3, 3]));
                    out.push((format!("gru.{g}.wh"), vec![3, c.c_hidden, c.c_hidden, 3, 3]));
                    out.push((format!("gru.{g}.bias"), vec![3, c.c_hidden]));
                }
            }
            Strategy::WeightShared | Strategy::Cascaded => {
                let rd = self.resnet_dims();
                for copy in 0..self.copies() {
                    let p = self.resnet_prefix(copy);
                    for j in 0..rd.conv_count() {
                        let (ci, co) = rd.conv(j);
                        let name = if j == 0 {
                            format!("{p}.in")
                        } else if j == rd.conv_count() - 1 {
                            format!("{p}.out")
                        } else {
                            format!("{p}.block{}.conv{}", (j - 1) / 2, 1 + (j - 1) % 2)
                        };
                        out.push((format!("{name}.weight"), vec![co, ci, 3, 3]));
                        out.push((format!("{name}.bias"), vec![co]));
                    }
                }
            }
        }
        out
    }
}

/// Exact number of scalar trainable parameters of a configuration.
pub fn count_params(config: &ModelConfig) -> usize {
    config
        .param_layout()
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum()
}

/// Per-repetition, per-cell hidden states of the recurrent regularizer.
#[derive(Debug, Clone, Default)]
pub struct HiddenState<T> {
    cells: Vec<Option<Vec<T>>>,
}

impl<T> HiddenState<T> {
    pub fn is_initial(&self) -> bool {
        self.cells.iter().all(Option::is_none)
    }
}

enum RegCache<T> {
    Gru(StackCache<T>),
    Res(ResNetCache<T>),
}

/// Everything a forward pass records for backpropagation.
pub struct Tape<T> {
    geom: Geom,
    mask: SamplingMask,
    regs: Vec<RegCache<T>>,
    /// Regularizer outputs `z_k` before data consistency.
    z: Vec<Vec<T>>,
    outputs: Vec<Vec<Complex64>>,
}

impl<T: Real> Tape<T> {
    /// Final reconstructions `x_K`, one row-major buffer per repetition.
    pub fn outputs(&self) -> &[Vec<Complex64>] {
        &self.outputs
    }

    /// Regularizer outputs before data consistency, channel-major
    /// (`[re; im]`, batch-major inside each channel).
    pub fn regularizer_outputs(&self) -> &[Vec<T>] {
        &self.z
    }

    /// Hash of every discrete branch taken (ReLU masks, max arg-indices).
    /// Two passes with equal signatures lie on the same smooth piece.
    pub fn signature(&self) -> u64 {
        let mut s = 0xcbf2_9ce4_8422_2325u64;
        for r in &self.regs {
            match r {
                RegCache::Gru(c) => hash_cache(c.agg(), &mut s),
                RegCache::Res(c) => {
                    hash_cache(c.agg(), &mut s);
                    c.hash_relu(&mut s);
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamSet<T>,
}

fn to_channels<T: Real>(images: &[Vec<Complex64>], g: Geom) -> Vec<T> {
    let n = g.n();
    let plane = g.plane();
    let mut out = vec![T::ZERO; 2 * n];
    for (b, img) in images.iter().enumerate() {
        for (i, v) in img.iter().enumerate() {
            out[b * plane + i] = T::from_f64(v.re);
            out[n + b * plane + i] = T::from_f64(v.im);
        }
    }
    out
}

fn from_channels<T: Real>(ch: &[T], g: Geom) -> Vec<Vec<Complex64>> {
    let n = g.n();
    let plane = g.plane();
    (0..g.batch)
        .map(|b| {
            (0..plane)
                .map(|i| Complex64::new(ch[b * plane + i].to_f64(), ch[n + b * plane + i].to_f64()))
                .collect()
        })
        .collect()
}

impl<T: Real> Model<T> {
    /// All parameters zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = ParamSet::new(config.param_layout().into_iter().map(|(n, s)| Tensor::zeros(n, s)).collect());
        Ok(Self { config, params })
    }

    /// He-normal kernels, zero biases.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        m.params.init_he(rng);
        Ok(m)
    }

    /// Wraps existing parameters after checking names and shapes against
    /// the configuration's layout.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        if layout.len() != params.tensors.len() {
            return Err(Error::ParamMismatch(format!(
                "expected {} tensors, got {}",
                layout.len(),
                params.tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&params.tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::ParamMismatch(format!(
                    "expected {name} {shape:?}, got {} {:?}",
                    t.name, t.shape
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    pub fn count_params(&self) -> usize {
        self.params.count()
    }

    /// Same model in another precision.
    pub fn convert<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config,
            params: self.params.convert(),
        }
    }

    /// Expands a one-iteration base model into a `K`-iteration model of the
    /// requested strategy: the ResNet is copied into every cascade stage, or
    /// reused as is for weight sharing and recurrence.
    pub fn replicate(&self, strategy: Strategy, iterations: usize) -> Result<Self> {
        let recurrent_base = self.config.strategy == Strategy::Recurrent;
        if recurrent_base != (strategy == Strategy::Recurrent) {
            return Err(Error::Config(format!(
                "cannot replicate a {} model into {strategy}",
                self.config.strategy
            )));
        }
        if self.config.strategy == Strategy::Cascaded && self.config.iterations != 1 {
            return Err(Error::Config("cascaded base must have a single iteration".into()));
        }
        let config = ModelConfig {
            strategy,
            iterations,
            ..self.config
        };
        let mut out = Self::zeros(config)?;
        let base = if strategy == Strategy::Recurrent {
            &self.params.tensors[..]
        } else {
            &self.params.tensors[..2 * self.config.resnet_dims().conv_count()]
        };
        for (i, t) in out.params.tensors.iter_mut().enumerate() {
            t.data.copy_from_slice(&base[i % base.len()].data);
        }
        Ok(out)
    }

    fn geom(&self, y: &RepetitionSet<KSpaceData>) -> Result<Geom> {
        let (h, w) = y.shape();
        if y.mask().pe_size() != w {
            return Err(Error::Core(pfrecon_core::Error::MaskMismatch));
        }
        Ok(Geom::new(y.len(), h, w))
    }

    fn cell_weights(&self) -> Vec<CellWeights<'_, T>> {
        self.params
            .tensors
            .chunks(3)
            .map(|c| CellWeights {
                wx: &c[0].data,
                wh: &c[1].data,
                bias: &c[2].data,
            })
            .collect()
    }

    fn conv_weights(&self, iteration: usize) -> Vec<ConvWeights<'_, T>> {
        let per_copy = 2 * self.config.resnet_dims().conv_count();
        let copy = match self.config.strategy {
            Strategy::Cascaded => iteration,
            _ => 0,
        };
        self.params.tensors[copy * per_copy..(copy + 1) * per_copy]
            .chunks(2)
            .map(|c| ConvWeights {
                weight: &c[0].data,
                bias: &c[1].data,
            })
            .collect()
    }

    fn regularize(&self, iteration: usize, x: &[T], hidden: &mut HiddenState<T>, g: Geom) -> (Vec<T>, RegCache<T>) {
        match self.config.strategy {
            Strategy::Recurrent => {
                if hidden.cells.len() != self.config.depth {
                    hidden.cells = vec![None; self.config.depth];
                }
                let w = self.cell_weights();
                let (z, c) = stack_forward(self.config.stack(), &w, self.config.aggregation, x, &mut hidden.cells, g);
                (z, RegCache::Gru(c))
            }
            _ => {
                let w = self.conv_weights(iteration);
                let (z, c) = resnet_forward(self.config.resnet_dims(), &w, self.config.aggregation, x, g);
                (z, RegCache::Res(c))
            }
        }
    }

    /// One regularizer pass over a set of images (the proximal step on the
    /// prior). `hidden` starts empty and is updated for recurrent models.
    pub fn regularizer_forward(
        &self,
        iteration: usize,
        images: &RepetitionSet<ComplexImage>,
        hidden: &mut HiddenState<T>,
    ) -> Result<RepetitionSet<ComplexImage>> {
        let (h, w) = images.shape();
        let g = Geom::new(images.len(), h, w);
        let bufs: Vec<Vec<Complex64>> = images.iter().map(|i| i.data().to_vec()).collect();
        let x = to_channels::<T>(&bufs, g);
        let (z, _) = self.regularize(iteration, &x, hidden, g);
        let out = from_channels(&z, g)
            .into_iter()
            .map(|d| ComplexImage::new(h, w, d))
            .collect::<pfrecon_core::Result<Vec<_>>>()?;
        Ok(RepetitionSet::new(out)?)
    }

    /// Forward pass recording what backpropagation needs.
    pub fn forward_train(&self, y: &RepetitionSet<KSpaceData>) -> Result<Tape<T>> {
        let g = self.geom(y)?;
        let (h, w) = (g.h, g.w);
        let lambda = self.config.lambda;
        let mut x: Vec<Vec<Complex64>> = y
            .iter()
            .map(|k| zero_fill(k).map(ComplexImage::into_data))
            .collect::<pfrecon_core::Result<_>>()?;
        let mut hidden = HiddenState::default();
        let mut regs = Vec::with_capacity(self.config.iterations);
        let mut zs = Vec::with_capacity(self.config.iterations);
        for k in 0..self.config.iterations {
            let input = to_channels::<T>(&x, g);
            let (z, cache) = self.regularize(k, &input, &mut hidden, g);
            x = from_channels(&z, g);
            for (buf, yk) in x.iter_mut().zip(y.iter()) {
                data_consistency_inplace(buf, h, w, yk, lambda);
            }
            regs.push(cache);
            zs.push(z);
        }
        Ok(Tape {
            geom: g,
            mask: y.mask().clone(),
            regs,
            z: zs,
            outputs: x,
        })
    }

    /// Reconstructs every repetition of the set.
    pub fn reconstruct(&self, y: &RepetitionSet<KSpaceData>) -> Result<RepetitionSet<ComplexImage>> {
        let tape = self.forward_train(y)?;
        let (h, w) = (tape.geom.h, tape.geom.w);
        let imgs = tape
            .outputs
            .into_iter()
            .map(|d| ComplexImage::new(h, w, d).map_err(|_| Error::NonFinite("reconstruction".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(RepetitionSet::new(imgs)?)
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient with respect to the outputs (`dL/dRe + i dL/dIm` per
    /// pixel and repetition).
    pub fn backward(&self, tape: &Tape<T>, d_outputs: &[Vec<Complex64>]) -> ParamSet<T> {
        let g = tape.geom;
        let (h, w) = (g.h, g.w);
        let lambda = self.config.lambda;
        let mut grads = self.params.zeros_like();
        let mut d_x: Vec<Vec<Complex64>> = d_outputs.to_vec();
        let mut d_hidden: Vec<Option<Vec<T>>> = vec![None; self.config.depth];

        for k in (0..self.config.iterations).rev() {
            for buf in &mut d_x {
                data_consistency_adjoint_inplace(buf, h, w, &tape.mask, lambda);
            }
            let d_z = to_channels::<T>(&d_x, g);
            let d_in = match &tape.regs[k] {
                RegCache::Gru(cache) => {
                    let weights = self.cell_weights();
                    let mut views: Vec<CellGrads<'_, T>> = grads
                        .tensors
                        .chunks_mut(3)
                        .map(|c| {
                            let [a, b, c] = c else { unreachable!("cell tensors come in threes") };
                            CellGrads {
                                wx: &mut a.data,
                                wh: &mut b.data,
                                bias: &mut c.data,
                            }
                        })
                        .collect();
                    stack_backward(
                        self.config.stack(),
                        &weights,
                        &mut views,
                        self.config.aggregation,
                        cache,
                        &d_z,
                        &mut d_hidden,
                        g,
                    )
                }
                RegCache::Res(cache) => {
                    let weights = self.conv_weights(k);
                    let per_copy = 2 * self.config.resnet_dims().conv_count();
                    let copy = if self.config.strategy == Strategy::Cascaded { k } else { 0 };
                    let mut views: Vec<ConvGrads<'_, T>> = grads.tensors[copy * per_copy..(copy + 1) * per_copy]
                        .chunks_mut(2)
                        .map(|c| {
                            let [a, b] = c else { unreachable!("conv tensors come in pairs") };
                            ConvGrads {
                                weight: &mut a.data,
                                bias: &mut b.data,
                            }
                        })
                        .collect();
                    resnet_backward(
                        self.config.resnet_dims(),
                        &weights,
                        &mut views,
                        self.config.aggregation,
                        cache,
                        &d_z,
                        g,
                    )
                }
            };
            d_x = from_channels(&d_in, g);
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pfrecon_core::{forward, make_pf_mask};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, b: usize, h: usize, w: usize, pff: Pff) -> RepetitionSet<KSpaceData> {
        let mask = make_pf_mask(w, pff).unwrap();
        let items = (0..b)
            .map(|_| {
                let img = ComplexImage::from_fn(h, w, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap();
                forward(&img, &mask).unwrap()
            })
            .collect();
        RepetitionSet::new(items).unwrap()
    }

    fn small(strategy: Strategy) -> ModelConfig {
        ModelConfig {
            strategy,
            iterations: 3,
            depth: 4,
            width: 4,
            ..ModelConfig::drpf()
        }
    }

    #[test]
    fn reference_parameter_counts() {
        assert_eq!(count_params(&ModelConfig::drpf()), 474_450);
        assert_eq!(count_params(&ModelConfig::resnet(Strategy::Cascaded)), 2_227_530);
        assert_eq!(count_params(&ModelConfig::resnet(Strategy::WeightShared)), 445_506);
        let m = Model::<f32>::zeros(ModelConfig::drpf()).unwrap();
        assert_eq!(m.count_params(), 474_450);
    }

    #[test]
    fn zero_params_reproduce_zero_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = random_set(&mut rng, 2, 8, 16, Pff::FIVE_EIGHTHS);
        for s in [Strategy::Recurrent, Strategy::WeightShared, Strategy::Cascaded] {
            let m = Model::<f64>::zeros(small(s)).unwrap();
            let out = m.reconstruct(&y).unwrap();
            for (o, k) in out.iter().zip(y.iter()) {
                let zf = zero_fill(k).unwrap();
                for (a, b) in o.data().iter().zip(zf.data()) {
                    assert!((a - b).norm() < 1e-12, "{s}");
                }
            }
        }
    }

    #[test]
    fn full_mask_returns_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mask = make_pf_mask(8, Pff::FULL).unwrap();
        let gt = ComplexImage::from_fn(8, 8, |r, c| Complex64::new((r + c) as f64 * 0.1, 0.2)).unwrap();
        let y = RepetitionSet::new(vec![forward(&gt, &mask).unwrap()]).unwrap();
        let m = Model::<f32>::init(small(Strategy::Recurrent), &mut rng).unwrap();
        let out = m.reconstruct(&y).unwrap();
        for (a, b) in out.items()[0].data().iter().zip(gt.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn recurrent_output_is_tanh_bounded_before_dc() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = random_set(&mut rng, 3, 8, 8, Pff::SIX_EIGHTHS);
        let m = Model::<f32>::init(small(Strategy::Recurrent), &mut rng).unwrap();
        let tape = m.forward_train(&y).unwrap();
        for z in tape.regularizer_outputs() {
            assert!(z.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn identical_cascade_equals_weight_sharing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = random_set(&mut rng, 2, 8, 8, Pff::FIVE_EIGHTHS);
        let base = Model::<f64>::init(ModelConfig { iterations: 1, ..small(Strategy::WeightShared) }, &mut rng).unwrap();
        let shared = base.replicate(Strategy::WeightShared, 3).unwrap();
        let cascade = base.replicate(Strategy::Cascaded, 3).unwrap();
        assert_eq!(cascade.count_params(), 3 * shared.count_params());
        let a = shared.reconstruct(&y).unwrap();
        let b = cascade.reconstruct(&y).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_iteration_is_one_pass_and_one_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random_set(&mut rng, 2, 8, 8, Pff::SEVEN_EIGHTHS);
        let m = Model::<f64>::init(ModelConfig { iterations: 1, ..small(Strategy::Recurrent) }, &mut rng).unwrap();
        let x0 = y.map(zero_fill).unwrap();
        let z = m.regularizer_forward(0, &x0, &mut HiddenState::default()).unwrap();
        let expect: Vec<_> = z
            .iter()
            .zip(y.iter())
            .map(|(zi, yi)| pfrecon_core::data_consistency(zi, yi, 0.0).unwrap())
            .collect();
        let got = m.reconstruct(&y).unwrap();
        assert_eq!(got.items(), &expect[..]);
    }

    #[test]
    fn none_aggregation_ignores_other_repetitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ModelConfig {
            aggregation: Aggregation::None,
            ..small(Strategy::Recurrent)
        };
        let m = Model::<f64>::init(cfg, &mut rng).unwrap();
        let y = random_set(&mut rng, 3, 8, 8, Pff::FIVE_EIGHTHS);
        let other = random_set(&mut rng, 3, 8, 8, Pff::FIVE_EIGHTHS);
        let mixed = RepetitionSet::new(vec![y.items()[0].clone(), other.items()[1].clone(), other.items()[2].clone()]).unwrap();
        let a = m.reconstruct(&y).unwrap();
        let b = m.reconstruct(&mixed).unwrap();
        assert_eq!(a.items()[0], b.items()[0]);
    }

    #[test]
    fn replicate_rejects_incompatible_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gru = Model::<f32>::init(ModelConfig { iterations: 1, ..small(Strategy::Recurrent) }, &mut rng).unwrap();
        assert!(gru.replicate(Strategy::Cascaded, 3).is_err());
        let rec = gru.replicate(Strategy::Recurrent, 5).unwrap();
        assert_eq!(rec.params().tensors, gru.params().tensors);
    }

    #[test]
    fn from_params_checks_layout() {
        let m = Model::<f32>::zeros(small(Strategy::Cascaded)).unwrap();
        let p = m.params().clone();
        assert!(Model::from_params(small(Strategy::WeightShared), p.clone()).is_err());
        assert!(Model::from_params(small(Strategy::Cascaded), p).is_ok());
    }

    #[test]
    fn backward_matches_finite_differences_through_dc() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = random_set(&mut rng, 2, 8, 8, Pff::FIVE_EIGHTHS);
        let up: Vec<Vec<Complex64>> = (0..2)
            .map(|_| (0..64).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
            .collect();
        let loss = |t: &Tape<f64>| -> f64 {
            t.outputs()
                .iter()
                .zip(&up)
                .flat_map(|(o, u)| o.iter().zip(u).map(|(a, b)| a.re * b.re + a.im * b.im))
                .sum()
        };
        for s in [Strategy::Recurrent, Strategy::WeightShared, Strategy::Cascaded] {
            for agg in [Aggregation::Mean, Aggregation::Max] {
                let cfg = ModelConfig { iterations: 2, depth: 2, width: 3, aggregation: agg, ..small(s) };
                let m = Model::<f64>::init(cfg, &mut rng).unwrap();
                let tape = m.forward_train(&y).unwrap();
                let sig = tape.signature();
                let grads = m.backward(&tape, &up);
                let eps = 1e-6;
                let mut checked = 0;
                for (ti, t) in m.params().tensors.iter().enumerate() {
                    for i in (0..t.len()).step_by(11) {
                        let mut p = m.clone();
                        p.params_mut().tensors[ti].data[i] += eps;
                        let tp = p.forward_train(&y).unwrap();
                        let mut q = m.clone();
                        q.params_mut().tensors[ti].data[i] -= eps;
                        let tq = q.forward_train(&y).unwrap();
                        if tp.signature() != sig || tq.signature() != sig {
                            continue;
                        }
                        let fd = (loss(&tp) - loss(&tq)) / (2.0 * eps);
                        let an = grads.tensors[ti].data[i];
                        assert!((fd - an).abs() < 1e-5 * (1.0 + fd.abs()), "{s} {agg} {} [{i}]: {fd} vs {an}", t.name);
                        checked += 1;
                    }
                }
                assert!(checked > 20, "{s} {agg}: only {checked}");
            }
        }
    }
}
