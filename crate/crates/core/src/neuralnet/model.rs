//! The CNN-GRU classifier and its recurrent / convolutional baselines.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    self, batchnorm, batchnorm_backward, conv1d, conv1d_backward, dense, dense_backward, dropout,
    dropout_backward, one_hot, relu, relu_backward, softmax_rows, softmax_xent, BatchNormCache,
    Conv1dCache, DenseCache, DropoutMask, Mode, BN_MOMENTUM,
};
use super::recurrent::{
    bilstm, bilstm_backward, gru_sequence, gru_sequence_backward, lstm_sequence,
    lstm_sequence_backward, BiLstmCache, GruParams, GruStepCache, LstmParams, LstmSequenceCache,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, tag, Stream};

pub type ParamMap = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    CnnGru,
    Cnn,
    Lstm,
    Bilstm,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::CnnGru => "cnn_gru",
            Architecture::Cnn => "cnn",
            Architecture::Lstm => "lstm",
            Architecture::Bilstm => "bilstm",
        }
    }
}

/// Where batch normalization sits relative to the GRU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnPosition {
    PreGru,
    PostGru,
}

/// What batch norm does with a single-row batch in train mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnSingleSample {
    Error,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub input_features: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    /// Hidden units of the recurrent layer (per direction for BiLSTM).
    pub gru_units: usize,
    pub dropout_rate: f64,
    pub dense_units: usize,
    pub classes: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub bn_position: BnPosition,
    pub bn_single_sample: BnSingleSample,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::CnnGru,
            input_features: crate::N_COMPONENTS,
            conv_filters: 32,
            conv_kernel: 1,
            gru_units: 8,
            dropout_rate: 0.1,
            dense_units: 64,
            classes: 2,
            learning_rate: 0.003,
            batch_size: 4,
            max_epochs: 150,
            patience: 8,
            seed: 42,
            bn_position: BnPosition::PreGru,
            bn_single_sample: BnSingleSample::Error,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_features", self.input_features),
            ("conv_filters", self.conv_filters),
            ("gru_units", self.gru_units),
            ("dense_units", self.dense_units),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.conv_kernel != 1 {
            return Err(Error::Config(format!(
                "conv_kernel must be 1 for single-timestep inputs, got {}",
                self.conv_kernel
            )));
        }
        if self.classes != 2 {
            return Err(Error::Config("only binary classification is supported".into()));
        }
        layers::check_dropout_rate(self.dropout_rate)?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Width of the latent vector fed to the dense head.
    pub fn latent_dim(&self) -> usize {
        match self.architecture {
            Architecture::Cnn => self.conv_filters,
            Architecture::Bilstm => 2 * self.gru_units,
            Architecture::CnnGru | Architecture::Lstm => self.gru_units,
        }
    }

    fn has_bn(&self) -> bool {
        matches!(self.architecture, Architecture::CnnGru | Architecture::Cnn)
    }

    fn bn_after_latent(&self) -> bool {
        self.architecture == Architecture::CnnGru && self.bn_position == BnPosition::PostGru
    }

    fn bn_width(&self) -> usize {
        if self.bn_after_latent() {
            self.gru_units
        } else {
            self.conv_filters
        }
    }
}

/// Parameter shapes for a configuration, keyed by name.
pub fn parameter_shapes(config: &ModelConfig) -> ParamMap {
    let mut m = ParamMap::new();
    let (f, u, c) = (config.conv_filters, config.gru_units, config.input_features);
    let gate_inputs = match config.architecture {
        Architecture::CnnGru => f,
        _ => c,
    };
    if config.architecture != Architecture::Lstm && config.architecture != Architecture::Bilstm {
        m.insert("conv.kernel".into(), Tensor::zeros(&[1, c, f]));
        m.insert("conv.bias".into(), Tensor::zeros(&[f]));
    }
    if config.has_bn() {
        m.insert("bn.gamma".into(), Tensor::filled(&[config.bn_width()], 1.0));
        m.insert("bn.beta".into(), Tensor::zeros(&[config.bn_width()]));
    }
    match config.architecture {
        Architecture::CnnGru => m.extend(GruParams::zeros(gate_inputs, u).to_map("gru")),
        Architecture::Lstm => m.extend(LstmParams::zeros(gate_inputs, u).to_map("lstm")),
        Architecture::Bilstm => {
            m.extend(LstmParams::zeros(gate_inputs, u).to_map("bilstm_fwd"));
            m.extend(LstmParams::zeros(gate_inputs, u).to_map("bilstm_bwd"));
        }
        Architecture::Cnn => {}
    }
    m.insert("dense.w".into(), Tensor::zeros(&[config.latent_dim(), config.dense_units]));
    m.insert("dense.b".into(), Tensor::zeros(&[config.dense_units]));
    m.insert("out.w".into(), Tensor::zeros(&[config.dense_units, config.classes]));
    m.insert("out.b".into(), Tensor::zeros(&[config.classes]));
    m
}

fn glorot_fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [k, c, f] => (k * c, k * f),
        [a, b] => (*a, *b),
        _ => (1, 1),
    }
}

/// Parameters plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub params: ParamMap,
    /// Non-trainable state (`bn.running_mean`, `bn.running_var`).
    pub buffers: ParamMap,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    conv: Option<Conv1dCache>,
    bn: Option<BatchNormCache>,
    bn_out: Option<Tensor>,
    gru: Option<Vec<GruStepCache>>,
    lstm: Option<LstmSequenceCache>,
    bilstm: Option<BiLstmCache>,
    pub latent: Tensor,
    dropout: DropoutMask,
    dense: DenseCache,
    dense_pre: Tensor,
    out: DenseCache,
    pub logits: Tensor,
    pub probs: Tensor,
}

impl Network {
    /// Glorot-uniform weights, zero biases and β, unit γ, seeded from the config.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut stream = rng::stream(config.seed, &[tag::INIT]);
        let mut params = parameter_shapes(config);
        for (name, t) in params.iter_mut() {
            let is_weight = t.shape().len() >= 2;
            if is_weight {
                let (fan_in, fan_out) = glorot_fans(t.shape());
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in t.data_mut() {
                    *v = stream.random_range(-limit..limit);
                }
            } else if !name.ends_with("gamma") {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut buffers = ParamMap::new();
        if config.has_bn() {
            buffers.insert("bn.running_mean".into(), Tensor::zeros(&[config.bn_width()]));
            buffers.insert("bn.running_var".into(), Tensor::filled(&[config.bn_width()], 1.0));
        }
        Ok(Network { config: config.clone(), params, buffers })
    }

    /// Rebuilds a network from stored tensors, checking every shape.
    pub fn from_parts(config: ModelConfig, params: ParamMap, buffers: ParamMap) -> Result<Self> {
        config.validate()?;
        let expected = parameter_shapes(&config);
        for (name, t) in &expected {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::Shape(format!(
                        "parameter {name}: expected {:?}, got {:?}",
                        t.shape(),
                        p.shape()
                    )))
                }
                None => return Err(Error::Shape(format!("missing parameter {name}"))),
            }
        }
        if let Some(extra) = params.keys().find(|k| !expected.contains_key(*k)) {
            return Err(Error::Shape(format!("unexpected parameter {extra}")));
        }
        if config.has_bn() {
            for name in ["bn.running_mean", "bn.running_var"] {
                if buffers.get(name).map(|b| b.len()) != Some(config.bn_width()) {
                    return Err(Error::Shape(format!("missing or malformed buffer {name}")));
                }
            }
        }
        Ok(Network { config, params, buffers })
    }

    fn p(&self, name: &str) -> &Tensor {
        &self.params[name]
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        match x.shape() {
            [b, 1, c] if *c == self.config.input_features && *b > 0 => Ok(*b),
            s => Err(Error::Shape(format!(
                "model input must be (B, 1, {}), got {s:?}",
                self.config.input_features
            ))),
        }
    }

    fn apply_bn(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<BatchNormCache>)> {
        let rows = x.shape()[0];
        if mode == Mode::Train && rows < 2 && self.config.bn_single_sample == BnSingleSample::Identity {
            return Ok((x.clone(), None));
        }
        let (y, cache) = batchnorm(
            x,
            self.p("bn.gamma"),
            self.p("bn.beta"),
            &self.buffers["bn.running_mean"],
            &self.buffers["bn.running_var"],
            mode,
        )?;
        Ok((y, Some(cache)))
    }

    /// Forward pass. `rng` drives dropout in train mode only.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Stream) -> Result<ForwardCache> {
        let b = self.check_input(x)?;
        let cfg = &self.config;
        let mut conv_cache = None;
        let mut bn_cache = None;
        let mut bn_out = None;
        let mut gru_cache = None;
        let mut lstm_cache = None;
        let mut bilstm_cache = None;

        let latent = match cfg.architecture {
            Architecture::CnnGru | Architecture::Cnn => {
                let (c, cc) = conv1d(x, self.p("conv.kernel"), self.p("conv.bias"))?;
                conv_cache = Some(cc);
                let c = c.reshape(vec![b, cfg.conv_filters])?;
                let seq_in = if cfg.bn_after_latent() {
                    c
                } else {
                    let (y, cache) = self.apply_bn(&c, mode)?;
                    bn_cache = cache;
                    let a = relu(&y);
                    bn_out = Some(y);
                    a
                };
                if cfg.architecture == Architecture::Cnn {
                    seq_in
                } else {
                    let seq = seq_in.reshape(vec![b, 1, cfg.conv_filters])?;
                    let (h, caches) = gru_sequence(&seq, &GruParams::from_map(&self.params, "gru")?)?;
                    gru_cache = Some(caches);
                    h
                }
            }
            Architecture::Lstm => {
                let (h, cache) = lstm_sequence(x, &LstmParams::from_map(&self.params, "lstm")?)?;
                lstm_cache = Some(cache);
                h
            }
            Architecture::Bilstm => {
                let (h, cache) = bilstm(
                    x,
                    &LstmParams::from_map(&self.params, "bilstm_fwd")?,
                    &LstmParams::from_map(&self.params, "bilstm_bwd")?,
                )?;
                bilstm_cache = Some(cache);
                h
            }
        };

        let head_in = if cfg.bn_after_latent() {
            let (y, cache) = self.apply_bn(&latent, mode)?;
            bn_cache = cache;
            let a = relu(&y);
            bn_out = Some(y);
            a
        } else {
            latent.clone()
        };
        let (dropped, mask) = dropout(&head_in, cfg.dropout_rate, mode, rng)?;
        let (dense_pre, dense_cache) = dense(&dropped, self.p("dense.w"), self.p("dense.b"))?;
        let (logits, out_cache) = dense(&relu(&dense_pre), self.p("out.w"), self.p("out.b"))?;
        let probs = softmax_rows(&logits)?;
        if !probs.all_finite() {
            return Err(Error::NonFinite("forward pass produced non-finite probabilities".into()));
        }
        Ok(ForwardCache {
            batch: b,
            conv: conv_cache,
            bn: bn_cache,
            bn_out,
            gru: gru_cache,
            lstm: lstm_cache,
            bilstm: bilstm_cache,
            latent,
            dropout: mask,
            dense: dense_cache,
            dense_pre,
            out: out_cache,
            logits,
            probs,
        })
    }

    /// Mean cross-entropy and its gradient for every parameter.
    pub fn loss_and_grads(&self, x: &Tensor, labels: &[u8], rng: &mut Stream) -> Result<(f64, ParamMap, ForwardCache)> {
        let cache = self.forward(x, Mode::Train, rng)?;
        if labels.len() != cache.batch {
            return Err(Error::Shape(format!("{} labels for a batch of {}", labels.len(), cache.batch)));
        }
        let (loss, _, dlogits) = softmax_xent(&cache.logits, &one_hot(labels, self.config.classes)?)?;
        let grads = self.backward(&cache, &dlogits)?;
        Ok((loss, grads, cache))
    }

    /// Backpropagates a logit gradient through a cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Tensor) -> Result<ParamMap> {
        let cfg = &self.config;
        let b = cache.batch;
        let mut grads = ParamMap::new();

        let g = dense_backward(&cache.out, self.p("out.w"), dlogits)?;
        grads.insert("out.w".into(), g.weights);
        grads.insert("out.b".into(), g.bias);
        let d_pre = relu_backward(&cache.dense_pre, &g.input);
        let g = dense_backward(&cache.dense, self.p("dense.w"), &d_pre)?;
        grads.insert("dense.w".into(), g.weights);
        grads.insert("dense.b".into(), g.bias);
        let d_head = dropout_backward(&cache.dropout, &g.input);

        let bn_back = |d_act: &Tensor, grads: &mut ParamMap| -> Result<Tensor> {
            let y = cache.bn_out.as_ref().expect("bn output cached");
            let dy = relu_backward(y, d_act);
            match &cache.bn {
                Some(bc) => {
                    let g = batchnorm_backward(bc, self.p("bn.gamma"), &dy)?;
                    grads.insert("bn.gamma".into(), g.gamma);
                    grads.insert("bn.beta".into(), g.beta);
                    Ok(g.input)
                }
                None => {
                    grads.insert("bn.gamma".into(), Tensor::zeros(&[cfg.bn_width()]));
                    grads.insert("bn.beta".into(), Tensor::zeros(&[cfg.bn_width()]));
                    Ok(dy)
                }
            }
        };

        let d_latent = if cfg.bn_after_latent() { bn_back(&d_head, &mut grads)? } else { d_head };

        match cfg.architecture {
            Architecture::CnnGru | Architecture::Cnn => {
                let d_seq_in = if cfg.architecture == Architecture::Cnn {
                    d_latent
                } else {
                    let p = GruParams::from_map(&self.params, "gru")?;
                    let (dx, gp) = gru_sequence_backward(cache.gru.as_ref().expect("gru cache"), &p, &d_latent)?;
                    grads.extend(gp.to_map("gru"));
                    dx.reshape(vec![b, cfg.conv_filters])?
                };
                let d_conv = if cfg.bn_after_latent() { d_seq_in } else { bn_back(&d_seq_in, &mut grads)? };
                let g = conv1d_backward(
                    cache.conv.as_ref().expect("conv cache"),
                    self.p("conv.kernel"),
                    &d_conv.reshape(vec![b, 1, cfg.conv_filters])?,
                )?;
                grads.insert("conv.kernel".into(), g.kernel);
                grads.insert("conv.bias".into(), g.bias);
            }
            Architecture::Lstm => {
                let p = LstmParams::from_map(&self.params, "lstm")?;
                let (_, gp) = lstm_sequence_backward(cache.lstm.as_ref().expect("lstm cache"), &p, &d_latent)?;
                grads.extend(gp.to_map("lstm"));
            }
            Architecture::Bilstm => {
                let pf = LstmParams::from_map(&self.params, "bilstm_fwd")?;
                let pb = LstmParams::from_map(&self.params, "bilstm_bwd")?;
                let (_, gf, gb) =
                    bilstm_backward(cache.bilstm.as_ref().expect("bilstm cache"), &pf, &pb, &d_latent)?;
                grads.extend(gf.to_map("bilstm_fwd"));
                grads.extend(gb.to_map("bilstm_bwd"));
            }
        }
        Ok(grads)
    }

    /// Folds a train-mode batch's statistics into the running averages.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if let Some(bc) = &cache.bn {
            let mut rm = self.buffers["bn.running_mean"].clone();
            let mut rv = self.buffers["bn.running_var"].clone();
            layers::update_running_stats(bc, &mut rm, &mut rv, BN_MOMENTUM);
            self.buffers.insert("bn.running_mean".into(), rm);
            self.buffers.insert("bn.running_var".into(), rv);
        }
    }

    fn infer(&self, x: &Tensor) -> Result<ForwardCache> {
        // Dropout is an identity in infer mode, so the stream is never drawn from.
        let mut unused = rng::stream(0, &[]);
        self.forward(x, Mode::Infer, &mut unused)
    }

    /// Class probabilities `(B, 2)` in infer mode.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.infer(x)?.probs)
    }

    /// Argmax labels; ties go to class 0.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<u8>> {
        Ok(argmax_labels(&self.predict_proba(x)?))
    }

    /// Final recurrent state (convolutional features for `cnn`), before dropout.
    pub fn extract_latent(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.infer(x)?.latent)
    }

    /// Infer-mode head: latent rows `(N, L)` to class probabilities `(N, 2)`.
    pub fn head_proba(&self, latent: &Tensor) -> Result<Tensor> {
        let l = self.config.latent_dim();
        if latent.shape().len() != 2 || latent.shape()[1] != l {
            return Err(Error::Shape(format!("head input must be (N, {l}), got {:?}", latent.shape())));
        }
        let head_in = if self.config.bn_after_latent() {
            let (y, _) = self.apply_bn(latent, Mode::Infer)?;
            relu(&y)
        } else {
            latent.clone()
        };
        let (pre, _) = dense(&head_in, self.p("dense.w"), self.p("dense.b"))?;
        let (logits, _) = dense(&relu(&pre), self.p("out.w"), self.p("out.b"))?;
        softmax_rows(&logits)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }
}

pub fn argmax_labels(probs: &Tensor) -> Vec<u8> {
    probs.data().chunks(2).map(|p| u8::from(p[1] > p[0])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::gradcheck::{max_rel_error, numeric_grad, random_tensor};

    fn all_configs() -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for arch in [Architecture::CnnGru, Architecture::Cnn, Architecture::Lstm, Architecture::Bilstm] {
            out.push(ModelConfig { architecture: arch, ..Default::default() });
        }
        out.push(ModelConfig { bn_position: BnPosition::PostGru, ..Default::default() });
        out
    }

    #[test]
    fn outputs_are_distributions() {
        let mut s = rng::stream(21, &[]);
        for cfg in all_configs() {
            let net = Network::init(&cfg).unwrap();
            let x = random_tensor(&[5, 1, 12], &mut s);
            let p = net.predict_proba(&x).unwrap();
            assert_eq!(p.shape(), &[5, 2]);
            for row in p.data().chunks(2) {
                assert!(row.iter().all(|v| *v >= 0.0));
                assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            }
            let one = random_tensor(&[1, 1, 12], &mut s);
            let a = net.predict_proba(&one).unwrap();
            let b = net.predict_proba(&one).unwrap();
            assert_eq!(a, b);
            assert_eq!(net.extract_latent(&x).unwrap().shape(), &[5, cfg.latent_dim()]);
        }
    }

    #[test]
    fn rejects_bad_input_shape() {
        let net = Network::init(&ModelConfig::default()).unwrap();
        assert!(matches!(net.predict(&Tensor::zeros(&[2, 12])), Err(Error::Shape(_))));
        assert!(matches!(net.predict(&Tensor::zeros(&[2, 2, 12])), Err(Error::Shape(_))));
        assert!(matches!(net.predict(&Tensor::zeros(&[2, 1, 11])), Err(Error::Shape(_))));
    }

    #[test]
    fn single_row_train_batch() {
        let mut s = rng::stream(22, &[]);
        let x = random_tensor(&[1, 1, 12], &mut s);
        let net = Network::init(&ModelConfig::default()).unwrap();
        assert!(matches!(net.loss_and_grads(&x, &[1], &mut s), Err(Error::Config(_))));
        let cfg = ModelConfig { bn_single_sample: BnSingleSample::Identity, ..Default::default() };
        let net = Network::init(&cfg).unwrap();
        assert!(net.loss_and_grads(&x, &[1], &mut s).is_ok());
    }

    #[test]
    fn zero_recurrent_params_give_zero_latent() {
        let mut net = Network::init(&ModelConfig::default()).unwrap();
        for (name, t) in net.params.iter_mut() {
            if name.starts_with("gru.") {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut s = rng::stream(23, &[]);
        let x = random_tensor(&[48, 1, 12], &mut s);
        let lat = net.extract_latent(&x).unwrap();
        assert_eq!(lat.shape(), &[48, 8]);
        assert!(lat.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn argmax_ties_to_zero() {
        let p = Tensor::new(vec![3, 2], vec![0.3, 0.7, 0.5, 0.5, 0.9, 0.1]).unwrap();
        assert_eq!(argmax_labels(&p), vec![1, 0, 0]);
    }

    #[test]
    fn head_matches_forward() {
        let mut s = rng::stream(24, &[]);
        for cfg in all_configs() {
            let net = Network::init(&cfg).unwrap();
            let x = random_tensor(&[6, 1, 12], &mut s);
            let lat = net.extract_latent(&x).unwrap();
            let via_head = net.head_proba(&lat).unwrap();
            let direct = net.predict_proba(&x).unwrap();
            for (a, b) in via_head.data().iter().zip(direct.data()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    /// Whole-model gradient check in train mode with a replayed dropout mask.
    #[test]
    fn full_model_gradients() {
        let mut s = rng::stream(25, &[]);
        for (i, base) in all_configs().into_iter().enumerate() {
            let cfg = ModelConfig { gru_units: 3 + i, conv_filters: 5, dense_units: 6, dropout_rate: 0.2, seed: i as u64, ..base };
            let mut net = Network::init(&cfg).unwrap();
            // Non-trivial running stats and β so infer paths differ from train paths.
            for t in net.params.values_mut() {
                for v in t.data_mut() {
                    *v += 0.1 * s.random_range(-1.0..1.0);
                }
            }
            let b = 4 + i;
            let x = random_tensor(&[b, 1, 12], &mut s);
            let labels: Vec<u8> = (0..b).map(|k| (k % 2) as u8).collect();
            let seed = 99 + i as u64;
            let (_, grads, _) = net.loss_and_grads(&x, &labels, &mut rng::stream(seed, &[])).unwrap();
            let mut worst: f64 = 0.0;
            for (name, t) in &net.params {
                let numeric = numeric_grad(t, |probe| {
                    let mut q = net.clone();
                    q.params.insert(name.clone(), probe.clone());
                    q.loss_and_grads(&x, &labels, &mut rng::stream(seed, &[])).unwrap().0
                });
                let err = max_rel_error(grads[name].data(), &numeric);
                assert!(err < 1e-4, "{} {name}: {err}", cfg.architecture.name());
                worst = worst.max(err);
            }
            assert!(worst < 1e-4);
        }
    }

    #[test]
    fn from_parts_validates() {
        let net = Network::init(&ModelConfig::default()).unwrap();
        let ok = Network::from_parts(net.config.clone(), net.params.clone(), net.buffers.clone());
        assert!(ok.is_ok());
        let mut bad = net.params.clone();
        bad.insert("dense.w".into(), Tensor::zeros(&[3, 3]));
        assert!(Network::from_parts(net.config.clone(), bad, net.buffers.clone()).is_err());
    }
}
