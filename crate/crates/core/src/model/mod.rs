//! Per-channel transformer encoders, gated multimodal fusion and the
//! classifier head.

mod config;
mod layers;

pub use config::{ArchConfig, FusionMode, ModelConfig, ProjectionActivation};
pub use layers::{
    classify, encode_channel, fuse_concat, gmu_fuse, multi_head_attention, positional_encoding,
    transformer_block, AttentionSettings, BlockLayout, ClassifierLayout, EncoderLayout, GmuLayout,
};

use rand::{Rng, RngCore};

use crate::data::{one_hot, stack_channel, EpochRecord};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named parameter tensors in a fixed declaration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    fn add(&mut self, name: String, mut tensor: Tensor) -> ParamId {
        tensor.set_requires_grad(true);
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// All values back to back, in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}

/// Output of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Var,
    pub probs: Var,
    /// Per-channel CLASS features `[B, P]`.
    pub features: Vec<Var>,
    pub fused: Var,
    /// Per-modality GMU gates `[B, shared]`; empty in concat mode.
    pub gates: Vec<Var>,
}

/// Probabilities and gates for a set of epochs, evaluated without dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub probs: Vec<Vec<f64>>,
    /// `gates[epoch][modality]`, empty in concat mode.
    pub gates: Vec<Vec<Vec<f64>>>,
    /// `fused[epoch]`, the classifier input.
    pub fused: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
enum FusionLayout {
    Gmu(GmuLayout<ParamId>),
    Concat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    encoders: Vec<EncoderLayout<ParamId>>,
    fusion: FusionLayout,
    classifier: ClassifierLayout<ParamId>,
    positions: Vec<Tensor>,
}

/// A no-op generator for eval-mode calls that never draw.
struct NoDraws;

impl RngCore for NoDraws {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval mode never samples")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval mode never samples")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("eval mode never samples")
    }
}

impl Model {
    /// Fresh model with weights drawn from `rng`: uniform in
    /// `±sqrt(1/fan_in)`, zero biases and CLASS tokens, unit norm gains.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut init = |shape: &[usize]| Tensor::uniform(shape, (1.0 / shape[0] as f64).sqrt(), rng);
        let a = config.arch.clone();
        let p = a.embed_dim;
        let mut params = ModelParams::default();
        let mut encoders = Vec::new();
        for ch in &config.channels {
            let pre = format!("encoder.{}", ch.name);
            let projection = params.add(format!("{pre}.projection"), init(&[ch.f, p]));
            let class_token = params.add(format!("{pre}.class_token"), Tensor::zeros(&[p]));
            let mut blocks = Vec::new();
            for bi in 0..a.blocks {
                let bp = format!("{pre}.block{bi}");
                blocks.push(BlockLayout {
                    ln1_gain: params.add(format!("{bp}.ln1.gain"), Tensor::filled(&[p], 1.0)),
                    ln1_bias: params.add(format!("{bp}.ln1.bias"), Tensor::zeros(&[p])),
                    w_q: params.add(format!("{bp}.attn.w_q"), init(&[p, p])),
                    w_k: params.add(format!("{bp}.attn.w_k"), init(&[p, p])),
                    w_v: params.add(format!("{bp}.attn.w_v"), init(&[p, p])),
                    w_out: params.add(format!("{bp}.attn.w_out"), init(&[p, p])),
                    ln2_gain: params.add(format!("{bp}.ln2.gain"), Tensor::filled(&[p], 1.0)),
                    ln2_bias: params.add(format!("{bp}.ln2.bias"), Tensor::zeros(&[p])),
                    ff1: params.add(format!("{bp}.ff1"), init(&[p, a.ff_hidden])),
                    ff2: params.add(format!("{bp}.ff2"), init(&[a.ff_hidden, p])),
                });
            }
            encoders.push(EncoderLayout { projection, class_token, blocks });
        }
        let fusion = match a.fusion {
            FusionMode::Gmu => {
                let c = config.channels.len();
                let s = a.gmu_shared_dim;
                let hidden = config
                    .channels
                    .iter()
                    .map(|ch| params.add(format!("gmu.hidden.{}", ch.name), init(&[p, s])))
                    .collect();
                let gate = config
                    .channels
                    .iter()
                    .map(|ch| params.add(format!("gmu.gate.{}", ch.name), init(&[c * p, s])))
                    .collect();
                FusionLayout::Gmu(GmuLayout { hidden, gate })
            }
            FusionMode::Concat => FusionLayout::Concat,
        };
        let (fd, hd, k) = (config.fused_dim(), a.classifier_hidden, config.num_classes);
        let classifier = ClassifierLayout {
            fc1: params.add("classifier.fc1.weight".into(), init(&[fd, hd])),
            fc1_bias: params.add("classifier.fc1.bias".into(), Tensor::zeros(&[hd])),
            fc2: params.add("classifier.fc2.weight".into(), init(&[hd, k])),
            fc2_bias: params.add("classifier.fc2.bias".into(), Tensor::zeros(&[k])),
        };
        let positions = config
            .channels
            .iter()
            .map(|ch| positional_encoding(ch.t + 1, p))
            .collect::<Result<_>>()?;
        Ok(Self { config, params, encoders, fusion, classifier, positions })
    }

    /// Rebuilds a model from saved parameters, checking names and shapes
    /// against the layout `config` implies.
    pub fn from_params(config: ModelConfig, names: Vec<String>, tensors: Vec<Tensor>) -> Result<Self> {
        let mut model = Self::new(config, &mut crate::rng::stream_rng(0, crate::rng::Stream::Init))?;
        if names != model.params.names || tensors.len() != model.params.tensors.len() {
            return Err(Error::Validation("parameter names do not match the model configuration".into()));
        }
        for (slot, t) in model.params.tensors.iter_mut().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::shape("from_params", slot.shape(), t.shape()));
            }
            *slot = t.with_grad();
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn encoder_layout(&self, channel: usize) -> &EncoderLayout<ParamId> {
        &self.encoders[channel]
    }

    pub fn gmu_layout(&self) -> Option<&GmuLayout<ParamId>> {
        match &self.fusion {
            FusionLayout::Gmu(g) => Some(g),
            FusionLayout::Concat => None,
        }
    }

    pub fn classifier_layout(&self) -> &ClassifierLayout<ParamId> {
        &self.classifier
    }

    pub fn attention_settings(&self) -> AttentionSettings {
        let a = &self.config.arch;
        AttentionSettings {
            heads: a.heads,
            activation: a.qkv_activation,
            sequential_heads: a.sequential_heads,
            dropout: a.attn_dropout,
        }
    }

    /// Records every parameter on `tape` as a leaf, in declaration order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.tensors.iter().map(|t| tape.leaf(t)).collect()
    }

    fn check_batch(&self, batch: &[&EpochRecord]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        for r in batch {
            for ch in &self.config.channels {
                let t = r.channel(&ch.name)?;
                if t.shape() != [ch.t, ch.f] {
                    return Err(Error::shape("model input", t.shape(), &[ch.t, ch.f]));
                }
            }
        }
        Ok(())
    }

    /// Batched forward pass on `tape`, with `bound` from [`Model::bind`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        batch: &[&EpochRecord],
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<ForwardOutput> {
        self.check_batch(batch)?;
        let var = |id: ParamId| bound[id.0];
        let settings = self.attention_settings();
        let mut features = Vec::with_capacity(self.encoders.len());
        for (i, ch) in self.config.channels.iter().enumerate() {
            let input = tape.constant(&stack_channel(batch, &ch.name)?);
            let enc = self.encoders[i].map(var);
            features.push(encode_channel(tape, input, &enc, &self.positions[i], &settings, training, rng)?);
        }
        let (fused, gates) = match &self.fusion {
            FusionLayout::Gmu(g) => gmu_fuse(tape, &features, &g.map(var))?,
            FusionLayout::Concat => (fuse_concat(tape, &features)?, Vec::new()),
        };
        let (logits, probs) = classify(
            tape,
            fused,
            &self.classifier.map(var),
            self.config.arch.classifier_dropout,
            training,
            rng,
        )?;
        Ok(ForwardOutput { logits, probs, features, fused, gates })
    }

    /// Forward pass plus mean cross-entropy against the batch labels.
    pub fn loss(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        batch: &[&EpochRecord],
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<(Var, ForwardOutput)> {
        let out = self.forward(tape, bound, batch, training, rng)?;
        let labels: Vec<_> = batch.iter().map(|r| r.label).collect();
        let loss = tape.cross_entropy(out.logits, &one_hot(&labels))?;
        Ok((loss, out))
    }

    /// Copies the gradients of the last backward pass into the parameters.
    pub fn collect_grads(&mut self, tape: &Tape, bound: &[Var]) -> Result<()> {
        for (t, &v) in self.params.tensors.iter_mut().zip(bound) {
            let g = tape
                .grad(v)
                .ok_or_else(|| Error::State("backward has not run on this tape".into()))?;
            t.set_grad(g.to_vec())?;
        }
        Ok(())
    }

    /// Single-epoch forward: class probabilities and per-modality gates.
    pub fn forward_epoch(
        &self,
        epoch: &EpochRecord,
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, &[epoch], training, rng)?;
        let gates = out.gates.iter().map(|&g| tape.value(g).to_vec()).collect();
        Ok((tape.value(out.probs).to_vec(), gates))
    }

    /// Eval-mode inference in chunks of `chunk` epochs.
    pub fn infer(&self, records: &[&EpochRecord], chunk: usize) -> Result<Inference> {
        let mut result = Inference { probs: Vec::new(), gates: Vec::new(), fused: Vec::new() };
        let mut tape = Tape::new();
        for part in records.chunks(chunk.max(1)) {
            tape.reset();
            let bound = self.bind(&mut tape);
            let out = self.forward(&mut tape, &bound, part, false, &mut NoDraws)?;
            let k = self.config.num_classes;
            result.probs.extend(tape.value(out.probs).chunks(k).map(<[f64]>::to_vec));
            let fd = self.config.fused_dim();
            result.fused.extend(tape.value(out.fused).chunks(fd).map(<[f64]>::to_vec));
            for i in 0..part.len() {
                result.gates.push(
                    out.gates
                        .iter()
                        .map(|&g| {
                            let s = tape.shape(g)[1];
                            tape.value(g)[i * s..(i + 1) * s].to_vec()
                        })
                        .collect(),
                );
            }
        }
        Ok(result)
    }
}
