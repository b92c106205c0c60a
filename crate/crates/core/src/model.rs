//! The assembled architecture: audio encoder → adaptation layer → decoder
//! language model over the concatenated audio/prompt/text sequence, plus
//! greedy transcription.
//!
//! The encoder is a stack of non-causal transformer blocks over projected
//! log-Mel frames with trainable (sinusoidal-initialized) positions,
//! followed by strided mean pooling. The adaptation layer maps encoder
//! width to decoder width (linear → ReLU → linear → layer norm in the
//! default variant). The decoder is a causal transformer whose query/value
//! projections carry LoRA deltas; audio precedes text in its input, so
//! plain causal masking lets every text position read the whole audio.

use ndarray::{Array2, ArrayD, Ix2};
use serde::{Deserialize, Serialize};

use aumol_dsp::{
    build_mel_filterbank, featurize, resample, AudioBuffer, LogMelFeatures, StftConfig,
    TARGET_SAMPLE_RATE,
};

use crate::autodiff::{DiffArray, Tape};
use crate::error::{CoreError, Result};
use crate::nn::{
    bind_block, init_block, linear, sinusoidal_table, transformer_block,
};
use crate::params::{seeded_rng, xavier_uniform, zeros, ParamStore};
use crate::vocab::{Vocabulary, BOS, EOS};

/// Rank of the decoder attention LoRA deltas.
pub const LORA_RANK: usize = 4;
/// LoRA numerator; the applied scale is `LORA_ALPHA / LORA_RANK`.
pub const LORA_ALPHA: f64 = 8.0;
/// Literal prompt inserted between audio and transcript tokens.
pub const DEFAULT_PROMPT: &str = "transcribe:";
/// Extra decoder positions reserved beyond audio + transcript, covering
/// the prompt and the BOS marker.
const PROMPT_HEADROOM: usize = 64;

/// Adaptation-layer shape. `SingleFc` drops the second linear layer and
/// `NoRelu` drops the nonlinearity; both are documented ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterVariant {
    Full,
    SingleFc,
    NoRelu,
}

impl Default for AdapterVariant {
    fn default() -> Self {
        AdapterVariant::Full
    }
}

/// Architecture dimensions.
///
/// At full scale the published configuration is `n_mels = 80`, 3000 input
/// frames, `d_hidden_adapter = 2048` and `d_llm = 4096`; the toy defaults
/// below train on one CPU core.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_mels: usize,
    pub d_enc: usize,
    pub enc_layers: usize,
    pub d_hidden_adapter: usize,
    pub d_llm: usize,
    pub dec_layers: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub max_audio_frames: usize,
    pub max_text_len: usize,
    #[serde(default)]
    pub adapter_variant: AdapterVariant,
    pub downsample_factor: usize,
}

impl ModelConfig {
    /// Desk-scale defaults used by the tests and the bundled demo setup.
    pub fn toy() -> Self {
        Self {
            n_mels: 80,
            d_enc: 64,
            enc_layers: 2,
            d_hidden_adapter: 32,
            d_llm: 48,
            dec_layers: 2,
            n_heads: 4,
            vocab_size: Vocabulary::char_level().size(),
            max_audio_frames: 240,
            max_text_len: 48,
            adapter_variant: AdapterVariant::Full,
            downsample_factor: 2,
        }
    }

    /// The documented full-scale dimensions. Provided for reference and
    /// config files; instantiating a model this size is not something the
    /// toy trainer is meant for.
    pub fn full_scale() -> Self {
        Self {
            n_mels: 80,
            d_enc: 1280,
            enc_layers: 32,
            d_hidden_adapter: 2048,
            d_llm: 4096,
            dec_layers: 32,
            n_heads: 32,
            vocab_size: Vocabulary::char_level().size(),
            max_audio_frames: 3000,
            max_text_len: 448,
            adapter_variant: AdapterVariant::Full,
            downsample_factor: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_mels", self.n_mels),
            ("d_enc", self.d_enc),
            ("enc_layers", self.enc_layers),
            ("d_hidden_adapter", self.d_hidden_adapter),
            ("d_llm", self.d_llm),
            ("dec_layers", self.dec_layers),
            ("n_heads", self.n_heads),
            ("vocab_size", self.vocab_size),
            ("max_audio_frames", self.max_audio_frames),
            ("max_text_len", self.max_text_len),
            ("downsample_factor", self.downsample_factor),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(CoreError::config(format!("{name} must be at least 1")));
            }
        }
        if self.d_enc % self.n_heads != 0 {
            return Err(CoreError::config(format!(
                "d_enc {} not divisible by n_heads {}",
                self.d_enc, self.n_heads
            )));
        }
        if self.d_llm % self.n_heads != 0 {
            return Err(CoreError::config(format!(
                "d_llm {} not divisible by n_heads {}",
                self.d_llm, self.n_heads
            )));
        }
        if self.vocab_size < 5 {
            return Err(CoreError::config("vocab_size must cover the special ids"));
        }
        Ok(())
    }

    /// Length of the decoder position table.
    pub fn max_decoder_positions(&self) -> usize {
        self.max_audio_frames / self.downsample_factor + self.max_text_len + PROMPT_HEADROOM
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Audio,
    Text,
}

/// A `(T × d)` sequence of embeddings on a tape.
pub struct EmbeddingSeq {
    pub values: DiffArray,
    pub modality: Modality,
    pub len: usize,
}

/// Combined decoder input plus the label alignment for the output loss.
pub struct DecoderInput {
    /// `(T_total × d_llm)` embeddings with decoder positions added.
    pub embeddings: DiffArray,
    /// One entry per position; `Some(id)` marks positions whose next-token
    /// prediction is supervised. Audio and prompt positions are `None`.
    pub labels: Vec<Option<usize>>,
    /// Index of the BOS position (start of the transcript region).
    pub text_start: usize,
}

/// Everything one training step needs from a single utterance's forward pass.
pub struct UtteranceForward {
    pub logits: DiffArray,
    pub labels: Vec<Option<usize>>,
    /// Adapted audio embeddings (`T_audio × d_llm`), the `e_t` of the
    /// alignment penalty.
    pub adapted_audio: DiffArray,
    pub audio_len: usize,
}

/// Model = configuration + named parameters + vocabulary.
pub struct AumolModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub vocab: Vocabulary,
}

impl AumolModel {
    /// Build a freshly initialized model. All randomness derives from
    /// `seed`, so equal seeds give bit-identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let vocab = Vocabulary::char_level();
        if config.vocab_size != vocab.size() {
            return Err(CoreError::config(format!(
                "vocab_size {} does not match the character vocabulary ({})",
                config.vocab_size,
                vocab.size()
            )));
        }

        let mut params = ParamStore::new();

        let mut rng = seeded_rng(seed, "encoder");
        params.insert("encoder.input_proj.w", xavier_uniform(&mut rng, config.d_enc, config.n_mels));
        params.insert("encoder.input_proj.b", zeros(&[config.d_enc]));
        params.insert("encoder.pos", sinusoidal_table(config.max_audio_frames, config.d_enc));
        for i in 0..config.enc_layers {
            init_block(&mut params, &mut rng, &format!("encoder.block{i}"), config.d_enc, None);
        }

        let mut rng = seeded_rng(seed, "adapter");
        match config.adapter_variant {
            AdapterVariant::Full | AdapterVariant::NoRelu => {
                params.insert("adapter.w1", xavier_uniform(&mut rng, config.d_hidden_adapter, config.d_enc));
                params.insert("adapter.b1", zeros(&[config.d_hidden_adapter]));
                params.insert("adapter.w2", xavier_uniform(&mut rng, config.d_llm, config.d_hidden_adapter));
                params.insert("adapter.b2", zeros(&[config.d_llm]));
            }
            AdapterVariant::SingleFc => {
                params.insert("adapter.w", xavier_uniform(&mut rng, config.d_llm, config.d_enc));
                params.insert("adapter.b", zeros(&[config.d_llm]));
            }
        }
        params.insert("adapter.ln_gain", crate::params::ones(&[config.d_llm]));
        params.insert("adapter.ln_bias", zeros(&[config.d_llm]));

        let mut rng = seeded_rng(seed, "decoder");
        params.insert("decoder.embed", xavier_uniform(&mut rng, config.vocab_size, config.d_llm));
        params.insert("decoder.pos", sinusoidal_table(config.max_decoder_positions(), config.d_llm));
        for i in 0..config.dec_layers {
            init_block(&mut params, &mut rng, &format!("decoder.block{i}"), config.d_llm, Some(LORA_RANK));
        }
        params.insert("decoder.ln_f_gain", crate::params::ones(&[config.d_llm]));
        params.insert("decoder.ln_f_bias", zeros(&[config.d_llm]));
        params.insert("decoder.out_proj.w", xavier_uniform(&mut rng, config.vocab_size, config.d_llm));
        params.insert("decoder.out_proj.b", zeros(&[config.vocab_size]));

        Ok(Self { config, params, vocab })
    }

    pub fn lora_scale() -> f64 {
        LORA_ALPHA / LORA_RANK as f64
    }

    pub fn prompt_ids(&self, prompt: &str) -> Vec<usize> {
        self.vocab.encode(prompt)
    }

    /// Encoder: input projection + positions + non-causal blocks, then
    /// strided mean pooling by `downsample_factor`.
    pub fn encode_audio(&self, tape: &mut Tape, features: &Array2<f64>) -> Result<EmbeddingSeq> {
        let x = tape.constant(features.to_owned().into_dyn())?;
        self.encode_audio_seq(tape, x)
    }

    /// As [`encode_audio`](Self::encode_audio) but for features already on
    /// the tape (`n_mels × n_frames`), so gradient can flow all the way
    /// back into them.
    pub fn encode_audio_seq(&self, tape: &mut Tape, features: DiffArray) -> Result<EmbeddingSeq> {
        let shape = tape.shape(features).to_vec();
        if shape.len() != 2 || shape[0] != self.config.n_mels {
            return Err(CoreError::shape("encode_audio", &shape, &[self.config.n_mels, 0]));
        }
        let n_frames = shape[1];
        if n_frames > self.config.max_audio_frames {
            return Err(CoreError::contract(format!(
                "encode_audio: {n_frames} frames exceed max_audio_frames {}",
                self.config.max_audio_frames
            )));
        }
        if n_frames < self.config.downsample_factor {
            return Err(CoreError::contract(format!(
                "encode_audio: {n_frames} frames cannot fill one pooling window of {}",
                self.config.downsample_factor
            )));
        }

        let x = tape.transpose(features)?; // T × n_mels
        let w_in = self.params.bind(tape, "encoder.input_proj.w")?;
        let b_in = self.params.bind(tape, "encoder.input_proj.b")?;
        let mut h = linear(tape, x, w_in, Some(b_in))?;

        let pos_table = self.params.bind(tape, "encoder.pos")?;
        let pos = tape.slice(pos_table, 0, 0, n_frames)?;
        h = tape.add(h, pos)?;

        for i in 0..self.config.enc_layers {
            let vars = bind_block(tape, &self.params, &format!("encoder.block{i}"), self.config.n_heads, None)?;
            h = transformer_block(tape, h, &vars, false)?;
        }

        let pooled = tape.avg_pool_rows(h, self.config.downsample_factor)?;
        let len = tape.shape(pooled)[0];
        Ok(EmbeddingSeq { values: pooled, modality: Modality::Audio, len })
    }

    /// Adaptation layer: maps `(T × d_enc)` to `(T × d_llm)`, preserving
    /// length. The variant decides which of the documented shapes runs.
    pub fn adapt(&self, tape: &mut Tape, audio_repr: &EmbeddingSeq) -> Result<EmbeddingSeq> {
        let x = audio_repr.values;
        let pre_ln = match self.config.adapter_variant {
            AdapterVariant::Full => {
                let w1 = self.params.bind(tape, "adapter.w1")?;
                let b1 = self.params.bind(tape, "adapter.b1")?;
                let h = linear(tape, x, w1, Some(b1))?;
                let h = tape.relu(h)?;
                let w2 = self.params.bind(tape, "adapter.w2")?;
                let b2 = self.params.bind(tape, "adapter.b2")?;
                linear(tape, h, w2, Some(b2))?
            }
            AdapterVariant::NoRelu => {
                let w1 = self.params.bind(tape, "adapter.w1")?;
                let b1 = self.params.bind(tape, "adapter.b1")?;
                let h = linear(tape, x, w1, Some(b1))?;
                let w2 = self.params.bind(tape, "adapter.w2")?;
                let b2 = self.params.bind(tape, "adapter.b2")?;
                linear(tape, h, w2, Some(b2))?
            }
            AdapterVariant::SingleFc => {
                let w = self.params.bind(tape, "adapter.w")?;
                let b = self.params.bind(tape, "adapter.b")?;
                linear(tape, x, w, Some(b))?
            }
        };
        let gain = self.params.bind(tape, "adapter.ln_gain")?;
        let bias = self.params.bind(tape, "adapter.ln_bias")?;
        let out = tape.layer_norm(pre_ln, gain, bias)?;
        Ok(EmbeddingSeq { values: out, modality: Modality::Audio, len: audio_repr.len })
    }

    /// Embed token ids with the decoder table (no positions added).
    pub fn embed_tokens(&self, tape: &mut Tape, ids: &[usize]) -> Result<DiffArray> {
        let table = self.params.bind(tape, "decoder.embed")?;
        tape.embedding_lookup(table, ids)
    }

    /// Assemble `[audio ‖ prompt ‖ BOS + target]`, add decoder positions,
    /// and lay out next-token labels over the transcript region.
    ///
    /// `target_ids` is the supervised transcript (with EOS already appended
    /// by the caller when termination should be learned). Position `k` of
    /// the transcript region predicts `target_ids[k]`; the final position,
    /// which holds the last target token, predicts nothing.
    pub fn build_decoder_input(
        &self,
        tape: &mut Tape,
        audio: &EmbeddingSeq,
        prompt_ids: &[usize],
        target_ids: &[usize],
    ) -> Result<DecoderInput> {
        if target_ids.len() > self.config.max_text_len {
            return Err(CoreError::contract(format!(
                "target of {} tokens exceeds max_text_len {}",
                target_ids.len(),
                self.config.max_text_len
            )));
        }
        let text_start = audio.len + prompt_ids.len();
        let total = text_start + 1 + target_ids.len();
        if total > self.config.max_decoder_positions() {
            return Err(CoreError::contract(format!(
                "combined sequence of {total} exceeds {} decoder positions",
                self.config.max_decoder_positions()
            )));
        }

        let mut text_tokens = Vec::with_capacity(1 + target_ids.len());
        text_tokens.push(BOS);
        text_tokens.extend_from_slice(target_ids);

        let mut parts = vec![audio.values];
        if !prompt_ids.is_empty() {
            parts.push(self.embed_tokens(tape, prompt_ids)?);
        }
        parts.push(self.embed_tokens(tape, &text_tokens)?);
        let cat = tape.concat(&parts, 0)?;

        let pos_table = self.params.bind(tape, "decoder.pos")?;
        let pos = tape.slice(pos_table, 0, 0, total)?;
        let embeddings = tape.add(cat, pos)?;

        let mut labels = vec![None; total];
        for (k, &id) in target_ids.iter().enumerate() {
            labels[text_start + k] = Some(id);
        }

        Ok(DecoderInput { embeddings, labels, text_start })
    }

    /// Causal decoder over the combined sequence: blocks (with LoRA on
    /// query/value), final layer norm, output projection to vocab logits.
    pub fn decoder_forward(&self, tape: &mut Tape, embeddings: DiffArray) -> Result<DiffArray> {
        self.decoder_forward_inner(tape, embeddings, true)
    }

    /// As [`decoder_forward`](Self::decoder_forward) but with the LoRA
    /// deltas left out entirely, used to audit that zero-initialized
    /// adapters change nothing.
    pub fn decoder_forward_without_lora(&self, tape: &mut Tape, embeddings: DiffArray) -> Result<DiffArray> {
        self.decoder_forward_inner(tape, embeddings, false)
    }

    fn decoder_forward_inner(&self, tape: &mut Tape, embeddings: DiffArray, with_lora: bool) -> Result<DiffArray> {
        let lora = with_lora.then(Self::lora_scale);
        let mut h = embeddings;
        for i in 0..self.config.dec_layers {
            let vars = bind_block(tape, &self.params, &format!("decoder.block{i}"), self.config.n_heads, lora)?;
            h = transformer_block(tape, h, &vars, true)?;
        }
        let gain = self.params.bind(tape, "decoder.ln_f_gain")?;
        let bias = self.params.bind(tape, "decoder.ln_f_bias")?;
        let normed = tape.layer_norm(h, gain, bias)?;
        let w_out = self.params.bind(tape, "decoder.out_proj.w")?;
        let b_out = self.params.bind(tape, "decoder.out_proj.b")?;
        linear(tape, normed, w_out, Some(b_out))
    }

    /// Featurize-free forward pass for one utterance (features already
    /// computed): encode, adapt, build the combined input, decode.
    pub fn forward_utterance(
        &self,
        tape: &mut Tape,
        features: &Array2<f64>,
        prompt_ids: &[usize],
        target_ids: &[usize],
    ) -> Result<UtteranceForward> {
        let encoded = self.encode_audio(tape, features)?;
        let adapted = self.adapt(tape, &encoded)?;
        let audio_len = adapted.len;
        let adapted_values = adapted.values;
        let input = self.build_decoder_input(tape, &adapted, prompt_ids, target_ids)?;
        let logits = self.decoder_forward(tape, input.embeddings)?;
        Ok(UtteranceForward {
            logits,
            labels: input.labels,
            adapted_audio: adapted_values,
            audio_len,
        })
    }

    /// Featurize a waveform with this model's frontend settings.
    pub fn featurize_audio(&self, audio: &AudioBuffer, target_frames: usize) -> Result<LogMelFeatures> {
        let audio = if audio.sample_rate_hz == TARGET_SAMPLE_RATE {
            audio.clone()
        } else {
            resample(audio, TARGET_SAMPLE_RATE).map_err(front_err)?
        };
        let fb = build_mel_filterbank(
            self.config.n_mels,
            StftConfig::default().n_fft,
            TARGET_SAMPLE_RATE,
            0.0,
            TARGET_SAMPLE_RATE as f64 / 2.0,
        )
        .map_err(front_err)?;
        featurize(&audio, &StftConfig::default(), &fb, target_frames).map_err(front_err)
    }

    /// Greedy transcription: featurize, encode, adapt, then argmax-decode
    /// from BOS until EOS or `max_text_len`. Deterministic.
    pub fn greedy_transcribe(&self, audio: &AudioBuffer, target_frames: usize, prompt: &str) -> Result<String> {
        let features = self.featurize_audio(audio, target_frames)?;
        self.greedy_transcribe_features(&features.values, prompt)
    }

    /// Greedy decoding from precomputed features.
    pub fn greedy_transcribe_features(&self, features: &Array2<f64>, prompt: &str) -> Result<String> {
        let prompt_ids = self.prompt_ids(prompt);
        let mut generated: Vec<usize> = Vec::new();

        for _ in 0..self.config.max_text_len {
            let mut tape = Tape::new();
            let encoded = self.encode_audio(&mut tape, features)?;
            let adapted = self.adapt(&mut tape, &encoded)?;
            let input = self.build_decoder_input(&mut tape, &adapted, &prompt_ids, &generated)?;
            let logits = self.decoder_forward(&mut tape, input.embeddings)?;

            let m = tape
                .value(logits)
                .view()
                .into_dimensionality::<Ix2>()
                .expect("2d logits");
            let last = m.row(m.nrows() - 1);
            let next = argmax(last.as_slice().expect("row"));
            if next == EOS {
                break;
            }
            generated.push(next);
        }
        Ok(self.vocab.decode(&generated))
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn front_err(e: aumol_dsp::DspError) -> CoreError {
    CoreError::contract(format!("audio frontend: {e}"))
}

/// Detached copy of a tape value, for feeding the alignment target.
pub fn detach(tape: &Tape, x: DiffArray) -> ArrayD<f64> {
    tape.value(x).clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::output_loss;
    use crate::params::seeded_rng;
    use ndarray::IxDyn;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_mels: 8,
            d_enc: 8,
            enc_layers: 1,
            d_hidden_adapter: 6,
            d_llm: 8,
            dec_layers: 1,
            n_heads: 2,
            vocab_size: Vocabulary::char_level().size(),
            max_audio_frames: 64,
            max_text_len: 16,
            adapter_variant: AdapterVariant::Full,
            downsample_factor: 2,
        }
    }

    fn rand_features(seed: u64, n_mels: usize, frames: usize) -> Array2<f64> {
        let mut rng = seeded_rng(seed, "model-feat");
        Array2::from_shape_fn((n_mels, frames), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn encoder_output_length_is_downsampled() {
        let model = AumolModel::new(ModelConfig { n_mels: 80, ..ModelConfig::toy() }, 1).unwrap();
        let features = rand_features(1, 80, 100);
        let mut tape = Tape::new();
        let enc = model.encode_audio(&mut tape, &features).unwrap();
        assert_eq!(tape.shape(enc.values), &[50, 64]);
        assert_eq!(enc.len, 50);
    }

    #[test]
    fn encoder_is_position_sensitive() {
        let model = AumolModel::new(tiny_config(), 2).unwrap();
        let features = rand_features(2, 8, 12);
        let mut swapped = features.clone();
        for m in 0..8 {
            swapped.swap((m, 3), (m, 7));
        }
        let run = |f: &Array2<f64>| {
            let mut tape = Tape::new();
            let enc = model.encode_audio(&mut tape, f).unwrap();
            tape.value(enc.values).clone()
        };
        assert_ne!(run(&features), run(&swapped));
    }

    #[test]
    fn too_many_frames_is_a_contract_error() {
        let model = AumolModel::new(tiny_config(), 3).unwrap();
        let features = rand_features(3, 8, 65);
        let mut tape = Tape::new();
        assert!(matches!(
            model.encode_audio(&mut tape, &features),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn adapter_maps_to_d_llm_in_every_variant_and_preserves_length() {
        for variant in [AdapterVariant::Full, AdapterVariant::SingleFc, AdapterVariant::NoRelu] {
            let cfg = ModelConfig { adapter_variant: variant, ..tiny_config() };
            let model = AumolModel::new(cfg, 4).unwrap();
            let features = rand_features(4, 8, 10);
            let mut tape = Tape::new();
            let enc = model.encode_audio(&mut tape, &features).unwrap();
            let adapted = model.adapt(&mut tape, &enc).unwrap();
            assert_eq!(tape.shape(adapted.values), &[5, 8], "{variant:?}");
            assert_eq!(adapted.len, enc.len);
        }
    }

    #[test]
    fn adapter_zero_input_gives_zero_output() {
        let model = AumolModel::new(tiny_config(), 5).unwrap();
        let mut tape = Tape::new();
        let x = tape.var(ArrayD::zeros(IxDyn(&[4, 8])), false).unwrap();
        let seq = EmbeddingSeq { values: x, modality: Modality::Audio, len: 4 };
        // biases are zero and LN gain is one at init, so LN(0) = 0
        let out = model.adapt(&mut tape, &seq).unwrap();
        assert!(tape.value(out.values).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adapter_gradient_matches_finite_differences() {
        let model = AumolModel::new(tiny_config(), 6).unwrap();
        let x = rand_features(6, 3, 8).into_dyn(); // 3 steps × d_enc
        let err = crate::autodiff::finite_diff_check(
            |tape, v| {
                let seq = EmbeddingSeq { values: v, modality: Modality::Audio, len: 3 };
                let out = model.adapt(tape, &seq)?;
                tape.mean(out.values)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn decoder_input_lengths_and_label_count() {
        // spot check of the concatenation arithmetic: 50 audio + 5 prompt +
        // (BOS + 7 targets) = 63 positions with exactly 7 labeled
        let mut cfg = tiny_config();
        cfg.max_audio_frames = 128;
        cfg.max_text_len = 32;
        let model = AumolModel::new(cfg, 7).unwrap();
        let features = rand_features(7, 8, 100);
        let mut tape = Tape::new();
        let enc = model.encode_audio(&mut tape, &features).unwrap();
        let adapted = model.adapt(&mut tape, &enc).unwrap();
        assert_eq!(adapted.len, 50);

        let prompt = [4usize, 5, 6, 7, 8];
        let target = [9usize, 10, 11, 12, 13, 14, 15];
        let input = model.build_decoder_input(&mut tape, &adapted, &prompt, &target).unwrap();
        assert_eq!(tape.shape(input.embeddings), &[63, 8]);
        assert_eq!(input.labels.len(), 63);
        assert_eq!(input.labels.iter().flatten().count(), 7);
        assert_eq!(input.text_start, 55);
        // labels sit at the BOS position through the second-to-last target
        for k in 0..7 {
            assert_eq!(input.labels[55 + k], Some(target[k]));
        }
        assert_eq!(input.labels[62], None);
    }

    #[test]
    fn empty_prompt_concatenates_audio_and_text_only() {
        let model = AumolModel::new(tiny_config(), 8).unwrap();
        let features = rand_features(8, 8, 10);
        let mut tape = Tape::new();
        let enc = model.encode_audio(&mut tape, &features).unwrap();
        let adapted = model.adapt(&mut tape, &enc).unwrap();
        let input = model.build_decoder_input(&mut tape, &adapted, &[], &[4, 5]).unwrap();
        assert_eq!(tape.shape(input.embeddings), &[5 + 3, 8]);
        assert_eq!(input.text_start, 5);
    }

    #[test]
    fn overlong_target_is_rejected() {
        let model = AumolModel::new(tiny_config(), 9).unwrap();
        let features = rand_features(9, 8, 10);
        let mut tape = Tape::new();
        let enc = model.encode_audio(&mut tape, &features).unwrap();
        let adapted = model.adapt(&mut tape, &enc).unwrap();
        let target = vec![4usize; 17];
        assert!(matches!(
            model.build_decoder_input(&mut tape, &adapted, &[], &target),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn masked_positions_do_not_affect_output_loss() {
        // zeroing logits at masked positions leaves the loss unchanged
        let model = AumolModel::new(tiny_config(), 10).unwrap();
        let features = rand_features(10, 8, 10);
        let prompt = model.prompt_ids("go:");
        let target = model.vocab.encode("hi");

        let mut tape = Tape::new();
        let fwd = model.forward_utterance(&mut tape, &features, &prompt, &target).unwrap();
        let loss = output_loss(&mut tape, fwd.logits, &fwd.labels).unwrap();
        let base = tape.scalar(loss).unwrap();

        let mut edited = tape.value(fwd.logits).clone();
        let m = edited.view_mut().into_dimensionality::<Ix2>().unwrap();
        let mut m = m;
        for (i, lbl) in fwd.labels.iter().enumerate() {
            if lbl.is_none() {
                m.row_mut(i).fill(0.0);
            }
        }
        let mut tape2 = Tape::new();
        let lv = tape2.var(edited, false).unwrap();
        let loss2 = output_loss(&mut tape2, lv, &fwd.labels).unwrap();
        let perturbed = tape2.scalar(loss2).unwrap();
        assert_eq!(base.to_bits(), perturbed.to_bits());
    }

    #[test]
    fn logits_cover_full_combined_sequence() {
        let model = AumolModel::new(tiny_config(), 11).unwrap();
        let features = rand_features(11, 8, 10);
        let mut tape = Tape::new();
        let fwd = model.forward_utterance(&mut tape, &features, &[4, 5], &[6, 7, 8]).unwrap();
        let t_total = 5 + 2 + 4;
        assert_eq!(tape.shape(fwd.logits), &[t_total, model.config.vocab_size]);
    }

    #[test]
    fn audio_perturbation_reaches_target_logits() {
        let model = AumolModel::new(tiny_config(), 12).unwrap();
        let features = rand_features(12, 8, 10);
        let mut bumped = features.clone();
        for m in 0..8 {
            bumped[[m, 4]] += 0.7;
        }
        let target = [6usize, 7, 8];
        let run = |f: &Array2<f64>| {
            let mut tape = Tape::new();
            let fwd = model.forward_utterance(&mut tape, f, &[4], &target).unwrap();
            let m = tape.value(fwd.logits).view().into_dimensionality::<Ix2>().unwrap().to_owned();
            (fwd.labels, m)
        };
        let (labels, base) = run(&features);
        let (_, moved) = run(&bumped);
        let mut any_target_diff = false;
        for (i, lbl) in labels.iter().enumerate() {
            if lbl.is_some() && base.row(i) != moved.row(i) {
                any_target_diff = true;
            }
        }
        assert!(any_target_diff, "audio edit never reached supervised logits");
    }

    #[test]
    fn target_step_logits_ignore_later_target_tokens() {
        let model = AumolModel::new(tiny_config(), 13).unwrap();
        let features = rand_features(13, 8, 10);
        let run = |target: &[usize]| {
            let mut tape = Tape::new();
            let fwd = model.forward_utterance(&mut tape, &features, &[4], target).unwrap();
            let m = tape.value(fwd.logits).view().into_dimensionality::<Ix2>().unwrap().to_owned();
            m
        };
        let a = run(&[6, 7, 8, 9]);
        let b = run(&[6, 7, 30, 31]); // tokens after step k=2 differ
        // positions up to (and including) the one holding token 7 are
        // bit-identical: audio(5) + prompt(1) + BOS + t0 + t1 = 9 positions
        for i in 0..9 {
            for j in 0..model.config.vocab_size {
                assert_eq!(a[[i, j]].to_bits(), b[[i, j]].to_bits(), "pos {i}");
            }
        }
    }

    #[test]
    fn untrained_model_transcribes_deterministically_and_terminates() {
        let model = AumolModel::new(tiny_config(), 14).unwrap();
        let features = rand_features(14, 8, 12);
        let a = model.greedy_transcribe_features(&features, "go:").unwrap();
        let b = model.greedy_transcribe_features(&features, "go:").unwrap();
        assert_eq!(a, b);
        assert!(a.chars().count() <= model.config.max_text_len);
    }

    #[test]
    fn end_to_end_gradient_reaches_features() {
        let model = AumolModel::new(tiny_config(), 15).unwrap();
        let features = rand_features(15, 8, 6).into_dyn();
        let prompt = [4usize];
        let target = [6usize, 7];
        let err = crate::autodiff::finite_diff_check(
            |tape, v| {
                let encoded = model.encode_audio_seq(tape, v)?;
                let adapted = model.adapt(tape, &encoded)?;
                let input = model.build_decoder_input(tape, &adapted, &prompt, &target)?;
                let logits = model.decoder_forward(tape, input.embeddings)?;
                output_loss(tape, logits, &input.labels)
            },
            &features,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "end-to-end relative error {err}");
    }
}
