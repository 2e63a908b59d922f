//! Model and training configuration, with a flat key=value file form.

use std::collections::HashMap;

use crate::tensor::KernelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionalMode {
    /// Sum of gak / jeonggan / sub-beat counter embeddings.
    BeatCounter,
    /// One learned embedding per absolute token position.
    Absolute,
}

impl PositionalMode {
    pub fn name(self) -> &'static str {
        match self {
            PositionalMode::BeatCounter => "beat-counter",
            PositionalMode::Absolute => "absolute",
        }
    }

    pub fn from_name(s: &str) -> Option<PositionalMode> {
        match s {
            "beat-counter" => Some(PositionalMode::BeatCounter),
            "absolute" => Some(PositionalMode::Absolute),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub dropout: f64,
    /// Token vocabulary (seq2seq) or symbol-feature vocabulary (mlm).
    pub vocab: usize,
    /// Ornament-feature vocabulary; zero for the seq2seq model.
    pub ornament_vocab: usize,
    pub max_gak: usize,
    pub max_jeonggan: usize,
    pub max_subbeat: usize,
    /// Absolute-position table size; also the decoding length cap.
    pub max_len: usize,
    pub positional: PositionalMode,
}

impl ModelConfig {
    /// Small configuration that trains in minutes on a CPU.
    pub fn desk(vocab: usize) -> ModelConfig {
        ModelConfig {
            layers: 2,
            heads: 2,
            hidden: 64,
            dropout: 0.0,
            vocab,
            ornament_vocab: 0,
            max_gak: 8,
            max_jeonggan: 24,
            max_subbeat: 8,
            max_len: 512,
            positional: PositionalMode::BeatCounter,
        }
    }

    /// The full-scale configuration used for the published runs: 6 layers,
    /// 4 heads, hidden 128, dropout 0.2.
    pub fn paper(vocab: usize) -> ModelConfig {
        ModelConfig { layers: 6, heads: 4, hidden: 128, dropout: 0.2, ..ModelConfig::desk(vocab) }
    }

    /// The 12-layer masked-infill configuration.
    pub fn paper_mlm(vocab: usize, ornament_vocab: usize) -> ModelConfig {
        ModelConfig {
            layers: 12,
            ornament_vocab,
            max_subbeat: 6,
            ..ModelConfig::paper(vocab)
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.hidden % self.heads != 0 || self.heads == 0 {
            return Err(KernelError::ShapeMismatch {
                op: "config",
                detail: format!("hidden {} not divisible by {} heads", self.hidden, self.heads),
            });
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "layers={}\nheads={}\nhidden={}\ndropout={}\nvocab={}\nornament_vocab={}\nmax_gak={}\nmax_jeonggan={}\nmax_subbeat={}\nmax_len={}\npositional={}\n",
            self.layers,
            self.heads,
            self.hidden,
            self.dropout,
            self.vocab,
            self.ornament_vocab,
            self.max_gak,
            self.max_jeonggan,
            self.max_subbeat,
            self.max_len,
            self.positional.name()
        )
    }

    pub fn from_kv(text: &str) -> Result<ModelConfig, KernelError> {
        let kv = parse_kv(text);
        let mut cfg = ModelConfig::desk(0);
        if let Some(v) = kv.get("layers") {
            cfg.layers = parse_field("layers", v)?;
        }
        if let Some(v) = kv.get("heads") {
            cfg.heads = parse_field("heads", v)?;
        }
        if let Some(v) = kv.get("hidden") {
            cfg.hidden = parse_field("hidden", v)?;
        }
        if let Some(v) = kv.get("dropout") {
            cfg.dropout = parse_field("dropout", v)?;
        }
        if let Some(v) = kv.get("vocab") {
            cfg.vocab = parse_field("vocab", v)?;
        }
        if let Some(v) = kv.get("ornament_vocab") {
            cfg.ornament_vocab = parse_field("ornament_vocab", v)?;
        }
        if let Some(v) = kv.get("max_gak") {
            cfg.max_gak = parse_field("max_gak", v)?;
        }
        if let Some(v) = kv.get("max_jeonggan") {
            cfg.max_jeonggan = parse_field("max_jeonggan", v)?;
        }
        if let Some(v) = kv.get("max_subbeat") {
            cfg.max_subbeat = parse_field("max_subbeat", v)?;
        }
        if let Some(v) = kv.get("max_len") {
            cfg.max_len = parse_field("max_len", v)?;
        }
        if let Some(v) = kv.get("positional") {
            cfg.positional = PositionalMode::from_name(v)
                .ok_or_else(|| KernelError::Checkpoint(format!("bad positional mode '{}'", v)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_steps: usize,
    pub batch: usize,
    pub max_updates: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig { lr: 0.001, warmup_steps: 1000, batch: 16, max_updates: 35_000, seed: 0 }
    }
}

impl TrainConfig {
    pub fn to_kv(&self) -> String {
        format!(
            "lr={}\nwarmup_steps={}\nbatch={}\nmax_updates={}\nseed={}\n",
            self.lr, self.warmup_steps, self.batch, self.max_updates, self.seed
        )
    }

    pub fn from_kv(text: &str) -> Result<TrainConfig, KernelError> {
        let kv = parse_kv(text);
        let mut cfg = TrainConfig::default();
        if let Some(v) = kv.get("lr") {
            cfg.lr = parse_field("lr", v)?;
        }
        if let Some(v) = kv.get("warmup_steps") {
            cfg.warmup_steps = parse_field("warmup_steps", v)?;
        }
        if let Some(v) = kv.get("batch") {
            cfg.batch = parse_field("batch", v)?;
        }
        if let Some(v) = kv.get("max_updates") {
            cfg.max_updates = parse_field("max_updates", v)?;
        }
        if let Some(v) = kv.get("seed") {
            cfg.seed = parse_field("seed", v)?;
        }
        Ok(cfg)
    }
}

/// Linear warmup to the peak rate, then cosine decay to zero at the final
/// update. Step 0 has rate 0; step `warmup_steps` has the peak rate.
pub fn lr_at(cfg: &TrainConfig, step: usize) -> f64 {
    if cfg.warmup_steps > 0 && step < cfg.warmup_steps {
        return cfg.lr * step as f64 / cfg.warmup_steps as f64;
    }
    if cfg.max_updates <= cfg.warmup_steps {
        return cfg.lr;
    }
    let progress =
        (step - cfg.warmup_steps) as f64 / (cfg.max_updates - cfg.warmup_steps) as f64;
    let progress = progress.min(1.0);
    cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

pub fn parse_kv(text: &str) -> HashMap<String, String> {
    let mut map = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

fn parse_field<T: std::str::FromStr>(name: &str, value: &str) -> Result<T, KernelError> {
    value
        .parse()
        .map_err(|_| KernelError::Checkpoint(format!("bad value '{}' for {}", value, name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_warms_up_then_decays() {
        let cfg = TrainConfig { max_updates: 5000, ..TrainConfig::default() };
        assert_eq!(lr_at(&cfg, 0), 0.0);
        assert!((lr_at(&cfg, 500) - 0.0005).abs() < 1e-12);
        assert!((lr_at(&cfg, 1000) - 0.001).abs() < 1e-12);
        assert!(lr_at(&cfg, 3000) < 0.001);
        assert!(lr_at(&cfg, 5000) < 1e-9);
    }

    #[test]
    fn config_kv_round_trip() {
        let mut cfg = ModelConfig::paper(91);
        cfg.positional = PositionalMode::Absolute;
        assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);

        let t = TrainConfig { lr: 0.01, warmup_steps: 10, batch: 4, max_updates: 200, seed: 9 };
        assert_eq!(TrainConfig::from_kv(&t.to_kv()).unwrap(), t);
    }

    #[test]
    fn invalid_head_split_is_rejected() {
        let cfg = ModelConfig { hidden: 65, ..ModelConfig::desk(10) };
        assert!(cfg.validate().is_err());
    }
}
