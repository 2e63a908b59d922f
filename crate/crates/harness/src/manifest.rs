//! Flat key=value pipeline manifest: chooses the predictor, plan parameters,
//! seed and sampling mode.

use std::path::{Path, PathBuf};

use jgb_core::notation::Instrument;
use jgb_neural::config::parse_kv;
use jgb_neural::seq2seq::Sampling;

use crate::pipeline::PipelinePlan;
use crate::predictor::{EchoPredictor, NeuralPredictor, Predictor};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorChoice {
    Echo,
    Checkpoint(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineManifest {
    pub predictor: PredictorChoice,
    pub mlm_checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub greedy: bool,
    pub top_p: f64,
    pub window: usize,
    pub context: usize,
    pub refinement_passes: usize,
    pub echo_offsets: [i32; 6],
}

impl Default for PipelineManifest {
    fn default() -> PipelineManifest {
        PipelineManifest {
            predictor: PredictorChoice::Echo,
            mlm_checkpoint: None,
            seed: 0,
            greedy: true,
            top_p: 0.9,
            window: 4,
            context: 2,
            refinement_passes: 1,
            echo_offsets: [0; 6],
        }
    }
}

impl PipelineManifest {
    pub fn parse(text: &str) -> Result<PipelineManifest, HarnessError> {
        let kv = parse_kv(text);
        let mut manifest = PipelineManifest::default();
        let bad = |key: &str, value: &str| {
            HarnessError::Manifest(format!("bad value '{}' for {}", value, key))
        };
        for (key, value) in &kv {
            match key.as_str() {
                "predictor" => {
                    manifest.predictor = if value == "echo" {
                        PredictorChoice::Echo
                    } else {
                        PredictorChoice::Checkpoint(PathBuf::from(value))
                    };
                }
                "mlm" => manifest.mlm_checkpoint = Some(PathBuf::from(value)),
                "seed" => manifest.seed = value.parse().map_err(|_| bad(key, value))?,
                "sampling" => {
                    manifest.greedy = match value.as_str() {
                        "greedy" => true,
                        "top-p" => false,
                        _ => return Err(bad(key, value)),
                    };
                }
                "top_p" => manifest.top_p = value.parse().map_err(|_| bad(key, value))?,
                "window" => manifest.window = value.parse().map_err(|_| bad(key, value))?,
                "context" => manifest.context = value.parse().map_err(|_| bad(key, value))?,
                "refinement_passes" => {
                    manifest.refinement_passes = value.parse().map_err(|_| bad(key, value))?
                }
                other => match other.strip_prefix("echo_offset_") {
                    Some(name) => {
                        let instrument = Instrument::from_name(name)
                            .ok_or_else(|| bad(key, value))?;
                        manifest.echo_offsets[instrument.index()] =
                            value.parse().map_err(|_| bad(key, value))?;
                    }
                    None => return Err(HarnessError::Manifest(format!("unknown key '{}'", key))),
                },
            }
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<PipelineManifest, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Manifest(format!("{}: {}", path.display(), e)))?;
        PipelineManifest::parse(&text)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        match &self.predictor {
            PredictorChoice::Echo => out.push_str("predictor=echo\n"),
            PredictorChoice::Checkpoint(p) => out.push_str(&format!("predictor={}\n", p.display())),
        }
        if let Some(p) = &self.mlm_checkpoint {
            out.push_str(&format!("mlm={}\n", p.display()));
        }
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("sampling={}\n", if self.greedy { "greedy" } else { "top-p" }));
        out.push_str(&format!("top_p={}\n", self.top_p));
        out.push_str(&format!("window={}\n", self.window));
        out.push_str(&format!("context={}\n", self.context));
        out.push_str(&format!("refinement_passes={}\n", self.refinement_passes));
        for instrument in Instrument::ALL {
            out.push_str(&format!(
                "echo_offset_{}={}\n",
                instrument.name(),
                self.echo_offsets[instrument.index()]
            ));
        }
        out
    }

    pub fn plan(&self) -> PipelinePlan {
        PipelinePlan {
            window: self.window,
            context: self.context,
            refinement_passes: self.refinement_passes,
            ..PipelinePlan::default()
        }
    }

    pub fn build_predictor(&self) -> Result<Box<dyn Predictor>, HarnessError> {
        match &self.predictor {
            PredictorChoice::Echo => Ok(Box::new(EchoPredictor::new(self.echo_offsets))),
            PredictorChoice::Checkpoint(path) => {
                let sampling =
                    if self.greedy { Sampling::Greedy } else { Sampling::TopP { p: self.top_p } };
                Ok(Box::new(NeuralPredictor::load(
                    path,
                    self.mlm_checkpoint.as_deref(),
                    sampling,
                    self.seed,
                )?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let mut manifest = PipelineManifest::default();
        manifest.echo_offsets[Instrument::Geomungo.index()] = -3;
        manifest.seed = 42;
        manifest.greedy = false;
        let text = manifest.to_kv();
        assert_eq!(PipelineManifest::parse(&text).unwrap(), manifest);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            PipelineManifest::parse("bogus=1\n"),
            Err(HarnessError::Manifest(_))
        ));
    }
}
