//! Run configuration: one JSON section per pipeline stage, every field
//! optional (defaults fill the gaps), every scalar overridable by a
//! long-form flag. `--seed` is the master switch that re-seeds every stage
//! at once; stage-specific seed flags still win over it.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use barknet::audio::CANONICAL_SAMPLE_RATE_HZ;
use barknet::data::{SplitConfig, DEFAULT_ENERGY_GATE};
use barknet::mfcc::MfccConfig;
use barknet::model::BarkNetConfig;
use barknet::train::{OptimizerKind, TrainConfig};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub audio: AudioSection,
    pub data: DataSection,
    pub mfcc: MfccConfig,
    pub model: BarkNetConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioSection {
    /// Everything is resampled to this rate before segmentation.
    pub sample_rate_hz: u32,
}

impl Default for AudioSection {
    fn default() -> Self {
        AudioSection {
            sample_rate_hz: CANONICAL_SAMPLE_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// Window hop in samples; `null` means non-overlapping windows
    /// (hop = fragment length).
    pub hop: Option<usize>,
    /// Root-mean-square threshold below which a window is dropped as silence.
    pub energy_gate: f64,
    pub split: SplitConfig,
    pub synth: SynthSection,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            hop: None,
            energy_gate: DEFAULT_ENERGY_GATE,
            split: SplitConfig::default(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub n_per_class: usize,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_per_class: 1260,
            snr_db: 10.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, String> {
        serde_json::from_str(text).map_err(|e| format!("bad config JSON: {e}"))
    }

    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    /// Effective segmentation hop: configured value or the fragment length.
    pub fn hop(&self) -> usize {
        self.data.hop.unwrap_or(self.model.fragment_len)
    }

    /// Invariant checks spanning all sections; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.audio.sample_rate_hz == 0 {
            return Err("sample_rate_hz must be positive".into());
        }
        if self.hop() == 0 {
            return Err("hop must be positive".into());
        }
        if self.data.split.train_n == 0 || self.data.split.val_n == 0 || self.data.split.test_n == 0
        {
            return Err("split sizes must be positive".into());
        }
        self.mfcc.validate()?;
        self.model.feature_lens().map_err(|e| e.to_string())?;
        if self.train.epochs_max == 0 || self.train.batch_size == 0 {
            return Err("epochs_max and batch_size must be positive".into());
        }
        if self.train.early_stop_patience == 0 {
            return Err("early_stop_patience must be positive".into());
        }
        // rejects NaN as well as zero and negatives
        if !self.train.learning_rate.is_finite() || self.train.learning_rate <= 0.0 {
            return Err("learning_rate must be positive".into());
        }
        Ok(())
    }
}

/// Long-form scalar overrides, applied on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Re-seed every stage (split, synth, model init, training) at once
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true)]
    pub sample_rate_hz: Option<u32>,
    #[arg(long, global = true)]
    pub fragment_len: Option<usize>,
    /// Segmentation window hop in samples
    #[arg(long, global = true)]
    pub hop: Option<usize>,
    #[arg(long, global = true)]
    pub energy_gate: Option<f64>,

    #[arg(long, global = true)]
    pub train_n: Option<usize>,
    #[arg(long, global = true)]
    pub val_n: Option<usize>,
    #[arg(long, global = true)]
    pub test_n: Option<usize>,
    #[arg(long, global = true)]
    pub split_seed: Option<u64>,

    #[arg(long, global = true)]
    pub n_per_class: Option<usize>,
    #[arg(long, global = true)]
    pub snr_db: Option<f64>,
    #[arg(long, global = true)]
    pub synth_seed: Option<u64>,

    #[arg(long, global = true)]
    pub conv1_channels: Option<usize>,
    #[arg(long, global = true)]
    pub conv1_kernel: Option<usize>,
    #[arg(long, global = true)]
    pub conv1_stride: Option<usize>,
    #[arg(long, global = true)]
    pub conv2_channels: Option<usize>,
    #[arg(long, global = true)]
    pub conv2_kernel: Option<usize>,
    #[arg(long, global = true)]
    pub conv2_stride: Option<usize>,
    #[arg(long, global = true)]
    pub model_seed: Option<u64>,

    #[arg(long, global = true)]
    pub epochs_max: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// "sgd" or "adam"
    #[arg(long, global = true)]
    pub optimizer: Option<String>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    #[arg(long, global = true)]
    pub train_seed: Option<u64>,

    #[arg(long, global = true)]
    pub frame_len: Option<usize>,
    /// MFCC frame hop in samples
    #[arg(long, global = true)]
    pub mfcc_hop: Option<usize>,
    #[arg(long, global = true)]
    pub fft_len: Option<usize>,
    #[arg(long, global = true)]
    pub n_mels: Option<usize>,
    #[arg(long, global = true)]
    pub n_coeffs: Option<usize>,
    #[arg(long, global = true)]
    pub pre_emphasis: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), String> {
        if let Some(seed) = self.seed {
            cfg.data.split.seed = seed;
            cfg.data.synth.seed = seed;
            cfg.model.seed = seed;
            cfg.train.seed = seed;
        }
        macro_rules! set {
            ($flag:expr, $slot:expr) => {
                if let Some(v) = $flag {
                    $slot = v;
                }
            };
        }
        set!(self.sample_rate_hz, cfg.audio.sample_rate_hz);
        set!(self.fragment_len, cfg.model.fragment_len);
        if self.hop.is_some() {
            cfg.data.hop = self.hop;
        }
        set!(self.energy_gate, cfg.data.energy_gate);
        set!(self.train_n, cfg.data.split.train_n);
        set!(self.val_n, cfg.data.split.val_n);
        set!(self.test_n, cfg.data.split.test_n);
        set!(self.split_seed, cfg.data.split.seed);
        set!(self.n_per_class, cfg.data.synth.n_per_class);
        set!(self.snr_db, cfg.data.synth.snr_db);
        set!(self.synth_seed, cfg.data.synth.seed);
        set!(self.conv1_channels, cfg.model.conv1_channels);
        set!(self.conv1_kernel, cfg.model.conv1_kernel);
        set!(self.conv1_stride, cfg.model.conv1_stride);
        set!(self.conv2_channels, cfg.model.conv2_channels);
        set!(self.conv2_kernel, cfg.model.conv2_kernel);
        set!(self.conv2_stride, cfg.model.conv2_stride);
        set!(self.model_seed, cfg.model.seed);
        set!(self.epochs_max, cfg.train.epochs_max);
        set!(self.batch_size, cfg.train.batch_size);
        if let Some(opt) = &self.optimizer {
            cfg.train.optimizer = match opt.as_str() {
                "sgd" => OptimizerKind::Sgd,
                "adam" => OptimizerKind::Adam,
                other => return Err(format!("unknown optimizer {other:?} (use sgd or adam)")),
            };
        }
        set!(self.learning_rate, cfg.train.learning_rate);
        set!(self.patience, cfg.train.early_stop_patience);
        set!(self.train_seed, cfg.train.seed);
        set!(self.frame_len, cfg.mfcc.frame_len);
        set!(self.mfcc_hop, cfg.mfcc.hop);
        set!(self.fft_len, cfg.mfcc.fft_len);
        set!(self.n_mels, cfg.mfcc.n_mels);
        set!(self.n_coeffs, cfg.mfcc.n_coeffs);
        set!(self.pre_emphasis, cfg.mfcc.pre_emphasis);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_all_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg.model.fragment_len, 12_000);
        assert_eq!(cfg.data.split.train_n, 4000);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.mfcc.n_coeffs, 13);
        assert_eq!(cfg.audio.sample_rate_hz, 16_000);
        assert_eq!(cfg.hop(), 12_000);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"model": {"fragment_len": 2000}, "data": {"hop": 500, "split": {"train_n": 10}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model.fragment_len, 2000);
        assert_eq!(cfg.model.conv1_kernel, 64); // untouched default
        assert_eq!(cfg.hop(), 500);
        assert_eq!(cfg.data.split.train_n, 10);
        assert_eq!(cfg.data.split.val_n, 800);
    }

    #[test]
    fn master_seed_reseeds_every_stage_but_specific_flags_win() {
        let mut cfg = RunConfig::default();
        let ov = Overrides {
            seed: Some(9),
            model_seed: Some(3),
            ..Overrides::default()
        };
        ov.apply(&mut cfg).unwrap();
        assert_eq!(cfg.data.split.seed, 9);
        assert_eq!(cfg.data.synth.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.model.seed, 3);
    }

    #[test]
    fn bad_optimizer_name_is_reported() {
        let mut cfg = RunConfig::default();
        let ov = Overrides {
            optimizer: Some("sdg".into()),
            ..Overrides::default()
        };
        assert!(ov.apply(&mut cfg).unwrap_err().contains("sdg"));
    }

    #[test]
    fn validate_catches_cross_section_nonsense() {
        let mut cfg = RunConfig::default();
        cfg.model.fragment_len = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.train.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.mfcc.fft_len = 300;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back.model.seed, cfg.model.seed);
        assert_eq!(back.data.synth.n_per_class, cfg.data.synth.n_per_class);
    }
}
