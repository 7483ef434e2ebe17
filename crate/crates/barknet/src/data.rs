//! Labeled audio fragments: segmentation, manifests, splits, batching, and a
//! synthetic tone dataset used when no real recordings are available.

use crate::audio::AudioClip;
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default fragment length in samples (0.75 s at the canonical 16 kHz).
pub const DEFAULT_FRAGMENT_LEN: usize = 12_000;
/// Default RMS energy gate below which a window is discarded as silence.
pub const DEFAULT_ENERGY_GATE: f64 = 0.01;

/// The five emotion classes, with fixed ordinals 0..4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmotionClass {
    Aggressive = 0,
    Arrogant = 1,
    FearAndPain = 2,
    Happy = 3,
    Sad = 4,
}

pub const NUM_CLASSES: usize = 5;

impl EmotionClass {
    pub const ALL: [EmotionClass; NUM_CLASSES] = [
        EmotionClass::Aggressive,
        EmotionClass::Arrogant,
        EmotionClass::FearAndPain,
        EmotionClass::Happy,
        EmotionClass::Sad,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(o: usize) -> Option<EmotionClass> {
        EmotionClass::ALL.get(o).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionClass::Aggressive => "aggressive",
            EmotionClass::Arrogant => "arrogant",
            EmotionClass::FearAndPain => "fear_and_pain",
            EmotionClass::Happy => "happy",
            EmotionClass::Sad => "sad",
        }
    }

    pub fn from_name(name: &str) -> Option<EmotionClass> {
        EmotionClass::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl std::fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed-length window of raw samples; the unit the classifier consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFragment {
    pub fragment: Fragment,
    pub label: EmotionClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    pub label: EmotionClass,
}

/// List of (audio path, label) rows; the on-disk dataset index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

/// Train/validation/test sizes plus the shuffle seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_n: usize,
    pub val_n: usize,
    pub test_n: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_n: 4000,
            val_n: 800,
            test_n: 1500,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataError {
    #[error("line {line}: unknown label {label:?} (expected one of aggressive, arrogant, fear_and_pain, happy, sad)")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: malformed row (expected \"path,label\")")]
    MalformedRow { line: usize },
    #[error("not enough {class} items to fill the {split} split")]
    InsufficientData {
        class: EmotionClass,
        split: &'static str,
    },
}

/// Cut a clip into fixed-length windows starting at 0, hop, 2*hop, ...
///
/// A window is emitted only if it fits entirely (no padding) and its RMS
/// strictly exceeds `energy_gate`, dropping silence.
pub fn segment_clip(
    clip: &AudioClip,
    fragment_len: usize,
    hop: usize,
    energy_gate: f64,
) -> Vec<Fragment> {
    assert!(fragment_len > 0 && hop > 0);
    let mut out = Vec::new();
    if clip.samples.len() < fragment_len {
        return out;
    }
    let mut start = 0;
    while start + fragment_len <= clip.samples.len() {
        let window = &clip.samples[start..start + fragment_len];
        let rms = (window.iter().map(|s| s * s).sum::<f64>() / fragment_len as f64).sqrt();
        if rms > energy_gate {
            out.push(Fragment {
                samples: window.to_vec(),
            });
        }
        start += hop;
    }
    out
}

/// Scale a fragment so its peak magnitude is 1 (no-op for all-zero input).
/// Applied to every fragment entering the model, so recording gain does not
/// leak into the features. Idempotent.
pub fn peak_normalize(samples: &mut [f64]) {
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        for s in samples.iter_mut() {
            *s /= peak;
        }
    }
}

/// Parse manifest text: one "path,label" row per non-empty line, whitespace
/// trimmed, LF or CRLF. The label is taken after the last comma so paths may
/// contain commas.
pub fn load_manifest(text: &str) -> Result<Manifest, DataError> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let (path, label) = line
            .rsplit_once(',')
            .ok_or(DataError::MalformedRow { line: n })?;
        let (path, label) = (path.trim(), label.trim());
        if path.is_empty() {
            return Err(DataError::MalformedRow { line: n });
        }
        let label = EmotionClass::from_name(label).ok_or_else(|| DataError::UnknownLabel {
            line: n,
            label: label.to_string(),
        })?;
        rows.push(ManifestRow {
            path: path.to_string(),
            label,
        });
    }
    Ok(Manifest { rows })
}

/// Render a manifest back to its text form.
pub fn render_manifest(m: &Manifest) -> String {
    let mut out = String::new();
    for row in &m.rows {
        out.push_str(&row.path);
        out.push(',');
        out.push_str(row.label.name());
        out.push('\n');
    }
    out
}

/// Train, validation, and test sets, in that order.
pub type Splits = (
    Vec<LabeledFragment>,
    Vec<LabeledFragment>,
    Vec<LabeledFragment>,
);

/// Split items into disjoint train/val/test sets whose per-class counts match
/// the pool's proportions within one item. Deterministic given the seed.
pub fn stratified_split(items: &[LabeledFragment], cfg: &SplitConfig) -> Result<Splits, DataError> {
    let total = items.len();
    // Per-class index pools, shuffled once; splits then consume from the front.
    let mut pools: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, item) in items.iter().enumerate() {
        pools[item.label.ordinal()].push(i);
    }
    let mut rng = SeededRng::new(cfg.seed);
    for pool in pools.iter_mut() {
        rng.shuffle(pool);
    }
    let class_counts: Vec<usize> = pools.iter().map(|p| p.len()).collect();
    let mut cursor = [0usize; NUM_CLASSES];

    let mut take_split =
        |split_n: usize, name: &'static str| -> Result<Vec<LabeledFragment>, DataError> {
            // Proportional quota per class: floor, then distribute the remainder by
            // largest fractional part (ties to lowest ordinal) so the split size is
            // exact and every class is within +-1 of proportional.
            if total == 0 {
                return Err(DataError::InsufficientData {
                    class: EmotionClass::Aggressive,
                    split: name,
                });
            }
            let mut quota = [0usize; NUM_CLASSES];
            let mut rema: Vec<(usize, u64)> = Vec::with_capacity(NUM_CLASSES);
            let mut assigned = 0;
            for c in 0..NUM_CLASSES {
                let exact_num = split_n as u64 * class_counts[c] as u64;
                quota[c] = (exact_num / total as u64) as usize;
                assigned += quota[c];
                rema.push((c, exact_num % total as u64));
            }
            rema.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(c, _) in rema.iter().take(split_n.saturating_sub(assigned)) {
                quota[c] += 1;
            }
            let mut out = Vec::with_capacity(split_n);
            for c in 0..NUM_CLASSES {
                if cursor[c] + quota[c] > pools[c].len() {
                    return Err(DataError::InsufficientData {
                        class: EmotionClass::from_ordinal(c).unwrap(),
                        split: name,
                    });
                }
                for &idx in &pools[c][cursor[c]..cursor[c] + quota[c]] {
                    out.push(items[idx].clone());
                }
                cursor[c] += quota[c];
            }
            Ok(out)
        };

    let train = take_split(cfg.train_n, "train")?;
    let val = take_split(cfg.val_n, "validation")?;
    let test = take_split(cfg.test_n, "test")?;
    Ok((train, val, test))
}

/// Synthesize a labeled dataset. Class k is a 400*(k+1) Hz sine of amplitude
/// 0.5 with uniformly random phase, plus white Gaussian noise scaled so that
/// 10*log10(signal power / noise power) = `snr_db`. `snr_db = +inf` means no
/// noise. Deterministic given the seed; fragments are emitted class-major.
pub fn synth_dataset(
    n_per_class: usize,
    fragment_len: usize,
    sample_rate_hz: u32,
    snr_db: f64,
    seed: u64,
) -> Vec<LabeledFragment> {
    assert!(n_per_class > 0);
    let mut rng = SeededRng::new(seed);
    // Sine amplitude 0.5 has power a^2/2 = 0.125.
    let signal_power = 0.125;
    let noise_sigma = (signal_power * 10f64.powf(-snr_db / 10.0)).sqrt();
    let mut out = Vec::with_capacity(n_per_class * NUM_CLASSES);
    for class in EmotionClass::ALL {
        let freq = 400.0 * (class.ordinal() + 1) as f64;
        for _ in 0..n_per_class {
            let phase = rng.next_f64() * std::f64::consts::TAU;
            let samples = (0..fragment_len)
                .map(|t| {
                    let angle =
                        std::f64::consts::TAU * freq * t as f64 / sample_rate_hz as f64 + phase;
                    0.5 * angle.sin() + noise_sigma * rng.next_normal()
                })
                .collect();
            out.push(LabeledFragment {
                fragment: Fragment { samples },
                label: class,
            });
        }
    }
    out
}

/// Shuffle 0..n with the seed and cut into consecutive chunks of `batch_size`;
/// the final short chunk is kept. Every index appears exactly once.
pub fn shuffled_batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size > 0);
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}
