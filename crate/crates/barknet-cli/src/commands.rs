//! The five subcommand bodies. Each takes the merged config plus its paths,
//! writes results to the supplied writer (stdout in production, a buffer in
//! tests), and reports failures as [`CmdError`] so the binary can map them
//! onto exit codes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use barknet::audio::{emit_wav, parse_wav, resample_linear, AudioClip};
use barknet::data::{
    load_manifest, peak_normalize, render_manifest, segment_clip, stratified_split, synth_dataset,
    LabeledFragment, Manifest, ManifestRow, NUM_CLASSES,
};
use barknet::metrics::{build_report, confusion, render_report};
use barknet::mfcc::mfcc;
use barknet::model::{argmax_tie_low, BarkNet};
use barknet::train::{evaluate_split, fit};

use crate::config::RunConfig;

/// Failure carrying its process exit code: 2 for data problems (unreadable
/// or malformed inputs, unsatisfiable configs), 3 for structurally valid
/// input that yields nothing to work on.
#[derive(Debug)]
pub enum CmdError {
    Data(String),
    Empty(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Data(_) => 2,
            CmdError::Empty(_) => 3,
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Data(msg) | CmdError::Empty(msg) => f.write_str(msg),
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CmdError {
    CmdError::Data(e.to_string())
}

fn read_file(path: &Path) -> Result<Vec<u8>, CmdError> {
    fs::read(path).map_err(|e| CmdError::Data(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CmdError> {
    fs::write(path, bytes)
        .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", path.display())))
}

fn out_err(e: std::io::Error) -> CmdError {
    CmdError::Data(format!("cannot write output: {e}"))
}

/// Parse a WAV from disk and bring it to the configured sample rate.
fn load_clip(cfg: &RunConfig, path: &Path) -> Result<AudioClip, CmdError> {
    let bytes = read_file(path)?;
    let clip = parse_wav(&bytes).map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    Ok(resample_linear(&clip, cfg.audio.sample_rate_hz))
}

/// Load every manifest row, segment it, and label the fragments. Relative
/// audio paths resolve against the manifest's directory.
fn load_labeled_fragments(
    cfg: &RunConfig,
    manifest_path: &Path,
) -> Result<Vec<LabeledFragment>, CmdError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| CmdError::Data(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest = load_manifest(&text).map_err(data_err)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let mut out = Vec::new();
    for row in &manifest.rows {
        let clip = load_clip(cfg, &base.join(&row.path))?;
        for fragment in segment_clip(
            &clip,
            cfg.model.fragment_len,
            cfg.hop(),
            cfg.data.energy_gate,
        ) {
            out.push(LabeledFragment {
                fragment,
                label: row.label,
            });
        }
    }
    Ok(out)
}

/// Write one WAV per synthetic fragment plus a manifest listing them.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path, out: &mut dyn Write) -> Result<(), CmdError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CmdError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let items = synth_dataset(
        cfg.data.synth.n_per_class,
        cfg.model.fragment_len,
        cfg.audio.sample_rate_hz,
        cfg.data.synth.snr_db,
        cfg.data.synth.seed,
    );
    let mut rows = Vec::with_capacity(items.len());
    let mut per_class = [0usize; NUM_CLASSES];
    for item in &items {
        let idx = per_class[item.label.ordinal()];
        per_class[item.label.ordinal()] += 1;
        let name = format!("{}_{idx:04}.wav", item.label);
        let clip = AudioClip {
            samples: item.fragment.samples.clone(),
            sample_rate_hz: cfg.audio.sample_rate_hz,
        };
        write_file(&out_dir.join(&name), &emit_wav(&clip))?;
        rows.push(ManifestRow {
            path: name,
            label: item.label,
        });
    }
    let manifest_path = out_dir.join("manifest.csv");
    write_file(
        &manifest_path,
        render_manifest(&Manifest { rows }).as_bytes(),
    )?;
    writeln!(
        out,
        "wrote {} wav files and {}",
        items.len(),
        manifest_path.display()
    )
    .map_err(out_err)?;
    Ok(())
}

/// Segment, split, train, and persist the best checkpoint plus the epoch log
/// (at `<checkpoint>.log`).
pub fn cmd_train(
    cfg: &RunConfig,
    manifest_path: &Path,
    out_checkpoint: &Path,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CmdError> {
    let items = load_labeled_fragments(cfg, manifest_path)?;
    let (train, val, _test) = stratified_split(&items, &cfg.data.split).map_err(data_err)?;
    let net = BarkNet::init(cfg.model.clone()).map_err(data_err)?;
    let (best, log) = fit(net, &train, &val, &cfg.train).map_err(data_err)?;
    write_file(out_checkpoint, &best.save_checkpoint())?;
    let log_path = log_path_for(out_checkpoint);
    write_file(&log_path, log.render().as_bytes())?;
    if json {
        let epochs: Vec<serde_json::Value> = log
            .epochs
            .iter()
            .map(|e| {
                serde_json::json!({
                    "epoch": e.epoch,
                    "loss": e.train_loss,
                    "val_acc": e.val_acc,
                })
            })
            .collect();
        let doc = serde_json::json!({
            "best_epoch": log.best_epoch,
            "val_acc": log.best_val_acc,
            "epochs": epochs,
            "checkpoint": out_checkpoint.display().to_string(),
        });
        writeln!(out, "{doc}").map_err(out_err)?;
    } else {
        write!(out, "{}", log.render()).map_err(out_err)?;
        writeln!(
            out,
            "best epoch={} val_acc={:.4}",
            log.best_epoch, log.best_val_acc
        )
        .map_err(out_err)?;
    }
    Ok(())
}

/// The train log lands next to the checkpoint with ".log" appended.
pub fn log_path_for(checkpoint: &Path) -> PathBuf {
    let mut os = checkpoint.as_os_str().to_owned();
    os.push(".log");
    PathBuf::from(os)
}

/// Rebuild the test split and print its classification report.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    manifest_path: &Path,
    checkpoint_path: &Path,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CmdError> {
    let net = BarkNet::load_checkpoint(&read_file(checkpoint_path)?).map_err(data_err)?;
    let mut cfg = cfg.clone();
    // the checkpoint dictates the input size; segmentation must follow it
    cfg.model.fragment_len = net.cfg.fragment_len;
    let items = load_labeled_fragments(&cfg, manifest_path)?;
    let (_train, _val, test) = stratified_split(&items, &cfg.data.split).map_err(data_err)?;
    let (_acc, preds) = evaluate_split(&net, &test).map_err(data_err)?;
    let truths: Vec<_> = test.iter().map(|t| t.label).collect();
    let cm = confusion(&truths, &preds).map_err(data_err)?;
    let report = build_report(&cm).map_err(data_err)?;
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).unwrap()).map_err(out_err)?;
    } else {
        write!(out, "{}", render_report(&report)).map_err(out_err)?;
    }
    Ok(())
}

/// Per-fragment class + confidences for one clip, then a majority-vote
/// clip-level call (ties to the lowest ordinal).
pub fn cmd_predict(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    wav_path: &Path,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CmdError> {
    let net = BarkNet::load_checkpoint(&read_file(checkpoint_path)?).map_err(data_err)?;
    let clip = load_clip(cfg, wav_path)?;
    let fragments = segment_clip(
        &clip,
        net.cfg.fragment_len,
        cfg.data.hop.unwrap_or(net.cfg.fragment_len),
        cfg.data.energy_gate,
    );
    if fragments.is_empty() {
        return Err(CmdError::Empty(format!(
            "no fragments: {} has no window of {} samples above the energy gate {}",
            wav_path.display(),
            net.cfg.fragment_len,
            cfg.data.energy_gate
        )));
    }
    let mut votes = [0usize; NUM_CLASSES];
    let mut lines = String::new();
    let mut frag_docs = Vec::new();
    for (i, fragment) in fragments.iter().enumerate() {
        let mut samples = fragment.samples.clone();
        peak_normalize(&mut samples);
        let (class, conf) = net.predict(&samples).map_err(data_err)?;
        votes[class.ordinal()] += 1;
        let conf_text = conf
            .iter()
            .map(|c| format!("{c:.4}"))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(lines, "fragment={i} class={class} conf={conf_text}").unwrap();
        frag_docs.push(serde_json::json!({
            "fragment": i,
            "class": class.name(),
            "confidences": conf.to_vec(),
        }));
    }
    let votes_f: Vec<f64> = votes.iter().map(|&v| v as f64).collect();
    let clip_class = barknet::data::EmotionClass::from_ordinal(argmax_tie_low(&votes_f)).unwrap();
    if json {
        let doc = serde_json::json!({
            "fragments": frag_docs,
            "clip": clip_class.name(),
        });
        writeln!(out, "{doc}").map_err(out_err)?;
    } else {
        write!(out, "{lines}").map_err(out_err)?;
        writeln!(out, "clip={clip_class}").map_err(out_err)?;
    }
    Ok(())
}

/// MFCC matrix for a whole clip, one frame per line, six decimal places.
pub fn cmd_features(
    cfg: &RunConfig,
    wav_path: &Path,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CmdError> {
    let clip = load_clip(cfg, wav_path)?;
    let frames = mfcc(&clip.samples, &cfg.mfcc, clip.sample_rate_hz);
    if json {
        writeln!(out, "{}", serde_json::json!({ "frames": frames.frames })).map_err(out_err)?;
    } else {
        for frame in &frames.frames {
            let line = frame
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "{line}").map_err(out_err)?;
        }
    }
    Ok(())
}
