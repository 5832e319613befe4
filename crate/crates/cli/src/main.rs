//! Command-line surface for the adversarial residual toolkit.
//!
//! One pipeline stage per invocation: `prepare` builds manifests and
//! augmented copies, `train-detector` and `train-rgn` produce checkpoints,
//! `apply` post-processes audio, `eval` scores the result, `report`
//! renders a saved report. Failures exit nonzero with one JSON object on
//! stderr; the exit code identifies the error class.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use advres_core::adv_train::{batch_apply, resume_train_rgn, train_rgn};
use advres_core::audio::{read_wav, Waveform};
use advres_core::augment::augment_random;
use advres_core::config::{load_config, RunConfig};
use advres_core::detector::{train_detector, DatasetSplit, DetectorModel};
use advres_core::error::{Error, Result};
use advres_core::eval::{
    compute_dsr, eer_delta, silence_speech_mt, spectrogram_diff, write_score_csv, EvalReport,
    Scorer, REPORT_SCHEMA_VERSION,
};
use advres_core::manifest::{read_manifest, write_manifest, Label, ManifestEntry};
use advres_core::rgn::ResidualGenerator;
use advres_core::seeds;

#[derive(Parser)]
#[command(
    name = "advres",
    version,
    about = "Adversarial residual post-processing for speech anti-spoofing evaluation"
)]
struct Cli {
    /// Run configuration TOML; omitted means built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's global seed (TOML integer range).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,

    /// Worker threads for file-parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scan a data tree (subdirectories target_natural/, other_natural/,
    /// fake/) into a manifest and write augmented training copies.
    Prepare {
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the spoofing detector on a manifest.
    TrainDetector {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the residual generator against a frozen detector.
    TrainRgn {
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from `<out>/state.ckpt` instead of initializing fresh.
        #[arg(long)]
        resume: bool,
    },
    /// Post-process every fake in a manifest with a trained generator.
    Apply {
        #[arg(long)]
        rgn: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Root the manifest paths are resolved against; the output tree
        /// mirrors the layout beneath it.
        #[arg(long)]
        in_root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score processed fakes against one or more detectors and write the
    /// evaluation report.
    Eval {
        /// Detector checkpoint; repeat for multi-detector DSR.
        #[arg(long = "detector", required = true)]
        detectors: Vec<PathBuf>,
        #[arg(long)]
        genuine: PathBuf,
        #[arg(long)]
        fakes_before: PathBuf,
        #[arg(long)]
        fakes_after: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render `<out>/report.json` as text.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Error class name and exit code. Usage errors exit 2 via clap.
fn error_class(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Config(_) | Error::ConfigParse { .. } => ("config", 3),
        Error::MissingArtifact { .. } => ("missing_artifact", 4),
        Error::NonFiniteLoss { .. } | Error::CheckpointFormat { .. } | Error::Io { .. } => {
            ("internal", 6)
        }
        _ => ("data", 5),
    }
}

fn emit_error(class: &str, code: u8, message: &str) {
    let payload = serde_json::json!({
        "error": class,
        "exit_code": code,
        "message": message,
    });
    eprintln!("{payload}");
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            emit_error("usage", 2, &e.to_string());
            return ExitCode::from(2);
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            emit_error("usage", 2, &format!("cannot set --jobs: {e}"));
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = error_class(&e);
            emit_error(class, code, &e.to_string());
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    }
    .resolve(cli.seed);
    match cli.cmd {
        Cmd::Prepare { data_root, out } => prepare(&cfg, &data_root, &out),
        Cmd::TrainDetector { manifest, out } => train_detector_cmd(&cfg, &manifest, &out),
        Cmd::TrainRgn {
            detector,
            manifest,
            out,
            resume,
        } => train_rgn_cmd(&cfg, &detector, &manifest, &out, resume),
        Cmd::Apply {
            rgn,
            manifest,
            in_root,
            out,
        } => apply_cmd(&cfg, &rgn, &manifest, &in_root, &out),
        Cmd::Eval {
            detectors,
            genuine,
            fakes_before,
            fakes_after,
            out,
        } => eval_cmd(&cfg, &detectors, &genuine, &fakes_before, &fakes_after, &out),
        Cmd::Report { out } => report_cmd(&out),
    }
}

fn require(path: &Path, what: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            what,
            path: path.to_path_buf(),
        })
    }
}

/// Create the output directory and drop the resolved-config snapshot into
/// it, so the run can be reproduced from its artifacts alone.
fn start_run(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.save(out.join("config_snapshot.toml"))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for item in items {
        let line = serde_json::to_string(item).expect("log entry serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Recursively collect .wav files under `dir`, sorted for determinism.
fn collect_wavs(dir: &Path, acc: &mut Vec<PathBuf>) -> Result<()> {
    let mut children: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|r| r.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    children.sort();
    for child in children {
        if child.is_dir() {
            collect_wavs(&child, acc)?;
        } else if child.extension().is_some_and(|x| x == "wav") {
            acc.push(child);
        }
    }
    Ok(())
}

fn prepare(cfg: &RunConfig, data_root: &Path, out: &Path) -> Result<()> {
    use rayon::prelude::*;

    require(data_root, "data root")?;
    start_run(cfg, out)?;
    let mut originals = Vec::new();
    for (dir_name, label) in [
        ("target_natural", Label::TargetNatural),
        ("other_natural", Label::OtherNatural),
        ("fake", Label::Fake),
    ] {
        let label_dir = data_root.join(dir_name);
        if !label_dir.exists() {
            continue;
        }
        let mut files = Vec::new();
        collect_wavs(&label_dir, &mut files)?;
        for path in files {
            let rel = path.strip_prefix(&label_dir).expect("scanned under label dir");
            // Speaker is the first directory under the label, or the file
            // stem for flat layouts.
            let speaker = match rel.components().count() {
                0 | 1 => path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "unknown".to_string()),
                _ => rel
                    .components()
                    .next()
                    .expect("at least two components")
                    .as_os_str()
                    .to_string_lossy()
                    .into_owned(),
            };
            originals.push(ManifestEntry::new(path, label, speaker));
        }
    }
    if originals.is_empty() {
        return Err(Error::EmptyManifest {
            which: "scanned data root",
        });
    }

    let copies = cfg.augment.copies_per_clip;
    let mut entries = originals.clone();
    if copies > 0 {
        let augment_seed = cfg.augment_seed();
        let codec_dir = cfg.io.codec_dir();
        let jobs: Vec<(usize, usize)> = (0..originals.len())
            .flat_map(|i| (0..copies).map(move |c| (i, c)))
            .collect();
        let augmented: Result<Vec<ManifestEntry>> = jobs
            .par_iter()
            .map(|&(i, c)| {
                let src = &originals[i];
                let w = read_wav(&src.path)?;
                let seed = seeds::step_seed(augment_seed, (i * copies + c) as u64);
                let (aug, applied) = augment_random(
                    &w,
                    &cfg.augment.menu,
                    seed,
                    codec_dir.as_deref(),
                )?;
                let stem = src
                    .path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("clip{i}"));
                let dst = out
                    .join("augmented")
                    .join(src.label.as_str())
                    .join(&src.speaker)
                    .join(format!("{stem}_a{c}.wav"));
                if let Some(parent) = dst.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                advres_core::audio::write_wav(&aug, &dst)?;
                let mut entry = ManifestEntry::new(dst, src.label, src.speaker.clone());
                entry.augment = Some(applied);
                Ok(entry)
            })
            .collect();
        entries.extend(augmented?);
    }
    let manifest_path = out.join("manifest.jsonl");
    write_manifest(&manifest_path, &entries)?;
    println!(
        "prepared {} clips ({} original, {} augmented) -> {}",
        entries.len(),
        originals.len(),
        entries.len() - originals.len(),
        manifest_path.display()
    );
    Ok(())
}

fn train_detector_cmd(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    require(manifest, "training manifest")?;
    start_run(cfg, out)?;
    let entries = read_manifest(manifest)?;
    let split = DatasetSplit::from_manifest(&entries)?;
    let (model, log) = train_detector(&split, &cfg.lfcc, &cfg.detector)?;
    let ckpt = out.join("detector.ckpt");
    model.save(&ckpt)?;
    write_jsonl(&out.join("detector_log.jsonl"), &log)?;
    let best = log
        .iter()
        .filter_map(|e| e.val_eer)
        .fold(f64::INFINITY, f64::min);
    println!(
        "trained detector on {} clips, best validation EER {:.4} -> {}",
        entries.len(),
        best,
        ckpt.display()
    );
    Ok(())
}

fn train_rgn_cmd(
    cfg: &RunConfig,
    detector: &Path,
    manifest: &Path,
    out: &Path,
    resume: bool,
) -> Result<()> {
    require(detector, "detector checkpoint")?;
    require(manifest, "fake-audio manifest")?;
    start_run(cfg, out)?;
    let det = DetectorModel::load(detector)?;
    let entries = read_manifest(manifest)?;
    let corpus = advres_core::adv_train::load_fake_corpus(
        &entries,
        det.lfcc.sample_rate,
        det.lfcc.win_len(),
    )?;
    let state_path = out.join("state.ckpt");
    let (gen, log) = if resume {
        require(&state_path, "training state checkpoint")?;
        resume_train_rgn(&state_path, &det, &corpus, &cfg.train, Some(out))?
    } else {
        let init_seed = seeds::derive_seed(cfg.seed, "rgn_init");
        let gen = ResidualGenerator::init(cfg.rgn.clone(), init_seed)?;
        train_rgn(gen, &det, &corpus, &cfg.train, Some(out))?
    };
    let ckpt = out.join("rgn.ckpt");
    gen.save(&ckpt)?;
    let last = log.last();
    println!(
        "trained generator for {} steps on {} fakes (final loss {}) -> {}",
        log.len(),
        corpus.len(),
        last.map_or("n/a".to_string(), |e| format!("{:.6}", e.l)),
        ckpt.display()
    );
    Ok(())
}

fn apply_cmd(
    cfg: &RunConfig,
    rgn: &Path,
    manifest: &Path,
    in_root: &Path,
    out: &Path,
) -> Result<()> {
    require(rgn, "generator checkpoint")?;
    require(manifest, "fake-audio manifest")?;
    start_run(cfg, out)?;
    let gen = ResidualGenerator::load(rgn)?;
    let entries = read_manifest(manifest)?;
    let logs = batch_apply(&gen, &entries, in_root, out)?;
    let mean_mt = logs.iter().map(|l| l.mean_mt).sum::<f64>() / logs.len() as f64;
    println!(
        "processed {} clips (corpus mean M_t {:.6}) -> {}",
        logs.len(),
        mean_mt,
        out.display()
    );
    Ok(())
}

/// Genuine side of an evaluation: target-speaker natural audio if the
/// manifest has any, otherwise any natural audio.
fn genuine_entries(entries: Vec<ManifestEntry>, path: &Path) -> Result<Vec<ManifestEntry>> {
    let targets: Vec<ManifestEntry> = entries
        .iter()
        .filter(|e| e.label == Label::TargetNatural)
        .cloned()
        .collect();
    if !targets.is_empty() {
        return Ok(targets);
    }
    let naturals: Vec<ManifestEntry> = entries
        .into_iter()
        .filter(|e| e.label != Label::Fake)
        .collect();
    if naturals.is_empty() {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            line: 0,
            reason: "no natural audio in genuine manifest".to_string(),
        });
    }
    Ok(naturals)
}

fn fake_entries(entries: Vec<ManifestEntry>, path: &Path) -> Result<Vec<ManifestEntry>> {
    let fakes: Vec<ManifestEntry> = entries
        .into_iter()
        .filter(|e| e.label == Label::Fake)
        .collect();
    if fakes.is_empty() {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            line: 0,
            reason: "no fake audio in manifest".to_string(),
        });
    }
    Ok(fakes)
}

fn eval_cmd(
    cfg: &RunConfig,
    detector_paths: &[PathBuf],
    genuine: &Path,
    fakes_before: &Path,
    fakes_after: &Path,
    out: &Path,
) -> Result<()> {
    for p in detector_paths {
        require(p, "detector checkpoint")?;
    }
    require(genuine, "genuine manifest")?;
    require(fakes_before, "unprocessed fake manifest")?;
    require(fakes_after, "processed fake manifest")?;
    start_run(cfg, out)?;

    let detectors: Vec<DetectorModel> = detector_paths
        .iter()
        .map(|p| DetectorModel::load(p))
        .collect::<Result<_>>()?;
    let scorers: Vec<&dyn Scorer> = detectors.iter().map(|d| d as &dyn Scorer).collect();

    let genuines = genuine_entries(read_manifest(genuine)?, genuine)?;
    let before = fake_entries(read_manifest(fakes_before)?, fakes_before)?;
    let after = fake_entries(read_manifest(fakes_after)?, fakes_after)?;
    if before.len() != after.len() {
        return Err(Error::Manifest {
            path: fakes_after.to_path_buf(),
            line: 0,
            reason: format!(
                "before/after manifests must pair up ({} vs {} fakes)",
                before.len(),
                after.len()
            ),
        });
    }

    let (eer_before, eer_after) = eer_delta(scorers[0], &genuines, &before, &after)?;
    let dsr = compute_dsr(&scorers, &after, &genuines)?;

    // Per-utterance modification split, then spectrogram artifacts for the
    // first few pairs.
    let mut speech_means = Vec::new();
    let mut silence_means = Vec::new();
    let spec_dir = out.join("spectrograms");
    std::fs::create_dir_all(&spec_dir).map_err(|e| Error::io(&spec_dir, e))?;
    for (i, (b, a)) in before.iter().zip(&after).enumerate() {
        let wb = read_wav(&b.path)?;
        let wa = read_wav(&a.path)?;
        if wb.len() != wa.len() {
            return Err(Error::Manifest {
                path: a.path.clone(),
                line: 0,
                reason: format!(
                    "processed clip length {} does not match original {}",
                    wa.len(),
                    wb.len()
                ),
            });
        }
        let residual = Waveform::new(
            wa.samples()
                .iter()
                .zip(wb.samples())
                .map(|(x, y)| x - y)
                .collect(),
            wb.sample_rate(),
        );
        let (speech, silence) = silence_speech_mt(&wb, &residual, cfg.eval.vad_threshold_db)?;
        speech_means.extend(speech);
        silence_means.extend(silence);
        if i < cfg.eval.spectrogram_pairs {
            spectrogram_diff(&wb, &wa, &spec_dir.join(format!("pair{i}")))?;
        }
    }
    let mean_of = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);

    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        eer_before,
        eer_after,
        dsr: dsr.dsr,
        wrong: dsr.wrong,
        evaluated: dsr.evaluated,
        n_detectors: dsr.n_detectors,
        mean_mt_speech: mean_of(&speech_means),
        mean_mt_silence: mean_of(&silence_means),
        excluded: dsr.excluded.clone(),
        a_counts_fakes_only: true,
    };
    report.save(out.join("report.json"))?;
    write_score_csv(out.join("scores.csv"), &dsr.detector_names, &dsr.table)?;
    println!(
        "eer {:.4} -> {:.4}, dsr {:.4} (W={}, A={}, N={}) -> {}",
        eer_before,
        eer_after,
        dsr.dsr,
        dsr.wrong,
        dsr.evaluated,
        dsr.n_detectors,
        out.join("report.json").display()
    );
    Ok(())
}

fn report_cmd(out: &Path) -> Result<()> {
    let path = out.join("report.json");
    require(&path, "evaluation report")?;
    let report = EvalReport::load(&path)?;
    let absent = "absent".to_string();
    println!("evaluation report (schema v{})", report.schema_version);
    println!("  eer_before       {:.4}", report.eer_before);
    println!("  eer_after        {:.4}", report.eer_after);
    println!(
        "  dsr              {:.4}  (W={}, A={}, N={})",
        report.dsr, report.wrong, report.evaluated, report.n_detectors
    );
    println!(
        "  mean_Mt_speech   {}",
        report
            .mean_mt_speech
            .map_or(absent.clone(), |v| format!("{v:.6}"))
    );
    println!(
        "  mean_Mt_silence  {}",
        report
            .mean_mt_silence
            .map_or(absent, |v| format!("{v:.6}"))
    );
    println!("  excluded files   {}", report.excluded.len());
    Ok(())
}

// Keep clap's derive assumptions checked at test time.
#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
