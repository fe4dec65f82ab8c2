use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use roadsight_core::annotation::{
    parse_voc_with_warnings, read_manifest, split_dataset, write_manifest, write_manifest_rows,
    write_yolo_txt, AnnotationError, ImageRecord, ManifestRow, Split, SplitFractions,
};
use serde::Serialize;

use super::emit;
use crate::config::{load_classes, resolve_seed};
use crate::error::{read_text, write_text, CliError, Result};
use crate::Context;

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Directory of VOC `.xml` files.
    #[arg(long)]
    pub voc_dir: PathBuf,
    /// Where `<image>.txt` labels and `manifest.csv` go; created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Class list, one name per line [default: the 15 vehicle classes].
    #[arg(long, env = "ROADSIGHT_CLASSES")]
    pub classes: Option<PathBuf>,
    /// Skip documents that fail to parse instead of stopping.
    #[arg(long)]
    pub skip_bad: bool,
}

#[derive(Debug, Serialize)]
struct Failure {
    file: String,
    error: String,
}

#[derive(Debug, Default, Serialize)]
struct ConvertSummary {
    converted: usize,
    failed: usize,
    warnings: usize,
    unknown_classes: BTreeSet<String>,
    failures: Vec<Failure>,
}

/// Label file name for an image id: its file stem plus `.txt`.
pub fn label_name(image_id: &str) -> String {
    let stem = Path::new(image_id)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image_id.to_string());
    format!("{stem}.txt")
}

pub fn convert(ctx: &Context, args: ConvertArgs) -> Result<()> {
    let classes = load_classes(args.classes.as_deref(), &ctx.file)?;
    let entries = std::fs::read_dir(&args.voc_dir).map_err(|e| CliError::io(&args.voc_dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    files.sort();

    let mut summary = ConvertSummary::default();
    let mut records: Vec<ImageRecord> = Vec::new();
    for path in &files {
        let xml = read_text(path)?;
        match parse_voc_with_warnings(&xml, &classes) {
            Ok((record, warnings)) => {
                for w in &warnings {
                    log::warn!(
                        "{}: object {}: {}",
                        path.display(),
                        w.object_index,
                        w.message
                    );
                }
                summary.warnings += warnings.len();
                records.push(record);
            }
            Err(e) => {
                if let AnnotationError::UnknownClass(name) = &e {
                    summary.unknown_classes.insert(name.clone());
                }
                if !args.skip_bad {
                    return Err(CliError::annotation(path, e));
                }
                log::warn!("skipping {}: {e}", path.display());
                summary.failures.push(Failure {
                    file: path.display().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    summary.failed = summary.failures.len();

    let mut names: BTreeMap<String, &str> = BTreeMap::new();
    for r in &records {
        if let Some(other) = names.insert(label_name(&r.image_id), &r.image_id) {
            return Err(CliError::Data(format!(
                "images {other:?} and {:?} map to the same label file",
                r.image_id
            )));
        }
    }

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    for r in &records {
        write_text(
            args.out_dir.join(label_name(&r.image_id)),
            &write_yolo_txt(r),
        )?;
    }
    let rows: Vec<ManifestRow> = records
        .iter()
        .map(|r| ManifestRow {
            image_id: r.image_id.clone(),
            size: r.size,
            split: None,
        })
        .collect();
    let manifest =
        write_manifest_rows(None, &rows).map_err(|e| CliError::annotation(&args.out_dir, e))?;
    write_text(args.out_dir.join("manifest.csv"), &manifest)?;
    summary.converted = records.len();

    emit(ctx, &summary, || {
        let mut s = format!(
            "converted {}, failed {}\n",
            summary.converted, summary.failed
        );
        if !summary.unknown_classes.is_empty() {
            let names: Vec<&str> = summary.unknown_classes.iter().map(String::as_str).collect();
            let _ = writeln!(s, "unknown classes: {}", names.join(", "));
        }
        for f in &summary.failures {
            let _ = writeln!(s, "  {}: {}", f.file, f.error);
        }
        s
    });
    Ok(())
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Manifest CSV (`image_id,width,height[,split]`).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output manifest with the split column filled in.
    #[arg(long)]
    pub out: PathBuf,
    /// Shuffle seed; required when CI is set.
    #[arg(long, env = "ROADSIGHT_SEED")]
    pub seed: Option<u64>,
    /// Train, valid and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub fractions: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SplitSummary {
    seed: u64,
    train: usize,
    valid: usize,
    test: usize,
}

pub fn split(ctx: &Context, args: SplitArgs) -> Result<()> {
    let seed = resolve_seed(args.seed, &ctx.file)?;
    let fractions = SplitFractions::new(args.fractions[0], args.fractions[1], args.fractions[2])
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (_, rows) = read_manifest(&read_text(&args.manifest)?)
        .map_err(|e| CliError::annotation(&args.manifest, e))?;
    let records = rows
        .into_iter()
        .map(|r| ImageRecord::new(r.image_id, r.size))
        .collect();
    let manifest = split_dataset(records, fractions, seed)
        .map_err(|e| CliError::annotation(&args.manifest, e))?;
    write_text(
        &args.out,
        &write_manifest(&manifest).map_err(|e| CliError::annotation(&args.out, e))?,
    )?;
    let summary = SplitSummary {
        seed,
        train: manifest.count(Split::Train),
        valid: manifest.count(Split::Valid),
        test: manifest.count(Split::Test),
    };
    emit(ctx, &summary, || {
        format!(
            "train {} / valid {} / test {} (seed {seed})\n",
            summary.train, summary.valid, summary.test
        )
    });
    Ok(())
}
