use std::collections::HashMap;
use std::path::PathBuf;

use clap::Args;
use roadsight_core::annotation::{
    parse_yolo_txt, read_manifest, DatasetManifest, ImageRecord, Split,
};
use roadsight_core::eval::{
    self, format_table, macro_average, parse_detections, EvalConfig, MetricRow,
};
use serde::{Deserialize, Serialize};

use super::dataset::label_name;
use super::emit;
use crate::config::{check_unit, load_classes};
use crate::error::{read_text, write_text, CliError, Result};
use crate::Context;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Manifest CSV; rows without a split count as test images.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory with one YOLO `.txt` label file per image; a missing file
    /// means the image has no objects.
    #[arg(long)]
    pub labels: PathBuf,
    /// Detections, one `image_id class confidence cx cy w h` per line.
    #[arg(long)]
    pub detections: PathBuf,
    /// Report directory; created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, env = "ROADSIGHT_CLASSES")]
    pub classes: Option<PathBuf>,
    /// IoU threshold for the confusion matrix [default: 0.5].
    #[arg(long, env = "ROADSIGHT_IOU")]
    pub iou: Option<f64>,
    /// Confidence threshold for the confusion matrix [default: 0.25].
    #[arg(long, env = "ROADSIGHT_CONFIDENCE")]
    pub confidence: Option<f64>,
    /// Report P and R at this confidence instead of the best-F1 point.
    #[arg(long, env = "ROADSIGHT_FIXED_CONFIDENCE")]
    pub fixed_confidence: Option<f64>,
}

pub fn evaluate(ctx: &Context, args: EvaluateArgs) -> Result<()> {
    let classes = load_classes(args.classes.as_deref(), &ctx.file)?;
    let defaults = EvalConfig::default();
    let config = EvalConfig {
        confusion_iou: check_unit(
            "--iou",
            args.iou.or(ctx.file.iou).unwrap_or(defaults.confusion_iou),
        )?,
        confusion_confidence: check_unit(
            "--confidence",
            args.confidence
                .or(ctx.file.confidence)
                .unwrap_or(defaults.confusion_confidence),
        )?,
        fixed_confidence: args
            .fixed_confidence
            .or(ctx.file.fixed_confidence)
            .map(|c| check_unit("--fixed-confidence", c))
            .transpose()?,
    };

    let (seed, rows) = read_manifest(&read_text(&args.manifest)?)
        .map_err(|e| CliError::annotation(&args.manifest, e))?;
    let mut records = Vec::new();
    for row in rows
        .into_iter()
        .filter(|r| r.split.unwrap_or(Split::Test) == Split::Test)
    {
        let label_path = args.labels.join(label_name(&row.image_id));
        let record = match std::fs::read_to_string(&label_path) {
            Ok(text) => parse_yolo_txt(&text, &row.image_id, row.size, &classes)
                .map_err(|e| CliError::annotation(&label_path, e))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                log::info!("{}: no label file, treating as empty", row.image_id);
                ImageRecord::new(row.image_id, row.size)
            }
            Err(e) => return Err(CliError::io(&label_path, e)),
        };
        records.push(record);
    }
    let sizes: HashMap<String, _> = records
        .iter()
        .map(|r| (r.image_id.clone(), r.size))
        .collect();
    let manifest = DatasetManifest {
        seed,
        splits: vec![Split::Test; records.len()],
        records,
    };
    let detections = parse_detections(&read_text(&args.detections)?, &sizes, classes.len())
        .map_err(|e| CliError::eval(&args.detections, e))?;
    let report = eval::evaluate(&detections, &manifest, &classes, &config)
        .map_err(|e| CliError::eval(&args.detections, e))?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let out = |name: &str, text: &str| write_text(args.out_dir.join(name), text);
    out("summary.csv", &report.summary_csv())?;
    out("confusion.csv", &report.confusion_csv(false))?;
    out("confusion_normalized.csv", &report.confusion_csv(true))?;
    out("pr_curves.csv", &report.pr_csv())?;
    out(
        "report.json",
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;

    #[derive(Serialize)]
    struct Summary<'a> {
        images: usize,
        all: &'a MetricRow,
        classes: Vec<(&'a str, &'a MetricRow)>,
    }
    let summary = Summary {
        images: report.images,
        all: &report.all,
        classes: report
            .classes
            .iter()
            .map(|c| (c.name.as_str(), &c.metrics))
            .collect(),
    };
    emit(ctx, &summary, || report.table());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// CSV with columns class, instances, P, R, mAP50, mAP50-95. A row named
    /// `all` is ignored; the average is recomputed.
    #[arg(long)]
    pub metrics: PathBuf,
}

#[derive(Debug, Deserialize)]
struct MetricLine {
    #[serde(alias = "Class")]
    class: String,
    #[serde(alias = "Instances")]
    instances: u64,
    #[serde(alias = "P")]
    precision: f64,
    #[serde(alias = "R")]
    recall: f64,
    #[serde(alias = "mAP50")]
    ap50: f64,
    #[serde(alias = "mAP50-95")]
    ap50_95: f64,
}

pub fn report(ctx: &Context, args: ReportArgs) -> Result<()> {
    let text = read_text(&args.metrics)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut lines = Vec::new();
    for row in reader.deserialize::<MetricLine>() {
        let row = row.map_err(|e| CliError::Parse(format!("{}: {e}", args.metrics.display())))?;
        if !row.class.eq_ignore_ascii_case("all") {
            lines.push(row);
        }
    }
    let rows: Vec<MetricRow> = lines
        .iter()
        .map(|l| MetricRow {
            instances: l.instances,
            precision: l.precision,
            recall: l.recall,
            ap50: l.ap50,
            ap50_95: l.ap50_95,
        })
        .collect();
    let all = macro_average(&rows).map_err(|e| CliError::eval(&args.metrics, e))?;
    let named: Vec<(&str, &MetricRow)> =
        lines.iter().map(|l| l.class.as_str()).zip(&rows).collect();

    #[derive(Serialize)]
    struct Summary<'a> {
        all: &'a MetricRow,
        classes: &'a [(&'a str, &'a MetricRow)],
    }
    emit(
        ctx,
        &Summary {
            all: &all,
            classes: &named,
        },
        || format_table(&all, &named),
    );
    Ok(())
}
