use std::path::Path;

use pmb_nll::evaluate::{evaluate_image, ImageResult};
use pmb_nll::io::coco::{read_ground_truth, Dataset};
use pmb_nll::io::predictions::{read_predictions, Predictions};
use pmb_nll::io::report::{aggregate, write_report, Histograms, ImageRow, ReportFormat, Term};
use rayon::prelude::*;
use serde::Serialize;

use crate::{thread_pool, EvaluateArgs, Failure, InputArgs};

/// Ground truth plus predictions keyed by image. Predictions for an image the
/// ground truth does not list are rejected.
pub(crate) fn load(input: &InputArgs) -> Result<(Dataset, Predictions), Failure> {
    let dataset = read_ground_truth(&input.ground_truth)?;
    let preds = read_predictions(&input.predictions, &dataset.labels, input.family.into())?;
    if let Some(id) = preds.keys().find(|id| dataset.image(**id).is_none()) {
        return Err(Failure::Data(format!(
            "image {id}: predictions refer to an image absent from {}",
            input.ground_truth.display()
        )));
    }
    Ok((dataset, preds))
}

pub(crate) fn run(args: &EvaluateArgs, terms: bool) -> Result<(), Failure> {
    let (dataset, preds) = load(&args.input)?;
    let opts = args.options();
    let include_crowd = args.input.include_crowd;
    let results: Vec<ImageResult> = thread_pool(args.input.jobs)?.install(|| {
        dataset
            .images
            .par_iter()
            .map(|im| {
                let p = preds.get(&im.id).map_or(&[][..], Vec::as_slice);
                evaluate_image(im.id, p, &im.objects(include_crowd), &opts).map_err(|e| Failure::in_image(im.id, e))
            })
            .collect::<Result<_, _>>()
    })?;

    let format = ReportFormat::from_path(&args.out);
    let rows: Vec<ImageRow> = results.iter().map(ImageRow::from).collect();
    let agg = aggregate(&rows, args.exclude_infinite);
    if terms {
        write_terms(&args.out, format, &results)?;
    } else {
        write_report(&args.out, format, &rows, &agg)?;
    }
    if let Some(path) = &args.histograms {
        let mut h = Histograms::new(args.bins);
        for r in &results {
            h.add_image(r);
        }
        h.write_csv(path)?;
    }

    print!("{} images, mean NLL {:.4}", agg.images, agg.mean_nll);
    if agg.infinite > 0 {
        print!(
            ", {} infinite{}",
            agg.infinite,
            if args.exclude_infinite { " (excluded)" } else { "" }
        );
    }
    println!();
    Ok(())
}

/// One term of a best-assignment NLL.
#[derive(Serialize)]
struct TermRow {
    image_id: u64,
    term: &'static str,
    prediction: Option<usize>,
    object: Option<usize>,
    value: f64,
    /// Ground-truth box area, or the prediction's box-mean area for false
    /// detections.
    area: f64,
}

fn term_rows(results: &[ImageResult]) -> Vec<TermRow> {
    let mut out = Vec::new();
    for r in results {
        let Some(c) = &r.contributions else { continue };
        let row = |term: Term, prediction, object, value, area| TermRow {
            image_id: r.image_id,
            term: term.name(),
            prediction,
            object,
            value,
            area,
        };
        for m in &c.matched {
            let area = r.object_areas[m.object];
            out.push(row(
                Term::Regression,
                Some(m.bernoulli),
                Some(m.object),
                m.regression,
                area,
            ));
            out.push(row(
                Term::Classification,
                Some(m.bernoulli),
                Some(m.object),
                m.classification,
                area,
            ));
        }
        for f in &c.false_detections {
            out.push(row(
                Term::FalseDetection,
                Some(f.bernoulli),
                None,
                f.value,
                r.bernoulli_areas[f.bernoulli],
            ));
        }
        for m in &c.missed {
            out.push(row(
                Term::MissedMatch,
                None,
                Some(m.object),
                m.value,
                r.object_areas[m.object],
            ));
        }
    }
    out
}

fn write_terms(path: &Path, format: ReportFormat, results: &[ImageResult]) -> Result<(), Failure> {
    let rows = term_rows(results);
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", path.display()));
    match format {
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(&rows).map_err(|e| Failure::Data(e.to_string()))?;
            std::fs::write(path, text + "\n").map_err(io)
        }
        ReportFormat::Csv => {
            let csv_err = |e: csv::Error| Failure::Io(format!("{}: {e}", path.display()));
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_path(path)
                .map_err(csv_err)?;
            if rows.is_empty() {
                w.write_record(["image_id", "term", "prediction", "object", "value", "area"])
                    .map_err(csv_err)?;
            }
            for r in &rows {
                w.serialize(r).map_err(csv_err)?;
            }
            w.flush().map_err(io)
        }
    }
}
