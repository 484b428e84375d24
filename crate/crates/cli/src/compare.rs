use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use pmb_nll::detr::{
    mb_matching_cost_constant_scale, mb_matching_cost_full, optimal_permutation, DetrClassTerm, DetrCost, Permutation,
};
use pmb_nll::io::report::ReportFormat;
use pmb_nll::{BernoulliComponent, Error, GroundTruthObject};
use rayon::prelude::*;
use serde::Serialize;

use crate::evaluate::load;
use crate::{thread_pool, Failure, InputArgs};

#[derive(Args)]
pub(crate) struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Laplace scale assumed by the constant-scale MB cost.
    #[arg(long, default_value_t = 0.2)]
    s: f64,
    #[arg(long, default_value_t = 2.0)]
    lambda_iou: f64,
    #[arg(long, default_value_t = 5.0)]
    lambda_l1: f64,
    /// MB cost: one shared scale `s`, or each prediction's own box density.
    #[arg(long, value_enum, default_value_t = MbCost::Constant)]
    mb_cost: MbCost,
    /// DETR class term: `-r p` (prob) or `-log(r p)` with `-log(1-r)` for background (log).
    #[arg(long, value_enum, default_value_t = ClassArg::Prob)]
    detr_class: ClassArg,
    /// Report path; `.json` selects JSON, anything else CSV. CSV output also
    /// writes `<stem>_disagreements.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MbCost {
    Constant,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Prob,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Status {
    Agree,
    Disagree,
    /// No objects, so there is nothing to match.
    Vacuous,
    /// Fewer predictions than objects.
    SkippedDeficit,
    /// A cost of +inf left no complete matching.
    Infeasible,
}

#[derive(Serialize)]
struct ImageRow {
    image_id: u64,
    status: Status,
    objects: usize,
    predictions: usize,
    detr_cost: Option<f64>,
    mb_cost: Option<f64>,
    /// MB cost of the DETR matching; equal to `mb_cost` when the DETR choice
    /// is also MB-optimal.
    mb_cost_of_detr: Option<f64>,
    co_optimal: Option<bool>,
}

#[derive(Serialize)]
struct Disagreement {
    image_id: u64,
    object: usize,
    class_id: usize,
    detr_prediction: usize,
    mb_prediction: usize,
    detr_r: f64,
    mb_r: f64,
    detr_l1: f64,
    mb_l1: f64,
}

#[derive(Serialize)]
struct Summary {
    images: usize,
    compared: usize,
    agree: usize,
    disagree: usize,
    co_optimal: usize,
    vacuous: usize,
    skipped_deficit: usize,
    infeasible: usize,
}

const CO_OPTIMAL_TOLERANCE: f64 = 1e-9;

struct Comparison {
    row: ImageRow,
    disagreements: Vec<Disagreement>,
}

fn row(image_id: u64, status: Status, objects: usize, predictions: usize) -> ImageRow {
    ImageRow {
        image_id,
        status,
        objects,
        predictions,
        detr_cost: None,
        mb_cost: None,
        mb_cost_of_detr: None,
        co_optimal: None,
    }
}

impl CompareArgs {
    fn detr_cost(&self) -> DetrCost {
        DetrCost {
            lambda_iou: self.lambda_iou,
            lambda_l1: self.lambda_l1,
            class_term: match self.detr_class {
                ClassArg::Prob => DetrClassTerm::Probability,
                ClassArg::Log => DetrClassTerm::LogProbability,
            },
        }
    }

    fn mb(&self, gt: Option<&GroundTruthObject>, pred: &BernoulliComponent) -> pmb_nll::Result<f64> {
        match self.mb_cost {
            MbCost::Constant => mb_matching_cost_constant_scale(gt, pred, self.s),
            MbCost::Full => mb_matching_cost_full(gt, pred),
        }
    }

    fn compare(
        &self,
        image_id: u64,
        preds: &[BernoulliComponent],
        gts: &[GroundTruthObject],
    ) -> pmb_nll::Result<Comparison> {
        let (n, m) = (gts.len(), preds.len());
        let done = |status| Comparison {
            row: row(image_id, status, n, m),
            disagreements: Vec::new(),
        };
        if n == 0 {
            return Ok(done(Status::Vacuous));
        }
        if m < n {
            return Ok(done(Status::SkippedDeficit));
        }
        let detr = self.detr_cost();
        let perms = optimal_permutation(|g, p| detr.cost(g, p), preds, gts)
            .and_then(|d| Ok((d, optimal_permutation(|g, p| self.mb(g, p), preds, gts)?)));
        let (d, b): (Permutation, Permutation) = match perms {
            Ok(p) => p,
            Err(Error::Infeasible) => return Ok(done(Status::Infeasible)),
            Err(e) => return Err(e),
        };

        let mut mb_of_detr = 0.0;
        for (p, g) in preds.iter().zip(&d.pred_to_gt) {
            mb_of_detr += self.mb(g.map(|j| &gts[j]), p)?;
        }
        let (dg, bg) = (d.gt_to_pred(n), b.gt_to_pred(n));
        let disagreements: Vec<Disagreement> = (0..n)
            .filter(|&j| dg[j] != bg[j])
            .map(|j| {
                let (dp, bp) = (&preds[dg[j]], &preds[bg[j]]);
                Disagreement {
                    image_id,
                    object: j,
                    class_id: gts[j].class_id,
                    detr_prediction: dg[j],
                    mb_prediction: bg[j],
                    detr_r: dp.existence(),
                    mb_r: bp.existence(),
                    detr_l1: gts[j].bbox.l1_distance(dp.box_dist().mean()),
                    mb_l1: gts[j].bbox.l1_distance(bp.box_dist().mean()),
                }
            })
            .collect();
        let co_optimal = (mb_of_detr - b.total_cost).abs() <= CO_OPTIMAL_TOLERANCE * b.total_cost.abs().max(1.0);
        let status = if disagreements.is_empty() {
            Status::Agree
        } else {
            Status::Disagree
        };
        Ok(Comparison {
            row: ImageRow {
                detr_cost: Some(d.total_cost),
                mb_cost: Some(b.total_cost),
                mb_cost_of_detr: Some(mb_of_detr),
                co_optimal: Some(co_optimal),
                ..row(image_id, status, n, m)
            },
            disagreements,
        })
    }
}

pub(crate) fn run(args: &CompareArgs) -> Result<(), Failure> {
    if !(args.s > 0.0 && args.s.is_finite()) {
        return Err(Failure::Data(format!(
            "--s must be positive and finite, got {}",
            args.s
        )));
    }
    let (dataset, preds) = load(&args.input)?;
    let include_crowd = args.input.include_crowd;
    let results: Vec<Comparison> = thread_pool(args.input.jobs)?.install(|| {
        dataset
            .images
            .par_iter()
            .map(|im| {
                let p = preds.get(&im.id).map_or(&[][..], Vec::as_slice);
                args.compare(im.id, p, &im.objects(include_crowd))
                    .map_err(|e| Failure::in_image(im.id, e))
            })
            .collect::<Result<_, _>>()
    })?;

    let rows: Vec<&ImageRow> = results.iter().map(|c| &c.row).collect();
    let listing: Vec<&Disagreement> = results.iter().flat_map(|c| &c.disagreements).collect();
    for r in rows.iter().filter(|r| r.status == Status::SkippedDeficit) {
        eprintln!(
            "warning: image {} skipped, {} predictions for {} objects",
            r.image_id, r.predictions, r.objects
        );
    }
    let count = |s: Status| rows.iter().filter(|r| r.status == s).count();
    let summary = Summary {
        images: rows.len(),
        compared: count(Status::Agree) + count(Status::Disagree),
        agree: count(Status::Agree),
        disagree: count(Status::Disagree),
        co_optimal: rows.iter().filter(|r| r.co_optimal == Some(true)).count(),
        vacuous: count(Status::Vacuous),
        skipped_deficit: count(Status::SkippedDeficit),
        infeasible: count(Status::Infeasible),
    };
    write(&args.out, &rows, &listing, &summary)?;
    println!(
        "{}/{} compared images agree ({} vacuous, {} skipped, {} infeasible)",
        summary.agree, summary.compared, summary.vacuous, summary.skipped_deficit, summary.infeasible
    );
    Ok(())
}

/// Path of the disagreement listing written next to a CSV report.
fn listing_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_disagreements.csv"))
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), Failure> {
    let err = |e: csv::Error| Failure::Io(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(err)?;
    if rows.is_empty() {
        w.write_record(header).map_err(err)?;
    }
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, rows: &[&ImageRow], listing: &[&Disagreement], summary: &Summary) -> Result<(), Failure> {
    match ReportFormat::from_path(path) {
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                rows: &'a [&'a ImageRow],
                disagreements: &'a [&'a Disagreement],
                summary: &'a Summary,
            }
            let text = serde_json::to_string_pretty(&Doc {
                rows,
                disagreements: listing,
                summary,
            })
            .map_err(|e| Failure::Data(e.to_string()))?;
            std::fs::write(path, text + "\n").map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
        }
        ReportFormat::Csv => {
            write_csv(
                path,
                &[
                    "image_id",
                    "status",
                    "objects",
                    "predictions",
                    "detr_cost",
                    "mb_cost",
                    "mb_cost_of_detr",
                    "co_optimal",
                ],
                rows,
            )?;
            write_csv(
                &listing_path(path),
                &[
                    "image_id",
                    "object",
                    "class_id",
                    "detr_prediction",
                    "mb_prediction",
                    "detr_r",
                    "mb_r",
                    "detr_l1",
                    "mb_l1",
                ],
                listing,
            )
        }
    }
}
