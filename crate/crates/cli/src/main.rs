//! `pmb-nll`: score probabilistic detections against COCO ground truth.

mod compare;
mod evaluate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pmb_nll::evaluate::EvalOptions;
use pmb_nll::io::filter::{NmsMode, DEFAULT_NMS_IOU, DEFAULT_TOP_K};
use pmb_nll::io::predictions::RequestedFamily;
use pmb_nll::ppp::DEFAULT_R_THRESHOLD;
use pmb_nll::scoring::DEFAULT_Q;
use pmb_nll::selftest::{run_selftest, Fault, SelftestConfig, DEFAULT_ITERATIONS, DEFAULT_SEED};

const EXIT_PROPERTY: u8 = 3;
const EXIT_DATA: u8 = 65;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(
    name = "pmb-nll",
    version,
    about = "Poisson multi-Bernoulli NLL for probabilistic object detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every image and write per-image rows plus an aggregate.
    Evaluate(EvaluateArgs),
    /// Write every per-prediction and per-object term of the best assignment.
    Decompose(EvaluateArgs),
    /// Compare DETR and MB matchings image by image.
    CompareDetr(compare::CompareArgs),
    /// Run the seeded property suites.
    Selftest(SelftestArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// COCO annotation file.
    ground_truth: PathBuf,
    /// Prediction file, or a directory of them.
    predictions: PathBuf,
    /// Box family predictions are converted to.
    #[arg(long, value_enum, default_value_t = FamilyArg::Laplace)]
    family: FamilyArg,
    /// Keep crowd annotations as ground truth.
    #[arg(long)]
    include_crowd: bool,
    /// Worker threads; 0 picks one per core.
    #[arg(long, env = "PMB_NLL_JOBS", default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Clone)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of best assignments summed.
    #[arg(long, default_value_t = DEFAULT_Q)]
    q: usize,
    /// Detections with r below this go to the Poisson intensity.
    #[arg(long, default_value_t = DEFAULT_R_THRESHOLD)]
    r_threshold: f64,
    #[arg(long, value_enum, default_value_t = NmsArg::ClassWise)]
    nms: NmsArg,
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    nms_iou: f64,
    /// Detections kept per image after NMS, highest r first.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    /// Clamp r to 1 - EPS so certain detections can be scored.
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-12", value_name = "EPS")]
    clamp_r: Option<f64>,
    /// Leave images with infinite NLL out of the aggregate means.
    #[arg(long)]
    exclude_infinite: bool,
    /// Report path; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write decomposition histograms to this CSV file.
    #[arg(long)]
    histograms: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    bins: usize,
}

impl EvaluateArgs {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            q: self.q,
            r_threshold: self.r_threshold,
            nms: self.nms.into(),
            nms_iou: self.nms_iou,
            top_k: self.top_k,
            clamp_r: self.clamp_r,
        }
    }
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Corrupt the computation to confirm the suites can fail.
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
    /// Write the outcomes as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Laplace,
    Gaussian,
    Native,
}

impl From<FamilyArg> for RequestedFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Laplace => RequestedFamily::Laplace,
            FamilyArg::Gaussian => RequestedFamily::Gaussian,
            FamilyArg::Native => RequestedFamily::Native,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NmsArg {
    ClassWise,
    ClassAgnostic,
    Off,
}

impl From<NmsArg> for NmsMode {
    fn from(n: NmsArg) -> Self {
        match n {
            NmsArg::ClassWise => NmsMode::ClassWise,
            NmsArg::ClassAgnostic => NmsMode::ClassAgnostic,
            NmsArg::Off => NmsMode::Off,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    CorruptCostMatrix,
}

/// A failed run and the exit status it maps to.
#[derive(Debug)]
pub(crate) enum Failure {
    Data(String),
    Io(String),
    Property(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => EXIT_DATA,
            Failure::Io(_) => EXIT_IO,
            Failure::Property(_) => EXIT_PROPERTY,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Data(m) | Failure::Io(m) | Failure::Property(m) => m,
        }
    }

    pub(crate) fn in_image(image_id: u64, e: pmb_nll::Error) -> Self {
        Failure::from(e).map(|m| format!("image {image_id}: {m}"))
    }

    fn map(self, f: impl FnOnce(String) -> String) -> Self {
        match self {
            Failure::Data(m) => Failure::Data(f(m)),
            Failure::Io(m) => Failure::Io(f(m)),
            Failure::Property(m) => Failure::Property(f(m)),
        }
    }
}

impl From<pmb_nll::Error> for Failure {
    fn from(e: pmb_nll::Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Io(format!("cannot start worker threads: {e}")))
}

fn selftest(args: &SelftestArgs) -> Result<(), Failure> {
    let report = run_selftest(&SelftestConfig {
        seed: args.seed,
        iterations: args.iterations,
        fault: args
            .inject_fault
            .map(|FaultArg::CorruptCostMatrix| Fault::CorruptCostMatrix),
    })?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for o in &report.outcomes {
        let status = if o.passed() { "pass" } else { "FAIL" };
        println!("{status} {} ({} checked, {} failed)", o.name, o.checked, o.failures);
        if let Some(f) = &o.first_failure {
            println!("     first failure: {f}");
        }
    }
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&report).expect("selftest report serialises");
        std::fs::write(path, text + "\n").map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.outcomes.iter().filter(|o| !o.passed()).map(|o| o.name).collect();
        Err(Failure::Property(format!("failed properties: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Evaluate(args) => evaluate::run(args, false),
        Command::Decompose(args) => evaluate::run(args, true),
        Command::CompareDetr(args) => compare::run(args),
        Command::Selftest(args) => selftest(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
