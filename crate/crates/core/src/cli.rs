//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgGroup, Parser};
use ndarray::Array1;

use crate::eval::{accuracy, model_count, nmi};
use crate::io::{
    emit_summary, emit_trace, load_binary, load_csv, load_labels, standardize, synth_generate,
    DataError, DatasetBundle, RunMetrics, Summary, SynthSpec, MAGIC,
};
use crate::model::Hyperparams;
use crate::optimizers::Optimizer;
use crate::trainer::{default_minibatch, train, StickPrior, TrainConfig};

/// `--a0` value: the literal `N` (dataset size) or a positive real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum A0 {
    DatasetSize,
    Value(f64),
}

impl FromStr for A0 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "N" {
            return Ok(A0::DatasetSize);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(A0::Value(v)),
            _ => Err(format!("expected `N` or a positive real, got {s:?}")),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dpm-sga",
    version,
    about = "Cluster data with a truncated Dirichlet process Gaussian mixture"
)]
#[command(group(ArgGroup::new("source").required(true).args(["features", "synth"])))]
pub struct Args {
    /// Feature matrix: CSV, or the DPMF binary format (detected by magic bytes)
    #[arg(long, value_name = "PATH")]
    pub features: Option<PathBuf>,

    /// Synthetic blobs, e.g. "k=5,d=8,n=2000,sep=10,spread=1[,seed=S][,weights=a:b:..]"
    #[arg(long, value_name = "SPEC")]
    pub synth: Option<String>,

    /// Ground-truth labels, one integer per line
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,

    /// Skip the first line of a CSV feature file
    #[arg(long)]
    pub header: bool,

    #[arg(long, default_value = "fisher", value_parser = Optimizer::from_str)]
    pub optimizer: Optimizer,

    #[arg(long, default_value_t = 50)]
    pub trunc_k: usize,

    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,

    #[arg(long, default_value_t = 0.9)]
    pub alpha: f64,

    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,

    #[arg(long, default_value_t = 1e-2)]
    pub lambda0: f64,

    /// Beta prior concentration; `N` uses the number of samples
    #[arg(long, default_value = "N", value_parser = A0::from_str)]
    pub a0: A0,

    /// How `a0` enters minibatch gradients: shared by the whole dataset, or
    /// carried in full by every sample
    #[arg(long, default_value = "dataset", value_parser = StickPrior::from_str)]
    pub stick_prior: StickPrior,

    /// Pruning threshold on stick lengths
    #[arg(long, default_value_t = 1e-3)]
    pub thr: f64,

    /// Minibatch size [default: min(N, 20 * expected classes)]
    #[arg(long)]
    pub minibatch: Option<usize>,

    #[arg(long, default_value_t = 60)]
    pub iters: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Standardize every feature to zero mean and unit variance first
    #[arg(long)]
    pub standardize: bool,

    /// Rerun with seeds seed, seed+1, ... and report medians
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,

    /// Per-iteration trace CSV (first repeat)
    #[arg(long, value_name = "PATH")]
    pub trace_out: Option<PathBuf>,

    /// JSON run summary
    #[arg(long, value_name = "PATH")]
    pub summary_out: Option<PathBuf>,

    /// Write zero for all timings so outputs are byte-reproducible
    #[arg(long)]
    pub no_timings: bool,
}

fn load(args: &Args) -> Result<DatasetBundle, DataError> {
    let mut data = if let Some(path) = &args.features {
        let mut head = [0u8; 4];
        let is_binary = std::fs::File::open(path)
            .and_then(|mut f| std::io::Read::read_exact(&mut f, &mut head))
            .map(|_| head == MAGIC)
            .unwrap_or(false);
        if is_binary {
            load_binary(path)?
        } else {
            load_csv(path, args.header)?
        }
    } else {
        let text = args.synth.as_deref().expect("source group is required");
        let mut spec: SynthSpec = text.parse()?;
        if !text.split(',').any(|p| p.trim().starts_with("seed=")) {
            spec.seed = args.seed;
        }
        synth_generate(&spec)?.0
    };
    if let Some(path) = &args.labels {
        data = data.with_labels(load_labels(path)?)?;
    }
    if args.standardize {
        data.features = standardize(&data.features);
    }
    Ok(data)
}

fn hyperparams(args: &Args, data: &DatasetBundle) -> Hyperparams<f64> {
    let (n, d) = (data.n(), data.dim());
    let classes = data.meta.classes.unwrap_or(args.trunc_k);
    Hyperparams {
        sigma: args.sigma,
        lambda0: args.lambda0,
        m0: Array1::zeros(d),
        a0: match args.a0 {
            A0::DatasetSize => n as f64,
            A0::Value(v) => v,
        },
        trunc_k: args.trunc_k,
        thr: args.thr,
        eta: args.eta,
        alpha: args.alpha,
        minibatch_m: args
            .minibatch
            .unwrap_or_else(|| default_minibatch(n, classes)),
    }
}

fn run(args: &Args) -> Result<(), Box<dyn std::error::Error>> {
    let data = load(args)?;
    let hp = hyperparams(args, &data);
    hp.validate()?;
    let mut runs = Vec::new();
    for r in 0..u64::from(args.repeats) {
        let seed = args.seed.wrapping_add(r);
        let cfg = TrainConfig {
            max_iters: args.iters,
            optimizer: args.optimizer,
            seed,
            stick_prior: args.stick_prior,
            ..TrainConfig::default()
        };
        let mut out = train(data.features.view(), &hp, &cfg)?;
        if args.no_timings {
            for rec in &mut out.trace.records {
                rec.time_ms = 0.0;
            }
        }
        if r == 0 {
            if let Some(path) = &args.trace_out {
                emit_trace(&out.trace, path)?;
            }
        }
        let (nmi, acc) = match &data.labels {
            Some(gt) => (
                Some(nmi(gt, &out.labels)?),
                Some(accuracy(gt, &out.labels)?),
            ),
            None => (None, None),
        };
        runs.push(RunMetrics {
            seed,
            k_est: model_count(&out.state),
            nmi,
            acc,
            iters_run: out.trace.len(),
            total_time_ms: out.trace.total_time_ms(),
        });
    }
    let summary = Summary::from_repeats(args.optimizer, args.seed, runs);
    match &args.summary_out {
        Some(path) => emit_summary(&summary, path)?,
        None => print!("{}", summary.to_json()),
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs, and returns the exit
/// status: 0 on success, 2 for usage errors, 1 for failures.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(extra: &[&str]) -> Result<Args, clap::Error> {
        Args::try_parse_from(std::iter::once("dpm-sga").chain(extra.iter().copied()))
    }

    #[test]
    fn defaults() {
        let a = parse(&["--synth", "k=3"]).unwrap();
        assert_eq!(a.optimizer, Optimizer::Fisher);
        assert_eq!(a.a0, A0::DatasetSize);
        assert_eq!((a.trunc_k, a.iters, a.repeats), (50, 60, 1));
        assert_eq!((a.eta, a.thr), (0.1, 1e-3));
        assert_eq!(a.stick_prior, StickPrior::Dataset);
        let a = parse(&["--synth", "k=3", "--stick-prior", "sample"]).unwrap();
        assert_eq!(a.stick_prior, StickPrior::Sample);
    }

    #[test]
    fn a0_token() {
        assert_eq!("N".parse::<A0>().unwrap(), A0::DatasetSize);
        assert_eq!("2.5".parse::<A0>().unwrap(), A0::Value(2.5));
        assert!("n".parse::<A0>().is_err());
        assert!("-1".parse::<A0>().is_err());
    }

    #[test]
    fn source_is_exclusive_and_required() {
        assert!(parse(&[]).is_err());
        assert!(parse(&["--synth", "k=2", "--features", "x.csv"]).is_err());
        assert!(parse(&["--synth", "k=2", "--bogus"]).is_err());
        assert!(parse(&["--synth", "k=2", "--optimizer", "adam"]).is_err());
        assert!(parse(&["--synth", "k=2", "--repeats", "0"]).is_err());
    }

    #[test]
    fn minibatch_default_follows_class_count() {
        let a = parse(&["--synth", "k=3,n=500,d=2"]).unwrap();
        let data = load(&a).unwrap();
        let hp = hyperparams(&a, &data);
        assert_eq!(hp.minibatch_m, 60);
        assert_eq!(hp.a0, 500.0);
    }

    #[test]
    fn usage_errors_exit_nonzero() {
        assert_ne!(cli_main(["dpm-sga"]), 0);
        assert_ne!(cli_main(["dpm-sga", "--features", "/nonexistent/x.csv"]), 0);
    }
}
