use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ovaib::pipeline::{self, RunConfig};
use ovaib::verify::{self, Fault, GradcheckConfig, Scope, VerifyOptions};
use ovaib::Error;

#[derive(Parser, Debug)]
#[command(name = "ovaib", version, about = "One-vs-All information bottleneck: verification, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the seeded information-theory and loss certification sweeps.
    Verify(VerifyArgs),
    /// Finite-difference check every loss, scorer and denominator mode.
    Gradcheck(GradcheckArgs),
    /// Train encoders on synthetic data.
    Train(RunArgs),
    /// Evaluate a checkpoint: retrieval, subset probes and nuisance probes.
    Eval(EvalArgs),
    /// Run the beta and projector ablation grid over the configured seeds.
    Ablate(RunArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScopeArg {
    Oracle,
    Losses,
    All,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FaultArg {
    NegateDtc,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    scope: ScopeArg,
    /// Restrict the discrete sweeps to this many modalities.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Defaults to `checkpoint.bin` in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// A failed invocation: the exit code plus the record printed to stderr.
struct Failure {
    code: u8,
    record: Value,
}

impl Failure {
    fn usage(command: &str, err: impl std::fmt::Display) -> Self {
        Self {
            code: 2,
            record: json!({ "status": "error", "command": command, "kind": "usage", "message": err.to_string() }),
        }
    }

    fn runtime(command: &str, err: &Error) -> Self {
        let mut record = json!({ "status": "error", "command": command, "kind": "runtime", "message": err.to_string() });
        if let Error::Divergence { what, step } = err {
            record["kind"] = json!("divergence");
            record["quantity"] = json!(what);
            record["step"] = json!(step);
        }
        Self { code: 1, record }
    }

    fn checks(command: &str, failed: Value) -> Self {
        Self {
            code: 1,
            record: json!({ "status": "failed", "command": command, "kind": "check", "failed": failed }),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn emit(out: Option<&Path>, file: &str, report: &Value, command: &str) -> CmdResult {
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    println!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .and_then(|_| fs::write(dir.join(file), &text))
            .map_err(|e| Failure::usage(command, format!("cannot write to {}: {e}", dir.display())))?;
    }
    Ok(())
}

fn load_run_config(command: &str, args: &RunArgs) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(|e| Failure::usage(command, format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate().map_err(|e| Failure::usage(command, e))?;
    Ok(cfg)
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let opts = VerifyOptions {
        scope: match args.scope {
            ScopeArg::Oracle => Scope::Oracle,
            ScopeArg::Losses => Scope::Losses,
            ScopeArg::All => Scope::All,
        },
        m: args.m,
        seed: args.seed,
        fault: args.inject_fault.map(|FaultArg::NegateDtc| Fault::NegateDtc),
        ..VerifyOptions::default()
    };
    let report = verify::run_verify(&opts).map_err(|e| match e {
        Error::InvalidArgument(_) => Failure::usage("verify", e),
        e => Failure::runtime("verify", &e),
    })?;
    emit(args.out.as_deref(), "verify.json", &serde_json::to_value(&report).expect("serialize"), "verify")?;
    if report.passed {
        return Ok(());
    }
    let failed: Vec<Value> = report
        .failing()
        .iter()
        .map(|c| json!({ "check": c.name, "seed": c.failing_seed, "max_violation": c.max_violation, "tolerance": c.tolerance }))
        .collect();
    Err(Failure::checks("verify", json!(failed)))
}

fn cmd_gradcheck(args: GradcheckArgs) -> CmdResult {
    let mut cfg = match &args.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<GradcheckConfig>(&t).map_err(|e| e.to_string()))
            .map_err(|e| Failure::usage("gradcheck", format!("{}: {e}", path.display())))?,
        None => GradcheckConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = verify::run_gradcheck(&cfg, args.inject_fault).map_err(|e| match e {
        Error::InvalidArgument(_) | Error::Empty(_) => Failure::usage("gradcheck", e),
        e => Failure::runtime("gradcheck", &e),
    })?;
    emit(args.out.as_deref(), "gradcheck.json", &serde_json::to_value(&report).expect("serialize"), "gradcheck")?;
    if report.passed {
        return Ok(());
    }
    let failed: Vec<Value> = report
        .entries
        .iter()
        .filter(|e| !e.report.pass)
        .map(|e| {
            json!({
                "loss": e.loss,
                "scorer": e.scorer,
                "include_positive": e.include_positive,
                "shape": e.shape,
                "max_rel_err": e.report.max_rel_err,
                "worst": e.report.worst,
            })
        })
        .collect();
    Err(Failure::checks("gradcheck", json!(failed)))
}

fn cmd_train(args: RunArgs) -> CmdResult {
    let cfg = load_run_config("train", &args)?;
    let seed = cfg.seeds[0];
    let artifacts = pipeline::run_training(&cfg, seed, &cfg.output_dir).map_err(|e| Failure::runtime("train", &e))?;
    let last = artifacts.outcome.records.last().map(|r| json!(r.metrics));
    emit(
        None,
        "",
        &json!({
            "status": "ok",
            "seed": seed,
            "steps": cfg.train.steps,
            "final": last,
            "metrics": artifacts.metrics,
            "checkpoint": artifacts.checkpoint,
        }),
        "train",
    )
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let cfg = load_run_config("eval", &args.run)?;
    let checkpoint = args.checkpoint.unwrap_or_else(|| cfg.output_dir.join("checkpoint.bin"));
    let report = pipeline::run_evaluation(&cfg, &checkpoint, &cfg.output_dir).map_err(|e| match e {
        Error::Io(_) | Error::Checkpoint(_) | Error::DimensionMismatch { .. } => Failure::usage("eval", format!("{}: {e}", checkpoint.display())),
        e => Failure::runtime("eval", &e),
    })?;
    emit(
        None,
        "",
        &json!({
            "status": "ok",
            "seed": report.seed,
            "map": report.retrieval.map,
            "random_baseline": report.random_baseline,
            "null_sd": report.null.sd,
            "mean_nuisance_r2": report.mean_nuisance_r2(),
            "probes": report.probes.len(),
        }),
        "eval",
    )
}

fn cmd_ablate(args: RunArgs) -> CmdResult {
    let cfg = load_run_config("ablate", &args)?;
    let arms = pipeline::ablation_arms(&cfg);
    let report = pipeline::run_ablation(&cfg, &arms).map_err(|e| Failure::runtime("ablate", &e))?;
    let out = cfg.output_dir.clone();
    emit(Some(&out), "ablation.json", &serde_json::to_value(&report).expect("serialize"), "ablate")?;
    let mut failed = Vec::new();
    if !report.beta_majority {
        failed.push(json!({ "check": "beta_reduces_nuisance", "seeds_holding": report.beta_reduces_leakage }));
    }
    if !report.geometric_faster {
        failed.push(json!({ "check": "geometric_scorer_faster", "timing": report.timing }));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::checks("ablate", json!(failed)))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = err.exit_code();
            let _ = err.print();
            if code != 0 {
                let record = json!({ "status": "error", "command": null, "kind": "usage", "message": err.kind().to_string() });
                eprintln!("{record}");
                return ExitCode::from(2);
            }
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.record);
            ExitCode::from(f.code)
        }
    }
}
