use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdiff::instance::{all_instances, gallery_instances, run_instance, run_parsed, Op, Report, RunFlags, Status};

#[derive(Parser)]
#[command(name = "tdiff", version, about = "Certify and refute generalized derivatives of set-valued maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for every sampled construction.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Tolerance override KEY=VALUE with KEY one of eps_geom, mord, clarke. Repeatable.
    #[arg(long = "tol", value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
    /// Write the JSON report here.
    #[arg(long)]
    json_out: Option<PathBuf>,
    /// Radius of the truncation box for unbounded values.
    #[arg(long)]
    truncation: Option<f64>,
    /// Record wall time in the report (the report is then not reproducible).
    #[arg(long)]
    timing: bool,
    /// Print the JSON report on stdout instead of the task summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance file.
    instance: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of an instance file.
    Run(InstanceArgs),
    /// Run the certify tasks of an instance file.
    Certify(InstanceArgs),
    /// Run the modulus tasks of an instance file.
    Modulus(InstanceArgs),
    /// Run the coderiv tasks of an instance file.
    Coderiv(InstanceArgs),
    /// Run the mord tasks of an instance file.
    Mord(InstanceArgs),
    /// Run the compose-chain tasks of an instance file.
    ComposeChain(InstanceArgs),
    /// Run the compose-sum tasks of an instance file.
    ComposeSum(InstanceArgs),
    /// Run the regcover-harness tasks of an instance file.
    RegcoverHarness(InstanceArgs),
    /// Run the strictify tasks of an instance file.
    Strictify(InstanceArgs),
    /// Run the clarke tasks of an instance file.
    Clarke(InstanceArgs),
    /// Run the built-in example suite.
    Gallery {
        /// Write the suite's instance files into this directory instead of running them.
        #[arg(long)]
        write: Option<PathBuf>,
        /// Include the coderivative and calculus instances.
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    let v: f64 = v.parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn flags(c: &Common, only: Option<Op>) -> RunFlags {
    RunFlags {
        seed: c.seed,
        truncation: c.truncation,
        tol: c.tol.iter().cloned().collect::<BTreeMap<_, _>>(),
        only,
        timing: c.timing,
    }
}

fn setup_threads(c: &Common) -> Result<(), String> {
    if let Some(n) = c.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| format!("cannot set up {n} workers: {e}"))?;
    }
    Ok(())
}

fn print_summary(label: &str, report: &Report) {
    for t in &report.tasks {
        let tag = match t.status {
            Status::Ok => "ok",
            Status::ExpectedRefutation => "ok (expected refutation)",
            Status::UnexpectedRefutation => "REFUTED",
            Status::ExpectationMismatch => "MISMATCH",
            Status::Error => "ERROR",
        };
        let name = t.name.as_deref().map(|n| format!(" {n}")).unwrap_or_default();
        let outcome = t
            .outcome
            .and_then(|o| serde_json::to_value(o).ok())
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_else(|| "-".into());
        println!("{label}[{}] {}{name}: {outcome} -> {tag}", t.index, t.op.name());
        if let Some(e) = &t.error {
            println!("    {e}");
        }
    }
    let s = &report.summary;
    println!(
        "{label}{} tasks: {} ok, {} expected refutations, {} unexpected refutations, {} mismatches, {} errors",
        s.tasks, s.ok, s.expected_refutations, s.unexpected_refutations, s.mismatches, s.errors
    );
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(common: &Common, value: &impl serde::Serialize) -> Result<(), String> {
    if let Some(p) = &common.json_out {
        write_json(p, value)?;
    }
    if common.json {
        println!("{}", serde_json::to_string_pretty(value).map_err(|e| e.to_string())?);
    }
    Ok(())
}

fn run_file(args: &InstanceArgs, only: Option<Op>) -> Result<i32, String> {
    setup_threads(&args.common)?;
    let text = fs::read_to_string(&args.instance).map_err(|e| format!("{}: {e}", args.instance.display()))?;
    let out = run_instance(&text, &flags(&args.common, only)).map_err(|e| format!("{}: {e}", args.instance.display()))?;
    if !args.common.json {
        print_summary("", &out.report);
    }
    emit(&args.common, &out.report)?;
    Ok(out.exit_code)
}

/// Errors dominate refutations, which dominate success.
fn worst(a: i32, b: i32) -> i32 {
    let rank = |c: i32| match c {
        0 => 0,
        2 => 1,
        _ => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

fn gallery(write: Option<&Path>, all: bool, common: &Common) -> Result<i32, String> {
    let suite = if all { all_instances() } else { gallery_instances() }.map_err(|e| e.to_string())?;
    if let Some(dir) = write {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for (name, inst) in &suite {
            write_json(&dir.join(name), inst)?;
            println!("wrote {}", dir.join(name).display());
        }
        return Ok(0);
    }
    setup_threads(common)?;
    let f = flags(common, None);
    let mut code = 0;
    let mut reports = Vec::new();
    for (name, inst) in &suite {
        let text = serde_json::to_string_pretty(inst).map_err(|e| e.to_string())? + "\n";
        let out = run_parsed(inst, &text, &f).map_err(|e| format!("{name}: {e}"))?;
        if !common.json {
            print_summary(&format!("{name} "), &out.report);
        }
        code = worst(code, out.exit_code);
        reports.push(serde_json::json!({"instance": name, "report": out.report}));
    }
    emit(common, &serde_json::json!({"gallery": reports, "exit_code": code}))?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run_file(a, None),
        Command::Certify(a) => run_file(a, Some(Op::Certify)),
        Command::Modulus(a) => run_file(a, Some(Op::Modulus)),
        Command::Coderiv(a) => run_file(a, Some(Op::Coderiv)),
        Command::Mord(a) => run_file(a, Some(Op::Mord)),
        Command::ComposeChain(a) => run_file(a, Some(Op::ComposeChain)),
        Command::ComposeSum(a) => run_file(a, Some(Op::ComposeSum)),
        Command::RegcoverHarness(a) => run_file(a, Some(Op::RegcoverHarness)),
        Command::Strictify(a) => run_file(a, Some(Op::Strictify)),
        Command::Clarke(a) => run_file(a, Some(Op::Clarke)),
        Command::Gallery { write, all, common } => gallery(write.as_deref(), *all, common),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
