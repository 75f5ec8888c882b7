mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ptshare_core::kkt::assemble_single_level;
use ptshare_core::mechanism::{
    diagnostics, grid, pre_schedule, select_alpha_star, sweep, MechanismOptions,
};
use ptshare_core::milp::write_mps;
use ptshare_core::network::{enumerate_paths, load_instance, CoupledInstance, PathSet};
use ptshare_core::Error;

use output::{fmt6, write_gen, write_loads, write_sweep, write_text};

#[derive(Parser)]
#[command(name = "ptshare", version, about = "Profit-sharing coordination of a tolled traffic network and a distribution network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate an instance, then print its size.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Baseline stage: equilibrium without coordination, then dispatch.
    Pre(RunArgs),
    /// Re-schedule over a grid of sharing ratios and pick the best one.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Grid as `from:to:step`.
        #[arg(long, default_value = "0:1:0.05")]
        alpha_grid: String,
        /// Write 0 in the wall_seconds column so repeated runs are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
    /// Write the re-scheduling MILP for one ratio in free MPS format.
    ExportMps {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        alpha: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Candidate paths per O-D pair and vehicle class.
    #[arg(long)]
    paths_k: Option<usize>,
    /// Linear pieces per travel-time curve.
    #[arg(long)]
    segments_n: Option<usize>,
    /// Linear pieces per generator cost curve.
    #[arg(long)]
    cost_segments: Option<usize>,
    /// Relative optimality gap.
    #[arg(long, default_value_t = 1e-6)]
    gap: f64,
    #[arg(long, default_value_t = 200_000)]
    node_limit: usize,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const EXIT_IO: u8 = 4;

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse(_) | Error::Validation { .. } | Error::Domain(_) | Error::Model(_) => EXIT_VALIDATION,
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            Error::Limit(_) | Error::Solver(_) | Error::BigM(_) => EXIT_LIMIT,
            Error::Io { .. } => EXIT_IO,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("I/O error on {}: {e}", path.display()),
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Validate { instance } => cmd_validate(&instance),
        Command::Pre(run) => cmd_pre(&run),
        Command::Sweep {
            run,
            alpha_grid,
            no_timing,
        } => cmd_sweep(&run, &alpha_grid, no_timing),
        Command::ExportMps { run, alpha } => cmd_export_mps(&run, alpha),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(run: &RunArgs) -> Result<(CoupledInstance, PathSet, MechanismOptions), Failure> {
    let mut inst = load_instance(&run.instance)?;
    if let Some(k) = run.paths_k {
        inst.params.paths_k = k;
    }
    if let Some(n) = run.segments_n {
        inst.params.segments = n;
    }
    if let Some(j) = run.cost_segments {
        inst.params.cost_segments = j;
    }
    if inst.params.paths_k == 0 || inst.params.cost_segments < 1 {
        return Err(Failure {
            code: EXIT_VALIDATION,
            message: "--paths-k and --cost-segments must be at least 1".into(),
        });
    }
    if inst.params.segments < 2 {
        return Err(Failure {
            code: EXIT_VALIDATION,
            message: "--segments-n must be at least 2".into(),
        });
    }
    if !(run.gap >= 0.0 && run.gap.is_finite()) {
        return Err(Failure {
            code: EXIT_VALIDATION,
            message: format!("--gap must be a nonnegative number, got {}", run.gap),
        });
    }
    let paths = enumerate_paths(&inst, inst.params.paths_k)?;
    let mut opts = MechanismOptions::from_instance(&inst);
    opts.bb.gap = run.gap;
    opts.bb.node_limit = run.node_limit;
    Ok((inst, paths, opts))
}

fn create_out(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn cmd_validate(path: &Path) -> Outcome {
    let inst = load_instance(path)?;
    let paths = enumerate_paths(&inst, inst.params.paths_k)?;
    let opts = MechanismOptions::from_instance(&inst);
    let sl = assemble_single_level(&inst, &paths, 0.0, 0.0, &opts.single_level)?;
    println!("instance: {}", inst.name);
    println!("traffic nodes: {}", inst.nodes.len());
    println!("roads: {}", inst.roads.len());
    println!("charging stations: {}", inst.evcs.len());
    println!("O-D pairs: {}", inst.od_pairs.len());
    println!("buses: {}", inst.buses.len());
    println!("lines: {}", inst.lines.len());
    println!("generators: {}", inst.generators.len());
    println!("route alternatives (K = {}): {}", paths.k, paths.alts.len());
    println!(
        "re-scheduling MILP: {} variables ({} binary), {} constraints",
        sl.model.num_vars(),
        sl.model.num_binaries(),
        sl.model.num_cons()
    );
    Ok(())
}

fn cmd_pre(run: &RunArgs) -> Outcome {
    let (inst, paths, opts) = load(run)?;
    let pre = pre_schedule(&inst, &paths, &opts)?;
    create_out(&run.out)?;
    write_loads(&run.out.join("baseline_loads.csv"), &inst, &pre.traffic)?;
    write_gen(&run.out.join("baseline_gen.csv"), &inst, &pre.dispatch)?;
    println!("gamma0 = {} CNY/h", fmt6(pre.gamma0));
    println!("eta0 = {} CNY/h", fmt6(pre.eta0));
    if !pre.wardrop.passed() {
        return Err(Failure {
            code: EXIT_LIMIT,
            message: "pre-scheduling: baseline failed the equilibrium check".into(),
        });
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure {
        code: EXIT_VALIDATION,
        message: format!("--alpha-grid expects from:to:step, got `{spec}`"),
    };
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    match parts[..] {
        [a, b, s] => Ok(grid(a, b, s)?),
        _ => Err(bad()),
    }
}

fn cmd_sweep(run: &RunArgs, grid_spec: &str, no_timing: bool) -> Outcome {
    let alphas = parse_grid(grid_spec)?;
    let (inst, paths, opts) = load(run)?;
    let (pre, points) = sweep(&inst, &paths, &alphas, &opts)?;
    create_out(&run.out)?;
    write_loads(&run.out.join("baseline_loads.csv"), &inst, &pre.traffic)?;
    write_gen(&run.out.join("baseline_gen.csv"), &inst, &pre.dispatch)?;
    write_sweep(&run.out.join("sweep.csv"), &points, no_timing)?;
    for p in &points {
        if let (Some(t), Some(d)) = (&p.traffic, &p.dispatch) {
            write_loads(&run.out.join(format!("loads_alpha_{}.csv", p.alpha)), &inst, t)?;
            write_gen(&run.out.join(format!("gen_alpha_{}.csv", p.alpha)), &inst, d)?;
        }
    }
    let diag = diagnostics(&points);
    let mut report = String::new();
    report.push_str(&format!("gamma0 = {}\neta0 = {}\n", fmt6(pre.gamma0), fmt6(pre.eta0)));
    for p in points.iter().filter(|p| !p.accepted()) {
        report.push_str(&format!("alpha = {}: {}\n", p.alpha, p.status_label()));
    }
    report.push_str(&format!(
        "overall cost nonincreasing up to plateau: {}\nplateau onset: {}\nlocal generation on plateau: {}\n",
        diag.overall_nonincreasing,
        diag.plateau_onset.map_or("none".into(), |a| a.to_string()),
        diag.plateau_local_generation.map_or("n/a".into(), fmt6),
    ));
    let star = select_alpha_star(&points);
    if let Ok(i) = &star {
        report.push_str(&format!("alpha* = {} psi = {}\n", points[*i].alpha, fmt6(points[*i].psi)));
    }
    write_text(&run.out.join("summary.txt"), &report)?;
    print!("{report}");
    star.map_err(|e| Failure {
        code: EXIT_LIMIT,
        message: e.to_string(),
    })?;
    if points.iter().any(|p| !p.accepted()) {
        return Err(Failure {
            code: EXIT_LIMIT,
            message: "some sweep points were not solved to the gap or failed an audit".into(),
        });
    }
    Ok(())
}

fn cmd_export_mps(run: &RunArgs, alpha: f64) -> Outcome {
    let (inst, paths, opts) = load(run)?;
    let pre = pre_schedule(&inst, &paths, &opts)?;
    let sl = assemble_single_level(&inst, &paths, alpha, pre.eta0, &opts.single_level)?;
    let text = write_mps(&sl.model)?;
    create_out(&run.out)?;
    let path = run.out.join(format!("rescheduling_alpha_{alpha}.mps"));
    write_text(&path, &text)?;
    println!(
        "wrote {} ({} variables, {} constraints, eta0 = {})",
        path.display(),
        sl.model.num_vars(),
        sl.model.num_cons(),
        fmt6(pre.eta0)
    );
    Ok(())
}
