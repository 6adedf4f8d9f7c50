use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use radial_gibbs::grid::Grid1D;
use radial_gibbs::harness::{self, ExperimentConfig, ExperimentKind, ResolutionChoice, RunConfig};
use radial_gibbs::kernel::{chapman_kolmogorov_check, solve_kernel, PotentialSpec, SolverOptions};
use radial_gibbs::measures::{nu_l1_chain, sample_measure, uniform_nodes, BridgeMethod, MeasureSpec, MeasureTag};
use radial_gibbs::spectrum::{default_grid, eigenpairs};
use radial_gibbs::stats::Verdict;
use radial_gibbs::wave::{flow_l, PicardOptions, WaveState};
use radial_gibbs::Error;

#[derive(Parser)]
#[command(name = "rgibbs", version, about = "Radial Gibbs measures: kernels, spectra, samplers, wave flows and invariance experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "rgibbs-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Resolution::Both)]
    resolution: Resolution,
}

#[derive(Clone, Copy, ValueEnum)]
enum Resolution {
    Coarse,
    Fine,
    Both,
}

impl From<Resolution> for ResolutionChoice {
    fn from(r: Resolution) -> Self {
        match r {
            Resolution::Coarse => ResolutionChoice::Coarse,
            Resolution::Fine => ResolutionChoice::Fine,
            Resolution::Both => ResolutionChoice::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Potential {
    Zero,
    Constant,
    Cutoff,
    Quartic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Measure {
    MuL1,
    MuL2,
    NuL1,
    NuL,
    Wiener,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a fundamental solution and check Chapman–Kolmogorov at the midpoint.
    Kernel {
        #[arg(long, value_enum, default_value_t = Potential::Quartic)]
        potential: Potential,
        /// Constant for `--potential constant`, cutoff level for `--potential cutoff`.
        #[arg(long, default_value_t = -1.0)]
        param: f64,
        #[arg(long, default_value_t = 0.0)]
        source_r: f64,
        #[arg(long, default_value_t = 0.0)]
        source_y: f64,
        #[arg(long, default_value_t = 2.0)]
        r_max: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 8.0)]
        half_width: f64,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        spacing: f64,
    },
    /// Eigenpairs of the quartic oscillator.
    Spectrum {
        #[arg(long, default_value_t = 21)]
        k: usize,
    },
    /// Decay-law and plateau experiment.
    Asymptotics,
    /// Sample an ensemble and write it as CSV.
    Sample {
        #[arg(long, value_enum, default_value_t = Measure::NuL)]
        measure: Measure,
        #[arg(long, default_value_t = 4.0)]
        length: f64,
        #[arg(long, default_value_t = 128)]
        intervals: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Flow one sampled datum and write the trace.
    Flow {
        #[arg(long, default_value_t = 4.0)]
        length: f64,
        #[arg(long, default_value_t = 128)]
        intervals: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, default_value_t = 0.5)]
        window: f64,
    },
    /// Nonlinear invariance experiment (linear baseline first).
    Invariance,
    /// Run every experiment of `--config`.
    Run,
    /// Render the summary of a run directory.
    Report { run_dir: PathBuf },
}

fn write(path: &Path, text: &str) -> radial_gibbs::Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Experiments of `kind` from the config, or one default experiment.
fn experiments_of(cfg: Option<&RunConfig>, kind: ExperimentKind, id: &str) -> Vec<ExperimentConfig> {
    let picked: Vec<ExperimentConfig> = cfg.map(|c| c.experiment.iter().filter(|e| e.kind == kind).cloned().collect()).unwrap_or_default();
    if picked.is_empty() {
        vec![ExperimentConfig::new(id, kind)]
    } else {
        picked
    }
}

fn run_and_report(cfg: RunConfig, out: &Path, choice: ResolutionChoice) -> radial_gibbs::Result<u8> {
    let (_, reports) = harness::run(&cfg, out, choice)?;
    for r in &reports {
        print!("{}", r.render());
    }
    println!("artifacts in {}", out.display());
    Ok(harness::exit_code(&reports) as u8)
}

fn dispatch(cli: Cli) -> radial_gibbs::Result<u8> {
    let g = &cli.global;
    let config = g.config.as_deref().map(RunConfig::load).transpose()?;
    let seed = config.as_ref().map(|c| if g.seed != 0 { g.seed } else { c.seed }).unwrap_or(g.seed);
    match cli.command {
        Command::Kernel { potential, param, source_r, source_y, r_max, steps, half_width, spacing } => {
            let pot = match potential {
                Potential::Zero => PotentialSpec::Zero,
                Potential::Constant => PotentialSpec::Constant { c: param },
                Potential::Cutoff => PotentialSpec::CutoffQuartic { n: param.max(1.0) as u32 },
                Potential::Quartic => PotentialSpec::Quartic,
            };
            let grid = Grid1D::symmetric(half_width, spacing)?;
            let field = solve_kernel(pot, (source_r, source_y), r_max, grid, steps)?;
            write(&g.out.join("kernel.json"), &field.to_json()?)?;
            let mid = 0.5 * (source_r + r_max);
            let ck = chapman_kolmogorov_check(pot, source_r, mid, r_max, source_y, &[-1.0, 0.0, 0.5, 1.0], &grid, &SolverOptions::default())?;
            println!("kernel rows: {}, last-row mass {:.6e}", field.r_nodes.len(), field.mass(field.r_nodes.len() - 1));
            println!("chapman-kolmogorov via r = {mid}: max error {:.3e}", ck.max_error);
            println!("wrote {}", g.out.join("kernel.json").display());
            Ok(0)
        }
        Command::Spectrum { k } => {
            let basis = eigenpairs(k, default_grid())?;
            write(&g.out.join("spectrum.json"), &basis.to_json()?)?;
            let mut csv = String::from("k,lambda,lower_bound\n");
            let mut ok = true;
            for (i, l) in basis.eigenvalues.iter().enumerate() {
                csv.push_str(&format!("{i},{l:e},{:e}\n", i as f64 + 0.25));
                ok &= *l >= i as f64 + 0.25;
            }
            write(&g.out.join("eigenvalues.csv"), &csv)?;
            println!("lambda_0 = {:.12}", basis.lambda0());
            println!("orthonormality defect {:.3e}", basis.orthonormality_defect());
            println!("lambda_k >= k + 1/4 for all k: {ok}");
            Ok(if ok { 0 } else { 1 })
        }
        Command::Asymptotics => {
            let experiment = experiments_of(config.as_ref(), ExperimentKind::Asymptotics, "asymptotics");
            run_and_report(RunConfig { seed, experiment }, &g.out, g.resolution.into())
        }
        Command::Invariance => {
            let experiment = experiments_of(config.as_ref(), ExperimentKind::Invariance, "invariance");
            run_and_report(RunConfig { seed, experiment }, &g.out, g.resolution.into())
        }
        Command::Run => {
            let cfg = config.ok_or_else(|| Error::Usage(format!("run needs --config\nexpected keys:\n{}", harness::SCHEMA)))?;
            run_and_report(RunConfig { seed, ..cfg }, &g.out, g.resolution.into())
        }
        Command::Report { run_dir } => {
            print!("{}", harness::report(&run_dir)?);
            Ok(0)
        }
        Command::Sample { measure, length, intervals, n } => {
            let tag = match measure {
                Measure::MuL1 => MeasureTag::MuL1,
                Measure::MuL2 => MeasureTag::MuL2,
                Measure::NuL1 => MeasureTag::NuL1,
                Measure::NuL => MeasureTag::NuL,
                Measure::Wiener => MeasureTag::Wiener,
            };
            let spec = if tag.is_finite_volume() { MeasureSpec::finite(tag, length) } else { MeasureSpec::infinite(tag, length) };
            let nodes = uniform_nodes(length, intervals);
            let chain = if matches!(tag, MeasureTag::NuL1 | MeasureTag::NuL) {
                Some(nu_l1_chain(&nodes, &Grid1D::symmetric(7.0, 0.02)?, &SolverOptions::default())?)
            } else {
                None
            };
            let ens = sample_measure(spec, &nodes, n, seed, BridgeMethod::default(), chain.as_ref())?;
            write(&g.out.join("ensemble.csv"), &ens.to_csv())?;
            println!("{}", serde_json::to_string_pretty(&ens.summary())?);
            Ok(if ens.status == Verdict::Fail { 1 } else { 0 })
        }
        Command::Flow { length, intervals, times, index, window } => {
            let nodes = uniform_nodes(length, intervals);
            let chain = nu_l1_chain(&nodes, &Grid1D::symmetric(7.0, 0.02)?, &SolverOptions::default())?;
            let ens = sample_measure(MeasureSpec::finite(MeasureTag::NuL, length), &nodes, index as usize + 1, seed, BridgeMethod::default(), Some(&chain))?;
            let state = WaveState::from_path(&ens.samples[index as usize], length)?;
            let trace = flow_l(&state, &times, window, &PicardOptions::default());
            write(&g.out.join("trace.json"), &trace.to_json()?)?;
            for w in &trace.windows {
                println!("[{:.4}, {:.4}] iterations {} residual {:.2e}", w.t_start, w.t_end, w.iterations, w.residual);
            }
            println!("status {}", trace.status.as_str());
            if let Some(m) = &trace.message {
                println!("{m}");
            }
            Ok(if trace.status == Verdict::Pass { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Error::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
