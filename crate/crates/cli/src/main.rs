use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use vclab::analysis::{analyze_trace, read_trace, write_trace, TRACE_COLUMNS};
use vclab::bipartite::ShadowTracker;
use vclab::experiments::{run_experiment, write_csv, write_raw, ExperimentConfig};
use vclab::graph::InstanceSpec;
use vclab::operators::{
    run, Algorithm, Init, NullSemantics, RunSpec, StoppingCriterion, TrajectoryRecorder,
};
use vclab::solution::{known_opt, BitString};
use vclab::walks::{simulate, WalkKind, WalkSpec};

#[derive(Parser)]
#[command(name = "vclab", version, about = "Evolutionary algorithms on minimum vertex cover")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NullArg {
    Counted,
    Redraw,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm once and print the run record as JSON.
    Run {
        #[arg(long)]
        algo: Algorithm,
        /// `path:<n>`, `bipartite:<L>x<R>`, `random:<n>:<p>:<seed>` or `file:<path>`.
        #[arg(long)]
        instance: InstanceSpec,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        max_iters: u64,
        /// `uniform`, `zeros`, `ones` or an explicit bit string.
        #[arg(long, default_value = "uniform")]
        init: String,
        /// Keep running after the optimum is found.
        #[arg(long)]
        no_stop: bool,
        #[arg(long, value_enum, default_value = "counted")]
        null: NullArg,
        /// Write every state change to this trace file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the per-iteration shadow trace of a bipartite run as CSV.
        #[arg(long)]
        shadow_trace: Option<PathBuf>,
    },
    /// Simulate a random walk and print summary statistics as JSON.
    Walk {
        #[arg(long)]
        kind: WalkKind,
        #[arg(long)]
        d: u64,
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert a trace file to per-state CSV statistics.
    Analyze {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment described by a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Exit with status 2 when any tolerance check fails.
        #[arg(long)]
        assert: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        raw: Option<PathBuf>,
    },
}

fn parse_init(text: &str, n: usize) -> Result<Init> {
    Ok(match text {
        "uniform" => Init::Uniform,
        "zeros" => Init::Fixed(BitString::zeros(n)),
        "ones" => Init::Fixed(BitString::ones(n)),
        bits => {
            let bits: BitString = bits.parse().context("parsing --init")?;
            if bits.len() != n {
                bail!("--init has {} bits, instance has {n} vertices", bits.len());
            }
            Init::Fixed(bits)
        }
    })
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    algo: Algorithm,
    instance: InstanceSpec,
    seed: u64,
    max_iters: u64,
    init: &str,
    no_stop: bool,
    null: NullArg,
    trace: Option<PathBuf>,
    shadow_trace: Option<PathBuf>,
) -> Result<()> {
    let g = instance.build()?;
    let optimum = known_opt(&g);
    let stop = if no_stop || optimum.is_none() {
        StoppingCriterion::budget(max_iters)
    } else {
        StoppingCriterion::optimum_or_budget(max_iters)
    };
    let spec = RunSpec::new(algo, stop)
        .with_init(parse_init(init, g.n())?)
        .with_optimum(optimum)
        .with_null_semantics(match null {
            NullArg::Counted => NullSemantics::CountedIteration,
            NullArg::Redraw => NullSemantics::Redraw,
        })
        .with_shadow(g.partition_sizes().is_some());

    let mut recorder = TrajectoryRecorder::default();
    let record = if shadow_trace.is_some() {
        let mut shadow = ShadowTracker::recording(&g)?;
        let rec = run(&g, &spec, seed, &mut (&mut recorder, &mut shadow))?;
        let (left, _) = g.partition_sizes().context("--shadow-trace needs a bipartite instance")?;
        let mut out = sink(&shadow_trace)?;
        writeln!(out, "t,ones_left,ones_right,shadow_size,feasible,trapped")?;
        for s in shadow.recorded().unwrap_or_default() {
            let ones_left = (1..=left).filter(|&v| s.x.get(v)).count();
            let ones_right = s.x.count_ones() - ones_left;
            let feasible = vclab::solution::is_feasible(&g, &s.x)?;
            let trapped = vclab::bipartite::trap_detect(&s.x, &g)?;
            writeln!(
                out,
                "{},{ones_left},{ones_right},{},{feasible},{trapped}",
                s.t,
                s.shadow.size()
            )?;
        }
        rec
    } else {
        run(&g, &spec, seed, &mut recorder)?
    };
    if let Some(path) = &trace {
        fs::write(path, write_trace(&instance, &recorder.points))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn cmd_analyze(trace: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
    let (spec, points) = read_trace(&text)?;
    let g = spec.build()?;
    let rows = analyze_trace(&g, &points)?;
    let mut w = sink(&out)?;
    writeln!(w, "{TRACE_COLUMNS}")?;
    for row in rows {
        writeln!(w, "{}", row.to_csv())?;
    }
    Ok(())
}

fn cmd_experiment(
    config: PathBuf,
    workers: Option<usize>,
    assert: bool,
    csv: Option<PathBuf>,
    raw: Option<PathBuf>,
) -> Result<ExitCode> {
    let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if workers.is_some() {
        cfg.workers = workers;
    }
    let out = run_experiment(&cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    write_csv(&out.rows, sink(&csv.or(cfg.output.csv.clone()))?)?;
    if let Some(path) = raw.or(cfg.output.raw.clone()) {
        write_raw(&out.raw, io::BufWriter::new(fs::File::create(&path)?))?;
    }
    for c in &out.checks {
        eprintln!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if assert && !out.all_passed() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            algo,
            instance,
            seed,
            max_iters,
            init,
            no_stop,
            null,
            trace,
            shadow_trace,
        } => cmd_run(
            algo,
            instance,
            seed,
            max_iters,
            &init,
            no_stop,
            null,
            trace,
            shadow_trace,
        )?,
        Command::Walk {
            kind,
            d,
            p,
            q,
            trials,
            seed,
        } => {
            let spec = WalkSpec { kind, d, p, q }.validated()?;
            println!("{}", serde_json::to_string_pretty(&simulate(&spec, trials, seed)?)?);
        }
        Command::Analyze { trace, out } => cmd_analyze(trace, out)?,
        Command::Experiment {
            config,
            workers,
            assert,
            csv,
            raw,
        } => return cmd_experiment(config, workers, assert, csv, raw),
    }
    Ok(ExitCode::SUCCESS)
}
