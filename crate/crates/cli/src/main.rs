use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use tinylight::codegen::{run_harness, CodegenOptions, Precision, TestVectorSet};
use tinylight::experiment::{
    compare, comparison_table, export_c, read_json, run, LoadedConfig, Mode, RunSummary,
    SubGraphCheckpoint,
};
use tinylight::resources::{report, report_subgraph, IntersectionMeta, ModelId};
use tinylight::sim::builders;

#[derive(Parser)]
#[command(
    name = "tinylight",
    version,
    about = "Traffic signal control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a rule-based controller over the config's seeds.
    Simulate(RunArgs),
    /// Train a learned controller per seed, then evaluate it.
    Train(RunArgs),
    /// Parameter and FLOP tables of a built-in model or a checkpoint.
    Report {
        /// Built-in model name (TinyLight, EcoLight, FRAP, MPLight, CoLight, ...)
        /// or a sub-graph checkpoint JSON.
        #[arg(long)]
        model: String,
        /// Also write the machine CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit C source and test vectors for a sub-graph checkpoint.
    Codegen {
        #[arg(long)]
        model: PathBuf,
        /// Experiment config whose scenario supplies recorded states; required for q15.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "float32", value_parser = ["float32", "q15"])]
        precision: String,
        #[arg(long, default_value = "tl")]
        prefix: String,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        no_argmax: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile generated C on the host and check it against test vectors.
    Verify {
        /// Generated C source.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
    /// Run several configs and write model × {travel time, throughput}.
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in scenario files.
    Scenarios {
        #[arg(long, default_value = "scenarios")]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run this seed only, instead of the config's list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, instead of the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &Path, seed: Option<u64>) -> anyhow::Result<LoadedConfig> {
    let mut loaded = LoadedConfig::load(path)?;
    if let Some(s) = seed {
        loaded.config.seeds = vec![s];
    }
    Ok(loaded)
}

fn print_summary(s: &RunSummary) {
    for r in &s.seeds {
        let tt = r
            .avg_travel_time
            .map_or_else(|| "n/a".to_string(), |t| format!("{t:.2}"));
        println!(
            "seed {:>4}: travel time {tt} s, throughput {:.2} veh/min",
            r.seed, r.throughput
        );
    }
    println!(
        "{}: travel time {} s, throughput {} veh/min",
        s.model,
        s.travel_time.display(2),
        s.throughput.display(2)
    );
}

/// `Ok(true)` when an acceptance check failed.
fn execute(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Simulate(a) => {
            let loaded = load(&a.config, a.seed)?;
            print_summary(&run(&loaded, Mode::Simulate, a.out.as_deref())?);
        }
        Command::Train(a) => {
            let loaded = load(&a.config, a.seed)?;
            print_summary(&run(&loaded, Mode::Train, a.out.as_deref())?);
        }
        Command::Report { model, out } => {
            let rep = if model.ends_with(".json") {
                let ck: SubGraphCheckpoint = read_json(Path::new(&model))?;
                report_subgraph(&ck.subgraph)
            } else {
                report(model.parse::<ModelId>()?, IntersectionMeta::JINAN)
            };
            print!("{}", rep.to_table());
            if let Some(path) = out {
                std::fs::write(&path, rep.to_csv()?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Codegen {
            model,
            config,
            precision,
            prefix,
            count,
            no_argmax,
            seed,
            out,
        } => {
            let ck: SubGraphCheckpoint = read_json(&model)?;
            let opts = CodegenOptions {
                precision: if precision == "q15" {
                    Precision::Q15
                } else {
                    Precision::Float32
                },
                prefix,
                emit_argmax: !no_argmax,
                test_vector_count: count,
            };
            let scenario = match &config {
                Some(path) => {
                    let loaded = load(path, None)?;
                    let interval = loaded.config.hyperparams.decision_interval_s;
                    Some((loaded.scenario()?, loaded.config.horizon_s, interval))
                }
                None => None,
            };
            let rec = export_c(
                &ck,
                scenario.as_ref().map(|(s, h, i)| (s, *h, *i)),
                &opts,
                seed,
                &out,
            )?;
            println!("{}", serde_json::to_string(&rec)?);
        }
        Command::Verify {
            model,
            vectors,
            tolerance,
        } => {
            let source = std::fs::read_to_string(&model)
                .with_context(|| format!("reading {}", model.display()))?;
            let text = std::fs::read_to_string(&vectors)
                .with_context(|| format!("reading {}", vectors.display()))?;
            let set = TestVectorSet::parse(&text)?;
            let r = run_harness(&source, &set, tolerance)?;
            println!("{}", serde_json::to_string(&r)?);
            return Ok(!r.pass);
        }
        Command::Compare { configs, seed, out } => {
            if configs.is_empty() {
                bail!("compare needs at least one --config");
            }
            let loaded = configs
                .iter()
                .map(|p| load(p, seed))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let summaries = compare(&loaded, &out)?;
            print!("{}", comparison_table(&summaries));
        }
        Command::Scenarios { out } => {
            std::fs::create_dir_all(&out)?;
            for (name, file) in [
                ("jinan_like.json", builders::jinan_like(3600)),
                ("desk_congested.json", builders::desk_congested(3600)),
            ] {
                let path = out.join(name);
                let text = serde_json::to_string_pretty(&file)?;
                std::fs::write(&path, text + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(false)
}

fn main() -> ExitCode {
    env_logger::init();
    match execute(Cli::parse().command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
