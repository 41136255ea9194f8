use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crossim::indexes::{DegeneratePolicy, DEFAULT_SVCCA_THRESHOLD};
use crossim::io::{self, LanguagePair, LayerSelection, OutputFormat, RunConfig};
use crossim::pipeline::{self, CorrelationProfile, GenSpec};
use crossim::validate::{self, Fault};

#[derive(Parser)]
#[command(name = "crossim", version, about = "Cross-lingual representational similarity of layer activations")]
struct Cli {
    /// Worker threads for batch jobs (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every requested index per layer and language pair.
    Compare(RunArgs),
    /// Per-layer parallel sentence matching accuracy by cosine nearest neighbour.
    Match(RunArgs),
    /// Most and least correlated neurons of one pair at one layer.
    Neurons {
        #[command(flatten)]
        run: RunArgs,
        /// Model to inspect when the manifests cover several.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        layer: usize,
        #[arg(long, short, default_value_t = 10)]
        k: usize,
    },
    /// Run the synthetic invariance suite; exits nonzero if any property fails.
    Validate {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Inject a known fault (`signed-anc`) to check the suite catches it.
        #[arg(long)]
        fault: Option<Fault>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic dumps and a manifest.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synthetic")]
        model_id: String,
        /// Comma-separated; the first is the pivot language.
        #[arg(long, default_value = "en,fr,de")]
        languages: String,
        /// Transformer layers (dumps cover 0..=layers).
        #[arg(long, default_value_t = 12)]
        layers: usize,
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Constant pivot correlation; omitted means a rise-then-dip profile.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synthetic-parallel")]
        dataset_id: String,
    },
    /// Render SVG layer curves from a scores CSV.
    Plot {
        csv: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Manifest files (repeat or comma-separate).
    #[arg(long = "manifest", required = true, value_delimiter = ',')]
    manifests: Vec<PathBuf>,
    /// Comma-separated subset of anc,cka,cca,svcca,pwcca, or `all`.
    #[arg(long, default_value = "anc")]
    indexes: String,
    /// Comma-separated `src-tgt` pairs.
    #[arg(long, default_value = "en-fr")]
    pairs: String,
    /// `all`, or layers and ranges such as `0,3,6-12`.
    #[arg(long, default_value = "all")]
    layers: LayerSelection,
    #[arg(long, default_value_t = DEFAULT_SVCCA_THRESHOLD)]
    svcca_threshold: f64,
    /// `zero` or `skip`.
    #[arg(long, default_value = "zero")]
    anc_policy: DegeneratePolicy,
    /// Aligned random subsample of rows.
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// `csv` or `json` for the scores file.
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

impl RunArgs {
    fn config(self) -> crossim::Result<RunConfig> {
        Ok(RunConfig {
            manifest_paths: self.manifests,
            indexes: io::parse_indexes(&self.indexes)?,
            language_pairs: io::parse_pairs(&self.pairs)?,
            layers: self.layers,
            svcca_threshold: self.svcca_threshold,
            anc_policy: self.anc_policy,
            output_dir: self.out,
            seed: self.seed,
            sample_size: self.sample_size,
            format: self.format,
        })
    }
}

fn run(cli: Cli) -> crossim::Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| crossim::Error::InvalidParam(e.to_string()))?;
    }
    match cli.command {
        Command::Compare(args) => {
            let (output, paths) = pipeline::cmd_compare(&args.config()?)?;
            for c in &output.curves {
                let scores: Vec<String> = c.scores().iter().map(|s| format!("{s:.3}")).collect();
                println!("{} {} {}: {}", c.model_id, c.index, c.pair, scores.join(" "));
            }
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Match(args) => {
            let (rows, path) = pipeline::cmd_match(&args.config()?)?;
            for r in &rows {
                println!("{} {} layer {}: {:.4} ({}/{})", r.model_id, r.pair, r.layer, r.accuracy, r.hits, r.m);
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Neurons { run, model, layer, k } => {
            let config = run.config()?;
            let pair: LanguagePair = config
                .language_pairs
                .first()
                .cloned()
                .ok_or_else(|| crossim::Error::InvalidParam("no pair given".into()))?;
            let (report, path) = pipeline::cmd_neurons(&config, model.as_deref(), &pair, layer, k)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            eprintln!("wrote {}", path.display());
        }
        Command::Validate { seeds, fault, out } => {
            let report = validate::run_validation(seeds, fault);
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match out {
                Some(path) => std::fs::write(&path, text + "\n").map_err(|e| crossim::Error::Io { path, source: e })?,
                None => println!("{text}"),
            }
            for p in &report.properties {
                eprintln!("{} {} (worst {:e}, threshold {:e})", if p.passed { "PASS" } else { "FAIL" }, p.name, p.worst, p.threshold);
            }
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Gen { out, model_id, languages, layers, m, n, rho, seed, dataset_id } => {
            let spec = GenSpec {
                model_id,
                languages: languages.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                layers,
                m,
                n,
                profile: rho.map_or(CorrelationProfile::AlignThenPredict, CorrelationProfile::Constant),
                seed,
                dataset_id,
            };
            let manifest = pipeline::generate(&spec, &out)?;
            eprintln!("wrote {}", manifest.display());
        }
        Command::Plot { csv, out } => {
            for p in pipeline::cmd_plot(&csv, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

