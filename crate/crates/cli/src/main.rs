use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stereoproxy::config::{CompleterMode, ConfigError, MatcherKind, PipelineConfig};
use stereoproxy::manifest::{self, Layout, Manifest};
use stereoproxy::{io, pipeline};
use stereoproxy_core::metrics::InvalidPolicy;
use stereoproxy_core::seeds::FilterMode;

const EXIT_CONFIG: u8 = 1;
const EXIT_FRAMES: u8 = 2;

#[derive(Parser)]
#[command(name = "stereoproxy", version, about = "Distill disparity proxy labels from stereo pairs")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides STEREOPROXY_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Frame workers, 0 for all cores (overrides STEREOPROXY_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Global random seed for distillation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Args)]
struct ManifestArg {
    /// Frame list.
    #[arg(long, short)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Left and right disparity maps.
    Match {
        #[command(flatten)]
        m: ManifestArg,
        #[arg(long, value_parser = ["bm", "sgm"])]
        matcher: Option<String>,
    },
    /// Sparse reliable seeds.
    Filter {
        #[command(flatten)]
        m: ManifestArg,
        #[arg(long, value_parser = ["bm", "sgm"])]
        matcher: Option<String>,
        #[arg(long, value_parser = ["lrc-only", "confidence"])]
        mode: Option<String>,
        #[arg(long)]
        target_density: Option<f64>,
    },
    /// Consensus proxy labels from the seeds.
    Distill {
        #[command(flatten)]
        m: ManifestArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        p_sample: Option<f64>,
        /// External completer command line, split on whitespace.
        #[arg(long)]
        external: Option<String>,
    },
    /// Background fill every map in a directory.
    Holefill {
        #[arg(long)]
        pred: PathBuf,
    },
    /// Score predictions against ground truth.
    Eval {
        #[command(flatten)]
        m: ManifestArg,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_parser = ["count-as-error", "exclude"])]
        policy: Option<String>,
    },
    /// Render a disparity map in color.
    Colorize {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 192.0)]
        d_max: f32,
    },
    /// Manifest helpers.
    #[command(subcommand)]
    Manifest(ManifestCmd),
}

#[derive(Subcommand)]
enum ManifestCmd {
    /// Write a manifest for a dataset directory.
    Gen {
        #[arg(long, value_enum)]
        layout: Layout,
        #[arg(long)]
        root: PathBuf,
        /// Drive or frame names to leave out, one per line.
        #[arg(long)]
        exclude: Option<PathBuf>,
        /// Destination; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn matcher_kind(s: &str) -> MatcherKind {
    if s == "bm" {
        MatcherKind::Bm
    } else {
        MatcherKind::Sgm
    }
}

fn build_config(cli: &Cli) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.consensus.seed = s;
    }
    match &cli.command {
        Some(Cmd::Match { matcher, .. }) => {
            if let Some(m) = matcher {
                cfg.matcher.kind = matcher_kind(m);
            }
        }
        Some(Cmd::Filter {
            matcher,
            mode,
            target_density,
            ..
        }) => {
            if let Some(m) = matcher {
                cfg.matcher.kind = matcher_kind(m);
            }
            if let Some(m) = mode {
                cfg.filter.mode = if m == "confidence" {
                    FilterMode::Confidence
                } else {
                    FilterMode::LrcOnly
                };
            }
            if target_density.is_some() {
                cfg.filter.target_density = *target_density;
            }
        }
        Some(Cmd::Distill {
            n,
            gamma,
            p_sample,
            external,
            ..
        }) => {
            if let Some(n) = n {
                cfg.consensus.n = *n;
            }
            if let Some(g) = gamma {
                cfg.consensus.gamma = *g;
            }
            if p_sample.is_some() {
                cfg.consensus.p_sample = *p_sample;
            }
            if let Some(cmd) = external {
                cfg.completer.mode = CompleterMode::External;
                cfg.completer.command = cmd.split_whitespace().map(str::to_owned).collect();
            }
        }
        Some(Cmd::Eval { policy: Some(p), .. }) => {
            cfg.eval.policy = if p == "exclude" {
                InvalidPolicy::Exclude
            } else {
                InvalidPolicy::CountAsError
            };
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_manifest(path: &Path) -> Result<Manifest, ExitCode> {
    Manifest::load(path).map_err(|e| {
        log::error!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn finish<T>(name: &str, summary: &pipeline::RunSummary<T>) -> ExitCode {
    let failed = summary.failures();
    log::info!("{name}: {} frames, {failed} failed", summary.frames.len());
    if failed > 0 {
        ExitCode::from(EXIT_FRAMES)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli, cfg: PipelineConfig) -> anyhow::Result<ExitCode> {
    let Some(command) = cli.command else {
        eprintln!("no command given; see --help");
        return Ok(ExitCode::from(EXIT_CONFIG));
    };
    let code = match command {
        Cmd::Match { m, .. } => {
            let manifest = match load_manifest(&m.manifest) {
                Ok(x) => x,
                Err(c) => return Ok(c),
            };
            finish("match", &pipeline::cmd_match(&manifest, &cfg)?)
        }
        Cmd::Filter { m, .. } => {
            let manifest = match load_manifest(&m.manifest) {
                Ok(x) => x,
                Err(c) => return Ok(c),
            };
            let s = pipeline::cmd_filter(&manifest, &cfg)?;
            let densities: Vec<f64> = s.successes().map(|(_, d)| *d).collect();
            if !densities.is_empty() {
                let mean = densities.iter().sum::<f64>() / densities.len() as f64;
                let min = densities.iter().copied().fold(f64::INFINITY, f64::min);
                let max = densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                println!(
                    "seed density over {} frames: mean {:.2}%, min {:.2}%, max {:.2}%",
                    densities.len(),
                    100.0 * mean,
                    100.0 * min,
                    100.0 * max
                );
            }
            finish("filter", &s)
        }
        Cmd::Distill { m, .. } => {
            let manifest = match load_manifest(&m.manifest) {
                Ok(x) => x,
                Err(c) => return Ok(c),
            };
            let s = pipeline::cmd_distill(&manifest, &cfg)?;
            for (id, info) in s.successes() {
                println!("{id}: {} seeds, proxy density {:.2}%", info.seeds, 100.0 * info.density);
            }
            finish("distill", &s)
        }
        Cmd::Holefill { pred } => finish("holefill", &pipeline::cmd_holefill(&pred, &cfg)?),
        Cmd::Eval { m, pred, .. } => {
            let manifest = match load_manifest(&m.manifest) {
                Ok(x) => x,
                Err(c) => return Ok(c),
            };
            let out = pipeline::cmd_eval(&manifest, &pred, &cfg)?;
            print!("{}", out.text);
            finish("eval", &out.summary)
        }
        Cmd::Colorize { input, output, d_max } => {
            if !(d_max > 0.0) {
                log::error!("--d-max must be positive");
                return Ok(ExitCode::from(EXIT_CONFIG));
            }
            io::save_colorized(&io::load_disparity(&input)?, d_max, &output)?;
            ExitCode::SUCCESS
        }
        Cmd::Manifest(ManifestCmd::Gen {
            layout,
            root,
            exclude,
            output,
        }) => {
            let exclude = match exclude {
                Some(p) => manifest::read_exclusions(&p)?,
                None => Default::default(),
            };
            let m = manifest::generate(&root, layout, &exclude)?;
            log::info!("{} frames", m.frames.len());
            match output {
                Some(p) => std::fs::write(&p, m.to_toml())?,
                None => print!("{}", m.to_toml()),
            }
            ExitCode::SUCCESS
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            log::error!("configuration: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    match run(cli, cfg) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
