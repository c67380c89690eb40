use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::compare::{compare_methods, AlphaOverride, ComparisonPlan};
use super::config::ExperimentConfig;
use super::run::{probe_checkpoint, run_experiment, Checkpoint};
use crate::optim::{AlphaPreset, Method, ALPHA_PRESETS};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "gncsim", version, about = "Simulated data-parallel SGD with noise convolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set optim.alpha=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Use the k-th pinned (init, sampler, rnc) seed tuple.
    #[arg(long)]
    seed_set: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (overrides run.output).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run methods × seed sets and summarize.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',', default_value = "baseline,rnc,gnc,gnc-to-rnc")]
        methods: Vec<String>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Per-method noise coefficient: `method=alpha` or `gnc-to-rnc=alpha:alpha_rnc`.
        #[arg(long = "alpha", value_name = "METHOD=VALUE")]
        alpha: Vec<String>,
        /// Take every method's noise coefficients from a named preset.
        #[arg(long)]
        preset: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Recompute diagnostics for the iteration after a saved checkpoint.
    Probe {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Check a configuration and print it resolved.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the resolved configuration.
        #[arg(long)]
        print: bool,
    },
    /// List the noise-coefficient presets.
    Presets,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn load(c: &ConfigArgs, extra: &[(&str, String)]) -> crate::Result<ExperimentConfig> {
    let mut set = c.set.clone();
    set.extend(extra.iter().map(|(k, v)| format!("{k}={v}")));
    ExperimentConfig::load(c.config.as_deref(), &set, c.seed_set)
}

/// Runs the command line and returns the process exit status.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> crate::Result<i32> {
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    match cmd {
        Command::Run { config, output } => {
            let extra: Vec<(&str, String)> =
                output.iter().map(|o| ("run.output", o.display().to_string())).collect();
            let cfg = load(&config, &extra)?;
            let o = run_experiment(&cfg)?;
            writeln!(out, "{} t={} digest={} dir={}", status_word(o.diverged()), o.terminal.t, o.digest, o.dir.display())
                .map_err(w)?;
            Ok(if o.diverged() { EXIT_DIVERGED } else { EXIT_OK })
        }
        Command::Compare { config, methods, runs, alpha, preset, output } => {
            let base = load(&config, &[])?;
            let methods: Vec<Method> = methods.iter().map(|m| m.trim().parse()).collect::<crate::Result<_>>()?;
            let mut overrides = BTreeMap::new();
            if let Some(name) = preset {
                let p = AlphaPreset::find(&name).ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
                for &m in &methods {
                    if m != Method::Baseline {
                        overrides.insert(m, AlphaOverride::from_preset(p, m));
                    }
                }
            }
            for a in &alpha {
                let (m, o) = AlphaOverride::parse(a)?;
                overrides.insert(m, o);
            }
            let plan = ComparisonPlan {
                output: output.unwrap_or_else(|| base.output.clone()),
                first_seed_set: config.seed_set.unwrap_or(0),
                base,
                methods,
                runs,
                alpha: overrides,
            };
            let s = compare_methods(&plan)?;
            for m in &s.methods {
                let stat = match (m.mean, m.std) {
                    (Some(a), Some(b)) => format!("{a:.4} ± {b:.4}"),
                    _ => "n/a".into(),
                };
                writeln!(out, "{}\t{}\tn={}\tdiverged={}\tfailed={}", m.method, stat, m.values.len(), m.diverged, m.failed)
                    .map_err(w)?;
            }
            writeln!(out, "summary: {}", plan.output.join(super::compare::SUMMARY_MD).display()).map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::Probe { config, checkpoint } => {
            let cfg = load(&config, &[])?;
            let rec = probe_checkpoint(&cfg, &Checkpoint::load(&checkpoint)?)?;
            let text = serde_json::to_string(&rec).map_err(|e| Error::InternalState(e.to_string()))?;
            writeln!(out, "{text}").map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::ValidateConfig { config, print } => {
            let cfg = load(&config, &[])?;
            if print {
                write!(out, "{}", cfg.map().canonical()).map_err(w)?;
            } else {
                writeln!(
                    out,
                    "ok: {} iterations per epoch, {} iterations",
                    cfg.iterations_per_epoch(),
                    cfg.total_iterations()
                )
                .map_err(w)?;
            }
            Ok(EXIT_OK)
        }
        Command::Presets => {
            writeln!(out, "name\tdataset\tbatch\trnc\tgnc\tgnc-to-rnc").map_err(w)?;
            for p in ALPHA_PRESETS {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}:{}",
                    p.name, p.dataset, p.batch_size, p.rnc, p.gnc, p.gnc_to_rnc.0, p.gnc_to_rnc.1
                )
                .map_err(w)?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn status_word(diverged: bool) -> &'static str {
    if diverged {
        "diverged"
    } else {
        "finished"
    }
}
