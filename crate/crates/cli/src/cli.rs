//! Command line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use doodle_core::optimize::config::{DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_ITERS, DEFAULT_PATCH_SIZE, DEFAULT_SEED};
use doodle_core::{Gamma, IterationRecord, RenderObserver, Tensor};

use crate::config::{JobConfig, Levels};
use crate::io;
use crate::job::{self, JobInputs, RunError};
use crate::service::{self, ServeOptions, DEFAULT_BIND};

/// Environment variable capping worker threads.
pub const THREADS_VAR: &str = "DOODLE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "doodle", version, about = "Semantic style transfer with painted annotation maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one image, or start the HTTP service with --serve.
    Render(RenderArgs),
}

#[derive(Debug, clap::Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub content: Option<PathBuf>,
    #[arg(long)]
    pub style: Option<PathBuf>,
    #[arg(long)]
    pub content_map: Option<PathBuf>,
    #[arg(long)]
    pub style_map: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Content weight.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Style weight.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    /// Semantic weight, `auto` or a number.
    #[arg(long, default_value_t = Gamma::Auto)]
    pub gamma: Gamma,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    pub patch_size: usize,
    /// Comma-separated levels, coarse to fine; each is a shorter side or HxW.
    #[arg(long)]
    pub resolutions: Option<Levels>,
    /// L-BFGS iterations per level.
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    pub iters: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Extractor weight file; the built-in network when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Run the HTTP job service instead of a single render.
    #[arg(long)]
    pub serve: bool,
    #[arg(long, default_value = DEFAULT_BIND)]
    pub bind: String,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Allowed browser origin for cross-origin requests to the service.
    #[arg(long)]
    pub cors_origin: Option<String>,
}

impl RenderArgs {
    pub fn job_config(&self) -> JobConfig {
        JobConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            patch_size: self.patch_size,
            resolutions: self.resolutions.clone(),
            iters: self.iters,
            seed: self.seed,
        }
    }
}

/// Prints one line per outer iteration to standard error.
pub struct StderrLog;

impl RenderObserver for StderrLog {
    fn on_level_start(&mut self, level: usize, levels: usize, init: &Tensor) {
        eprintln!("level {}/{levels} {}x{}", level + 1, init.height(), init.width());
    }

    fn on_iteration(&mut self, record: &IterationRecord, _image: &Tensor) -> bool {
        let r = &record.report;
        let style: Vec<String> = r.style.iter().map(|s| format!("{s:.6e}")).collect();
        let accepted = record
            .accepted
            .map_or_else(|| "line-search-failed".to_string(), |v| format!("{v:.6e}"));
        eprintln!(
            "level={} iter={} total={:.6e} content={:.6e} style=[{}] accepted={accepted}",
            r.level,
            r.iteration,
            r.total,
            r.content,
            style.join(",")
        );
        true
    }
}

/// Sizes the global rayon pool from `DOODLE_THREADS`, once per process.
pub fn init_threads() -> Result<usize, RunError> {
    let n = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| RunError::Usage(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(rayon::current_num_threads())
}

fn require(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf, RunError> {
    p.clone()
        .ok_or_else(|| RunError::Usage(format!("--{flag} is required")))
}

fn render_once(args: &RenderArgs) -> Result<(), RunError> {
    let threads = init_threads()?;
    let content = require(&args.content, "content")?;
    let style = require(&args.style, "style")?;
    let out = require(&args.out, "out")?;
    match (&args.content_map, &args.style_map) {
        (Some(_), None) | (None, Some(_)) => {
            return Err(RunError::Usage(
                "--content-map and --style-map must be given together and have the same M channels".into(),
            ))
        }
        _ => {}
    }
    let config = args.job_config();
    config.validate()?;
    let mut err = std::io::stderr().lock();
    let _ = writeln!(
        err,
        "doodle render content={} style={} content_map={} style_map={} out={} alpha={} beta={} gamma={} patch_size={} resolutions={} iters={} seed={} threads={threads}",
        content.display(),
        style.display(),
        args.content_map.as_ref().map_or("-".into(), |p| p.display().to_string()),
        args.style_map.as_ref().map_or("-".into(), |p| p.display().to_string()),
        out.display(),
        config.alpha,
        config.beta,
        config.gamma,
        config.patch_size,
        config.resolutions.as_ref().map_or("default".into(), |l| l.to_string()),
        config.iters,
        config.seed,
    );
    drop(err);
    let inputs = JobInputs {
        content: io::load_image(&content)?,
        style: io::load_image(&style)?,
        content_map: args.content_map.as_deref().map(io::load_map).transpose()?,
        style_map: args.style_map.as_deref().map(io::load_map).transpose()?,
    };
    let net = job::load_net(args.weights.as_deref())?;
    let (inputs, cfg) = job::prepare(inputs, &config)?;
    let result = job::run(&inputs, &net, &cfg, &mut StderrLog)?;
    io::save_png(&result, &out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn serve(args: &RenderArgs) -> Result<(), RunError> {
    init_threads()?;
    let net = job::load_net(args.weights.as_deref())?;
    let opts = ServeOptions {
        bind: args.bind.clone(),
        workers: args.workers.max(1),
        cors_origin: args.cors_origin.clone(),
        ..ServeOptions::default()
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| RunError::Usage(format!("cannot start runtime: {e}")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&opts.bind)
            .await
            .map_err(|e| RunError::Usage(format!("cannot bind {}: {e}", opts.bind)))?;
        eprintln!("doodle service listening on http://{}", listener.local_addr().map_or(opts.bind.clone(), |a| a.to_string()));
        service::serve(listener, net, opts).await;
        Ok(())
    })
}

/// Parses `args` (including the program name) and runs; returns the exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let Command::Render(args) = cli.command;
    let result = if args.serve { serve(&args) } else { render_once(&args) };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
