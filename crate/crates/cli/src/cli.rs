use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saa_core::backends::OracleFixture;
use saa_core::Mode;

use crate::adapter::{self, Adapter};
use crate::commands::{self, Layout};
use crate::config::BackendFlags;
use crate::failure::{CliResult, Failure};
use crate::service::{self, AppState, DEFAULT_RUN_SLOTS};

#[derive(Debug, Parser)]
#[command(name = "saa", version, about = "Zero-shot anomaly segmentation with SAA and SAA+")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct BackendArgs {
    /// JSON backend config: {"kind": "oracle" | "remote", ...}
    #[arg(long)]
    pub backend_config: Option<PathBuf>,
    /// Oracle fixture file (selects the oracle backend)
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Adapter base URL (selects the remote backend)
    #[arg(long)]
    pub backend_url: Option<String>,
    /// Extra attempts per backend request after a transport failure
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
}

impl From<&BackendArgs> for BackendFlags {
    fn from(a: &BackendArgs) -> Self {
        BackendFlags {
            config: a.backend_config.clone(),
            fixtures: a.fixtures.clone(),
            backend_url: a.backend_url.clone(),
            retries: a.retries,
            timeout_ms: a.timeout_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Mvtec,
    Visa,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the cascade on every manifest image and write maps and traces
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// saa or saa+
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score saved predictions against the manifest's ground truth
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the full model and each single prompt-family drop
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Serve the workbench API
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        /// Concurrent pipeline runs
        #[arg(long, env = "SAA_RUN_SLOTS", default_value_t = DEFAULT_RUN_SLOTS)]
        run_slots: usize,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Write the synthetic desk benchmark
    MakeDesk {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a manifest from an MVTec-AD or VisA style directory
    Manifest {
        #[arg(long, value_enum)]
        layout: LayoutArg,
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the model wire protocol from oracle fixtures
    Adapter {
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value_t = 400)]
        resolution: usize,
        /// Reject this many requests with 503 first
        #[arg(long, default_value_t = 0)]
        fail_first: usize,
    },
}

fn runtime() -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::config(format!("runtime: {e}")))
}

fn bind(host: &str, port: u16) -> CliResult<std::net::TcpListener> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Failure::config(format!("--host/--port: {e}")))?;
    let l = std::net::TcpListener::bind(addr).map_err(|e| Failure::config(format!("--port {port}: {e}")))?;
    l.set_nonblocking(true).map_err(|e| Failure::config(e.to_string()))?;
    Ok(l)
}

fn serve_router(listener: std::net::TcpListener, router: axum::Router) -> CliResult<()> {
    let addr = listener.local_addr().map_err(|e| Failure::config(e.to_string()))?;
    println!("listening on http://{addr}");
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener).map_err(|e| Failure::config(e.to_string()))?;
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::config(e.to_string()))
    })
}

pub fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Run {
            manifest,
            profile,
            mode,
            out,
            backend,
        } => {
            let doc = commands::load_profile(&profile)?;
            let backends = commands::backends_for(&(&backend).into(), &manifest)?;
            let s = commands::run(&manifest, &doc, mode, &out, &backends)?;
            println!("wrote {} maps to {}", s.images.len(), out.display());
        }
        Command::Eval { pred, manifest, out } => {
            let report = commands::eval(&pred, &manifest, &out)?;
            print!("{}", report.to_table());
            println!("mean F_p {:.4}", report.mean_max_f1_pixel);
        }
        Command::Ablate {
            manifest,
            profile,
            out,
            backend,
        } => {
            let doc = commands::load_profile(&profile)?;
            let backends = commands::backends_for(&(&backend).into(), &manifest)?;
            let table = commands::ablate(&manifest, &doc, &out, &backends)?;
            print!("{}", table.to_table());
        }
        Command::Serve {
            port,
            host,
            manifest,
            profiles,
            run_slots,
            backend,
        } => {
            let m = commands::load_dataset(&manifest)?;
            if !profiles.is_dir() {
                return Err(Failure::config(format!("--profiles {}: not a directory", profiles.display())));
            }
            let backends = commands::backends_for(&(&backend).into(), &manifest)?;
            let state = Arc::new(AppState::new(m, profiles, backends, run_slots));
            serve_router(bind(&host, port)?, service::router(state))?;
        }
        Command::MakeDesk { out } => {
            commands::make_desk(&out)?;
            println!("wrote desk benchmark to {}", out.display());
        }
        Command::Manifest {
            layout,
            root,
            dataset,
            out,
        } => {
            let layout = match layout {
                LayoutArg::Mvtec => Layout::Mvtec,
                LayoutArg::Visa => Layout::Visa,
            };
            let n = commands::manifest(layout, &root, &dataset, &out)?;
            println!("wrote {n} entries to {}", out.display());
        }
        Command::Adapter {
            port,
            host,
            manifest,
            fixtures,
            resolution,
            fail_first,
        } => {
            let m = commands::load_dataset(&manifest)?;
            let fixture = OracleFixture::load(&fixtures).map_err(|e| Failure::config(format!("--fixtures: {e}")))?;
            let a = Adapter::new(&m, fixture, resolution, fail_first)?;
            serve_router(bind(&host, port)?, adapter::router(Arc::new(a)))?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
