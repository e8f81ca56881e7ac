use std::io::{IsTerminal, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Args;
use lrtrial_service::SessionStore;
use tokio::net::TcpListener;

use crate::Failure;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Port to listen on; 0 picks a free one.
    #[arg(long, env = "LRTRIAL_PORT", default_value_t = 8080)]
    port: u16,
    /// Directory holding one event log per session.
    #[arg(long, env = "LRTRIAL_DATA_DIR", default_value = "lrtrial-data")]
    data_dir: PathBuf,
    /// Address to bind.
    #[arg(long, env = "LRTRIAL_HOST", default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    host: IpAddr,
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

pub fn run(args: ServeArgs) -> Result<ExitCode, Failure> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let runtime = |e: std::io::Error| Failure::Runtime(e.to_string());
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async move {
        let addr = SocketAddr::new(args.host, args.port);
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::Runtime(format!("cannot listen on {addr}: {e}")))?;
        let store = SessionStore::open(&args.data_dir)
            .map_err(|e| Failure::Runtime(format!("opening {}: {e}", args.data_dir.display())))?;
        let local = listener.local_addr().map_err(runtime)?;
        println!("listening on http://{local}");
        let _ = std::io::stdout().flush();
        lrtrial_service::serve(listener, Arc::new(store), shutdown_signal())
            .await
            .map_err(runtime)?;
        println!("shut down cleanly");
        Ok(ExitCode::SUCCESS)
    })
}
