//! Long-running subcommands: `serve` and `sim`.

use std::path::PathBuf;

use serde_json::json;
use shellforge_core::asset::{sim_run, SimConfig};
use shellforge_core::server::{serve as start_server, serve_bundle, ServerConfig, ServerHandle};

use crate::config::{resolve_port, FileConfig};
use crate::{domain, CliError, Report, ServeArgs, SimArgs};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_SIM_PORT: u16 = 4841;

async fn ctrl_c() -> Result<(), CliError> {
    tokio::signal::ctrl_c().await.map_err(|e| CliError::Domain(format!("cannot wait for ctrl-c: {e}")))
}

async fn describe(handle: &ServerHandle, json: bool) {
    let repo = handle.repo();
    let shells = repo.shells().await;
    let errors = repo.load_errors();
    if json {
        let diag = repo.diagnostics().await;
        println!("{}", json!({ "url": handle.url(), "shells": shells, "diagnostics": diag }));
        return;
    }
    println!("listening on {}", handle.url());
    for s in &shells {
        println!("  Lvl {}  {}  /shells/{}", s.level, s.id, s.id_b64);
    }
    for e in &errors {
        println!("  load error: {}: {}", e.file, e.error);
    }
    let diag = repo.diagnostics().await;
    if let Some(sandbox) = diag.get("sandbox") {
        println!("  sandbox: {sandbox}");
    }
}

pub async fn serve(args: &ServeArgs, cfg: &FileConfig, json: bool) -> Result<Report, CliError> {
    let handle = match &args.bundle {
        Some(dir) => {
            let port = match args.port.is_some() || std::env::var_os("SHELLFORGE_PORT").is_some() {
                true => Some(resolve_port(args.port, cfg, DEFAULT_PORT)?),
                false => None,
            };
            serve_bundle(dir, port).await.map_err(domain)?
        }
        None => {
            let dir: Option<PathBuf> = args.dir.clone().or_else(|| cfg.dir.clone());
            if let Some(d) = &dir {
                if !d.is_dir() {
                    return Err(CliError::Domain(format!("package directory {} does not exist", d.display())));
                }
            }
            let server = ServerConfig {
                host: args.host.clone().or_else(|| cfg.host.clone()).unwrap_or_else(|| "127.0.0.1".into()),
                port: resolve_port(args.port, cfg, DEFAULT_PORT)?,
                dir,
                token: args.token.clone().or_else(|| cfg.token.clone()),
                auto_sync: !args.no_sync,
                ..ServerConfig::default()
            };
            start_server(server).await.map_err(domain)?
        }
    };
    describe(&handle, json).await;
    let url = handle.url();
    ctrl_c().await?;
    handle.stop().await;
    Ok(Report::new("stopped", json!({ "stopped": url })))
}

pub async fn sim(args: &SimArgs, json: bool) -> Result<Report, CliError> {
    if !(args.time_scale > 0.0) {
        return Err(CliError::Usage("--time-scale must be positive".into()));
    }
    let cfg = SimConfig {
        host: args.host.clone(),
        port: args.port.unwrap_or(DEFAULT_SIM_PORT),
        time_scale: args.time_scale,
        ..SimConfig::default()
    };
    let sim = sim_run(&cfg).await.map_err(domain)?;
    if let Some(t) = args.freeze {
        sim.clock().freeze(t);
    }
    if json {
        println!("{}", json!({ "addr": sim.addr().to_string(), "frozen": args.freeze }));
    } else {
        println!("simulator listening on {}", sim.addr());
        if let Some(t) = args.freeze {
            println!("  clock frozen at t={t}");
        }
    }
    ctrl_c().await?;
    let served = sim.requests_served();
    sim.stop().await;
    Ok(Report::new(format!("stopped after {served} requests"), json!({ "requestsServed": served })))
}
