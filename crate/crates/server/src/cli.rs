//! `etb` command line. Reports go to stdout as one JSON object per line;
//! failures go to stderr with exit code 1, usage errors exit with 2.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use etb_core::access::{new_token, Actor, Role};
use etb_core::csv::parse_csv;
use etb_core::federation::{full_resync, sync_until_quiescent, SyncOptions, SyncReport};
use etb_core::model::{CollectionMeta, LangCode, Visibility};
use etb_core::store::ExchangeFormat;
use etb_core::tbx::parse_tbx;
use etb_core::validate::{has_errors, validate_entry};
use serde_json::{json, Value};
use uuid::Uuid;

use crate::config::{Config, Mode};
use crate::instance::Instance;
use crate::logging::{format_ts, read_log, Level, LogLine};

#[derive(Debug, Parser)]
#[command(name = "etb", version, about = "Federated terminology node and central aggregator")]
struct Cli {
    /// Instance config file.
    #[arg(long, global = true, env = "ETB_CONFIG", default_value = "etb.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service until interrupted.
    Serve,
    /// Create a data directory with a fresh config.
    Init {
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
    /// Manage user accounts and group roles.
    User {
        #[command(subcommand)]
        command: UserCommand,
    },
    /// Create and list collections.
    Collection {
        #[command(subcommand)]
        command: CollectionCommand,
    },
    /// Import a TBX or CSV file into a collection ("-" reads stdin).
    Import {
        #[arg(long)]
        collection: Uuid,
        #[arg(long)]
        format: ExchangeFormat,
        file: PathBuf,
    },
    /// Export a collection ("-" writes stdout).
    Export {
        #[arg(long)]
        collection: Uuid,
        #[arg(long)]
        format: ExchangeFormat,
        #[arg(long)]
        include_drafts: bool,
        file: PathBuf,
    },
    /// Check a TBX or CSV file without importing it.
    Validate {
        #[arg(long)]
        format: ExchangeFormat,
        file: PathBuf,
    },
    /// Push public changes to the central.
    Sync {
        #[command(subcommand)]
        command: SyncCommand,
    },
    /// Manage member nodes (central only).
    Node {
        #[command(subcommand)]
        command: NodeCommand,
    },
    /// Print log lines as JSON.
    Logs {
        #[arg(long, default_value = "debug")]
        level: Level,
        /// RFC 3339 timestamp.
        #[arg(long)]
        since: Option<DateTime<Utc>>,
    },
}

#[derive(Debug, Subcommand)]
enum UserCommand {
    Add {
        #[arg(long)]
        username: String,
        #[arg(long, env = "ETB_PASSWORD", hide_env_values = true)]
        password: String,
        /// Group to join, created if missing.
        #[arg(long, requires = "role")]
        group: Option<String>,
        #[arg(long, requires = "group")]
        role: Option<Role>,
    },
    /// Grant a group role, or revoke it with `--role none`.
    Role {
        #[arg(long)]
        username: String,
        #[arg(long)]
        group: String,
        #[arg(long)]
        role: RoleArg,
    },
}

#[derive(Debug, Clone, Copy)]
struct RoleArg(Option<Role>);

impl std::str::FromStr for RoleArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            Ok(RoleArg(None))
        } else {
            s.parse().map(|r| RoleArg(Some(r)))
        }
    }
}

#[derive(Debug, Subcommand)]
enum CollectionCommand {
    Create {
        #[arg(long)]
        name: String,
        /// Owning group, created if missing.
        #[arg(long)]
        group: String,
        #[arg(long)]
        description: Option<String>,
        #[arg(long = "domain")]
        domains: Vec<String>,
        #[arg(long = "language")]
        languages: Vec<String>,
        #[arg(long, default_value = "private")]
        visibility: Visibility,
    },
    List,
}

#[derive(Debug, Subcommand)]
enum SyncCommand {
    /// Push everything not yet acknowledged.
    Now,
    /// Have the central forget this node, then republish all public data.
    FullResync,
}

#[derive(Debug, Subcommand)]
enum NodeCommand {
    /// Register a node and print its sync token.
    Register {
        #[arg(long)]
        name: String,
        #[arg(long)]
        node_id: Option<Uuid>,
    },
    List,
    /// Forget a node and everything it published.
    Purge {
        #[arg(long)]
        node_id: Uuid,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut out = io::stdout().lock();
    match execute(cli, &mut out) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("{}", json!({ "error": message }));
            1
        }
    }
}

fn emit(out: &mut dyn Write, value: &Value) -> Result<(), String> {
    writeln!(out, "{value}").map_err(|e| e.to_string())
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn open(config_path: &Path) -> Result<Instance, String> {
    Instance::open(Config::load(config_path).map_err(|e| e.to_string())?)
}

fn read_input(file: &Path) -> Result<Vec<u8>, String> {
    if file == Path::new("-") {
        let mut bytes = Vec::new();
        io::stdin().read_to_end(&mut bytes).map_err(|e| e.to_string())?;
        Ok(bytes)
    } else {
        fs::read(file).map_err(|e| format!("cannot read {}: {e}", file.display()))
    }
}

fn sync_report(report: SyncReport) -> Value {
    json!({ "batches": report.batches, "records": report.records, "cursor": report.cursor })
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, String> {
    match cli.command {
        Command::Serve => serve(&cli.config).map(|()| 0),
        Command::Init { mode, data_dir, listen } => init(mode, &data_dir, listen, out).map(|()| 0),
        Command::User { command } => {
            let instance = open(&cli.config)?;
            let node = instance.node()?;
            let report = match command {
                UserCommand::Add { username, password, group, role } => {
                    let user_id = node.add_user(&username, &password, &Actor::System).map_err(|e| e.to_string())?;
                    let mut report = json!({ "user_id": user_id, "username": username });
                    if let (Some(group), Some(role)) = (group, role) {
                        let group_id = node.create_group(&group, &Actor::System).map_err(|e| e.to_string())?;
                        node.set_role(user_id, group_id, Some(role), &Actor::System).map_err(|e| e.to_string())?;
                        report["group_id"] = json!(group_id);
                        report["role"] = json!(role);
                    }
                    report
                }
                UserCommand::Role { username, group, role } => {
                    let user = node.user_by_name(&username).ok_or_else(|| format!("unknown user {username:?}"))?;
                    let group_id = node.create_group(&group, &Actor::System).map_err(|e| e.to_string())?;
                    node.set_role(user.id, group_id, role.0, &Actor::System).map_err(|e| e.to_string())?;
                    json!({ "user_id": user.id, "group_id": group_id, "role": role.0 })
                }
            };
            emit(out, &report).map(|()| 0)
        }
        Command::Collection { command } => {
            let instance = open(&cli.config)?;
            let node = instance.node()?;
            match command {
                CollectionCommand::Create { name, group, description, domains, languages, visibility } => {
                    let group_id = node.create_group(&group, &Actor::System).map_err(|e| e.to_string())?;
                    let mut meta = CollectionMeta::new(name);
                    meta.description = description;
                    meta.domains = domains;
                    meta.declared_languages = languages.iter().map(LangCode::new).collect();
                    let id = node.create_collection(meta, group_id, &Actor::System).map_err(|e| e.to_string())?;
                    if visibility != Visibility::Private {
                        node.set_visibility(id, visibility, &Actor::System).map_err(|e| e.to_string())?;
                    }
                    let collection = node.collection(id, &Actor::System).map_err(|e| e.to_string())?;
                    emit(out, &to_value(&collection))?;
                }
                CollectionCommand::List => {
                    for collection in node.list_collections(&Actor::System) {
                        emit(out, &to_value(&collection))?;
                    }
                }
            }
            Ok(0)
        }
        Command::Import { collection, format, file } => {
            let bytes = read_input(&file)?;
            let instance = open(&cli.config)?;
            let report = instance
                .node()?
                .import_collection(collection, format, &bytes, &Actor::System)
                .map_err(|e| e.to_string())?;
            emit(out, &to_value(&report)).map(|()| 0)
        }
        Command::Export { collection, format, include_drafts, file } => {
            let instance = open(&cli.config)?;
            let bytes = instance
                .node()?
                .export_collection(collection, format, include_drafts, &Actor::System)
                .map_err(|e| e.to_string())?;
            if file == Path::new("-") {
                out.write_all(&bytes).map_err(|e| e.to_string())?;
            } else {
                fs::write(&file, &bytes).map_err(|e| format!("cannot write {}: {e}", file.display()))?;
                emit(out, &json!({ "collection": collection, "bytes": bytes.len(), "file": file }))?;
            }
            Ok(0)
        }
        Command::Validate { format, file } => validate(format, &read_input(&file)?, out),
        Command::Sync { command } => {
            let instance = open(&cli.config)?;
            let node = instance.node()?;
            let transport = instance.transport()?;
            let options = SyncOptions::default();
            let (route, result) = match command {
                SyncCommand::Now => ("sync", sync_until_quiescent(node, &transport, &options)),
                SyncCommand::FullResync => ("full-resync", full_resync(node, &transport, &options)),
            };
            match result {
                Ok(report) => {
                    instance.log.emit(&LogLine::event(Level::Info, route, "ok"));
                    emit(out, &sync_report(report)).map(|()| 0)
                }
                Err(e) => {
                    instance.log.emit(&LogLine::event(Level::Error, route, "failed").with_detail(e.to_string()));
                    Err(e.to_string())
                }
            }
        }
        Command::Node { command } => {
            let instance = open(&cli.config)?;
            let central = instance.central()?;
            match command {
                NodeCommand::Register { name, node_id } => {
                    let node_id = node_id.unwrap_or_else(Uuid::new_v4);
                    let token = central.register(node_id, &name).map_err(|e| e.to_string())?;
                    emit(out, &json!({ "node_id": node_id, "display_name": name, "token": token }))?;
                }
                NodeCommand::List => {
                    for node in central.nodes() {
                        emit(out, &to_value(&node))?;
                    }
                }
                NodeCommand::Purge { node_id } => {
                    if !central.purge_node(node_id).map_err(|e| e.to_string())? {
                        return Err(format!("unknown node {node_id}"));
                    }
                    emit(out, &json!({ "purged": node_id }))?;
                }
            }
            Ok(0)
        }
        Command::Logs { level, since } => {
            let config = Config::load(&cli.config).map_err(|e| e.to_string())?;
            for line in read_log(&config.log_path(), level, since).map_err(|e| e.to_string())? {
                emit(out, &to_value(&line))?;
            }
            Ok(0)
        }
    }
}

fn init(mode: Mode, data_dir: &Path, listen: Option<SocketAddr>, out: &mut dyn Write) -> Result<(), String> {
    fs::create_dir_all(data_dir).map_err(|e| format!("cannot create {}: {e}", data_dir.display()))?;
    let config_path = data_dir.join("etb.toml");
    if config_path.exists() {
        return Err(format!("{} already exists", config_path.display()));
    }
    let mut config = Config::new(mode, ".");
    if let Some(listen) = listen {
        config.listen_address = listen;
    }
    match mode {
        Mode::Node => config.node_id = Some(Uuid::new_v4()),
        Mode::Central => config.admin_token = Some(new_token()),
    }
    fs::write(&config_path, config.to_toml()).map_err(|e| e.to_string())?;
    // Opening creates the store files.
    drop(open(&config_path)?);
    emit(
        out,
        &json!({
            "config": config_path,
            "mode": mode,
            "node_id": config.node_id,
            "admin_token": config.admin_token,
        }),
    )
}

fn validate(format: ExchangeFormat, bytes: &[u8], out: &mut dyn Write) -> Result<i32, String> {
    let (entries, mut issues) = match format {
        ExchangeFormat::Tbx => parse_tbx(bytes).map(|d| (d.entries, d.issues)).map_err(|e| e.to_string())?,
        ExchangeFormat::Csv => parse_csv(bytes).map_err(|e| e.to_string())?,
    };
    for entry in &entries {
        issues.extend(validate_entry(entry));
    }
    let valid = !has_errors(&issues);
    emit(out, &json!({ "entries": entries.len(), "valid": valid, "issues": issues }))?;
    Ok(if valid { 0 } else { 1 })
}

fn serve(config_path: &Path) -> Result<(), String> {
    let mut instance = open(config_path)?;
    instance.start_sync()?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let listen = instance.config.listen_address;
    let router = instance.router();
    let served: Result<(), String> = runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await.map_err(|e| format!("cannot bind {listen}: {e}"))?;
        let local = listener.local_addr().map_err(|e| e.to_string())?;
        eprintln!("{}", json!({ "ts": format_ts(&Utc::now()), "event": "listening", "address": local }));
        axum::serve(listener, router).with_graceful_shutdown(shutdown_signal()).await.map_err(|e| e.to_string())
    });
    drop(runtime);
    let closed = instance.shutdown();
    served.and(closed)
}

async fn shutdown_signal() {
    let interrupt = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = interrupt => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = interrupt.await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = interrupt.await;
    }
}
