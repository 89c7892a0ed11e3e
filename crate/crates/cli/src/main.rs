//! `docvault`: HTTP client for the vault API plus local operator commands.

mod client;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use docvault_core::anchor::{run_harness, HarnessConfig, Ledger};
use docvault_core::clock::SystemClock;
use docvault_core::extract::corpus;
use docvault_core::orchestrate::{Config, Vault, VaultDeps, WorkerPool};
use docvault_core::store::Scope;

use client::Client;

#[derive(Parser)]
#[command(name = "docvault", version, about = "Document vault client and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Remote {
    /// API base URL.
    #[arg(long, env = "DOCVAULT_SERVER", default_value = "http://127.0.0.1:8080", global = true)]
    server: String,
    /// Bearer token from `docvault login`.
    #[arg(long, env = "DOCVAULT_TOKEN", global = true, hide_env_values = true)]
    token: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the REST server with its worker pool.
    Serve {
        #[arg(long, env = "DOCVAULT_CONFIG")]
        config: Option<PathBuf>,
    },
    /// Local account administration against a data directory.
    Admin {
        #[arg(long, env = "DOCVAULT_CONFIG")]
        config: Option<PathBuf>,
        #[command(subcommand)]
        action: AdminAction,
    },
    /// Create an owner account on the server.
    Register {
        #[command(flatten)]
        remote: Remote,
        username: String,
        #[arg(long, env = "DOCVAULT_PASSWORD", hide_env_values = true)]
        password: String,
    },
    /// Print a session token.
    Login {
        #[command(flatten)]
        remote: Remote,
        username: String,
        #[arg(long, env = "DOCVAULT_PASSWORD", hide_env_values = true)]
        password: String,
    },
    /// Upload a PNG for processing.
    Upload {
        #[command(flatten)]
        remote: Remote,
        file: PathBuf,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long)]
        idempotency_key: Option<String>,
    },
    /// Show one document, or list your documents.
    Status {
        #[command(flatten)]
        remote: Remote,
        id: Option<String>,
        /// Include the event history.
        #[arg(long)]
        events: bool,
    },
    /// Create a share link for some zones of a completed document.
    Share {
        #[command(flatten)]
        remote: Remote,
        id: String,
        /// Comma separated zone ids.
        #[arg(long, value_delimiter = ',', required = true)]
        zones: Vec<u32>,
        /// RFC 3339 expiry instant.
        #[arg(long, conflicts_with_all = ["max_accesses", "indefinite"])]
        until: Option<String>,
        #[arg(long, conflicts_with = "indefinite")]
        max_accesses: Option<u32>,
        #[arg(long)]
        indefinite: bool,
    },
    /// Deactivate a share link.
    Revoke {
        #[command(flatten)]
        remote: Remote,
        uuid: String,
    },
    /// Open a share link; optionally save the revealed image.
    Open {
        #[command(flatten)]
        remote: Remote,
        uuid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Public verification by content id or share UUID.
    Verify {
        #[command(flatten)]
        remote: Remote,
        reference: String,
    },
    /// Notary review.
    Notary {
        #[command(flatten)]
        remote: Remote,
        #[command(subcommand)]
        action: NotaryAction,
    },
    /// List or revoke facts.
    Facts {
        #[command(flatten)]
        remote: Remote,
        #[command(subcommand)]
        action: FactsAction,
    },
    /// Synthetic card corpus.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Load harnesses.
    Harness {
        #[command(subcommand)]
        action: HarnessAction,
    },
}

#[derive(Subcommand)]
enum AdminAction {
    /// Create a user with explicit scopes.
    CreateUser {
        username: String,
        #[arg(long, env = "DOCVAULT_PASSWORD", hide_env_values = true)]
        password: String,
        #[arg(long, value_delimiter = ',', default_value = "owner")]
        scopes: Vec<Scope>,
    },
    /// Give a notary-scoped user a signing key.
    RegisterNotary { user_id: String },
}

#[derive(Subcommand)]
enum NotaryAction {
    Queue,
    Claim {
        id: String,
    },
    Approve {
        id: String,
        /// Corrected value, as field=value. Repeatable.
        #[arg(long = "correct", value_parser = parse_correction)]
        corrections: Vec<(String, String)>,
    },
    Reject {
        id: String,
        #[arg(long)]
        reason: String,
    },
}

#[derive(Subcommand)]
enum FactsAction {
    List { subject: String },
    Revoke {
        hash: String,
        #[arg(long)]
        reason: String,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Write card PNGs, truth.json and template manifests.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_template: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum HarnessAction {
    /// Parallel submitters against an in-process ledger.
    Anchor {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        parallelism: usize,
        #[arg(long, default_value_t = 50)]
        seal_ms: u64,
        /// Per-request latency CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Persist the chain here instead of keeping it in memory.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
}

fn parse_correction(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected field=value, got {s:?}"))
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn open_vault(config: Option<PathBuf>) -> Result<(Config, Vault)> {
    let cfg = Config::load(config.as_deref())?;
    let vault = Vault::open(cfg.clone(), VaultDeps::default()).context("opening the data directory")?;
    Ok((cfg, vault))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Serve { config } => {
            let (cfg, vault) = open_vault(config)?;
            docvault_server::init_logging(&cfg.logs_dir())?;
            let vault = Arc::new(vault);
            let pool = WorkerPool::start(vault.clone(), cfg.workers)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(docvault_server::serve(vault, &cfg.bind))?;
            pool.shutdown();
        }
        Command::Admin { config, action } => {
            let (_, vault) = open_vault(config)?;
            match action {
                AdminAction::CreateUser {
                    username,
                    password,
                    scopes,
                } => {
                    let p = vault.register_user(&username, &password, &scopes)?;
                    print(&serde_json::to_value(p)?);
                }
                AdminAction::RegisterNotary { user_id } => {
                    let system = docvault_core::orchestrate::Principal {
                        user_id: "system".into(),
                        username: "system".into(),
                        scopes: BTreeSet::from([Scope::Admin]),
                    };
                    print(&json!({ "notary_id": vault.register_notary(&system, &user_id)? }));
                }
            }
        }
        Command::Register {
            remote,
            username,
            password,
        } => print(&Client::new(&remote.server, None)?.post(
            "/auth/register",
            &json!({"username": username, "password": password}),
        )?),
        Command::Login {
            remote,
            username,
            password,
        } => {
            let v = Client::new(&remote.server, None)?
                .post("/auth/login", &json!({"username": username, "password": password}))?;
            println!("{}", v["token"].as_str().context("no token in response")?);
        }
        Command::Upload {
            remote,
            file,
            description,
            idempotency_key,
        } => {
            let png = std::fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            print(&client(&remote)?.post(
                "/documents",
                &json!({
                    "image_png": B64.encode(png),
                    "description": description,
                    "idempotency_key": idempotency_key,
                }),
            )?);
        }
        Command::Status { remote, id, events } => {
            let c = client(&remote)?;
            match id {
                Some(id) if events => print(&c.get(&format!("/documents/{id}/events"))?),
                Some(id) => print(&c.get(&format!("/documents/{id}"))?),
                None => print(&c.get("/documents")?),
            }
        }
        Command::Share {
            remote,
            id,
            zones,
            until,
            max_accesses,
            indefinite,
        } => {
            let mut body = json!({ "zones": zones });
            match (until, max_accesses, indefinite) {
                (Some(u), None, false) => {
                    let t = chrono::DateTime::parse_from_rfc3339(&u).context("--until must be RFC 3339")?;
                    body["mode"] = "until".into();
                    body["until"] = t.to_rfc3339().into();
                }
                (None, Some(n), false) => {
                    body["mode"] = "max_accesses".into();
                    body["max_accesses"] = n.into();
                }
                (None, None, true) => body["mode"] = "indefinite".into(),
                _ => bail!("pick one of --until, --max-accesses or --indefinite"),
            }
            print(&client(&remote)?.post(&format!("/documents/{id}/shares"), &body)?);
        }
        Command::Revoke { remote, uuid } => {
            client(&remote)?.delete(&format!("/shares/{uuid}"))?;
            println!("revoked {uuid}");
        }
        Command::Open { remote, uuid, out } => {
            let mut v = Client::new(&remote.server, None)?.get(&format!("/share/{uuid}"))?;
            if let Some(path) = out {
                let png = B64
                    .decode(v["revealed_png"].as_str().context("no image in response")?)
                    .context("image is not base64")?;
                std::fs::write(&path, png)?;
                eprintln!("wrote {}", path.display());
            }
            // The images are large; the summary is what a terminal wants.
            if let Some(o) = v.as_object_mut() {
                o.remove("revealed_png");
                o.remove("obfuscated_png");
            }
            print(&v);
        }
        Command::Verify { remote, reference } => {
            print(&Client::new(&remote.server, None)?.get(&format!("/verify/{reference}"))?)
        }
        Command::Notary { remote, action } => {
            let c = client(&remote)?;
            let v = match action {
                NotaryAction::Queue => c.get("/notary/queue")?,
                NotaryAction::Claim { id } => c.post(&format!("/notary/{id}/claim"), &json!({}))?,
                NotaryAction::Approve { id, corrections } => {
                    let corrections: BTreeMap<String, String> = corrections.into_iter().collect();
                    c.post(
                        &format!("/notary/{id}/decision"),
                        &json!({"decision": "approve", "corrections": corrections}),
                    )?
                }
                NotaryAction::Reject { id, reason } => c.post(
                    &format!("/notary/{id}/decision"),
                    &json!({"decision": "reject", "reason": reason}),
                )?,
            };
            print(&v);
        }
        Command::Facts { remote, action } => {
            let c = client(&remote)?;
            let v = match action {
                FactsAction::List { subject } => c.get(&format!("/facts/{subject}"))?,
                FactsAction::Revoke { hash, reason } => {
                    c.post(&format!("/facts/{hash}/revoke"), &json!({ "reason": reason }))?
                }
            };
            print(&v);
        }
        Command::Corpus {
            action: CorpusAction::Generate { out, per_template, seed },
        } => {
            std::fs::create_dir_all(&out)?;
            let entries = corpus::write_corpus(&out, per_template, seed)?;
            eprintln!("wrote {} documents to {}", entries.len(), out.display());
        }
        Command::Harness {
            action:
                HarnessAction::Anchor {
                    n,
                    parallelism,
                    seal_ms,
                    csv,
                    ledger,
                },
        } => {
            let clock = Arc::new(SystemClock);
            let ledger = Arc::new(match ledger {
                Some(p) => Ledger::open(&p, clock)?,
                None => Ledger::in_memory(clock),
            });
            let cfg = HarnessConfig {
                requests: n,
                parallelism,
                seal_interval: Duration::from_millis(seal_ms),
                ..HarnessConfig::default()
            };
            let report = run_harness(&ledger, &cfg)?;
            if let Some(path) = csv {
                report.write_csv(std::fs::File::create(&path)?)?;
                eprintln!("wrote {}", path.display());
            }
            print(&serde_json::to_value(&report)?);
            if !report.exactly_once() {
                bail!("exactly-once inclusion violated");
            }
        }
    }
    Ok(())
}

fn client(remote: &Remote) -> Result<Client> {
    let token = remote
        .token
        .as_deref()
        .context("a token is required; run `docvault login` and set DOCVAULT_TOKEN")?;
    Client::new(&remote.server, Some(token))
}
