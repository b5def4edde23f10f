use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use base64::Engine as _;
use clap::{Parser, Subcommand};
use ddnfs_core::policy::validate_peerlist_update;
use ddnfs_core::{
    generate_keypair, make_document, sign_document, Codec, DocPath, GetAnswer, Message, PeerEntry, Peerlist, Role,
    SignatureBlock, Tag,
};
use ddnfs_node::control::{self, Request};
use ddnfs_node::{daemon, files, visit, NodeConfig};

#[derive(Parser)]
#[command(name = "ddnfs", version, about = "Replicated, notarized document store")]
struct Cli {
    /// Daemon config file; its control address is used by the client commands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Control address of a running daemon.
    #[arg(long, global = true)]
    control: Option<SocketAddr>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the peer daemon.
    Daemon,
    /// Create a new key file.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// Also write the public key here.
        #[arg(long = "pub")]
        public: Option<PathBuf>,
    },
    /// Assemble a peerlist file.
    PeerlistMake {
        #[arg(long = "version", default_value_t = 1)]
        list_version: u64,
        /// NAME,ROLE,ADDRESS,KEYFILE with ROLE peer or admin and ADDRESS `-` for none.
        #[arg(long = "peer", required = true)]
        peers: Vec<String>,
        /// File holding the policy rules.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sign a new peerlist version with an administrator key.
    PeerlistSign {
        #[arg(long)]
        key: PathBuf,
        /// The peerlist currently in force.
        #[arg(long)]
        current: PathBuf,
        /// The new peerlist file.
        #[arg(long)]
        candidate: PathBuf,
        /// Write the signed document here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Offer the signed document to the daemon at this peer address.
        #[arg(long)]
        connect: Option<String>,
    },
    /// Add an administrator signature to a document held by a daemon.
    Countersign {
        #[arg(long)]
        key: PathBuf,
        /// The peerlist currently in force.
        #[arg(long)]
        current: PathBuf,
        /// Peer address of the daemon to fetch from and offer back to.
        #[arg(long)]
        connect: String,
        path: String,
        #[arg(default_value = "*")]
        sel: String,
    },
    /// Create a new version of a document from a file.
    Inject { path: String, file: PathBuf },
    /// Print or save a document; SEL is a version, `@` (active) or `*` (newest).
    Get {
        path: String,
        #[arg(default_value = "@")]
        sel: String,
        /// Number of rogue peers to outvote; asks f+1 peers.
        #[arg(short = 'f')]
        rogues: Option<usize>,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// List stored documents matching a pattern.
    Head {
        pattern: String,
        #[arg(default_value = "*")]
        sel: String,
    },
    /// Show status and signatures of a document.
    Status {
        path: String,
        #[arg(default_value = "*")]
        sel: String,
    },
    /// Catch up with a peer, by name or fingerprint.
    Reconcile { peer: String },
    /// List blacklisted peers.
    BlacklistShow,
    /// Stop the daemon.
    Shutdown,
}

const VISIT_WAIT: Duration = Duration::from_secs(10);

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    match runtime.block_on(execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ddnfs: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn control_addr(cli: &Cli) -> Result<SocketAddr> {
    if let Some(addr) = cli.control {
        return Ok(addr);
    }
    let path = cli.config.as_deref().ok_or_else(|| anyhow!("need --control or --config"))?;
    Ok(NodeConfig::load(path)?.control)
}

async fn call(cli: &Cli, request: Request) -> Result<Vec<u8>> {
    control::call(control_addr(cli)?, &request)
        .await?
        .map_err(|e| anyhow!(e))
}

fn print(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}

async fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Daemon => {
            let path = cli.config.as_deref().ok_or_else(|| anyhow!("daemon needs --config"))?;
            daemon::run(NodeConfig::load(path)?).await?;
        }
        Command::Keygen { out, public } => {
            let kp = generate_keypair(None)?;
            files::write(out, &files::render_key(&kp))?;
            if let Some(p) = public {
                files::write(p, &files::render_public(kp.public()))?;
            }
            println!("{}", kp.peer_id());
        }
        Command::PeerlistMake {
            list_version,
            peers,
            policy,
            out,
        } => {
            let entries = peers.iter().map(|s| parse_entry(s)).collect::<Result<Vec<_>>>()?;
            let policy_text = match policy {
                Some(p) => std::fs::read_to_string(p).with_context(|| p.display().to_string())?,
                None => String::new(),
            };
            let pl = Peerlist::new(*list_version, entries, &policy_text)?;
            files::write(out, &files::render_peerlist(&pl))?;
        }
        Command::PeerlistSign {
            key,
            current,
            candidate,
            out,
            connect,
        } => peerlist_sign(key, current, candidate, out.as_deref(), connect.as_deref()).await?,
        Command::Countersign {
            key,
            current,
            connect,
            path,
            sel,
        } => {
            let keys = files::load_key(key)?;
            let peerlist = files::load_peerlist(current)?;
            let id = visit::countersign(connect, &keys, &peerlist, DocPath::new(path.as_str())?, sel.parse()?, VISIT_WAIT)
                .await?;
            println!("{id}");
        }
        Command::Inject { path, file } => {
            let content = std::fs::read(file).with_context(|| file.display().to_string())?;
            let reply = call(
                &cli,
                Request::Inject {
                    path: path.clone(),
                    content: base64::engine::general_purpose::STANDARD.encode(content),
                },
            )
            .await?;
            print(&reply)?;
        }
        Command::Get { path, sel, rogues, out } => {
            let content = call(
                &cli,
                Request::Get {
                    path: path.clone(),
                    sel: sel.clone(),
                    rogues: *rogues,
                },
            )
            .await?;
            match out {
                Some(o) => std::fs::write(o, content).with_context(|| o.display().to_string())?,
                None => print(&content)?,
            }
        }
        Command::Head { pattern, sel } => {
            let reply = call(
                &cli,
                Request::Head {
                    pattern: pattern.clone(),
                    sel: sel.clone(),
                },
            )
            .await?;
            print(&reply)?;
        }
        Command::Status { path, sel } => {
            let reply = call(
                &cli,
                Request::Status {
                    path: path.clone(),
                    sel: sel.clone(),
                },
            )
            .await?;
            print(&reply)?;
        }
        Command::Reconcile { peer } => print(&call(&cli, Request::Reconcile { peer: peer.clone() }).await?)?,
        Command::BlacklistShow => print(&call(&cli, Request::BlacklistShow).await?)?,
        Command::Shutdown => print(&call(&cli, Request::Shutdown).await?)?,
    }
    Ok(())
}

fn parse_entry(spec: &str) -> Result<PeerEntry> {
    let parts: Vec<&str> = spec.split(',').collect();
    let [name, role, address, keyfile] = parts.as_slice() else {
        bail!("peer entry {spec:?} is not NAME,ROLE,ADDRESS,KEYFILE");
    };
    let public_key = files::load_public(Path::new(keyfile))?;
    Ok(PeerEntry {
        id: public_key.peer_id(),
        public_key,
        role: role.parse::<Role>().map_err(|_| anyhow!("unknown role {role:?}"))?,
        address: (*address != "-").then(|| address.to_string()),
        name: (!name.is_empty()).then(|| name.to_string()),
    })
}

async fn peerlist_sign(
    key: &Path,
    current: &Path,
    candidate: &Path,
    out: Option<&Path>,
    connect: Option<&str>,
) -> Result<()> {
    let keys = files::load_key(key)?;
    let current = files::load_peerlist(current)?;
    let candidate = files::load_peerlist(candidate)?;
    if !current.is_admin(&keys.peer_id()) {
        bail!(ddnfs_core::PolicyError::NotAdmin(Some(keys.peer_id())));
    }
    let document = make_document(DocPath::peerlist().as_str(), candidate.version, candidate.render().into_bytes())?;
    let mut block = SignatureBlock::new(document.doc_ref());
    block.insert(sign_document(&keys, &document.doc_ref(), None, None)?)?;
    validate_peerlist_update(&current, &document, &block)?;
    if let Some(out) = out {
        let answer = Message::GetAnswer(GetAnswer::Ok {
            document: document.clone(),
            block: block.clone(),
        });
        let frame = Codec::default().encode(&Tag::parse("s0")?, &answer)?;
        std::fs::write(out, frame).with_context(|| out.display().to_string())?;
    }
    if let Some(addr) = connect {
        visit::offer_once(addr, &keys, &current, document, block, VISIT_WAIT).await?;
    }
    println!("peerlist version {} signed by {}", candidate.version, keys.peer_id());
    Ok(())
}
