//! `train-collab`: one party over TCP, or both parties from one process.

use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde::Serialize;
use sofanet::config::{RunConfig, TransportKind};
use sofanet::data::{windows_for_cohort, Cohort, EncodedSet};
use sofanet::experiment::Preprocessor;
use sofanet::protocol::{
    channel_pair, encode_transcript, privacy_audit, run_party, train_collab_with, AuditReport,
    CollabHistory, Hello, RawWindowIndex, Role, RoundRecord, StreamTransport, Tap, TapRecord,
    Transport, PROTOCOL_VERSION,
};
use sofanet::SofaNet;

use crate::checkpoint::{Checkpoint, ModelKind, Sidecar};
use crate::commands::load_cohort;
use crate::{write_json, CliError, RoleArg};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(60);

pub struct CollabArgs {
    pub role: Option<RoleArg>,
    pub listen: Option<String>,
    pub peer: Option<String>,
    pub cohort: PathBuf,
    pub peer_cohort: Option<PathBuf>,
    pub tap: Option<PathBuf>,
    pub audit_cohorts: Vec<PathBuf>,
}

struct PartyInput {
    cohort: Cohort,
    pre: Preprocessor,
    set: EncodedSet,
}

impl PartyInput {
    fn load(dir: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        let cohort = load_cohort(dir, cfg)?;
        let pre = Preprocessor::fit(&cohort);
        let set = pre.encode(&cohort).map_err(CliError::Validation)?;
        Ok(Self { cohort, pre, set })
    }

    fn add_raw(&self, raw: &mut RawWindowIndex) -> Result<(), CliError> {
        let windows =
            windows_for_cohort(&self.cohort, &self.pre.means).map_err(CliError::validation)?;
        raw.add_windows(&windows);
        raw.add_encoded(&self.set);
        Ok(())
    }
}

#[derive(Serialize)]
struct PartyRounds<'a> {
    role: Role,
    own: &'a [RoundRecord],
    peer: &'a [RoundRecord],
}

pub fn run(cfg: &RunConfig, args: CollabArgs, out: &Path) -> Result<(), CliError> {
    let a = PartyInput::load(&args.cohort, cfg)?;
    let net = SofaNet::new(cfg.model.model_config(a.cohort.schema.len()))
        .map_err(CliError::validation)?;
    let hello = Hello {
        schema_hash: a.cohort.schema.schema_hash().to_string(),
        config_hash: cfg.config_hash(),
        protocol_version: PROTOCOL_VERSION,
    };
    let mut raw = RawWindowIndex::new();
    a.add_raw(&mut raw)?;
    for dir in &args.audit_cohorts {
        PartyInput::load(dir, cfg)?.add_raw(&mut raw)?;
    }

    let records = match args.role {
        Some(role) => {
            let role = match role {
                RoleArg::A => Role::A,
                RoleArg::B => Role::B,
            };
            let stream = connect(args.listen.as_deref(), args.peer.as_deref())?;
            let mut tap = Tap::new(StreamTransport::new(stream));
            let outcome = run_party(role, &net, &cfg.train, &a.set, &hello, &mut tap)
                .map_err(CliError::runtime)?;
            save(cfg, &net, &a, outcome.params, &out.join("checkpoint"))?;
            write_json(
                &out.join("rounds.json"),
                &PartyRounds {
                    role,
                    own: &outcome.own,
                    peer: &outcome.peer,
                },
            )?;
            tap.into_parts().1
        }
        None => {
            let dir = args.peer_cohort.as_deref().ok_or_else(|| {
                CliError::Validation(
                    "train-collab needs --role, or --peer-cohort to run both parties".into(),
                )
            })?;
            let b = PartyInput::load(dir, cfg)?;
            b.add_raw(&mut raw)?;
            let (params, history, records) = match cfg.transport.kind {
                TransportKind::InProcess => {
                    let (ta, tb) = channel_pair();
                    both_parties(
                        &net,
                        cfg,
                        &a.set,
                        &b.set,
                        &hello,
                        Tap::new(ta),
                        Tap::new(tb),
                    )?
                }
                TransportKind::Stream => {
                    let (sa, sb) = loopback_pair()?;
                    both_parties(
                        &net,
                        cfg,
                        &a.set,
                        &b.set,
                        &hello,
                        Tap::new(StreamTransport::new(sa)),
                        Tap::new(StreamTransport::new(sb)),
                    )?
                }
            };
            save(cfg, &net, &a, params.clone(), &out.join("checkpoint-a"))?;
            save(cfg, &net, &b, params, &out.join("checkpoint-b"))?;
            write_json(&out.join("rounds.json"), &history)?;
            records
        }
    };

    if let Some(path) = &args.tap {
        write_text_bytes(path, &encode_transcript(&records))?;
    }
    let report = privacy_audit(&records, net.config().z_dim(), &raw);
    write_json(&out.join("audit.json"), &report)?;
    audit_verdict(&report)
}

fn both_parties<T: Transport + Send>(
    net: &SofaNet,
    cfg: &RunConfig,
    a: &EncodedSet,
    b: &EncodedSet,
    hello: &Hello,
    mut ta: Tap<T>,
    mut tb: Tap<T>,
) -> Result<(sofanet::nn::ParamSet, CollabHistory, Vec<TapRecord>), CliError> {
    let (params, history) = train_collab_with(net, &cfg.train, a, b, hello, (&mut ta, &mut tb))
        .map_err(CliError::runtime)?;
    Ok((params, history, ta.into_parts().1))
}

fn audit_verdict(report: &AuditReport) -> Result<(), CliError> {
    if report.passed() {
        log::info!("privacy audit passed over {} frames", report.frames);
        Ok(())
    } else {
        let first = &report.findings[0];
        Err(CliError::Audit(format!(
            "{} finding(s); first at frame {}: {:?}",
            report.findings.len(),
            first.frame_index,
            first.violation
        )))
    }
}

fn save(
    cfg: &RunConfig,
    net: &SofaNet,
    party: &PartyInput,
    params: sofanet::nn::ParamSet,
    dir: &Path,
) -> Result<(), CliError> {
    Checkpoint {
        sidecar: Sidecar {
            kind: ModelKind::Sofanet,
            model: *net.config(),
            seed: cfg.train.seed,
            round: cfg.train.rounds,
            config_hash: cfg.config_hash(),
            schema_hash: party.cohort.schema.schema_hash().to_string(),
            preprocessor: party.pre.clone(),
        },
        params,
    }
    .save(dir)
}

fn write_text_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Accepts one peer on `listen`, or dials `peer` until it answers. The
/// bound listen address is printed on stdout as `listening <addr>`.
fn connect(listen: Option<&str>, peer: Option<&str>) -> Result<TcpStream, CliError> {
    let stream = match (listen, peer) {
        (Some(addr), None) => {
            let listener = TcpListener::bind(addr)
                .map_err(|e| CliError::Runtime(format!("bind {addr}: {e}")))?;
            let local = listener.local_addr().map_err(CliError::runtime)?;
            println!("listening {local}");
            use std::io::Write;
            std::io::stdout().flush().map_err(CliError::runtime)?;
            listener.accept().map_err(CliError::runtime)?.0
        }
        (None, Some(addr)) => {
            let start = Instant::now();
            loop {
                match TcpStream::connect(addr) {
                    Ok(s) => break s,
                    Err(e) if start.elapsed() < CONNECT_TIMEOUT => {
                        log::debug!("connect {addr}: {e}; retrying");
                        sleep(Duration::from_millis(100));
                    }
                    Err(e) => return Err(CliError::Runtime(format!("connect {addr}: {e}"))),
                }
            }
        }
        _ => {
            return Err(CliError::Validation(
                "--role needs exactly one of --listen or --peer".into(),
            ))
        }
    };
    stream.set_nodelay(true).map_err(CliError::runtime)?;
    Ok(stream)
}

fn loopback_pair() -> Result<(TcpStream, TcpStream), CliError> {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(CliError::runtime)?;
    let addr = listener.local_addr().map_err(CliError::runtime)?;
    let a = TcpStream::connect(addr).map_err(CliError::runtime)?;
    let (b, _) = listener.accept().map_err(CliError::runtime)?;
    a.set_nodelay(true).map_err(CliError::runtime)?;
    b.set_nodelay(true).map_err(CliError::runtime)?;
    Ok((a, b))
}
