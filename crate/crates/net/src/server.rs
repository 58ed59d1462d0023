use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use dinfer_core::model::Model;
use dinfer_core::{Error, Result};

use crate::wire::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServeMode {
    LabelOnly,
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub mode: ServeMode,
    pub max_queries_per_connection: Option<u64>,
    pub max_concurrent_connections: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:0".into(),
            mode: ServeMode::LabelOnly,
            max_queries_per_connection: None,
            max_concurrent_connections: 64,
        }
    }
}

struct Shared {
    model: Arc<Model>,
    cfg: ServerConfig,
    total: AtomicU64,
    active: AtomicUsize,
    next_conn: AtomicU64,
    per_connection: Mutex<BTreeMap<u64, Arc<AtomicU64>>>,
    stop: AtomicBool,
}

/// A running server. Dropping the handle stops accepting new connections.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Queries answered across all connections.
    pub fn total_queries(&self) -> u64 {
        self.shared.total.load(Ordering::SeqCst)
    }

    /// Queries answered per connection, in connection order.
    pub fn connection_counts(&self) -> Vec<u64> {
        let map = self.shared.per_connection.lock().expect("connection map");
        map.values().map(|c| c.load(Ordering::SeqCst)).collect()
    }

    pub fn active_connections(&self) -> usize {
        self.shared.active.load(Ordering::SeqCst)
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop();
        }
    }
}

pub fn serve_model(model: Arc<Model>, cfg: ServerConfig) -> Result<ServerHandle> {
    if cfg.max_concurrent_connections == 0 {
        return Err(Error::InvalidParameter("max_concurrent_connections must be positive".into()));
    }
    let listener = TcpListener::bind(&cfg.bind).map_err(|e| Error::Connection(format!("bind {}: {e}", cfg.bind)))?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        model,
        cfg,
        total: AtomicU64::new(0),
        active: AtomicUsize::new(0),
        next_conn: AtomicU64::new(0),
        per_connection: Mutex::new(BTreeMap::new()),
        stop: AtomicBool::new(false),
    });
    let s = shared.clone();
    let accept = std::thread::spawn(move || accept_loop(listener, s));
    Ok(ServerHandle { addr, shared, accept: Some(accept) })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        if shared.active.fetch_add(1, Ordering::SeqCst) >= shared.cfg.max_concurrent_connections {
            shared.active.fetch_sub(1, Ordering::SeqCst);
            drop(stream);
            continue;
        }
        let id = shared.next_conn.fetch_add(1, Ordering::SeqCst);
        let counter = Arc::new(AtomicU64::new(0));
        shared.per_connection.lock().expect("connection map").insert(id, counter.clone());
        let s = shared.clone();
        std::thread::spawn(move || {
            let _ = handle_connection(stream, &s, &counter);
            s.active.fetch_sub(1, Ordering::SeqCst);
        });
    }
}

enum Outcome {
    Reply(WireResponse),
    ReplyAndClose(WireResponse),
}

fn answer(line: &str, shared: &Shared, counter: &AtomicU64) -> Outcome {
    let err = |id, code: &str| WireResponse { id, body: Body::Error(code.into()) };
    let req = match decode_request(line) {
        Ok(r) if r.x.iter().all(|v| v.is_finite()) => r,
        _ => return Outcome::Reply(err(salvage_id(line), MALFORMED_REQUEST)),
    };
    let id = Some(req.id);
    if req.x.len() != shared.model.input_dim() {
        return Outcome::Reply(err(id, BAD_DIMENSION));
    }
    if req.op == Op::Logits && shared.cfg.mode == ServeMode::LabelOnly {
        return Outcome::Reply(err(id, LABEL_ONLY));
    }
    if let Some(cap) = shared.cfg.max_queries_per_connection {
        if counter.load(Ordering::SeqCst) >= cap {
            return Outcome::ReplyAndClose(err(id, BUDGET_EXHAUSTED));
        }
    }
    let Ok(logits) = shared.model.forward(&req.x) else {
        return Outcome::Reply(err(id, MALFORMED_REQUEST));
    };
    counter.fetch_add(1, Ordering::SeqCst);
    shared.total.fetch_add(1, Ordering::SeqCst);
    let body = match req.op {
        Op::Label => Body::Label(dinfer_core::model::argmax(&logits)),
        Op::Logits => Body::Logits(logits),
    };
    Outcome::Reply(WireResponse { id, body })
}

fn handle_connection(stream: TcpStream, shared: &Shared, counter: &AtomicU64) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (resp, close) = match answer(&line, shared, counter) {
            Outcome::Reply(r) => (r, false),
            Outcome::ReplyAndClose(r) => (r, true),
        };
        writer.write_all(encode_response(&resp)?.as_bytes())?;
        // flush once the client has nothing more queued
        if close || reader.buffer().is_empty() {
            writer.flush()?;
        }
        if close {
            break;
        }
    }
    writer.flush()?;
    Ok(())
}
