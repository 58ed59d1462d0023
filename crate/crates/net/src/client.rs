use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};

use dinfer_core::oracle::{LabelOracle, LogitOracle};
use dinfer_core::{Error, Result};

use crate::wire::*;

type Pending = Arc<Mutex<Option<HashMap<u64, Sender<WireResponse>>>>>;

/// Client side of the oracle protocol. Many threads may share one
/// connection; requests are pipelined and responses matched by id.
pub struct RemoteOracle {
    writer: Mutex<BufWriter<TcpStream>>,
    stream: TcpStream,
    /// `None` once the connection is gone.
    pending: Pending,
    next_id: AtomicU64,
    answered: AtomicU64,
    input_dim: usize,
    num_classes: usize,
}

impl RemoteOracle {
    /// The protocol carries no metadata, so the caller states the input
    /// dimension and number of classes.
    pub fn connect(addr: impl ToSocketAddrs, input_dim: usize, num_classes: usize) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| Error::Connection(e.to_string()))?;
        stream.set_nodelay(true)?;
        let pending: Pending = Arc::new(Mutex::new(Some(HashMap::new())));
        let reader = BufReader::new(stream.try_clone()?);
        let p = pending.clone();
        std::thread::spawn(move || read_loop(reader, p));
        Ok(Self {
            writer: Mutex::new(BufWriter::new(stream.try_clone()?)),
            stream,
            pending,
            next_id: AtomicU64::new(0),
            answered: AtomicU64::new(0),
            input_dim,
            num_classes,
        })
    }

    fn round_trip(&self, op: Op, xs: &[Vec<f64>]) -> Result<Vec<Body>> {
        if let Some(x) = xs.iter().find(|x| x.len() != self.input_dim) {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let first = self.next_id.fetch_add(xs.len() as u64, Ordering::SeqCst);
        let (tx, rx) = channel();
        {
            let mut guard = self.pending.lock().expect("pending map");
            let map = guard.as_mut().ok_or_else(|| Error::Connection("connection closed".into()))?;
            for i in 0..xs.len() as u64 {
                map.insert(first + i, tx.clone());
            }
        }
        drop(tx);
        let sent = (|| -> Result<()> {
            let mut w = self.writer.lock().expect("writer");
            for (i, x) in xs.iter().enumerate() {
                let req = WireRequest { id: first + i as u64, op, x: x.clone() };
                w.write_all(encode_request(&req)?.as_bytes())?;
            }
            w.flush()?;
            Ok(())
        })();
        if let Err(e) = sent {
            self.forget(first, xs.len());
            return Err(e);
        }
        let mut out: Vec<Option<Body>> = vec![None; xs.len()];
        let mut first_error = None;
        for _ in 0..xs.len() {
            let Ok(resp) = rx.recv() else {
                self.forget(first, xs.len());
                return Err(first_error.unwrap_or_else(|| Error::Connection("connection lost with queries pending".into())));
            };
            let slot = resp.id.and_then(|id| id.checked_sub(first)).filter(|&i| (i as usize) < xs.len());
            let Some(i) = slot else {
                return Err(Error::Protocol(format!("unexpected response id {:?}", resp.id)));
            };
            match resp.body {
                Body::Error(code) => {
                    first_error.get_or_insert(self.remote_error(&code));
                }
                body => {
                    self.answered.fetch_add(1, Ordering::SeqCst);
                    out[i as usize] = Some(body);
                }
            }
        }
        if let Some(e) = first_error {
            return Err(e);
        }
        Ok(out.into_iter().map(|b| b.expect("every id answered")).collect())
    }

    fn remote_error(&self, code: &str) -> Error {
        match code {
            BUDGET_EXHAUSTED => Error::BudgetExhausted { used: self.answered.load(Ordering::SeqCst) },
            LABEL_ONLY => Error::LabelOnly,
            other => Error::Remote(other.to_string()),
        }
    }

    fn forget(&self, first: u64, n: usize) {
        if let Some(map) = self.pending.lock().expect("pending map").as_mut() {
            for i in 0..n as u64 {
                map.remove(&(first + i));
            }
        }
    }
}

impl Drop for RemoteOracle {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

/// Routes each response line to the waiting caller. On EOF or a read
/// error every pending sender is dropped, which fails the waiting calls.
fn read_loop(mut reader: BufReader<TcpStream>, pending: Pending) {
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        let Ok(resp) = decode_response(&line) else { break };
        let mut guard = pending.lock().expect("pending map");
        let Some(map) = guard.as_mut() else { break };
        match resp.id.and_then(|id| map.remove(&id)) {
            Some(tx) => {
                let _ = tx.send(resp);
            }
            // an error with no usable id cannot be routed; treat it as fatal
            None => break,
        }
    }
    pending.lock().expect("pending map").take();
}

impl LabelOracle for RemoteOracle {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn label(&self, x: &[f64]) -> Result<usize> {
        Ok(self.labels(&[x.to_vec()])?.remove(0))
    }

    fn labels(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        self.round_trip(Op::Label, xs)?
            .into_iter()
            .map(|b| match b {
                Body::Label(c) if c < self.num_classes => Ok(c),
                other => Err(Error::Protocol(format!("expected a label, got {other:?}"))),
            })
            .collect()
    }

    fn queries_used(&self) -> u64 {
        self.answered.load(Ordering::SeqCst)
    }
}

impl LogitOracle for RemoteOracle {
    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits_batch(&[x.to_vec()])?.remove(0))
    }

    fn logits_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.round_trip(Op::Logits, xs)?
            .into_iter()
            .map(|b| match b {
                Body::Logits(l) if l.len() == self.num_classes => Ok(l),
                other => Err(Error::Protocol(format!("expected logits, got {other:?}"))),
            })
            .collect()
    }
}
