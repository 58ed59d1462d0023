use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use dinfer_core::model::{ArchSpec, Model};
use dinfer_core::oracle::{LabelOracle, LogitOracle};
use dinfer_core::Error;
use dinfer_net::wire::*;
use dinfer_net::*;

/// Linear model that always predicts `class`.
fn constant(dim: usize, k: usize, class: usize) -> Arc<Model> {
    let mut m = Model::zeros(ArchSpec::linear(dim, k)).unwrap();
    let n = m.params.len();
    m.params[n - k + class] = 1.0;
    Arc::new(m)
}

struct Raw {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Raw {
    fn connect(h: &ServerHandle) -> Self {
        let s = TcpStream::connect(h.addr()).unwrap();
        s.set_nodelay(true).unwrap();
        Self { reader: BufReader::new(s.try_clone().unwrap()), writer: s }
    }

    fn send(&mut self, line: &str) -> Option<String> {
        self.writer.write_all(format!("{line}\n").as_bytes()).ok()?;
        let mut out = String::new();
        match self.reader.read_line(&mut out) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(out.trim_end().to_string()),
        }
    }
}

#[test]
fn constant_model_answers_its_class() {
    let h = serve_model(constant(3, 4, 2), ServerConfig::default()).unwrap();
    let mut c = Raw::connect(&h);
    for k in 0..5 {
        let line = format!("{{\"id\":{k},\"op\":\"label\",\"x\":[0.{k},1.0,0.5]}}");
        assert_eq!(c.send(&line).unwrap(), format!("{{\"id\":{k},\"label\":2}}"));
    }
    assert_eq!(h.total_queries(), 5);
}

#[test]
fn errors_keep_the_connection_open() {
    let h = serve_model(constant(2, 3, 0), ServerConfig::default()).unwrap();
    let mut c = Raw::connect(&h);
    assert_eq!(c.send("{not json").unwrap(), "{\"id\":null,\"error\":\"malformed_request\"}");
    assert_eq!(c.send("{\"id\":3,\"op\":\"label\"}").unwrap(), "{\"id\":3,\"error\":\"malformed_request\"}");
    assert_eq!(c.send("{\"id\":4,\"op\":\"label\",\"x\":[1]}").unwrap(), "{\"id\":4,\"error\":\"bad_dimension\"}");
    assert_eq!(c.send("{\"id\":5,\"op\":\"logits\",\"x\":[1,0]}").unwrap(), "{\"id\":5,\"error\":\"label_only\"}");
    assert_eq!(c.send("{\"id\":6,\"op\":\"label\",\"x\":[1,0]}").unwrap(), "{\"id\":6,\"label\":0}");
    assert_eq!(h.total_queries(), 1);
}

#[test]
fn budget_exhaustion_closes_the_connection() {
    let cfg = ServerConfig { max_queries_per_connection: Some(300), ..ServerConfig::default() };
    let h = serve_model(constant(2, 3, 1), cfg).unwrap();
    let mut c = Raw::connect(&h);
    for k in 0..300 {
        let r = c.send(&format!("{{\"id\":{k},\"op\":\"label\",\"x\":[0,0]}}")).unwrap();
        assert!(r.contains("\"label\":1"), "{r}");
    }
    let r = c.send("{\"id\":300,\"op\":\"label\",\"x\":[0,0]}").unwrap();
    assert_eq!(r, "{\"id\":300,\"error\":\"budget_exhausted\"}");
    assert_eq!(c.send("{\"id\":301,\"op\":\"label\",\"x\":[0,0]}"), None);
    assert_eq!(h.total_queries(), 300);
}

#[test]
fn client_surfaces_budget_and_mode_errors() {
    let cfg = ServerConfig { max_queries_per_connection: Some(10), ..ServerConfig::default() };
    let h = serve_model(constant(2, 3, 1), cfg).unwrap();
    let o = RemoteOracle::connect(h.addr(), 2, 3).unwrap();
    assert!(matches!(o.logits(&[0.0, 0.0]), Err(Error::LabelOnly)));
    let xs = vec![vec![0.5, 0.5]; 15];
    assert!(matches!(o.labels(&xs), Err(Error::BudgetExhausted { used: 10 })));
    assert_eq!(o.queries_used(), 10);
    assert_eq!(h.total_queries(), 10);
    assert!(o.label(&[0.0, 0.0]).is_err());
}

#[test]
fn logits_mode_serves_exact_logits() {
    let model = Arc::new(Model::init(ArchSpec::linear(3, 4), 9).unwrap());
    let cfg = ServerConfig { mode: ServeMode::Logits, ..ServerConfig::default() };
    let h = serve_model(model.clone(), cfg).unwrap();
    let o = RemoteOracle::connect(h.addr(), 3, 4).unwrap();
    let x = vec![0.1, 0.7, 0.3];
    let remote = o.logits(&x).unwrap();
    let local = model.forward(&x).unwrap();
    assert_eq!(remote.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), local.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(matches!(o.label(&[1.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn counts_are_exact_across_concurrent_connections() {
    let h = serve_model(constant(4, 3, 0), ServerConfig::default()).unwrap();
    let addr = h.addr();
    std::thread::scope(|s| {
        for t in 0..6 {
            s.spawn(move || {
                let o = RemoteOracle::connect(addr, 4, 3).unwrap();
                // one connection shared by several threads as well
                std::thread::scope(|inner| {
                    for _ in 0..3 {
                        inner.spawn(|| o.labels(&vec![vec![0.25; 4]; 50 + t]).unwrap());
                    }
                });
                assert_eq!(o.queries_used(), 3 * (50 + t) as u64);
            });
        }
    });
    let per: u64 = h.connection_counts().iter().sum();
    assert_eq!(h.total_queries(), per);
    assert_eq!(per, (0..6).map(|t| 3 * (50 + t)).sum::<u64>());
}

#[test]
fn connection_limit_refuses_extra_clients() {
    let cfg = ServerConfig { max_concurrent_connections: 1, ..ServerConfig::default() };
    let h = serve_model(constant(2, 2, 0), cfg).unwrap();
    let first = RemoteOracle::connect(h.addr(), 2, 2).unwrap();
    assert_eq!(first.label(&[0.0, 0.0]).unwrap(), 0);
    let second = RemoteOracle::connect(h.addr(), 2, 2).unwrap();
    assert!(second.label(&[0.0, 0.0]).is_err());
    assert_eq!(first.label(&[1.0, 0.0]).unwrap(), 0);
}

#[test]
fn disconnect_fails_pending_queries() {
    // a server that answers one request and hangs up
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let t = std::thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        let mut r = BufReader::new(s.try_clone().unwrap());
        let mut line = String::new();
        r.read_line(&mut line).unwrap();
        let id = salvage_id(&line).unwrap();
        let mut w = s;
        w.write_all(format!("{{\"id\":{id},\"label\":0}}\n").as_bytes()).unwrap();
    });
    let o = RemoteOracle::connect(addr, 1, 2).unwrap();
    let r = o.labels(&vec![vec![0.5]; 5]);
    assert!(matches!(r, Err(Error::Connection(_))), "{r:?}");
    assert_eq!(o.queries_used(), 1);
    t.join().unwrap();
    assert!(o.label(&[0.5]).is_err());
}
