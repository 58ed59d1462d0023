//! Wire format: one JSON object per line, `\n` terminated.
//!
//! Request: `{"id":7,"op":"label","x":[0.1,0.2]}`.
//! Response: `{"id":7,"label":3}`, `{"id":7,"logits":[..]}` or
//! `{"id":7,"error":"bad_dimension"}`. A request whose id could not be read
//! is answered with `"id":null`.

use serde::{Deserialize, Serialize};

use dinfer_core::{Error, Result};

pub const MALFORMED_REQUEST: &str = "malformed_request";
pub const BAD_DIMENSION: &str = "bad_dimension";
pub const LABEL_ONLY: &str = "label_only";
pub const BUDGET_EXHAUSTED: &str = "budget_exhausted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Label,
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRequest {
    pub id: u64,
    pub op: Op,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Body {
    Label(usize),
    Logits(Vec<f64>),
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: Option<u64>,
    #[serde(flatten)]
    pub body: Body,
}

fn finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} cannot carry NaN or infinity")))
    }
}

/// Serializes a request as one line, newline included.
pub fn encode_request(req: &WireRequest) -> Result<String> {
    finite(&req.x, "request")?;
    let mut s = serde_json::to_string(req)?;
    s.push('\n');
    Ok(s)
}

pub fn decode_request(line: &str) -> Result<WireRequest> {
    Ok(serde_json::from_str(line.trim_end_matches(['\n', '\r']))?)
}

pub fn encode_response(resp: &WireResponse) -> Result<String> {
    if let Body::Logits(l) = &resp.body {
        finite(l, "response")?;
    }
    let mut s = serde_json::to_string(resp)?;
    s.push('\n');
    Ok(s)
}

/// Parses a response line, rejecting anything without exactly one of
/// `label`, `logits`, `error`.
pub fn decode_response(line: &str) -> Result<WireResponse> {
    let v: serde_json::Value = serde_json::from_str(line.trim_end_matches(['\n', '\r']))?;
    let obj = v.as_object().ok_or_else(|| Error::Protocol("response is not an object".into()))?;
    let bodies = ["label", "logits", "error"].iter().filter(|k| obj.contains_key(**k)).count();
    if bodies != 1 || obj.len() != 2 || !obj.contains_key("id") {
        return Err(Error::Protocol(format!("response needs an id and exactly one body field: {line}")));
    }
    Ok(serde_json::from_value(v)?)
}

/// Best-effort id of a line that failed to parse as a request.
pub fn salvage_id(line: &str) -> Option<u64> {
    serde_json::from_str::<serde_json::Value>(line).ok()?.get("id")?.as_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_shapes() {
        let r = WireResponse { id: Some(4), body: Body::Label(2) };
        assert_eq!(encode_response(&r).unwrap(), "{\"id\":4,\"label\":2}\n");
        let e = WireResponse { id: None, body: Body::Error(MALFORMED_REQUEST.into()) };
        assert_eq!(encode_response(&e).unwrap(), "{\"id\":null,\"error\":\"malformed_request\"}\n");
        let q = WireRequest { id: 1, op: Op::Logits, x: vec![0.5, 1.0] };
        assert_eq!(encode_request(&q).unwrap(), "{\"id\":1,\"op\":\"logits\",\"x\":[0.5,1.0]}\n");
    }

    #[test]
    fn rejects_two_bodies_and_unknown_ops() {
        assert!(decode_response("{\"id\":1,\"label\":2,\"error\":\"x\"}").is_err());
        assert!(decode_response("{\"id\":1}").is_err());
        assert!(decode_request("{\"id\":1,\"op\":\"grad\",\"x\":[]}").is_err());
        assert!(decode_request("{\"id\":1,\"op\":\"label\",\"x\":[1],\"y\":2}").is_err());
        assert_eq!(salvage_id("{\"id\":9,\"op\":\"nope\"}"), Some(9));
        assert_eq!(salvage_id("not json"), None);
    }

    #[test]
    fn non_finite_inputs_are_refused() {
        let q = WireRequest { id: 1, op: Op::Label, x: vec![f64::NAN] };
        assert!(encode_request(&q).is_err());
    }
}
