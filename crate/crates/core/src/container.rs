//! Binary container shared by checkpoints and labeled sets: one line of
//! UTF-8 JSON header terminated by `\n`, then a block of little-endian `f64`.
//! The header always carries `block_len`, the number of floats that follow.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub fn write_container<W: Write, H: Serialize>(mut w: W, header: &H, block: &[f64]) -> Result<()> {
    let mut value = serde_json::to_value(header)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Format("container header must be a JSON object".into()))?;
    obj.insert("block_len".into(), Value::from(block.len()));
    let line = serde_json::to_string(&value)?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(block.len() * 8);
    for v in block {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_container<R: BufRead, H: DeserializeOwned>(mut r: R) -> Result<(H, Vec<f64>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if !line.ends_with('\n') {
        return Err(Error::Format("missing container header line".into()));
    }
    let value: Value = serde_json::from_str(line.trim_end())?;
    let block_len = value
        .get("block_len")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format("container header lacks block_len".into()))?
        as usize;
    let header: H = serde_json::from_value(value)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != block_len * 8 {
        return Err(Error::Format(format!(
            "expected {} bytes of parameters, found {}",
            block_len * 8,
            bytes.len()
        )));
    }
    let block = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, block))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct H {
        name: String,
    }

    #[test]
    fn round_trip_and_truncation() {
        let mut buf = Vec::new();
        let block = [1.5, -0.0, f64::MIN_POSITIVE, 3.0e300];
        write_container(&mut buf, &H { name: "x".into() }, &block).unwrap();
        let (h, b): (H, Vec<f64>) = read_container(&buf[..]).unwrap();
        assert_eq!(h, H { name: "x".into() });
        assert_eq!(b.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   block.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert!(read_container::<_, H>(&buf[..buf.len() - 3]).is_err());
    }
}
