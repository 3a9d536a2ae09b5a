//! Versioned JSON envelopes for persisted models.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOOL: &str = "friendrisk";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize, Deserialize)]
struct Envelope<P> {
    tool: String,
    version: String,
    kind: String,
    payload: P,
}

#[derive(Deserialize)]
struct Header {
    tool: String,
    version: String,
    kind: String,
}

pub fn save<P: Serialize>(kind: &str, payload: &P, writer: impl Write) -> Result<()> {
    let mut w = writer;
    let env = Envelope {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        kind: kind.to_string(),
        payload,
    };
    serde_json::to_writer_pretty(&mut w, &env)?;
    writeln!(w)?;
    Ok(())
}

/// Reads the whole input before decoding, so a truncated file yields an error and nothing else.
pub fn load<P: DeserializeOwned>(kind: &str, reader: impl Read) -> Result<P> {
    let mut text = String::new();
    let mut r = reader;
    r.read_to_string(&mut text)?;
    let header: Header = serde_json::from_str(&text)?;
    if header.tool != TOOL || header.kind != kind {
        return Err(Error::parse(
            "artifact",
            format!("expected a {TOOL} `{kind}` artifact, found {} `{}`", header.tool, header.kind),
        ));
    }
    if header.version != VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: VERSION.to_string(),
        });
    }
    let env: Envelope<P> = serde_json::from_str(&text)?;
    Ok(env.payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_and_kind_are_checked() {
        let mut buf = Vec::new();
        save("thing", &vec![1.5f64, 2.0], &mut buf).unwrap();
        let v: Vec<f64> = load("thing", buf.as_slice()).unwrap();
        assert_eq!(v, vec![1.5, 2.0]);
        assert!(load::<Vec<f64>>("other", buf.as_slice()).is_err());
        let old = String::from_utf8(buf.clone()).unwrap().replace(VERSION, "0.0.0-old");
        match load::<Vec<f64>>("thing", old.as_bytes()) {
            Err(Error::VersionMismatch { found, expected }) => {
                assert_eq!(found, "0.0.0-old");
                assert_eq!(expected, VERSION);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(load::<Vec<f64>>("thing", &buf[..buf.len() / 2]).is_err());
    }
}
