//! Messages crossing the client/server boundary.
//!
//! All integers and floats are little-endian. Every message starts with the
//! 4-byte magic `FEDM`, a version byte (`1`) and a kind byte:
//!
//! ```text
//! REGISTER   (kind 1): u32 client, u64 count, count × (u32 byte length, UTF-8 label)
//! DISTRIBUTE (kind 2): u64 round, u32 client, u64 rows, u64 dim, rows·dim × f64 (row-major)
//! UPDATE     (kind 3): same layout as DISTRIBUTE
//! ```
//!
//! DISTRIBUTE carries the server's entity rows gathered for one client;
//! UPDATE carries the client's trained local entity matrix back. Nothing
//! else (no triples, no relation data) has a message type.

use crate::embedding::EmbeddingMatrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"FEDM";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Register {
        client: u32,
        entities: Vec<String>,
    },
    Distribute {
        round: u64,
        client: u32,
        entities: EmbeddingMatrix,
    },
    Update {
        round: u64,
        client: u32,
        entities: EmbeddingMatrix,
    },
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::Register { .. } => 1,
            Message::Distribute { .. } => 2,
            Message::Update { .. } => 3,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.kind());
        match self {
            Message::Register { client, entities } => {
                out.extend_from_slice(&client.to_le_bytes());
                out.extend_from_slice(&(entities.len() as u64).to_le_bytes());
                for e in entities {
                    out.extend_from_slice(&(e.len() as u32).to_le_bytes());
                    out.extend_from_slice(e.as_bytes());
                }
            }
            Message::Distribute { round, client, entities } | Message::Update { round, client, entities } => {
                out.reserve(28 + entities.as_slice().len() * 8);
                out.extend_from_slice(&round.to_le_bytes());
                out.extend_from_slice(&client.to_le_bytes());
                out.extend_from_slice(&(entities.rows() as u64).to_le_bytes());
                out.extend_from_slice(&(entities.dim() as u64).to_le_bytes());
                for v in entities.as_slice() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(malformed(format!("unsupported version {version}")));
        }
        let kind = r.u8()?;
        let msg = match kind {
            1 => {
                let client = r.u32()?;
                let count = r.u64()? as usize;
                let mut entities = Vec::with_capacity(count.min(1 << 20));
                for _ in 0..count {
                    let len = r.u32()? as usize;
                    let s = std::str::from_utf8(r.take(len)?).map_err(|_| malformed("label is not UTF-8"))?;
                    entities.push(s.to_owned());
                }
                Message::Register { client, entities }
            }
            2 | 3 => {
                let round = r.u64()?;
                let client = r.u32()?;
                let rows = r.u64()? as usize;
                let dim = r.u64()? as usize;
                let len = rows
                    .checked_mul(dim)
                    .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                    .ok_or_else(|| malformed("payload shorter than its header"))?;
                let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                let entities = EmbeddingMatrix::from_vec(rows, dim, data);
                if kind == 2 {
                    Message::Distribute { round, client, entities }
                } else {
                    Message::Update { round, client, entities }
                }
            }
            other => return Err(malformed(format!("unknown message kind {other}"))),
        };
        if r.remaining() != 0 {
            return Err(malformed("trailing bytes"));
        }
        Ok(msg)
    }
}

fn malformed(message: impl Into<String>) -> Error {
    Error::Format {
        what: "message",
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(malformed("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
