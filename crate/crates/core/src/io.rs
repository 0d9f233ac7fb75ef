//! Binary array files and columnar text output.
//!
//! Layout (little-endian):
//!
//! ```text
//! "NLMD" | version u16 | dtype u16 | n_axes u16
//! per axis: name_len u16 | name utf-8 | len u64 | spacing f64 | origin f64
//! eta f64 | time_exp f64 | kernel_exp f64 | tensor_exp f64 | hbar f64 | eps0 f64 | mu0 f64 | c f64
//! meta_len u32 | meta utf-8, one `key=value` per line
//! payload: row-major (re f64, im f64) pairs
//! ```

use crate::linalg::C64;
use crate::units::{Conventions, Units};
use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"NLMD";
pub const VERSION: u16 = 1;
/// Complex values stored as pairs of f64.
pub const DTYPE_C64: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub len: u64,
    /// Uniform spacing, or 0 for categorical axes.
    pub spacing: f64,
    pub origin: f64,
}

impl Axis {
    pub fn new(name: impl Into<String>, len: usize, spacing: f64, origin: f64) -> Self {
        Self {
            name: name.into(),
            len: len as u64,
            spacing,
            origin,
        }
    }

    pub fn categorical(name: impl Into<String>, len: usize) -> Self {
        Self::new(name, len, 0.0, 0.0)
    }
}

/// Normalization flags carried by every file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConventionFlags {
    pub eta: f64,
    pub conventions: Conventions,
    pub units: Units,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlmdArray {
    pub axes: Vec<Axis>,
    pub flags: ConventionFlags,
    pub meta: Vec<(String, String)>,
    pub data: Vec<C64>,
}

impl NlmdArray {
    pub fn new(axes: Vec<Axis>, flags: ConventionFlags, meta: Vec<(String, String)>, data: Vec<C64>) -> Result<Self> {
        let expect: u64 = axes.iter().map(|a| a.len).product();
        if expect != data.len() as u64 {
            return Err(Error::Shape(format!("axes describe {expect} values, payload has {}", data.len())));
        }
        for (k, v) in &meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Format(format!("metadata entry {k:?} is not a single key=value line")));
            }
        }
        Ok(Self { axes, flags, meta, data })
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 16 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&DTYPE_C64.to_le_bytes());
        out.extend_from_slice(&(self.axes.len() as u16).to_le_bytes());
        for a in &self.axes {
            out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&a.len.to_le_bytes());
            out.extend_from_slice(&a.spacing.to_le_bytes());
            out.extend_from_slice(&a.origin.to_le_bytes());
        }
        let f = &self.flags;
        for v in [
            f.eta,
            f.conventions.time_exp,
            f.conventions.kernel_exp_per_order,
            f.conventions.tensor_exp_per_rank,
            f.units.hbar,
            f.units.eps0,
            f.units.mu0,
            f.units.c,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for z in &self.data {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing NLMD magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dtype = r.u16()?;
        if dtype != DTYPE_C64 {
            return Err(Error::Format(format!("unsupported dtype code {dtype}")));
        }
        let n_axes = r.u16()?;
        let mut axes = Vec::with_capacity(n_axes as usize);
        for _ in 0..n_axes {
            let n = r.u16()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("axis name is not utf-8".into()))?;
            axes.push(Axis {
                name,
                len: r.u64()?,
                spacing: r.f64()?,
                origin: r.f64()?,
            });
        }
        let mut v = [0.0; 8];
        for x in v.iter_mut() {
            *x = r.f64()?;
        }
        let flags = ConventionFlags {
            eta: v[0],
            conventions: Conventions {
                time_exp: v[1],
                kernel_exp_per_order: v[2],
                tensor_exp_per_rank: v[3],
            },
            units: Units {
                hbar: v[4],
                eps0: v[5],
                mu0: v[6],
                c: v[7],
            },
        };
        let n = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Format("metadata is not utf-8".into()))?;
        let meta = text
            .lines()
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Format(format!("metadata line {l:?} lacks '='")))
            })
            .collect::<Result<Vec<_>>>()?;
        let count = axes
            .iter()
            .try_fold(1u64, |acc, a| acc.checked_mul(a.len))
            .ok_or_else(|| Error::Format("axis lengths overflow".into()))?;
        let remaining = (bytes.len() - r.pos) as u64;
        if count.checked_mul(16) != Some(remaining) {
            return Err(Error::Format(format!(
                "payload holds {remaining} bytes, axes need {count} complex values"
            )));
        }
        let mut data = Vec::with_capacity(count as usize);
        for _ in 0..count {
            data.push(C64::new(r.f64()?, r.f64()?));
        }
        Ok(Self { axes, flags, meta, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
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

/// Whitespace-separated columns with a `#` header line.
pub fn columnar(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    use std::fmt::Write as _;
    let mut out = format!("# {}\n", header.join(" "));
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
