//! Binary model checkpoints.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic "SOCM" | u32 version
//! u32 d | u32 hidden | u8 variant | u8 use_soc | u8 scale_logits | u8 self_source
//! u32 item_count | item_count x (u16 len, utf-8 id)
//! u32 matrix_count | matrix_count x (u16 len, utf-8 name, u32 rows, u32 cols, rows*cols f64)
//! ```
//!
//! Matrices appear in [`param_names`] order. Encoding is a pure function of
//! the model, so equal models give equal bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{param_names, ScaaModel};
use crate::soc::{SelfAttentionSource, SocOptions, SocVariant};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"SOCM";
pub const VERSION: u32 = 1;

/// A model plus the external ids of its item-table rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ScaaModel,
    pub item_ids: Vec<String>,
}

impl Checkpoint {
    pub fn new(model: ScaaModel, item_ids: Vec<String>) -> Result<Self> {
        if item_ids.len() != model.items.count() {
            return Err(Error::Contract(format!(
                "{} item ids for {} embedding rows",
                item_ids.len(),
                model.items.count()
            )));
        }
        Ok(Checkpoint { model, item_ids })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::Format(format!("string of {} bytes is too long", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode(ck: &Checkpoint) -> Result<Vec<u8>> {
    let m = &ck.model;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, m.d())?;
    put_u32(&mut out, m.hidden())?;
    out.push(m.variant.code());
    out.push(m.use_soc as u8);
    out.push(m.options.scale_logits as u8);
    out.push(match m.options.self_source {
        SelfAttentionSource::Enhanced => 0,
        SelfAttentionSource::Literal => 1,
    });
    put_u32(&mut out, ck.item_ids.len())?;
    for id in &ck.item_ids {
        put_str(&mut out, id)?;
    }
    let mats = m.matrices();
    put_u32(&mut out, mats.len())?;
    for (name, mat) in param_names().into_iter().zip(mats) {
        put_str(&mut out, name)?;
        put_u32(&mut out, mat.rows())?;
        put_u32(&mut out, mat.cols())?;
        for x in mat.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!("truncated at byte {}", self.pos))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }

    fn flag(&mut self, what: &str) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("bad {what} byte {b}"))),
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let d = r.u32()?;
    let hidden = r.u32()?;
    let code = r.u8()?;
    let variant = SocVariant::from_code(code)
        .ok_or_else(|| Error::Format(format!("bad variant code {code}")))?;
    let use_soc = r.flag("use_soc")?;
    let scale_logits = r.flag("scale_logits")?;
    let self_source = match r.u8()? {
        0 => SelfAttentionSource::Enhanced,
        1 => SelfAttentionSource::Literal,
        b => return Err(Error::Format(format!("bad self_source byte {b}"))),
    };
    let item_count = r.u32()?;
    let item_ids = (0..item_count)
        .map(|_| r.string())
        .collect::<Result<Vec<_>>>()?;

    let names = param_names();
    let count = r.u32()?;
    if count != names.len() {
        return Err(Error::Format(format!(
            "expected {} matrices, found {count}",
            names.len()
        )));
    }
    let mut mats = Vec::with_capacity(count);
    for expected in names {
        let name = r.string()?;
        if name != expected {
            return Err(Error::Format(format!(
                "expected matrix {expected:?}, found {name:?}"
            )));
        }
        let rows = r.u32()?;
        let cols = r.u32()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&n| n.saturating_mul(8) <= bytes.len())
            .ok_or_else(|| Error::Format(format!("matrix {name} of {rows}x{cols} is too large")))?;
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        mats.push(Matrix::new(rows, cols, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let options = SocOptions {
        scale_logits,
        self_source,
    };
    let model = ScaaModel::from_matrices(mats, variant, use_soc, options)
        .map_err(|e| Error::Format(format!("inconsistent checkpoint: {e}")))?;
    if model.d() != d || model.hidden() != hidden {
        return Err(Error::Format(format!(
            "header says d={d}, hidden={hidden}; matrices say d={}, hidden={}",
            model.d(),
            model.hidden()
        )));
    }
    Checkpoint::new(model, item_ids).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_model(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(ck)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
