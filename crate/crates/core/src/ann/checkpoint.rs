//! Model checkpoint container.
//!
//! Layout, all little-endian: 8-byte magic `OCIRNN\0\x01`; `u32 n_in`;
//! `u32 n_hidden`; `f64 selu_lambda`; `f64 selu_alpha`; `f64 label_scale`;
//! `u32 has_standardizer`; `f64 mean`; `f64 std`; then `W0` (row-major
//! `n_hidden × n_in`), `b0`, `W1` (row-major `2 × n_hidden`), `b1` as f64.

use std::io::{Read, Write};

use super::{MlpModel, Selu};
use crate::dataset::{LeReader, Standardizer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"OCIRNN\0\x01";

pub fn write_checkpoint<W: Write>(mut w: W, model: &MlpModel, standardizer: Option<&Standardizer>) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + model.params().len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(model.n_in() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.n_hidden() as u32).to_le_bytes());
    for v in [model.selu.lambda, model.selu.alpha, model.label_scale] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let (flag, s) = match standardizer {
        Some(s) => (1u32, *s),
        None => (0u32, Standardizer { mean: 0.0, std: 1.0 }),
    };
    buf.extend_from_slice(&flag.to_le_bytes());
    buf.extend_from_slice(&s.mean.to_le_bytes());
    buf.extend_from_slice(&s.std.to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(MlpModel, Option<Standardizer>)> {
    let mut r = LeReader::new(r, "checkpoint");
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Format { kind: "checkpoint", reason: "bad magic".into() });
    }
    let n_in = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    if n_in == 0 || n_hidden == 0 {
        return Err(Error::Format { kind: "checkpoint", reason: "zero layer width".into() });
    }
    let selu = Selu { lambda: r.f64()?, alpha: r.f64()? };
    let label_scale = r.f64()?;
    let flag = r.u32()?;
    let s = Standardizer { mean: r.f64()?, std: r.f64()? };
    let standardizer = match flag {
        0 => None,
        1 => Some(s),
        other => return Err(Error::Format { kind: "checkpoint", reason: format!("bad standardizer flag {other}") }),
    };
    let mut model = MlpModel::zeros(n_in, n_hidden);
    let n = model.params().len();
    model.params_mut().copy_from_slice(&r.f64s(n)?);
    r.expect_end()?;
    model.selu = selu;
    model.label_scale = label_scale;
    if !model.is_finite() {
        return Err(Error::Format { kind: "checkpoint", reason: "non-finite weight".into() });
    }
    Ok((model, standardizer))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut m = MlpModel::init(7, 5, 4);
        m.label_scale = 100.0;
        m.b0_mut()[2] = 0.25;
        m.b1_mut()[1] = -3.0;
        let s = Standardizer { mean: 1.5e-7, std: 2.5e-8 };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m, Some(&s)).unwrap();
        assert_eq!(buf.len(), 8 + 8 + 24 + 4 + 16 + m.params().len() * 8);
        let (m2, s2) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(m, m2);
        assert_eq!(s2, Some(s));

        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m, None).unwrap();
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap().1, None);
    }

    #[test]
    fn rejects_corruption() {
        let m = MlpModel::init(3, 2, 1);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m, None).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format { .. })));
    }
}
