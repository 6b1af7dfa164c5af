//! Binary checkpoint: magic, version, config header, vocabulary, then each
//! parameter tensor as a length-prefixed run of little-endian `f64`.

use std::io::{Read, Write};

use super::network::{Params, TENSOR_NAMES};
use super::{AdamState, DetectorConfig, DetectorError, DetectorModel};
use crate::corpus::Vocabulary;

const MAGIC: &[u8; 8] = b"SYNTHDET";
const VERSION: u32 = 1;

fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64, DetectorError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64, DetectorError> {
    Ok(f64::from_bits(get_u64(r)?))
}

pub fn write_checkpoint<W: Write>(model: &DetectorModel, mut w: W) -> Result<(), DetectorError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let c = &model.config;
    for v in [c.vocab_size, c.embed_dim, c.filters, c.kernel, c.pool, c.hidden, c.max_len] {
        put_u64(&mut w, v as u64)?;
    }
    put_u64(&mut w, c.dropout.to_bits())?;

    put_u64(&mut w, u64::from(model.vocab.min_count()))?;
    put_u64(&mut w, model.vocab.len() as u64)?;
    for t in model.vocab.tokens() {
        put_u64(&mut w, t.len() as u64)?;
        w.write_all(t.as_bytes())?;
    }

    for t in model.params.tensors() {
        put_u64(&mut w, t.len() as u64)?;
        for x in t.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<DetectorModel, DetectorError> {
    let bad = |m: String| DetectorError::Checkpoint(m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a detector checkpoint".into()));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != VERSION {
        return Err(bad(format!("unsupported version {}", u32::from_le_bytes(ver))));
    }
    let mut sizes = [0usize; 7];
    for s in &mut sizes {
        *s = get_u64(&mut r)? as usize;
    }
    let config = DetectorConfig {
        vocab_size: sizes[0],
        embed_dim: sizes[1],
        filters: sizes[2],
        kernel: sizes[3],
        pool: sizes[4],
        hidden: sizes[5],
        max_len: sizes[6],
        dropout: get_f64(&mut r)?,
    };
    config.validate()?;

    let min_count = get_u64(&mut r)? as u32;
    let n = get_u64(&mut r)? as usize;
    if n != config.vocab_size {
        return Err(bad(format!("vocabulary has {n} tokens, config says {}", config.vocab_size)));
    }
    let mut tokens = Vec::with_capacity(n);
    for _ in 0..n {
        let len = get_u64(&mut r)? as usize;
        if len > 1 << 20 {
            return Err(bad("token length out of range".into()));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        tokens.push(String::from_utf8(buf).map_err(|_| bad("token is not UTF-8".into()))?);
    }
    let vocab = Vocabulary::from_tokens(tokens, min_count);

    let mut params = Params::zeros(&config);
    for (name, t) in TENSOR_NAMES.iter().zip(params.tensors_mut()) {
        let len = get_u64(&mut r)? as usize;
        if len != t.len() {
            return Err(bad(format!("tensor {name} has {len} values, expected {}", t.len())));
        }
        for x in t.iter_mut() {
            *x = get_f64(&mut r)?;
        }
    }
    let adam = AdamState::new(&params);
    Ok(DetectorModel {
        config,
        vocab,
        params,
        adam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let vocab = Vocabulary::from_sequences([vec!["naïve", "tokens", "ü"]], 1);
        let cfg = DetectorConfig {
            embed_dim: 3,
            filters: 2,
            kernel: 2,
            pool: 2,
            hidden: 2,
            max_len: 6,
            ..DetectorConfig::default()
        };
        let m = DetectorModel::new(cfg, vocab, 4).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        assert!(matches!(read_checkpoint(&b"NOTACKPTxxxx"[..]), Err(DetectorError::Checkpoint(_))));
    }
}
