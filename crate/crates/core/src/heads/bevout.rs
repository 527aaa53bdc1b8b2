//! `.bevout` head-output fixtures: a 16-byte header (`"BVO1"`, then `s1`,
//! `s2`, `N_e` as little-endian u32) followed by row-major float32 planes for
//! confidence, embeddings (`N_e` per cell), x-offset logits and height.

use super::{HeadOutput, LossError};

pub const BEVOUT_MAGIC: &[u8; 4] = b"BVO1";

pub fn write_bevout(out: &HeadOutput) -> Vec<u8> {
    let n = out.s1 * out.s2;
    let mut bytes = Vec::with_capacity(16 + 4 * n * (3 + out.embed_dim));
    bytes.extend_from_slice(BEVOUT_MAGIC);
    for v in [out.s1, out.s2, out.embed_dim] {
        bytes.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for plane in [&out.conf, &out.embed, &out.x_offset_logits, &out.height] {
        for v in plane.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    bytes
}

pub fn read_bevout(bytes: &[u8]) -> Result<HeadOutput, LossError> {
    let bad = |m: String| LossError::InvalidHeadOutput(m);
    if bytes.len() < 16 || &bytes[..4] != BEVOUT_MAGIC {
        return Err(bad("missing BVO1 header".into()));
    }
    let word = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as u64;
    let (s1, s2, dim) = (word(4), word(8), word(12));
    let n = s1 * s2;
    let floats = n.checked_mul(3 + dim).filter(|f| *f <= (bytes.len() as u64) / 4);
    let Some(floats) = floats else {
        return Err(bad(format!("payload too short for {s1}x{s2}x{dim}")));
    };
    if 16 + 4 * floats != bytes.len() as u64 {
        return Err(bad(format!(
            "expected {} payload bytes for {s1}x{s2}x{dim}, got {}",
            4 * floats,
            bytes.len() - 16
        )));
    }
    let mut values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    let (n, dim) = (n as usize, dim as usize);
    let mut take = |k: usize| values.by_ref().take(k).collect::<Vec<f64>>();
    let out = HeadOutput {
        s1: s1 as usize,
        s2: s2 as usize,
        embed_dim: dim,
        conf: take(n),
        embed: take(n * dim),
        x_offset_logits: take(n),
        height: take(n),
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> HeadOutput {
        HeadOutput {
            s1: 2,
            s2: 1,
            embed_dim: 2,
            conf: vec![0.25, 1.0],
            embed: vec![1.0, -2.0, 0.5, 3.0],
            x_offset_logits: vec![-1.5, 0.0],
            height: vec![0.125, -0.75],
        }
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = write_bevout(&sample());
        assert_eq!(&bytes[..4], b"BVO1");
        assert_eq!(&bytes[4..16], &[2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &0.25f32.to_le_bytes());
        // Embedding block follows the two confidence values.
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 4 * (2 * 3 + 4));
        assert_eq!(read_bevout(&bytes).unwrap(), sample());
    }

    #[test]
    fn rejects_bad_input() {
        let bytes = write_bevout(&sample());
        assert!(read_bevout(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_bevout(b"BVO1").is_err());
        let mut huge = bytes.clone();
        huge[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(read_bevout(&huge).is_err());
        let mut bad_conf = sample();
        bad_conf.conf[0] = 2.0;
        assert!(read_bevout(&write_bevout(&bad_conf)).is_err());
    }
}
