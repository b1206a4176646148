//! UCEB embedding files.
//!
//! Little-endian layout, no padding between sections:
//!
//! | field   | type              |
//! |---------|-------------------|
//! | magic   | `b"UCEB"`         |
//! | version | u32 = 1           |
//! | n       | u64               |
//! | d       | u32               |
//! | flags   | u32, bit0 = labels|
//! | vectors | n·d × f32         |
//! | labels  | n × i64 (if bit0) |
//! | ids     | n × (u16 len, UTF-8 bytes) |

use std::fs;
use std::path::Path;

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"UCEB";
pub const VERSION: u32 = 1;
pub const FLAG_LABELS: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode(set: &EmbeddingSet) -> Vec<u8> {
    let n = set.count();
    let ids_len: usize = set.ids().iter().map(|s| 2 + s.len()).sum();
    let labels_len = set.labels().map_or(0, |l| l.len() * 8);
    let mut out = Vec::with_capacity(HEADER_LEN + set.vectors().len() * 4 + labels_len + ids_len);

    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    let flags = if set.labels().is_some() { FLAG_LABELS } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());

    for v in set.vectors() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = set.labels() {
        for l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    for id in set.ids() {
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, len: usize, section: &'static str) -> Result<&'a [u8]> {
        if len > self.remaining() {
            return Err(Error::Truncated {
                section,
                needed: len,
                available: self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, section: &'static str) -> Result<[u8; N]> {
        Ok(self.take(N, section)?.try_into().expect("length checked"))
    }
}

/// Parses a UCEB byte buffer. Vectors are taken verbatim; nothing is renormalized.
pub fn decode(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut cur = Cursor { buf: bytes, pos: 0 };

    let magic: [u8; 4] = cur.array("magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u32::from_le_bytes(cur.array("header")?);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = u64::from_le_bytes(cur.array("header")?);
    let d = u32::from_le_bytes(cur.array("header")?) as usize;
    let flags = u32::from_le_bytes(cur.array("header")?);
    if flags & !FLAG_LABELS != 0 {
        return Err(Error::UnknownFlags(flags));
    }
    if d == 0 {
        return Err(Error::ZeroDim);
    }
    if n == 0 {
        return Err(Error::EmptySet);
    }

    // Lengths are checked against the buffer before anything is allocated.
    let too_long = |section| Error::Truncated {
        section,
        needed: usize::MAX,
        available: bytes.len().saturating_sub(HEADER_LEN),
    };
    let n = usize::try_from(n).map_err(|_| too_long("vectors"))?;
    let vec_bytes = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| too_long("vectors"))?;
    let raw = cur.take(vec_bytes, "vectors")?;
    let vectors: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();

    let labels = if flags & FLAG_LABELS != 0 {
        let raw = cur.take(n.checked_mul(8).ok_or_else(|| too_long("labels"))?, "labels")?;
        let labels: Vec<i64> = raw
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l < 0) {
            return Err(Error::NegativeLabel { row, label });
        }
        Some(labels)
    } else {
        None
    };

    if n.checked_mul(2).map_or(true, |min| min > cur.remaining()) {
        return Err(Error::Truncated {
            section: "ids",
            needed: n.saturating_mul(2),
            available: cur.remaining(),
        });
    }
    let mut ids = Vec::with_capacity(n);
    for row in 0..n {
        let len = u16::from_le_bytes(cur.array("ids")?) as usize;
        let raw = cur.take(len, "ids")?;
        let id = std::str::from_utf8(raw).map_err(|_| Error::InvalidId(row))?;
        ids.push(id.to_owned());
    }
    if cur.remaining() != 0 {
        return Err(Error::TrailingBytes(cur.remaining()));
    }

    EmbeddingSet::new(d, vectors, ids, labels)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    decode(&fs::read(path)?)
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(set))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_rows() -> EmbeddingSet {
        EmbeddingSet::new(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], vec!["a".into(), "b".into()], None).unwrap()
    }

    #[test]
    fn round_trips_small_set() {
        let s = two_rows();
        let back = decode(&encode(&s)).unwrap();
        assert_eq!(back.count(), 2);
        assert_eq!(back.dim(), 3);
        assert_eq!(back, s);
    }

    #[test]
    fn unlabeled_file_has_no_label_block() {
        let s = two_rows();
        let bytes = encode(&s);
        assert_eq!(bytes.len(), 24 + 6 * 4 + 2 * 3);
        let flags = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
        assert_eq!(flags, 0);

        let labeled = s.with_labels(Some(vec![4, 1])).unwrap();
        assert_eq!(encode(&labeled).len(), bytes.len() + 16);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let bytes = encode(&two_rows());
        assert_eq!(&bytes[..4], b"UCEB");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[3, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&two_rows());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&bytes), Err(Error::BadMagic(m)) if &m == b"XXXX"));
    }

    #[test]
    fn declared_rows_exceed_payload() {
        let s = EmbeddingSet::new(1, vec![1.0; 4], crate::data::default_ids("", 4), None).unwrap();
        let mut bytes = encode(&s);
        bytes[8..16].copy_from_slice(&5u64.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn zero_dim_and_duplicates_are_distinct_errors() {
        let mut bytes = encode(&two_rows());
        bytes[16..20].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::ZeroDim)));

        let mut bytes = encode(&two_rows());
        let last = bytes.len() - 1;
        bytes[last] = b'a';
        assert!(matches!(decode(&bytes), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn rejects_trailing_bytes_and_huge_counts() {
        let mut bytes = encode(&two_rows());
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(Error::TrailingBytes(1))));

        let mut bytes = encode(&two_rows());
        bytes[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.uceb");
        let s = two_rows().with_labels(Some(vec![0, 2])).unwrap();
        save_embeddings(&s, &p).unwrap();
        assert_eq!(load_embeddings(&p).unwrap(), s);
    }

    fn arb_set() -> impl Strategy<Value = EmbeddingSet> {
        (1usize..6, 1usize..5, any::<bool>()).prop_flat_map(|(n, d, labeled)| {
            (
                proptest::collection::vec(any::<u32>().prop_map(f32::from_bits), n * d),
                proptest::collection::vec(0i64..i64::MAX, n),
                proptest::collection::hash_set("[a-z\u{e9}\u{4e2d}]{0,6}", n),
            )
                .prop_map(move |(v, l, ids)| {
                    let labels = labeled.then_some(l);
                    EmbeddingSet::new(d, v, ids.into_iter().collect(), labels).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn encode_decode_is_bitwise_identity(s in arb_set()) {
            let bytes = encode(&s);
            let back = decode(&bytes).unwrap();
            // compare bits so NaN payloads count too
            let a: Vec<u32> = s.vectors().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.vectors().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(s.ids(), back.ids());
            prop_assert_eq!(s.labels(), back.labels());
            prop_assert_eq!(encode(&back), bytes);
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
            let _ = decode(&bytes);
        }
    }
}
