//! Binary encoding of a [`CayleyFactorization`]: `n(n-1)/2` doubles for the
//! strict upper triangle of `S` plus one bit per sign.
//!
//! Wire format, version 1 (all integers little-endian):
//!
//! ```text
//! offset  size             field
//! 0       4                magic "CAYC"
//! 4       1                version = 0x01
//! 5       3                reserved, zero
//! 8       4                n (u32)
//! 12      4                reserved, zero
//! 16      ceil(n/8)        signs: bit i (LSB-first within each byte) = 1 iff d_i = -1,
//!                          trailing pad bits zero
//! ..      8 * n(n-1)/2     S_12, S_13, .., S_1n, S_23, .., S_(n-1)n as IEEE-754 f64
//! ```

use crate::cayley::CayleyFactorization;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::signature::SignatureVector;

pub const MAGIC: [u8; 4] = *b"CAYC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
pub const FILE_EXTENSION: &str = "cayc";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("bad magic {0:02x?}, expected \"CAYC\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("blob length {actual} does not match expected {expected}")]
    LengthMismatch { expected: u64, actual: u64 },
    #[error("non-finite payload value at upper-triangle index {index}")]
    NonFinitePayload { index: usize },
    #[error("reserved header bytes must be zero")]
    ReservedNonZero,
    #[error("sign padding bits must be zero")]
    PaddingNonZero,
    #[error("dimension must be positive")]
    ZeroDimension,
}

impl CodecError {
    /// Stable numeric code for each failure kind.
    pub fn code(&self) -> u8 {
        match self {
            CodecError::BadMagic(_) => 1,
            CodecError::UnsupportedVersion(_) => 2,
            CodecError::LengthMismatch { .. } => 3,
            CodecError::NonFinitePayload { .. } => 4,
            CodecError::ReservedNonZero => 5,
            CodecError::PaddingNonZero => 6,
            CodecError::ZeroDimension => 7,
        }
    }
}

/// Encoded bytes of one factorization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodecBlob(Vec<u8>);

impl CodecBlob {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `16 + ceil(n/8) + 8 * n(n-1)/2`.
pub fn encoded_len(n: usize) -> u64 {
    let n = n as u64;
    HEADER_LEN as u64 + n.div_ceil(8) + 4 * n * n.saturating_sub(1)
}

pub fn encode(f: &CayleyFactorization) -> Result<CodecBlob, CodecError> {
    let n = f.dim();
    let s = f.skew();
    let mut out = Vec::with_capacity(encoded_len(n) as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[VERSION, 0, 0, 0]);
    out.extend_from_slice(
        &u32::try_from(n)
            .expect("dimension fits in u32")
            .to_le_bytes(),
    );
    out.extend_from_slice(&[0; 4]);

    let mut signs = vec![0u8; n.div_ceil(8)];
    for i in 0..n {
        if f.signature().is_negative(i) {
            signs[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&signs);

    let mut index = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = s[(i, j)];
            if !v.is_finite() {
                return Err(CodecError::NonFinitePayload { index });
            }
            out.extend_from_slice(&v.to_le_bytes());
            index += 1;
        }
    }
    Ok(CodecBlob(out))
}

pub fn decode(bytes: &[u8]) -> Result<CayleyFactorization, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::LengthMismatch {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(CodecError::UnsupportedVersion(bytes[4]));
    }
    if bytes[5..8].iter().chain(&bytes[12..16]).any(|&b| b != 0) {
        return Err(CodecError::ReservedNonZero);
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if n == 0 {
        return Err(CodecError::ZeroDimension);
    }
    let expected = encoded_len(n);
    if bytes.len() as u64 != expected {
        return Err(CodecError::LengthMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }

    let sign_bytes = &bytes[HEADER_LEN..HEADER_LEN + n.div_ceil(8)];
    if n % 8 != 0 && sign_bytes[n / 8] >> (n % 8) != 0 {
        return Err(CodecError::PaddingNonZero);
    }
    let signs = (0..n)
        .map(|i| {
            if sign_bytes[i / 8] >> (i % 8) & 1 == 1 {
                -1
            } else {
                1
            }
        })
        .collect();
    let signature = SignatureVector::new(signs).expect("signs are +-1");

    let mut payload = bytes[HEADER_LEN + sign_bytes.len()..].chunks_exact(8);
    let mut skew = DenseMatrix::zeros(n, n);
    let mut index = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let chunk = payload.next().expect("length checked");
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(CodecError::NonFinitePayload { index });
            }
            skew[(i, j)] = v;
            // Matches the layout produced by `DenseMatrix::skew_part`.
            skew[(j, i)] = 0.0 - v;
            index += 1;
        }
    }
    Ok(CayleyFactorization::new(signature, skew).expect("exactly skew by construction"))
}

/// Encodes and writes a `.cayc` file.
pub fn write_blob(path: impl AsRef<std::path::Path>, f: &CayleyFactorization) -> Result<()> {
    let path = path.as_ref();
    let blob = encode(f)?;
    std::fs::write(path, blob.as_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_blob(path: impl AsRef<std::path::Path>) -> Result<CayleyFactorization> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::{factor, reconstruct, DEFAULT_ORTH_TOL};
    use crate::random::random_orthogonal;

    fn bits(m: &DenseMatrix) -> Vec<u64> {
        m.as_slice().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn length_formula() {
        assert_eq!(encoded_len(4), 65);
        assert_eq!(encoded_len(1), 17);
        assert_eq!(encoded_len(8), 16 + 1 + 8 * 28);
        assert_eq!(encoded_len(9), 16 + 2 + 8 * 36);
        let f = factor(&random_orthogonal(4, 0), DEFAULT_ORTH_TOL).unwrap();
        assert_eq!(encode(&f).unwrap().len(), 65);
    }

    #[test]
    fn one_by_one_negative() {
        let f = CayleyFactorization::new(SignatureVector::all_minus(1), DenseMatrix::zeros(1, 1))
            .unwrap();
        let blob = encode(&f).unwrap();
        assert_eq!(blob.len(), 17);
        assert_eq!(blob.as_bytes()[16], 0b1);
        assert_eq!(decode(blob.as_bytes()).unwrap(), f);
    }

    #[test]
    fn header_layout() {
        let blob = encode(&CayleyFactorization::identity(3)).unwrap();
        let b = blob.as_bytes();
        assert_eq!(&b[0..4], b"CAYC");
        assert_eq!(b[4], 1);
        assert_eq!(&b[5..8], &[0, 0, 0]);
        assert_eq!(&b[8..12], &3u32.to_le_bytes());
        assert_eq!(&b[12..16], &[0; 4]);
        assert_eq!(b[16], 0);
        assert!(b[17..].iter().all(|&x| x == 0));
    }

    #[test]
    fn identity_round_trip() {
        let f = decode(
            encode(&CayleyFactorization::identity(5))
                .unwrap()
                .as_bytes(),
        )
        .unwrap();
        assert_eq!(f.signature(), &SignatureVector::all_plus(5));
        assert_eq!(f.skew().max_abs(), 0.0);
    }

    #[test]
    fn bitwise_round_trip_of_factor_output() {
        for seed in 0..20 {
            let f = factor(&random_orthogonal(8, seed), DEFAULT_ORTH_TOL).unwrap();
            let g = decode(encode(&f).unwrap().as_bytes()).unwrap();
            assert_eq!(g.signature(), f.signature());
            assert_eq!(bits(g.skew()), bits(f.skew()));
            assert_eq!(
                bits(&reconstruct(&g).unwrap()),
                bits(&reconstruct(&f).unwrap())
            );
        }
    }

    #[test]
    fn signed_zero_preserved_in_upper_triangle() {
        let mut s = DenseMatrix::zeros(2, 2);
        s[(0, 1)] = -0.0;
        s[(1, 0)] = 0.0;
        let f = CayleyFactorization::new(SignatureVector::all_plus(2), s).unwrap();
        let g = decode(encode(&f).unwrap().as_bytes()).unwrap();
        assert_eq!(g.skew()[(0, 1)].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn sign_bits_lsb_first() {
        let sig = SignatureVector::new(vec![-1, 1, 1, 1, 1, 1, 1, 1, 1, -1]).unwrap();
        let f = CayleyFactorization::new(sig.clone(), DenseMatrix::zeros(10, 10)).unwrap();
        let blob = encode(&f).unwrap();
        assert_eq!(&blob.as_bytes()[16..18], &[0b0000_0001, 0b0000_0010]);
        assert_eq!(decode(blob.as_bytes()).unwrap().signature(), &sig);
    }

    #[test]
    fn decode_errors() {
        let good = encode(&factor(&random_orthogonal(4, 1), DEFAULT_ORTH_TOL).unwrap())
            .unwrap()
            .into_bytes();

        let short = &good[..good.len() - 1];
        assert!(matches!(
            decode(short),
            Err(CodecError::LengthMismatch {
                expected: 65,
                actual: 64
            })
        ));
        assert!(matches!(
            decode(&good[..10]),
            Err(CodecError::LengthMismatch { .. })
        ));

        let mut v = good.clone();
        v[4] = 99;
        assert_eq!(decode(&v), Err(CodecError::UnsupportedVersion(99)));

        let mut v = good.clone();
        v[0] = b'X';
        assert!(matches!(decode(&v), Err(CodecError::BadMagic(_))));

        let mut v = good.clone();
        v[6] = 1;
        assert_eq!(decode(&v), Err(CodecError::ReservedNonZero));

        let mut v = good.clone();
        v[16] |= 0b1000_0000;
        assert_eq!(decode(&v), Err(CodecError::PaddingNonZero));

        let mut v = good.clone();
        v[17 + 8..17 + 16].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(decode(&v), Err(CodecError::NonFinitePayload { index: 1 }));

        let mut v = good;
        v[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert_eq!(decode(&v), Err(CodecError::ZeroDimension));

        let codes: Vec<u8> = [
            CodecError::BadMagic(*b"XXXX"),
            CodecError::UnsupportedVersion(2),
            CodecError::LengthMismatch {
                expected: 1,
                actual: 0,
            },
            CodecError::NonFinitePayload { index: 0 },
        ]
        .iter()
        .map(CodecError::code)
        .collect();
        assert_eq!(codes, vec![1, 2, 3, 4]);
    }

    #[test]
    fn end_to_end_adds_no_error() {
        let u = random_orthogonal(12, 3);
        let f = factor(&u, DEFAULT_ORTH_TOL).unwrap();
        let direct = reconstruct(&f).unwrap().sub(&u).unwrap().frobenius_norm();
        let via = reconstruct(&decode(encode(&f).unwrap().as_bytes()).unwrap())
            .unwrap()
            .sub(&u)
            .unwrap()
            .frobenius_norm();
        assert_eq!(direct.to_bits(), via.to_bits());
    }
}
