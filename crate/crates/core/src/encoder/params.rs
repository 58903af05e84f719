use std::borrow::Cow;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which boundary projection a feature or row belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum View {
    Start = 0,
    End = 1,
}

impl View {
    pub const BOTH: [View; 2] = [View::Start, View::End];
}

/// Two `feature_space_size x (embedding_dim / 2)` projection matrices.
///
/// Rows are stored only once they differ from initialization; every other
/// row is regenerated on demand from `(seed, view, row)`, drawn uniformly
/// from `[-1/sqrt(F), 1/sqrt(F)]`. The full matrices at the default
/// feature space size would otherwise take ~130 MB.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    seed: u64,
    feature_space_size: usize,
    half_dim: usize,
    rows: [BTreeMap<u32, Vec<f64>>; 2],
    zero: bool,
}

const MAGIC: &[u8; 4] = b"CENC";
const VERSION: u32 = 1;

impl EncoderParams {
    pub fn init(feature_space_size: usize, embedding_dim: usize, seed: u64) -> Result<Self> {
        if feature_space_size == 0 || feature_space_size > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "feature_space_size must be in 1..=2^32-1, got {feature_space_size}"
            )));
        }
        if embedding_dim == 0 || embedding_dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "embedding_dim must be positive and even, got {embedding_dim}"
            )));
        }
        Ok(EncoderParams {
            seed,
            feature_space_size,
            half_dim: embedding_dim / 2,
            rows: Default::default(),
            zero: false,
        })
    }

    /// All-zero parameters.
    pub fn zeros(feature_space_size: usize, embedding_dim: usize) -> Result<Self> {
        let mut p = Self::init(feature_space_size, embedding_dim, 0)?;
        p.zero = true;
        Ok(p)
    }

    pub fn feature_space_size(&self) -> usize {
        self.feature_space_size
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.half_dim
    }

    pub fn half_dim(&self) -> usize {
        self.half_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stored_rows(&self) -> usize {
        self.rows.iter().map(BTreeMap::len).sum()
    }

    fn initial_row(&self, view: View, index: u32) -> Vec<f64> {
        if self.zero {
            return vec![0.0; self.half_dim];
        }
        let bound = 1.0 / (self.feature_space_size as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((view as u64) << 32) | u64::from(index));
        (0..self.half_dim).map(|_| rng.gen_range(-bound..=bound)).collect()
    }

    pub fn row(&self, view: View, index: u32) -> Cow<'_, [f64]> {
        match self.rows[view as usize].get(&index) {
            Some(r) => Cow::Borrowed(r),
            None => Cow::Owned(self.initial_row(view, index)),
        }
    }

    pub fn row_mut(&mut self, view: View, index: u32) -> &mut Vec<f64> {
        assert!((index as usize) < self.feature_space_size, "row {index} out of range");
        if !self.rows[view as usize].contains_key(&index) {
            let r = self.initial_row(view, index);
            self.rows[view as usize].insert(index, r);
        }
        self.rows[view as usize].get_mut(&index).expect("inserted above")
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().flat_map(|m| m.values()).flatten().all(|v| v.is_finite())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&(self.feature_space_size as u64).to_le_bytes())?;
        out.write_all(&(self.half_dim as u32).to_le_bytes())?;
        out.write_all(&[u8::from(self.zero)])?;
        for view in &self.rows {
            out.write_all(&(view.len() as u32).to_le_bytes())?;
            for (index, row) in view {
                out.write_all(&index.to_le_bytes())?;
                for v in row {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an encoder parameter file".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported encoder file version {version}")));
        }
        let seed = read_u64(&mut input)?;
        let feature_space_size = read_u64(&mut input)? as usize;
        let half_dim = read_u32(&mut input)? as usize;
        let mut zero = [0u8; 1];
        input.read_exact(&mut zero)?;
        let mut params = EncoderParams::init(feature_space_size, 2 * half_dim, seed)?;
        params.zero = zero[0] != 0;
        for view in View::BOTH {
            let n = read_u32(&mut input)?;
            for _ in 0..n {
                let index = read_u32(&mut input)?;
                if index as usize >= feature_space_size {
                    return Err(Error::Format(format!("row {index} outside feature space")));
                }
                let row = (0..half_dim)
                    .map(|_| read_u64(&mut input).map(f64::from_bits))
                    .collect::<Result<Vec<_>>>()?;
                params.rows[view as usize].insert(index, row);
            }
        }
        Ok(params)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_bounded_and_seeded() {
        let p = EncoderParams::init(1024, 8, 7).unwrap();
        let bound = 1.0 / 32.0;
        for i in 0..1024 {
            for v in View::BOTH {
                assert!(p.row(v, i).iter().all(|x| x.abs() <= bound));
            }
        }
        let q = EncoderParams::init(1024, 8, 7).unwrap();
        assert_eq!(p.row(View::End, 3), q.row(View::End, 3));
        let r = EncoderParams::init(1024, 8, 8).unwrap();
        assert_ne!(p.row(View::End, 3), r.row(View::End, 3));
        assert_ne!(p.row(View::Start, 3), p.row(View::End, 3));
    }

    #[test]
    fn materializing_a_row_keeps_its_value() {
        let mut p = EncoderParams::init(64, 4, 1).unwrap();
        let before = p.row(View::Start, 9).into_owned();
        p.row_mut(View::Start, 9);
        assert_eq!(p.row(View::Start, 9).as_ref(), before.as_slice());
    }

    #[test]
    fn rejects_odd_dimension() {
        assert!(EncoderParams::init(64, 5, 0).is_err());
        assert!(EncoderParams::init(0, 4, 0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let mut p = EncoderParams::init(64, 4, 3).unwrap();
        p.row_mut(View::End, 5)[1] = 0.25;
        p.row_mut(View::Start, 63)[0] = -1.5;
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        let q = EncoderParams::read(buf.as_slice()).unwrap();
        assert_eq!(p, q);
        assert!(EncoderParams::read(&b"XXXX"[..]).is_err());
    }
}
