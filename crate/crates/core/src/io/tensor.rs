//! `LKT1` tensor container.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "LKT1"
//! 4       1         dtype code (1 = f32)
//! 5       1         rank (2 or 3)
//! 6       10        reserved, zero
//! 16      4 * rank  dims, u32 little-endian, outermost first
//! ..      ..        payload, row-major little-endian values
//! ```
//!
//! Rank 2 is one `[height, width]` plane. Rank 3 is `[planes, height, width]`;
//! network outputs store four planes in the order score, up, mid, down.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FormatError;
use crate::loss::LogitMaps;
use crate::plane::Plane;

pub const MAGIC: [u8; 4] = *b"LKT1";
pub const DTYPE_F32: u8 = 1;
/// Bytes before the dims array.
pub const HEADER_PREFIX: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<u32>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self, FormatError> {
        if !(2..=3).contains(&dims.len()) {
            return Err(FormatError::Rank(dims.len() as u8));
        }
        let n: usize = dims.iter().map(|&d| d as usize).product();
        if n != data.len() {
            return Err(FormatError::Length {
                expected: n,
                got: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_plane(plane: &Plane) -> Self {
        Self {
            dims: vec![plane.height() as u32, plane.width() as u32],
            data: plane.data().to_vec(),
        }
    }

    /// Stacks equally-shaped planes into a rank-3 tensor.
    pub fn from_planes(planes: &[&Plane]) -> Result<Self, FormatError> {
        let first = planes.first().ok_or(FormatError::Rank(3))?;
        let shape = first.shape();
        if planes.iter().any(|p| p.shape() != shape) {
            return Err(FormatError::Schema("planes differ in shape".into()));
        }
        let mut data = Vec::with_capacity(planes.len() * first.data().len());
        for p in planes {
            data.extend_from_slice(p.data());
        }
        Ok(Self {
            dims: vec![planes.len() as u32, shape.0 as u32, shape.1 as u32],
            data,
        })
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Splits into planes (one for rank 2).
    pub fn to_planes(&self) -> Vec<Plane> {
        let (h, w) = {
            let n = self.dims.len();
            (self.dims[n - 2] as usize, self.dims[n - 1] as usize)
        };
        let per = h * w;
        if per == 0 {
            let count = if self.dims.len() == 3 { self.dims[0] as usize } else { 1 };
            return vec![Plane::zeros(w, h); count];
        }
        self.data
            .chunks(per)
            .map(|c| Plane::from_vec(w, h, c.to_vec()).expect("chunk length matches"))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_PREFIX + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        out.extend_from_slice(&[0u8; 10]);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < HEADER_PREFIX {
            return Err(FormatError::Truncated {
                expected: HEADER_PREFIX,
                got: bytes.len(),
            });
        }
        if bytes[..4] != MAGIC {
            return Err(FormatError::Magic([bytes[0], bytes[1], bytes[2], bytes[3]]));
        }
        if bytes[4] != DTYPE_F32 {
            return Err(FormatError::DType(bytes[4]));
        }
        let rank = bytes[5];
        if !(2..=3).contains(&rank) {
            return Err(FormatError::Rank(rank));
        }
        if bytes[6..16].iter().any(|&b| b != 0) {
            return Err(FormatError::Schema("reserved header bytes must be zero".into()));
        }
        let dims_end = HEADER_PREFIX + 4 * rank as usize;
        if bytes.len() < dims_end {
            return Err(FormatError::Truncated {
                expected: dims_end,
                got: bytes.len(),
            });
        }
        let dims: Vec<u32> = bytes[HEADER_PREFIX..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| FormatError::Schema("dims overflow".into()))?;
        let expected = n
            .checked_mul(4)
            .and_then(|b| b.checked_add(dims_end))
            .ok_or_else(|| FormatError::Schema("dims overflow".into()))?;
        if bytes.len() != expected {
            return Err(if bytes.len() < expected {
                FormatError::Truncated {
                    expected,
                    got: bytes.len(),
                }
            } else {
                FormatError::Length {
                    expected,
                    got: bytes.len(),
                }
            });
        }
        let data = bytes[dims_end..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), FormatError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, FormatError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

pub fn logits_to_tensor(logits: &LogitMaps) -> Tensor {
    Tensor::from_planes(&logits.planes()).expect("logit planes share one shape")
}

/// Interprets a `[4, H, W]` tensor as network outputs.
pub fn tensor_to_logits(t: &Tensor) -> Result<LogitMaps, FormatError> {
    if t.dims().len() != 3 || t.dims()[0] != 4 {
        return Err(FormatError::Schema(format!(
            "network outputs need dims [4, H, W], got {:?}",
            t.dims()
        )));
    }
    let mut planes = t.to_planes().into_iter();
    let mut next = || planes.next().expect("four planes");
    let (score, up, mid, down) = (next(), next(), next(), next());
    LogitMaps::new(score, up, mid, down).map_err(|e| FormatError::Schema(e.to_string()))
}
