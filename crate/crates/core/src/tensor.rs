//! Self-describing binary container for every array exchanged between CLI
//! stages and with external prior generators.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  ASCII "NCS1"
//! version  u8       currently 1
//! dtype    u8       1 = complex f32, 2 = real f32, 3 = real f64, 4 = complex f64
//! ndim     u8       1..=8
//! reserved u8       zero
//! dims     ndim x u64
//! payload  row-major (last index fastest), complex interleaved (re, im)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use ndarray::{ArrayD, IxDyn};
use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"NCS1";
pub const VERSION: u8 = 1;
pub const MAX_NDIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    Complex32 = 1,
    Real32 = 2,
    Real64 = 3,
    Complex64 = 4,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::Complex32),
            2 => Some(DType::Real32),
            3 => Some(DType::Real64),
            4 => Some(DType::Complex64),
            _ => None,
        }
    }

    /// Payload bytes per element.
    pub fn width(self) -> usize {
        match self {
            DType::Complex32 => 8,
            DType::Real32 => 4,
            DType::Real64 => 8,
            DType::Complex64 => 16,
        }
    }
}

/// A tensor value of any supported dtype, as read from or written to disk.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Complex32(ArrayD<Complex32>),
    Real32(ArrayD<f32>),
    Real64(ArrayD<f64>),
    Complex64(ArrayD<Complex64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::Complex32(_) => DType::Complex32,
            TensorData::Real32(_) => DType::Real32,
            TensorData::Real64(_) => DType::Real64,
            TensorData::Complex64(_) => DType::Complex64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::Complex32(a) => a.shape(),
            TensorData::Real32(a) => a.shape(),
            TensorData::Real64(a) => a.shape(),
            TensorData::Complex64(a) => a.shape(),
        }
    }

    pub fn into_complex64(self) -> Result<ArrayD<Complex64>> {
        match self {
            TensorData::Complex64(a) => Ok(a),
            TensorData::Complex32(a) => Ok(a.mapv(|z| Complex64::new(z.re as f64, z.im as f64))),
            TensorData::Real64(a) => Ok(a.mapv(|x| Complex64::new(x, 0.0))),
            TensorData::Real32(a) => Ok(a.mapv(|x| Complex64::new(x as f64, 0.0))),
        }
    }

    pub fn into_real64(self) -> Result<ArrayD<f64>> {
        match self {
            TensorData::Real64(a) => Ok(a),
            TensorData::Real32(a) => Ok(a.mapv(|x| x as f64)),
            _ => Err(Error::InvalidArgument(
                "expected a real-valued tensor, found complex".into(),
            )),
        }
    }
}

fn check_dims(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_NDIM {
        return Err(Error::InvalidArgument(format!(
            "tensor rank must be 1..={MAX_NDIM}, got {}",
            shape.len()
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!(
            "tensor dims must all be >= 1, got {shape:?}"
        )));
    }
    Ok(())
}

/// Write a tensor in the container layout. Bit-exact: round-tripping through
/// [`read_tensor`] recovers the identical values.
pub fn write_tensor(path: impl AsRef<Path>, data: &TensorData) -> Result<()> {
    let path = path.as_ref();
    check_dims(data.shape())?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    w.write_all(&MAGIC).map_err(io)?;
    w.write_u8(VERSION).map_err(io)?;
    w.write_u8(data.dtype().code()).map_err(io)?;
    w.write_u8(data.shape().len() as u8).map_err(io)?;
    w.write_u8(0).map_err(io)?;
    for &d in data.shape() {
        w.write_u64::<LE>(d as u64).map_err(io)?;
    }

    // Row-major element order. `iter()` walks in logical order regardless of
    // the in-memory layout of the source array.
    match data {
        TensorData::Complex32(a) => {
            for z in a.iter() {
                w.write_f32::<LE>(z.re).map_err(io)?;
                w.write_f32::<LE>(z.im).map_err(io)?;
            }
        }
        TensorData::Real32(a) => {
            for &x in a.iter() {
                w.write_f32::<LE>(x).map_err(io)?;
            }
        }
        TensorData::Real64(a) => {
            for &x in a.iter() {
                w.write_f64::<LE>(x).map_err(io)?;
            }
        }
        TensorData::Complex64(a) => {
            for z in a.iter() {
                w.write_f64::<LE>(z.re).map_err(io)?;
                w.write_f64::<LE>(z.im).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Read a tensor written by [`write_tensor`]. Exact value recovery, no lossy
/// conversion.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::bad_tensor(path, "file shorter than header"))?;
    if magic != MAGIC {
        return Err(Error::bad_tensor(
            path,
            format!("bad magic {magic:?}, expected {MAGIC:?}"),
        ));
    }
    let version = r.read_u8().map_err(io)?;
    if version != VERSION {
        return Err(Error::bad_tensor(path, format!("unsupported version {version}")));
    }
    let dtype_code = r.read_u8().map_err(io)?;
    let dtype = DType::from_code(dtype_code)
        .ok_or_else(|| Error::bad_tensor(path, format!("unknown dtype code {dtype_code}")))?;
    let ndim = r.read_u8().map_err(io)? as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(Error::bad_tensor(path, format!("ndim {ndim} out of range 1..={MAX_NDIM}")));
    }
    let _reserved = r.read_u8().map_err(io)?;

    let mut dims = Vec::with_capacity(ndim);
    let mut n_elems: usize = 1;
    for _ in 0..ndim {
        let d = r.read_u64::<LE>().map_err(|_| Error::bad_tensor(path, "truncated dims"))?;
        let d = usize::try_from(d)
            .map_err(|_| Error::bad_tensor(path, format!("dim {d} overflows usize")))?;
        if d == 0 {
            return Err(Error::bad_tensor(path, "zero dimension"));
        }
        n_elems = n_elems
            .checked_mul(d)
            .ok_or_else(|| Error::bad_tensor(path, "dims product overflows"))?;
        dims.push(d);
    }
    n_elems
        .checked_mul(dtype.width())
        .ok_or_else(|| Error::bad_tensor(path, "payload size overflows"))?;

    let truncated = |_| Error::bad_tensor(path, "truncated payload");
    let data = match dtype {
        DType::Complex32 => {
            let mut buf = Vec::with_capacity(n_elems);
            for _ in 0..n_elems {
                let re = r.read_f32::<LE>().map_err(truncated)?;
                let im = r.read_f32::<LE>().map_err(truncated)?;
                buf.push(Complex32::new(re, im));
            }
            TensorData::Complex32(ArrayD::from_shape_vec(IxDyn(&dims), buf).unwrap())
        }
        DType::Real32 => {
            let mut buf = Vec::with_capacity(n_elems);
            for _ in 0..n_elems {
                buf.push(r.read_f32::<LE>().map_err(truncated)?);
            }
            TensorData::Real32(ArrayD::from_shape_vec(IxDyn(&dims), buf).unwrap())
        }
        DType::Real64 => {
            let mut buf = Vec::with_capacity(n_elems);
            for _ in 0..n_elems {
                buf.push(r.read_f64::<LE>().map_err(truncated)?);
            }
            TensorData::Real64(ArrayD::from_shape_vec(IxDyn(&dims), buf).unwrap())
        }
        DType::Complex64 => {
            let mut buf = Vec::with_capacity(n_elems);
            for _ in 0..n_elems {
                let re = r.read_f64::<LE>().map_err(truncated)?;
                let im = r.read_f64::<LE>().map_err(truncated)?;
                buf.push(Complex64::new(re, im));
            }
            TensorData::Complex64(ArrayD::from_shape_vec(IxDyn(&dims), buf).unwrap())
        }
    };

    // Trailing garbage means the file does not conform to the layout.
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(data),
        Ok(_) => Err(Error::bad_tensor(path, "trailing bytes after payload")),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;
    use proptest::prelude::*;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("ncs-tensor-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn real_single_zeros_layout() {
        let path = tmpfile("zeros.ncs");
        let a = ArrayD::<f32>::zeros(IxDyn(&[2, 2]));
        write_tensor(&path, &TensorData::Real32(a)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // 8-byte fixed header + 2 dims x 8 bytes, then 4 f32 zeros.
        assert_eq!(bytes.len(), 24 + 16);
        assert_eq!(&bytes[0..4], b"NCS1");
        assert_eq!(bytes[4], 1); // version
        assert_eq!(bytes[5], 2); // real f32
        assert_eq!(bytes[6], 2); // ndim
        assert_eq!(bytes[7], 0); // reserved
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert!(bytes[24..].iter().all(|&b| b == 0));
    }

    #[test]
    fn complex_single_interleaved_layout() {
        let path = tmpfile("one_elem.ncs");
        let a = ArrayD::from_shape_vec(IxDyn(&[1]), vec![Complex32::new(1.0, 2.0)]).unwrap();
        write_tensor(&path, &TensorData::Complex32(a)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 8);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[20..24], &2.0f32.to_le_bytes());
    }

    #[test]
    fn round_trip_complex_3d() {
        let path = tmpfile("rt_c64.ncs");
        let mut rng = 0x1234_5678_u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let vals: Vec<Complex64> = (0..3 * 4 * 5).map(|_| Complex64::new(next(), next())).collect();
        let a = ArrayD::from_shape_vec(IxDyn(&[3, 4, 5]), vals).unwrap();
        let t = TensorData::Complex64(a);
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn bad_magic_rejected() {
        let path = tmpfile("bad_magic.ncs");
        let a = ArrayD::<f64>::zeros(IxDyn(&[2]));
        write_tensor(&path, &TensorData::Real64(a)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        std::fs::write(&path, &bytes).unwrap();
        let err = read_tensor(&path).unwrap_err();
        assert!(matches!(err, Error::BadTensor { .. }), "got {err:?}");
    }

    #[test]
    fn truncated_payload_rejected() {
        let path = tmpfile("trunc.ncs");
        let a = ArrayD::<f64>::zeros(IxDyn(&[10]));
        write_tensor(&path, &TensorData::Real64(a)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // Drop the last element (8 bytes): 10 declared, 9 present.
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        let err = read_tensor(&path).unwrap_err();
        assert!(matches!(err, Error::BadTensor { .. }), "got {err:?}");
    }

    #[test]
    fn trailing_bytes_rejected() {
        let path = tmpfile("trailing.ncs");
        let a = ArrayD::<f32>::zeros(IxDyn(&[2]));
        write_tensor(&path, &TensorData::Real32(a)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_tensor(&path).is_err());
    }

    #[test]
    fn ndim_limits_enforced() {
        let path = tmpfile("rank9.ncs");
        let a = ArrayD::<f32>::zeros(IxDyn(&[1; 9]));
        assert!(write_tensor(&path, &TensorData::Real32(a)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_any_dtype_and_rank(
            ndim in 1usize..=8,
            seed in any::<u64>(),
            which in 0u8..4,
        ) {
            // Small dims so the case stays fast even at rank 8.
            let dims: Vec<usize> = (0..ndim).map(|i| 1 + ((seed >> (i * 3)) as usize % 3)).collect();
            let n: usize = dims.iter().product();
            let mut s = seed | 1;
            let mut next = move || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let path = tmpfile(&format!("prop_{seed}_{which}.ncs"));
            let t = match which {
                0 => TensorData::Real32(ArrayD::from_shape_vec(IxDyn(&dims), (0..n).map(|_| next() as f32).collect()).unwrap()),
                1 => TensorData::Real64(ArrayD::from_shape_vec(IxDyn(&dims), (0..n).map(|_| next()).collect()).unwrap()),
                2 => TensorData::Complex32(ArrayD::from_shape_vec(IxDyn(&dims), (0..n).map(|_| Complex32::new(next() as f32, next() as f32)).collect()).unwrap()),
                _ => TensorData::Complex64(ArrayD::from_shape_vec(IxDyn(&dims), (0..n).map(|_| Complex64::new(next(), next())).collect()).unwrap()),
            };
            write_tensor(&path, &t).unwrap();
            let back = read_tensor(&path).unwrap();
            prop_assert_eq!(t, back);
        }
    }
}
