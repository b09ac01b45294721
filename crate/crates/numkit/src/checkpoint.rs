//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "FIOC" | version: u16
//! repeated until EOF:
//!   name_len: u32 | name: utf-8 bytes | rank: u32 | dims: rank x u32 | payload: prod(dims) x f64
//! ```

use std::io::{Read, Write};

use crate::{NumError, Result};

pub const MAGIC: &[u8; 4] = b"FIOC";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn write_checkpoint<W: Write>(mut w: W, tensors: &[Tensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for t in tensors {
        let expected: usize = t.dims.iter().product();
        if expected != t.data.len() {
            return Err(NumError::Format(format!(
                "tensor {} has {} values but dims {:?}",
                t.name,
                t.data.len(),
                t.dims
            )));
        }
        let name = t.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
        for &d in &t.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    if *pos + n > buf.len() {
        return Err(NumError::Format(format!("truncated at byte {}", *pos)));
    }
    let out = &buf[*pos..*pos + n];
    *pos += n;
    Ok(out)
}

fn take_u32(buf: &[u8], pos: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, pos, 4)?.try_into().unwrap()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<Tensor>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    if take(&buf, &mut pos, 4)? != MAGIC {
        return Err(NumError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(&buf, &mut pos, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(NumError::Format(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    while pos < buf.len() {
        let n = take_u32(&buf, &mut pos)? as usize;
        let name = String::from_utf8(take(&buf, &mut pos, n)?.to_vec())
            .map_err(|_| NumError::Format("tensor name is not utf-8".into()))?;
        let rank = take_u32(&buf, &mut pos)? as usize;
        let dims = (0..rank)
            .map(|_| take_u32(&buf, &mut pos).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let data = take(&buf, &mut pos, count * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(Tensor { name, dims, data });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        let t = Tensor {
            name: "a".into(),
            dims: vec![2],
            data: vec![1.0, -0.5],
        };
        write_checkpoint(&mut buf, &[t]).unwrap();
        assert_eq!(&buf[..4], b"FIOC");
        assert_eq!(&buf[4..6], &1u16.to_le_bytes());
        assert_eq!(&buf[6..10], &1u32.to_le_bytes());
        assert_eq!(buf[10], b'a');
        assert_eq!(&buf[11..15], &1u32.to_le_bytes());
        assert_eq!(&buf[15..19], &2u32.to_le_bytes());
        assert_eq!(&buf[19..27], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), 35);
    }

    #[test]
    fn corrupt_input_rejected() {
        assert!(read_checkpoint(&b"NOPE\x01\x00"[..]).is_err());
        let mut buf = Vec::new();
        write_checkpoint(
            &mut buf,
            &[Tensor {
                name: "x".into(),
                dims: vec![3],
                data: vec![0.0; 3],
            }],
        )
        .unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            entries in proptest::collection::vec(
                ("[a-z.]{1,12}", proptest::collection::vec(1usize..4, 0..3)), 0..5),
            seed in any::<u64>(),
        ) {
            let tensors: Vec<Tensor> = entries.into_iter().enumerate().map(|(i, (name, dims))| {
                let n: usize = dims.iter().product();
                let data = (0..n).map(|k| f64::from_bits(seed.wrapping_mul(k as u64 + 1 + i as u64) >> 2)).collect();
                Tensor { name, dims, data }
            }).collect();
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &tensors).unwrap();
            let back = read_checkpoint(&buf[..]).unwrap();
            prop_assert_eq!(back.len(), tensors.len());
            for (a, b) in back.iter().zip(&tensors) {
                prop_assert_eq!(&a.name, &b.name);
                prop_assert_eq!(&a.dims, &b.dims);
                let ab: Vec<u64> = a.data.iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u64> = b.data.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
        }
    }
}
