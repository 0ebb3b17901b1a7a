//! Little-endian helpers shared by the binary file formats.

use std::io::{self, Read, Write};

use crate::error::{format_err, IspError, Result};

pub(crate) const FORMAT_VERSION: u32 = 1;

pub(crate) fn write_header<W: Write>(out: &mut W, magic: &[u8; 4]) -> io::Result<()> {
    out.write_all(magic)?;
    write_u32(out, FORMAT_VERSION)
}

pub(crate) fn write_u32<W: Write>(out: &mut W, v: u32) -> io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f32<W: Write>(out: &mut W, v: f32) -> io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f32s<W: Write>(out: &mut W, vs: impl IntoIterator<Item = f32>) -> io::Result<()> {
    for v in vs {
        write_f32(out, v)?;
    }
    Ok(())
}

/// Checks the magic and version words at the start of a file.
pub(crate) fn read_header<R: Read>(input: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut got = [0u8; 4];
    input.read_exact(&mut got).map_err(|e| truncated(e, "magic"))?;
    if &got != magic {
        return Err(format_err!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        ));
    }
    let version = read_u32(input, "version")?;
    if version != FORMAT_VERSION {
        return Err(format_err!("unsupported version {version}"));
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b).map_err(|e| truncated(e, what))?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f32s<R: Read>(input: &mut R, n: usize, what: &str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    input.read_exact(&mut bytes).map_err(|e| truncated(e, what))?;
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

pub(crate) fn read_bytes<R: Read>(input: &mut R, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut bytes = vec![0u8; n];
    input.read_exact(&mut bytes).map_err(|e| truncated(e, what))?;
    Ok(bytes)
}

/// Fails if any bytes remain after the last record.
pub(crate) fn expect_eof<R: Read>(input: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match input.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(IspError::Validation("trailing bytes after last record".into())),
    }
}

fn truncated(e: io::Error, what: &str) -> IspError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        IspError::Validation(format!("truncated file while reading {what}"))
    } else {
        IspError::Io(e)
    }
}

pub(crate) fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| IspError::Validation(format!("{what} = {v} does not fit in u32")))
}
