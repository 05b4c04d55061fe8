//! Little-endian helpers shared by the binary file formats.

use std::io::Read;

use crate::error::{Error, Result};

pub(crate) fn read_exact_at<R: Read>(input: &mut R, buf: &mut [u8], offset: &mut u64) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("truncated file at byte offset {offset}"))
        } else {
            Error::Format(format!("read failed at byte offset {offset}: {e}"))
        }
    })?;
    *offset += buf.len() as u64;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(input: &mut R, offset: &mut u64) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_at(input, &mut b, offset)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(input: &mut R, offset: &mut u64) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_at(input, &mut b, offset)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32<R: Read>(input: &mut R, offset: &mut u64) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact_at(input, &mut b, offset)?;
    Ok(f32::from_le_bytes(b))
}
