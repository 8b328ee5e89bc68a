//! Raw sample dump.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `b"IQS1"`                |
//! | 4      | 4    | `u32` format version (1)       |
//! | 8      | 8    | `f64` sample rate in Hz        |
//! | 16     | 8    | `u64` samples per polarisation |
//! | 24     | 8    | reserved, zero                 |
//!
//! followed by the x-polarisation as interleaved `f64` I,Q pairs and then the
//! y-polarisation in the same form.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::stream::IqStream;

pub const MAGIC: &[u8; 4] = b"IQS1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

pub fn write_iq<W: Write>(mut w: W, stream: &IqStream) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&stream.sample_rate.to_le_bytes())?;
    w.write_all(&(stream.len() as u64).to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    for s in stream.x.iter().chain(&stream.y) {
        w.write_all(&s.re.to_le_bytes())?;
        w.write_all(&s.im.to_le_bytes())?;
    }
    w.flush()
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn read_iq<R: Read>(mut r: R) -> io::Result<IqStream> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(invalid("not an IQS1 file".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(invalid(format!("unsupported IQS1 version {version}")));
    }
    let rate = f64::from_le_bytes(header[8..16].try_into().unwrap());
    let len = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let mut read_pol = || -> io::Result<Vec<Complex64>> {
        let mut buf = [0u8; 16];
        (0..len)
            .map(|_| {
                r.read_exact(&mut buf)?;
                Ok(Complex64::new(
                    f64::from_le_bytes(buf[..8].try_into().unwrap()),
                    f64::from_le_bytes(buf[8..].try_into().unwrap()),
                ))
            })
            .collect()
    };
    let x = read_pol()?;
    let y = read_pol()?;
    IqStream::new(x, y, rate).map_err(|e| invalid(e.to_string()))
}

pub fn save_iq(path: impl AsRef<Path>, stream: &IqStream) -> io::Result<()> {
    write_iq(BufWriter::new(File::create(path)?), stream)
}

pub fn load_iq(path: impl AsRef<Path>) -> io::Result<IqStream> {
    read_iq(BufReader::new(File::open(path)?))
}
