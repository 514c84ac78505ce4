//! Binary field snapshots. The layout is `CFF1` magic, `u32` grid sides,
//! a one-byte rank tag, then the spectral coefficients as little-endian
//! `f64` pairs `(re, im)`, components outermost and row-major within each
//! component, exactly the in-memory order of [`Field::data`].

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::field::{Field, Rank, Space};
use crate::grid::{Grid, GridError};

pub const MAGIC: [u8; 4] = *b"CFF1";

/// Header bytes before the coefficient payload.
pub const HEADER_LEN: usize = 13;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot io")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected {MAGIC:?}")]
    BadMagic([u8; 4]),
    #[error("unknown rank tag {0}")]
    BadRank(u8),
    #[error("rejected grid dimensions {nx} x {ny}")]
    BadDims {
        nx: u32,
        ny: u32,
        #[source]
        source: GridError,
    },
    #[error("payload holds {got} coefficients, header promises {expected}")]
    WrongLength { expected: usize, got: usize },
}

/// Writes the field's spectral coefficients to `writer`.
pub fn write(field: &Field, writer: &mut impl Write) -> Result<(), SnapshotError> {
    let spectral;
    let field = if field.space() == Space::Spectral {
        field
    } else {
        spectral = field.to_spectral();
        &spectral
    };
    let grid = field.grid();
    writer.write_all(&MAGIC)?;
    writer.write_all(&(grid.nx() as u32).to_le_bytes())?;
    writer.write_all(&(grid.ny() as u32).to_le_bytes())?;
    writer.write_all(&[field.rank().tag()])?;
    let mut buf = Vec::with_capacity(field.data().len() * 16);
    for z in field.data() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    writer.write_all(&buf)?;
    Ok(())
}

/// Reads a spectral field back. The payload must hold exactly the
/// coefficient count the header promises.
pub fn read(reader: &mut impl Read) -> Result<Field, SnapshotError> {
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header)?;
    let magic: [u8; 4] = header[0..4].try_into().expect("slice length");
    if magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let nx = u32::from_le_bytes(header[4..8].try_into().expect("slice length"));
    let ny = u32::from_le_bytes(header[8..12].try_into().expect("slice length"));
    let rank = Rank::from_tag(header[12]).ok_or(SnapshotError::BadRank(header[12]))?;
    let grid =
        Grid::new(nx as usize, ny as usize).map_err(|source| SnapshotError::BadDims {
            nx,
            ny,
            source,
        })?;
    let expected = rank.ncomp() * grid.len();
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != expected * 16 {
        return Err(SnapshotError::WrongLength {
            expected,
            got: payload.len() / 16,
        });
    }
    let mut field = Field::zeros(&grid, rank, Space::Spectral);
    for (z, bytes) in field.data_mut().iter_mut().zip(payload.chunks_exact(16)) {
        let re = f64::from_le_bytes(bytes[0..8].try_into().expect("chunk length"));
        let im = f64::from_le_bytes(bytes[8..16].try_into().expect("chunk length"));
        *z = Complex64::new(re, im);
    }
    Ok(field)
}

/// Writes a snapshot file.
pub fn save(field: &Field, path: &Path) -> Result<(), SnapshotError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write(field, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Reads a snapshot file.
pub fn load(path: &Path) -> Result<Field, SnapshotError> {
    read(&mut BufReader::new(File::open(path)?))
}
