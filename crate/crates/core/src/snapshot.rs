//! Binary field snapshots.
//!
//! Layout (all little-endian): magic `ELF1`, format version `u32`, kind tag
//! `u32` (scalar 0, vector 1, tensor 2, director 3), dims `3 x u64`, box lengths
//! `3 x f64`, then the raster as `f64` in C order with the component index
//! varying fastest.

use std::io::{Read, Write};

use crate::error::SnapshotError;
use crate::field::{DirectorField, Field, FieldKind, ScalarField, TensorField, VectorField};
use crate::grid::Grid;

pub const MAGIC: [u8; 4] = *b"ELF1";
pub const VERSION: u32 = 1;

pub fn write_field<W: Write>(w: &mut W, field: &impl Field) -> std::io::Result<()> {
    let grid = field.grid();
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(field.kind() as u32).to_le_bytes())?;
    for n in grid.dims() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for l in grid.lengths() {
        w.write_all(&l.to_le_bytes())?;
    }
    let comps = field.components();
    let mut buf = Vec::with_capacity(grid.len() * comps.len() * 8);
    for n in 0..grid.len() {
        for c in &comps {
            buf.extend_from_slice(&c[n].to_le_bytes());
        }
    }
    w.write_all(&buf)
}

/// A decoded snapshot of any kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: FieldKind,
    pub grid: Grid,
    pub components: Vec<Vec<f64>>,
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_field<R: Read>(r: &mut R) -> Result<Snapshot, SnapshotError> {
    let magic = read_array::<4, _>(r)?;
    if magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let tag = u32::from_le_bytes(read_array(r)?);
    let kind = FieldKind::from_tag(tag).ok_or(SnapshotError::KindTag(tag))?;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = u64::from_le_bytes(read_array(r)?) as usize;
    }
    let mut lengths = [0f64; 3];
    for l in &mut lengths {
        *l = f64::from_le_bytes(read_array(r)?);
    }
    let grid = Grid::new(dims, lengths)?;
    let nc = kind.components();
    let mut raw = vec![0u8; grid.len() * nc * 8];
    r.read_exact(&mut raw)?;
    let mut components = vec![Vec::with_capacity(grid.len()); nc];
    for (i, chunk) in raw.chunks_exact(8).enumerate() {
        components[i % nc].push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
    }
    Ok(Snapshot {
        kind,
        grid,
        components,
    })
}

impl Snapshot {
    fn expect(&self, kind: FieldKind) -> Result<(), SnapshotError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(SnapshotError::WrongKind {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }

    pub fn into_scalar(mut self) -> Result<ScalarField, SnapshotError> {
        self.expect(FieldKind::Scalar)?;
        Ok(ScalarField::from_vec(self.grid, self.components.remove(0))?)
    }

    pub fn into_vector(self) -> Result<VectorField, SnapshotError> {
        self.expect(FieldKind::Vector)?;
        let comps: [Vec<f64>; 3] = self.components.try_into().expect("three components");
        Ok(VectorField::from_components(self.grid, comps)?)
    }

    pub fn into_tensor(self) -> Result<TensorField, SnapshotError> {
        self.expect(FieldKind::Tensor)?;
        let comps: [Vec<f64>; 9] = self.components.try_into().expect("nine components");
        Ok(TensorField::from_components(self.grid, comps)?)
    }

    /// Unit data is kept bit for bit so that checkpoints resume exactly.
    pub fn into_director(self) -> Result<DirectorField, SnapshotError> {
        self.expect(FieldKind::Director)?;
        let comps: [Vec<f64>; 3] = self.components.try_into().expect("three components");
        let v = VectorField::from_components(self.grid, comps)?;
        Ok(DirectorField::from_stored(v))
    }
}
