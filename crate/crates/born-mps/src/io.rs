//! File formats: ground-state containers, model containers, and the
//! dataset wire format.
//!
//! State files (`.xygs`): little-endian binary. Magic `XYGS`, u32
//! version, u32 N, u8 boundary, u8 basis, u16 reserved, then 2^N f64
//! amplitudes in index order.
//!
//! Model files (`.xytt`): little-endian binary. Magic `XYTT`, u32
//! version, u32 N, u32 d, u32 D, u8 boundary, u8 scalar kind, u16
//! reserved, then per site: u8 rank, u32 dims, row-major f64 entries
//! (re/im pairs for complex). Save → load → save is byte-identical.
//!
//! Dataset files: one text header
//! `# n_sites=<N> boundary=<open|periodic> basis=<x|y|z> seed=<u64> count=<n>`
//! followed by one configuration per line as `0`/`1` characters, site 1
//! first.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array3;
use num_complex::Complex64;
use thiserror::Error;

use crate::mps::{MeasurementBasis, MpsError, SpinConfiguration, TensorTrain};
use crate::sampler::{Dataset, DatasetMetadata, SamplerError};
use crate::scalar::Scalar;
use crate::spin_model::{Boundary, DenseState, SpinModelError};

const STATE_MAGIC: &[u8; 4] = b"XYGS";
const MODEL_MAGIC: &[u8; 4] = b"XYTT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoFormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes: not a {expected} file")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    SpinModel(#[from] SpinModelError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

fn basis_byte(basis: MeasurementBasis) -> u8 {
    match basis {
        MeasurementBasis::X => b'x',
        MeasurementBasis::Y => b'y',
        MeasurementBasis::Z => b'z',
    }
}

fn basis_from_byte(b: u8) -> Result<MeasurementBasis, IoFormatError> {
    match b {
        b'x' => Ok(MeasurementBasis::X),
        b'y' => Ok(MeasurementBasis::Y),
        b'z' => Ok(MeasurementBasis::Z),
        other => Err(IoFormatError::Corrupt(format!(
            "unknown basis byte {other}"
        ))),
    }
}

fn boundary_byte(b: Boundary) -> u8 {
    match b {
        Boundary::Open => 0,
        Boundary::Periodic => 1,
    }
}

fn boundary_from_byte(b: u8) -> Result<Boundary, IoFormatError> {
    match b {
        0 => Ok(Boundary::Open),
        1 => Ok(Boundary::Periodic),
        other => Err(IoFormatError::Corrupt(format!(
            "unknown boundary byte {other}"
        ))),
    }
}

/// A ground-state vector plus the labels needed downstream.
#[derive(Clone, Debug)]
pub struct StateFile {
    pub boundary: Boundary,
    pub basis: MeasurementBasis,
    pub state: DenseState,
}

pub fn save_state(path: &Path, file: &StateFile) -> Result<(), IoFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STATE_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(file.state.sites() as u32)?;
    w.write_u8(boundary_byte(file.boundary))?;
    w.write_u8(basis_byte(file.basis))?;
    w.write_u16::<LittleEndian>(0)?;
    for &a in file.state.amplitudes() {
        w.write_f64::<LittleEndian>(a)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<StateFile, IoFormatError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != STATE_MAGIC {
        return Err(IoFormatError::BadMagic { expected: "state" });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(IoFormatError::UnsupportedVersion(version));
    }
    let sites = r.read_u32::<LittleEndian>()? as usize;
    if sites == 0 || sites > 30 {
        return Err(IoFormatError::Corrupt(format!("bad site count {sites}")));
    }
    let boundary = boundary_from_byte(r.read_u8()?)?;
    let basis = basis_from_byte(r.read_u8()?)?;
    let _reserved = r.read_u16::<LittleEndian>()?;
    let dim = 1usize << sites;
    let mut amplitudes = Vec::with_capacity(dim);
    for _ in 0..dim {
        amplitudes.push(r.read_f64::<LittleEndian>()?);
    }
    Ok(StateFile {
        boundary,
        basis,
        state: DenseState::new(sites, amplitudes)?,
    })
}

/// Scalar kind tag of a model file.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ScalarKind {
    Real,
    Complex,
}

/// A model container: either a real (trainable) train or a complex
/// (basis-rotated) one.
pub enum ModelFile {
    Real(TensorTrain<f64>),
    Complex(TensorTrain<Complex64>),
}

pub fn save_model_real(path: &Path, tt: &TensorTrain<f64>) -> Result<(), IoFormatError> {
    save_model_impl(path, tt, ScalarKind::Real, |w, &x| {
        w.write_f64::<LittleEndian>(x)
    })
}

pub fn save_model_complex(path: &Path, tt: &TensorTrain<Complex64>) -> Result<(), IoFormatError> {
    save_model_impl(path, tt, ScalarKind::Complex, |w, &z| {
        w.write_f64::<LittleEndian>(z.re)?;
        w.write_f64::<LittleEndian>(z.im)
    })
}

fn save_model_impl<T: Scalar>(
    path: &Path,
    tt: &TensorTrain<T>,
    kind: ScalarKind,
    mut write_scalar: impl FnMut(&mut BufWriter<File>, &T) -> std::io::Result<()>,
) -> Result<(), IoFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(tt.site_count() as u32)?;
    w.write_u32::<LittleEndian>(crate::mps::PHYS_DIM as u32)?;
    w.write_u32::<LittleEndian>(tt.bond_dim() as u32)?;
    w.write_u8(boundary_byte(tt.boundary()))?;
    w.write_u8(match kind {
        ScalarKind::Real => 0,
        ScalarKind::Complex => 1,
    })?;
    w.write_u16::<LittleEndian>(0)?;
    for (k, t) in tt.tensors().iter().enumerate() {
        let (dl, d, dr) = t.dim();
        // declared logical shape: edge tensors of an open chain carry
        // no dummy bond
        let dims: Vec<u32> = if tt.boundary() == Boundary::Open && k == 0 {
            vec![d as u32, dr as u32]
        } else if tt.boundary() == Boundary::Open && k == tt.site_count() - 1 {
            vec![dl as u32, d as u32]
        } else {
            vec![dl as u32, d as u32, dr as u32]
        };
        w.write_u8(dims.len() as u8)?;
        for dim in &dims {
            w.write_u32::<LittleEndian>(*dim)?;
        }
        // row-major entries in (left, physical, right) order; the dummy
        // edge bonds of size 1 do not change the byte sequence
        for x in t.iter() {
            write_scalar(&mut w, x)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile, IoFormatError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(IoFormatError::BadMagic { expected: "model" });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(IoFormatError::UnsupportedVersion(version));
    }
    let sites = r.read_u32::<LittleEndian>()? as usize;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let bond_dim = r.read_u32::<LittleEndian>()? as usize;
    if d != crate::mps::PHYS_DIM {
        return Err(IoFormatError::Corrupt(format!("physical dim {d} != 2")));
    }
    let boundary = boundary_from_byte(r.read_u8()?)?;
    let kind = match r.read_u8()? {
        0 => ScalarKind::Real,
        1 => ScalarKind::Complex,
        other => {
            return Err(IoFormatError::Corrupt(format!(
                "unknown scalar kind {other}"
            )))
        }
    };
    let _reserved = r.read_u16::<LittleEndian>()?;

    let mut shapes = Vec::with_capacity(sites);
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(sites);
    for k in 0..sites {
        let rank = r.read_u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.read_u32::<LittleEndian>()? as usize);
        }
        let storage = match (boundary, rank) {
            (Boundary::Open, 2) if k == 0 => (1, dims[0], dims[1]),
            (Boundary::Open, 2) if k == sites - 1 => (dims[0], dims[1], 1),
            (_, 3) => (dims[0], dims[1], dims[2]),
            _ => {
                return Err(IoFormatError::Corrupt(format!(
                    "tensor {k} has unexpected rank {rank}"
                )))
            }
        };
        let count = storage.0
            * storage.1
            * storage.2
            * match kind {
                ScalarKind::Real => 1,
                ScalarKind::Complex => 2,
            };
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(r.read_f64::<LittleEndian>()?);
        }
        shapes.push(storage);
        raw.push(data);
    }

    match kind {
        ScalarKind::Real => {
            let tensors: Result<Vec<Array3<f64>>, _> = shapes
                .iter()
                .zip(raw)
                .map(|(&shape, data)| {
                    Array3::from_shape_vec(shape, data)
                        .map_err(|e| IoFormatError::Corrupt(e.to_string()))
                })
                .collect();
            Ok(ModelFile::Real(TensorTrain::from_tensors(
                boundary, bond_dim, tensors?,
            )?))
        }
        ScalarKind::Complex => {
            let tensors: Result<Vec<Array3<Complex64>>, _> = shapes
                .iter()
                .zip(raw)
                .map(|(&shape, data)| {
                    let values: Vec<Complex64> = data
                        .chunks_exact(2)
                        .map(|p| Complex64::new(p[0], p[1]))
                        .collect();
                    Array3::from_shape_vec(shape, values)
                        .map_err(|e| IoFormatError::Corrupt(e.to_string()))
                })
                .collect();
            Ok(ModelFile::Complex(TensorTrain::from_tensors(
                boundary, bond_dim, tensors?,
            )?))
        }
    }
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<(), IoFormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    let m = data.metadata();
    writeln!(
        w,
        "# n_sites={} boundary={} basis={} seed={} count={}",
        m.sites,
        m.boundary,
        m.basis,
        m.seed,
        data.len()
    )?;
    for c in data.configurations() {
        writeln!(w, "{c}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, IoFormatError> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| IoFormatError::Corrupt("empty dataset file".into()))??;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| IoFormatError::Corrupt("missing `#` header".into()))?
        .trim();
    let mut sites = None;
    let mut boundary = None;
    let mut basis = None;
    let mut seed = None;
    let mut count = None;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| IoFormatError::Corrupt(format!("bad header field `{field}`")))?;
        match key {
            "n_sites" => sites = Some(value.parse::<usize>().map_err(corrupt)?),
            "boundary" => boundary = Some(value.parse::<Boundary>().map_err(corrupt)?),
            "basis" => basis = Some(value.parse::<MeasurementBasis>().map_err(corrupt)?),
            "seed" => seed = Some(value.parse::<u64>().map_err(corrupt)?),
            "count" => count = Some(value.parse::<usize>().map_err(corrupt)?),
            other => {
                return Err(IoFormatError::Corrupt(format!(
                    "unknown header key `{other}`"
                )))
            }
        }
    }
    let sites = sites.ok_or_else(|| IoFormatError::Corrupt("header missing n_sites".into()))?;
    let boundary =
        boundary.ok_or_else(|| IoFormatError::Corrupt("header missing boundary".into()))?;
    let basis = basis.ok_or_else(|| IoFormatError::Corrupt("header missing basis".into()))?;
    let seed = seed.ok_or_else(|| IoFormatError::Corrupt("header missing seed".into()))?;
    let count = count.ok_or_else(|| IoFormatError::Corrupt("header missing count".into()))?;

    let mut configurations = Vec::with_capacity(count);
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cfg: SpinConfiguration = line
            .parse()
            .map_err(|e: MpsError| IoFormatError::Corrupt(e.to_string()))?;
        if cfg.len() != sites {
            return Err(IoFormatError::Corrupt(format!(
                "configuration `{line}` has {} sites, header says {sites}",
                cfg.len()
            )));
        }
        configurations.push(cfg);
    }
    if configurations.len() != count {
        return Err(IoFormatError::Corrupt(format!(
            "header count {count} but {} configurations",
            configurations.len()
        )));
    }
    Ok(Dataset::new(
        configurations,
        DatasetMetadata {
            sites,
            boundary,
            basis,
            source: format!("file:{}", path.display()),
            seed,
            sample_count: count,
        },
    )?)
}

fn corrupt<E: std::fmt::Display>(e: E) -> IoFormatError {
    IoFormatError::Corrupt(e.to_string())
}
