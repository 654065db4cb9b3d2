//! Binary snapshots: an 8-byte magic, the length of a JSON header as a
//! little-endian u64, the header, then little-endian f64 arrays in the
//! order the header lists them.

use std::fs;
use std::io;
use std::path::Path;

use mhdsim_core::geometry::{BulkField, BulkVector, Side};
use mhdsim_core::spectral::InterfaceField;
use mhdsim_core::state::PlasmaVacuumState;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"MHDSNAP1";
pub const FORMAT: &str = "mhdsim-snapshot";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f64 units from the start of the data block.
    pub offset: usize,
}

impl ArrayInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub m: usize,
    pub step: usize,
    /// For reading only; the exact time is the `time` array.
    pub time: f64,
    /// Fourier nodes 2πi/n; Chebyshev-Lobatto levels, level 0 on the interface.
    pub grid: String,
    pub arrays: Vec<ArrayInfo>,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn layout(n: usize, m: usize) -> Vec<ArrayInfo> {
    let shapes: [(&str, Vec<usize>); 7] = [
        ("f", vec![n, n]),
        ("theta", vec![n, n]),
        ("omega", vec![3, m + 1, n, n]),
        ("j", vec![3, m + 1, n, n]),
        ("beta", vec![2]),
        ("gamma", vec![2]),
        ("time", vec![1]),
    ];
    let mut offset = 0;
    shapes
        .into_iter()
        .map(|(name, shape)| {
            let info = ArrayInfo { name: name.into(), shape, offset };
            offset += info.len();
            info
        })
        .collect()
}

pub fn encode(step: usize, state: &PlasmaVacuumState) -> Vec<u8> {
    let (n, m) = (state.n(), state.m());
    let header = SnapshotHeader {
        format: FORMAT.into(),
        version: 1,
        n,
        m,
        step,
        time: state.time,
        grid: "fourier-chebyshev-lobatto".into(),
        arrays: layout(n, m),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * (2 * n * n + 6 * (m + 1) * n * n + 5));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let mut push = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    push(state.f.values());
    push(state.theta.values());
    for v in [&state.omega, &state.j] {
        for c in &v.components {
            push(c.values());
        }
    }
    push(&state.beta);
    push(&state.gamma);
    push(&[state.time]);
    out
}

pub fn decode(bytes: &[u8]) -> io::Result<(SnapshotHeader, PlasmaVacuumState)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(invalid("not a snapshot file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| invalid("truncated header"))?;
    let header: SnapshotHeader = serde_json::from_slice(body).map_err(|e| invalid(e.to_string()))?;
    if header.format != FORMAT || header.version != 1 {
        return Err(invalid(format!("unsupported format {} v{}", header.format, header.version)));
    }
    let (n, m) = (header.n, header.m);
    if header.arrays != layout(n, m) {
        return Err(invalid("unexpected array layout"));
    }
    let data = &bytes[16 + len..];
    let total: usize = header.arrays.iter().map(ArrayInfo::len).sum();
    if data.len() != 8 * total {
        return Err(invalid(format!("data block has {} bytes, expected {}", data.len(), 8 * total)));
    }
    let values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let array = |name: &str| {
        let info = header.arrays.iter().find(|a| a.name == name).expect("layout has every array");
        values[info.offset..info.offset + info.len()].to_vec()
    };
    let to_err = |e: mhdsim_core::Error| invalid(e.to_string());
    let interface = |name: &str| InterfaceField::new(n, array(name)).map_err(to_err);
    let bulk = |name: &str| -> io::Result<BulkVector> {
        let all = array(name);
        let size = (m + 1) * n * n;
        let comp = |i: usize| BulkField::new(n, m, Side::Plasma, all[i * size..(i + 1) * size].to_vec()).map_err(to_err);
        Ok(BulkVector::new([comp(0)?, comp(1)?, comp(2)?]))
    };
    let pair = |name: &str| {
        let v = array(name);
        [v[0], v[1]]
    };
    let state = PlasmaVacuumState {
        f: interface("f")?,
        theta: interface("theta")?,
        omega: bulk("omega")?,
        j: bulk("j")?,
        beta: pair("beta"),
        gamma: pair("gamma"),
        time: array("time")[0],
    };
    Ok((header, state))
}

pub fn write_snapshot(path: &Path, step: usize, state: &PlasmaVacuumState) -> io::Result<()> {
    fs::write(path, encode(step, state))
}

pub fn read_snapshot(path: &Path) -> io::Result<(SnapshotHeader, PlasmaVacuumState)> {
    decode(&fs::read(path)?)
}
