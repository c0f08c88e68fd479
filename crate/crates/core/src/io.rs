//! On-disk formats: binary snapshots with JSON sidecars and the metrics table.
//!
//! Snapshot layout (all integers and floats little-endian):
//!
//! ```text
//! magic     8 bytes   b"VNSNAP\0\x01"
//! kind      u32       1 = fluid vorticity, 2 = particles, 3 = kinetic density
//! step      u64
//! time      f64
//! nscalars  u32, then nscalars x f64
//! ndims     u32, then ndims x u64
//! data      prod(dims) x f64, row-major (last index fastest)
//! ```
//!
//! Fluid snapshots store physical vorticity `omega[ix][iy]` with scalars `[U0_x, U0_y]`.
//! Particle snapshots are columnar, dims `[2, N, 2]`: first all positions, then all
//! velocities. Kinetic snapshots use dims `[nx, nx, nv, nv]` (x-major, v-minor) with
//! scalars `[vmax, leaked]`.

use crate::diagnostics::DiagnosticsRecord;
use crate::fluid::{FluidState, SpectralVorticityField};
use crate::kinetic::KineticGrid;
use crate::spectral::Fft2;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SNAPSHOT_MAGIC: [u8; 8] = *b"VNSNAP\0\x01";
pub const METRICS_SCHEMA: &str = "vnsim-metrics v1";
pub const AGGREGATE_SCHEMA: &str = "vnsim-aggregate v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format { path: path.to_path_buf(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    Fluid = 1,
    Particles = 2,
    Kinetic = 3,
}

impl SnapshotKind {
    fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Self::Fluid),
            2 => Some(Self::Particles),
            3 => Some(Self::Kinetic),
            _ => None,
        }
    }

    fn layout(&self) -> &'static str {
        match self {
            Self::Fluid => "omega[ix][iy], x = ix/n",
            Self::Particles => "columnar: X[i][c] then V[i][c]",
            Self::Kinetic => "f[ix][iy][a][b], v_a = -vmax + (a + 1/2) dv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub step: u64,
    pub time: f64,
    pub scalars: Vec<f64>,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

/// Human-readable descriptor written next to each binary snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSidecar {
    pub format: String,
    pub kind: SnapshotKind,
    pub byte_order: String,
    pub step: u64,
    pub time: f64,
    pub dims: Vec<u64>,
    pub scalars: Vec<f64>,
    pub layout: String,
}

impl Snapshot {
    pub fn fluid(state: &FluidState, fft: &Fft2, step: u64) -> Self {
        let n = state.n() as u64;
        Self {
            kind: SnapshotKind::Fluid,
            step,
            time: state.time(),
            scalars: state.mean_flow.to_vec(),
            dims: vec![n, n],
            data: state.omega.to_physical(fft),
        }
    }

    pub fn particles(x: &[[f64; 2]], v: &[[f64; 2]], time: f64, step: u64) -> Self {
        let mut data = Vec::with_capacity(4 * x.len());
        data.extend(x.iter().flatten());
        data.extend(v.iter().flatten());
        Self { kind: SnapshotKind::Particles, step, time, scalars: vec![], dims: vec![2, x.len() as u64, 2], data }
    }

    pub fn kinetic(f: &KineticGrid, step: u64) -> Self {
        let (nx, nv) = (f.nx as u64, f.nv as u64);
        Self {
            kind: SnapshotKind::Kinetic,
            step,
            time: f.time,
            scalars: vec![f.vmax, f.leaked],
            dims: vec![nx, nx, nv, nv],
            data: f.values.clone(),
        }
    }

    pub fn to_fluid_state(&self, fft: &Fft2) -> Option<FluidState> {
        if self.kind != SnapshotKind::Fluid || self.scalars.len() != 2 {
            return None;
        }
        let mut state = FluidState::new(SpectralVorticityField::from_physical(&self.data, fft));
        state.omega.time = self.time;
        state.mean_flow = [self.scalars[0], self.scalars[1]];
        Some(state)
    }

    pub fn to_particles(&self) -> Option<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
        if self.kind != SnapshotKind::Particles {
            return None;
        }
        let n = self.dims[1] as usize;
        let pairs: Vec<[f64; 2]> = self.data.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Some((pairs[..n].to_vec(), pairs[n..].to_vec()))
    }

    pub fn to_kinetic(&self) -> Option<KineticGrid> {
        if self.kind != SnapshotKind::Kinetic || self.scalars.len() != 2 {
            return None;
        }
        let mut f = KineticGrid::zeros(self.dims[0] as usize, self.dims[2] as usize, self.scalars[0]);
        f.values.copy_from_slice(&self.data);
        f.time = self.time;
        f.leaked = self.scalars[1];
        Some(f)
    }

    pub fn sidecar(&self) -> SnapshotSidecar {
        SnapshotSidecar {
            format: "vnsim-snapshot v1".into(),
            kind: self.kind,
            byte_order: "little".into(),
            step: self.step,
            time: self.time,
            dims: self.dims.clone(),
            scalars: self.scalars.clone(),
            layout: self.kind.layout().into(),
        }
    }

    /// Writes `path` and `path.json`.
    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        let mut buf = Vec::with_capacity(64 + 8 * self.data.len());
        buf.extend_from_slice(&SNAPSHOT_MAGIC);
        buf.extend_from_slice(&(self.kind as u32).to_le_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&self.time.to_le_bytes());
        buf.extend_from_slice(&(self.scalars.len() as u32).to_le_bytes());
        self.scalars.iter().for_each(|s| buf.extend_from_slice(&s.to_le_bytes()));
        buf.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        self.dims.iter().for_each(|d| buf.extend_from_slice(&d.to_le_bytes()));
        self.data.iter().for_each(|d| buf.extend_from_slice(&d.to_le_bytes()));
        w.write_all(&buf).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
        let side = sidecar_path(path);
        let text = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(&side, text + "\n").map_err(io_err(&side))
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(io_err(path))?).read_to_end(&mut bytes).map_err(io_err(path))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        let short = || format_err(path, "truncated snapshot");
        if cur.take(8).ok_or_else(short)? != SNAPSHOT_MAGIC {
            return Err(format_err(path, "bad magic"));
        }
        let code = cur.u32().ok_or_else(short)?;
        let kind = SnapshotKind::from_code(code).ok_or_else(|| format_err(path, format!("unknown kind {code}")))?;
        let step = cur.u64().ok_or_else(short)?;
        let time = cur.f64().ok_or_else(short)?;
        let ns = cur.u32().ok_or_else(short)? as usize;
        let scalars = (0..ns).map(|_| cur.f64()).collect::<Option<Vec<_>>>().ok_or_else(short)?;
        let nd = cur.u32().ok_or_else(short)? as usize;
        let dims = (0..nd).map(|_| cur.u64()).collect::<Option<Vec<_>>>().ok_or_else(short)?;
        let len: u64 = dims.iter().product();
        let data = (0..len).map(|_| cur.f64()).collect::<Option<Vec<_>>>().ok_or_else(short)?;
        if cur.pos != bytes.len() {
            return Err(format_err(path, "trailing bytes"));
        }
        Ok(Self { kind, step, time, scalars, dims, data })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Fixed-width text for table cells: `{:.17e}` for finite values, `nan` otherwise.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.17e}")
    }
}

pub fn parse_float(s: &str) -> Option<f64> {
    match s.trim() {
        "nan" => Some(f64::NAN),
        t => t.parse().ok(),
    }
}

fn write_table<W: Write>(mut w: W, schema: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    writeln!(w, "# schema: {schema}")?;
    let mut csv = csv::Writer::from_writer(&mut w);
    csv.write_record(header)?;
    for r in rows {
        csv.write_record(r)?;
    }
    csv.flush()
}

fn read_table(path: &Path, schema: &str) -> Result<(Vec<String>, Vec<Vec<String>>), IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let (first, rest) = text.split_once('\n').ok_or_else(|| format_err(path, "empty table"))?;
    let expected = format!("# schema: {schema}");
    if first.trim_end() != expected {
        return Err(format_err(path, format!("schema mismatch: expected \"{expected}\", found \"{}\"", first.trim_end())));
    }
    let mut rdr = csv::Reader::from_reader(rest.as_bytes());
    let header = rdr.headers()?.iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.map(|r| r.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}

pub fn write_metrics<W: Write>(w: W, records: &[DiagnosticsRecord]) -> std::io::Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| std::iter::once(r.step.to_string()).chain(r.values().iter().map(|v| format_float(*v))).collect())
        .collect();
    write_table(w, METRICS_SCHEMA, &DiagnosticsRecord::COLUMNS, &rows)
}

pub fn save_metrics(path: &Path, records: &[DiagnosticsRecord]) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_metrics(BufWriter::new(file), records).map_err(io_err(path))
}

/// Reads a metrics table, checking schema, header and monotone time.
pub fn read_metrics(path: &Path) -> Result<Vec<DiagnosticsRecord>, IoError> {
    let (header, rows) = read_table(path, METRICS_SCHEMA)?;
    if header != DiagnosticsRecord::COLUMNS {
        return Err(format_err(path, "metrics header does not match the schema"));
    }
    let mut out: Vec<DiagnosticsRecord> = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        let step = row[0].parse().map_err(|_| format_err(path, format!("row {k}: bad step")))?;
        let mut v = [0.0; 20];
        for (slot, cell) in v.iter_mut().zip(&row[1..]) {
            *slot = parse_float(cell).ok_or_else(|| format_err(path, format!("row {k}: bad value \"{cell}\"")))?;
        }
        let rec = DiagnosticsRecord::from_values(step, v);
        if let Some(prev) = out.last() {
            if rec.time < prev.time {
                return Err(format_err(path, format!("row {k}: time decreases")));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Generic named-column table with its own schema line (used for sweep aggregates).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn save(&self, path: &Path, schema: &str) -> Result<(), IoError> {
        let file = File::create(path).map_err(io_err(path))?;
        let header: Vec<&str> = self.header.iter().map(String::as_str).collect();
        write_table(BufWriter::new(file), schema, &header, &self.rows).map_err(io_err(path))
    }

    pub fn load(path: &Path, schema: &str) -> Result<Self, IoError> {
        let (header, rows) = read_table(path, schema)?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| parse_float(&r[idx])).collect()
    }
}
