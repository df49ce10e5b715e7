//! Output artifacts: commented CSV, a raw binary matrix dump, plot scripts.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

pub const BINARY_MAGIC: &[u8; 4] = b"CLLB";
pub const BINARY_VERSION: u32 = 1;

/// Provenance lines written at the top of every artifact.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    pub command: String,
    pub fields: Vec<(String, String)>,
}

impl Header {
    pub fn new(command: &str) -> Self {
        Header {
            command: command.to_string(),
            fields: Vec::new(),
        }
    }

    pub fn field(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# cllb {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command = {}", self.command);
        for (k, v) in &self.fields {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }
}

/// Comma-separated table with `#` comments before and after the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub trailer: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            trailer: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, header: &Header) -> String {
        let mut s = header.render();
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        for t in &self.trailer {
            let _ = writeln!(s, "# {t}");
        }
        s
    }
}

/// Shortest representation that round-trips.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Write to `path`, or to stdout for `None` / `-`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> io::Result<()> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::write(p, bytes),
        _ => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()
        }
    }
}

/// `"CLLB"`, version `u32`, rows `u64`, cols `u64`, then the matrix in
/// column-major order; everything little-endian. `row_major` is `rows × cols`.
pub fn binary_dump(row_major: &[f64], rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(row_major.len(), rows * cols);
    let mut out = Vec::with_capacity(24 + 8 * rows * cols);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for j in 0..cols {
        for i in 0..rows {
            out.extend_from_slice(&row_major[i * cols + j].to_le_bytes());
        }
    }
    out
}

/// Inverse of [`binary_dump`]; returns the matrix row-major.
pub fn read_binary(bytes: &[u8]) -> Option<(Vec<f64>, usize, usize)> {
    if bytes.len() < 24 || &bytes[..4] != BINARY_MAGIC {
        return None;
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().ok()?);
    if version != BINARY_VERSION {
        return None;
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().ok()?) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().ok()?) as usize;
    let body = &bytes[24..];
    if body.len() != 8 * rows.checked_mul(cols)? {
        return None;
    }
    let mut m = vec![0.0; rows * cols];
    for (k, chunk) in body.chunks_exact(8).enumerate() {
        let (j, i) = (k / rows, k % rows);
        m[i * cols + j] = f64::from_le_bytes(chunk.try_into().ok()?);
    }
    Some((m, rows, cols))
}

/// Plot kinds a script can be emitted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    SmallBall,
    Lil,
    Paths,
}

/// A standalone matplotlib script that reads `csv_name` from its own folder.
pub fn plot_script(kind: PlotKind, csv_name: &str) -> String {
    let body = match kind {
        PlotKind::SmallBall => {
            "d = load()\n\
             eps, p = d['epsilon'], d['prob']\n\
             plt.semilogy(1 / eps, p, 'o-')\n\
             plt.xlabel('1/epsilon')\n\
             plt.ylabel('P(max |X| <= epsilon)')\n"
        }
        PlotKind::Lil => {
            "d = load()\n\
             for r in sorted(set(d['realization'].astype(int)))[:20]:\n\
             \x20   m = d['realization'] == r\n\
             \x20   plt.plot(d['n'][m], d['running_min'][m], lw=0.7)\n\
             plt.xlabel('n')\n\
             plt.ylabel('running min of sup |u_n| / psi(t_n)')\n"
        }
        PlotKind::Paths => {
            "raw = np.genfromtxt(HERE / CSV, delimiter=',', comments='#')[1:, 1:]\n\
             plt.plot(raw[:20].T, lw=0.7)\n\
             plt.xlabel('grid index')\n"
        }
    };
    format!(
        "#!/usr/bin/env python3\n\
         import pathlib\n\
         import numpy as np\n\
         import matplotlib.pyplot as plt\n\
         \n\
         HERE = pathlib.Path(__file__).resolve().parent\n\
         CSV = {csv_name:?}\n\
         \n\
         \n\
         def load():\n\
         \x20   return np.genfromtxt(HERE / CSV, delimiter=',', comments='#', names=True)\n\
         \n\
         \n\
         {body}\
         plt.tight_layout()\n\
         plt.savefig(HERE / (pathlib.Path(CSV).stem + '.png'), dpi=150)\n"
    )
}
