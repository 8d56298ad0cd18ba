use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::{file_err, IoError};
use crate::data::SnapshotSet;
use crate::grid::GridSpec;

pub const RASTER_FORMAT: &str = "flowdmd-raster-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    Text,
    Binary,
}

impl Encoding {
    pub fn as_str(&self) -> &'static str {
        match self {
            Encoding::Text => "text",
            Encoding::Binary => "binary",
        }
    }
}

/// Units and payload settings carried next to the numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterMeta {
    pub encoding: Encoding,
    pub value_unit: String,
    pub length_unit: String,
    pub time_unit: String,
}

impl Default for RasterMeta {
    fn default() -> Self {
        RasterMeta {
            encoding: Encoding::Text,
            value_unit: "mass".into(),
            length_unit: "1".into(),
            time_unit: "1".into(),
        }
    }
}

fn payload_path(manifest: &Path, name: &str) -> PathBuf {
    manifest
        .parent()
        .map(|p| p.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}

/// Writes the manifest to `path` and the payload beside it, named after the
/// manifest with a `.dat` suffix appended.
pub fn write_rasters(set: &SnapshotSet, path: &Path, meta: &RasterMeta) -> Result<(), IoError> {
    let grid = set.grid().ok_or(IoError::NoGrid)?;
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| IoError::Manifest {
            line: 0,
            reason: format!("unusable manifest path {}", path.display()),
        })?;
    let payload_name = format!("{file_name}.dat");
    let mut m = String::new();
    let kv = |m: &mut String, k: &str, v: &dyn std::fmt::Display| {
        writeln!(m, "{k} = {v}").expect("string write");
    };
    kv(&mut m, "format", &RASTER_FORMAT);
    kv(&mut m, "n_rows", &grid.n_rows);
    kv(&mut m, "n_cols", &grid.n_cols);
    kv(&mut m, "cell_width", &grid.cell_width);
    kv(&mut m, "cell_height", &grid.cell_height);
    kv(&mut m, "origin_x", &grid.origin[0]);
    kv(&mut m, "origin_y", &grid.origin[1]);
    kv(&mut m, "t0", &set.t0());
    kv(&mut m, "dt", &set.dt());
    kv(&mut m, "frame_count", &set.n_frames());
    kv(&mut m, "value_unit", &meta.value_unit);
    kv(&mut m, "length_unit", &meta.length_unit);
    kv(&mut m, "time_unit", &meta.time_unit);
    kv(&mut m, "encoding", &meta.encoding.as_str());
    kv(&mut m, "payload", &payload_name);
    fs::write(path, m).map_err(file_err(path))?;

    let data = set.data();
    let bytes = match meta.encoding {
        Encoding::Text => {
            let mut s = String::with_capacity(data.len() * 24);
            for f in 0..data.ncols() {
                for (i, v) in data.column(f).iter().enumerate() {
                    if i > 0 {
                        s.push(' ');
                    }
                    write!(s, "{v:.16e}").expect("string write");
                }
                s.push('\n');
            }
            s.into_bytes()
        }
        Encoding::Binary => {
            let mut b = Vec::with_capacity(data.len() * 8);
            for v in data.iter() {
                b.extend_from_slice(&v.to_le_bytes());
            }
            b
        }
    };
    let payload = payload_path(path, &payload_name);
    fs::write(&payload, bytes).map_err(file_err(&payload))?;
    Ok(())
}

pub fn read_rasters(path: &Path) -> Result<SnapshotSet, IoError> {
    read_rasters_with_meta(path).map(|(s, _)| s)
}

struct Manifest {
    entries: Vec<(usize, String, String)>,
}

impl Manifest {
    fn parse(text: &str) -> Result<Self, IoError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| IoError::Manifest {
                line: i + 1,
                reason: format!("expected 'key = value', got '{line}'"),
            })?;
            let k = k.trim().to_string();
            if entries.iter().any(|e| e.1 == k) {
                return Err(IoError::Manifest {
                    line: i + 1,
                    reason: format!("duplicate key '{k}'"),
                });
            }
            entries.push((i + 1, k, v.trim().to_string()));
        }
        Ok(Manifest { entries })
    }

    fn raw(&self, key: &'static str) -> Result<(usize, &str), IoError> {
        self.entries
            .iter()
            .find(|e| e.1 == key)
            .map(|e| (e.0, e.2.as_str()))
            .ok_or(IoError::MissingKey(key))
    }

    fn get<T: std::str::FromStr>(&self, key: &'static str) -> Result<T, IoError> {
        let (line, v) = self.raw(key)?;
        v.parse().map_err(|_| IoError::Manifest {
            line,
            reason: format!("bad value '{v}' for '{key}'"),
        })
    }

    fn text_or(&self, key: &'static str, default: &str) -> String {
        self.raw(key).map(|r| r.1.to_string()).unwrap_or_else(|_| default.to_string())
    }
}

pub fn read_rasters_with_meta(path: &Path) -> Result<(SnapshotSet, RasterMeta), IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    let m = Manifest::parse(&text)?;
    let (line, format) = m.raw("format")?;
    if format != RASTER_FORMAT {
        return Err(IoError::Manifest {
            line,
            reason: format!("unknown format '{format}'"),
        });
    }
    let n_rows: usize = m.get("n_rows")?;
    let n_cols: usize = m.get("n_cols")?;
    let grid = GridSpec::new(
        n_rows,
        n_cols,
        m.get("cell_width")?,
        m.get("cell_height")?,
        [m.get("origin_x")?, m.get("origin_y")?],
    )
    .map_err(|e| IoError::Manifest {
        line: 0,
        reason: e.to_string(),
    })?;
    let t0: f64 = m.get("t0")?;
    let dt: f64 = m.get("dt")?;
    let frames: usize = m.get("frame_count")?;
    let (line, enc) = m.raw("encoding")?;
    let encoding = match enc {
        "text" => Encoding::Text,
        "binary" => Encoding::Binary,
        other => {
            return Err(IoError::Manifest {
                line,
                reason: format!("unknown encoding '{other}'"),
            })
        }
    };
    let meta = RasterMeta {
        encoding,
        value_unit: m.text_or("value_unit", "mass"),
        length_unit: m.text_or("length_unit", "1"),
        time_unit: m.text_or("time_unit", "1"),
    };
    let (_, payload_name) = m.raw("payload")?;
    let payload = payload_path(path, payload_name);
    let n = grid.node_count();
    let mut data = DMatrix::zeros(n, frames);
    match encoding {
        Encoding::Text => {
            let body = fs::read_to_string(&payload).map_err(file_err(&payload))?;
            let records: Vec<&str> = body.lines().filter(|l| !l.trim().is_empty()).collect();
            if records.len() != frames {
                return Err(IoError::CountMismatch {
                    what: "frames".into(),
                    expected: frames,
                    found: records.len(),
                });
            }
            for (f, rec) in records.iter().enumerate() {
                let mut count = 0;
                for (i, tok) in rec.split_whitespace().enumerate() {
                    let v: f64 = tok.parse().map_err(|_| IoError::BadValue {
                        frame: f,
                        token: tok.to_string(),
                    })?;
                    if i < n {
                        data[(i, f)] = v;
                    }
                    count += 1;
                }
                if count != n {
                    return Err(IoError::CountMismatch {
                        what: format!("values of frame {f}"),
                        expected: n,
                        found: count,
                    });
                }
            }
        }
        Encoding::Binary => {
            let body = fs::read(&payload).map_err(file_err(&payload))?;
            let expected = n * frames;
            if body.len() % 8 != 0 || body.len() / 8 != expected {
                return Err(IoError::CountMismatch {
                    what: "values".into(),
                    expected,
                    found: body.len() / 8,
                });
            }
            for (slot, chunk) in data.iter_mut().zip(body.chunks_exact(8)) {
                *slot = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
    }
    for f in 0..frames {
        if let Some(node) = data.column(f).iter().position(|v| !v.is_finite()) {
            return Err(IoError::NonFinite { frame: f, node });
        }
    }
    let set = SnapshotSet::new(data, t0, dt, Some(grid))?;
    Ok((set, meta))
}
