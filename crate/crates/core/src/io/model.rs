//! Binary model file. All numbers are little-endian; integers are `u64`.
//!
//! ```text
//! magic "FLOWDMD-MODEL-1\n" (16 bytes)
//! n_states  rank  scaling(0 projected, 1 inverse eigenvalue)
//! has_grid [n_rows n_cols cell_width cell_height origin_x origin_y]
//! dt_fit t0 t_end
//! lambdas, omegas, amplitudes: rank complex values each (re, im)
//! modes: n_states x rank complex values, column-major
//! spectrum_len spectrum..., clipped_from (u64::MAX for none), fit_residual
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{file_err, IoError};
use crate::dmd::{DmdModel, FitDiagnostics, ModeScaling};
use crate::grid::GridSpec;
use crate::linalg::C64;

pub const MODEL_MAGIC: &[u8; 16] = b"FLOWDMD-MODEL-1\n";

struct Out<'a, W: Write>(&'a mut W);

impl<W: Write> Out<'_, W> {
    fn u(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn c(&mut self, v: C64) -> std::io::Result<()> {
        self.f(v.re)?;
        self.f(v.im)
    }
}

pub fn write_model_to<W: Write>(model: &DmdModel, w: &mut W) -> Result<(), IoError> {
    w.write_all(MODEL_MAGIC)?;
    let mut o = Out(w);
    let r = model.rank();
    o.u(model.n_states() as u64)?;
    o.u(r as u64)?;
    o.u(match model.scaling {
        ModeScaling::Projected => 0,
        ModeScaling::InverseEigenvalue => 1,
    })?;
    match &model.grid {
        Some(g) => {
            o.u(1)?;
            o.u(g.n_rows as u64)?;
            o.u(g.n_cols as u64)?;
            o.f(g.cell_width)?;
            o.f(g.cell_height)?;
            o.f(g.origin[0])?;
            o.f(g.origin[1])?;
        }
        None => o.u(0)?,
    }
    o.f(model.dt_fit)?;
    o.f(model.t0)?;
    o.f(model.t_end)?;
    for list in [&model.lambdas, &model.omegas, &model.amplitudes] {
        for &v in list.iter() {
            o.c(v)?;
        }
    }
    for &v in model.modes.iter() {
        o.c(v)?;
    }
    let d = &model.diagnostics;
    o.u(d.spectrum.len() as u64)?;
    for &s in &d.spectrum {
        o.f(s)?;
    }
    o.u(d.clipped_from.map(|c| c as u64).unwrap_or(u64::MAX))?;
    o.f(d.fit_residual)?;
    Ok(())
}

struct In<'a, R: Read>(&'a mut R);

impl<R: Read> In<'_, R> {
    fn bytes(&mut self) -> Result<[u8; 8], IoError> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => IoError::BadModel("truncated".into()),
            _ => IoError::Stream(e),
        })?;
        Ok(b)
    }
    fn u(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn size(&mut self, what: &str, limit: u64) -> Result<usize, IoError> {
        let v = self.u()?;
        if v > limit {
            return Err(IoError::BadModel(format!("{what} = {v}")));
        }
        Ok(v as usize)
    }
    fn f(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn c(&mut self) -> Result<C64, IoError> {
        let re = self.f()?;
        Ok(C64::new(re, self.f()?))
    }
}

pub fn read_model_from<R: Read>(r: &mut R) -> Result<DmdModel, IoError> {
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)
        .map_err(|_| IoError::BadModel("missing header".into()))?;
    if &magic != MODEL_MAGIC {
        return Err(IoError::BadModel("wrong header".into()));
    }
    let mut i = In(r);
    let n = i.size("n_states", 1 << 32)?;
    let rank = i.size("rank", 1 << 20)?;
    let scaling = match i.u()? {
        0 => ModeScaling::Projected,
        1 => ModeScaling::InverseEigenvalue,
        s => return Err(IoError::BadModel(format!("scaling code {s}"))),
    };
    let grid = match i.u()? {
        0 => None,
        1 => {
            let n_rows = i.size("n_rows", 1 << 32)?;
            let n_cols = i.size("n_cols", 1 << 32)?;
            let (w, h) = (i.f()?, i.f()?);
            let origin = [i.f()?, i.f()?];
            Some(
                GridSpec::new(n_rows, n_cols, w, h, origin)
                    .map_err(|e| IoError::BadModel(e.to_string()))?,
            )
        }
        g => return Err(IoError::BadModel(format!("grid flag {g}"))),
    };
    let dt_fit = i.f()?;
    let t0 = i.f()?;
    let t_end = i.f()?;
    let read_list = |i: &mut In<R>| -> Result<Vec<C64>, IoError> {
        (0..rank).map(|_| i.c()).collect()
    };
    let lambdas = read_list(&mut i)?;
    let omegas = read_list(&mut i)?;
    let amplitudes = read_list(&mut i)?;
    let mut modes = DMatrix::zeros(n, rank);
    for v in modes.iter_mut() {
        *v = i.c()?;
    }
    let len = i.size("spectrum length", 1 << 32)?;
    let spectrum = (0..len).map(|_| i.f()).collect::<Result<Vec<_>, _>>()?;
    let clipped = i.u()?;
    let fit_residual = i.f()?;
    Ok(DmdModel {
        modes,
        lambdas,
        omegas,
        amplitudes,
        dt_fit,
        t0,
        t_end,
        scaling,
        grid,
        diagnostics: FitDiagnostics {
            spectrum,
            clipped_from: (clipped != u64::MAX).then_some(clipped as usize),
            fit_residual,
        },
    })
}

pub fn write_model(model: &DmdModel, path: &Path) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_model_to(model, &mut buf)?;
    fs::write(path, buf).map_err(file_err(path))
}

pub fn read_model(path: &Path) -> Result<DmdModel, IoError> {
    let bytes = fs::read(path).map_err(file_err(path))?;
    let mut cursor = bytes.as_slice();
    let model = read_model_from(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(IoError::BadModel(format!("{} trailing bytes", cursor.len())));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmd::{fit, DmdOptions};
    use crate::testdata::{advection_snapshots, AdvectionSpec};

    #[test]
    fn model_round_trip_is_bit_exact() {
        let spec = AdvectionSpec::new(8);
        let snaps = advection_snapshots(&spec, 0.0, 0.25, 9).unwrap();
        let model = fit(&snaps, &DmdOptions::with_rank(5)).unwrap();
        let mut buf = Vec::new();
        write_model_to(&model, &mut buf).unwrap();
        let back = read_model_from(&mut buf.as_slice()).unwrap();
        let mut again = Vec::new();
        write_model_to(&back, &mut again).unwrap();
        assert_eq!(buf, again);
        assert_eq!(back.evaluate(0.6), model.evaluate(0.6));
        assert_eq!(back.grid, model.grid);
    }

    #[test]
    fn rejects_foreign_and_truncated_files() {
        assert!(matches!(
            read_model_from(&mut &b"not a model at all, clearly"[..]),
            Err(IoError::BadModel(_))
        ));
        let spec = AdvectionSpec::new(4);
        let snaps = advection_snapshots(&spec, 0.0, 0.5, 4).unwrap();
        let model = fit(&snaps, &DmdOptions::with_rank(2)).unwrap();
        let mut buf = Vec::new();
        write_model_to(&model, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_model_from(&mut buf.as_slice()),
            Err(IoError::BadModel(_))
        ));
    }
}
