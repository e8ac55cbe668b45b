//! Uniform cell grids and occupancy-fraction sets, with their on-disk form.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default cap on the number of cells of a single grid.
pub const DEFAULT_MAX_CELLS: usize = 1 << 27;

/// Cells `origin + h·[i, i+1)` per axis, stored row-major with the last axis
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub h: f64,
    pub dims: Vec<usize>,
}

impl GridSpec {
    pub fn new(origin: Vec<f64>, h: f64, dims: Vec<usize>) -> Result<Self> {
        Self::with_cap(origin, h, dims, DEFAULT_MAX_CELLS)
    }

    pub fn with_cap(origin: Vec<f64>, h: f64, dims: Vec<usize>, max_cells: usize) -> Result<Self> {
        let g = GridSpec { origin, h, dims };
        g.validate(max_cells)?;
        Ok(g)
    }

    pub fn validate(&self, max_cells: usize) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return invalid(format!("grid spacing must be > 0, got {}", self.h));
        }
        if self.dims.len() != self.origin.len() || self.dims.is_empty() {
            return invalid("grid origin and dims must have the same length");
        }
        if self.dims.iter().any(|n| *n == 0) {
            return invalid("grid dims must be positive");
        }
        let total = self.dims.iter().try_fold(1usize, |a, b| a.checked_mul(*b));
        match total {
            Some(t) if t <= max_cells => Ok(()),
            _ => invalid(format!("grid exceeds the cell cap of {max_cells}")),
        }
    }

    /// Smallest grid covering `[lo, hi]` with `margin` extra cells per side.
    pub fn covering(lo: &[f64], hi: &[f64], h: f64, margin: usize) -> Result<Self> {
        Self::covering_with_cap(lo, hi, h, margin, DEFAULT_MAX_CELLS)
    }

    pub fn covering_with_cap(lo: &[f64], hi: &[f64], h: f64, margin: usize, max_cells: usize) -> Result<Self> {
        let mut origin = Vec::with_capacity(lo.len());
        let mut dims = Vec::with_capacity(lo.len());
        for i in 0..lo.len() {
            let a = (lo[i] / h).floor() - margin as f64;
            let b = (hi[i] / h).ceil() + margin as f64;
            origin.push(a * h);
            dims.push((b - a).max(1.0) as usize);
        }
        GridSpec::with_cap(origin, h, dims, max_cells)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1; d];
        for i in (0..d - 1).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn unflatten(&self, mut k: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = vec![0; d];
        for i in (0..d).rev() {
            idx[i] = k % self.dims[i];
            k /= self.dims[i];
        }
        idx
    }

    pub fn center(&self, idx: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        self.center_into(idx, &mut c);
        c
    }

    #[inline]
    pub fn center_into(&self, idx: &[usize], out: &mut [f64]) {
        for i in 0..idx.len() {
            out[i] = self.origin[i] + (idx[i] as f64 + 0.5) * self.h;
        }
    }

    /// Lower and upper corners of the grid box.
    pub fn extent(&self) -> (Vec<f64>, Vec<f64>) {
        let hi = self.origin.iter().zip(&self.dims).map(|(o, n)| o + *n as f64 * self.h).collect();
        (self.origin.clone(), hi)
    }
}

/// Occupancy fractions of a set on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSet {
    pub spec: GridSpec,
    pub frac: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Little-endian f64 values.
    Binary,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    origin: Vec<f64>,
    h: f64,
    dims: Vec<usize>,
    layout: String,
    encoding: Encoding,
    data: String,
}

const LAYOUT: &str = "row-major, axis order x1..xd, xd fastest";

impl GridSet {
    pub fn new(spec: GridSpec, frac: Vec<f64>) -> Result<Self> {
        if frac.len() != spec.len() {
            return invalid("fraction array does not match the grid");
        }
        if frac.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return invalid("fractions must lie in [0, 1]");
        }
        Ok(GridSet { spec, frac })
    }

    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.len();
        GridSet { spec, frac: vec![0.0; n] }
    }

    pub fn measure(&self) -> f64 {
        self.spec.cell_volume() * self.frac.iter().sum::<f64>()
    }

    pub fn occupied(&self) -> usize {
        self.frac.iter().filter(|f| **f > 0.0).count()
    }

    /// Complement within the grid box.
    pub fn complement(&self) -> GridSet {
        GridSet { spec: self.spec.clone(), frac: self.frac.iter().map(|f| 1.0 - f).collect() }
    }

    /// Shift by whole cells; cells shifted out of the box are dropped.
    pub fn shifted(&self, by: &[isize]) -> GridSet {
        let mut out = GridSet::empty(self.spec.clone());
        for k in 0..self.frac.len() {
            if self.frac[k] == 0.0 {
                continue;
            }
            let idx = self.spec.unflatten(k);
            let mut tgt = Vec::with_capacity(idx.len());
            let mut ok = true;
            for i in 0..idx.len() {
                let j = idx[i] as isize + by[i];
                if j < 0 || j >= self.spec.dims[i] as isize {
                    ok = false;
                    break;
                }
                tgt.push(j as usize);
            }
            if ok {
                out.frac[self.spec.flatten(&tgt)] = self.frac[k];
            }
        }
        out
    }

    /// Index box `[lo, hi)` of the cells with positive fraction.
    pub fn support(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        let d = self.spec.dim();
        let mut lo = vec![usize::MAX; d];
        let mut hi = vec![0; d];
        let mut any = false;
        for (k, f) in self.frac.iter().enumerate() {
            if *f > 0.0 {
                any = true;
                let idx = self.spec.unflatten(k);
                for i in 0..d {
                    lo[i] = lo[i].min(idx[i]);
                    hi[i] = hi[i].max(idx[i] + 1);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Binary decision using the Lebesgue representative `frac >= 1/2`.
    pub fn is_inside(&self, k: usize) -> bool {
        self.frac[k] >= 0.5
    }

    /// Writes `<stem>.json` and `<stem>.bin` or `<stem>.csv`; returns the header path.
    pub fn write(&self, stem: &Path, encoding: Encoding) -> Result<PathBuf> {
        let ext = match encoding {
            Encoding::Binary => "bin",
            Encoding::Csv => "csv",
        };
        let data_path = stem.with_extension(ext);
        match encoding {
            Encoding::Binary => {
                let mut buf = Vec::with_capacity(8 * self.frac.len());
                for f in &self.frac {
                    buf.extend_from_slice(&f.to_le_bytes());
                }
                fs::write(&data_path, buf)?;
            }
            Encoding::Csv => {
                let mut w = std::io::BufWriter::new(fs::File::create(&data_path)?);
                writeln!(w, "frac")?;
                for f in &self.frac {
                    writeln!(w, "{f:?}")?;
                }
                w.flush()?;
            }
        }
        let header = Header {
            origin: self.spec.origin.clone(),
            h: self.spec.h,
            dims: self.spec.dims.clone(),
            layout: LAYOUT.to_string(),
            encoding,
            data: data_path.file_name().unwrap().to_string_lossy().into_owned(),
        };
        let hp = stem.with_extension("json");
        fs::write(&hp, serde_json::to_string_pretty(&header)?)?;
        Ok(hp)
    }

    pub fn read(header_path: &Path) -> Result<GridSet> {
        let header: Header = serde_json::from_str(&fs::read_to_string(header_path)?)?;
        let spec = GridSpec::new(header.origin, header.h, header.dims)?;
        let data_path = header_path.with_file_name(&header.data);
        let frac = match header.encoding {
            Encoding::Binary => {
                let bytes = fs::read(&data_path)?;
                if bytes.len() != 8 * spec.len() {
                    return invalid("binary grid payload has the wrong length");
                }
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
            }
            Encoding::Csv => {
                let r = BufReader::new(fs::File::open(&data_path)?);
                let mut v = Vec::with_capacity(spec.len());
                for (i, line) in r.lines().enumerate() {
                    let line = line?;
                    if i == 0 {
                        continue;
                    }
                    v.push(line.trim().parse::<f64>().map_err(|e| Error::InvalidParameter(format!("line {}: {e}", i + 1)))?);
                }
                v
            }
        };
        GridSet::new(spec, frac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = GridSpec::new(vec![0.0, 1.0, 2.0], 0.5, vec![3, 4, 5]).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.flatten(&g.unflatten(k)), k);
        }
        assert_eq!(g.strides(), vec![20, 5, 1]);
        assert_eq!(g.center(&[1, 0, 4]), vec![0.75, 1.25, 4.25]);
    }

    #[test]
    fn cap_and_validation() {
        assert!(GridSpec::with_cap(vec![0.0, 0.0], 1.0, vec![100, 100], 1000).is_err());
        assert!(GridSpec::new(vec![0.0, 0.0], 0.0, vec![2, 2]).is_err());
        assert!(GridSpec::new(vec![0.0], 1.0, vec![2, 2]).is_err());
        let g = GridSpec::new(vec![0.0, 0.0], 1.0, vec![2, 2]).unwrap();
        assert!(GridSet::new(g.clone(), vec![0.0, 1.5, 0.0, 0.0]).is_err());
        assert!(GridSet::new(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn shift_and_support() {
        let g = GridSpec::new(vec![0.0, 0.0], 1.0, vec![4, 5]).unwrap();
        let mut e = GridSet::empty(g);
        e.frac[1 * 5 + 1] = 0.5;
        e.frac[2 * 5 + 3] = 1.0;
        assert_eq!(e.support(), Some((vec![1, 1], vec![3, 4])));
        let s = e.shifted(&[1, -1]);
        assert_eq!(s.frac[2 * 5], 0.5);
        assert_eq!(s.frac[3 * 5 + 2], 1.0);
        assert_eq!(GridSet::empty(e.spec.clone()).support(), None);
        assert_eq!(e.complement().measure(), 20.0 - 1.5);
    }

    #[test]
    fn write_read_round_trip() {
        let dir = std::env::temp_dir().join(format!("corerad-grid-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let g = GridSpec::new(vec![-1.0, 0.5], 0.25, vec![3, 2]).unwrap();
        let e = GridSet::new(g, vec![0.0, 0.125, 1.0, 0.3, 1.0 / 3.0, 0.0]).unwrap();
        for enc in [Encoding::Binary, Encoding::Csv] {
            let hp = e.write(&dir.join(format!("set-{enc:?}")), enc).unwrap();
            assert_eq!(GridSet::read(&hp).unwrap(), e);
        }
        fs::remove_dir_all(&dir).ok();
    }
}
