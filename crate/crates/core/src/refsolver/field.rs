//! Space-time fields of density and electric field, and their file formats.

use std::io::{BufRead, BufReader, Read, Write};

use super::RefError;
use crate::residuals::ProblemId;

/// `rho` and `e` are `nt × nx`, row-major in time; `f` (optional) is
/// `nt × nx × nv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub problem: ProblemId,
    /// Nominal scale parameter (0 for the limit solvers).
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub e: Vec<f64>,
    pub v: Vec<f64>,
    pub f: Option<Vec<f64>>,
}

impl SolutionField {
    pub fn nt(&self) -> usize {
        self.times.len()
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn check(&self) -> Result<(), RefError> {
        let n = self.nt() * self.nx();
        if self.rho.len() != n || self.e.len() != n {
            return Err(RefError::Shape(format!("{}×{} field with {} densities", self.nt(), self.nx(), self.rho.len())));
        }
        if let Some(f) = &self.f {
            if f.len() != n * self.v.len() {
                return Err(RefError::Shape("distribution dump size".into()));
            }
        }
        if let Some(r) = self.rho.iter().find(|&&r| r < -1e-8 || !r.is_finite()) {
            return Err(RefError::Shape(format!("invalid density {r}")));
        }
        Ok(())
    }

    pub fn rho_at(&self, it: usize) -> &[f64] {
        &self.rho[it * self.nx()..(it + 1) * self.nx()]
    }

    pub fn e_at(&self, it: usize) -> &[f64] {
        &self.e[it * self.nx()..(it + 1) * self.nx()]
    }

    /// `∫ρ dx` at every stored time.
    pub fn mass(&self) -> Vec<f64> {
        let dx = match self.x.as_slice() {
            [a, b, ..] => b - a,
            _ => 1.0,
        };
        self.rho.chunks(self.nx().max(1)).map(|r| r.iter().sum::<f64>() * dx).collect()
    }

    /// Rows whose time lies in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> SolutionField {
        let keep: Vec<usize> = (0..self.nt()).filter(|&i| self.times[i] >= t0 - 1e-12 && self.times[i] <= t1 + 1e-12).collect();
        let nx = self.nx();
        let nv = self.v.len();
        let pick = |a: &[f64], w: usize| keep.iter().flat_map(|&i| a[i * w..(i + 1) * w].iter().copied()).collect();
        SolutionField {
            problem: self.problem,
            epsilon: self.epsilon,
            times: keep.iter().map(|&i| self.times[i]).collect(),
            x: self.x.clone(),
            rho: pick(&self.rho, nx),
            e: pick(&self.e, nx),
            v: self.v.clone(),
            f: self.f.as_ref().map(|f| pick(f, nx * nv)),
        }
    }
}

/// CSV with header `t,x,rho,E`, one row per space-time node.
pub fn write_field_csv<W: Write>(field: &SolutionField, mut w: W) -> Result<(), RefError> {
    field.check()?;
    writeln!(w, "t,x,rho,E")?;
    for (it, t) in field.times.iter().enumerate() {
        for (ix, x) in field.x.iter().enumerate() {
            let k = it * field.nx() + ix;
            writeln!(w, "{t:e},{x:e},{:e},{:e}", field.rho[k], field.e[k])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_field_csv`]; rows must be grouped by time with a
/// common spatial grid. Problem and ε are not stored in the CSV.
pub fn read_field_csv<R: Read>(r: R, problem: ProblemId, epsilon: f64) -> Result<SolutionField, RefError> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "t,x,rho,E" {
        return Err(RefError::Format(format!("unexpected header {header:?}")));
    }
    let (mut times, mut x, mut rho, mut e) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut col = 0;
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|err| RefError::Format(format!("line {}: {err}", n + 2)))?;
        let [t, xv, r, ev] = vals[..] else {
            return Err(RefError::Format(format!("line {}: expected 4 columns", n + 2)));
        };
        if times.last() != Some(&t) {
            if !times.is_empty() && col != x.len() {
                return Err(RefError::Format(format!("time {} has {col} of {} nodes", times.last().unwrap(), x.len())));
            }
            times.push(t);
            col = 0;
        }
        if times.len() == 1 {
            x.push(xv);
        } else if x.get(col) != Some(&xv) {
            return Err(RefError::Format(format!("line {}: spatial grid differs between times", n + 2)));
        }
        col += 1;
        rho.push(r);
        e.push(ev);
    }
    let field = SolutionField { problem, epsilon, times, x, rho, e, v: Vec::new(), f: None };
    field.check()?;
    Ok(field)
}

const MAGIC: &[u8; 6] = b"FIELD1";

/// Binary dump: magic `FIELD1`, problem name (u32 length + bytes), `f64` ε,
/// `u32` nt, nx, nv, a `u8` flag for `f`, then times, x, v, rho, E and
/// optionally f as little-endian `f64`.
pub fn write_field_binary<W: Write>(field: &SolutionField, mut w: W) -> Result<(), RefError> {
    field.check()?;
    w.write_all(MAGIC)?;
    let name = field.problem.as_str().as_bytes();
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name)?;
    w.write_all(&field.epsilon.to_le_bytes())?;
    for n in [field.nt(), field.nx(), field.v.len()] {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    w.write_all(&[field.f.is_some() as u8])?;
    let mut buf = Vec::new();
    for a in [&field.times, &field.x, &field.v, &field.rho, &field.e].into_iter().chain(field.f.as_ref()) {
        buf.clear();
        a.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize, RefError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, RefError> {
    let mut b = vec![0u8; 8 * n];
    r.read_exact(&mut b)?;
    Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn read_field_binary<R: Read>(mut r: R) -> Result<SolutionField, RefError> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(RefError::Format("bad magic".into()));
    }
    let len = read_u32(&mut r)?;
    if len > 64 {
        return Err(RefError::Format("problem name too long".into()));
    }
    let mut name = vec![0u8; len];
    r.read_exact(&mut name)?;
    let problem: ProblemId = String::from_utf8_lossy(&name).parse()?;
    let epsilon = read_f64s(&mut r, 1)?[0];
    let (nt, nx, nv) = (read_u32(&mut r)?, read_u32(&mut r)?, read_u32(&mut r)?);
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let times = read_f64s(&mut r, nt)?;
    let x = read_f64s(&mut r, nx)?;
    let v = read_f64s(&mut r, nv)?;
    let rho = read_f64s(&mut r, nt * nx)?;
    let e = read_f64s(&mut r, nt * nx)?;
    let f = if flag[0] == 1 { Some(read_f64s(&mut r, nt * nx * nv)?) } else { None };
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(RefError::Format("trailing bytes".into()));
    }
    let field = SolutionField { problem, epsilon, times, x, rho, e, v, f };
    field.check()?;
    Ok(field)
}
