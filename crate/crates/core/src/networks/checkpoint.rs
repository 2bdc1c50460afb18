//! Little-endian binary checkpoints.
//!
//! Layout: magic `APMIONET1`, `f64` period, `u32` Fourier modes, `u32` net
//! count, then per net a `u32` latent width and, per sub-network, a `u32`
//! size count followed by the `u32` sizes. A `u64` parameter count and the raw
//! `f64` parameters in visit order close the file.

use std::io::{Read, Write};

use super::mionet::MionetParams;
use super::mlp::ModifiedMlpParams;
use super::operator::{NetKind, OperatorTriple};
use super::NetworkError;

const MAGIC: &[u8; 9] = b"APMIONET1";

pub fn write_checkpoint<W: Write>(triple: &OperatorTriple, mut w: W) -> Result<(), NetworkError> {
    w.write_all(MAGIC)?;
    w.write_all(&triple.period.to_le_bytes())?;
    w.write_all(&(triple.modes as u32).to_le_bytes())?;
    w.write_all(&3u32.to_le_bytes())?;
    for k in NetKind::ALL {
        let net = triple.net(k);
        w.write_all(&(net.latent() as u32).to_le_bytes())?;
        for sub in [&net.branch1, &net.branch2, &net.trunk] {
            w.write_all(&(sub.sizes().len() as u32).to_le_bytes())?;
            for &s in sub.sizes() {
                w.write_all(&(s as u32).to_le_bytes())?;
            }
        }
    }
    w.write_all(&(triple.num_params() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * triple.num_params());
    triple.visit(|s| s.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())));
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NetworkError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NetworkError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_sizes<R: Read>(r: &mut R) -> Result<Vec<usize>, NetworkError> {
    let n = read_u32(r)? as usize;
    if n > 64 {
        return Err(NetworkError::Checkpoint(format!("implausible layer count {n}")));
    }
    (0..n).map(|_| read_u32(r).map(|s| s as usize)).collect()
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<OperatorTriple, NetworkError> {
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NetworkError::Checkpoint("bad magic".into()));
    }
    let period = f64::from_bits(read_u64(&mut r)?);
    let modes = read_u32(&mut r)? as usize;
    let n_nets = read_u32(&mut r)?;
    if n_nets != 3 {
        return Err(NetworkError::Checkpoint(format!("expected 3 networks, found {n_nets}")));
    }
    let mut nets = Vec::with_capacity(3);
    for _ in 0..3 {
        let p = read_u32(&mut r)? as usize;
        let b1 = ModifiedMlpParams::zeros(&read_sizes(&mut r)?)?;
        let b2 = ModifiedMlpParams::zeros(&read_sizes(&mut r)?)?;
        let trunk = ModifiedMlpParams::zeros(&read_sizes(&mut r)?)?;
        if [&b1, &b2, &trunk].iter().any(|m| m.output_dim() != p) {
            return Err(NetworkError::Checkpoint("sub-network width differs from latent width".into()));
        }
        nets.push(MionetParams { branch1: b1, branch2: b2, trunk, b0: 0.0 });
    }
    let phi_net = nets.pop().unwrap();
    let p_net = nets.pop().unwrap();
    let f_net = nets.pop().unwrap();
    let mut triple = OperatorTriple { f_net, p_net, phi_net, period, modes };
    let n = read_u64(&mut r)? as usize;
    if n != triple.num_params() {
        return Err(NetworkError::Checkpoint(format!(
            "manifest describes {} parameters, file declares {n}",
            triple.num_params()
        )));
    }
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)?;
    let flat: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    triple.set_flat_params(&flat)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(NetworkError::Checkpoint("trailing bytes".into()));
    }
    Ok(triple)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::TripleConfig;

    #[test]
    fn round_trip_is_bitwise() {
        let cfg = TripleConfig { width: 5, depth: 2, latent: 3, sensors_x: 2, sensors_v: 2, modes: 2 };
        let tri = OperatorTriple::init(8, &cfg, 4.0 * std::f64::consts::PI).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&tri, &mut buf).unwrap();
        assert_eq!(&buf[..9], b"APMIONET1");
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, tri);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let cfg = TripleConfig { width: 4, depth: 1, latent: 2, sensors_x: 2, sensors_v: 1, modes: 1 };
        let tri = OperatorTriple::init(1, &cfg, 1.0).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&tri, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..]).is_err());
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(&long[..]).is_err());
    }
}
