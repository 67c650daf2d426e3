//! Versioned binary snapshot of parameters and optimizer state.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RRNCKPT" | version: u32
//! param count: u64 | blob*
//! optimizer blob count: u64 | blob*
//! blob = name_len: u32 | name (UTF-8) | rank: u32 | dims: u64 * rank | data: f64 * numel
//! ```
//!
//! Optimizer blobs are `adam.m.{param}`, `adam.v.{param}`, `adam.step` and
//! `adam.hyper` (learning rate, beta1, beta2, epsilon, l2, l2 scope).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::optim::{AdamConfig, AdamState, L2Scope};

pub const MAGIC: &[u8; 7] = b"RRNCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub params: Vec<Blob>,
    pub optimizer: Vec<Blob>,
}

impl Checkpoint {
    pub fn capture(params: &ParamSet, adam: Option<&AdamState>) -> Self {
        let blobs = params
            .iter()
            .map(|p| Blob {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                data: p.tensor.data().to_vec(),
            })
            .collect();
        let mut optimizer = Vec::new();
        if let Some(adam) = adam {
            let (first, second) = adam.moments();
            for (p, (m, v)) in params.iter().zip(first.iter().zip(second)) {
                optimizer.push(Blob {
                    name: format!("adam.m.{}", p.name),
                    shape: p.tensor.shape().to_vec(),
                    data: m.clone(),
                });
                optimizer.push(Blob {
                    name: format!("adam.v.{}", p.name),
                    shape: p.tensor.shape().to_vec(),
                    data: v.clone(),
                });
            }
            optimizer.push(Blob {
                name: "adam.step".into(),
                shape: vec![1],
                data: vec![adam.step_count() as f64],
            });
            let c = adam.config;
            let scope = match c.l2_scope {
                L2Scope::WeightMatrices => 0.0,
                L2Scope::All => 1.0,
            };
            optimizer.push(Blob {
                name: "adam.hyper".into(),
                shape: vec![6],
                data: vec![c.learning_rate, c.beta1, c.beta2, c.epsilon, c.l2, scope],
            });
        }
        Checkpoint {
            params: blobs,
            optimizer,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for section in [&self.params, &self.optimizer] {
            out.extend_from_slice(&(section.len() as u64).to_le_bytes());
            for blob in section {
                write_blob(&mut out, blob);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let params = r.section()?;
        let optimizer = r.section()?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { params, optimizer })
    }

    /// Copies stored values into `params`, matching by name and shape.
    pub fn restore_params(&self, params: &mut ParamSet) -> Result<()> {
        if self.params.len() != params.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} parameters, model has {}",
                self.params.len(),
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let blob = self
                .params
                .iter()
                .find(|b| b.name == p.name)
                .ok_or_else(|| Error::Format(format!("parameter {} missing", p.name)))?;
            if blob.shape != p.tensor.shape() {
                return Err(Error::Format(format!("shape mismatch for {}", p.name)));
            }
            p.tensor.data_mut().copy_from_slice(&blob.data);
        }
        Ok(())
    }

    /// Rebuilds the optimizer state saved alongside `params`.
    pub fn restore_adam(&self, params: &ParamSet) -> Result<Option<AdamState>> {
        if self.optimizer.is_empty() {
            return Ok(None);
        }
        let find = |name: &str| {
            self.optimizer
                .iter()
                .find(|b| b.name == name)
                .ok_or_else(|| Error::Format(format!("optimizer blob {name} missing")))
        };
        let hyper = &find("adam.hyper")?.data;
        if hyper.len() != 6 {
            return Err(Error::Format("adam.hyper must hold 6 values".into()));
        }
        let config = AdamConfig {
            learning_rate: hyper[0],
            beta1: hyper[1],
            beta2: hyper[2],
            epsilon: hyper[3],
            l2: hyper[4],
            l2_scope: if hyper[5] == 0.0 { L2Scope::WeightMatrices } else { L2Scope::All },
        };
        let step = find("adam.step")?.data.first().copied().unwrap_or(0.0) as u64;
        let mut first = Vec::with_capacity(params.len());
        let mut second = Vec::with_capacity(params.len());
        for p in params.iter() {
            let m = find(&format!("adam.m.{}", p.name))?;
            let v = find(&format!("adam.v.{}", p.name))?;
            if m.data.len() != p.tensor.numel() || v.data.len() != p.tensor.numel() {
                return Err(Error::Format(format!("moment size mismatch for {}", p.name)));
            }
            first.push(m.data.clone());
            second.push(v.data.clone());
        }
        AdamState::from_parts(config, first, second, step).map(Some)
    }
}

fn write_blob(out: &mut Vec<u8>, blob: &Blob) {
    out.extend_from_slice(&(blob.name.len() as u32).to_le_bytes());
    out.extend_from_slice(blob.name.as_bytes());
    out.extend_from_slice(&(blob.shape.len() as u32).to_le_bytes());
    for &d in &blob.shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in &blob.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn section(&mut self) -> Result<Vec<Blob>> {
        let count = self.u64()?;
        let mut blobs = Vec::new();
        for _ in 0..count {
            let len = self.u32()? as usize;
            let name = core::str::from_utf8(self.take(len)?)
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
                .into();
            let rank = self.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(self.u64()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format("shape overflows".into()))?;
            let raw = self.take(numel.checked_mul(8).ok_or_else(|| Error::Format("shape overflows".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            blobs.push(Blob { name, shape, data });
        }
        Ok(blobs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamKind;
    use crate::tensor::Tensor;

    fn sample() -> (ParamSet, AdamState) {
        let mut ps = ParamSet::new();
        ps.add("a.w", ParamKind::Weight, Tensor::new(vec![2, 3], vec![1.0, -2.5, 3e-9, 0.1, 7.0, -0.0]).unwrap())
            .unwrap();
        ps.add("a.b", ParamKind::Bias, Tensor::new(vec![3], vec![0.5, 0.25, f64::MIN_POSITIVE]).unwrap())
            .unwrap();
        let mut adam = AdamState::new(AdamConfig::default().with_l2(1e-4), &ps);
        for p in ps.iter_mut() {
            let g: Vec<f64> = (0..p.tensor.numel()).map(|i| i as f64 - 1.3).collect();
            p.tensor.accumulate_grad(&g).unwrap();
        }
        adam.step(&mut ps).unwrap();
        (ps, adam)
    }

    #[test]
    fn byte_exact_round_trip() {
        let (ps, adam) = sample();
        let ck = Checkpoint::capture(&ps, Some(&adam));
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode(), bytes);
        assert_eq!(&bytes[..7], b"RRNCKPT");
    }

    #[test]
    fn restores_params_and_optimizer() {
        let (ps, adam) = sample();
        let ck = Checkpoint::decode(&Checkpoint::capture(&ps, Some(&adam)).encode()).unwrap();
        let mut fresh = ps.clone();
        for p in fresh.iter_mut() {
            p.tensor.data_mut().fill(0.0);
        }
        ck.restore_params(&mut fresh).unwrap();
        assert_eq!(fresh, ps);
        assert_eq!(ck.restore_adam(&fresh).unwrap().unwrap(), adam);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let (ps, adam) = sample();
        let bytes = Checkpoint::capture(&ps, Some(&adam)).encode();
        for cut in [0, 5, 11, bytes.len() - 1] {
            assert!(Checkpoint::decode(&bytes[..cut]).is_err());
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).is_err());
    }
}
