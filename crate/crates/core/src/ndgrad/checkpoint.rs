//! Versioned binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "NDGRADCK" | version u32 | step_count u64
//! n_entries u32 | { name | owner u8 | tensor }*
//! n_optimizers u32 | { label | lr beta1 beta2 eps weight_decay f64 | t u64
//!                      | n u32 | { param name | m data | v data }* }*
//! n_aux u32 | { name | tensor }*
//!
//! name   = len u32 | utf-8 bytes
//! tensor = ndim u32 | dims u64* | data f64*
//! ```
//!
//! Values are stored as raw bit patterns, so save/load round-trips exactly.

use std::io::{Read, Write};

use super::{AdamConfig, AdamState, NdError, Owner, ParamTree, Tensor};

const MAGIC: &[u8; 8] = b"NDGRADCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamTree,
    pub optimizers: Vec<(String, AdamState)>,
    /// Extra named tensors (normalization statistics, controller state, ...).
    pub aux: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(params: ParamTree) -> Self {
        Self {
            params,
            optimizers: Vec::new(),
            aux: Vec::new(),
        }
    }

    pub fn aux(&self, name: &str) -> Option<&Tensor> {
        self.aux.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn optimizer(&self, label: &str) -> Option<&AdamState> {
        self.optimizers.iter().find(|(n, _)| n == label).map(|(_, s)| s)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NdError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, CHECKPOINT_VERSION);
        put_u64(&mut buf, self.params.step_count());
        put_u32(&mut buf, self.params.len() as u32);
        for e in self.params.entries() {
            put_str(&mut buf, &e.name);
            buf.push(e.owner.code());
            put_tensor(&mut buf, &e.value);
        }
        put_u32(&mut buf, self.optimizers.len() as u32);
        for (label, s) in &self.optimizers {
            put_str(&mut buf, label);
            for x in [s.config.lr, s.config.beta1, s.config.beta2, s.config.eps, s.config.weight_decay] {
                put_f64(&mut buf, x);
            }
            put_u64(&mut buf, s.t);
            put_u32(&mut buf, s.entries.len() as u32);
            for (slot, &i) in s.entries.iter().enumerate() {
                put_str(&mut buf, &self.params.entry(i).name);
                put_data(&mut buf, s.m[slot].data());
                put_data(&mut buf, s.v[slot].data());
            }
        }
        put_u32(&mut buf, self.aux.len() as u32);
        for (name, t) in &self.aux {
            put_str(&mut buf, name);
            put_tensor(&mut buf, t);
        }
        w.write_all(&buf)
            .map_err(|e| NdError::Checkpoint(format!("write failed: {e}")))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NdError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| NdError::Checkpoint(format!("read failed: {e}")))?;
        let mut c = Cursor { buf: &bytes, pos: 0 };
        if c.take(8)? != MAGIC {
            return Err(NdError::Checkpoint("bad magic".into()));
        }
        let version = c.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(NdError::Checkpoint(format!("unsupported version {version}")));
        }
        let step_count = c.u64()?;
        let mut params = ParamTree::new();
        for _ in 0..c.u32()? {
            let name = c.string()?;
            let owner = Owner::from_code(c.u8()?)
                .ok_or_else(|| NdError::Checkpoint(format!("bad owner tag for `{name}`")))?;
            let t = c.tensor()?;
            params.insert(&name, t, owner)?;
        }
        params.set_step_count(step_count);

        let mut optimizers = Vec::new();
        for _ in 0..c.u32()? {
            let label = c.string()?;
            let config = AdamConfig {
                lr: c.f64()?,
                beta1: c.f64()?,
                beta2: c.f64()?,
                eps: c.f64()?,
                weight_decay: c.f64()?,
            };
            let t = c.u64()?;
            let n = c.u32()? as usize;
            let (mut entries, mut m, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for _ in 0..n {
                let name = c.string()?;
                let idx = params.index_of(&name)?;
                let shape = params.entry(idx).value.shape().to_vec();
                let len = params.entry(idx).value.len();
                entries.push(idx);
                m.push(Tensor::new(shape.clone(), c.data(len)?)?);
                v.push(Tensor::new(shape, c.data(len)?)?);
            }
            optimizers.push((
                label,
                AdamState {
                    config,
                    t,
                    entries,
                    m,
                    v,
                },
            ));
        }

        let mut aux = Vec::new();
        for _ in 0..c.u32()? {
            let name = c.string()?;
            aux.push((name, c.tensor()?));
        }
        if c.pos != bytes.len() {
            return Err(NdError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            params,
            optimizers,
            aux,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NdError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &buf)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| NdError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NdError> {
        let mut f = std::fs::File::open(path)
            .map_err(|e| NdError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read_from(&mut f)
    }
}

fn put_u32(b: &mut Vec<u8>, x: u32) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, x: u64) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(b: &mut Vec<u8>, x: f64) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_str(b: &mut Vec<u8>, s: &str) {
    put_u32(b, s.len() as u32);
    b.extend_from_slice(s.as_bytes());
}

fn put_data(b: &mut Vec<u8>, d: &[f64]) {
    for &x in d {
        put_f64(b, x);
    }
}

fn put_tensor(b: &mut Vec<u8>, t: &Tensor) {
    put_u32(b, t.shape().len() as u32);
    for &d in t.shape() {
        put_u64(b, d as u64);
    }
    put_data(b, t.data());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NdError> {
        if self.pos + n > self.buf.len() {
            return Err(NdError::Checkpoint("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NdError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NdError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NdError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, NdError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, NdError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| NdError::Checkpoint("invalid utf-8 name".into()))
    }

    fn data(&mut self, n: usize) -> Result<Vec<f64>, NdError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn tensor(&mut self) -> Result<Tensor, NdError> {
        let ndim = self.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        if n > self.buf.len() / 8 {
            return Err(NdError::Checkpoint(format!("tensor shape {shape:?} exceeds file size")));
        }
        let data = self.data(n)?;
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::adam_step;

    fn sample() -> Checkpoint {
        let mut p = ParamTree::new();
        p.insert("trunk.w", Tensor::matrix(2, 3, vec![0.1, -0.2, 1e-300, 3.0, f64::MIN_POSITIVE, -0.0]), Owner::Shared)
            .unwrap();
        p.insert("critic.b", Tensor::vector(vec![1.0 / 3.0, 2.0]), Owner::Critic)
            .unwrap();
        for e in 0..p.len() {
            p.entry_mut(e).grad.fill(0.25);
        }
        let mut s = AdamState::new(&p, AdamConfig::with_lr(0.01));
        adam_step(&mut p, &mut s).unwrap();
        let mut ck = Checkpoint::new(p);
        ck.optimizers.push(("joint".into(), s));
        ck.aux.push(("popart.mu".into(), Tensor::vector(vec![0.5, -7.25])));
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.params.step_count(), 1);
        for (a, b) in ck.params.entries().iter().zip(back.params.entries()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.owner, b.owner);
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(back.optimizers, ck.optimizers);
        assert_eq!(back.aux, ck.aux);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_truncated_and_foreign_data() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&mut &buf[..buf.len() - 3]).is_err());
        assert!(Checkpoint::read_from(&mut &b"not a checkpoint"[..]).is_err());
        let mut bad = buf.clone();
        bad[8] = 99;
        assert!(matches!(
            Checkpoint::read_from(&mut bad.as_slice()),
            Err(NdError::Checkpoint(m)) if m.contains("version")
        ));
    }
}
