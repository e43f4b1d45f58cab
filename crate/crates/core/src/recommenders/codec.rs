//! Versioned little-endian binary encoding of fitted models.

use ndarray::Array2;

use super::sparse::CsrMatrix;
use super::{
    FactorModel, ItemSimilarityModel, ItemWeights, Model, PopularityModel, ProfileWeighting,
    UserSimilarityModel,
};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"XMRM";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }
    fn matrix(&mut self, m: &Array2<f64>) {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        m.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Decode("truncated model".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > self.buf.len() {
            return Err(Error::Decode(format!("implausible length {n}")));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn matrix(&mut self) -> Result<Array2<f64>> {
        let (r, c) = (self.u64()? as usize, self.u64()? as usize);
        let n = r.checked_mul(c).filter(|&n| n * 8 <= self.buf.len() - self.pos);
        let n = n.ok_or_else(|| Error::Decode("matrix shape exceeds payload".into()))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Array2::from_shape_vec((r, c), data).map_err(|e| Error::Decode(e.to_string()))
    }
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    match model {
        Model::Popularity(p) => {
            w.u8(0);
            w.f64s(&p.pop);
        }
        Model::ItemSimilarity(m) => {
            w.u8(1);
            w.u64(m.n_items as u64);
            match m.profile {
                ProfileWeighting::Ratings => w.u8(0),
                ProfileWeighting::Transition { alpha } => {
                    w.u8(1);
                    w.f64(alpha);
                }
            }
            match &m.weights {
                ItemWeights::Sparse(c) => {
                    w.u8(0);
                    w.u64(c.n_rows as u64);
                    w.u64(c.n_cols as u64);
                    w.u64(c.ptr.len() as u64);
                    c.ptr.iter().for_each(|&p| w.u64(p as u64));
                    w.u64(c.idx.len() as u64);
                    c.idx.iter().for_each(|&i| w.u64(i as u64));
                    w.f64s(&c.val);
                }
                ItemWeights::Dense(d) => {
                    w.u8(1);
                    w.matrix(d);
                }
            }
        }
        Model::UserSimilarity(m) => {
            w.u8(2);
            w.u64(m.n_items as u64);
            w.u64(m.neighbors.len() as u64);
            for row in &m.neighbors {
                w.u64(row.len() as u64);
                for &(v, s) in row {
                    w.u64(v as u64);
                    w.f64(s);
                }
            }
        }
        Model::Factor(f) => {
            w.u8(3);
            w.matrix(&f.user_factors);
            w.matrix(&f.item_factors);
        }
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Decode("not a model file".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Decode(format!("unsupported model version {version}")));
    }
    let model = match r.u8()? {
        0 => Model::Popularity(PopularityModel { pop: r.f64s()? }),
        1 => {
            let n_items = r.u64()? as usize;
            let profile = match r.u8()? {
                0 => ProfileWeighting::Ratings,
                1 => ProfileWeighting::Transition { alpha: r.f64()? },
                t => return Err(Error::Decode(format!("bad profile tag {t}"))),
            };
            let weights = match r.u8()? {
                0 => {
                    let n_rows = r.u64()? as usize;
                    let n_cols = r.u64()? as usize;
                    let n = r.len()?;
                    let ptr = (0..n).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
                    let n = r.len()?;
                    let idx = (0..n).map(|_| r.u64().map(|v| v as u32)).collect::<Result<Vec<_>>>()?;
                    let val = r.f64s()?;
                    let ok = ptr.len() == n_rows + 1
                        && ptr.last() == Some(&idx.len())
                        && idx.len() == val.len()
                        && ptr.windows(2).all(|p| p[0] <= p[1])
                        && idx.iter().all(|&c| (c as usize) < n_cols);
                    if !ok {
                        return Err(Error::Decode("inconsistent sparse weights".into()));
                    }
                    ItemWeights::Sparse(CsrMatrix { n_rows, n_cols, ptr, idx, val })
                }
                1 => ItemWeights::Dense(r.matrix()?),
                t => return Err(Error::Decode(format!("bad weights tag {t}"))),
            };
            Model::ItemSimilarity(ItemSimilarityModel { n_items, weights, profile })
        }
        2 => {
            let n_items = r.u64()? as usize;
            let n = r.len()?;
            let mut neighbors = Vec::with_capacity(n);
            for _ in 0..n {
                let k = r.len()?;
                let row = (0..k)
                    .map(|_| Ok((r.u64()? as u32, r.f64()?)))
                    .collect::<Result<Vec<_>>>()?;
                neighbors.push(row);
            }
            Model::UserSimilarity(UserSimilarityModel { n_items, neighbors })
        }
        3 => Model::Factor(FactorModel { user_factors: r.matrix()?, item_factors: r.matrix()? }),
        t => return Err(Error::Decode(format!("bad model tag {t}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Decode("trailing bytes after model".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::tests::store;
    use super::super::{fit, Algorithm, HyperParams};
    use super::*;

    #[test]
    fn every_algorithm_round_trips() {
        let s = store(&[
            ("a", "x", 2.0), ("a", "y", 1.0), ("b", "x", 4.0), ("b", "z", 3.0),
            ("c", "y", 5.0), ("c", "z", 1.0), ("d", "x", 1.0), ("d", "y", 2.0),
        ]);
        let hp = HyperParams { factors: 2, iterations: 2, ..Default::default() };
        for a in Algorithm::ALL {
            let m = fit(a, &s, &hp).unwrap();
            let bytes = m.to_bytes();
            assert_eq!(Model::from_bytes(&bytes).unwrap(), m, "{a}");
            assert!(Model::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
        assert!(Model::from_bytes(b"nope").is_err());
    }
}
