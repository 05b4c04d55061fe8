use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::io::{read_exact_at, read_f32, read_u32};
use crate::rng::PortableRng;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WDHM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Width of the shared hidden layer in the reference architecture.
pub const DEFAULT_HIDDEN: usize = 256;

/// Layer widths of the hashing head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSizes {
    /// Input feature dimension.
    pub input: usize,
    /// Shared hidden layer (FC3).
    pub hidden: usize,
    /// Hash bits, the width of H1.
    pub bits: usize,
    /// Tag-embedding dimension, the width of H2. Zero when the model has
    /// no H2 head (binary tag-vector baseline).
    pub embed: usize,
}

impl LayerSizes {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 || self.bits == 0 {
            return Err(Error::Param(format!(
                "layer sizes must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// A fully connected layer: `y = W x + b`, with `W` stored `[out x in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    /// Glorot-normal weights, N(0, 2 / (fan_in + fan_out)); zero bias.
    pub fn glorot(out: usize, inp: usize, rng: &mut PortableRng) -> Self {
        let std = (2.0 / (inp + out) as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((out, inp), || std * rng.normal()),
            bias: Array1::zeros(out),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Weights of FC3, H1 and H2.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub fc3: Dense,
    pub h1: Dense,
    pub h2: Dense,
}

impl NetworkParams {
    pub fn zeros(sizes: LayerSizes) -> Self {
        Self {
            fc3: Dense::zeros(sizes.hidden, sizes.input),
            h1: Dense::zeros(sizes.bits, sizes.hidden),
            h2: Dense::zeros(sizes.embed, sizes.hidden),
        }
    }

    pub fn sizes(&self) -> LayerSizes {
        LayerSizes {
            input: self.fc3.in_dim(),
            hidden: self.fc3.out_dim(),
            bits: self.h1.out_dim(),
            embed: self.h2.out_dim(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.sizes())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in checkpoint order.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.fc3.weight.as_slice().expect("standard layout"),
            self.fc3.bias.as_slice().expect("standard layout"),
            self.h1.weight.as_slice().expect("standard layout"),
            self.h1.bias.as_slice().expect("standard layout"),
            self.h2.weight.as_slice().expect("standard layout"),
            self.h2.bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.fc3.weight.as_slice_mut().expect("standard layout"),
            self.fc3.bias.as_slice_mut().expect("standard layout"),
            self.h1.weight.as_slice_mut().expect("standard layout"),
            self.h1.bias.as_slice_mut().expect("standard layout"),
            self.h2.weight.as_slice_mut().expect("standard layout"),
            self.h2.bias.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let s = self.sizes();
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for dim in [s.input, s.hidden, s.bits, s.embed] {
            out.write_all(&(dim as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.param_count() * 4);
        for t in self.tensors() {
            for &v in t {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out.write_all(&buf)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut offset = 0u64;
        let mut magic = [0u8; 4];
        read_exact_at(&mut input, &mut magic, &mut offset)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
        }
        let version = read_u32(&mut input, &mut offset)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            *d = read_u32(&mut input, &mut offset)? as usize;
        }
        let sizes = LayerSizes {
            input: dims[0],
            hidden: dims[1],
            bits: dims[2],
            embed: dims[3],
        };
        sizes.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut params = NetworkParams::zeros(sizes);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = f64::from(read_f32(&mut input, &mut offset)?);
            }
        }
        if !params.is_finite() {
            return Err(Error::Format("checkpoint holds non-finite weights".into()));
        }
        Ok(params)
    }

    /// Fails with [`Error::Numeric`] if a weight is not finite in `f32`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let storable = self
            .tensors()
            .iter()
            .all(|t| t.iter().all(|&v| (v as f32).is_finite()));
        if !storable {
            return Err(Error::Numeric(
                "weights exceed the single-precision range of the checkpoint".into(),
            ));
        }
        crate::datastore::write_file(path.as_ref(), |w| self.write(w))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }
}

/// Glorot-normal initialization of all three layers, drawn in checkpoint
/// order from a stream seeded by `seed`.
pub fn init_glorot(sizes: LayerSizes, seed: u64) -> Result<NetworkParams> {
    sizes.validate()?;
    let mut rng = PortableRng::new(seed);
    Ok(NetworkParams {
        fc3: Dense::glorot(sizes.hidden, sizes.input, &mut rng),
        h1: Dense::glorot(sizes.bits, sizes.hidden, &mut rng),
        h2: Dense::glorot(sizes.embed, sizes.hidden, &mut rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(input: usize, hidden: usize, bits: usize, embed: usize) -> LayerSizes {
        LayerSizes {
            input,
            hidden,
            bits,
            embed,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_glorot(sizes(8, 6, 4, 5), 42).unwrap();
        let b = init_glorot(sizes(8, 6, 4, 5), 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_glorot(sizes(8, 6, 4, 5), 43).unwrap());
        assert!(a.fc3.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_variance_matches_fan() {
        let p = init_glorot(sizes(4096, 256, 1, 1), 1).unwrap();
        let w = &p.fc3.weight;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.mapv(|v| (v - mean).powi(2)).sum() / n;
        let want = 2.0 / (256.0 + 4096.0);
        assert!((var / want - 1.0).abs() < 0.1, "{var} vs {want}");

        // 1x1 layers have unit variance
        let mut rng = PortableRng::new(3);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| Dense::glorot(1, 1, &mut rng).weight[[0, 0]])
            .collect();
        let v = draws.iter().map(|x| x * x).sum::<f64>() / draws.len() as f64;
        assert!((v - 1.0).abs() < 0.05);
    }

    #[test]
    fn init_rejects_zero_sizes() {
        assert!(init_glorot(sizes(0, 6, 4, 5), 1).is_err());
        assert!(init_glorot(sizes(8, 0, 4, 5), 1).is_err());
        assert!(init_glorot(sizes(8, 6, 0, 5), 1).is_err());
        assert!(init_glorot(sizes(8, 6, 4, 0), 1).is_ok());
    }

    #[test]
    fn checkpoint_layout() {
        let mut p = NetworkParams::zeros(sizes(2, 3, 1, 1));
        p.fc3.weight[[0, 1]] = 1.5;
        p.h2.bias[0] = -2.0;
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"WDHM");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..24], &[2, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        // fc3 weight row 0, col 1
        assert_eq!(&buf[28..32], &1.5f32.to_le_bytes());
        assert_eq!(&buf[buf.len() - 4..], &(-2.0f32).to_le_bytes());
        assert_eq!(buf.len(), 24 + 4 * p.param_count());
        assert_eq!(NetworkParams::read(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn checkpoint_roundtrip_is_byte_exact() {
        let p = init_glorot(sizes(10, 7, 5, 3), 9).unwrap();
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        let back = NetworkParams::read(buf.as_slice()).unwrap();
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(NetworkParams::read(&buf[..buf.len() - 1]).is_err());
        assert!(NetworkParams::read(&b"WDHC\x01\0\0\0"[..]).is_err());
    }

    #[test]
    fn save_rejects_weights_beyond_f32() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = init_glorot(LayerSizes { input: 2, hidden: 2, bits: 2, embed: 1 }, 0).unwrap();
        p.h1.weight[[0, 1]] = 1e300;
        let path = dir.path().join("m.wdhm");
        assert!(matches!(p.save(&path), Err(Error::Numeric(_))));
        assert!(!path.exists());
    }
}
