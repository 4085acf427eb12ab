//! Checkpoint file: hyperparameters plus every parameter tensor.
//!
//! ```text
//! magic      8 bytes "FCRANKCK"
//! version    u32 (currently 1)
//! variant    u32 (0 MAN, 1 CTM, 2 VMN)
//! hyper      10 x u32: P, F, k, n, T, hidden1, hidden2,
//!                      static_dim, contextual_dim, visual_dim
//! tensors    u32 count, then per tensor:
//!            u32 name length, name bytes, u32 rank, rank x u32 dims,
//!            prod(dims) x f32
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::{tensor_specs, Hyperparams, Model, ModelParams, Tensor, Variant};
use crate::error::{Error, Result};
use crate::store::{Reader, StoreDims};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FCRANKCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let hp = &model.hyper;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.variant.code().to_le_bytes());
    for v in [
        hp.projection_dim,
        hp.filters,
        hp.kmax,
        hp.num_cnns,
        hp.visual_proj_dim,
        hp.hidden1,
        hp.hidden2,
        hp.dims.static_dim,
        hp.dims.contextual_dim,
        hp.dims.visual_dim,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let tensors = model.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in model.params.names().iter().zip(tensors) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &t.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic").ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::BadMagic {
            expected: "FCRANKCK",
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion(version));
    }
    let variant = Variant::from_code(r.u32("variant")?)?;
    let mut h = [0usize; 10];
    for v in &mut h {
        *v = r.u32("hyperparameters")? as usize;
    }
    let hyper = Hyperparams {
        projection_dim: h[0],
        filters: h[1],
        kmax: h[2],
        num_cnns: h[3],
        visual_proj_dim: h[4],
        hidden1: h[5],
        hidden2: h[6],
        dims: StoreDims {
            static_dim: h[7],
            contextual_dim: h[8],
            visual_dim: h[9],
        },
    };
    hyper.validate()?;
    let specs = tensor_specs(&hyper, variant);
    let count = r.u32("tensor count")? as usize;
    if count != specs.len() {
        return Err(Error::Shape(format!(
            "checkpoint holds {count} tensors, expected {}",
            specs.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for spec in &specs {
        let name = r.string("tensor name")?;
        if name != spec.name {
            return Err(Error::Shape(format!("expected tensor {}, found {name}", spec.name)));
        }
        let rank = r.u32("tensor rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u32("tensor shape").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != spec.shape {
            return Err(Error::Shape(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                spec.shape
            )));
        }
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| r.f32(&name).map(|x| x as f64))
            .collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor { shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Invalid("trailing bytes after checkpoint tensors".into()));
    }
    let params = ModelParams::from_tensors(&hyper, tensors);
    if !params.is_finite() {
        return Err(Error::Invalid("checkpoint holds non-finite parameters".into()));
    }
    Ok(Model {
        hyper,
        variant,
        params,
    })
}

pub fn write_checkpoint(path: &Path, model: &Model) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rounds_to_f32() {
        for variant in [Variant::Man, Variant::Ctm, Variant::Vmn] {
            let model = Model::new(Hyperparams::tiny(), variant, 9);
            let back = checkpoint_from_bytes(&checkpoint_bytes(&model)).unwrap();
            assert_eq!(back.hyper, model.hyper);
            assert_eq!(back.variant, variant);
            for (a, b) in back.params.tensors().iter().zip(model.params.tensors()) {
                assert_eq!(a.shape, b.shape);
                for (x, y) in a.data.iter().zip(&b.data) {
                    assert_eq!(*x, *y as f32 as f64);
                }
            }
            // A second pass is exact once values are f32-representable.
            let again = checkpoint_from_bytes(&checkpoint_bytes(&back)).unwrap();
            assert_eq!(again, back);
        }
    }

    #[test]
    fn rejects_corruption() {
        let model = Model::new(Hyperparams::tiny(), Variant::Man, 1);
        let bytes = checkpoint_bytes(&model);
        let mut bad = bytes.clone();
        bad[0] = b'x';
        assert!(matches!(checkpoint_from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(matches!(checkpoint_from_bytes(&bad), Err(Error::CheckpointVersion(7))));
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..bytes.len() - 2]),
            Err(Error::Truncated { .. })
        ));
    }
}
