use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EncoderError;
use crate::autodiff::{Tape, Tensor, Var};

/// Leading bytes of a checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 6] = b"DRECK1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// `x · w + b` with `w: in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output).max(1) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| f64::from(rng.random_range(-limit..limit) as f32))
            .collect();
        Linear {
            w: Tensor::new(input, output, data).expect("sized"),
            b: Tensor::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols()
    }

    /// `x · w + b` for a single vector, accumulated in ascending input order.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.output_dim();
        let mut out = vec![0.0; m];
        for (i, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.w.row(i)) {
                *o += xv * w;
            }
        }
        for (o, &b) in out.iter_mut().zip(self.b.data()) {
            *o += b;
        }
        out
    }
}

/// Sizes that determine every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub features: usize,
    pub dim: usize,
    pub layers: usize,
    pub classes: usize,
    /// Number of layer views concatenated in front of the classifier.
    pub classifier_views: usize,
}

/// Every trainable tensor: the input projection and per-layer maps form the
/// encoder group; the classifier and feature-reconstruction maps form the
/// decoder group.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub input: Linear,
    /// Layer `t` maps `[self | neighbors]` (`2·dim`) to `dim`.
    pub layers: Vec<Linear>,
    pub classifier: Linear,
    pub recon: Linear,
}

/// Tape handles for one [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub input: (Var, Var),
    pub layers: Vec<(Var, Var)>,
    pub classifier: (Var, Var),
    pub recon: (Var, Var),
}

impl ParamVars {
    /// Rebuilds handles from a flat list in [`ModelParams::tensors`] order.
    pub fn from_slice(vars: &[Var]) -> Self {
        let pair = |i: usize| (vars[i], vars[i + 1]);
        let layers = (vars.len() - 6) / 2;
        ParamVars {
            input: pair(0),
            layers: (0..layers).map(|t| pair(2 + 2 * t)).collect(),
            classifier: pair(2 + 2 * layers),
            recon: pair(4 + 2 * layers),
        }
    }

    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.input.0, self.input.1];
        for l in &self.layers {
            out.extend([l.0, l.1]);
        }
        out.extend([self.classifier.0, self.classifier.1, self.recon.0, self.recon.1]);
        out
    }
}

impl ModelParams {
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Linear::glorot(shape.features, shape.dim, &mut rng);
        let layers = (0..shape.layers)
            .map(|_| Linear::glorot(2 * shape.dim, shape.dim, &mut rng))
            .collect();
        let classifier = Linear::glorot(shape.classifier_views * shape.dim, shape.classes, &mut rng);
        let recon = Linear::glorot(shape.dim, shape.features, &mut rng);
        ModelParams {
            input,
            layers,
            classifier,
            recon,
        }
    }

    pub fn dim(&self) -> usize {
        self.input.output_dim()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_features(&self) -> usize {
        self.input.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.output_dim()
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            features: self.num_features(),
            dim: self.dim(),
            layers: self.num_layers(),
            classes: self.num_classes(),
            classifier_views: self.classifier.input_dim() / self.dim().max(1),
        }
    }

    /// Tensor names in canonical order.
    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["input.w".to_string(), "input.b".to_string()];
        for t in 1..=self.layers.len() {
            out.push(format!("layer{t}.w"));
            out.push(format!("layer{t}.b"));
        }
        out.extend(["classifier.w", "classifier.b", "recon.w", "recon.b"].map(String::from));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.input.w, &self.input.b];
        for l in &self.layers {
            out.extend([&l.w, &l.b]);
        }
        out.extend([&self.classifier.w, &self.classifier.b, &self.recon.w, &self.recon.b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.input.w, &mut self.input.b];
        for l in &mut self.layers {
            out.extend([&mut l.w, &mut l.b]);
        }
        out.extend([
            &mut self.classifier.w,
            &mut self.classifier.b,
            &mut self.recon.w,
            &mut self.recon.b,
        ]);
        out
    }

    /// Number of leading entries of [`ModelParams::tensors`] that belong to
    /// the encoder group.
    pub fn encoder_tensor_count(&self) -> usize {
        2 + 2 * self.layers.len()
    }

    /// Registers every tensor on `tape` as a trainable leaf.
    pub fn to_tape(&self, tape: &mut Tape) -> ParamVars {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
        ParamVars::from_slice(&vars)
    }

    fn from_tensors(mut ts: Vec<Tensor>) -> Result<Self, EncoderError> {
        if ts.len() < 6 || !ts.len().is_multiple_of(2) {
            return Err(EncoderError::Checkpoint(format!("{} tensors cannot form a model", ts.len())));
        }
        let mut pairs = Vec::new();
        while !ts.is_empty() {
            let w = ts.remove(0);
            let b = ts.remove(0);
            pairs.push(Linear { w, b });
        }
        let recon = pairs.pop().expect("len >= 3");
        let classifier = pairs.pop().expect("len >= 2");
        let input = pairs.remove(0);
        let p = ModelParams {
            input,
            layers: pairs,
            classifier,
            recon,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks that all shapes fit together and every value is finite.
    pub fn validate(&self) -> Result<(), EncoderError> {
        let dim = self.dim();
        let bad = |msg: String| Err(EncoderError::Checkpoint(msg));
        if self.layers.is_empty() {
            return bad("model has no layers".into());
        }
        for (name, t) in self.names().iter().zip(self.tensors()) {
            if !t.is_finite() {
                return bad(format!("{name} has non-finite values"));
            }
        }
        let linears = std::iter::once(&self.input)
            .chain(&self.layers)
            .chain([&self.classifier, &self.recon]);
        for l in linears {
            if l.b.shape() != [1, l.output_dim()] {
                return bad(format!("bias {:?} does not match weight {:?}", l.b.shape(), l.w.shape()));
            }
        }
        for (t, l) in self.layers.iter().enumerate() {
            if l.w.shape() != [2 * dim, dim] {
                return bad(format!("layer {} weight is {:?}, expected [{}, {dim}]", t + 1, l.w.shape(), 2 * dim));
            }
        }
        if dim == 0 || !self.classifier.input_dim().is_multiple_of(dim) {
            return bad(format!("classifier input {} is not a multiple of dim {dim}", self.classifier.input_dim()));
        }
        if self.recon.w.shape() != [dim, self.num_features()] {
            return bad(format!("reconstruction head is {:?}", self.recon.w.shape()));
        }
        Ok(())
    }

    /// Writes the checkpoint: magic, `u32` version, `u32` tensor count, then
    /// per tensor a `u32`-length-prefixed UTF-8 name, `u32` rows, `u32` cols
    /// and `rows × cols` `f32` values, all little-endian.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncoderError> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let tensors = self.tensors();
        buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in self.names().iter().zip(tensors) {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            buf.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for &v in t.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        fs::write(path, buf).map_err(|source| EncoderError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncoderError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| EncoderError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(6)? != CHECKPOINT_MAGIC {
            return Err(EncoderError::Checkpoint(format!("{}: missing DRECK1 magic bytes", path.display())));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(EncoderError::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        let mut names = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| EncoderError::Checkpoint("tensor name is not UTF-8".into()))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let raw = r.take(rows * cols * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            tensors.push(Tensor::new(rows, cols, data).expect("sized"));
            names.push(name);
        }
        if r.pos != bytes.len() {
            return Err(EncoderError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let params = Self::from_tensors(tensors)?;
        if params.names() != names {
            return Err(EncoderError::Checkpoint(format!("unexpected tensor names {names:?}")));
        }
        Ok(params)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EncoderError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| EncoderError::Checkpoint("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, EncoderError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> ModelShape {
        ModelShape {
            features: 7,
            dim: 4,
            layers: 3,
            classes: 3,
            classifier_views: 3,
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let p = ModelParams::init(shape(), 11);
        let a = tmp.path().join("a.ck");
        p.save(&a).unwrap();
        let back = ModelParams::load(&a).unwrap();
        assert_eq!(back, p);
        let b = tmp.path().join("b.ck");
        back.save(&b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a.ck");
        ModelParams::init(shape(), 1).save(&a).unwrap();
        let bytes = fs::read(&a).unwrap();
        fs::write(&a, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(ModelParams::load(&a), Err(EncoderError::Checkpoint(_))));
        fs::write(&a, b"NOPE").unwrap();
        assert!(matches!(ModelParams::load(&a), Err(EncoderError::Checkpoint(_))));
    }

    #[test]
    fn flat_order_matches_names() {
        let p = ModelParams::init(shape(), 2);
        assert_eq!(p.names().len(), p.tensors().len());
        assert_eq!(p.encoder_tensor_count(), 8);
        assert_eq!(p.shape(), shape());
        let mut tape = Tape::new();
        let vars = p.to_tape(&mut tape);
        let flat = vars.all();
        let again = ParamVars::from_slice(&flat);
        assert_eq!(again.all(), flat);
        assert_eq!(tape.value(vars.recon.0).shape(), [4, 7]);
    }

    #[test]
    fn linear_apply_is_affine() {
        let l = Linear {
            w: Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
            b: Tensor::row_vector(vec![0.5, -0.5]),
        };
        assert_eq!(l.apply(&[1.0, 1.0]), vec![4.5, 5.5]);
        assert_eq!(l.apply(&[0.0, 0.0]), vec![0.5, -0.5]);
    }
}
