//! Series encoder, image encoder and projection heads.
//!
//! The series encoder is a stack of dilated causal 1-D convolutions applied to
//! every variable separately (channel independence); variable embeddings are
//! averaged. The image encoder is a small four-stage residual CNN. Both end in
//! an `H`-dimensional representation, and each modality has its own two-layer
//! projection head onto the unit sphere in `J` dimensions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{Device, Module, Tensor, Var, D};

pub use candle_core::DType;
use candle_nn::{Conv2d, Conv2dConfig, Linear, VarBuilder, VarMap};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::TimeSeriesSample;
use crate::imaging::RasterImage;
use crate::losses::l2_normalize;
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of dilated residual blocks; block `i` uses dilation `2^i`.
    pub depth: usize,
    pub hidden: usize,
    pub kernel: usize,
    /// Representation size `H` shared by both encoders.
    pub repr_dim: usize,
    /// Projection size `J`.
    pub proj_dim: usize,
    /// Channels of the image stem followed by the four residual stages.
    pub image_channels: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            depth: 10,
            hidden: 64,
            kernel: 3,
            repr_dim: 320,
            proj_dim: 128,
            image_channels: vec![16, 16, 32, 64, 128],
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0
            || self.hidden == 0
            || self.kernel == 0
            || self.repr_dim == 0
            || self.proj_dim == 0
        {
            return Err(Error::config("encoder sizes must all be positive"));
        }
        if self.depth > 24 {
            return Err(Error::config(format!(
                "encoder depth {} is too large",
                self.depth
            )));
        }
        if self.image_channels.len() < 2 || self.image_channels.contains(&0) {
            return Err(Error::config(
                "image_channels needs a stem width and at least one stage",
            ));
        }
        Ok(())
    }
}

fn gelu(x: &Tensor) -> candle_core::Result<Tensor> {
    x.gelu_erf()
}

/// Dilated causal 1-D convolution over `(N, T, C)` tensors, one matmul per
/// tap. Output step `t` sees inputs `t - (kernel - 1 - j) * dilation`.
///
/// The candle 0.11 CPU `conv1d` backward pass returns wrong kernel gradients
/// (it feeds a transposed, non-contiguous kernel into the forward kernel) and
/// wrong input gradients at dilation 1, so the layer avoids it altogether.
/// Weights keep the `(C_out, C_in, kernel)` layout.
pub struct CausalConv {
    weight: Tensor,
    bias: Tensor,
    kernel: usize,
    dilation: usize,
}

impl CausalConv {
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        dilation: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        Ok(Self {
            weight: vb.get((c_out, c_in, kernel), "weight")?,
            bias: vb.get(c_out, "bias")?,
            kernel,
            dilation,
        })
    }

    /// `(N, T, C_in)` to `(N, T, C_out)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, t, _) = x.dims3()?;
        let (c_out, c_in, _) = self.weight.dims3()?;
        let padded = x.pad_with_zeros(1, (self.kernel - 1) * self.dilation, 0)?;
        let mut y: Option<Tensor> = None;
        for j in 0..self.kernel {
            let w = self
                .weight
                .narrow(2, j, 1)?
                .reshape((c_out, c_in))?
                .t()?
                .broadcast_as((n, c_in, c_out))?;
            let tap = padded.narrow(1, j * self.dilation, t)?.matmul(&w)?;
            y = Some(match y {
                Some(acc) => (acc + tap)?,
                None => tap,
            });
        }
        Ok(y.expect("kernel >= 1").broadcast_add(&self.bias)?)
    }
}

pub struct SeriesEncoder {
    input: CausalConv,
    blocks: Vec<CausalConv>,
    output: CausalConv,
}

impl SeriesEncoder {
    pub fn new(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        let input = CausalConv::new(1, cfg.hidden, 1, 1, vb.pp("input"))?;
        let blocks = (0..cfg.depth)
            .map(|i| {
                CausalConv::new(
                    cfg.hidden,
                    cfg.hidden,
                    cfg.kernel,
                    1usize << i,
                    vb.pp(format!("block{i}")),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let output = CausalConv::new(cfg.hidden, cfg.repr_dim, 1, 1, vb.pp("output"))?;
        Ok(Self {
            input,
            blocks,
            output,
        })
    }

    /// `(B, M, T)` to `(B, H)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, m, t) = x.dims3()?;
        let mut h = self.input.forward(&x.reshape((b * m, t, 1))?)?;
        for conv in &self.blocks {
            h = (&h + conv.forward(&gelu(&h)?)?)?;
        }
        let per_step = self.output.forward(&gelu(&h)?)?;
        let per_var = per_step.mean(1)?;
        Ok(per_var.reshape((b, m, per_var.dim(1)?))?.mean(1)?)
    }
}

pub struct ImageEncoder {
    stem: Conv2d,
    stages: Vec<(Conv2d, Conv2d, Conv2d)>,
    head: Linear,
}

impl ImageEncoder {
    pub fn new(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        let same = Conv2dConfig {
            padding: 1,
            ..Default::default()
        };
        let down = Conv2dConfig {
            padding: 1,
            stride: 2,
            ..Default::default()
        };
        let skip = Conv2dConfig {
            stride: 2,
            ..Default::default()
        };
        let ch = &cfg.image_channels;
        let stem = candle_nn::conv2d(3, ch[0], 3, same, vb.pp("stem"))?;
        let stages = ch
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let vb = vb.pp(format!("stage{i}"));
                Ok((
                    candle_nn::conv2d(w[0], w[1], 3, down, vb.pp("conv1"))?,
                    candle_nn::conv2d(w[1], w[1], 3, same, vb.pp("conv2"))?,
                    candle_nn::conv2d(w[0], w[1], 1, skip, vb.pp("skip"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let head = candle_nn::linear(*ch.last().expect("validated"), cfg.repr_dim, vb.pp("head"))?;
        Ok(Self { stem, stages, head })
    }

    /// `(B, 3, H, W)` to `(B, repr_dim)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = gelu(&self.stem.forward(x)?)?;
        for (conv1, conv2, skip) in &self.stages {
            let y = conv2.forward(&gelu(&conv1.forward(&h)?)?)?;
            h = gelu(&(y + skip.forward(&h)?)?)?;
        }
        Ok(self.head.forward(&h.mean(D::Minus1)?.mean(D::Minus1)?)?)
    }
}

/// Two-layer map onto the unit sphere.
pub struct ProjectionHead {
    hidden: Linear,
    out: Linear,
}

impl ProjectionHead {
    pub fn new(input: usize, output: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            hidden: candle_nn::linear(input, input, vb.pp("hidden"))?,
            out: candle_nn::linear(input, output, vb.pp("out"))?,
        })
    }

    /// Output before normalization.
    pub fn forward_raw(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.out.forward(&gelu(&self.hidden.forward(x)?)?)?)
    }

    /// Unit vectors; a zero output row is a numeric error.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        l2_normalize(&self.forward_raw(x)?)
    }
}

/// Both encoders and both heads over one variable store.
pub struct Model {
    pub config: EncoderConfig,
    pub varmap: VarMap,
    pub series: SeriesEncoder,
    pub image: ImageEncoder,
    pub series_head: ProjectionHead,
    pub image_head: ProjectionHead,
    pub dtype: DType,
    pub device: Device,
}

impl Model {
    /// Builds a model and initializes every parameter from `seed`.
    pub fn new(config: EncoderConfig, seed: u64, dtype: DType) -> Result<Self> {
        config.validate()?;
        let device = Device::Cpu;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, dtype, &device);
        let series = SeriesEncoder::new(&config, vb.pp("series"))?;
        let image = ImageEncoder::new(&config, vb.pp("image"))?;
        let series_head =
            ProjectionHead::new(config.repr_dim, config.proj_dim, vb.pp("series_head"))?;
        let image_head =
            ProjectionHead::new(config.repr_dim, config.proj_dim, vb.pp("image_head"))?;
        let model = Self {
            config,
            varmap,
            series,
            image,
            series_head,
            image_head,
            dtype,
            device,
        };
        init_vars(&model.named_vars(), &mut rng::derive(seed, 0x1417))?;
        Ok(model)
    }

    /// Variables sorted by name.
    pub fn named_vars(&self) -> Vec<(String, Var)> {
        sorted_vars(&self.varmap)
    }

    pub fn series_vars(&self) -> Vec<Var> {
        self.named_vars()
            .into_iter()
            .filter(|(n, _)| n.starts_with("series."))
            .map(|(_, v)| v)
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.named_vars().iter().map(|(_, v)| v.elem_count()).sum()
    }

    pub fn series_tensor(&self, samples: &[TimeSeriesSample]) -> Result<Tensor> {
        series_batch_tensor(samples, self.dtype, &self.device)
    }

    pub fn image_tensor(&self, images: &[RasterImage]) -> Result<Tensor> {
        image_batch_tensor(images, self.dtype, &self.device)
    }

    pub fn encode_series(&self, samples: &[TimeSeriesSample]) -> Result<Tensor> {
        self.series.forward(&self.series_tensor(samples)?)
    }

    pub fn encode_image(&self, images: &[RasterImage]) -> Result<Tensor> {
        self.image.forward(&self.image_tensor(images)?)
    }

    /// Prototype of a sample from its `(G, H)` view representations.
    pub fn prototype(&self, views: &Tensor) -> Result<Tensor> {
        crate::losses::make_prototype(views, |x| self.series_head.forward_raw(x))
    }

    pub fn save(&self, dir: impl AsRef<Path>, step: usize, extra: serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({
            "encoder": self.config,
            "step": step,
            "extra": extra,
        });
        save_vars(dir.as_ref(), &self.named_vars(), meta)
    }

    /// Rebuilds a model from a checkpoint directory written by [`Model::save`].
    pub fn load(dir: impl AsRef<Path>, dtype: DType) -> Result<(Self, Checkpoint)> {
        let ckpt = Checkpoint::read(dir.as_ref())?;
        let config: EncoderConfig = serde_json::from_value(
            ckpt.meta
                .get("encoder")
                .cloned()
                .ok_or_else(|| ckpt.format_error("manifest has no encoder config"))?,
        )?;
        let model = Self::new(config, 0, dtype)?;
        ckpt.restore(&model.named_vars())?;
        Ok((model, ckpt))
    }
}

pub fn sorted_vars(varmap: &VarMap) -> Vec<(String, Var)> {
    let data = varmap.data().lock().expect("var map lock");
    let mut vars: Vec<(String, Var)> = data.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    vars
}

/// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and zero biases, drawn
/// in name order so the result depends only on the seed.
pub fn init_vars(vars: &[(String, Var)], rng: &mut Rng) -> Result<()> {
    for (name, var) in vars {
        let dims = var.dims().to_vec();
        let n = var.elem_count();
        let values: Vec<f64> = if name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            let fan_in = (n / dims[0]).max(1) as f64;
            let bound = 1.0 / fan_in.sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            (0..n).map(|_| dist.sample(rng)).collect()
        };
        let t = Tensor::from_vec(values, dims, var.device())?.to_dtype(var.dtype())?;
        var.set(&t)?;
    }
    Ok(())
}

/// `(B, M, T)` tensor from shape-homogeneous samples.
pub fn series_batch_tensor(
    samples: &[TimeSeriesSample],
    dtype: DType,
    device: &Device,
) -> Result<Tensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Shape("empty series batch".into()))?;
    let (m, t) = first.shape();
    let mut flat = Vec::with_capacity(samples.len() * m * t);
    for s in samples {
        if s.shape() != (m, t) {
            return Err(Error::Shape(format!(
                "series batch mixes shapes {:?} and {:?}",
                (m, t),
                s.shape()
            )));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in series batch".into()));
        }
        flat.extend(s.values.iter().copied());
    }
    Ok(Tensor::from_vec(flat, (samples.len(), m, t), device)?.to_dtype(dtype)?)
}

/// `(B, 3, H, W)` ink tensor from same-sized images.
pub fn image_batch_tensor(images: &[RasterImage], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut flat = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "image batch mixes sizes {h}x{w} and {}x{}",
                img.height(),
                img.width()
            )));
        }
        flat.extend(img.to_chw());
    }
    Ok(Tensor::from_vec(flat, (images.len(), 3, h, w), device)?.to_dtype(dtype)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    file: String,
    shape: Vec<usize>,
    dtype: String,
    byte_order: String,
    sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes each variable as little-endian `f32` into `<dir>/<name>.bin` and a
/// manifest with shapes and SHA-256 digests.
pub fn save_vars(dir: &Path, vars: &[(String, Var)], meta: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::with_capacity(vars.len());
    for (name, var) in vars {
        let values = var
            .as_tensor()
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?;
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let file = format!("{name}.bin");
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        tensors.push(TensorEntry {
            name: name.clone(),
            file,
            shape: var.dims().to_vec(),
            dtype: "f32".into(),
            byte_order: "little".into(),
            sha256: hex_digest(&bytes),
        });
    }
    let manifest = Manifest {
        format_version: 1,
        tensors,
        meta,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A checkpoint directory read into memory and verified against its manifest.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub dir: PathBuf,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut tensors = BTreeMap::new();
        let fail = |msg: String| Error::Format {
            path: path.clone(),
            msg,
        };
        for entry in manifest.tensors {
            if entry.dtype != "f32" || entry.byte_order != "little" {
                return Err(fail(format!(
                    "{}: unsupported encoding {} {}",
                    entry.name, entry.dtype, entry.byte_order
                )));
            }
            let file = dir.join(&entry.file);
            let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            if hex_digest(&bytes) != entry.sha256 {
                return Err(fail(format!("{}: checksum mismatch", entry.name)));
            }
            let expected: usize = entry.shape.iter().product();
            if bytes.len() != expected * 4 {
                return Err(fail(format!(
                    "{}: {} bytes for shape {:?}",
                    entry.name,
                    bytes.len(),
                    entry.shape
                )));
            }
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(entry.name, (entry.shape, values));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            tensors,
            meta: manifest.meta,
        })
    }

    fn format_error(&self, msg: &str) -> Error {
        Error::Format {
            path: self.dir.join(MANIFEST_FILE),
            msg: msg.into(),
        }
    }

    /// Copies stored values into `vars`; every variable must be present with
    /// a matching shape.
    pub fn restore(&self, vars: &[(String, Var)]) -> Result<()> {
        for (name, var) in vars {
            let (shape, values) = self
                .tensors
                .get(name)
                .ok_or_else(|| self.format_error(&format!("checkpoint lacks tensor `{name}`")))?;
            if shape.as_slice() != var.dims() {
                return Err(self.format_error(&format!(
                    "`{name}` has shape {shape:?}, model expects {:?}",
                    var.dims()
                )));
            }
            let t = Tensor::from_vec(values.clone(), shape.clone(), var.device())?
                .to_dtype(var.dtype())?;
            var.set(&t)?;
        }
        Ok(())
    }

    pub fn step(&self) -> usize {
        self.meta.get("step").and_then(|s| s.as_u64()).unwrap_or(0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{default_palette, rasterize};
    use ndarray::Array2;

    pub(crate) fn tiny() -> EncoderConfig {
        EncoderConfig {
            depth: 3,
            hidden: 8,
            kernel: 3,
            repr_dim: 12,
            proj_dim: 6,
            image_channels: vec![4, 4, 8, 8, 8],
        }
    }

    fn sample(m: usize, t: usize, phase: f64) -> TimeSeriesSample {
        TimeSeriesSample::new(
            Array2::from_shape_fn((m, t), |(a, b)| ((b as f64) * 0.3 + a as f64 + phase).sin()),
            None,
            "enc",
        )
        .unwrap()
    }

    #[test]
    fn series_shapes_and_determinism() {
        let model = Model::new(tiny(), 1, DType::F64).unwrap();
        let s = sample(2, 20, 0.0);
        let r = model
            .encode_series(&[s.clone(), s.clone(), sample(2, 20, 1.0)])
            .unwrap();
        assert_eq!(r.dims(), &[3, 12]);
        let r = r.to_vec2::<f64>().unwrap();
        assert_eq!(r[0], r[1]);
        assert_ne!(r[0], r[2]);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Model::new(tiny(), 9, DType::F32).unwrap();
        let b = Model::new(tiny(), 9, DType::F32).unwrap();
        let c = Model::new(tiny(), 10, DType::F32).unwrap();
        let flat = |m: &Model| -> Vec<f32> {
            m.named_vars()
                .iter()
                .flat_map(|(_, v)| v.flatten_all().unwrap().to_vec1::<f32>().unwrap())
                .collect()
        };
        assert_eq!(flat(&a), flat(&b));
        assert_ne!(flat(&a), flat(&c));
    }

    #[test]
    fn channel_independence() {
        let model = Model::new(tiny(), 2, DType::F64).unwrap();
        let s = sample(3, 16, 0.4);
        let joint = model
            .encode_series(&[s.clone()])
            .unwrap()
            .to_vec2::<f64>()
            .unwrap()[0]
            .clone();
        let mut mean = vec![0.0; 12];
        for m in 0..3 {
            let uni = TimeSeriesSample::univariate(s.variable(m).to_vec(), None).unwrap();
            let r = model
                .encode_series(&[uni])
                .unwrap()
                .to_vec2::<f64>()
                .unwrap();
            for (acc, v) in mean.iter_mut().zip(&r[0]) {
                *acc += v / 3.0;
            }
        }
        for (a, b) in joint.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-6);
        }
        // Permuting variables is a no-op up to summation order.
        let mut rev = s.values.clone();
        rev.invert_axis(ndarray::Axis(0));
        let permuted = model
            .encode_series(&[s.with_values(rev)])
            .unwrap()
            .to_vec2::<f64>()
            .unwrap();
        for (a, b) in joint.iter().zip(&permuted[0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn causal_prefix() {
        // The representation of a prefix depends only on the prefix; check via
        // per-timestep features by encoding two series that differ at the end.
        let model = Model::new(tiny(), 3, DType::F64).unwrap();
        let x = Tensor::from_vec(
            (0..10).map(|i| i as f64).collect::<Vec<_>>(),
            (1, 10, 1),
            &Device::Cpu,
        )
        .unwrap();
        let mut changed = x.to_vec3::<f64>().unwrap();
        changed[0][9][0] = 100.0;
        let y = Tensor::new(changed, &Device::Cpu).unwrap();
        let enc = &model.series;
        let feats = |t: &Tensor| {
            let mut h = enc.input.forward(t).unwrap();
            for conv in &enc.blocks {
                h = (&h + conv.forward(&gelu(&h).unwrap()).unwrap()).unwrap();
            }
            h.to_vec3::<f64>().unwrap()
        };
        let (a, b) = (feats(&x), feats(&y));
        for c in 0..8 {
            for t in 0..9 {
                assert_eq!(a[0][t][c], b[0][t][c]);
            }
            assert_ne!(a[0][9][c], b[0][9][c]);
        }
    }

    fn random_conv(c_in: usize, c_out: usize, k: usize, d: usize) -> (VarMap, CausalConv) {
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F64, &Device::Cpu);
        let conv = CausalConv::new(c_in, c_out, k, d, vb).unwrap();
        init_vars(&sorted_vars(&varmap), &mut rng::seeded(11)).unwrap();
        let bias = Tensor::new(&[0.3f64, -0.2, 0.1][..c_out], &Device::Cpu).unwrap();
        varmap.data().lock().unwrap()["bias"].set(&bias).unwrap();
        (varmap, conv)
    }

    #[test]
    fn causal_conv_matches_direct_sum() {
        for (k, d) in [(1, 1), (3, 1), (3, 2), (2, 4)] {
            let (_, conv) = random_conv(2, 3, k, d);
            let x = Tensor::randn(0f64, 1.0, (2, 9, 2), &Device::Cpu).unwrap();
            let got = conv.forward(&x).unwrap().to_vec3::<f64>().unwrap();
            let xs = x.to_vec3::<f64>().unwrap();
            let w = conv.weight.to_vec3::<f64>().unwrap();
            let b = conv.bias.to_vec1::<f64>().unwrap();
            for n in 0..2 {
                for o in 0..3 {
                    for t in 0..9 {
                        let mut want = b[o];
                        for i in 0..2 {
                            for j in 0..k {
                                // Tap j looks back (k - 1 - j) * d steps.
                                let back = (k - 1 - j) * d;
                                if t >= back {
                                    want += w[o][i][j] * xs[n][t - back][i];
                                }
                            }
                        }
                        assert!((got[n][t][o] - want).abs() < 1e-12, "k{k} d{d}");
                    }
                }
            }
        }
    }

    #[test]
    fn causal_conv_gradients_match_finite_differences() {
        let h = 1e-6;
        for (k, d) in [(1, 1), (3, 1), (3, 2)] {
            let (varmap, conv) = random_conv(2, 3, k, d);
            let x = Var::from_tensor(&Tensor::randn(0f64, 1.0, (2, 7, 2), &Device::Cpu).unwrap())
                .unwrap();
            let probe = Tensor::randn(0f64, 1.0, (2, 7, 3), &Device::Cpu).unwrap();
            let f = |x: &Tensor| {
                (conv.forward(x).unwrap().tanh().unwrap() * &probe)
                    .unwrap()
                    .sum_all()
                    .unwrap()
            };
            let grads = f(x.as_tensor()).backward().unwrap();
            let weight = varmap.data().lock().unwrap()["weight"].clone();
            for var in [&x, &weight] {
                let analytic = grads
                    .get(var)
                    .unwrap()
                    .flatten_all()
                    .unwrap()
                    .to_vec1::<f64>()
                    .unwrap();
                let base = var.flatten_all().unwrap().to_vec1::<f64>().unwrap();
                for (idx, g) in analytic.iter().enumerate() {
                    let mut shifted = base.clone();
                    shifted[idx] += h;
                    var.set(&Tensor::from_vec(shifted.clone(), var.dims(), &Device::Cpu).unwrap())
                        .unwrap();
                    let plus = f(x.as_tensor()).to_scalar::<f64>().unwrap();
                    shifted[idx] -= 2.0 * h;
                    var.set(&Tensor::from_vec(shifted, var.dims(), &Device::Cpu).unwrap())
                        .unwrap();
                    let minus = f(x.as_tensor()).to_scalar::<f64>().unwrap();
                    var.set(&Tensor::from_vec(base.clone(), var.dims(), &Device::Cpu).unwrap())
                        .unwrap();
                    let fd = (plus - minus) / (2.0 * h);
                    assert!((fd - g).abs() < 1e-6, "k{k} d{d} idx {idx}: {fd} vs {g}");
                }
            }
        }
    }

    #[test]
    fn non_finite_and_ragged_inputs() {
        let model = Model::new(tiny(), 1, DType::F32).unwrap();
        assert!(matches!(
            model.encode_series(&[sample(1, 10, 0.0), sample(1, 11, 0.0)]),
            Err(Error::Shape(_))
        ));
        let mut bad = sample(1, 10, 0.0);
        bad.values[[0, 3]] = f64::NAN;
        assert!(matches!(
            model.encode_series(&[bad]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn image_shapes() {
        let model = Model::new(tiny(), 1, DType::F32).unwrap();
        let pal = default_palette(4);
        let a = rasterize(&sample(1, 20, 0.0), 16, &pal).unwrap();
        let white = RasterImage {
            pixels: vec![255; a.pixels.len()],
            ..a.clone()
        };
        let r = model.encode_image(&[white.clone(), white]).unwrap();
        assert_eq!(r.dims(), &[2, 12]);
        let r = r.to_vec2::<f32>().unwrap();
        assert_eq!(r[0], r[1]);
        let big = rasterize(&sample(4, 20, 0.0), 16, &pal).unwrap();
        assert!(matches!(
            model.encode_image(&[a, big]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn projection_is_unit_and_scale_free() {
        let model = Model::new(tiny(), 4, DType::F64).unwrap();
        let x = Tensor::randn(0.0f64, 1.0, (5, 12), &Device::Cpu).unwrap();
        let p = model.series_head.project(&x).unwrap();
        assert_eq!(p.dims(), &[5, 6]);
        for row in p.to_vec2::<f64>().unwrap() {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let raw = model.series_head.forward_raw(&x).unwrap();
        let a = l2_normalize(&raw).unwrap().to_vec2::<f64>().unwrap();
        let b = l2_normalize(&(raw * 3.0).unwrap())
            .unwrap()
            .to_vec2::<f64>()
            .unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        assert_eq!(EncoderConfig::default().proj_dim, 128);
    }

    #[test]
    fn checkpoint_roundtrip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::new(tiny(), 5, DType::F32).unwrap();
        model
            .save(dir.path(), 7, serde_json::json!({"note": "x"}))
            .unwrap();
        let (loaded, ckpt) = Model::load(dir.path(), DType::F32).unwrap();
        assert_eq!(ckpt.step(), 7);
        let s = [sample(1, 12, 0.2)];
        assert_eq!(
            model.encode_series(&s).unwrap().to_vec2::<f32>().unwrap(),
            loaded.encode_series(&s).unwrap().to_vec2::<f32>().unwrap()
        );
        let victim = dir.path().join("series.output.bias.bin");
        let mut bytes = fs::read(&victim).unwrap();
        bytes[0] ^= 1;
        fs::write(&victim, bytes).unwrap();
        assert!(matches!(
            Model::load(dir.path(), DType::F32),
            Err(Error::Format { .. })
        ));
    }
}
