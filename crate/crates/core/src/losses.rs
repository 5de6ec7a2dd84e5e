//! Contrastive objectives: adaptive temperatures, intra/inter prototype
//! losses, naive and geodesic-mixup series-image losses.
//!
//! All tensor losses are differentiable candle graphs that work in `f32` or
//! `f64`. Inputs that are documented as unit vectors are checked and rejected
//! with [`Error::Contract`] when any row norm is off by more than `1e-3`.

use candle_core::{CpuStorage, CustomOp1, DType, Layout, Shape, Tensor, D};
use ndarray::Array2;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::augment::{view_distance, AugmentedViewSet, DistanceFn};
use crate::data::TimeSeriesSample;
use crate::rng::Rng;
use crate::{Error, Result};
use rand::Rng as _;

/// Added to masked logits; `exp` of it underflows to zero in both precisions.
const MASKED: f64 = -1e30;
pub const NORM_TOLERANCE: f64 = 1e-3;
/// Below this angle the two inputs of a mixup are treated as parallel.
pub const PARALLEL_EPS: f64 = 1e-6;
/// Above `PI - ANTIPODAL_EPS` the geodesic is ambiguous.
pub const ANTIPODAL_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau0: f64,
    pub tau: f64,
    /// Average the intra loss anchored on both view sets.
    pub symmetric_intra: bool,
    /// Stop gradients at the mixed negatives.
    pub detach_mix: bool,
    pub use_si: bool,
    pub use_mix: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            beta: 0.9,
            gamma: 0.1,
            tau0: 0.1,
            tau: 0.1,
            symmetric_intra: false,
            detach_mix: false,
            use_si: true,
            use_mix: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        unit_interval("alpha", self.alpha)?;
        unit_interval("beta", self.beta)?;
        positive("gamma", self.gamma)?;
        positive("tau0", self.tau0)?;
        positive("tau", self.tau)
    }
}

fn unit_interval(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [0, 1], got {x}")))
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive, got {x}")))
    }
}

/// Per-pair temperatures for one sample's `G` views.
///
/// `tau_within[j][k]` pairs `a_j` with `a_k`, `tau_cross[j][k]` pairs `a_j`
/// with `b_k`. The `_b` matrices are the same construction anchored on the
/// second view set and are only used by the symmetric intra loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperaturePair {
    pub tau_within: Array2<f64>,
    pub tau_cross: Array2<f64>,
    pub tau_within_b: Array2<f64>,
    pub tau_cross_b: Array2<f64>,
    pub tau0: f64,
}

impl TemperaturePair {
    pub fn num_views(&self) -> usize {
        self.tau_within.nrows()
    }
}

pub fn adaptive_temperatures(
    views_a: &[TimeSeriesSample],
    views_b: &[TimeSeriesSample],
    tau0: f64,
) -> Result<TemperaturePair> {
    adaptive_temperatures_with(views_a, views_b, tau0, view_distance)
}

pub fn adaptive_temperatures_with(
    views_a: &[TimeSeriesSample],
    views_b: &[TimeSeriesSample],
    tau0: f64,
    dist: DistanceFn,
) -> Result<TemperaturePair> {
    let g = views_a.len();
    if g == 0 {
        return Err(Error::config(
            "adaptive temperatures need at least one view",
        ));
    }
    if views_b.len() != g {
        return Err(Error::Shape(format!(
            "{g} views in set a but {} in set b",
            views_b.len()
        )));
    }
    let matrix = |xs: &[TimeSeriesSample], ys: &[TimeSeriesSample]| -> Result<Array2<f64>> {
        let mut d = Array2::zeros((g, g));
        for j in 0..g {
            for k in 0..g {
                d[[j, k]] = dist(&xs[j], &ys[k])?;
            }
        }
        Ok(d)
    };
    let aa = matrix(views_a, views_a)?;
    let ab = matrix(views_a, views_b)?;
    let bb = matrix(views_b, views_b)?;
    let ba = ab.t().to_owned();
    temperatures_from_distances(&aa, &ab, &bb, &ba, tau0)
}

pub fn temperatures_for(set: &AugmentedViewSet, tau0: f64) -> Result<TemperaturePair> {
    adaptive_temperatures(&set.views_a, &set.views_b, tau0)
}

/// Builds the four temperature matrices from raw distances. Diagonals are
/// excluded from each row softmax, so they stay at `tau0`.
pub fn temperatures_from_distances(
    within: &Array2<f64>,
    cross: &Array2<f64>,
    within_b: &Array2<f64>,
    cross_b: &Array2<f64>,
    tau0: f64,
) -> Result<TemperaturePair> {
    positive("tau0", tau0)?;
    Ok(TemperaturePair {
        tau_within: tau_matrix(within, tau0)?,
        tau_cross: tau_matrix(cross, tau0)?,
        tau_within_b: tau_matrix(within_b, tau0)?,
        tau_cross_b: tau_matrix(cross_b, tau0)?,
        tau0,
    })
}

/// `tau0 + softmax` over the off-diagonal entries of each row. A 1x1 matrix
/// has nothing to distribute and yields `[[tau0]]`.
pub fn tau_matrix(d: &Array2<f64>, tau0: f64) -> Result<Array2<f64>> {
    let g = d.nrows();
    if d.ncols() != g {
        return Err(Error::Shape(format!(
            "distance matrix must be square, got {:?}",
            d.dim()
        )));
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite view distance".into()));
    }
    let mut tau = Array2::from_elem((g, g), tau0);
    for j in 0..g {
        let max = (0..g)
            .filter(|&k| k != j)
            .map(|k| d[[j, k]])
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..g)
            .filter(|&k| k != j)
            .map(|k| (d[[j, k]] - max).exp())
            .sum();
        for k in (0..g).filter(|&k| k != j) {
            tau[[j, k]] = tau0 + (d[[j, k]] - max).exp() / denom;
        }
    }
    Ok(tau)
}

/// Stacks per-sample matrices into `(B, G, G)` tensors `(within, cross)`,
/// or the `_b` pair when `second_set` is true.
pub fn stack_temperatures(
    pairs: &[TemperaturePair],
    second_set: bool,
    dtype: DType,
    device: &candle_core::Device,
) -> Result<(Tensor, Tensor)> {
    let g = pairs
        .first()
        .map(|p| p.num_views())
        .ok_or_else(|| Error::config("no temperatures to stack"))?;
    let mut within: Vec<f64> = Vec::with_capacity(pairs.len() * g * g);
    let mut cross: Vec<f64> = Vec::with_capacity(pairs.len() * g * g);
    for p in pairs {
        if p.num_views() != g {
            return Err(Error::Shape("temperature matrices differ in size".into()));
        }
        let (w, c) = if second_set {
            (&p.tau_within_b, &p.tau_cross_b)
        } else {
            (&p.tau_within, &p.tau_cross)
        };
        within.extend(w.iter());
        cross.extend(c.iter());
    }
    let shape = (pairs.len(), g, g);
    Ok((
        Tensor::from_vec(within, shape, device)?.to_dtype(dtype)?,
        Tensor::from_vec(cross, shape, device)?.to_dtype(dtype)?,
    ))
}

/// Rejects tensors whose last-axis rows are not unit vectors.
pub fn check_unit_rows(t: &Tensor, what: &str) -> Result<()> {
    let norms = t
        .to_dtype(DType::F64)?
        .sqr()?
        .sum(D::Minus1)?
        .sqrt()?
        .flatten_all()?
        .to_vec1::<f64>()?;
    if let Some((i, n)) = norms
        .iter()
        .enumerate()
        .find(|(_, n)| !((*n - 1.0).abs() <= NORM_TOLERANCE))
    {
        return Err(Error::Contract(format!(
            "{what}: row {i} has norm {n}, expected 1"
        )));
    }
    Ok(())
}

/// `log(sum(exp(x)))` over the last axis with a detached max shift.
fn logsumexp_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x
        .broadcast_sub(&max)?
        .exp()?
        .sum_keepdim(D::Minus1)?
        .log()?;
    Ok((shifted + max)?.squeeze(D::Minus1)?)
}

/// `(n, n)` matrix with `MASKED` on the diagonal and zero elsewhere.
fn diagonal_mask(n: usize, like: &Tensor) -> Result<Tensor> {
    Ok(Tensor::eye(n, like.dtype(), like.device())?.affine(MASKED, 0.0)?)
}

fn diagonal(x: &Tensor) -> Result<Tensor> {
    let n = x.dim(D::Minus1)?;
    let eye = Tensor::eye(n, x.dtype(), x.device())?;
    Ok(x.broadcast_mul(&eye)?.sum(D::Minus1)?)
}

/// Per-sample intra-prototype losses for a batch.
///
/// `v`, `v_tilde`: `(B, G, J)` unit rows; temperatures `(B, G, G)`.
/// Returns a `(B,)` tensor.
pub fn intra_prototype_terms(
    v: &Tensor,
    v_tilde: &Tensor,
    tau_within: &Tensor,
    tau_cross: &Tensor,
) -> Result<Tensor> {
    check_unit_rows(v, "intra v")?;
    check_unit_rows(v_tilde, "intra v_tilde")?;
    intra_unchecked(v, v_tilde, tau_within, tau_cross)
}

fn intra_unchecked(
    v: &Tensor,
    v_tilde: &Tensor,
    tau_within: &Tensor,
    tau_cross: &Tensor,
) -> Result<Tensor> {
    let (_, g, _) = v.dims3()?;
    let s = (v.matmul(&v.transpose(1, 2)?)? / tau_within)?;
    let s_tilde = (v.matmul(&v_tilde.transpose(1, 2)?)? / tau_cross)?;
    let s = s.broadcast_add(&diagonal_mask(g, &s)?)?;
    let logits = Tensor::cat(&[&s, &s_tilde], 2)?;
    let per_anchor = (logsumexp_last(&logits)? - diagonal(&s_tilde)?)?;
    Ok(per_anchor.sum(1)?)
}

/// Intra loss anchored on both view sets, averaged.
pub fn intra_prototype_terms_symmetric(
    v: &Tensor,
    v_tilde: &Tensor,
    taus_a: (&Tensor, &Tensor),
    taus_b: (&Tensor, &Tensor),
) -> Result<Tensor> {
    let a = intra_prototype_terms(v, v_tilde, taus_a.0, taus_a.1)?;
    let b = intra_unchecked(v_tilde, v, taus_b.0, taus_b.1)?;
    Ok(((a + b)? * 0.5)?)
}

/// Intra loss of one sample, `v` and `v_tilde` of shape `(G, J)`.
pub fn intra_prototype_loss(
    v: &Tensor,
    v_tilde: &Tensor,
    taus: &TemperaturePair,
) -> Result<Tensor> {
    let (w, c) = stack_temperatures(std::slice::from_ref(taus), false, v.dtype(), v.device())?;
    let terms = intra_prototype_terms(&v.unsqueeze(0)?, &v_tilde.unsqueeze(0)?, &w, &c)?;
    Ok(terms.squeeze(0)?)
}

/// Per-sample inter-prototype losses, `(B,)`.
pub fn inter_prototype_terms(z: &Tensor, z_tilde: &Tensor, tau: f64) -> Result<Tensor> {
    positive("tau", tau)?;
    check_unit_rows(z, "inter z")?;
    check_unit_rows(z_tilde, "inter z_tilde")?;
    let b = z.dim(0)?;
    let s = (z.matmul(&z.t()?)? / tau)?.broadcast_add(&diagonal_mask(b, z)?)?;
    let s_tilde = (z.matmul(&z_tilde.t()?)? / tau)?;
    let logits = Tensor::cat(&[&s, &s_tilde], 1)?;
    Ok((logsumexp_last(&logits)? - diagonal(&s_tilde)?)?)
}

/// Batch mean of the inter-prototype loss.
pub fn inter_prototype_loss(z: &Tensor, z_tilde: &Tensor, tau: f64) -> Result<Tensor> {
    Ok(inter_prototype_terms(z, z_tilde, tau)?.mean_all()?)
}

/// `(1 / 2B) * sum_i (alpha * inter_i + (1 - alpha) * intra_i)`.
pub fn prototype_loss(inter: &Tensor, intra: &Tensor, alpha: f64) -> Result<Tensor> {
    unit_interval("alpha", alpha)?;
    let b = inter.dim(0)?;
    if intra.dims() != inter.dims() {
        return Err(Error::Shape(format!(
            "inter {:?} vs intra {:?}",
            inter.dims(),
            intra.dims()
        )));
    }
    let mixed = ((inter * alpha)? + (intra * (1.0 - alpha))?)?;
    Ok((mixed.sum_all()? / (2.0 * b as f64))?)
}

/// Unit-normalizes the mean of `views` (`(G, H)` representations) after
/// passing it through `project`.
pub fn make_prototype<F>(views: &Tensor, project: F) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let mean = views.mean_keepdim(0)?;
    let projected = project(&mean)?;
    Ok(l2_normalize(&projected)?.squeeze(0)?)
}

/// Row-wise L2 normalization over the last axis; a zero row is a
/// [`Error::Numeric`] error.
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norms = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    let min = norms
        .flatten_all()?
        .to_dtype(DType::F64)?
        .min(0)?
        .to_scalar::<f64>()?;
    if !(min > 1e-12) {
        return Err(Error::Numeric(format!(
            "cannot normalize a vector of norm {min}"
        )));
    }
    Ok(x.broadcast_div(&norms)?)
}

/// Symmetric series-image InfoNCE; `u` image rows, `v` series rows.
pub fn naive_si_loss(u: &Tensor, v: &Tensor, tau: f64) -> Result<Tensor> {
    positive("tau", tau)?;
    check_unit_rows(u, "naive u")?;
    check_unit_rows(v, "naive v")?;
    let b = u.dim(0)?;
    let logits = (u.matmul(&v.t()?)? / tau)?;
    let pos = diagonal(&logits)?;
    let image_to_series = (logsumexp_last(&logits)? - &pos)?;
    let series_to_image = (logsumexp_last(&logits.t()?)? - &pos)?;
    Ok(((image_to_series.sum_all()? + series_to_image.sum_all()?)? / (2.0 * b as f64))?)
}

/// Draws `n` mixing coefficients from `Beta(gamma, gamma)` by inverse CDF.
pub fn sample_lambdas(n: usize, gamma: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    positive("gamma", gamma)?;
    let beta =
        Beta::new(gamma, gamma).map_err(|e| Error::config(format!("beta distribution: {e}")))?;
    Ok((0..n)
        .map(|_| beta.inverse_cdf(rng.random::<f64>()))
        .collect())
}

/// Spherical interpolation of two unit vectors; `lambda = 1` gives `u`,
/// `lambda = 0` gives `v`.
pub fn geodesic_mixup(u: &[f64], v: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "mixup of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    unit_interval("lambda", lambda)?;
    for (x, what) in [(u, "u"), (v, "v")] {
        let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("mixup {what} has norm {n}")));
        }
    }
    if lambda == 1.0 {
        return Ok(u.to_vec());
    }
    if lambda == 0.0 {
        return Ok(v.to_vec());
    }
    let c = u
        .iter()
        .zip(v)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .clamp(-1.0, 1.0);
    let theta = c.acos();
    if theta > std::f64::consts::PI - ANTIPODAL_EPS {
        return Err(Error::Numeric(format!(
            "mixup of antipodal vectors (angle {theta})"
        )));
    }
    if theta < PARALLEL_EPS {
        let lin: Vec<f64> = u
            .iter()
            .zip(v)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        let n = lin.iter().map(|a| a * a).sum::<f64>().sqrt();
        return Ok(lin.iter().map(|a| a / n).collect());
    }
    let s = theta.sin();
    let (wu, wv) = (
        (lambda * theta).sin() / s,
        ((1.0 - lambda) * theta).sin() / s,
    );
    Ok(u.iter().zip(v).map(|(a, b)| wu * a + wv * b).collect())
}

/// Batched, differentiable form of [`geodesic_mixup`]: row `i` of the result
/// mixes `u[i]` and `v[i]` with `lambdas[i]`.
pub fn geodesic_mixup_rows(u: &Tensor, v: &Tensor, lambdas: &Tensor) -> Result<Tensor> {
    let c = (u * v)?.sum_keepdim(1)?;
    let c_host = c.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    let lam_host = lambdas
        .flatten_all()?
        .to_dtype(DType::F64)?
        .to_vec1::<f64>()?;
    for (i, &ci) in c_host.iter().enumerate() {
        if ci.clamp(-1.0, 1.0).acos() > std::f64::consts::PI - ANTIPODAL_EPS {
            return Err(Error::Numeric(format!("mixup row {i}: antipodal inputs")));
        }
    }
    if let Some(l) = lam_host.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::config(format!("lambda must lie in [0, 1], got {l}")));
    }
    let lam = lambdas.reshape((lam_host.len(), 1))?;
    // Rows that are (numerically) parallel take the normalized chord; the
    // angle is replaced by a harmless value there so no NaN leaks into the
    // gradient of the unused branch.
    let parallel: Vec<u8> = c_host
        .iter()
        .map(|&ci| u8::from(ci.clamp(-1.0, 1.0).acos() < PARALLEL_EPS))
        .collect();
    let parallel = Tensor::from_vec(parallel, (c_host.len(), 1), u.device())?;
    let c_safe = parallel.where_cond(&c.zeros_like()?, &c.clamp(-1.0, 1.0)?)?;
    let theta = c_safe.apply_op1(Acos)?;
    let sin_theta = theta.sin()?;
    let wu = lam.broadcast_mul(&theta)?.sin()?.div(&sin_theta)?;
    let one_minus = lam.affine(-1.0, 1.0)?;
    let wv = one_minus.broadcast_mul(&theta)?.sin()?.div(&sin_theta)?;
    let slerp = (u.broadcast_mul(&wu)? + v.broadcast_mul(&wv)?)?;
    let chord = l2_normalize_unchecked(&(u.broadcast_mul(&lam)? + v.broadcast_mul(&one_minus)?)?)?;
    let pick = parallel.broadcast_as(slerp.shape())?;
    Ok(pick.where_cond(&chord, &slerp)?)
}

fn l2_normalize_unchecked(x: &Tensor) -> Result<Tensor> {
    Ok(x.broadcast_div(&x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?)?)
}

/// Geodesic-mixup contrastive loss with explicit coefficients.
pub fn mixup_si_loss_with(
    u: &Tensor,
    v: &Tensor,
    lambdas: &Tensor,
    tau: f64,
    detach: bool,
) -> Result<Tensor> {
    positive("tau", tau)?;
    check_unit_rows(u, "mixup u")?;
    check_unit_rows(v, "mixup v")?;
    let b = u.dim(0)?;
    let mut mixed = geodesic_mixup_rows(u, v, lambdas)?;
    if detach {
        mixed = mixed.detach();
    }
    let pos = ((u * v)?.sum(1)? / tau)?;
    let image = (logsumexp_last(&(u.matmul(&mixed.t()?)? / tau)?)? - &pos)?;
    let series = (logsumexp_last(&(v.matmul(&mixed.t()?)? / tau)?)? - &pos)?;
    Ok(((image.sum_all()? + series.sum_all()?)? / (2.0 * b as f64))?)
}

/// Geodesic-mixup contrastive loss with `lambda_j ~ Beta(gamma, gamma)`.
pub fn mixup_si_loss(
    u: &Tensor,
    v: &Tensor,
    gamma: f64,
    tau: f64,
    rng: &mut Rng,
) -> Result<Tensor> {
    let b = u.dim(0)?;
    let lambdas = sample_lambdas(b, gamma, rng)?;
    let lambdas = Tensor::from_vec(lambdas, b, u.device())?.to_dtype(u.dtype())?;
    mixup_si_loss_with(u, v, &lambdas, tau, false)
}

pub fn si_loss(naive: &Tensor, mix: &Tensor, beta: f64) -> Result<Tensor> {
    unit_interval("beta", beta)?;
    if beta == 1.0 {
        return Ok(naive.clone());
    }
    if beta == 0.0 {
        return Ok(mix.clone());
    }
    Ok(((naive * beta)? + (mix * (1.0 - beta))?)?)
}

pub fn total_loss(proto: &Tensor, si: &Tensor) -> Result<Tensor> {
    Ok((proto + si)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_intra: f64,
    pub l_inter: f64,
    pub l_proto: f64,
    pub l_naive: f64,
    pub l_mix: f64,
    pub l_si: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "l_intra,l_inter,l_proto,l_naive,l_mix,l_si,l_total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.l_intra,
            self.l_inter,
            self.l_proto,
            self.l_naive,
            self.l_mix,
            self.l_si,
            self.l_total
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.l_intra,
            self.l_inter,
            self.l_proto,
            self.l_naive,
            self.l_mix,
            self.l_si,
            self.l_total,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Everything one training step feeds into the objective.
pub struct LossInputs<'a> {
    /// `(B, G, J)` projected views of the first and second set.
    pub v: &'a Tensor,
    pub v_tilde: &'a Tensor,
    /// `(B, G, G)`, first-set anchored.
    pub tau_within: &'a Tensor,
    pub tau_cross: &'a Tensor,
    /// Second-set anchored temperatures; required for the symmetric intra loss.
    pub taus_b: Option<(&'a Tensor, &'a Tensor)>,
    /// `(B, J)` prototypes of the two view sets.
    pub z: &'a Tensor,
    pub z_tilde: &'a Tensor,
    /// `(B, J)` image and series projections plus `(B,)` mixing coefficients.
    pub si: Option<(&'a Tensor, &'a Tensor, &'a Tensor)>,
}

/// Full objective `L_proto + L_SI` with the ablation switches from `cfg`.
pub fn objective(inputs: &LossInputs<'_>, cfg: &LossConfig) -> Result<(Tensor, LossBreakdown)> {
    cfg.validate()?;
    let intra = match (cfg.symmetric_intra, inputs.taus_b) {
        (false, _) => intra_prototype_terms(
            inputs.v,
            inputs.v_tilde,
            inputs.tau_within,
            inputs.tau_cross,
        )?,
        (true, Some(b)) => intra_prototype_terms_symmetric(
            inputs.v,
            inputs.v_tilde,
            (inputs.tau_within, inputs.tau_cross),
            b,
        )?,
        (true, None) => {
            return Err(Error::config(
                "symmetric intra loss needs second-set temperatures",
            ))
        }
    };
    let inter = inter_prototype_terms(inputs.z, inputs.z_tilde, cfg.tau)?;
    let proto = prototype_loss(&inter, &intra, cfg.alpha)?;
    let scalar = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
    let mut out = LossBreakdown {
        l_intra: scalar(&intra.mean_all()?)?,
        l_inter: scalar(&inter.mean_all()?)?,
        l_proto: scalar(&proto)?,
        ..Default::default()
    };
    let total = match (cfg.use_si, inputs.si) {
        (false, _) => proto,
        (true, None) => {
            return Err(Error::config(
                "series-image loss enabled but no image projections given",
            ))
        }
        (true, Some((u, v, lambdas))) => {
            let naive = naive_si_loss(u, v, cfg.tau)?;
            out.l_naive = scalar(&naive)?;
            let si = if cfg.use_mix {
                let mix = mixup_si_loss_with(u, v, lambdas, cfg.tau, cfg.detach_mix)?;
                out.l_mix = scalar(&mix)?;
                si_loss(&naive, &mix, cfg.beta)?
            } else {
                naive
            };
            out.l_si = scalar(&si)?;
            total_loss(&proto, &si)?
        }
    };
    out.l_total = scalar(&total)?;
    Ok((total, out))
}

/// Elementwise arccosine with a gradient.
struct Acos;

impl CustomOp1 for Acos {
    fn name(&self) -> &'static str {
        "acos"
    }

    fn cpu_fwd(
        &self,
        storage: &CpuStorage,
        layout: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let (start, end) = layout
            .contiguous_offsets()
            .ok_or_else(|| candle_core::Error::Msg("acos expects a contiguous tensor".into()))?;
        let out = match storage {
            CpuStorage::F32(x) => CpuStorage::F32(x[start..end].iter().map(|v| v.acos()).collect()),
            CpuStorage::F64(x) => CpuStorage::F64(x[start..end].iter().map(|v| v.acos()).collect()),
            _ => {
                return Err(candle_core::Error::Msg(
                    "acos supports f32 and f64 only".into(),
                ))
            }
        };
        Ok((out, layout.shape().clone()))
    }

    fn bwd(
        &self,
        arg: &Tensor,
        _res: &Tensor,
        grad_res: &Tensor,
    ) -> candle_core::Result<Option<Tensor>> {
        // d/dx acos(x) = -1 / sqrt(1 - x^2)
        let denom = arg.sqr()?.affine(-1.0, 1.0)?.sqrt()?;
        Ok(Some(grad_res.div(&denom)?.neg()?))
    }
}
