//! Adversarial, feature-matching and perceptual objectives.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::discriminator::{DiscOutput, MultiscaleDiscriminator, NLayerDiscriminator};
use crate::error::{Error, Result};
use crate::layers::softplus;
use crate::perceptual::FeatureExtractor;
use crate::tensor::scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanMode {
    /// Cross-entropy on logits.
    #[default]
    Log,
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_gan: f64,
    pub lambda_fm: f64,
    pub lambda_p_global: f64,
    pub lambda_p_local: f64,
    pub lambda_p_face: f64,
    pub gan_mode: GanMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_gan: 1.0,
            lambda_fm: 10.0,
            lambda_p_global: 5.0,
            lambda_p_local: 10.0,
            lambda_p_face: 10.0,
            gan_mode: GanMode::Log,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda_gan: 0.0,
            lambda_fm: 0.0,
            lambda_p_global: 0.0,
            lambda_p_local: 0.0,
            lambda_p_face: 0.0,
            gan_mode: GanMode::Log,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_gan,
            self.lambda_fm,
            self.lambda_p_global,
            self.lambda_p_local,
            self.lambda_p_face,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!("loss weights must be finite and >= 0: {all:?}")));
        }
        Ok(())
    }
}

/// Loss of one discriminator output map.
pub fn gan_loss_single(real: &Tensor, fake: &Tensor, side: Side, mode: GanMode) -> Result<Tensor> {
    Ok(match (mode, side) {
        (GanMode::Log, Side::Discriminator) => (softplus(&real.neg()?)?.mean_all()? + softplus(fake)?.mean_all()?)?,
        (GanMode::Log, Side::Generator) => softplus(&fake.neg()?)?.mean_all()?,
        (GanMode::LeastSquares, Side::Discriminator) => {
            ((real - 1.0)?.sqr()?.mean_all()? + fake.sqr()?.mean_all()?)?
        }
        (GanMode::LeastSquares, Side::Generator) => (fake - 1.0)?.sqr()?.mean_all()?,
    })
}

/// Sum of [`gan_loss_single`] over discriminator scales.
pub fn gan_loss_multiscale(real: &[DiscOutput], fake: &[DiscOutput], side: Side, mode: GanMode) -> Result<Tensor> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} real vs {} fake scales", real.len(), fake.len())));
    }
    let mut total: Option<Tensor> = None;
    for (r, f) in real.iter().zip(fake) {
        let l = gan_loss_single(&r.logits, &f.logits, side, mode)?;
        total = Some(match total {
            Some(t) => (t + l)?,
            None => l,
        });
    }
    Ok(total.expect("non-empty"))
}

/// Channel stack of the conditioning stick figures followed by the images.
pub fn disc_input(cond: &[Tensor], imgs: &[Tensor]) -> Result<Tensor> {
    if cond.len() != imgs.len() || cond.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} conditions vs {} images", cond.len(), imgs.len())));
    }
    let all: Vec<&Tensor> = cond.iter().chain(imgs).collect();
    Ok(Tensor::cat(&all, 1)?)
}

/// Adversarial loss on consecutive-frame tuples `(x_t, x_t+1, y_t, y_t+1)`.
/// On the discriminator side the generated pair is detached.
pub fn gan_loss_temporal(
    d: &MultiscaleDiscriminator,
    cond: (&Tensor, &Tensor),
    real: (&Tensor, &Tensor),
    fake: (&Tensor, &Tensor),
    side: Side,
    mode: GanMode,
) -> Result<Tensor> {
    let c = [cond.0.clone(), cond.1.clone()];
    let (f0, f1) = match side {
        Side::Discriminator => (fake.0.detach(), fake.1.detach()),
        Side::Generator => (fake.0.clone(), fake.1.clone()),
    };
    let out_real = d.forward(&disc_input(&c, &[real.0.clone(), real.1.clone()])?)?;
    let out_fake = d.forward(&disc_input(&c, &[f0, f1])?)?;
    gan_loss_multiscale(&out_real, &out_fake, side, mode)
}

/// Per scale, the mean over layers of the mean absolute feature difference; summed over scales.
/// Real features are treated as constants.
pub fn feature_matching_loss(real: &[Vec<Tensor>], fake: &[Vec<Tensor>]) -> Result<Tensor> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} real vs {} fake scales", real.len(), fake.len())));
    }
    let mut total: Option<Tensor> = None;
    for (r, f) in real.iter().zip(fake) {
        if r.len() != f.len() || r.is_empty() {
            return Err(Error::ShapeMismatch(format!("{} real vs {} fake layers", r.len(), f.len())));
        }
        let mut scale: Option<Tensor> = None;
        for (a, b) in r.iter().zip(f) {
            if a.dims() != b.dims() {
                return Err(Error::ShapeMismatch(format!("feature {:?} vs {:?}", a.dims(), b.dims())));
            }
            let l = (b - a.detach())?.abs()?.mean_all()?;
            scale = Some(match scale {
                Some(s) => (s + l)?,
                None => l,
            });
        }
        let s = (scale.expect("non-empty") / r.len() as f64)?;
        total = Some(match total {
            Some(t) => (t + s)?,
            None => s,
        });
    }
    Ok(total.expect("non-empty"))
}

pub fn features_of(outs: &[DiscOutput]) -> Vec<Vec<Tensor>> {
    outs.iter().map(|o| o.features.clone()).collect()
}

/// Sum over taps of the mean absolute difference to constant target features.
pub fn perceptual_from_features(pred: &[Tensor], target: &[Tensor]) -> Result<Tensor> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} vs {} taps", pred.len(), target.len())));
    }
    let mut total: Option<Tensor> = None;
    for (p, t) in pred.iter().zip(target) {
        if p.dims() != t.dims() {
            return Err(Error::ShapeMismatch(format!("tap {:?} vs {:?}", p.dims(), t.dims())));
        }
        let l = (p - t.detach())?.abs()?.mean_all()?;
        total = Some(match total {
            Some(s) => (s + l)?,
            None => l,
        });
    }
    Ok(total.expect("non-empty"))
}

pub fn perceptual_loss(pred: &Tensor, gt: &Tensor, extractor: &dyn FeatureExtractor) -> Result<Tensor> {
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(format!("prediction {:?} vs target {:?}", pred.dims(), gt.dims())));
    }
    perceptual_from_features(&extractor.features(pred)?, &extractor.features(gt)?)
}

/// Weighted terms of a generator objective; a zero weight yields exactly 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneratorBreakdown {
    pub gan: f64,
    pub feature_matching: f64,
    pub perceptual: f64,
    pub total: f64,
}

/// Adds `w · term()` to the running sum unless `w` is zero.
fn accumulate(
    total: &mut Option<Tensor>,
    slot: &mut f64,
    w: f64,
    term: impl FnOnce() -> Result<Tensor>,
) -> Result<()> {
    if w == 0.0 {
        return Ok(());
    }
    let t = (term()? * w)?;
    *slot = scalar(&t)?;
    *total = Some(match total.take() {
        Some(s) => (s + t)?,
        None => t,
    });
    Ok(())
}

fn finish(total: Option<Tensor>, dtype: DType) -> Result<Tensor> {
    match total {
        Some(t) => Ok(t),
        None => Ok(Tensor::zeros((), dtype, &Device::Cpu)?),
    }
}

/// Discriminator outputs and target features already evaluated for one batch.
pub struct GeneratorTerms<'a> {
    pub d_real: &'a [DiscOutput],
    pub d_fake: &'a [DiscOutput],
    /// Generated frames: one (frame-by-frame) or the two frames of a pair.
    pub pred: &'a [Tensor],
    /// Extractor taps of the ground truth, per generated frame.
    pub target_features: &'a [Vec<Tensor>],
}

/// GAN term + λ_FM · feature matching + λ_P · Σ_frames perceptual.
pub fn generator_objective(
    terms: &GeneratorTerms,
    weights: &LossWeights,
    lambda_p: f64,
    extractor: &dyn FeatureExtractor,
) -> Result<(Tensor, GeneratorBreakdown)> {
    if terms.pred.len() != terms.target_features.len() || terms.pred.is_empty() {
        return Err(Error::ShapeMismatch("one target feature set per generated frame".into()));
    }
    let mut b = GeneratorBreakdown::default();
    let mut total = None;
    accumulate(&mut total, &mut b.gan, weights.lambda_gan, || {
        gan_loss_multiscale(terms.d_real, terms.d_fake, Side::Generator, weights.gan_mode)
    })?;
    accumulate(&mut total, &mut b.feature_matching, weights.lambda_fm, || {
        feature_matching_loss(&features_of(terms.d_real), &features_of(terms.d_fake))
    })?;
    accumulate(&mut total, &mut b.perceptual, lambda_p, || {
        let mut sum: Option<Tensor> = None;
        for (p, t) in terms.pred.iter().zip(terms.target_features) {
            let l = perceptual_from_features(&extractor.features(p)?, t)?;
            sum = Some(match sum {
                Some(s) => (s + l)?,
                None => l,
            });
        }
        Ok(sum.expect("non-empty"))
    })?;
    let total = finish(total, terms.pred[0].dtype())?;
    b.total = b.gan + b.feature_matching + b.perceptual;
    Ok((total, b))
}

/// Stick figures, ground truth and generated frames of one batch; one or two frames each.
pub struct FrameBatch {
    pub x: Vec<Tensor>,
    pub y: Vec<Tensor>,
    pub fake: Vec<Tensor>,
}

/// Full-image generator objective evaluated from scratch on `batch`.
pub fn generator_objective_full(
    d: &MultiscaleDiscriminator,
    batch: &FrameBatch,
    weights: &LossWeights,
    lambda_p: f64,
    extractor: &dyn FeatureExtractor,
) -> Result<(Tensor, GeneratorBreakdown)> {
    let d_real = d.forward(&disc_input(&batch.x, &batch.y)?)?;
    let d_fake = d.forward(&disc_input(&batch.x, &batch.fake)?)?;
    let targets = batch
        .y
        .iter()
        .map(|y| extractor.features(y))
        .collect::<Result<Vec<_>>>()?;
    generator_objective(
        &GeneratorTerms {
            d_real: &d_real,
            d_fake: &d_fake,
            pred: &batch.fake,
            target_features: &targets,
        },
        weights,
        lambda_p,
        extractor,
    )
}

/// Discriminator loss against detached generated frames.
pub fn discriminator_objective(d_real: &[DiscOutput], d_fake: &[DiscOutput], mode: GanMode) -> Result<Tensor> {
    gan_loss_multiscale(d_real, d_fake, Side::Discriminator, mode)
}

/// Face crops: stick figure `x_F`, ground truth `y_F`, generator output `G(x)_F`, residual `r`.
pub struct FaceBatch {
    pub x: Tensor,
    pub y: Tensor,
    pub generated: Tensor,
    pub residual: Tensor,
}

impl FaceBatch {
    /// `r + G(x)_F`.
    pub fn refined(&self) -> Result<Tensor> {
        Ok((&self.residual + &self.generated)?)
    }
}

/// Face GAN (generator side) + λ_P · perceptual on the refined face.
pub fn face_objective(
    df: &NLayerDiscriminator,
    batch: &FaceBatch,
    weights: &LossWeights,
    extractor: &dyn FeatureExtractor,
) -> Result<(Tensor, GeneratorBreakdown)> {
    let refined = batch.refined()?;
    let mut b = GeneratorBreakdown::default();
    let mut total = None;
    accumulate(&mut total, &mut b.gan, weights.lambda_gan, || {
        let real = df.forward(&Tensor::cat(&[&batch.x, &batch.y], 1)?)?;
        let fake = df.forward(&Tensor::cat(&[&batch.x, &refined], 1)?)?;
        gan_loss_single(&real.logits, &fake.logits, Side::Generator, weights.gan_mode)
    })?;
    accumulate(&mut total, &mut b.perceptual, weights.lambda_p_face, || {
        perceptual_loss(&refined, &batch.y, extractor)
    })?;
    let total = finish(total, refined.dtype())?;
    b.total = b.gan + b.perceptual;
    Ok((total, b))
}

/// Face discriminator loss; the refined face is detached.
pub fn face_discriminator_objective(df: &NLayerDiscriminator, batch: &FaceBatch, mode: GanMode) -> Result<Tensor> {
    let real = df.forward(&Tensor::cat(&[&batch.x, &batch.y], 1)?)?;
    let fake = df.forward(&Tensor::cat(&[&batch.x, &batch.refined()?.detach()], 1)?)?;
    gan_loss_single(&real.logits, &fake.logits, Side::Discriminator, mode)
}
