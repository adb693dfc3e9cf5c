//! State-action VAE whose ELBO serves as a log-density score.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizationStats, OfflineDataset};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::{AdamState, Matrix, Mlp, MlpSpec};
use crate::rng::{fill_normal, rng_from, stream};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeConfig {
    /// Defaults to twice the action dimension when unset.
    pub latent_dim: Option<usize>,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub training_epochs: usize,
    pub batch_size: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_dim: None,
            encoder_hidden: vec![750, 750],
            decoder_hidden: vec![750, 750],
            learning_rate: 1e-4,
            training_epochs: 30,
            batch_size: 256,
        }
    }
}

impl VaeConfig {
    pub fn latent_dim_for(&self, action_dim: usize) -> usize {
        self.latent_dim.unwrap_or(2 * action_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == Some(0) {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("VAE batch_size and learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder maps standardized `[s, a]` to `[μ, log σ²]`; decoder maps `z` back
/// to the mean of a unit-variance Gaussian over standardized `[s, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    encoder: Mlp,
    decoder: Mlp,
    norm: NormalizationStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub mean_elbo: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeReport {
    pub epochs: Vec<VaeEpoch>,
}

/// Per-point ELBO split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub reconstruction: f64,
    pub kl: f64,
}

impl ElboTerms {
    pub fn elbo(&self) -> f64 {
        self.reconstruction - self.kl
    }
}

/// `KL(N(μ, e^{lv}) || N(0, 1))` summed over latent dimensions.
pub fn gaussian_kl(mu: &[f64], log_var: &[f64]) -> f64 {
    mu.iter()
        .zip(log_var)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

/// Log density of `x` under `N(mean, I)`.
pub fn unit_gaussian_log_likelihood(x: &[f64], mean: &[f64]) -> f64 {
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * sq - 0.5 * x.len() as f64 * (2.0 * PI).ln()
}

impl DensityModel {
    pub fn from_parts(encoder: Mlp, decoder: Mlp, norm: NormalizationStats) -> Result<Self> {
        let data_dim = norm.state_dim() + norm.action_dim();
        if encoder.input_dim() != data_dim {
            return Err(Error::dim("VAE encoder input", data_dim, encoder.input_dim()));
        }
        if encoder.output_dim() % 2 != 0 || encoder.output_dim() == 0 {
            return Err(Error::Config("VAE encoder output must be [mu, log_var]".into()));
        }
        let latent = encoder.output_dim() / 2;
        if decoder.input_dim() != latent {
            return Err(Error::dim("VAE decoder input", latent, decoder.input_dim()));
        }
        if decoder.output_dim() != data_dim {
            return Err(Error::dim("VAE decoder output", data_dim, decoder.output_dim()));
        }
        Ok(DensityModel { encoder, decoder, norm })
    }

    pub fn init(config: &VaeConfig, norm: NormalizationStats, seed: u64) -> Result<Self> {
        config.validate()?;
        let data_dim = norm.state_dim() + norm.action_dim();
        let latent = config.latent_dim_for(norm.action_dim());
        let mut rng = rng_from(seed, &[stream::INIT]);
        let encoder = Mlp::init(MlpSpec::new(data_dim, &config.encoder_hidden, 2 * latent), &mut rng);
        let decoder = Mlp::init(MlpSpec::new(latent, &config.decoder_hidden, data_dim), &mut rng);
        DensityModel::from_parts(encoder, decoder, norm)
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn norm(&self) -> &NormalizationStats {
        &self.norm
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Encoder then decoder parameters, concatenated.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.encoder.params().to_vec();
        p.extend_from_slice(self.decoder.params());
        p
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        let n = self.encoder.params().len();
        assert_eq!(params.len(), n + self.decoder.params().len());
        self.encoder.params_mut().copy_from_slice(&params[..n]);
        self.decoder.params_mut().copy_from_slice(&params[n..]);
    }

    /// `(μ, clamped log σ²)` for standardized inputs.
    pub fn encode(&self, x: &Matrix) -> (Matrix, Matrix) {
        let out = self.encoder.forward_batch(x);
        let l = self.latent_dim();
        let mu = out.columns(0, l);
        let mut lv = out.columns(l, 2 * l);
        lv.map_inplace(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
        (mu, lv)
    }

    pub fn normalized_inputs(&self, states: &Matrix, actions: &Matrix) -> Matrix {
        Matrix::hcat(&self.norm.normalize_states(states), &self.norm.normalize_actions(actions))
    }

    /// ELBO terms for standardized rows, with `noises[i]` holding the
    /// standard-normal draws (`num_z x latent`, flattened) for row `i`.
    pub fn elbo_terms_normalized(&self, x: &Matrix, noises: &[Vec<f64>]) -> Vec<ElboTerms> {
        assert_eq!(x.rows(), noises.len());
        let l = self.latent_dim();
        let (mu, lv) = self.encode(x);
        let mut z = Vec::new();
        let mut counts = Vec::with_capacity(x.rows());
        for (i, eps) in noises.iter().enumerate() {
            assert!(!eps.is_empty() && eps.len() % l == 0);
            counts.push(eps.len() / l);
            for e in eps.chunks(l) {
                for j in 0..l {
                    z.push(mu.get(i, j) + (0.5 * lv.get(i, j)).exp() * e[j]);
                }
            }
        }
        let total = z.len() / l;
        let recon = self.decoder.forward_batch(&Matrix::from_vec(total, l, z));
        let mut out = Vec::with_capacity(x.rows());
        let mut row = 0;
        for (i, &k) in counts.iter().enumerate() {
            let mut ll = 0.0;
            for r in row..row + k {
                ll += unit_gaussian_log_likelihood(x.row(i), recon.row(r));
            }
            row += k;
            out.push(ElboTerms {
                reconstruction: ll / k as f64,
                kl: gaussian_kl(mu.row(i), lv.row(i)),
            });
        }
        out
    }
}

fn density_noise(latent: usize, num_z: usize, seed: u64) -> Vec<f64> {
    let mut eps = vec![0.0; latent * num_z];
    fill_normal(&mut rng_from(seed, &[stream::DENSITY]), 1.0, &mut eps);
    eps
}

pub fn elbo_components(
    model: &DensityModel,
    s: &[f64],
    a: &[f64],
    num_z_samples: usize,
    seed: u64,
) -> Result<ElboTerms> {
    if num_z_samples == 0 {
        return Err(Error::Config("num_z_samples must be at least 1".into()));
    }
    if s.len() + a.len() != model.data_dim() || a.len() != model.norm.action_dim() {
        return Err(Error::dim("density query", model.data_dim(), s.len() + a.len()));
    }
    ensure_finite("density state", s)?;
    ensure_finite("density action", a)?;
    let x = Matrix::row_vector(&model.norm.normalize_pair(s, a));
    let eps = density_noise(model.latent_dim(), num_z_samples, seed);
    Ok(model.elbo_terms_normalized(&x, &[eps])[0])
}

/// Monte-Carlo ELBO of `(s, a)`, used as the log-density score.
pub fn elbo_density(model: &DensityModel, s: &[f64], a: &[f64], num_z_samples: usize, seed: u64) -> Result<f64> {
    Ok(elbo_components(model, s, a, num_z_samples, seed)?.elbo())
}

/// Batched [`elbo_density`], one seed per row; bit-identical to the single
/// query form.
pub fn elbo_density_batch(
    model: &DensityModel,
    states: &Matrix,
    actions: &Matrix,
    num_z_samples: usize,
    seeds: &[u64],
) -> Vec<f64> {
    assert!(num_z_samples > 0);
    let x = model.normalized_inputs(states, actions);
    let noises: Vec<Vec<f64>> = seeds
        .iter()
        .map(|&seed| density_noise(model.latent_dim(), num_z_samples, seed))
        .collect();
    model.elbo_terms_normalized(&x, &noises).iter().map(ElboTerms::elbo).collect()
}

/// Mean negative ELBO over the batch (one latent sample per row, drawn from
/// `eps`, `rows x latent`) and its gradient with respect to
/// [`DensityModel::flat_params`].
pub fn vae_loss_gradient(model: &DensityModel, x: &Matrix, eps: &Matrix) -> (f64, Vec<f64>) {
    let l = model.latent_dim();
    let b = x.rows() as f64;
    let enc_trace = model.encoder.trace(x.clone());
    let enc_out = enc_trace.output();
    let mut z = Matrix::zeros(x.rows(), l);
    for i in 0..x.rows() {
        for j in 0..l {
            let lv = enc_out.get(i, l + j).clamp(LOG_VAR_MIN, LOG_VAR_MAX);
            z.set(i, j, enc_out.get(i, j) + (0.5 * lv).exp() * eps.get(i, j));
        }
    }
    let dec_trace = model.decoder.trace(z);
    let recon = dec_trace.output();

    let mut loss = 0.0;
    let mut d_recon = Matrix::zeros(recon.rows(), recon.cols());
    for i in 0..x.rows() {
        let mu = &enc_out.row(i)[..l];
        let lv: Vec<f64> = enc_out.row(i)[l..].iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect();
        loss -= unit_gaussian_log_likelihood(x.row(i), recon.row(i)) - gaussian_kl(mu, &lv);
        for (d, (r, t)) in d_recon.row_mut(i).iter_mut().zip(recon.row(i).iter().zip(x.row(i))) {
            *d = (r - t) / b;
        }
    }
    loss /= b;

    let n_enc = model.encoder.params().len();
    let mut grad = vec![0.0; n_enc + model.decoder.params().len()];
    let (g_enc, g_dec) = grad.split_at_mut(n_enc);
    let d_z = model
        .decoder
        .backward(&dec_trace, &d_recon, g_dec, true)
        .expect("input gradient requested");
    let mut d_enc = Matrix::zeros(x.rows(), 2 * l);
    for i in 0..x.rows() {
        for j in 0..l {
            let mu = enc_out.get(i, j);
            let raw_lv = enc_out.get(i, l + j);
            let lv = raw_lv.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
            let sd = (0.5 * lv).exp();
            d_enc.set(i, j, d_z.get(i, j) + mu / b);
            let d_lv = if raw_lv > LOG_VAR_MIN && raw_lv < LOG_VAR_MAX {
                d_z.get(i, j) * eps.get(i, j) * 0.5 * sd + 0.5 * (lv.exp() - 1.0) / b
            } else {
                0.0
            };
            d_enc.set(i, l + j, d_lv);
        }
    }
    model.encoder.backward(&enc_trace, &d_enc, g_enc, false);
    (loss, grad)
}

/// Mean negative ELBO with the same fixed noise as [`vae_loss_gradient`].
pub fn vae_loss(model: &DensityModel, x: &Matrix, eps: &Matrix) -> f64 {
    let noises: Vec<Vec<f64>> = eps.iter_rows().map(|r| r.to_vec()).collect();
    let terms = model.elbo_terms_normalized(x, &noises);
    -terms.iter().map(ElboTerms::elbo).sum::<f64>() / x.rows() as f64
}

/// Mini-batch ELBO ascent with the reparameterization trick.
pub fn train_vae(dataset: &OfflineDataset, config: &VaeConfig, seed: u64) -> Result<(DensityModel, VaeReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut model = DensityModel::init(config, dataset.normalization.clone(), seed)?;
    let states = Matrix::from_rows(&dataset.transitions.iter().map(|t| t.s.as_slice()).collect::<Vec<_>>());
    let actions = Matrix::from_rows(&dataset.transitions.iter().map(|t| t.a.as_slice()).collect::<Vec<_>>());
    let inputs = model.normalized_inputs(&states, &actions);
    let l = model.latent_dim();
    let mut params = model.flat_params();
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epochs = Vec::with_capacity(config.training_epochs);
    let mut noise_rng = rng_from(seed, &[stream::REPARAM]);
    for epoch in 0..config.training_epochs {
        order.shuffle(&mut rng_from(seed, &[stream::SHUFFLE, epoch as u64]));
        let mut elbo_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = inputs.select_rows(chunk);
            let mut eps = Matrix::zeros(chunk.len(), l);
            fill_normal(&mut noise_rng, 1.0, eps.as_mut_slice());
            let (loss, grad) = vae_loss_gradient(&model, &x, &eps);
            if !loss.is_finite() {
                return Err(Error::divergence("VAE training", format!("epoch {epoch}"), format!("loss {loss}")));
            }
            adam.step(&mut params, &grad)
                .map_err(|e| Error::divergence("VAE training", format!("epoch {epoch}"), e.to_string()))?;
            model.set_flat_params(&params);
            elbo_sum -= loss;
            batches += 1;
        }
        epochs.push(VaeEpoch {
            epoch,
            mean_elbo: elbo_sum / batches.max(1) as f64,
        });
    }
    Ok((model, VaeReport { epochs }))
}
