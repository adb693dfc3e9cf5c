//! Learned one-step dynamics `(s, a) -> (s', r, c̃)` and the input
//! perturbation sensitivity used to decide whether a simulated step can be
//! trusted.

use serde::{Deserialize, Serialize};

use crate::dataset::{mean_std_rows, OfflineDataset, NormalizationStats};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::{AdamState, Matrix, Mlp, MlpSpec};
use crate::rng::{fill_normal, rng_from, stream};
use rand::seq::SliceRandom;

pub const REWARD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub predict_delta: bool,
    pub training_epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            hidden_dims: vec![200, 200, 200, 200],
            learning_rate: 1e-4,
            predict_delta: true,
            training_epochs: 30,
            batch_size: 256,
            validation_fraction: 0.1,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::Config("validation_fraction must lie in (0, 0.5]".into()));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("dynamics batch_size and learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    /// K, the number of perturbed copies of the input.
    pub num_perturbations: usize,
    /// σ, in normalized input units.
    pub noise_std: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            num_perturbations: 20,
            noise_std: 0.01,
        }
    }
}

impl SensitivityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_perturbations < 2 {
            return Err(Error::Config("sensitivity needs at least 2 perturbations".into()));
        }
        if !(self.noise_std > 0.0) {
            return Err(Error::Config("sensitivity noise_std must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
}

/// One network over standardized `[s, a]` producing standardized
/// `[Δs or s', r, c̃]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    network: Mlp,
    input_norm: NormalizationStats,
    target_mean: Vec<f64>,
    target_std: Vec<f64>,
    predict_delta: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsReport {
    pub epochs: Vec<DynamicsEpoch>,
    pub best_epoch: usize,
    /// Held-out next-state RMSE per dimension, in units of the state std.
    pub heldout_state_rmse: Vec<f64>,
}

impl DynamicsModel {
    pub fn from_parts(
        network: Mlp,
        input_norm: NormalizationStats,
        target_mean: Vec<f64>,
        target_std: Vec<f64>,
        predict_delta: bool,
    ) -> Result<Self> {
        let sd = input_norm.state_dim();
        let ad = input_norm.action_dim();
        if network.input_dim() != sd + ad {
            return Err(Error::dim("dynamics network input", sd + ad, network.input_dim()));
        }
        if network.output_dim() != sd + 2 {
            return Err(Error::dim("dynamics network output", sd + 2, network.output_dim()));
        }
        if target_mean.len() != sd + 2 || target_std.len() != sd + 2 {
            return Err(Error::dim("dynamics target statistics", sd + 2, target_mean.len()));
        }
        Ok(DynamicsModel {
            network,
            input_norm,
            target_mean,
            target_std,
            predict_delta,
        })
    }

    pub fn network(&self) -> &Mlp {
        &self.network
    }

    pub fn input_norm(&self) -> &NormalizationStats {
        &self.input_norm
    }

    pub fn target_mean(&self) -> &[f64] {
        &self.target_mean
    }

    pub fn target_std(&self) -> &[f64] {
        &self.target_std
    }

    pub fn predict_delta(&self) -> bool {
        self.predict_delta
    }

    pub fn state_dim(&self) -> usize {
        self.input_norm.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.input_norm.action_dim()
    }

    /// Standardized network inputs for a batch of raw states and actions.
    pub fn normalized_inputs(&self, states: &Matrix, actions: &Matrix) -> Matrix {
        Matrix::hcat(
            &self.input_norm.normalize_states(states),
            &self.input_norm.normalize_actions(actions),
        )
    }

    pub fn predict(&self, s: &[f64], a: &[f64]) -> Result<Prediction> {
        if s.len() != self.state_dim() {
            return Err(Error::dim("dynamics state", self.state_dim(), s.len()));
        }
        if a.len() != self.action_dim() {
            return Err(Error::dim("dynamics action", self.action_dim(), a.len()));
        }
        ensure_finite("dynamics state", s)?;
        ensure_finite("dynamics action", a)?;
        let (next, r, c) = self.predict_batch(&Matrix::row_vector(s), &Matrix::row_vector(a));
        Ok(Prediction {
            next_state: next.into_vec(),
            reward: r[0],
            cost: c[0],
        })
    }

    /// Batched prediction; rewards floored at [`REWARD_FLOOR`], costs at 0.
    pub fn predict_batch(&self, states: &Matrix, actions: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        let out = self.network.forward_batch(&self.normalized_inputs(states, actions));
        self.decode(states, &out)
    }

    fn decode(&self, states: &Matrix, out: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        let sd = self.state_dim();
        let mut next = Matrix::zeros(states.rows(), sd);
        let mut rewards = Vec::with_capacity(states.rows());
        let mut costs = Vec::with_capacity(states.rows());
        for i in 0..states.rows() {
            let o = out.row(i);
            let s = states.row(i);
            let row = next.row_mut(i);
            for j in 0..sd {
                let v = o[j] * self.target_std[j] + self.target_mean[j];
                row[j] = if self.predict_delta { s[j] + v } else { v };
            }
            let r = o[sd] * self.target_std[sd] + self.target_mean[sd];
            let c = o[sd + 1] * self.target_std[sd + 1] + self.target_mean[sd + 1];
            rewards.push(r.max(REWARD_FLOOR));
            costs.push(c.max(0.0));
        }
        (next, rewards, costs)
    }
}

/// Draws the `K x (state_dim + action_dim)` perturbations for one query.
pub fn sensitivity_noises(model: &DynamicsModel, config: &SensitivityConfig, seed: u64) -> Vec<Vec<f64>> {
    let dim = model.state_dim() + model.action_dim();
    let mut rng = rng_from(seed, &[stream::SENSITIVITY]);
    (0..config.num_perturbations)
        .map(|_| {
            let mut e = vec![0.0; dim];
            fill_normal(&mut rng, config.noise_std, &mut e);
            e
        })
        .collect()
}

/// Sensitivity of `(s, a)` under explicitly supplied perturbations of the
/// standardized input: mean over output dimensions of the sample variance
/// of `f(x + ε_i) - f(x)`, measured on the network's standardized outputs.
pub fn sensitivity_with_noise(
    model: &DynamicsModel,
    s: &[f64],
    a: &[f64],
    noises: &[Vec<f64>],
) -> Result<f64> {
    if noises.len() < 2 {
        return Err(Error::Config("sensitivity needs at least 2 perturbations".into()));
    }
    let x0 = model.input_norm.normalize_pair(s, a);
    Ok(sensitivity_of_normalized(model, &[x0], &[noises.to_vec()])[0])
}

pub fn sensitivity(
    model: &DynamicsModel,
    s: &[f64],
    a: &[f64],
    config: &SensitivityConfig,
    seed: u64,
) -> Result<f64> {
    config.validate()?;
    if s.len() != model.state_dim() || a.len() != model.action_dim() {
        return Err(Error::dim(
            "sensitivity query",
            model.state_dim() + model.action_dim(),
            s.len() + a.len(),
        ));
    }
    sensitivity_with_noise(model, s, a, &sensitivity_noises(model, config, seed))
}

/// Sensitivities for many queries at once, one seed per query. Each value
/// is bit-identical to the corresponding single-query [`sensitivity`].
pub fn sensitivity_batch(
    model: &DynamicsModel,
    states: &Matrix,
    actions: &Matrix,
    config: &SensitivityConfig,
    seeds: &[u64],
) -> Vec<f64> {
    assert_eq!(states.rows(), seeds.len());
    let x = model.normalized_inputs(states, actions);
    let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| r.to_vec()).collect();
    let noises: Vec<Vec<Vec<f64>>> = seeds
        .iter()
        .map(|&seed| sensitivity_noises(model, config, seed))
        .collect();
    sensitivity_of_normalized(model, &rows, &noises)
}

fn sensitivity_of_normalized(
    model: &DynamicsModel,
    centers: &[Vec<f64>],
    noises: &[Vec<Vec<f64>>],
) -> Vec<f64> {
    let dim = model.network.input_dim();
    let mut data = Vec::new();
    for (x0, eps) in centers.iter().zip(noises) {
        data.extend_from_slice(x0);
        for e in eps {
            data.extend(x0.iter().zip(e).map(|(x, n)| x + n));
        }
    }
    let rows = data.len() / dim;
    let out = model.network.forward_batch(&Matrix::from_vec(rows, dim, data));
    let out_dim = out.cols();

    let mut result = Vec::with_capacity(centers.len());
    let mut row = 0;
    for eps in noises {
        let k = eps.len();
        let base = out.row(row);
        let mut total = 0.0;
        for j in 0..out_dim {
            let mut mean = 0.0;
            for i in 1..=k {
                mean += out.get(row + i, j) - base[j];
            }
            mean /= k as f64;
            let mut ss = 0.0;
            for i in 1..=k {
                let d = out.get(row + i, j) - base[j] - mean;
                ss += d * d;
            }
            total += ss / (k - 1) as f64;
        }
        result.push(total / out_dim as f64);
        row += k + 1;
    }
    result
}

fn build_targets(dataset: &OfflineDataset, predict_delta: bool) -> Matrix {
    let sd = dataset.state_dim;
    let mut y = Matrix::zeros(dataset.len(), sd + 2);
    for (i, t) in dataset.transitions.iter().enumerate() {
        let row = y.row_mut(i);
        for j in 0..sd {
            row[j] = if predict_delta { t.s_next[j] - t.s[j] } else { t.s_next[j] };
        }
        row[sd] = t.r;
        row[sd + 1] = t.combined_cost;
    }
    y
}

fn mse(pred: &Matrix, target: &Matrix) -> f64 {
    let n = pred.as_slice().len() as f64;
    pred.as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

/// Splits indices `0..n` into (train, validation) with a seeded shuffle.
pub(crate) fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(seed, &[stream::SPLIT]));
    if n < 2 {
        return (idx.clone(), idx);
    }
    let n_val = ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1);
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Fits the dynamics network by mini-batch MSE over all standardized
/// outputs; keeps the parameters with the best validation loss.
/// Mean squared error of `network` on standardized `targets` and its
/// gradient, written into `grad` (overwritten, not accumulated).
pub fn mse_loss_gradient(network: &Mlp, inputs: Matrix, targets: &Matrix, grad: &mut [f64]) -> f64 {
    let trace = network.trace(inputs);
    let pred = trace.output();
    let scale = 2.0 / pred.as_slice().len() as f64;
    let mut d_out = pred.clone();
    for (d, t) in d_out.as_mut_slice().iter_mut().zip(targets.as_slice()) {
        *d = (*d - t) * scale;
    }
    let loss = mse(pred, targets);
    grad.iter_mut().for_each(|g| *g = 0.0);
    network.backward(&trace, &d_out, grad, false);
    loss
}

pub fn train_dynamics(
    dataset: &OfflineDataset,
    config: &DynamicsConfig,
    seed: u64,
) -> Result<(DynamicsModel, DynamicsReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let sd = dataset.state_dim;
    let ad = dataset.action_dim;
    let norm = dataset.normalization.clone();
    let states = Matrix::from_rows(&dataset.transitions.iter().map(|t| t.s.as_slice()).collect::<Vec<_>>());
    let actions = Matrix::from_rows(&dataset.transitions.iter().map(|t| t.a.as_slice()).collect::<Vec<_>>());
    let inputs = Matrix::hcat(&norm.normalize_states(&states), &norm.normalize_actions(&actions));
    let raw_targets = build_targets(dataset, config.predict_delta);

    let (train_idx, val_idx) = split_indices(dataset.len(), config.validation_fraction, seed);
    let (target_mean, target_std) =
        mean_std_rows(train_idx.iter().map(|&i| raw_targets.row(i)), sd + 2);
    let mut targets = raw_targets.clone();
    for i in 0..targets.rows() {
        for (j, v) in targets.row_mut(i).iter_mut().enumerate() {
            *v = (*v - target_mean[j]) / target_std[j];
        }
    }

    let spec = MlpSpec::new(sd + ad, &config.hidden_dims, sd + 2);
    let mut network = Mlp::init(spec, &mut rng_from(seed, &[stream::INIT]));
    let mut adam = AdamState::new(network.params().len(), config.learning_rate);
    let val_x = inputs.select_rows(&val_idx);
    let val_y = targets.select_rows(&val_idx);

    let mut best = (f64::INFINITY, network.params().to_vec(), 0usize);
    let mut epochs = Vec::with_capacity(config.training_epochs);
    let mut order = train_idx.clone();
    let mut grad = vec![0.0; network.params().len()];
    for epoch in 0..config.training_epochs {
        order.shuffle(&mut rng_from(seed, &[stream::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = inputs.select_rows(chunk);
            let y = targets.select_rows(chunk);
            let loss = mse_loss_gradient(&network, x, &y, &mut grad);
            loss_sum += loss;
            batches += 1;
            adam.step(network.params_mut(), &grad).map_err(|e| {
                Error::divergence("dynamics training", format!("epoch {epoch}"), e.to_string())
            })?;
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        let val_loss = mse(&network.forward_batch(&val_x), &val_y);
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::divergence(
                "dynamics training",
                format!("epoch {epoch}"),
                format!("train loss {train_loss}, validation loss {val_loss}"),
            ));
        }
        if val_loss < best.0 {
            best = (val_loss, network.params().to_vec(), epoch);
        }
        epochs.push(DynamicsEpoch { epoch, train_loss, val_loss });
    }
    if config.training_epochs > 0 {
        network.params_mut().copy_from_slice(&best.1);
    }
    let model = DynamicsModel::from_parts(network, norm, target_mean, target_std, config.predict_delta)?;
    let heldout_state_rmse = state_rmse(&model, dataset, &val_idx);
    Ok((
        model,
        DynamicsReport {
            epochs,
            best_epoch: best.2,
            heldout_state_rmse,
        },
    ))
}

/// Next-state RMSE per dimension over `indices`, in units of the state std.
pub fn state_rmse(model: &DynamicsModel, dataset: &OfflineDataset, indices: &[usize]) -> Vec<f64> {
    let sd = dataset.state_dim;
    let pick = |f: &dyn Fn(&crate::dataset::Transition) -> &[f64]| {
        Matrix::from_rows(&indices.iter().map(|&i| f(&dataset.transitions[i])).collect::<Vec<_>>())
    };
    let states = pick(&|t| t.s.as_slice());
    let actions = pick(&|t| t.a.as_slice());
    let truth = pick(&|t| t.s_next.as_slice());
    let (pred, _, _) = model.predict_batch(&states, &actions);
    let std = &dataset.normalization.state_std;
    (0..sd)
        .map(|j| {
            let se: f64 = (0..indices.len())
                .map(|i| ((pred.get(i, j) - truth.get(i, j)) / std[j]).powi(2))
                .sum();
            (se / indices.len() as f64).sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Transition, OfflineDataset};
    use std::collections::BTreeMap;

    fn linear_dataset(n: usize) -> OfflineDataset {
        let mut rng = rng_from(5, &[]);
        use rand::Rng as _;
        let ts = (0..n)
            .map(|_| {
                let s = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let a = vec![rng.random_range(-1.0..1.0)];
                let s_next = vec![0.9 * s[0] + 0.1 * s[1] + 0.2 * a[0], -0.3 * s[0] + 0.8 * s[1]];
                Transition {
                    r: 1.0 + 0.1 * s[0] + 0.05 * a[0],
                    combined_cost: 0.5 + 0.2 * s[1],
                    cost_vector: vec![0.5 + 0.2 * s[1]],
                    s,
                    a,
                    s_next,
                    done: false,
                }
            })
            .collect();
        OfflineDataset::new(ts, 2, 1, 1, BTreeMap::new()).unwrap()
    }

    #[test]
    fn fits_a_linear_system() {
        let ds = linear_dataset(2000);
        let cfg = DynamicsConfig {
            hidden_dims: vec![],
            learning_rate: 1e-2,
            training_epochs: 60,
            batch_size: 64,
            ..DynamicsConfig::default()
        };
        let (model, report) = train_dynamics(&ds, &cfg, 1).unwrap();
        let (_, val) = split_indices(ds.len(), cfg.validation_fraction, 1);
        let rmse = state_rmse(&model, &ds, &val);
        // back to raw units
        for (r, s) in rmse.iter().zip(&ds.normalization.state_std) {
            assert!(r * s < 1e-3, "{rmse:?}");
        }
        assert_eq!(report.epochs.len(), 60);
    }

    #[test]
    fn single_record_is_reproduced() {
        let t = Transition {
            s: vec![0.3, -0.2],
            a: vec![0.5],
            r: 0.9,
            cost_vector: vec![0.1],
            combined_cost: 0.1,
            s_next: vec![0.35, -0.1],
            done: false,
        };
        let ds = OfflineDataset::new(vec![t.clone(); 64], 2, 1, 1, BTreeMap::new()).unwrap();
        let cfg = DynamicsConfig {
            hidden_dims: vec![16],
            learning_rate: 1e-2,
            training_epochs: 200,
            batch_size: 32,
            ..DynamicsConfig::default()
        };
        let (model, _) = train_dynamics(&ds, &cfg, 3).unwrap();
        let p = model.predict(&t.s, &t.a).unwrap();
        for (x, y) in p.next_state.iter().zip(&t.s_next) {
            assert!((x - y).abs() < 1e-3);
        }
        assert!((p.reward - 0.9).abs() < 1e-3);
        assert!((p.cost - 0.1).abs() < 1e-3);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = linear_dataset(300);
        let cfg = DynamicsConfig {
            hidden_dims: vec![8, 8],
            training_epochs: 3,
            batch_size: 32,
            ..DynamicsConfig::default()
        };
        let (a, ra) = train_dynamics(&ds, &cfg, 9).unwrap();
        let (b, rb) = train_dynamics(&ds, &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    fn zero_model() -> DynamicsModel {
        let net = Mlp::zeros(MlpSpec::new(3, &[4], 4));
        DynamicsModel::from_parts(
            net,
            NormalizationStats::identity(2, 1),
            vec![0.0; 4],
            vec![1.0; 4],
            true,
        )
        .unwrap()
    }

    #[test]
    fn zero_delta_keeps_the_state_and_floors_outputs() {
        let m = zero_model();
        let p = m.predict(&[0.4, -2.0], &[0.1]).unwrap();
        assert_eq!(p.next_state, vec![0.4, -2.0]);
        assert_eq!(p.reward, REWARD_FLOOR);
        assert_eq!(p.cost, 0.0);
        assert!(m.predict(&[0.4], &[0.1]).is_err());
        assert!(m.predict(&[0.4, f64::NAN], &[0.1]).is_err());
    }

    #[test]
    fn hand_set_weights_with_denormalization() {
        // linear net: out_j = sum_k W[k][j] x_k + b_j over inputs (s0, s1, a0)
        let spec = MlpSpec::new(3, &[], 4);
        let mut p = vec![0.0; spec.param_count()];
        // W is 3 x 4, row per input
        p[0] = 1.0; // s0 -> delta0
        p[4 + 1] = 2.0; // s1 -> delta1
        p[8 + 2] = 0.5; // a0 -> reward
        p[12 + 3] = 0.25; // bias of cost
        let net = Mlp::new(spec, p).unwrap();
        let norm = NormalizationStats {
            state_mean: vec![1.0, 0.0],
            state_std: vec![2.0, 1.0],
            action_mean: vec![0.0],
            action_std: vec![0.5],
            reward_mean: 0.0,
            reward_std: 1.0,
        };
        let m = DynamicsModel::from_parts(net, norm, vec![0.1, 0.0, 1.0, 0.0], vec![1.0, 3.0, 0.2, 2.0], true).unwrap();
        let s = [3.0, -1.0];
        let a = [0.25];
        let pred = m.predict(&s, &a).unwrap();
        // normalized input: (1.0, -1.0, 0.5); raw outputs (1.0, -2.0, 0.25, 0.25)
        assert!((pred.next_state[0] - (3.0 + 1.0 * 1.0 + 0.1)).abs() < 1e-12);
        assert!((pred.next_state[1] - (-1.0 + -2.0 * 3.0)).abs() < 1e-12);
        assert!((pred.reward - (0.25 * 0.2 + 1.0)).abs() < 1e-12);
        assert!((pred.cost - 0.5).abs() < 1e-12);
    }

    fn scalar_linear(w: f64) -> DynamicsModel {
        // input (s, a) with s,a scalars; every output = w * s
        let spec = MlpSpec::new(2, &[], 3);
        let mut p = vec![0.0; spec.param_count()];
        for j in 0..3 {
            p[j] = w;
        }
        DynamicsModel::from_parts(
            Mlp::new(spec, p).unwrap(),
            NormalizationStats::identity(1, 1),
            vec![0.0; 3],
            vec![1.0; 3],
            true,
        )
        .unwrap()
    }

    #[test]
    fn constant_model_has_zero_sensitivity() {
        let m = zero_model();
        for k in [2, 5, 20] {
            for sigma in [0.01, 1.0] {
                let cfg = SensitivityConfig { num_perturbations: k, noise_std: sigma };
                assert_eq!(sensitivity(&m, &[1.0, 2.0], &[0.3], &cfg, 7).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn pinned_noise_sample_variance() {
        let w = 1.7;
        let m = scalar_linear(w);
        let e1 = vec![0.3, -0.1];
        let e2 = vec![-0.2, 0.4];
        let u = sensitivity_with_noise(&m, &[0.5], &[0.1], &[e1.clone(), e2.clone()]).unwrap();
        let (y1, y2) = (w * e1[0], w * e2[0]);
        let mean = (y1 + y2) / 2.0;
        let expected = ((y1 - mean).powi(2) + (y2 - mean).powi(2)) / 1.0;
        assert!((u - expected).abs() < 1e-12);
    }

    #[test]
    fn doubling_sigma_quadruples_sensitivity() {
        let m = scalar_linear(0.8);
        let noises = sensitivity_noises(&m, &SensitivityConfig { num_perturbations: 10, noise_std: 0.01 }, 3);
        let doubled: Vec<Vec<f64>> = noises.iter().map(|e| e.iter().map(|v| 2.0 * v).collect()).collect();
        let u1 = sensitivity_with_noise(&m, &[0.2], &[0.0], &noises).unwrap();
        let u2 = sensitivity_with_noise(&m, &[0.2], &[0.0], &doubled).unwrap();
        assert!((u2 / u1 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn batch_matches_single_bitwise() {
        let ds = linear_dataset(200);
        let cfg = DynamicsConfig { hidden_dims: vec![8], training_epochs: 1, batch_size: 32, ..DynamicsConfig::default() };
        let (m, _) = train_dynamics(&ds, &cfg, 2).unwrap();
        let sc = SensitivityConfig::default();
        let ts = &ds.transitions[..13];
        let states = Matrix::from_rows(&ts.iter().map(|t| t.s.as_slice()).collect::<Vec<_>>());
        let actions = Matrix::from_rows(&ts.iter().map(|t| t.a.as_slice()).collect::<Vec<_>>());
        let seeds: Vec<u64> = (0..13).map(|i| 100 + i).collect();
        let batch = sensitivity_batch(&m, &states, &actions, &sc, &seeds);
        for (i, t) in ts.iter().enumerate() {
            let single = sensitivity(&m, &t.s, &t.a, &sc, seeds[i]).unwrap();
            assert_eq!(single.to_bits(), batch[i].to_bits());
            assert!(single >= 0.0);
        }
    }
}
