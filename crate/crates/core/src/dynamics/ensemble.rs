//! Probabilistic ensemble over state deltas.
//!
//! Each member maps normalized `(cos θ, sin θ, v, ω)` to a Gaussian over the
//! normalized delta `(Δx, Δy, Δθ)`: the first three outputs are the mean,
//! the last three the log-variance. Planning uses the mean of the member
//! means.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dubins::unicycle_step;
use super::state::{
    state_diff, state_features, Transition, UgvAction, UgvState, DEFAULT_DT, OMEGA_MAX, V_MAX,
};
use super::DynamicsModel;
use crate::error::{check_len, Error, Result};
use crate::nn::snapshot::{check_header, MlpSnapshot, SNAPSHOT_VERSION};
use crate::nn::{gaussian_nll, Activation, Adam, Mlp, MlpSpec};

pub const INPUT_DIM: usize = 4;
pub const DELTA_DIM: usize = 3;
pub const ENSEMBLE_SIZE: usize = 5;
pub const ENSEMBLE_FORMAT: &str = "afm.ensemble";
/// Adam step size for per-transition updates during deployment.
pub const DEFAULT_ONLINE_LR: f64 = 0.01;
const STD_FLOOR: f64 = 1e-6;

/// Model inputs before normalization.
pub fn model_input(s: &UgvState, a: &UgvAction) -> [f64; INPUT_DIM] {
    let [c, si] = state_features(s);
    [c, si, a.v(), a.omega()]
}

/// Affine input/output scaling fixed at initial training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            input_mean: vec![0.0; INPUT_DIM],
            input_std: vec![1.0; INPUT_DIM],
            output_mean: vec![0.0; DELTA_DIM],
            output_std: vec![1.0; DELTA_DIM],
        }
    }

    fn validate(&self) -> Result<()> {
        check_len("normalizer input mean", INPUT_DIM, self.input_mean.len())?;
        check_len("normalizer input std", INPUT_DIM, self.input_std.len())?;
        check_len("normalizer output mean", DELTA_DIM, self.output_mean.len())?;
        check_len("normalizer output std", DELTA_DIM, self.output_std.len())?;
        let all = self
            .input_mean
            .iter()
            .chain(&self.input_std)
            .chain(&self.output_mean)
            .chain(&self.output_std);
        if all.clone().any(|v| !v.is_finite())
            || self
                .input_std
                .iter()
                .chain(&self.output_std)
                .any(|&s| s <= 0.0)
        {
            return Err(Error::Snapshot(
                "normalizer statistics must be finite with positive std".into(),
            ));
        }
        Ok(())
    }

    pub fn input(&self, raw: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        let mut out = [0.0; INPUT_DIM];
        for i in 0..INPUT_DIM {
            out[i] = (raw[i] - self.input_mean[i]) / self.input_std[i];
        }
        out
    }

    pub fn target(&self, delta: &[f64; DELTA_DIM]) -> [f64; DELTA_DIM] {
        let mut out = [0.0; DELTA_DIM];
        for i in 0..DELTA_DIM {
            out[i] = (delta[i] - self.output_mean[i]) / self.output_std[i];
        }
        out
    }

    pub fn delta(&self, normalized: &[f64]) -> [f64; DELTA_DIM] {
        let mut out = [0.0; DELTA_DIM];
        for i in 0..DELTA_DIM {
            out[i] = normalized[i] * self.output_std[i] + self.output_mean[i];
        }
        out
    }

    fn fit(inputs: &[[f64; INPUT_DIM]], targets: &[[f64; DELTA_DIM]]) -> Self {
        fn stats<const D: usize>(rows: &[[f64; D]]) -> (Vec<f64>, Vec<f64>) {
            let n = rows.len() as f64;
            let mean: Vec<f64> = (0..D)
                .map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n)
                .collect();
            let std = (0..D)
                .map(|d| {
                    let var = rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
                    var.sqrt().max(STD_FLOOR)
                })
                .collect();
            (mean, std)
        }
        let (input_mean, input_std) = stats(inputs);
        let (output_mean, output_std) = stats(targets);
        Self {
            input_mean,
            input_std,
            output_mean,
            output_std,
        }
    }
}

/// Member network layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MemberArch {
    /// Dense initialization, no normalization layers.
    Standard,
    /// Sparse initialization with parameter-free layer normalization.
    StreamX { sparsity: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitTrainConfig {
    pub n_samples: usize,
    pub batch: usize,
    pub max_epochs: usize,
    pub loss_tol: f64,
    /// Multiplicative action perturbation `±frac` applied before simulating
    /// each training transition (domain randomization).
    pub action_noise_frac: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub members: usize,
    pub dt: f64,
    pub arch: MemberArch,
}

impl Default for InitTrainConfig {
    fn default() -> Self {
        Self {
            n_samples: 50_000,
            batch: 256,
            max_epochs: 32,
            loss_tol: 1e-3,
            action_noise_frac: 0.0,
            lr: 1e-3,
            hidden: vec![200, 200],
            members: ENSEMBLE_SIZE,
            dt: DEFAULT_DT,
            arch: MemberArch::Standard,
        }
    }
}

impl InitTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_samples == 0 {
            return bad("n_samples must be positive: an empty dataset cannot train the ensemble");
        }
        if self.batch == 0 || self.max_epochs == 0 || self.members == 0 {
            return bad("batch, max_epochs and members must be positive");
        }
        if !(0.0..=1.0).contains(&self.action_noise_frac) {
            return bad("action_noise_frac must lie in [0, 1]");
        }
        if !(self.dt > 0.0) || !(self.lr > 0.0) || !(self.loss_tol >= 0.0) {
            return bad("dt and lr must be positive, loss_tol non-negative");
        }
        if let MemberArch::StreamX { sparsity } = self.arch {
            if !(0.0..1.0).contains(&sparsity) {
                return bad("stream-x sparsity must lie in [0, 1)");
            }
        }
        Ok(())
    }

    pub fn member_spec(&self) -> MlpSpec {
        let mut sizes = vec![INPUT_DIM];
        sizes.extend(&self.hidden);
        sizes.push(2 * DELTA_DIM);
        MlpSpec::new(sizes, Activation::LeakyRelu)
            .with_layer_norm(matches!(self.arch, MemberArch::StreamX { .. }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training NLL per epoch, per member.
    pub epoch_losses: Vec<Vec<f64>>,
}

/// Outcome of one online update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OnlineUpdate {
    /// Members whose gradient was non-finite and were left untouched.
    pub skipped_members: Vec<usize>,
    /// Mean member NLL on the transition before the update.
    pub loss_before: f64,
}

#[derive(Clone, Debug)]
pub struct EnsembleModel {
    members: Vec<Mlp<f64>>,
    norm: Option<Normalizer>,
    dt: f64,
    train_samples: u64,
    online_lr: f64,
    optimizers: Vec<Adam<f64>>,
    skipped_updates: u64,
}

impl EnsembleModel {
    pub fn new(members: Vec<Mlp<f64>>, norm: Option<Normalizer>, dt: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config(
                "an ensemble needs at least one member".into(),
            ));
        }
        let spec = members[0].spec().clone();
        if members.iter().any(|m| m.spec() != &spec) {
            return Err(Error::Config(
                "ensemble members must share one network spec".into(),
            ));
        }
        if spec.input_dim() != INPUT_DIM || spec.output_dim() != 2 * DELTA_DIM {
            return Err(Error::Config(format!(
                "member networks must map {INPUT_DIM} inputs to {} outputs",
                2 * DELTA_DIM
            )));
        }
        if let Some(n) = &norm {
            n.validate()?;
        }
        let online_lr = DEFAULT_ONLINE_LR;
        let optimizers = members
            .iter()
            .map(|m| Adam::new(m.num_params(), online_lr))
            .collect();
        Ok(Self {
            members,
            norm,
            dt,
            train_samples: 0,
            online_lr,
            optimizers,
            skipped_updates: 0,
        })
    }

    pub fn members(&self) -> &[Mlp<f64>] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Mlp<f64>] {
        &mut self.members
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.norm.as_ref()
    }

    pub fn set_normalizer(&mut self, norm: Normalizer) -> Result<()> {
        norm.validate()?;
        self.norm = Some(norm);
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn train_samples(&self) -> u64 {
        self.train_samples
    }

    pub fn uses_layer_norm(&self) -> bool {
        self.members[0].spec().layer_norm
    }

    pub fn skipped_updates(&self) -> u64 {
        self.skipped_updates
    }

    pub fn online_lr(&self) -> f64 {
        self.online_lr
    }

    /// Resets the per-member online optimizers with a new learning rate.
    pub fn set_online_lr(&mut self, lr: f64) {
        self.online_lr = lr;
        self.optimizers = self
            .members
            .iter()
            .map(|m| Adam::new(m.num_params(), lr))
            .collect();
    }

    pub(crate) fn optimizers_mut(&mut self) -> &mut [Adam<f64>] {
        &mut self.optimizers
    }

    fn norm(&self) -> Result<&Normalizer> {
        self.norm.as_ref().ok_or_else(|| {
            Error::Contract("ensemble normalization statistics are not populated".into())
        })
    }

    /// Mean over members of the predicted state delta.
    pub fn predict_delta(&self, s: &UgvState, a: &UgvAction) -> Result<[f64; DELTA_DIM]> {
        let norm = self.norm()?;
        let x = norm.input(&model_input(s, a));
        let mut acc = [0.0; DELTA_DIM];
        for m in &self.members {
            let out = m.forward(&x)?;
            for d in 0..DELTA_DIM {
                acc[d] += out[d];
            }
        }
        let k = self.members.len() as f64;
        for v in &mut acc {
            *v /= k;
        }
        Ok(norm.delta(&acc))
    }

    /// Per-member NLL of a transition and its parameter gradient, in
    /// normalized target units.
    pub(crate) fn member_nll_grad(
        member: &Mlp<f64>,
        x: &[f64; INPUT_DIM],
        y: &[f64; DELTA_DIM],
    ) -> Result<(f64, Vec<f64>)> {
        let tape = member.forward_tape(x, 1)?;
        let out = tape.output();
        let nll = gaussian_nll(&out[..DELTA_DIM], &out[DELTA_DIM..], y)?;
        let mut g = nll.d_mean;
        g.extend(nll.d_log_var);
        let bp = member.backward(&tape, &g)?;
        Ok((nll.loss, bp.params))
    }

    pub(crate) fn member_nll(
        member: &Mlp<f64>,
        x: &[f64; INPUT_DIM],
        y: &[f64; DELTA_DIM],
    ) -> Result<f64> {
        let out = member.forward(x)?;
        Ok(gaussian_nll(&out[..DELTA_DIM], &out[DELTA_DIM..], y)?.loss)
    }

    /// Mean member NLL of a transition under the frozen normalization.
    pub fn transition_nll(&self, t: &Transition) -> Result<f64> {
        let norm = self.norm()?;
        let x = norm.input(&model_input(&t.s, &t.a));
        let y = norm.target(&state_diff(&t.s_next, &t.s));
        let mut total = 0.0;
        for m in &self.members {
            total += Self::member_nll(m, &x, &y)?;
        }
        Ok(total / self.members.len() as f64)
    }

    /// One Adam step per member on the NLL of this single transition.
    /// Normalization statistics stay frozen.
    pub fn online_update(&mut self, t: &Transition) -> Result<OnlineUpdate> {
        if !t.is_finite() {
            return Err(Error::NonFinite("online update transition".into()));
        }
        let norm = self.norm()?;
        let x = norm.input(&model_input(&t.s, &t.a));
        let y = norm.target(&state_diff(&t.s_next, &t.s));
        self.update_normalized(&x, &y)
    }

    pub(crate) fn update_normalized(
        &mut self,
        x: &[f64; INPUT_DIM],
        y: &[f64; DELTA_DIM],
    ) -> Result<OnlineUpdate> {
        let mut report = OnlineUpdate::default();
        let mut total = 0.0;
        for (i, (m, opt)) in self
            .members
            .iter_mut()
            .zip(&mut self.optimizers)
            .enumerate()
        {
            let (loss, grad) = Self::member_nll_grad(m, x, y)?;
            total += loss;
            match opt.step(m.params_mut(), &grad) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => {
                    report.skipped_members.push(i);
                    self.skipped_updates += 1;
                }
                Err(e) => return Err(e),
            }
        }
        report.loss_before = total / self.members.len() as f64;
        Ok(report)
    }

    pub fn to_document(&self) -> Result<EnsembleDocument> {
        Ok(EnsembleDocument {
            format: ENSEMBLE_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            dt: self.dt,
            train_samples: self.train_samples,
            normalizer: self.norm()?.clone(),
            members: self.members.iter().map(|m| m.snapshot()).collect(),
        })
    }

    pub fn from_document(doc: EnsembleDocument) -> Result<Self> {
        check_header(&doc.format, doc.version, ENSEMBLE_FORMAT)?;
        let members = doc
            .members
            .into_iter()
            .map(Mlp::from_snapshot)
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self::new(members, Some(doc.normalizer), doc.dt)?;
        model.train_samples = doc.train_samples;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document()?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

impl DynamicsModel for EnsembleModel {
    fn predict(&self, s: &UgvState, a: &UgvAction) -> Result<UgvState> {
        Ok(s.apply_delta(&self.predict_delta(s, a)?))
    }

    fn predict_batch(&self, states: &[UgvState], actions: &[UgvAction]) -> Result<Vec<UgvState>> {
        check_len("ensemble batch actions", states.len(), actions.len())?;
        let norm = self.norm()?;
        let n = states.len();
        let mut x = Vec::with_capacity(n * INPUT_DIM);
        for (s, a) in states.iter().zip(actions) {
            x.extend_from_slice(&norm.input(&model_input(s, a)));
        }
        let mut acc = vec![0.0; n * DELTA_DIM];
        for m in &self.members {
            let out = m.forward_batch(&x, n)?;
            for (r, row) in out.chunks_exact(2 * DELTA_DIM).enumerate() {
                for d in 0..DELTA_DIM {
                    acc[r * DELTA_DIM + d] += row[d];
                }
            }
        }
        let k = self.members.len() as f64;
        Ok(states
            .iter()
            .zip(acc.chunks_exact(DELTA_DIM))
            .map(|(s, row)| {
                let mean: Vec<f64> = row.iter().map(|v| v / k).collect();
                s.apply_delta(&norm.delta(&mean))
            })
            .collect())
    }
}

/// JSON checkpoint of an ensemble: member networks in the MLP snapshot
/// layout plus the normalization statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDocument {
    pub format: String,
    pub version: u32,
    pub dt: f64,
    pub train_samples: u64,
    pub normalizer: Normalizer,
    pub members: Vec<MlpSnapshot<f64>>,
}

/// Supervised pairs `(model input, delta)` simulated with the analytic
/// model at the origin with uniform heading and uniform actions.
pub fn simulate_training_data<R: Rng + ?Sized>(
    n: usize,
    dt: f64,
    action_noise_frac: f64,
    rng: &mut R,
) -> (Vec<[f64; INPUT_DIM]>, Vec<[f64; DELTA_DIM]>) {
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let s = UgvState::new(
            0.0,
            0.0,
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let a = UgvAction::new(
            rng.random_range(-V_MAX..=V_MAX),
            rng.random_range(-OMEGA_MAX..=OMEGA_MAX),
        );
        let (mut v, mut w) = (a.v(), a.omega());
        if action_noise_frac > 0.0 {
            v *= 1.0 + rng.random_range(-action_noise_frac..=action_noise_frac);
            w *= 1.0 + rng.random_range(-action_noise_frac..=action_noise_frac);
        }
        let next = unicycle_step(&s, v, w, dt);
        inputs.push(model_input(&s, &a));
        targets.push(state_diff(&next, &s));
    }
    (inputs, targets)
}

/// Trains the initial ensemble on simulated transitions. Members differ in
/// initialization and data order.
pub fn pe_init_train<R: Rng + ?Sized>(
    cfg: &InitTrainConfig,
    rng: &mut R,
) -> Result<(EnsembleModel, TrainReport)> {
    cfg.validate()?;
    let (inputs, targets) =
        simulate_training_data(cfg.n_samples, cfg.dt, cfg.action_noise_frac, rng);
    let norm = Normalizer::fit(&inputs, &targets);
    let xs: Vec<[f64; INPUT_DIM]> = inputs.iter().map(|x| norm.input(x)).collect();
    let ys: Vec<[f64; DELTA_DIM]> = targets.iter().map(|y| norm.target(y)).collect();

    let spec = cfg.member_spec();
    let mut members = Vec::with_capacity(cfg.members);
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.members),
    };
    for k in 0..cfg.members {
        let mut member_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let mut net = match cfg.arch {
            MemberArch::Standard => Mlp::init(spec.clone(), &mut member_rng)?,
            MemberArch::StreamX { sparsity } => {
                Mlp::sparse_init(spec.clone(), sparsity, &mut member_rng)?
            }
        };
        let losses =
            train_member(&mut net, &xs, &ys, cfg, &mut member_rng).map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("ensemble member {k}: {msg}")),
                other => other,
            })?;
        report.epoch_losses.push(losses);
        members.push(net);
    }
    let mut model = EnsembleModel::new(members, Some(norm), cfg.dt)?;
    model.train_samples = cfg.n_samples as u64;
    Ok((model, report))
}

fn train_member(
    net: &mut Mlp<f64>,
    xs: &[[f64; INPUT_DIM]],
    ys: &[[f64; DELTA_DIM]],
    cfg: &InitTrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(net.num_params(), cfg.lr);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut losses = Vec::new();
    let mut batch_x = Vec::with_capacity(cfg.batch * INPUT_DIM);
    let mut out_grad = Vec::with_capacity(cfg.batch * 2 * DELTA_DIM);
    for epoch in 0..cfg.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            batch_x.clear();
            for &i in chunk {
                batch_x.extend_from_slice(&xs[i]);
            }
            let n = chunk.len();
            let tape = net.forward_tape(&batch_x, n)?;
            out_grad.clear();
            let mut batch_loss = 0.0;
            for (r, &i) in chunk.iter().enumerate() {
                let out = &tape.output()[r * 2 * DELTA_DIM..(r + 1) * 2 * DELTA_DIM];
                let nll = gaussian_nll(&out[..DELTA_DIM], &out[DELTA_DIM..], &ys[i])?;
                batch_loss += nll.loss;
                out_grad.extend(nll.d_mean.iter().map(|g| g / n as f64));
                out_grad.extend(nll.d_log_var.iter().map(|g| g / n as f64));
            }
            batch_loss /= n as f64;
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}: {batch_loss}"
                )));
            }
            let bp = net.backward(&tape, &out_grad)?;
            adam.step(net.params_mut(), &bp.params)?;
            epoch_loss += batch_loss * n as f64;
        }
        epoch_loss /= xs.len() as f64;
        let converged = losses
            .last()
            .is_some_and(|&prev: &f64| (prev - epoch_loss).abs() < cfg.loss_tol);
        losses.push(epoch_loss);
        if converged {
            break;
        }
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Dubins;

    fn zero_member() -> Mlp<f64> {
        Mlp::zeros(MlpSpec::new(
            vec![INPUT_DIM, 4, 2 * DELTA_DIM],
            Activation::LeakyRelu,
        ))
        .unwrap()
    }

    /// Member whose mean output is the constant `delta` (normalized units).
    fn constant_member(delta: [f64; 3]) -> Mlp<f64> {
        let mut m = zero_member();
        let out_bias = m.layers()[1].bias();
        m.params_mut()[out_bias.start..out_bias.start + 3].copy_from_slice(&delta);
        m
    }

    #[test]
    fn zero_prediction_keeps_state() {
        let model =
            EnsembleModel::new(vec![zero_member(); 5], Some(Normalizer::identity()), 1.0).unwrap();
        let s = UgvState::new(1.0, -2.0, 0.4);
        assert_eq!(model.predict(&s, &UgvAction::new(0.5, 0.2)).unwrap(), s);
    }

    #[test]
    fn identical_members_match_single() {
        let m = constant_member([0.2, -0.1, 0.05]);
        let five =
            EnsembleModel::new(vec![m.clone(); 5], Some(Normalizer::identity()), 1.0).unwrap();
        let one = EnsembleModel::new(vec![m], Some(Normalizer::identity()), 1.0).unwrap();
        let s = UgvState::new(0.0, 0.0, 1.0);
        let a = UgvAction::new(0.3, 0.1);
        let p5 = five.predict(&s, &a).unwrap();
        let p1 = one.predict(&s, &a).unwrap();
        assert!(
            (p5.x - p1.x).abs() < 1e-15
                && (p5.y - p1.y).abs() < 1e-15
                && (p5.theta - p1.theta).abs() < 1e-15
        );
    }

    #[test]
    fn mean_of_member_deltas() {
        let members = [0.1, 0.2, 0.3, 0.4, 0.5]
            .map(|dx| constant_member([dx, 0.0, 0.0]))
            .to_vec();
        let model = EnsembleModel::new(members, Some(Normalizer::identity()), 1.0).unwrap();
        let p = model
            .predict(&UgvState::origin(), &UgvAction::zero())
            .unwrap();
        assert!((p.x - 0.3).abs() < 1e-15 && p.y == 0.0 && p.theta == 0.0);
    }

    #[test]
    fn missing_normalization_is_a_contract_violation() {
        let model = EnsembleModel::new(vec![zero_member()], None, 1.0).unwrap();
        assert!(matches!(
            model.predict(&UgvState::origin(), &UgvAction::zero()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn batch_prediction_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = InitTrainConfig {
            n_samples: 300,
            max_epochs: 2,
            hidden: vec![16, 16],
            ..Default::default()
        };
        let (model, _) = pe_init_train(&cfg, &mut rng).unwrap();
        let states: Vec<UgvState> = (0..7)
            .map(|i| UgvState::new(i as f64, 0.5, i as f64 * 0.8))
            .collect();
        let actions: Vec<UgvAction> = (0..7)
            .map(|i| UgvAction::new(0.2 * i as f64 - 0.6, 0.3))
            .collect();
        let batch = model.predict_batch(&states, &actions).unwrap();
        for ((s, a), b) in states.iter().zip(&actions).zip(&batch) {
            let single = model.predict(s, a).unwrap();
            assert!((single.x - b.x).abs() < 1e-12 && (single.theta - b.theta).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = InitTrainConfig {
            n_samples: 0,
            ..Default::default()
        };
        assert!(matches!(
            pe_init_train(&cfg, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn training_data_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, y) = simulate_training_data(500, 1.0, 0.1, &mut rng);
        // |executed v| within 10% of commanded v, so |Δ position| <= 1.1 |v|
        for (xi, yi) in x.iter().zip(&y) {
            let moved = yi[0].hypot(yi[1]);
            assert!(moved <= 1.1 * xi[2].abs() + 1e-12);
            assert!(moved >= 0.9 * xi[2].abs() - 1e-12);
        }
    }

    #[test]
    fn repeated_transition_lowers_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = InitTrainConfig {
            n_samples: 500,
            max_epochs: 3,
            hidden: vec![32, 32],
            ..Default::default()
        };
        let (mut model, _) = pe_init_train(&cfg, &mut rng).unwrap();
        let s = UgvState::new(0.0, 0.0, 0.7);
        let a = UgvAction::new(0.8, -0.4);
        // unfamiliar outcome: the vehicle moved backwards
        let s_next = Dubins::new(1.0)
            .predict(&s, &UgvAction::new(-0.8, -0.4))
            .unwrap();
        let t = Transition { s, a, s_next };
        let initial = model.transition_nll(&t).unwrap();
        for _ in 0..10 {
            model.online_update(&t).unwrap();
        }
        assert!(model.transition_nll(&t).unwrap() < initial);
    }

    #[test]
    fn exact_prediction_with_clamped_variance_is_fixed_point() {
        // zero network predicts delta 0 with log-variance 0; lower the
        // log-variance bias below the clamp so the gradient vanishes
        let mut m = zero_member();
        let out_bias = m.layers()[1].bias();
        for p in &mut m.params_mut()[out_bias.start + 3..out_bias.end] {
            *p = -20.0;
        }
        let mut model = EnsembleModel::new(vec![m; 5], Some(Normalizer::identity()), 1.0).unwrap();
        let before: Vec<Vec<f64>> = model
            .members()
            .iter()
            .map(|m| m.params().to_vec())
            .collect();
        let s = UgvState::origin();
        let t = Transition {
            s,
            a: UgvAction::zero(),
            s_next: s,
        };
        model.online_update(&t).unwrap();
        let after: Vec<Vec<f64>> = model
            .members()
            .iter()
            .map(|m| m.params().to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn document_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = InitTrainConfig {
            n_samples: 200,
            max_epochs: 1,
            hidden: vec![8, 8],
            ..Default::default()
        };
        let (model, _) = pe_init_train(&cfg, &mut rng).unwrap();
        let back = EnsembleModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.members(), model.members());
        assert_eq!(back.normalizer(), model.normalizer());
        assert_eq!(back.train_samples(), 200);
        let text = model
            .to_json()
            .unwrap()
            .replace(ENSEMBLE_FORMAT, "afm.flow");
        assert!(EnsembleModel::from_json(&text).is_err());
    }
}
