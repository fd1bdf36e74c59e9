//! The three-network flow model, its conditional flow matching loss and the
//! ODE-based action transform.
//!
//! Actions enter and leave the flow in normalized units (each component
//! divided by its bound), so the velocity field lives on `[-1, 1]^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{generate_dataset, CounterfactualSample, Pairing};
use crate::dynamics::{state_features, DynamicsModel, UgvAction, UgvState};
use crate::error::{check_len, Error, Result};
use crate::nn::snapshot::{check_header, MlpSnapshot, SNAPSHOT_VERSION};
use crate::nn::{Activation, Adam, Mlp, MlpSpec};
use crate::ode::midpoint_integrate;

pub const ACTION_DIM: usize = 2;
pub const ERROR_DIM: usize = 3;
/// `cos θ, sin θ`, planned action, error.
pub const REGIME_INPUT_DIM: usize = 2 + ACTION_DIM + ERROR_DIM;
/// `τ` and the current point on the path.
pub const ACTION_INPUT_DIM: usize = 1 + ACTION_DIM;
pub const AFM_FORMAT: &str = "afm.flow";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AfmArch {
    pub regime_latent: usize,
    pub action_latent: usize,
    pub encoder_hidden: Vec<usize>,
    pub flow_hidden: Vec<usize>,
}

impl Default for AfmArch {
    fn default() -> Self {
        Self {
            regime_latent: 64,
            action_latent: 64,
            encoder_hidden: vec![64],
            flow_hidden: vec![128, 64, 64],
        }
    }
}

impl AfmArch {
    fn specs(&self) -> [MlpSpec; 3] {
        let enc = |input: usize, out: usize| {
            let mut sizes = vec![input];
            sizes.extend(&self.encoder_hidden);
            sizes.push(out);
            MlpSpec::new(sizes, Activation::Elu)
        };
        let mut flow = vec![self.regime_latent + self.action_latent];
        flow.extend(&self.flow_hidden);
        flow.push(ACTION_DIM);
        [
            enc(REGIME_INPUT_DIM, self.regime_latent),
            enc(ACTION_INPUT_DIM, self.action_latent),
            MlpSpec::new(flow, Activation::Elu),
        ]
    }
}

/// Flat parameter gradients of the three networks.
#[derive(Clone, Debug, PartialEq)]
pub struct AfmGrads {
    pub regime: Vec<f64>,
    pub action: Vec<f64>,
    pub flow: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AfmModel {
    regime_encoder: Mlp<f64>,
    action_encoder: Mlp<f64>,
    flow_net: Mlp<f64>,
}

fn regime_input(s: &UgvState, a0: &UgvAction, e: &[f64; ERROR_DIM]) -> [f64; REGIME_INPUT_DIM] {
    let [c, si] = state_features(s);
    let [v, w] = a0.normalized();
    [c, si, v, w, e[0], e[1], e[2]]
}

impl AfmModel {
    pub fn new(
        regime_encoder: Mlp<f64>,
        action_encoder: Mlp<f64>,
        flow_net: Mlp<f64>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));
        if regime_encoder.input_dim() != REGIME_INPUT_DIM
            || action_encoder.input_dim() != ACTION_INPUT_DIM
        {
            return bad(format!(
                "encoders must take {REGIME_INPUT_DIM} and {ACTION_INPUT_DIM} inputs, got {} and {}",
                regime_encoder.input_dim(),
                action_encoder.input_dim()
            ));
        }
        let latent = regime_encoder.output_dim() + action_encoder.output_dim();
        if flow_net.input_dim() != latent || flow_net.output_dim() != ACTION_DIM {
            return bad(format!(
                "flow net must map {latent} latents to {ACTION_DIM} velocities, got {} -> {}",
                flow_net.input_dim(),
                flow_net.output_dim()
            ));
        }
        Ok(Self {
            regime_encoder,
            action_encoder,
            flow_net,
        })
    }

    pub fn init<R: Rng + ?Sized>(arch: &AfmArch, rng: &mut R) -> Result<Self> {
        let [d, t, f] = arch.specs();
        Self::new(Mlp::init(d, rng)?, Mlp::init(t, rng)?, Mlp::init(f, rng)?)
    }

    pub fn zeros(arch: &AfmArch) -> Result<Self> {
        let [d, t, f] = arch.specs();
        Self::new(Mlp::zeros(d)?, Mlp::zeros(t)?, Mlp::zeros(f)?)
    }

    pub fn regime_encoder(&self) -> &Mlp<f64> {
        &self.regime_encoder
    }

    pub fn action_encoder(&self) -> &Mlp<f64> {
        &self.action_encoder
    }

    pub fn flow_net(&self) -> &Mlp<f64> {
        &self.flow_net
    }

    pub fn networks_mut(&mut self) -> [&mut Mlp<f64>; 3] {
        [
            &mut self.regime_encoder,
            &mut self.action_encoder,
            &mut self.flow_net,
        ]
    }

    /// `Z_D` for one `(s, a0, e)`.
    pub fn encode_regime(
        &self,
        s: &UgvState,
        a0: &UgvAction,
        e: &[f64; ERROR_DIM],
    ) -> Result<Vec<f64>> {
        self.regime_encoder.forward(&regime_input(s, a0, e))
    }

    /// Velocity at `(tau, point)` for a fixed regime encoding. `point` is in
    /// normalized action units.
    pub fn velocity_with(&self, z_d: &[f64], tau: f64, point: &[f64]) -> Result<Vec<f64>> {
        check_len("flow point", ACTION_DIM, point.len())?;
        check_len(
            "regime encoding",
            self.regime_encoder.output_dim(),
            z_d.len(),
        )?;
        let z_t = self.action_encoder.forward(&[tau, point[0], point[1]])?;
        let mut joint = Vec::with_capacity(z_d.len() + z_t.len());
        joint.extend_from_slice(z_d);
        joint.extend(z_t);
        self.flow_net.forward(&joint)
    }

    pub fn velocity(
        &self,
        s: &UgvState,
        a0: &UgvAction,
        e: &[f64; ERROR_DIM],
        tau: f64,
        point: &[f64],
    ) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Contract(format!(
                "flow time must lie in [0, 1], got {tau}"
            )));
        }
        self.velocity_with(&self.encode_regime(s, a0, e)?, tau, point)
    }

    /// Integrates the flow from the planned action; unclamped, normalized
    /// units.
    pub fn transform_normalized(
        &self,
        s: &UgvState,
        a0: &UgvAction,
        e: &[f64; ERROR_DIM],
        n_steps: usize,
    ) -> Result<[f64; ACTION_DIM]> {
        let z_d = self.encode_regime(s, a0, e)?;
        let end = midpoint_integrate(
            |tau, x: &[f64]| self.velocity_with(&z_d, tau, x),
            &a0.normalized(),
            n_steps,
        )?;
        Ok([end[0], end[1]])
    }

    /// The corrected action, clamped to the action bounds.
    pub fn transform_action(
        &self,
        s: &UgvState,
        a0: &UgvAction,
        e: &[f64; ERROR_DIM],
        n_steps: usize,
    ) -> Result<UgvAction> {
        Ok(UgvAction::from_normalized(
            self.transform_normalized(s, a0, e, n_steps)?,
        ))
    }

    /// Mean squared velocity error over a batch at the given flow times,
    /// with gradients for all three networks.
    pub fn cfm_loss_at(
        &self,
        batch: &[CounterfactualSample],
        taus: &[f64],
    ) -> Result<(f64, AfmGrads)> {
        check_len("flow times", batch.len(), taus.len())?;
        if batch.is_empty() {
            return Err(Error::Contract(
                "flow matching loss needs a nonempty batch".into(),
            ));
        }
        let n = batch.len();
        let mut xd = Vec::with_capacity(n * REGIME_INPUT_DIM);
        let mut xt = Vec::with_capacity(n * ACTION_INPUT_DIM);
        let mut targets = Vec::with_capacity(n * ACTION_DIM);
        for (smp, &tau) in batch.iter().zip(taus) {
            xd.extend(regime_input(&smp.s, &smp.a0, &smp.e));
            let (x0, x1) = (smp.a0.normalized(), smp.a1.normalized());
            xt.push(tau);
            for d in 0..ACTION_DIM {
                xt.push((1.0 - tau) * x0[d] + tau * x1[d]);
                targets.push(x1[d] - x0[d]);
            }
        }
        let tape_d = self.regime_encoder.forward_tape(&xd, n)?;
        let tape_t = self.action_encoder.forward_tape(&xt, n)?;
        let (ld, lt) = (
            self.regime_encoder.output_dim(),
            self.action_encoder.output_dim(),
        );
        let mut joint = Vec::with_capacity(n * (ld + lt));
        for r in 0..n {
            joint.extend_from_slice(&tape_d.output()[r * ld..(r + 1) * ld]);
            joint.extend_from_slice(&tape_t.output()[r * lt..(r + 1) * lt]);
        }
        let tape_f = self.flow_net.forward_tape(&joint, n)?;
        let scale = 1.0 / (n * ACTION_DIM) as f64;
        let mut loss = 0.0;
        let mut g_out = Vec::with_capacity(n * ACTION_DIM);
        for (&p, &t) in tape_f.output().iter().zip(&targets) {
            let r = p - t;
            loss += r * r;
            g_out.push(2.0 * r * scale);
        }
        loss *= scale;
        let bp_f = self.flow_net.backward(&tape_f, &g_out)?;
        let mut g_d = Vec::with_capacity(n * ld);
        let mut g_t = Vec::with_capacity(n * lt);
        for row in bp_f.input.chunks_exact(ld + lt) {
            g_d.extend_from_slice(&row[..ld]);
            g_t.extend_from_slice(&row[ld..]);
        }
        let bp_d = self.regime_encoder.backward(&tape_d, &g_d)?;
        let bp_t = self.action_encoder.backward(&tape_t, &g_t)?;
        Ok((
            loss,
            AfmGrads {
                regime: bp_d.params,
                action: bp_t.params,
                flow: bp_f.params,
            },
        ))
    }

    /// Flow matching loss with `tau ~ U[0, 1)` drawn per sample.
    pub fn cfm_loss<R: Rng + ?Sized>(
        &self,
        batch: &[CounterfactualSample],
        rng: &mut R,
    ) -> Result<(f64, AfmGrads)> {
        let taus: Vec<f64> = (0..batch.len())
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        self.cfm_loss_at(batch, &taus)
    }

    pub fn to_document(&self) -> AfmDocument {
        AfmDocument {
            format: AFM_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            regime_encoder: self.regime_encoder.snapshot(),
            action_encoder: self.action_encoder.snapshot(),
            flow_net: self.flow_net.snapshot(),
        }
    }

    pub fn from_document(doc: AfmDocument) -> Result<Self> {
        check_header(&doc.format, doc.version, AFM_FORMAT)?;
        Self::new(
            Mlp::from_snapshot(doc.regime_encoder)?,
            Mlp::from_snapshot(doc.action_encoder)?,
            Mlp::from_snapshot(doc.flow_net)?,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

/// JSON checkpoint holding the three named networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AfmDocument {
    pub format: String,
    pub version: u32,
    pub regime_encoder: MlpSnapshot<f64>,
    pub action_encoder: MlpSnapshot<f64>,
    pub flow_net: MlpSnapshot<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AfmTrainConfig {
    pub iterations: usize,
    pub gen_chunk: usize,
    pub batch: usize,
    pub lr: f64,
    pub pairing: Pairing,
    pub arch: AfmArch,
}

impl Default for AfmTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            gen_chunk: 2048,
            batch: 256,
            lr: 0.01,
            pairing: Pairing::Independent,
            arch: AfmArch::default(),
        }
    }
}

impl AfmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch == 0 || self.gen_chunk < self.batch {
            return Err(Error::Config(
                "iterations and batch must be positive and gen_chunk at least one batch".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AfmTrainReport {
    /// Minibatch loss of every iteration.
    pub losses: Vec<f64>,
}

/// Streams counterfactual chunks from `f0` and takes one Adam step per
/// minibatch. Chunk `k` is generated from its own ChaCha stream so the
/// data does not depend on how training consumes randomness.
pub fn train_afm<M, R>(
    f0: &M,
    cfg: &AfmTrainConfig,
    rng: &mut R,
) -> Result<(AfmModel, AfmTrainReport)>
where
    M: DynamicsModel + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let mut model = AfmModel::init(&cfg.arch, rng)?;
    let data_seed: u64 = rng.random();
    let mut tau_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut opts: Vec<Adam<f64>> = model
        .networks_mut()
        .iter()
        .map(|n| Adam::new(n.num_params(), cfg.lr))
        .collect();
    let mut report = AfmTrainReport {
        losses: Vec::with_capacity(cfg.iterations),
    };
    let mut chunk_index = 0u64;
    'outer: loop {
        let mut chunk_rng = ChaCha8Rng::seed_from_u64(data_seed);
        chunk_rng.set_stream(chunk_index);
        chunk_index += 1;
        let chunk = generate_dataset(f0, cfg.gen_chunk, cfg.pairing, &mut chunk_rng)?;
        for batch in chunk.chunks_exact(cfg.batch) {
            let (loss, grads) = model.cfm_loss(batch, &mut tau_rng)?;
            let iteration = report.losses.len();
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "flow matching loss {loss} at iteration {iteration}"
                )));
            }
            let [d, t, f] = model.networks_mut();
            opts[0].step(d.params_mut(), &grads.regime)?;
            opts[1].step(t.params_mut(), &grads.action)?;
            opts[2].step(f.params_mut(), &grads.flow)?;
            report.losses.push(loss);
            if report.losses.len() == cfg.iterations {
                break 'outer;
            }
        }
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Dubins;
    use crate::nn::gradcheck::check_gradient;

    fn small_arch() -> AfmArch {
        AfmArch {
            regime_latent: 6,
            action_latent: 5,
            encoder_hidden: vec![8],
            flow_hidden: vec![10, 7],
        }
    }

    #[test]
    fn zero_flow_net_gives_zero_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = AfmModel::init(&AfmArch::default(), &mut rng).unwrap();
        model.flow_net.params_mut().fill(0.0);
        let v = model
            .velocity(
                &UgvState::new(1.0, 2.0, 0.3),
                &UgvAction::new(0.5, 0.2),
                &[0.1, -0.4, 0.2],
                0.3,
                &[0.1, 0.9],
            )
            .unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        let a0 = UgvAction::new(-0.7, 1.2);
        let a1 = model
            .transform_action(&UgvState::origin(), &a0, &[1.0, 0.0, 0.0], 10)
            .unwrap();
        assert!((a1.v() - a0.v()).abs() < 1e-15 && (a1.omega() - a0.omega()).abs() < 1e-15);
    }

    #[test]
    fn flow_time_outside_unit_interval_rejected() {
        let model = AfmModel::zeros(&small_arch()).unwrap();
        assert!(model
            .velocity(
                &UgvState::origin(),
                &UgvAction::zero(),
                &[0.0; 3],
                1.5,
                &[0.0, 0.0]
            )
            .is_err());
    }

    #[test]
    fn aligned_batch_with_zero_model_has_zero_loss() {
        let model = AfmModel::zeros(&small_arch()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = generate_dataset(&Dubins::new(1.0), 16, Pairing::IDENTITY, &mut rng).unwrap();
        let (loss, grads) = model.cfm_loss(&batch, &mut rng).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.flow.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn cfm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = AfmModel::init(&small_arch(), &mut rng).unwrap();
        let batch = generate_dataset(&Dubins::new(1.0), 5, Pairing::Independent, &mut rng).unwrap();
        let taus: Vec<f64> = (0..5).map(|i| 0.15 * i as f64 + 0.05).collect();
        let (_, grads) = model.cfm_loss_at(&batch, &taus).unwrap();
        let analytic = [grads.regime, grads.action, grads.flow];
        for which in 0..3 {
            let mut params = model.clone().networks_mut()[which].params().to_vec();
            let probes: Vec<usize> = (0..params.len()).step_by(params.len() / 20 + 1).collect();
            let report = check_gradient(
                &mut params,
                &analytic[which],
                |p| {
                    let mut m = model.clone();
                    m.networks_mut()[which].params_mut().copy_from_slice(p);
                    m.cfm_loss_at(&batch, &taus).unwrap().0
                },
                &probes,
            );
            assert!(report.passes(1e-4), "network {which}: {report:?}");
        }
    }

    #[test]
    fn training_lowers_held_out_loss_and_is_deterministic() {
        let f0 = Dubins::new(1.0);
        let cfg = AfmTrainConfig {
            iterations: 150,
            gen_chunk: 256,
            batch: 64,
            lr: 3e-3,
            arch: small_arch(),
            ..Default::default()
        };
        let mut held_rng = ChaCha8Rng::seed_from_u64(99);
        let held = generate_dataset(&f0, 512, Pairing::Independent, &mut held_rng).unwrap();
        let taus: Vec<f64> = (0..512).map(|i| i as f64 / 512.0).collect();

        let init = AfmModel::init(&cfg.arch, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let (trained, report) = train_afm(&f0, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(report.losses.len(), 150);
        let before = init.cfm_loss_at(&held, &taus).unwrap().0;
        let after = trained.cfm_loss_at(&held, &taus).unwrap().0;
        assert!(after < before, "{after} !< {before}");

        let (again, _) = train_afm(&f0, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(again, trained);
    }

    #[test]
    fn document_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = AfmModel::init(&small_arch(), &mut rng).unwrap();
        assert_eq!(
            AfmModel::from_json(&model.to_json().unwrap()).unwrap(),
            model
        );
        let wrong = model.to_json().unwrap().replace(AFM_FORMAT, "afm.ensemble");
        assert!(AfmModel::from_json(&wrong).is_err());
    }

    #[test]
    fn mismatched_networks_rejected() {
        let [d, t, _] = small_arch().specs();
        let bad_flow = MlpSpec::new(vec![4, 3, ACTION_DIM], Activation::Elu);
        assert!(AfmModel::new(
            Mlp::zeros(d).unwrap(),
            Mlp::zeros(t).unwrap(),
            Mlp::zeros(bad_flow).unwrap()
        )
        .is_err());
    }
}
