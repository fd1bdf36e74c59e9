use afm_core::afm::{generate_dataset, AfmArch, AfmModel, Pairing};
use afm_core::dynamics::{Dubins, InitTrainConfig, MemberArch};
use afm_core::nn::gradcheck::check_gradient;
use afm_core::nn::{gaussian_nll, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const PROBES: usize = 24;

fn probe_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..PROBES).map(|_| rng.random_range(0..n)).collect()
}

fn member_nll(net: &Mlp<f64>, xs: &[f64], ys: &[f64]) -> (f64, Vec<f64>) {
    let batch = xs.len() / 4;
    let tape = net.forward_tape(xs, batch).unwrap();
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(batch * 6);
    for (row, y) in tape.output().chunks_exact(6).zip(ys.chunks_exact(3)) {
        let out = gaussian_nll(&row[..3], &row[3..], y).unwrap();
        loss += out.loss;
        g.extend(out.d_mean);
        g.extend(out.d_log_var);
    }
    (loss, net.backward(&tape, &g).unwrap().params)
}

fn check_member(arch: MemberArch, seed: u64) {
    let cfg = InitTrainConfig {
        hidden: vec![16, 16],
        arch,
        ..InitTrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = match arch {
        MemberArch::Standard => Mlp::init(cfg.member_spec(), &mut rng).unwrap(),
        MemberArch::StreamX { sparsity } => Mlp::sparse_init(cfg.member_spec(), sparsity, &mut rng).unwrap(),
    };
    let xs: Vec<f64> = (0..4 * 6).map(|_| rng.random_range(-1.5..1.5)).collect();
    let ys: Vec<f64> = (0..3 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, analytic) = member_nll(&net, &xs, &ys);
    let mut params = net.params().to_vec();
    let probes = probe_indices(params.len(), &mut rng);
    let spec = net.spec().clone();
    let report = check_gradient(
        &mut params,
        &analytic,
        |p| member_nll(&Mlp::from_params(spec.clone(), p.to_vec()).unwrap(), &xs, &ys).0,
        &probes,
    );
    assert!(report.probes >= 20);
    assert!(report.passes(TOL), "{arch:?}: {report:?}");
}

#[test]
fn ensemble_member_nll_gradients() {
    check_member(MemberArch::Standard, 1);
}

#[test]
fn layer_normalized_member_nll_gradients() {
    check_member(MemberArch::StreamX { sparsity: 0.5 }, 2);
}

#[test]
fn flow_model_gradients_all_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let arch = AfmArch {
        regime_latent: 12,
        action_latent: 10,
        encoder_hidden: vec![16],
        flow_hidden: vec![24, 16, 16],
    };
    let model = AfmModel::init(&arch, &mut rng).unwrap();
    let batch = generate_dataset(&Dubins::new(0.75), 6, Pairing::Independent, &mut rng).unwrap();
    let taus: Vec<f64> = (0..batch.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let (_, grads) = model.cfm_loss_at(&batch, &taus).unwrap();
    let analytic = [grads.regime, grads.action, grads.flow];
    for (which, name) in ["regime encoder", "action encoder", "flow net"].iter().enumerate() {
        let mut params = model.clone().networks_mut()[which].params().to_vec();
        let probes = probe_indices(params.len(), &mut rng);
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
        assert!(report.passes(TOL), "{name}: {report:?}");
    }
}
