use ltkd_core::distill::{
    bce_batch, composite_loss, kd_loss, tempered_binary_softmax, KlDirection, LossOptions,
    Temperature,
};
use ltkd_core::nnet::{finite_diff_check, MlpNetwork, Tensor};
use ltkd_core::rng;
use rand::Rng;

const DIMS: [usize; 3] = [8, 16, 12];
const TEMPERATURES: [f64; 4] = [1.0, 3.0, 10.0, 20.0];

fn setup(seed: u64) -> (MlpNetwork, Tensor, Vec<bool>, Tensor, Vec<f64>) {
    let net = MlpNetwork::init(&DIMS, seed).unwrap();
    let rows = 5;
    let n = DIMS[2] / 2;
    let mut r = rng::stream(seed, "test/gradients");
    let batch = Tensor::new(
        vec![rows, DIMS[0]],
        (0..rows * DIMS[0])
            .map(|_| r.random_range(-2.0..2.0))
            .collect(),
    )
    .unwrap();
    let labels = (0..rows * n).map(|_| r.random_bool(0.3)).collect();
    let teacher = Tensor::new(
        vec![rows, 2 * n],
        (0..rows * 2 * n)
            .map(|_| r.random_range(-6.0..6.0))
            .collect(),
    )
    .unwrap();
    let weights = (0..n)
        .map(|c| {
            if c == 1 {
                0.0
            } else {
                r.random_range(0.0..=1.0)
            }
        })
        .collect();
    (net, batch, labels, teacher, weights)
}

/// Batch mean of the weighted KD term, summed directly.
fn kd_value(z: &Tensor, teacher: &Tensor, weights: &[f64], opts: &LossOptions) -> f64 {
    let mut total = 0.0;
    for r in 0..z.rows() {
        for (c, w) in weights.iter().enumerate() {
            let s = tempered_binary_softmax(z.row(r)[2 * c], z.row(r)[2 * c + 1], opts.temperature);
            let q = tempered_binary_softmax(
                teacher.row(r)[2 * c],
                teacher.row(r)[2 * c + 1],
                opts.temperature,
            );
            total += w * match opts.direction {
                KlDirection::StudentFirst => kd_loss(s, q),
                KlDirection::TeacherFirst => kd_loss(q, s),
            };
        }
    }
    total / z.rows() as f64
}

#[test]
fn bce_matches_finite_differences() {
    for seed in 0..3 {
        let (net, batch, labels, _, _) = setup(seed);
        let err = finite_diff_check(&net, &batch, |z| bce_batch(z, &labels).unwrap()).unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn kd_term_alone_matches_finite_differences() {
    for direction in [KlDirection::StudentFirst, KlDirection::TeacherFirst] {
        for t in TEMPERATURES {
            let (net, batch, labels, teacher, weights) = setup(11);
            let opts = LossOptions {
                direction,
                ..LossOptions::new(Temperature::new(t).unwrap())
            };
            let bce_only = |z: &Tensor| bce_batch(z, &labels).unwrap();
            let kd_only = |z: &Tensor| {
                let (_, g_full) =
                    composite_loss(z, &labels, Some(&teacher), &weights, &opts).unwrap();
                let (_, g_b) = bce_only(z);
                let g: Vec<f64> = g_full
                    .values()
                    .iter()
                    .zip(g_b.values())
                    .map(|(a, b)| a - b)
                    .collect();
                (
                    kd_value(z, &teacher, &weights, &opts),
                    Tensor::new(g_full.shape().to_vec(), g).unwrap(),
                )
            };
            let err = finite_diff_check(&net, &batch, kd_only).unwrap();
            assert!(err < 1e-4, "{direction:?} T={t}: {err}");
        }
    }
}

#[test]
fn composite_matches_finite_differences_for_all_temperatures() {
    for t in TEMPERATURES {
        for scale in [false, true] {
            let (net, batch, labels, teacher, weights) = setup(t as u64);
            let opts = LossOptions {
                scale_by_t_squared: scale,
                ..LossOptions::new(Temperature::new(t).unwrap())
            };
            let err = finite_diff_check(&net, &batch, |z| {
                composite_loss(z, &labels, Some(&teacher), &weights, &opts).unwrap()
            })
            .unwrap();
            assert!(err < 1e-4, "T={t} scaled={scale}: {err}");
        }
    }
}

#[test]
fn two_hidden_layers_match_finite_differences() {
    let net = MlpNetwork::init(&[8, 16, 16, 12], 4).unwrap();
    let (_, batch, labels, teacher, weights) = setup(4);
    let opts = LossOptions::new(Temperature::new(3.0).unwrap());
    let err = finite_diff_check(&net, &batch, |z| {
        composite_loss(z, &labels, Some(&teacher), &weights, &opts).unwrap()
    })
    .unwrap();
    assert!(err < 1e-4, "{err}");
}
