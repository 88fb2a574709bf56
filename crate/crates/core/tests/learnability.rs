use ltkd_core::data::{
    class_stats, generate_synthetic, split, Dataset, GeneratorConfig, SplitRatios,
};
use ltkd_core::eval::average_precision;
use ltkd_core::subsets::{rank_by_count, tertile_boundaries};

/// Solves `(XᵀX + λI) w = Xᵀy` by Cholesky decomposition; the last column of
/// the design is a constant bias.
fn ridge(ds: &Dataset, class: usize, lambda: f64) -> Vec<f64> {
    let d = ds.d_in + 1;
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for inst in &ds.instances {
        let mut x = inst.features.clone();
        x.push(1.0);
        let y = if inst.labels[class] { 1.0 } else { 0.0 };
        for i in 0..d {
            b[i] += x[i] * y;
            for j in 0..d {
                a[i * d + j] += x[i] * x[j];
            }
        }
    }
    for i in 0..d {
        a[i * d + i] += lambda;
    }
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = a[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            l[i * d + j] = if i == j { s.sqrt() } else { s / l[j * d + j] };
        }
    }
    let mut z = vec![0.0; d];
    for i in 0..d {
        z[i] = (b[i] - (0..i).map(|k| l[i * d + k] * z[k]).sum::<f64>()) / l[i * d + i];
    }
    let mut w = vec![0.0; d];
    for i in (0..d).rev() {
        w[i] = (z[i] - (i + 1..d).map(|k| l[k * d + i] * w[k]).sum::<f64>()) / l[i * d + i];
    }
    w
}

#[test]
fn linear_probe_separates_head_classes() {
    for seed in [1, 2, 3] {
        let ds = generate_synthetic(&GeneratorConfig::default(), seed).unwrap();
        let s = split(&ds, SplitRatios::default(), seed).unwrap();
        let stats = class_stats(&s.train).unwrap();
        let ranked = rank_by_count(&stats.counts);
        let head = &ranked[..tertile_boundaries(ranked.len())[0]];
        for &c in head {
            let w = ridge(&s.train, c, 1.0);
            let scores: Vec<f64> = s
                .test
                .instances
                .iter()
                .map(|inst| {
                    inst.features
                        .iter()
                        .zip(&w)
                        .map(|(x, w)| x * w)
                        .sum::<f64>()
                        + w[ds.d_in]
                })
                .collect();
            let labels = s.test.class_column(c);
            let ap = average_precision(&scores, &labels).unwrap();
            assert!(ap > 0.9, "seed {seed} class {c}: probe AP {ap}");
        }
    }
}
