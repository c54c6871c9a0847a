use ovaib::synth::{generate, mixing_matrices, GeneratorSpec};

/// Sample cross-covariance of every modality pair against A_m A_m'^T,
/// entrywise in units of its own standard error.
#[test]
fn cross_covariance_flows_only_through_essence() {
    let spec = GeneratorSpec::uniform(3, 4, 3, 8, 0.2, 3, 17);
    let n = 10_000;
    let ds = generate(&spec, n).unwrap();
    let mix = mixing_matrices(&spec).unwrap();
    let mut worst: f64 = 0.0;
    for m in 0..3 {
        for k in 0..3 {
            if m == k {
                continue;
            }
            let want = mix[m].essence.matmul(&mix[k].essence.transpose()).unwrap();
            let (xm, xk) = (&ds.observations[m], &ds.observations[k]);
            for i in 0..xm.cols() {
                for j in 0..xk.cols() {
                    let prods: Vec<f64> = (0..n).map(|r| xm.get(r, i) * xk.get(r, j)).collect();
                    let mean = prods.iter().sum::<f64>() / n as f64;
                    let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    let se = (var / n as f64).sqrt();
                    worst = worst.max((mean - want.get(i, j)).abs() / se);
                }
            }
        }
    }
    assert!(worst < 5.0, "max deviation {worst} standard errors");
}

#[test]
fn labels_ignore_nuisance() {
    let spec = GeneratorSpec::uniform(3, 4, 3, 8, 0.2, 5, 3);
    let a = generate(&spec, 500).unwrap();
    let b = generate(
        &GeneratorSpec {
            nuisance_seed: Some(999),
            ..spec.clone()
        },
        500,
    )
    .unwrap();
    assert_ne!(a.nuisances, b.nuisances);
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.essence, b.essence);
}
