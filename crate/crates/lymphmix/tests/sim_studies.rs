//! Simulation moment oracles and determinism contracts.

use lymphmix::domain::{Dataset, TissueCode};
use lymphmix::model::{FamilyKind, ModelSpec, ParamVector};
use lymphmix::sim::design::DesignPreset;
use lymphmix::sim::presets::reference_truth;
use lymphmix::sim::{simulate_dataset, TrueParams};
use lymphmix::stats::{mean, pearson_corr, sample_var};

fn joint_truth_with(f: impl FnOnce(&mut ParamVector)) -> TrueParams {
    let mut truth = reference_truth(FamilyKind::Joint);
    f(&mut truth.theta);
    truth
}

#[test]
fn zero_variance_collapse() {
    // variances near zero, loadings zero, beta zero, count intercept ln 2:
    // every field has E[N] = 3 and log areas equal the area intercept
    let truth = joint_truth_with(|t| {
        t.alpha = 1.5;
        t.beta = [0.0; 3];
        t.alpha_n = Some(2.0f64.ln());
        t.beta_n = Some([0.0; 3]);
        t.lambda_a = Some(0.0);
        t.lambda_n = Some(0.0);
        t.nu2 = Some(1e-12);
        t.sigma2 = Some(1e-12);
        t.rho = Some(0.0);
    });
    let design = DesignPreset::balanced(50, 5);
    let data = simulate_dataset(&truth, &design, 11).unwrap();

    let counts: Vec<f64> = data.fields().map(|(_, f)| f.lvd() as f64).collect();
    let m = mean(&counts);
    let se = (sample_var(&counts) / counts.len() as f64).sqrt();
    assert!((m - 3.0).abs() < 3.0 * se.max(0.01), "mean N = {m}");

    for (_, f) in data.fields() {
        for v in &f.vessels {
            assert!(
                (v.log_area() - 1.5).abs() < 1e-4,
                "log area {}",
                v.log_area()
            );
        }
    }
}

#[test]
fn simulation_is_deterministic_and_thread_independent() {
    for kind in [FamilyKind::Joint, FamilyKind::CircHet, FamilyKind::PlaLmm] {
        let truth = reference_truth(kind);
        let design = DesignPreset::study_default();
        let a = simulate_dataset(&truth, &design, 7).unwrap();
        let b = simulate_dataset(&truth, &design, 7).unwrap();
        assert_eq!(a, b, "{kind:?} not reproducible");

        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let c = pool1.install(|| simulate_dataset(&truth, &design, 7).unwrap());
        let d = pool4.install(|| simulate_dataset(&truth, &design, 7).unwrap());
        assert_eq!(c, d, "{kind:?} differs across thread counts");
        assert_eq!(a, c);
    }
}

#[test]
fn joint_reference_moment_oracle() {
    // group ratios of (mean LVD - 1) track exp(beta_n) across replicates,
    // and specimen-level mean log-area correlates negatively with LVD
    let truth = reference_truth(FamilyKind::Joint);
    let design = DesignPreset::study_default();
    let reps = 200;

    let beta_n = truth.theta.beta_n.unwrap();
    let mut ratios: Vec<[f64; 3]> = Vec::with_capacity(reps);
    let mut corrs = Vec::with_capacity(reps);
    for rep in 0..reps {
        let data = simulate_dataset(&truth, &design, 1000 + rep as u64).unwrap();
        let mut sums = [0.0f64; 4];
        let mut counts = [0usize; 4];
        let mut spec_area = Vec::new();
        let mut spec_lvd = Vec::new();
        for s in data.specimens() {
            let mut la = Vec::new();
            let mut lvd = Vec::new();
            for f in &s.fields {
                let g = f.tissue.coarse().index();
                sums[g] += (f.lvd() - 1) as f64;
                counts[g] += 1;
                lvd.push(f.lvd() as f64);
                for v in &f.vessels {
                    la.push(v.log_area());
                }
            }
            spec_area.push(mean(&la));
            spec_lvd.push(mean(&lvd));
        }
        let gm = |g: usize| sums[g] / counts[g] as f64;
        ratios.push([gm(1) / gm(0), gm(2) / gm(0), gm(3) / gm(0)]);
        corrs.push(pearson_corr(&spec_area, &spec_lvd));
    }

    for k in 0..3 {
        let vals: Vec<f64> = ratios.iter().map(|r| r[k]).collect();
        let m = mean(&vals);
        let se = (sample_var(&vals) / reps as f64).sqrt();
        let target = beta_n[k].exp();
        assert!(
            (m - target).abs() < 3.0 * se,
            "ratio {k}: {m} vs {target} (se {se})"
        );
    }
    let mean_corr = mean(&corrs);
    assert!(mean_corr < -0.3, "specimen-level correlation {mean_corr}");
    let neg_share = corrs.iter().filter(|c| **c < 0.0).count() as f64 / reps as f64;
    assert!(neg_share > 0.95, "negative in {neg_share} of replicates");
}

#[test]
fn rho_zero_gives_uncorrelated_specimen_effects() {
    // crude per-specimen effect estimates from the two outcomes decorrelate
    // when rho = 0
    let truth = joint_truth_with(|t| {
        t.rho = Some(0.0);
        t.lambda_a = Some(0.6);
        t.lambda_n = Some(-0.5);
    });
    let design = DesignPreset::single_group(10_000, TissueCode::ControlEctocervix, 6);
    let data = simulate_dataset(&truth, &design, 21).unwrap();

    let mut a_hat = Vec::new();
    let mut n_hat = Vec::new();
    for s in data.specimens() {
        let la: Vec<f64> = s
            .fields
            .iter()
            .flat_map(|f| f.vessels.iter().map(|v| v.log_area()))
            .collect();
        let counts: Vec<f64> = s.fields.iter().map(|f| (f.lvd() - 1) as f64).collect();
        a_hat.push(mean(&la));
        n_hat.push(mean(&counts).max(0.05).ln());
    }
    let r = pearson_corr(&a_hat, &n_hat);
    assert!(r.abs() < 0.05, "correlation {r}");
}

#[test]
fn heteroscedastic_variance_ratios_converge() {
    // per-group variance of group-centered logit circularity, relative to
    // the carcinoma group, approaches the delta-weighted targets
    let mut truth = reference_truth(FamilyKind::CircHet);
    truth.theta.tau2 = Some(0.05);
    truth.theta.nu2 = Some(0.13);
    truth.theta.sigma2 = Some(0.95);
    let delta = [0.85, 0.98, 0.91, 1.0];
    truth.theta.delta = Some(delta[..3].to_vec());

    // at least 1e5 vessels per group (the ectocervix group has the
    // smallest counts, around 2.3 vessels per field)
    let design = DesignPreset::balanced(1750, 25);
    let data = simulate_dataset(&truth, &design, 33).unwrap();

    let mut values: [Vec<f64>; 4] = [vec![], vec![], vec![], vec![]];
    for (_, f) in data.fields() {
        let g = f.tissue.coarse().index();
        for v in &f.vessels {
            values[g].push(v.logit_circularity());
        }
    }
    let (tau2, nu2, sigma2) = (0.05, 0.13, 0.95);
    let var_carc = sample_var(&values[3]);
    for g in 0..3 {
        assert!(values[g].len() > 90_000, "group {g}: {}", values[g].len());
        let ratio = sample_var(&values[g]) / var_carc;
        let target = (tau2 + delta[g] * nu2 + sigma2) / (tau2 + nu2 + sigma2);
        assert!(
            (ratio / target - 1.0).abs() < 0.10,
            "group {g}: ratio {ratio} target {target}"
        );
    }
}

#[test]
fn joint_log_area_variance_moment() {
    // within one group, Var(log area) = lambda_a^2 + nu2 + sigma2
    let truth = reference_truth(FamilyKind::Joint);
    let design = DesignPreset::single_group(3000, TissueCode::ControlEctocervix, 5);
    let data = simulate_dataset(&truth, &design, 55).unwrap();
    let la: Vec<f64> = data
        .fields()
        .flat_map(|(_, f)| f.vessels.iter().map(|v| v.log_area()))
        .collect();
    let target = 0.25 * 0.25 + 0.19 + 1.01;
    let got = sample_var(&la);
    assert!(
        (got / target - 1.0).abs() < 0.05,
        "variance {got} vs {target}"
    );
}

#[test]
fn round_trip_through_csv() {
    // a simulated study-design dataset written then reloaded reproduces the
    // dataset (values at the declared 6-significant-digit precision)
    let truth = reference_truth(FamilyKind::Joint);
    let data = simulate_dataset(&truth, &DesignPreset::study_default(), 99).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let fp = dir.path().join("fields.csv");
    let vp = dir.path().join("vessels.csv");
    lymphmix::domain::write_dataset(&data, &fp, &vp).unwrap();
    let reloaded = lymphmix::domain::load_dataset(&fp, &vp).unwrap();

    assert_eq!(data.n_specimens(), reloaded.n_specimens());
    assert_eq!(data.n_fields(), reloaded.n_fields());
    assert_eq!(data.n_vessels(), reloaded.n_vessels());
    for (s1, s2) in data.specimens().iter().zip(reloaded.specimens()) {
        assert_eq!(s1.specimen_id, s2.specimen_id);
        for (f1, f2) in s1.fields.iter().zip(&s2.fields) {
            assert_eq!(f1.field_id, f2.field_id);
            assert_eq!(f1.tissue, f2.tissue);
            assert!((f1.pla - f2.pla).abs() <= 1e-5 * f1.pla.abs().max(1.0));
            for (v1, v2) in f1.vessels.iter().zip(&f2.vessels) {
                assert!((v1.area - v2.area).abs() <= 1e-5 * v1.area);
                assert!((v1.circularity - v2.circularity).abs() <= 1e-5);
            }
        }
    }

    // writing the reloaded dataset is byte-identical (idempotent rounding)
    let fp2 = dir.path().join("fields2.csv");
    let vp2 = dir.path().join("vessels2.csv");
    lymphmix::domain::write_dataset(&reloaded, &fp2, &vp2).unwrap();
    assert_eq!(std::fs::read(&fp).unwrap(), std::fs::read(&fp2).unwrap());
    assert_eq!(std::fs::read(&vp).unwrap(), std::fs::read(&vp2).unwrap());
}

#[test]
fn summarize_group_lvd_matches_generating_mean() {
    // large dataset from the count model with known mu: group mean LVD is
    // within 3 Monte Carlo standard errors of 1 + mu
    let truth = reference_truth(FamilyKind::LvdPois);
    let design = DesignPreset::single_group(4000, TissueCode::ControlEctocervix, 4);
    let data = simulate_dataset(&truth, &design, 77).unwrap();
    let table = lymphmix::domain::summarize(&data).unwrap();
    let g = &table.by_code[0];
    // E[N] = 1 + exp(alpha) * E[exp(a)] with a ~ N(0, tau2)
    let target = 1.0 + 1.34 * (0.03f64 / 2.0).exp();
    let se = g.lvd.sd.unwrap() / (g.lvd.n as f64).sqrt();
    assert!(
        (g.lvd.mean - target).abs() < 3.0 * se,
        "mean {} target {target} se {se}",
        g.lvd.mean
    );
}

#[test]
fn invalid_truth_rejected() {
    let mut truth = reference_truth(FamilyKind::Joint);
    truth.theta.nu2 = Some(-0.1);
    assert!(simulate_dataset(&truth, &DesignPreset::study_default(), 1).is_err());

    let mut truth = reference_truth(FamilyKind::Joint);
    truth.theta.rho = Some(0.99);
    assert!(simulate_dataset(&truth, &DesignPreset::study_default(), 1).is_err());

    // constraint flags must match the family
    let bad = TrueParams {
        spec: ModelSpec::new(FamilyKind::PlaLmm).with_rho_zero(),
        theta: reference_truth(FamilyKind::PlaLmm).theta,
    };
    assert!(simulate_dataset(&bad, &DesignPreset::study_default(), 1).is_err());
}

#[test]
fn generated_counts_always_at_least_one() {
    let truth = joint_truth_with(|t| {
        t.alpha_n = Some(-3.0); // tiny Poisson rates
        t.beta_n = Some([0.0; 3]);
    });
    let data = simulate_dataset(&truth, &DesignPreset::study_default(), 5).unwrap();
    assert!(data.fields().all(|(_, f)| f.lvd() >= 1));
    let d2: Dataset = simulate_dataset(
        &reference_truth(FamilyKind::LvdNegBin),
        &DesignPreset::study_default(),
        6,
    )
    .unwrap();
    assert!(d2.fields().all(|(_, f)| f.lvd() >= 1));
}
