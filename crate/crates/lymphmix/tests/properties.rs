//! Property-based invariants.

use lymphmix::domain::{load_dataset, write_dataset, Dataset, Field, Specimen, TissueCode, Vessel};
use lymphmix::ml::transform::{from_unconstrained, to_unconstrained, Bounds};
use lymphmix::model::poisson::{shifted_negbin_logpmf, shifted_poisson_logpmf};
use lymphmix::model::ParamKind;
use proptest::prelude::*;

fn arb_tissue() -> impl Strategy<Value = TissueCode> {
    prop_oneof![
        Just(TissueCode::ControlEctocervix),
        Just(TissueCode::ControlTransformationZone),
        Just(TissueCode::Cin1),
        Just(TissueCode::Cin2),
        Just(TissueCode::Cin3),
        Just(TissueCode::InvasiveCarcinoma),
    ]
}

fn arb_vessel() -> impl Strategy<Value = Vessel> {
    (1e-3f64..1e7, 1e-6f64..0.999999).prop_map(|(area, circularity)| Vessel { area, circularity })
}

prop_compose! {
    fn arb_specimen(id: usize)(
        tissue in arb_tissue(),
        n_fields in 1usize..5,
        vessels in prop::collection::vec(prop::collection::vec(arb_vessel(), 1..6), 5),
        plas in prop::collection::vec(-20.0f64..50.0, 5),
    ) -> Specimen {
        // control specimens may mix the two control regions; cases carry one
        // code, so reuse the drawn tissue for every field
        let fields = (0..n_fields)
            .map(|j| Field {
                field_id: format!("F{j}"),
                tissue,
                pla: plas[j],
                vessels: vessels[j].clone(),
            })
            .collect();
        Specimen { specimen_id: format!("S{id}"), fields }
    }
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec(any::<u8>(), 1..6).prop_flat_map(|ids| {
        let specs: Vec<_> = ids
            .iter()
            .enumerate()
            .map(|(i, _)| arb_specimen(i))
            .collect();
        specs.prop_map(|s| Dataset::new(s).expect("valid by construction"))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_stable(data in arb_dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let fp = dir.path().join("f.csv");
        let vp = dir.path().join("v.csv");
        write_dataset(&data, &fp, &vp).unwrap();
        let reloaded = load_dataset(&fp, &vp).unwrap();
        prop_assert_eq!(data.n_specimens(), reloaded.n_specimens());
        prop_assert_eq!(data.n_vessels(), reloaded.n_vessels());
        for ((_, f1), (_, f2)) in data.fields().zip(reloaded.fields()) {
            prop_assert_eq!(f1.tissue, f2.tissue);
            prop_assert!((f1.pla - f2.pla).abs() <= 1e-5 * f1.pla.abs().max(1e-3));
            for (v1, v2) in f1.vessels.iter().zip(&f2.vessels) {
                prop_assert!((v1.area - v2.area).abs() <= 1e-5 * v1.area);
            }
        }
        // idempotence after the first rounding
        let fp2 = dir.path().join("f2.csv");
        let vp2 = dir.path().join("v2.csv");
        write_dataset(&reloaded, &fp2, &vp2).unwrap();
        prop_assert_eq!(std::fs::read(&fp).unwrap(), std::fs::read(&fp2).unwrap());
        prop_assert_eq!(std::fs::read(&vp).unwrap(), std::fs::read(&vp2).unwrap());
    }

    #[test]
    fn shifted_poisson_normalizes(mu in 0.01f64..30.0) {
        let cap = (mu + 12.0 * mu.sqrt() + 60.0) as u64;
        let total: f64 = (1..=cap)
            .map(|n| shifted_poisson_logpmf(n, mu).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "mu={mu} total={total}");
    }

    #[test]
    fn shifted_negbin_normalizes(mu in 0.05f64..10.0, kappa in 0.2f64..50.0) {
        let var = mu + mu * mu / kappa;
        let cap = (mu + 40.0 * var.sqrt() + 200.0) as u64;
        let total: f64 = (1..=cap)
            .map(|n| shifted_negbin_logpmf(n, mu, kappa).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-8, "mu={mu} kappa={kappa} total={total}");
    }

    #[test]
    fn reparameterization_round_trips(
        fe in -50.0f64..50.0,
        v in 1e-8f64..1e6,
        lam in -9.99f64..9.99,
        rho in -0.949f64..0.949,
    ) {
        let b = Bounds::default();
        for (kind, x) in [
            (ParamKind::FixedEffect, fe),
            (ParamKind::Variance, v),
            (ParamKind::Dispersion, v),
            (ParamKind::VarianceMultiplier, v),
            (ParamKind::Loading, lam),
            (ParamKind::Correlation, rho),
        ] {
            let u = to_unconstrained(kind, x, &b);
            let back = from_unconstrained(kind, u, &b);
            let tol = 1e-12 * x.abs().max(1.0);
            prop_assert!((back - x).abs() <= tol, "{kind:?}: {x} -> {u} -> {back}");
        }
    }

    #[test]
    fn quantiles_are_order_statistics(mut values in prop::collection::vec(-1e6f64..1e6, 1..200), p in 0.0f64..1.0) {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = lymphmix::stats::quantile(&values, p);
        prop_assert!(values.contains(&q));
        prop_assert!(q >= values[0] && q <= values[values.len() - 1]);
    }
}
