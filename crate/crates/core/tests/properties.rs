use proptest::prelude::*;
use salmap_core::derive::derive_nss_ig_map;
use salmap_core::io;
use salmap_core::metrics::{auc, auc_2afc_oracle, nss, sauc};
use salmap_core::probabilistic::{
    apply_fit, fit_conversion, model_density, OptimizerConfig, PiecewiseLinearFn, ProbabilisticModelFit,
};
use salmap_core::sampling::{sample_fixations, stream_rng};
use salmap_core::synthetic::{synthetic_dataset, DatasetConfig};
use salmap_core::{
    density_from_grid, equalize, DensityGrid, Fixation, FixationSet, Grid, GridShape, SaliencyGrid,
};

fn grid_strategy(max_side: usize) -> impl Strategy<Value = Grid> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(h, w)| {
        prop::collection::vec(0.0f64..1.0, h * w)
            .prop_map(move |v| Grid::new(GridShape::new(h, w).unwrap(), v).unwrap())
    })
}

/// A map with frequent ties and some fixations on it.
fn map_and_fixations() -> impl Strategy<Value = (SaliencyGrid, FixationSet)> {
    (1usize..=12, 1usize..=12).prop_flat_map(|(h, w)| {
        let values = prop::collection::vec(0u8..5, h * w);
        let fix = prop::collection::vec((0..h, 0..w), 1..30);
        (values, fix).prop_map(move |(v, f)| {
            let grid = Grid::new(GridShape::new(h, w).unwrap(), v.into_iter().map(f64::from).collect()).unwrap();
            (SaliencyGrid::new(grid).unwrap(), FixationSet::from_pairs(&f))
        })
    })
}

fn every_pixel(shape: GridShape) -> FixationSet {
    FixationSet::new(
        "",
        (0..shape.len())
            .map(|i| {
                let (r, c) = shape.position(i);
                Fixation::new(r, c)
            })
            .collect(),
    )
}

proptest! {
    #[test]
    fn auc_is_the_2afc_score((map, fix) in map_and_fixations()) {
        let all = every_pixel(map.shape());
        let a = auc(&map, &fix).unwrap().value;
        prop_assert!((a - auc_2afc_oracle(&map, &fix, &all).unwrap().value).abs() < 1e-12);
        prop_assert!((a - sauc(&map, &fix, &all).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn equalization_keeps_order_inside_unit_interval(g in grid_strategy(10)) {
        let m = SaliencyGrid::new(g).unwrap();
        let e = equalize(&m).unwrap();
        let (a, b) = (m.values(), e.values());
        prop_assert!(b.iter().all(|&v| v > 0.0 && v < 1.0));
        for i in 0..a.len() {
            for j in 0..a.len() {
                prop_assert_eq!(a[i] < a[j], b[i] < b[j]);
            }
        }
    }

    #[test]
    fn density_files_round_trip_bit_exact(g in grid_strategy(9)) {
        prop_assume!(g.sum() > 0.0);
        let d = density_from_grid(g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.sald");
        io::save_density(&path, &d).unwrap();
        let back = io::load_density(&path).unwrap();
        prop_assert!(back.values().iter().zip(d.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn density_maximizes_expected_nss((g, other) in (1usize..=4, 1usize..=4).prop_flat_map(|(h, w)| {
        let v = || prop::collection::vec(0.0f64..1.0, h * w);
        let shape = GridShape::new(h, w).unwrap();
        (v(), v()).prop_map(move |(a, b)| (Grid::new(shape, a).unwrap(), Grid::new(shape, b).unwrap()))
    })) {
        prop_assume!(g.sum() > 0.0);
        let d = density_from_grid(g).unwrap();
        let expected = |m: &SaliencyGrid| -> Option<f64> {
            let all = every_pixel(m.shape());
            all.iter()
                .zip(d.values())
                .map(|(f, p)| nss(m, &FixationSet::new("", vec![*f])).ok().map(|s| p * s.value))
                .sum()
        };
        let candidate = SaliencyGrid::new(other).unwrap();
        if let (Some(best), Some(c)) = (expected(&derive_nss_ig_map(&d)), expected(&candidate)) {
            prop_assert!(c <= best + 1e-12, "{c} > {best}");
        }
    }

    #[test]
    fn model_density_is_normalized(
        g in grid_strategy(8),
        nl in prop::collection::vec(0.0f64..3.0, 5),
        cb in prop::collection::vec(0.0f64..3.0, 4),
        alpha in 0.2f64..5.0,
    ) {
        let mut nl_knots = nl;
        nl_knots.sort_by(f64::total_cmp);
        let fit = ProbabilisticModelFit {
            nonlinearity: PiecewiseLinearFn::monotone(nl_knots).unwrap(),
            cb_profile: PiecewiseLinearFn::new(cb).unwrap(),
            alpha,
            map_min: 0.0,
            map_max: 1.0,
        };
        let d = model_density(&fit, &SaliencyGrid::new(g).unwrap()).unwrap();
        prop_assert!((d.as_grid().sum() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn uniform_sampling_converges() {
    let shape = GridShape::new(8, 8).unwrap();
    let n = 100_000;
    let counts = sample_fixations(&DensityGrid::uniform(shape), n, &mut stream_rng(5, 0, 0)).count_grid(shape);
    let l1: f64 = counts.iter().map(|c| (c / n as f64 - 1.0 / 64.0).abs()).sum();
    assert!(l1 < 3.0 * (64.0f64 / n as f64).sqrt(), "{l1}");
}

#[test]
fn conversion_fit_is_affine_invariant_with_monotone_knots() {
    let config = DatasetConfig {
        stimuli: 4,
        fixations_per_stimulus: 80,
        components: 2,
        center_spread: 0.15,
        min_sigma: 0.05,
        max_sigma: 0.15,
        background: 0.05,
        bandwidth: 0.22,
        seed: 3,
    };
    let shape = GridShape::new(20, 24).unwrap();
    let (densities, dataset) = synthetic_dataset(&config, shape).unwrap();
    let maps: Vec<SaliencyGrid> = densities
        .iter()
        .map(|d| SaliencyGrid::new(d.as_grid().map(f64::sqrt)).unwrap())
        .collect();
    let scaled: Vec<SaliencyGrid> =
        maps.iter().map(|m| SaliencyGrid::new(m.as_grid().map(|v| 7.5 * v - 2.0)).unwrap()).collect();
    let opt = OptimizerConfig::default();
    let a = fit_conversion(&maps, &dataset, 8, 6, &opt).unwrap();
    let b = fit_conversion(&scaled, &dataset, 8, 6, &opt).unwrap();
    assert!(a.nonlinearity.knots().windows(2).all(|w| w[0] <= w[1]));
    for (m, s) in maps.iter().zip(&scaled) {
        let (da, db) = (apply_fit(&a, m).unwrap(), apply_fit(&b, s).unwrap());
        let worst = da.values().iter().zip(db.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }
}
