use jumpexp_core::calibration::{
    bootstrap, bootstrap_calibrate, model_vols, recalibrate, CalibConfig, Quote, VolSurface,
};
use jumpexp_core::fixtures::{eurusd_surface, reference_cev_model, EURUSD_MATURITIES, EURUSD_SPOT};
use jumpexp_core::{CevLocalVol, JumpParams, MarketEnv, ModelSpec, PiecewiseCurve};

const MATURITIES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
const STRIKES: [f64; 4] = [85.0, 95.0, 105.0, 120.0];

/// The reference model with ν and β averaged over groups of five buckets.
fn coarse_model() -> ModelSpec {
    let reference = reference_cev_model();
    let cev = reference.cev().unwrap();
    let avg = |c: &PiecewiseCurve| -> Vec<f64> { c.values().chunks(5).map(|w| w.iter().sum::<f64>() / 5.0).collect() };
    ModelSpec::log_aa(
        CevLocalVol::new(
            PiecewiseCurve::new(MATURITIES.to_vec(), avg(cev.nu())).unwrap(),
            PiecewiseCurve::new(MATURITIES.to_vec(), avg(cev.beta())).unwrap(),
        )
        .unwrap(),
        *reference.jumps(),
        reference.env().clone(),
    )
}

fn synthetic_surface(model: &ModelSpec) -> VolSurface {
    let grid: Vec<Quote> = MATURITIES
        .iter()
        .flat_map(|&t| {
            STRIKES.map(|k| Quote {
                maturity: t,
                strike: k,
                implied_vol: 0.2,
            })
        })
        .collect();
    let template = VolSurface::new(grid.clone(), model.env().clone()).unwrap();
    let vols = model_vols(model, &template).unwrap();
    let quotes = template
        .quotes()
        .zip(vols)
        .map(|(q, v)| Quote { implied_vol: v, ..q })
        .collect();
    VolSurface::new(quotes, model.env().clone()).unwrap()
}

fn fixed_jumps(j: &JumpParams) -> CalibConfig {
    CalibConfig {
        jump_init: [j.lambda(), j.eta(), j.gamma()],
        fit_jumps: false,
        ..Default::default()
    }
}

#[test]
fn synthetic_round_trip_with_jump_search() {
    let model = coarse_model();
    let surface = synthetic_surface(&model);
    let res = bootstrap_calibrate(&surface, &CalibConfig::default()).unwrap();
    eprintln!(
        "recovered jumps {:?} (true {:?}), max residual {:.4} bp in {:.2}s",
        res.jumps,
        model.jumps(),
        res.max_abs_residual_bp(),
        res.wall_time_secs
    );
    assert!(res.max_abs_residual_bp() <= 0.5, "{:?}", res.residuals);
    assert!(res.wall_time_secs < 10.0);

    let repriced = model_vols(&res.model().unwrap(), &surface).unwrap();
    for (r, v) in res.residuals.iter().zip(repriced) {
        assert!((r.model_vol - v).abs() <= 1e-10, "{r:?} vs {v}");
        assert!((r.residual_bp * 1e-4 - (v - r.market_vol)).abs() <= 1e-10);
    }
    assert!(res.trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", res.trace);
}

#[test]
fn exact_jumps_recover_bucket_parameters() {
    let model = coarse_model();
    let surface = synthetic_surface(&model);
    let res = bootstrap_calibrate(&surface, &fixed_jumps(model.jumps())).unwrap();
    assert!(res.max_abs_residual_bp() <= 0.5);
    let cev = model.cev().unwrap();
    for i in 0..4 {
        assert!((res.nu.values()[i] - cev.nu().values()[i]).abs() < 1e-6);
        assert!((res.beta.values()[i] - cev.beta().values()[i]).abs() < 1e-5);
    }
}

#[test]
fn changing_a_later_maturity_leaves_earlier_buckets_untouched() {
    let model = coarse_model();
    let surface = synthetic_surface(&model);
    let bumped = VolSurface::new(
        surface
            .quotes()
            .map(|q| {
                if q.maturity == MATURITIES[2] {
                    Quote {
                        implied_vol: q.implied_vol + 0.01 * (q.strike / 100.0),
                        ..q
                    }
                } else {
                    q
                }
            })
            .collect(),
        surface.env().clone(),
    )
    .unwrap();
    let cfg = fixed_jumps(&JumpParams::new(0.1, -0.05, 0.2).unwrap());
    let a = bootstrap(&surface, &JumpParams::new(0.1, -0.05, 0.2).unwrap(), &cfg, None).unwrap();
    let b = bootstrap(&bumped, &JumpParams::new(0.1, -0.05, 0.2).unwrap(), &cfg, None).unwrap();
    for k in 0..2 {
        assert_eq!(a.buckets[k].nu.to_bits(), b.buckets[k].nu.to_bits());
        assert_eq!(a.buckets[k].beta.to_bits(), b.buckets[k].beta.to_bits());
        assert_eq!(a.buckets[k].state, b.buckets[k].state);
    }
    assert_ne!(a.buckets[2].nu, b.buckets[2].nu);
}

#[test]
fn recalibrating_from_the_result_does_not_increase_the_objective() {
    let surface = eurusd_surface();
    let cfg = CalibConfig::default();
    let first = bootstrap_calibrate(&surface, &cfg).unwrap();
    let again = recalibrate(&surface, &cfg, &first).unwrap();
    assert!(
        again.objective <= first.objective * (1.0 + 1e-12),
        "{} > {}",
        again.objective,
        first.objective
    );
}

#[test]
fn market_surface_fits_within_ten_bp() {
    let res = bootstrap_calibrate(&eurusd_surface(), &CalibConfig::default()).unwrap();
    eprintln!(
        "jumps {:?} nu {:?} beta {:?} max {:.2} bp in {:.3}s",
        res.jumps,
        res.nu.values(),
        res.beta.values(),
        res.max_abs_residual_bp(),
        res.wall_time_secs
    );
    assert!(res.max_abs_residual_bp() <= 10.0);
    assert!(res.wall_time_secs <= 5.0);
    assert_eq!(res.residuals.len(), 16);
}

/// Benchmark EUR/USD parameters reprice the quote grid to the benchmark
/// residuals, which are quoted as market minus model.
#[test]
fn benchmark_parameters_reproduce_benchmark_residuals() {
    let benchmark_residuals_bp = [
        [-4.0, 3.0, -1.0, -3.0],
        [2.0, 1.0, 0.0, 2.0],
        [-1.0, -3.0, -2.0, 1.0],
        [2.0, -1.0, 1.0, 4.0],
    ];
    let model = ModelSpec::log_aa(
        CevLocalVol::new(
            PiecewiseCurve::new(EURUSD_MATURITIES.to_vec(), vec![0.1031, 0.1027, 0.0990, 0.0943]).unwrap(),
            PiecewiseCurve::new(EURUSD_MATURITIES.to_vec(), vec![0.9881, 1.0, 1.0, 1.0]).unwrap(),
        )
        .unwrap(),
        JumpParams::new(0.0121, -0.1907, 0.4030).unwrap(),
        MarketEnv::flat(EURUSD_SPOT, 0.0, 0.0).unwrap(),
    );
    let surface = eurusd_surface();
    let vols = model_vols(&model, &surface).unwrap();
    for (n, (q, v)) in surface.quotes().zip(vols).enumerate() {
        let ours = (v - q.implied_vol) * 1e4;
        let benchmark = benchmark_residuals_bp[n / 4][n % 4];
        assert!((ours + benchmark).abs() <= 2.0, "quote {n}: {ours:.2} vs {benchmark}");
    }
}

#[test]
fn black_scholes_surface_with_jumps_off() {
    // λ = 0, β = 1: bootstrap reduces to forward-variance stripping
    let env = MarketEnv::flat(100.0, 0.03, 0.01).unwrap();
    let nu = [0.18, 0.24, 0.2, 0.22];
    let model = ModelSpec::log_aa(
        CevLocalVol::new(
            PiecewiseCurve::new(MATURITIES.to_vec(), nu.to_vec()).unwrap(),
            PiecewiseCurve::constant(1.0),
        )
        .unwrap(),
        JumpParams::none(),
        env,
    );
    let surface = synthetic_surface(&model);
    let cfg = CalibConfig {
        jump_init: [0.0, 0.0, 0.0],
        ..fixed_jumps(&JumpParams::none())
    };
    let res = bootstrap_calibrate(&surface, &cfg).unwrap();
    assert!(res.max_abs_residual_bp() <= 0.1);
    for (i, &v) in nu.iter().enumerate() {
        assert!((res.nu.values()[i] - v).abs() < 1e-7);
    }
}
