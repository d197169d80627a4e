use jumpexp_core::analytic::{implied_vol, DealTerms};
use jumpexp_core::fixtures::{reference_cev_model, REFERENCE_RELATIVE_STRIKES};
use jumpexp_core::{approx_price, CevLocalVol, JumpParams, MarketEnv, ModelSpec, Payoff, PiecewiseCurve};

fn smile(model: &ModelSpec, t: f64) -> Vec<f64> {
    let spot = model.env().spot();
    let forward = model.env().forward(t);
    REFERENCE_RELATIVE_STRIKES
        .iter()
        .map(|k| {
            let strike = spot * k;
            let p = if strike < forward {
                Payoff::put(strike, t)
            } else {
                Payoff::call(strike, t)
            }
            .unwrap();
            let price = approx_price(model, &p).unwrap().total;
            implied_vol(price, &DealTerms::new(model, p), forward).unwrap()
        })
        .collect()
}

fn cev(nu: f64, beta: f64, jumps: JumpParams) -> ModelSpec {
    ModelSpec::log_aa(
        CevLocalVol::new(PiecewiseCurve::constant(nu), PiecewiseCurve::constant(beta)).unwrap(),
        jumps,
        MarketEnv::flat(100.0, 0.02, 0.0).unwrap(),
    )
}

#[test]
fn short_maturity_smile_has_an_interior_minimum() {
    let v = smile(&reference_cev_model(), 1.0 / 12.0);
    let (imin, _) = v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert!(imin > 0 && imin < v.len() - 1, "{v:?}");
    assert!(
        v[..=imin].windows(2).all(|w| w[1] < w[0]) && v[imin..].windows(2).all(|w| w[1] > w[0]),
        "{v:?}"
    );
}

#[test]
fn long_maturity_smile_with_low_beta_is_a_skew() {
    let v = smile(&reference_cev_model(), 5.0);
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
}

#[test]
fn lognormal_without_jumps_is_flat() {
    let v = smile(&cev(0.2, 1.0, JumpParams::none()), 1.0);
    for x in v {
        assert!((x - 0.2).abs() < 1e-10);
    }
}

#[test]
fn elasticity_below_one_without_jumps_tilts_downwards() {
    let nu = 0.2 * (0.3 * 100f64.ln()).exp();
    let v = smile(&cev(nu, 0.7, JumpParams::none()), 1.0);
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    // at-the-money level stays near the proxy volatility
    assert!((v[2] - 0.2).abs() < 0.01);
}

#[test]
fn symmetric_jumps_lift_both_wings() {
    let v = smile(&cev(0.2, 1.0, JumpParams::new(0.5, 0.0, 0.15).unwrap()), 0.5);
    assert!(v[0] > v[2] && v[4] > v[2], "{v:?}");
}
