use jumpexp_core::analytic::{merton_call_series, merton_price, DealTerms, ProxyLaw};
use jumpexp_core::expansion::{coefficients_aa, coefficients_direct, model_coefficients};
use jumpexp_core::{approx_price, CevLocalVol, JumpParams, MarketEnv, ModelSpec, Payoff, PayoffKind, PiecewiseCurve};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..0.8, 1..10).prop_map(|w| {
        let mut t = 0.0;
        w.iter()
            .map(|x| {
                t += x;
                t
            })
            .collect()
    })
}

fn jumps_strategy() -> impl Strategy<Value = JumpParams> {
    prop_oneof![
        Just(JumpParams::none()),
        (0.0f64..1.5, -0.3f64..0.2, 0.0f64..0.5).prop_map(|(l, e, g)| JumpParams::new(l, e, g).unwrap()),
    ]
}

fn aa_model() -> impl Strategy<Value = ModelSpec> {
    (
        grid_strategy(),
        jumps_strategy(),
        50.0f64..200.0,
        -0.02f64..0.08,
        0.0f64..0.05,
    )
        .prop_flat_map(|(grid, jumps, spot, r, q)| {
            let n = grid.len();
            (
                prop::collection::vec(0.1f64..0.4, n),
                prop::collection::vec(0.5f64..1.3, n),
            )
                .prop_map(move |(nu_pct, beta)| {
                    // ν scaled so the proxy vol stays in 10%..40%
                    let nu: Vec<f64> = nu_pct
                        .iter()
                        .zip(&beta)
                        .map(|(s, b)| s * ((1.0 - b) * spot.ln()).exp())
                        .collect();
                    ModelSpec::log_aa(
                        CevLocalVol::new(
                            PiecewiseCurve::new(grid.clone(), nu).unwrap(),
                            PiecewiseCurve::new(grid.clone(), beta).unwrap(),
                        )
                        .unwrap(),
                        jumps,
                        MarketEnv::flat(spot, r, q).unwrap(),
                    )
                })
        })
}

fn lognormal_model() -> impl Strategy<Value = ModelSpec> {
    (grid_strategy(), jumps_strategy(), 50.0f64..200.0).prop_flat_map(|(grid, jumps, spot)| {
        prop::collection::vec(0.05f64..0.6, grid.len()).prop_map(move |nu| {
            ModelSpec::log_aa(
                CevLocalVol::new(
                    PiecewiseCurve::new(grid.clone(), nu).unwrap(),
                    PiecewiseCurve::constant(1.0),
                )
                .unwrap(),
                jumps,
                MarketEnv::flat(spot, 0.03, 0.01).unwrap(),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// β ≡ 1: the expansion collapses to the Merton price of the
    /// time-dependent model, computed here from the ν integral alone.
    #[test]
    fn lognormal_models_are_priced_exactly(model in lognormal_model(), t_frac in 0.05f64..1.0, k in 0.6f64..1.6) {
        let nu = model.cev().unwrap().nu().clone();
        let t = nu.times().last().unwrap() * t_frac;
        let var = nu.map(|v| v * v).integral(0.0, t);
        let st = model_coefficients(&model, t).unwrap();
        prop_assert_eq!(st.alpha, [0.0; 3]);
        prop_assert_eq!(st.beta, [0.0; 3]);
        let spot = model.env().spot();
        let j = *model.jumps();
        let law = ProxyLaw {
            base_mean: spot.ln() + j.log_compensator() * t - 0.5 * var,
            base_var: var,
            jumps: j,
            horizon: t,
        };
        for kind in [PayoffKind::Call, PayoffKind::Put, PayoffKind::DigitalCall] {
            let payoff = Payoff::new(kind, spot * k, t).unwrap();
            let got = approx_price(&model, &payoff).unwrap();
            let want = merton_price(&law, &DealTerms::new(&model, payoff)).unwrap();
            prop_assert!((got.total - want).abs() <= 1e-12 * want.abs().max(1e-300), "{kind:?}: {} vs {want}", got.total);
            prop_assert_eq!(got.diffusion_correction, 0.0);
            prop_assert_eq!(got.jump_correction, 0.0);
        }
        // the Black-Scholes sum over jump counts agrees as well
        let series = merton_call_series(spot.ln(), var, &j, t, 0.03 * t, 0.01 * t, spot * k);
        let call = approx_price(&model, &Payoff::call(spot * k, t).unwrap()).unwrap().total;
        prop_assert!((series - call).abs() <= 1e-10 * call.max(1e-12));
    }

    #[test]
    fn aa_coefficients_sum_to_zero(model in aa_model(), t_frac in 0.05f64..1.0) {
        let t = model.cev().unwrap().nu().times().last().unwrap() * t_frac;
        let st = coefficients_aa(&model, t).unwrap();
        let a_scale: f64 = st.alpha.iter().map(|a| a.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        let b_scale: f64 = st.beta.iter().map(|b| b.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        prop_assert!(st.alpha_sum().abs() <= 1e-14 * a_scale, "{st:?}");
        prop_assert!(st.beta_sum().abs() <= 1e-14 * b_scale, "{st:?}");

        // the closed AA form agrees with the generic engine
        let [s, ds, m, dm] = model.proxy_curves(t).into_curves().unwrap();
        let generic = coefficients_direct(&s, &ds, &m, &dm, model.jumps(), t).unwrap();
        for i in 0..3 {
            prop_assert!((generic.alpha[i] - st.alpha[i]).abs() <= 1e-14 * a_scale.max(1e-3));
            prop_assert!((generic.beta[i] - st.beta[i]).abs() <= 1e-14 * b_scale.max(1e-3));
        }
    }

    #[test]
    fn expansion_respects_put_call_parity(model in aa_model(), t_frac in 0.05f64..1.0, k in 0.6f64..1.6) {
        let t = model.cev().unwrap().nu().times().last().unwrap() * t_frac;
        let env = model.env();
        let strike = env.spot() * k;
        let call = approx_price(&model, &Payoff::call(strike, t).unwrap()).unwrap().total;
        let put = approx_price(&model, &Payoff::put(strike, t).unwrap()).unwrap().total;
        let parity = env.discount(t) * (env.forward(t) - strike);
        let scale = call.abs().max(put.abs()).max(parity.abs());
        prop_assert!((call - put - parity).abs() <= 1e-12 * scale, "{call} - {put} vs {parity}");
    }
}
