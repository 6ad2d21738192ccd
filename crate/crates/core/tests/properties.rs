use iddm_core::data::{decode_joint, encode_joint, tv_distance};
use iddm_core::kernel::{forward_kernel, marginal, posterior, sample_with_uniform};
use iddm_core::objective::kl_slices;
use iddm_core::rng::Rng;
use iddm_core::schedule::{build_grid, GammaSchedule, LambdaSchedule};
use iddm_core::{PosteriorWeights, Simplex};
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = Simplex> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        Simplex::new(raw.into_iter().map(|v| v / sum).collect()).unwrap()
    })
}

fn prior_and_token() -> impl Strategy<Value = (Simplex, usize)> {
    (2usize..=8).prop_flat_map(|k| (simplex(k), 0..k))
}

/// `(s, t)` with `0 <= s < t <= 1`.
fn times() -> impl Strategy<Value = (f64, f64)> {
    (1e-6f64..=1.0, 0.0f64..1.0).prop_map(|(t, frac)| (t * frac, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn weights_are_a_mixture_satisfying_both_constraints(
        (s, t) in times(),
        lambda in 0.0f64..=1.0,
    ) {
        let sched = GammaSchedule::Linear;
        let w = PosteriorWeights::new(sched.gamma_at(s).unwrap(), sched.gamma_at(t).unwrap(), lambda).unwrap();
        for v in [w.w_stay(), w.w_prior(), w.w_flip()] {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
        for r in w.constraint_residuals() {
            prop_assert!(r < 1e-12);
        }
    }

    #[test]
    fn posterior_composed_with_marginal_gives_marginal(
        (prior, x) in prior_and_token(),
        (s, t) in times(),
        lambda in 0.0f64..=1.0,
    ) {
        let sched = GammaSchedule::Linear;
        let (gs, gt) = (sched.gamma_at(s).unwrap(), sched.gamma_at(t).unwrap());
        let w = PosteriorWeights::new(gs, gt, lambda).unwrap();
        let m_t = marginal(gt, &prior, x).unwrap();
        let m_s = marginal(gs, &prior, x).unwrap();
        let k = prior.len();
        let mut composed = vec![0.0; k];
        for x_t in 0..k {
            let p = posterior(&w, x_t, &prior, x).unwrap();
            for (c, v) in composed.iter_mut().zip(p.probs()) {
                *c += v * m_t.get(x_t);
            }
        }
        prop_assert!(Simplex::new(composed).unwrap().max_abs_diff(&m_s) < 1e-12);
    }

    #[test]
    fn forward_kernel_rows_are_distributions(
        (prior, x) in prior_and_token(),
        (s, t) in times(),
        lambda in 0.0f64..=1.0,
    ) {
        let sched = GammaSchedule::Linear;
        let (gs, gt) = (sched.gamma_at(s).unwrap(), sched.gamma_at(t).unwrap());
        let w = PosteriorWeights::new(gs, gt, lambda).unwrap();
        let m_t = marginal(gt, &prior, x).unwrap();
        let m_s = marginal(gs, &prior, x).unwrap();
        let fk = forward_kernel(&w, &prior, x, &m_t, &m_s).unwrap();
        for i in 0..prior.len() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&fk.alpha()[i]));
            let row: f64 = (0..prior.len()).map(|j| fk.prob(i, j)).sum();
            prop_assert!((row - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_is_strictly_increasing_with_exact_endpoints(steps in 1usize..2000, rho in 1.0f64..8.0) {
        let g = build_grid(steps, rho).unwrap();
        prop_assert_eq!(g.time(0), 0.0);
        prop_assert_eq!(g.time(steps), 1.0);
        prop_assert!(g.times().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ramp_lambda_stays_in_unit_interval(a in 0.0f64..=1.0, b in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        let v = LambdaSchedule::Ramp { at_zero: a, at_one: b }.lambda_at(t);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(v >= a.min(b) - 1e-15 && v <= a.max(b) + 1e-15);
    }

    #[test]
    fn inverse_cdf_never_picks_zero_mass(p in simplex(6), u in 0.0f64..1.0, zero in 0usize..6) {
        let mut probs = p.into_vec();
        probs[zero] = 0.0;
        let i = sample_with_uniform(&probs, u);
        prop_assert!(probs[i] > 0.0);
    }

    #[test]
    fn joint_encoding_round_trips(k in 1usize..6, seq in prop::collection::vec(0usize..6, 1..5)) {
        let seq: Vec<usize> = seq.into_iter().map(|c| c % k).collect();
        let idx = encode_joint(&seq, k);
        prop_assert!(idx < k.pow(seq.len() as u32));
        let mut back = vec![0; seq.len()];
        decode_joint(idx, k, &mut back);
        prop_assert_eq!(back, seq);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_diagonal(p in simplex(5), q in simplex(5)) {
        prop_assert!(kl_slices(p.probs(), q.probs()).unwrap() >= 0.0);
        prop_assert_eq!(kl_slices(p.probs(), p.probs()).unwrap(), 0.0);
    }

    #[test]
    fn tv_is_a_bounded_symmetric_distance(p in simplex(4), q in simplex(4)) {
        let d = tv_distance(p.probs(), q.probs()).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, tv_distance(q.probs(), p.probs()).unwrap());
        prop_assert_eq!(tv_distance(p.probs(), p.probs()).unwrap(), 0.0);
    }

    #[test]
    fn rng_substreams_are_reproducible(seed: u64, id: u64) {
        let a: Vec<u64> = { let mut r = Rng::new(seed).substream(id); (0..8).map(|_| r.next_u64()).collect() };
        let b: Vec<u64> = { let mut r = Rng::new(seed).substream(id); (0..8).map(|_| r.next_u64()).collect() };
        prop_assert_eq!(&a, &b);
        let mut r = Rng::new(seed);
        for _ in 0..64 {
            let v = r.next_f64();
            prop_assert!((0.0..1.0).contains(&v));
        }
    }
}
