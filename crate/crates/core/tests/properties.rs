use fsvae::elbo::{self, PosteriorParams};
use fsvae::eval::location_bucket;
use fsvae::prior::PriorConfig;
use proptest::prelude::*;

fn posterior(batch: usize, n: usize, width: usize) -> impl Strategy<Value = PosteriorParams> {
    let len = batch * n * width;
    (proptest::collection::vec(-3.0f64..3.0, len), proptest::collection::vec(-5.0f64..2.0, len))
        .prop_map(move |(mu, lv)| PosteriorParams::new(batch, n, width, mu, lv).unwrap())
}

fn prior() -> impl Strategy<Value = PriorConfig> {
    (0.005f64..2.0, 0.005f64..2.0).prop_map(|(s, t)| PriorConfig { sigma2_s: s, sigma2_t: t, f_s: 2, f_t: 1, n_frames: 5 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_terms_are_nonnegative(post in posterior(2, 5, 3), cfg in prior()) {
        prop_assert!(elbo::kl_factored(&post, &cfg).unwrap() >= -1e-9);
        prop_assert!(elbo::kl_slow(&post, &cfg).unwrap() >= -1e-9);
        prop_assert!(elbo::kl_standard_normal(&post) >= -1e-9);
    }

    #[test]
    fn kl_decomposes(post in posterior(2, 5, 3), cfg in prior()) {
        let (s, t) = post.split(&cfg).unwrap();
        let parts = elbo::entropy_term(&post) - elbo::static_cross_entropy(&s, &cfg).unwrap()
            - elbo::temporal_cross_entropy(&t, &cfg).unwrap();
        let kl = elbo::kl_factored(&post, &cfg).unwrap();
        prop_assert!((kl - parts).abs() <= 1e-9 * kl.abs().max(1.0));
    }

    #[test]
    fn kl_is_a_batch_average(a in posterior(1, 5, 3), b in posterior(1, 5, 3), cfg in prior()) {
        let both = PosteriorParams::new(2, 5, 3, [a.mu.clone(), b.mu.clone()].concat(), [a.log_var.clone(), b.log_var.clone()].concat()).unwrap();
        let mean = 0.5 * (elbo::kl_factored(&a, &cfg).unwrap() + elbo::kl_factored(&b, &cfg).unwrap());
        prop_assert!((elbo::kl_factored(&both, &cfg).unwrap() - mean).abs() <= 1e-9 * mean.abs().max(1.0));
    }

    #[test]
    fn exact_posterior_match_has_zero_standard_kl(n in 1usize..6, w in 1usize..4) {
        let post = PosteriorParams::new(1, n, w, vec![0.0; n * w], vec![0.0; n * w]).unwrap();
        prop_assert!(elbo::kl_standard_normal(&post).abs() < 1e-12);
    }

    #[test]
    fn location_buckets_cover_the_frame(r in 0.0f64..64.0, c in 0.0f64..64.0) {
        let b = location_bucket([r, c]).unwrap();
        prop_assert!(b < 9);
    }
}
