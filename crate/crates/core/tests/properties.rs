use accear::autodiff::{conv2d_forward, conv2d_transpose_forward, Tensor};
use accear::spectral::{hz_to_mel, mel_to_hz, Matrix, NormStats, SpectralConfig, StftPlan};
use accear::vocoder::{griffin_lim, GriffinLimConfig};
use proptest::prelude::*;

fn tensor(shape: [usize; 4], v: &[f64]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, v.iter().cycle().take(n).copied().collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stft_round_trip(x in prop::collection::vec(-1.0f64..1.0, 600..1500), n_pow in 5u32..8, hop_div in 2usize..6) {
        let n = 1usize << n_pow;
        let plan = StftPlan::new(n, n / hop_div).unwrap();
        let y = plan.istft(&plan.stft(&x, 1000.0).unwrap(), Some(x.len())).unwrap();
        for i in n..x.len().saturating_sub(n) {
            prop_assert!((y.values()[i] - x[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn mel_is_monotone_and_invertible(a in 0.0f64..20_000.0, b in 0.0f64..20_000.0) {
        prop_assert!((mel_to_hz(hz_to_mel(a)) - a).abs() <= 1e-9 * a.max(1.0));
        if a < b {
            prop_assert!(hz_to_mel(a) < hz_to_mel(b));
        }
    }

    // The transposed convolution is the adjoint of the convolution with the
    // same weights: <conv(x), y> = <x, conv_t(y)>.
    #[test]
    fn conv_transpose_is_adjoint(
        vals in prop::collection::vec(-1.0f64..1.0, 37),
        stride in 1usize..3,
        pad in 0usize..2,
    ) {
        let x = tensor([1, 2, 6, 6], &vals);
        let w = tensor([3, 2, 3, 3], &vals[5..]);
        let zero3 = Tensor::zeros([1, 3, 1, 1]);
        let zero2 = Tensor::zeros([1, 2, 1, 1]);
        let cx = conv2d_forward(&x, &w, &zero3, stride, pad).unwrap();
        let y = tensor(cx.shape(), &vals[11..]);
        let ty = conv2d_transpose_forward(&y, &w, &zero2, stride, pad).unwrap();
        prop_assume!(ty.shape() == x.shape());
        let lhs = cx.dot(&y);
        let rhs = x.dot(&ty);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn griffin_lim_never_increases_error(vals in prop::collection::vec(0.0f64..2.0, 33 * 12), seed in any::<u64>()) {
        let m = Matrix::from_vec(33, 12, vals).unwrap();
        let cfg = GriffinLimConfig { iterations: 20, n_fft: 64, hop: 16, random_init_seed: Some(seed), ..Default::default() };
        let out = griffin_lim(&m, 1000.0, &cfg, None).unwrap();
        for w in out.errors.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-7);
        }
    }

    #[test]
    fn images_stay_in_unit_range(seg in prop::collection::vec(-1.0f64..1.0, 512), gain in 0.01f64..100.0) {
        let cfg = SpectralConfig {
            image_size: 32,
            accel_rate_hz: 128.0,
            accel_n_fft: 32,
            segment_seconds: 4.0,
            ..Default::default()
        };
        let f = cfg.accel_features(&seg).unwrap();
        let stats = NormStats::from_matrices([&f]).unwrap();
        prop_assume!(stats.max > stats.min);
        // Scaling the signal after the stats were fixed must still clamp.
        let scaled = cfg.accel_features(&seg.iter().map(|v| v * gain).collect::<Vec<_>>()).unwrap();
        let img = cfg.condition_image(&scaled, stats).unwrap();
        prop_assert_eq!((img.rows(), img.cols()), (32, 32));
        prop_assert!(img.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
