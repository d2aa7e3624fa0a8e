use gaitasym::error::Error;
use gaitasym::exec::Exec;
use gaitasym::gaitparams::{gait_stats, GaitParams};
use gaitasym::sim::*;
use gaitasym::tfa::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn quiet_radar() -> RadarConfig {
    RadarConfig {
        snr_db: f64::INFINITY,
        ..RadarConfig::default()
    }
}

fn tone(freq: f64, fs: f64, n: usize) -> IqSignal {
    let samples = (0..n)
        .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * freq * i as f64 / fs))
        .collect();
    IqSignal::new(samples, fs).unwrap()
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0
}

fn hop8() -> StftParams {
    StftParams {
        hop: 8,
        ..StftParams::default()
    }
}

fn analysed(walker: &WalkerConfig, radar: &RadarConfig) -> gaitasym::gaitparams::GaitStats {
    let signal = synthesize_return(walker, radar).unwrap().remove_dc();
    let spec = denoise(&stft_spectrogram(&signal, &hop8()).unwrap(), 8.0).unwrap();
    gait_stats(&spec, walker.direction, &GaitParams::default()).unwrap().1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn constant_velocity_ridge_at_doppler(v in 0.2f64..3.0, away in any::<bool>()) {
        let radar = RadarConfig { duration: 0.5, ..quiet_radar() };
        let speed = if away { -v } else { v };
        let signal = constant_velocity_return(speed, &radar, 1.0).unwrap();
        let spec = stft_spectrogram(&signal, &hop8()).unwrap();
        let expected = 2.0 * speed / radar.wavelength();
        for n in 0..spec.frames() {
            let f = spec.freq_axis[argmax(spec.frame(n))];
            prop_assert!((f - expected).abs() <= spec.bin_width(), "{f} vs {expected}");
        }
    }

    #[test]
    fn one_hop_delay_shifts_one_frame(seed in any::<u64>()) {
        let mut signal = IqSignal::new(vec![Complex64::new(0.0, 0.0); 1200], 2560.0).unwrap();
        signal.add_noise(0.0, seed);
        for s in &mut signal.samples {
            *s += Complex64::new(1.0, 0.0);
        }
        let params = hop8();
        let delayed = IqSignal::new(signal.samples[8..].to_vec(), 2560.0).unwrap();
        let a = stft_spectrogram(&signal, &params).unwrap();
        let b = stft_spectrogram(&delayed, &params).unwrap();
        for n in 0..b.frames() {
            for (x, y) in a.frame(n + 1).iter().zip(b.frame(n)) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-6));
            }
        }
    }

    #[test]
    fn denoise_is_idempotent(seed in any::<u64>(), margin in 0.0f64..12.0) {
        let mut signal = tone(300.0, 2560.0, 2000).scaled(0.3);
        signal.add_noise(5.0, seed);
        let spec = stft_spectrogram(&signal, &hop8()).unwrap();
        let once = denoise(&spec, margin).unwrap();
        let twice = denoise(&once, margin).unwrap();
        prop_assert_eq!(once.values(), twice.values());
    }

    #[test]
    fn aliasing_guard_is_exact(speed in 0.5f64..3.5) {
        let radar = RadarConfig { duration: 0.2, ..quiet_radar() };
        let walker = WalkerConfig { torso_speed: speed, ..WalkerConfig::default() };
        let predicted = predicted_peak_doppler(&walker, &radar);
        let result = synthesize_return(&walker, &radar);
        prop_assert_eq!(predicted >= radar.sampling_frequency / 2.0, matches!(result, Err(Error::Aliasing { .. })));
    }
}

#[test]
fn twenty_tones_localized_within_one_bin() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let f: f64 = rng.random_range(-999.0..999.0);
        let spec = stft_spectrogram(&tone(f, 2560.0, 2560), &hop8()).unwrap();
        for n in [0, spec.frames() / 2, spec.frames() - 1] {
            let est = spec.freq_axis[argmax(spec.frame(n))];
            assert!((est - f).abs() <= spec.bin_width(), "{f} -> {est}");
        }
    }
}

#[test]
fn sequential_and_parallel_spectrograms_agree() {
    let mut signal = tone(-210.0, 2560.0, 4000);
    signal.add_noise(3.0, 9);
    let a = stft_spectrogram_with(&signal, &hop8(), Exec::Sequential).unwrap();
    let b = stft_spectrogram_with(&signal, &hop8(), Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn symmetric_walker_yields_regular_steps() {
    let walker = WalkerConfig {
        step_rate: 2.0,
        ..WalkerConfig::default()
    };
    let radar = RadarConfig::default();
    let stats = analysed(&walker, &radar);
    assert!((stats.f_step - 2.0).abs() < 0.05, "f_step {}", stats.f_step);
    // one peak per step over 6 s
    let expected = stats.f_step * radar.duration;
    assert!(
        (stats.step_peaks.len() as f64 - expected).abs() <= 1.5,
        "{} peaks",
        stats.step_peaks.len()
    );
    let torso = radar.doppler(walker.torso_speed);
    assert!((stats.f_torso - torso).abs() < 0.1 * torso, "f_torso {}", stats.f_torso);
    let foot = radar.doppler(walker.peak_foot_speed(Leg::Left));
    assert!((stats.f_max - foot).abs() < 0.1 * foot, "f_max {}", stats.f_max);
}

#[test]
fn symmetric_walker_legs_match_at_twenty_db() {
    use gaitasym::features::Feature;
    use gaitasym::pipeline::{analyze, AnalysisConfig};
    let mut rs = Vec::new();
    for direction in [Direction::Toward, Direction::Away] {
        for seed in 0..10 {
            let walker = WalkerConfig {
                direction,
                ..WalkerConfig::default()
            };
            let radar = RadarConfig {
                snr_db: 20.0,
                rng_seed: seed,
                ..RadarConfig::default()
            };
            let signal = synthesize_return(&walker, &radar).unwrap();
            let a = analyze(&signal, direction, &AnalysisConfig::default()).unwrap();
            rs.push(a.features.get(Feature::R));
        }
    }
    // scatterer interference makes a few noise draws dip just below 0.95
    let passing = rs.iter().filter(|&&r| r >= 0.95).count();
    let mean = rs.iter().sum::<f64>() / rs.len() as f64;
    assert!(passing * 10 >= rs.len() * 9, "{rs:?}");
    assert!(mean >= 0.95, "{rs:?}");
    assert!(rs.iter().all(|&r| r >= 0.9), "{rs:?}");
}

#[test]
fn weak_leg_peaks_alternate_at_rho() {
    for direction in [Direction::Toward, Direction::Away] {
        let walker = WalkerConfig {
            asymmetry_factor: 0.6,
            direction,
            ..WalkerConfig::default()
        };
        let stats = analysed(&walker, &RadarConfig::default());
        let peaks: Vec<f64> = stats.step_peaks.iter().map(|p| p.doppler.abs()).collect();
        assert!(peaks.len() >= 6);
        let (even, odd): (Vec<_>, Vec<_>) = peaks.iter().enumerate().partition(|(i, _)| i % 2 == 0);
        let mean = |v: &[(usize, &f64)]| v.iter().map(|(_, p)| **p).sum::<f64>() / v.len() as f64;
        let (e, o) = (mean(&even), mean(&odd));
        let ratio = e.min(o) / e.max(o);
        assert!((ratio - 0.6).abs() <= 0.1, "{direction:?}: ratio {ratio}");
        for w in peaks.windows(2) {
            let (lo, hi) = (w[0].min(w[1]), w[0].max(w[1]));
            assert!(lo / hi < 0.8, "peaks do not alternate: {peaks:?}");
        }
    }
}

#[test]
fn away_walk_has_negative_doppler() {
    let walker = WalkerConfig {
        direction: Direction::Away,
        ..WalkerConfig::default()
    };
    let signal = synthesize_return(&walker, &RadarConfig::default()).unwrap().remove_dc();
    let spec = denoise(&stft_spectrogram(&signal, &hop8()).unwrap(), 8.0).unwrap();
    let (envelope, stats) = gait_stats(&spec, Direction::Away, &GaitParams::default()).unwrap();
    assert!(envelope.values.iter().all(|&f| f <= 0.0));
    assert!(stats.step_peaks.iter().all(|p| p.doppler > 0.0));
    assert!(stats.f_max > 0.0);
}

#[test]
fn synthesis_is_deterministic() {
    let walker = WalkerConfig {
        stride_variability: 0.05,
        variability_seed: 3,
        ..WalkerConfig::default()
    };
    let radar = RadarConfig {
        duration: 1.0,
        rng_seed: 17,
        ..RadarConfig::default()
    };
    let a = synthesize_return(&walker, &radar).unwrap();
    let b = synthesize_return(&walker, &radar).unwrap();
    assert_eq!(a, b);
    let c = synthesize_return(&walker, &RadarConfig { rng_seed: 18, ..radar }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn table_three_cohort_has_four_hundred_measurements() {
    let subjects = (0..10)
        .map(|i| SubjectSpec {
            id: format!("S{i}"),
            label: Label::Symmetric,
            walker: WalkerConfig::default(),
            toward: 10,
            away: 10,
            simulated_limp: Some(LimpSpec::default()),
            jitter: 0.05,
        })
        .collect();
    let cohort = CohortSpec {
        master_seed: 1,
        radar: RadarConfig::default(),
        subjects,
    };
    let plan = cohort.plan();
    assert_eq!(plan.len(), 400);
    assert_eq!(plan.iter().filter(|p| p.label == Label::Asymmetric).count(), 200);
    assert_eq!(plan.iter().filter(|p| p.direction == Direction::Away).count(), 200);
    assert_eq!(plan, cohort.plan());
}
