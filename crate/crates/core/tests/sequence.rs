use ijvtrack::metrics::{aggregate, detect_failure};
use ijvtrack::{
    contour_to_mask, dice, generate, track_sequence, DiceSeries, PhantomConfig, Shadow,
    TrackerConfig,
};

fn short_config(seed: u64, shadow: Option<Shadow>) -> PhantomConfig {
    PhantomConfig {
        width: 128,
        height: 128,
        frame_count: 16,
        center: (64.0, 64.0),
        semi_axes: (24.0, 16.0),
        pulsation_hz: 2.0,
        shadow,
        seed,
        ..PhantomConfig::default()
    }
}

fn run(config: &PhantomConfig, tracker: &TrackerConfig) -> DiceSeries {
    let video = generate(config).unwrap();
    let tracked = track_sequence(&video.frames, &video.truth.contours[0], tracker).unwrap();
    let values = tracked
        .iter()
        .zip(&video.truth.masks)
        .map(|(c, m)| dice(&contour_to_mask(c, config.width, config.height), m).unwrap())
        .collect();
    DiceSeries::new(values).unwrap()
}

#[test]
fn short_pulsating_phantom_is_tracked_by_all() {
    let config = short_config(4, None);
    for tracker in [
        TrackerConfig::lk(),
        TrackerConfig::hs(),
        TrackerConfig::fb(),
    ] {
        let s = run(&config, &tracker);
        assert_eq!(s.len(), 16);
        assert!(
            s.mean() >= 0.9,
            "{}: mean {}",
            tracker.algorithm.name(),
            s.mean()
        );
        assert!(!detect_failure(&s).unwrap().failed);
    }
}

#[test]
fn shadowed_phantom_series_aggregate() {
    let shadow = Shadow {
        angle_start: 1.2,
        angle_extent: 0.8,
        attenuation: 0.8,
    };
    let series: Vec<_> = (0..3)
        .map(|seed| run(&short_config(seed, Some(shadow)), &TrackerConfig::lk()))
        .collect();
    let summary = aggregate(&series).unwrap();
    assert_eq!(summary.mean_curve.len(), 16);
    assert_eq!(summary.success_count, 3);
    assert!(summary.series_means.iter().all(|&m| m >= 0.9));
}
