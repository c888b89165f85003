use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ijvtrack::hs::{hs_energy, hs_flow};
use ijvtrack::image::compute_gradients;
use ijvtrack::{Algorithm, Contour, Frame};
use ijvtrack_cli::dataset::{contour_name, frame_name, write_contour, write_pgm, Dataset};
use ijvtrack_cli::{cmd_compare, cmd_eval, cmd_synth, cmd_track, TrackOptions};
use tempfile::TempDir;

const SMALL: &str = "width = 96\nheight = 96\ncenter_x = 48\ncenter_y = 48\n\
                     semi_axis_a = 20\nsemi_axis_b = 14\n";

fn synth(dir: &Path, extra: &str, seed: u64) -> PathBuf {
    let cfg = dir.join(format!("cfg_{seed}.txt"));
    fs::write(&cfg, format!("{SMALL}{extra}")).unwrap();
    let out = dir.join(format!("data_{seed}"));
    cmd_synth(Some(&cfg), &out, Some(seed), None).unwrap();
    out
}

fn count(dir: &Path, ext: &str) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == ext)
        })
        .count()
}

#[test]
fn synth_writes_each_output_once_per_frame() {
    let tmp = TempDir::new().unwrap();
    let out = synth(tmp.path(), "frame_count = 2\n", 1);
    assert_eq!(count(&out, "pgm"), 2);
    assert_eq!(count(&out.join("truth"), "pgm"), 2);
    assert_eq!(count(&out.join("contours"), "txt"), 2);
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("frame_count = 2") && echo.contains("seed = 1"));
}

#[test]
fn synth_rejects_bad_config_and_paths() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.txt");
    fs::write(&cfg, "semi_axis_a = 500\n").unwrap();
    assert!(cmd_synth(Some(&cfg), &tmp.path().join("o"), None, Some(2)).is_err());
    let file = tmp.path().join("plain_file");
    fs::write(&file, "x").unwrap();
    assert!(cmd_synth(None, &file.join("sub"), None, Some(1)).is_err());
}

#[test]
fn track_reruns_are_identical() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "frame_count = 5\n", 2);
    for algo in ["lk", "fb"] {
        let (a, b) = (
            tmp.path().join(format!("{algo}_a")),
            tmp.path().join(format!("{algo}_b")),
        );
        cmd_track(&data, algo, None, &TrackOptions::default(), &a).unwrap();
        cmd_track(&data, algo, None, &TrackOptions::default(), &b).unwrap();
        for i in 0..5 {
            assert_eq!(
                fs::read(a.join(contour_name(i))).unwrap(),
                fs::read(b.join(contour_name(i))).unwrap()
            );
        }
        assert_eq!(
            fs::read(a.join("csa.csv")).unwrap(),
            fs::read(b.join("csa.csv")).unwrap()
        );
    }
}

fn csa_column(dir: &Path) -> Vec<f64> {
    let text = fs::read_to_string(dir.join("csa.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("frame,csa_px2"));
    lines
        .enumerate()
        .map(|(i, l)| {
            let (f, v) = l.split_once(',').unwrap();
            assert_eq!(f.parse::<usize>().unwrap(), i);
            v.parse().unwrap()
        })
        .collect()
}

#[test]
fn static_phantom_area_is_constant() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "frame_count = 6\npulsation = 0\n", 3);
    for algo in ["lk", "hs", "fb"] {
        let out = tmp.path().join(algo);
        cmd_track(&data, algo, None, &TrackOptions::default(), &out).unwrap();
        let csa = csa_column(&out);
        assert_eq!(csa.len(), 6);
        for a in &csa {
            assert!((a / csa[0] - 1.0).abs() < 0.01, "{algo}: {csa:?}");
        }
    }
}

#[test]
fn pulsating_area_period_matches_phantom() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "frame_count = 90\n", 4);
    let out = tmp.path().join("lk");
    cmd_track(&data, "lk", None, &TrackOptions::default(), &out).unwrap();
    let csa = csa_column(&out);
    let mean = csa.iter().sum::<f64>() / csa.len() as f64;
    let dev: Vec<f64> = csa.iter().map(|a| a - mean).collect();
    let acf = |k: usize| {
        (0..dev.len() - k).map(|t| dev[t] * dev[t + k]).sum::<f64>() / (dev.len() - k) as f64
    };
    let peak = (15..=45)
        .max_by(|&a, &b| acf(a).total_cmp(&acf(b)))
        .unwrap();
    // 30 fps over a 1 Hz pulsation
    assert_eq!(peak, 30);
}

#[test]
fn init_contour_is_resampled_and_checked() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "frame_count = 3\n", 5);
    let init = tmp.path().join("init.txt");
    write_contour(
        &init,
        &Contour::ellipse((48.0, 48.0), 20.0, 14.0, 12, 0).unwrap(),
    )
    .unwrap();
    let out = cmd_track(
        &data,
        "lk",
        Some(&init),
        &TrackOptions::default(),
        &tmp.path().join("t"),
    )
    .unwrap();
    assert!(out.iter().all(|c| c.len() == 32));

    write_contour(
        &init,
        &Contour::ellipse((48.0, 48.0), 60.0, 14.0, 32, 0).unwrap(),
    )
    .unwrap();
    assert!(cmd_track(
        &data,
        "lk",
        Some(&init),
        &TrackOptions::default(),
        &tmp.path().join("u")
    )
    .is_err());
    assert!(cmd_track(
        &data,
        "lk",
        Some(&tmp.path().join("none.txt")),
        &TrackOptions::default(),
        &tmp.path().join("v")
    )
    .is_err());
    assert!(cmd_track(
        &tmp.path().join("nowhere"),
        "lk",
        None,
        &TrackOptions::default(),
        &tmp.path().join("w")
    )
    .is_err());
    assert!(cmd_track(
        &data,
        "sift",
        None,
        &TrackOptions::default(),
        &tmp.path().join("x")
    )
    .is_err());
}

#[test]
fn hs_iteration_flag_lowers_energy() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("blob");
    fs::create_dir_all(data.join("contours")).unwrap();
    let blob = |dx: f64| {
        Frame::from_fn(48, 48, |x, y| {
            let r2 = (x as f64 - 24.0 - dx).powi(2) + (y as f64 - 24.0).powi(2);
            (-r2 / 72.0).exp()
        })
        .unwrap()
    };
    for (i, dx) in [0.0, 1.0].into_iter().enumerate() {
        write_pgm(&data.join(frame_name(i)), 48, 48, &blob(dx).to_u8()).unwrap();
    }
    write_contour(
        &data.join("contours").join(contour_name(0)),
        &Contour::ellipse((24.0, 24.0), 8.0, 8.0, 32, 0).unwrap(),
    )
    .unwrap();

    let ds = Dataset::open(&data).unwrap();
    let (f0, f1) = (ds.frame(0).unwrap(), ds.frame(1).unwrap());
    let grads = compute_gradients(&f0, &f1).unwrap();
    let energy = |iters| {
        let opts = TrackOptions {
            iters,
            ..TrackOptions::default()
        };
        cmd_track(
            &data,
            "hs",
            None,
            &opts,
            &tmp.path().join(format!("hs{iters}")),
        )
        .unwrap();
        let Algorithm::Hs(p) = opts.tracker_config("hs").unwrap().algorithm else {
            unreachable!()
        };
        hs_energy(&grads, &hs_flow(&f0, &f1, &p).unwrap(), p.alpha).unwrap()
    };
    assert!(energy(250) < energy(1));
}

#[test]
fn eval_of_truth_contours_passes() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "frame_count = 4\n", 6);
    let csv = tmp.path().join("eval").join("dice.csv");
    let r = cmd_eval(&data.join("contours"), &data.join("truth"), Some(&csv)).unwrap();
    assert!(r.series.values().iter().all(|&d| d >= 0.98));
    assert_eq!(r.verdict_line(), "PASS");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("frame,dice,csa_px2\n"));
    assert_eq!(text.lines().count(), 5);
    // a dataset root is accepted in place of its truth directory
    assert_eq!(cmd_eval(&data.join("contours"), &data, None).unwrap(), r);
}

#[test]
fn eval_of_offset_contours_fails() {
    let tmp = TempDir::new().unwrap();
    let cfg = "frame_count = 3\nsemi_axis_a = 15\nsemi_axis_b = 15\n";
    let data = synth(tmp.path(), cfg, 7);
    let moved = tmp.path().join("moved");
    fs::create_dir_all(&moved).unwrap();
    for i in 0..3 {
        let c = ijvtrack_cli::dataset::read_contour(&data.join("contours").join(contour_name(i)))
            .unwrap();
        let pts = c.points().iter().map(|&(x, y)| (x + 30.0, y)).collect();
        write_contour(&moved.join(contour_name(i)), &Contour::new(pts, i).unwrap()).unwrap();
    }
    let r = cmd_eval(&moved, &data.join("truth"), None).unwrap();
    assert!(r.series.values().iter().all(|&d| d < 0.7));
    assert_eq!(r.verdict_line(), "FAIL@0");
}

#[test]
fn eval_errors() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "frame_count = 3\n", 8);
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert!(cmd_eval(&empty, &data.join("truth"), None).is_err());

    let short = tmp.path().join("short");
    fs::create_dir_all(&short).unwrap();
    fs::copy(
        data.join("contours").join(contour_name(0)),
        short.join(contour_name(0)),
    )
    .unwrap();
    assert!(cmd_eval(&short, &data.join("truth"), None).is_err());
}

#[test]
fn compare_shape_and_duplicate_rows() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "frame_count = 4\n", 9);
    let algos: Vec<String> = ["lk", "hs", "fb"].map(String::from).to_vec();
    let out = tmp.path().join("cmp");
    let r = cmd_compare(
        std::slice::from_ref(&data),
        &algos,
        &TrackOptions::default(),
        &out,
    )
    .unwrap();
    assert_eq!(r.cells.len(), 3);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, algo) in rows.iter().zip(&algos) {
        assert_eq!(row.split(',').nth(1), Some(algo.as_str()));
    }
    let curve = fs::read_to_string(out.join("mean_dice_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("frame,lk,hs,fb"));
    assert_eq!(curve.lines().count(), 5);

    let out2 = tmp.path().join("cmp2");
    let lk = vec!["lk".to_string()];
    cmd_compare(&[data.clone(), data], &lk, &TrackOptions::default(), &out2).unwrap();
    let summary = fs::read_to_string(out2.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn compare_records_broken_cells_and_continues() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "frame_count = 3\n", 10);
    let missing = tmp.path().join("missing");
    let lk = vec!["lk".to_string()];
    let r = cmd_compare(
        &[missing, data],
        &lk,
        &TrackOptions::default(),
        &tmp.path().join("c"),
    )
    .unwrap();
    assert!(r.cells[0].outcome.is_err());
    assert!(r.cells[1].outcome.is_ok());
    assert_eq!(r.success_counts, vec![("lk".to_string(), 1, 1)]);
}

#[test]
fn binary_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_ijvtrack");
    let data = tmp.path().join("d");
    let ok = Command::new(bin)
        .args(["synth", "--frames", "2", "--seed", "3", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    assert!(ok.status.success());

    // tracking failure is data: exit 0 with FAIL on stdout
    let moved = tmp.path().join("moved");
    fs::create_dir_all(&moved).unwrap();
    for i in 0..2 {
        write_contour(
            &moved.join(contour_name(i)),
            &Contour::ellipse((20.0, 20.0), 5.0, 5.0, 32, i).unwrap(),
        )
        .unwrap();
    }
    let out = Command::new(bin)
        .arg("eval")
        .arg(&moved)
        .arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL@0"));

    let out = Command::new(bin)
        .arg("eval")
        .arg(tmp.path().join("nope"))
        .arg(&data)
        .output()
        .unwrap();
    assert!(!out.status.success());
}
