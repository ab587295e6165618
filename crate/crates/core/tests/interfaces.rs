//! The files exchanged with external model code: windows.jsonl and
//! manifest.json going out, preds.csv coming back.

use std::path::Path;
use std::process::Command;

use blockcast::baselines::{Prediction, Problem};
use blockcast::cli::score_predictions;
use blockcast::io;
use blockcast::prep::{build_dictionary, preprocess_trajectory, ScrConfig};
use blockcast::simulator::{simulate, ScenarioConfig};
use blockcast::windowing::{balance, materialize, plan_windows, DatasetManifest, LidarInput, WindowConfig};
use serde_json::Value;

fn write_dataset(dir: &Path) -> DatasetManifest {
    let traj = simulate(&ScenarioConfig {
        seed: 3,
        duration_instances: 800,
        arrival_rate: 0.3,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let scr = ScrConfig::default();
    let frames: Vec<_> = traj.object_free_instances().iter().map(|&t| traj.scans[t].clone()).collect();
    let dict = build_dictionary(&frames, &scr).unwrap();
    let scans = preprocess_trajectory(&traj.scans, &dict, &scr).unwrap();
    let cfg = WindowConfig {
        horizon: 3,
        ..WindowConfig::default()
    };
    let plans = balance(plan_windows(&traj, &cfg).unwrap(), 1, |p| p.labels.occurrence == 1);
    let windows = materialize(&traj, LidarInput::Scr(&scans, &scr), cfg.obs_len, &plans, "t").unwrap();
    let manifest = DatasetManifest::summarize(&windows, &cfg, "scr");
    io::write_windows(dir, &windows, &manifest).unwrap();
    manifest
}

#[test]
fn windows_jsonl_has_the_documented_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_dataset(tmp.path());
    assert!(manifest.positives > 0 && manifest.positives == manifest.negatives);

    let m: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    let (t_ob, width, beams) = (
        m["window"]["obs_len"].as_u64().unwrap() as usize,
        m["lidar_width"].as_u64().unwrap() as usize,
        m["num_beams"].as_u64().unwrap() as usize,
    );
    assert_eq!((t_ob, width, beams), (16, 216, 64));

    let text = std::fs::read_to_string(tmp.path().join("windows.jsonl")).unwrap();
    let mut positives = 0;
    for (i, line) in text.lines().enumerate() {
        let w: Value = serde_json::from_str(line).unwrap();
        assert_eq!(w["id"].as_u64(), Some(i as u64));
        let lidar = w["lidar"].as_array().unwrap();
        assert_eq!(lidar.len(), t_ob);
        for row in lidar {
            let row = row.as_array().unwrap();
            assert_eq!(row.len(), width);
            assert!(row.iter().all(|s| s.as_array().unwrap().len() == 2));
        }
        let power = w["power"].as_array().unwrap();
        assert_eq!(power.len(), t_ob);
        assert!(power.iter().all(|r| r.as_array().unwrap().len() == beams));
        let labels = &w["labels"];
        if labels["occurrence"] == 1 {
            positives += 1;
            let inst = labels["instance"].as_u64().unwrap();
            assert!((1..=3).contains(&inst));
            assert!(labels["severity"].as_u64().is_some());
            assert!(matches!(labels["direction"].as_u64(), Some(0 | 1)));
        } else {
            assert_eq!(labels["occurrence"], 0);
            assert!(labels["instance"].is_null() && labels["severity"].is_null() && labels["direction"].is_null());
        }
    }
    assert_eq!(positives, m["positives"].as_u64().unwrap() as usize);

    let (windows, back) = io::read_windows(tmp.path()).unwrap();
    assert_eq!(back, manifest);
    assert_eq!(windows.len(), manifest.total);
}

#[test]
fn externally_written_preds_are_scored() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_dataset(&data);
    let (windows, _) = io::read_windows(&data).unwrap();

    // The style a numeric library writes: floats everywhere, CRLF endings.
    let mut csv = String::from("window_id,problem,prediction\r\n");
    for w in &windows {
        csv.push_str(&format!("{},1,{:.1}\r\n", w.id, f64::from(w.labels.occurrence)));
        if let Some(t) = Problem::Time.target(w) {
            csv.push_str(&format!("{},2,{}\r\n", w.id, t + 0.5));
        }
    }
    let preds = tmp.path().join("preds.csv");
    std::fs::write(&preds, csv).unwrap();

    let rows = io::read_preds(&preds).unwrap();
    let results = score_predictions(&rows, &windows, 3).unwrap();
    assert_eq!(results[0].top1, Some(1.0));
    assert_eq!(results[1].mae, Some(0.5));

    let out = tmp.path().join("report");
    let status = Command::new(env!("CARGO_BIN_EXE_blockcast"))
        .args(["eval", "--preds"])
        .arg(&preds)
        .arg("--windows")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(curves.contains("1,3,top1,1\n"));
    assert!(curves.contains("2,3,mae,0.5\n"));
}

#[test]
fn baseline_preds_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("preds.csv");
    let preds = vec![
        Prediction { window_id: 0, problem: Problem::Occurrence, prediction: 1.0 },
        Prediction { window_id: 0, problem: Problem::Time, prediction: 2.345678912 },
        Prediction { window_id: 7, problem: Problem::Direction, prediction: 0.0 },
    ];
    io::write_preds(&path, &preds).unwrap();
    assert_eq!(io::read_preds(&path).unwrap(), preds);
}

#[test]
fn malformed_preds_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("preds.csv");
    for bad in [
        "id,problem,prediction\n0,1,1\n",
        "window_id,problem,prediction\n0,5,1\n",
        "window_id,problem,prediction\n0,1,nan\n",
        "window_id,problem,prediction\n-1,1,1\n",
        "window_id,problem,prediction\n0,1\n",
    ] {
        std::fs::write(&path, bad).unwrap();
        assert!(io::read_preds(&path).is_err(), "{bad:?} was accepted");
    }
}
