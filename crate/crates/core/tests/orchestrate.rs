use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use omsync_core::orchestrate::*;

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn axis(name: &str, min: f64, max: f64, points: usize) -> SweepAxis {
    SweepAxis {
        name: name.into(),
        min,
        max,
        points,
        log: false,
    }
}

fn langevin_sweep(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::new(Engine::Langevin, out);
    cfg.quantum_scale = Some(omsync_core::QuantumScale {
        quantum_parameter: 0.5,
        rescaled_drive: 0.09,
    });
    cfg.integration.t_total = 3000.0;
    cfg.integration.burn_in = Some(1000.0);
    cfg.noise.n_traj = 2;
    cfg.noise.seed = 11;
    cfg.sweep = vec![
        axis("coupling_k", 0.1, 0.3, 2),
        axis("quantum_parameter", 0.2, 1.0, 3),
    ];
    cfg
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ra = run(&langevin_sweep(&a), RunOptions::default()).unwrap();
    run(&langevin_sweep(&b), RunOptions::default()).unwrap();
    assert!(ra.is_complete());
    assert_eq!(ra.cells.len(), 6);
    assert!(ra.cells.iter().all(|c| c.is_ok()), "{:?}", ra.cells);
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        if k != SNAPSHOT_FILE {
            assert!(v == &tb[k], "{k} differs");
        }
    }
    assert!(ta.contains_key("cells/cell_001_002.csv"));
    assert!(ta.contains_key("cells/cell_000_000.hist.csv"));
    assert!(!ta.keys().any(|k| k.ends_with(".tmp")));
}

#[test]
fn interrupted_run_resumes_to_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let part = tmp.path().join("part");
    run(&langevin_sweep(&full), RunOptions::default()).unwrap();
    let cfg = langevin_sweep(&part);
    let r = run(
        &cfg,
        RunOptions {
            resume: false,
            max_cells: Some(2),
        },
    )
    .unwrap();
    assert_eq!(r.pending, 4);
    assert!(!part.join(SUMMARY_FILE).exists());
    let manifest = fs::read_to_string(part.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains("\"pending\""));
    let r = run(
        &cfg,
        RunOptions {
            resume: true,
            max_cells: Some(1),
        },
    )
    .unwrap();
    assert_eq!(r.pending, 3);
    let r = run(
        &cfg,
        RunOptions {
            resume: true,
            max_cells: None,
        },
    )
    .unwrap();
    assert!(r.is_complete());
    let (ta, tb) = (read_tree(&full), read_tree(&part));
    for (k, v) in &ta {
        if k != SNAPSHOT_FILE {
            assert!(Some(v) == tb.get(k), "{k} differs after resume");
        }
    }
    assert_eq!(ta.len(), tb.len());
}

#[test]
fn resume_refuses_a_different_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("r");
    let cfg = langevin_sweep(&dir);
    run(
        &cfg,
        RunOptions {
            resume: false,
            max_cells: Some(1),
        },
    )
    .unwrap();
    let mut other = cfg.clone();
    other.noise.seed = 12;
    let err = run(
        &other,
        RunOptions {
            resume: true,
            max_cells: None,
        },
    )
    .unwrap_err();
    assert!(err.to_string().contains("different configuration"));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for (k, threads) in [1usize, 3].into_iter().enumerate() {
        let dir = tmp.path().join(format!("w{k}"));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run(&langevin_sweep(&dir), RunOptions::default()))
            .unwrap();
        trees.push(read_tree(&dir));
    }
    for (k, v) in &trees[0] {
        if k != SNAPSHOT_FILE {
            assert!(v == &trees[1][k], "{k} differs");
        }
    }
}

#[test]
fn every_cell_carries_its_seed_range() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run(
        &langevin_sweep(&tmp.path().join("s")),
        RunOptions::default(),
    )
    .unwrap();
    let mut seen = Vec::new();
    for (c, cell) in r.cells.iter().enumerate() {
        assert_eq!(cell.seed, 11);
        assert_eq!(cell.n_traj, 2);
        assert_eq!(cell.streams, (2 * c as u64)..(2 * c as u64 + 2));
        seen.extend(cell.streams.clone());
        assert_eq!(r.value(c, "stream_lo"), Some(cell.streams.start as f64));
    }
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 12);
}

#[test]
fn failing_cell_is_marked_and_sweep_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Engine::ThresholdScan, tmp.path().join("f"));
    cfg.threshold = Some(omsync_core::sde::ThresholdScan {
        settle_time: 200.0,
        window: 50.0,
        ..Default::default()
    });
    cfg.sweep = vec![axis("kappa", -0.3, 0.3, 3)];
    let r = run(&cfg, RunOptions::default()).unwrap();
    assert!(r.is_complete());
    assert_eq!(r.cells[0].status, "failed");
    assert!(r.cells[0].error.contains("kappa"), "{}", r.cells[0].error);
    assert_eq!(r.cells[1].status, "failed");
    assert_eq!(r.cells[2].status, "ok");
    let summary = fs::read_to_string(tmp.path().join("f").join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn phase_model_sweep_matches_regime_map() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Engine::PhaseModel, tmp.path().join("p"));
    cfg.model = Some(omsync_core::effective::HopfKuramotoParams::new(
        0.02, 0.0, 0.0,
    ));
    cfg.sweep = vec![axis("s1", -0.1, 0.1, 5), axis("s2", -0.05, 0.05, 5)];
    let r = run(&cfg, RunOptions::default()).unwrap();
    let s1: Vec<f64> = cfg.sweep[0].values();
    let s2: Vec<f64> = cfg.sweep[1].values();
    let map = omsync_core::effective::regime_map_s1_s2(0.02, &s1, &s2);
    for (c, cell) in map.iter().enumerate() {
        assert_eq!(
            r.text(c, "regime").unwrap(),
            cell.classification.regime.as_str()
        );
    }
    let loaded = load_run(r.dir.as_path()).unwrap();
    assert_eq!(loaded, r);
}

#[test]
fn single_cell_run_without_axes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Engine::NoiseBudget, tmp.path().join("n"));
    cfg.analysis.n_photons = Some(100.0);
    let r = run(&cfg, RunOptions::default()).unwrap();
    assert_eq!(r.cells.len(), 1);
    assert!(tmp.path().join("n/cells/cell.csv").exists());
    assert!(r.value(0, "n_th_star").unwrap() > 0.0);
}

#[test]
fn schema_lists_every_config_field() {
    let schema: serde_json::Value = serde_json::from_str(RUN_CONFIG_SCHEMA).unwrap();
    let mut cfg = RunConfig::new(Engine::Mcwf, "out");
    cfg.mcwf = Some(McwfSettings {
        n_opt: 2,
        n_mech: 2,
        record_every: 10,
        initial: omsync_core::mcwf::InitialFock::Vacuum,
    });
    let v: serde_json::Value = serde_json::to_value(&cfg).unwrap();
    let props = schema["properties"].as_object().unwrap();
    let mut a: Vec<&String> = v.as_object().unwrap().keys().collect();
    let mut b: Vec<&String> = props.keys().collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    for section in ["integration", "noise", "analysis"] {
        let mut a: Vec<&String> = v[section].as_object().unwrap().keys().collect();
        let mut b: Vec<&String> = props[section]["properties"]
            .as_object()
            .unwrap()
            .keys()
            .collect();
        a.sort();
        b.sort();
        assert_eq!(a, b, "{section}");
    }
    let names: Vec<&str> = props["sweep"]["items"]["properties"]["name"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap())
        .collect();
    for e in [
        Engine::Langevin,
        Engine::Mcwf,
        Engine::PhaseModel,
        Engine::NoiseBudget,
        Engine::ThresholdScan,
    ] {
        for n in e.parameter_names() {
            assert!(names.contains(n), "{n}");
        }
    }
    let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn config_errors_name_the_field() {
    let e = RunConfig::from_json(r#"{"engine": "langevin", "output": "x", "noise": {"sead": 3}}"#)
        .unwrap_err();
    assert!(
        e.to_string().contains("sead") && e.to_string().contains("column"),
        "{e}"
    );
    let e = RunConfig::from_json(r#"{"engine": "warp", "output": "x"}"#).unwrap_err();
    assert!(e.to_string().contains("warp"), "{e}");
    let e = RunConfig::from_json(
        r#"{"engine": "langevin", "output": "x", "sweep": [{"name": "s9", "min": 0, "max": 1, "points": 2}]}"#,
    )
    .unwrap_err();
    assert!(e.to_string().contains("s9"), "{e}");
}

#[test]
fn overrides_replace_top_level_scalars() {
    let mut cfg = RunConfig::new(Engine::Langevin, "a");
    cfg.apply_overrides(&Overrides {
        seed: Some(5),
        t_total: Some(123.0),
        quantum_parameter: Some(0.4),
        output: Some("b".into()),
        ..Default::default()
    });
    assert_eq!(cfg.noise.seed, 5);
    assert_eq!(cfg.integration.t_total, 123.0);
    assert_eq!(cfg.quantum_scale.unwrap().quantum_parameter, 0.4);
    assert_eq!(cfg.output, Path::new("b"));
}
