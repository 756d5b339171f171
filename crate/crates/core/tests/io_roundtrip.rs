use slowfast::io::{self, Provenance};
use slowfast::scenario::{load_fixture, Scenario, FIXTURES};
use slowfast::solver::{self, RunMode, Trajectory};

#[test]
fn empty_trajectory_writes_header_only() {
    let sc = load_fixture("linear-slowfast").unwrap();
    let model = sc.build_model().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    io::save_trajectory(&Trajectory::new(RunMode::Deterministic), model.names(), model.epsilon(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "tau,t,stage,z,x,wind.eta,wind.speed\n");
}

#[test]
fn single_state_writes_two_lines() {
    let sc = load_fixture("linear-slowfast").unwrap();
    let model = sc.build_model().unwrap();
    let init = sc.initial_state(&model, None).unwrap();
    let traj = solver::simulate(&model, &init, 0.0, &sc.solver, None).unwrap();
    assert_eq!(traj.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    io::save_trajectory(&traj, model.names(), model.epsilon(), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
}

#[test]
fn trajectory_save_load_save_is_byte_identical() {
    let sc = load_fixture("bus-model").unwrap();
    let model = sc.build_model().unwrap();
    let init = sc.initial_state(&model, None).unwrap();
    let mut rng = slowfast::RngStream::new(4, 0);
    let traj = solver::simulate(&model, &init, 1.5, &sc.solver, Some(&mut rng)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    io::save_trajectory(&traj, model.names(), model.epsilon(), &a).unwrap();
    let table = io::load_trajectory(&a).unwrap();
    let v = table.column("bus1.v").unwrap();
    for (x, s) in v.iter().zip(&traj.states) {
        assert_eq!(x.to_bits(), s.x_bar[0].to_bits());
    }
    io::write_table(&table, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn scenarios_round_trip_exactly() {
    for (name, _, _) in FIXTURES {
        let sc = load_fixture(name).unwrap();
        let back = Scenario::from_json(&sc.to_json().unwrap()).unwrap();
        assert_eq!(back, sc, "{name}");
        assert_eq!(back.content_hash().unwrap(), sc.content_hash().unwrap());
    }
}

#[test]
fn provenance_detects_tampering() {
    let sc = load_fixture("ou-only").unwrap();
    let mut prov = Provenance::new("ensemble", &sc, Some(2), serde_json::json!({})).unwrap();
    assert!(prov.verify().unwrap());
    prov.scenario["sigma"] = serde_json::json!(0.5);
    assert!(!prov.verify().unwrap());
}

#[test]
fn validation_lists_every_problem() {
    let mut sc = load_fixture("linear-slowfast").unwrap();
    sc.name = String::new();
    sc.horizon = -1.0;
    sc.analysis.kappa = 0.0;
    let err = sc.validate().unwrap_err();
    let text = err.to_string();
    for needle in ["name", "horizon", "kappa"] {
        assert!(text.contains(needle), "{text}");
    }
    assert_eq!(err.exit_code(), 1);
}
