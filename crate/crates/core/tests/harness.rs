mod common;

use arisnoma::env::{ActionLayout, ScenarioConfig};
use arisnoma::harness::export::{export, read_metric_rows, write_metrics, Manifest, METRIC_HEADER};
use arisnoma::harness::run::{evaluate_policy, evaluate_random};
use arisnoma::harness::{oracle_search, run_sweep, Controller, ExperimentConfig, Mode, OracleConfig, SweepVariable};
use arisnoma::hppo::Checkpoint;
use arisnoma::network::{ChannelRealization, ComposedLinks, RadioConfig, Topology, User, UserRole};
use arisnoma::ris::RisMode;
use arisnoma::Error;
use common::PanelCfg;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixed_only(q_phase: usize) -> OracleConfig {
    OracleConfig {
        q_phase,
        q_lambda: 1,
        q_amp: 1,
        uav_grid: 1,
        ..OracleConfig::default()
    }
}

#[test]
fn single_element_oracle_is_max_of_four() {
    let mut sc = ScenarioConfig::tiny();
    sc.ris.elements = [1, 1];
    sc.ris.mode = RisMode::Passive;
    for seed in 0..5 {
        let best = oracle_search(&sc, &fixed_only(4), seed).unwrap();
        assert_eq!(best.evaluated, 4);
        let topo = sc.topology(seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = ChannelRealization::sample(&topo, &sc.link, sc.ris.elements, &mut rng).unwrap();
        let radio = sc.radio.resolve().unwrap();
        let explicit = [-std::f64::consts::PI, -std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::FRAC_PI_2]
            .iter()
            .map(|&t| {
                let panels: Vec<PanelCfg> = (0..2)
                    .map(|_| PanelCfg {
                        phase: vec![t],
                        amp: vec![1.0],
                        amplitude: 1.0,
                        active: false,
                    })
                    .collect();
                common::rates(&topo, &ch, &panels, &[0.75, 0.75], &[radio.p_t; 2], radio.sigma2, 0.0, sc.edge_variant, false).total
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((best.sum_rate - explicit).abs() < 1e-12 * explicit);
    }
}

#[test]
fn oracle_matches_independent_enumeration() {
    let q = OracleConfig {
        q_phase: 8,
        q_lambda: 5,
        q_amp: 4,
        ..OracleConfig::default()
    };
    for mode in [RisMode::Passive, RisMode::Active] {
        let mut sc = ScenarioConfig::tiny();
        sc.ris.mode = mode;
        for seed in [1, 2] {
            let a = oracle_search(&sc, &q, seed).unwrap().sum_rate;
            let b = common::nested_loop_oracle(&sc, &q, seed);
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{mode:?} seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn passive_oracle_never_beats_active() {
    let q = OracleConfig::default();
    for seed in 0..5 {
        let mut sc = ScenarioConfig::tiny();
        sc.ris.mode = RisMode::Passive;
        let p = oracle_search(&sc, &q, seed).unwrap().sum_rate;
        sc.ris.mode = RisMode::Active;
        let a = oracle_search(&sc, &q, seed).unwrap().sum_rate;
        assert!(a >= p, "seed {seed}: {a} < {p}");
    }
}

#[test]
fn oracle_ties_keep_smallest_index() {
    // Without panels every phase choice gives the same rate.
    let mut sc = ScenarioConfig::tiny();
    sc.ris.elements = [1, 1];
    sc.ris.mode = RisMode::Passive;
    sc.ris.amplitude = 1e-300;
    let r = oracle_search(&sc, &fixed_only(4), 0).unwrap();
    assert_eq!(r.index, 0);
}

#[test]
fn oracle_uav_grid_covers_admissible_points() {
    let mut sc = ScenarioConfig::tiny();
    sc.ris.elements = [1, 1];
    sc.ris.mode = RisMode::Passive;
    let q = OracleConfig {
        uav_grid: 3,
        ..fixed_only(2)
    };
    let r = oracle_search(&sc, &q, 4).unwrap();
    assert_eq!(r.evaluated, 9 * 2);
    assert!(sc.layout.flight_area.contains(r.uav.0, r.uav.1));
}

fn two_user_topology() -> Topology {
    let mut sc = ScenarioConfig::tiny();
    sc.ris.layout = ActionLayout::Shared;
    let mut t = sc.topology(0).unwrap();
    t.users = vec![User {
        pos: [0.0, 0.0, 0.0],
        role: UserRole::Center { bs: 0 },
    }];
    t
}

#[test]
fn oma_rate_examples() {
    let topo = two_user_topology();
    let radio = RadioConfig {
        p_t: 3.0,
        p_t_per_bs: None,
        sigma2: 1.0,
        bandwidth: 1.0,
        carrier: 1.0,
    };
    let links = ComposedLinks {
        gains: vec![vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(0.0, 0.0)]],
        ris_noise: vec![0.0],
    };
    let r = arisnoma::harness::rate_oma(&topo, &links, &radio);
    assert!((r.r_total - 1.0).abs() < 1e-15);
    let zero = ComposedLinks {
        gains: vec![vec![Complex64::new(0.0, 0.0)]; 2],
        ris_noise: vec![0.0],
    };
    assert_eq!(arisnoma::harness::rate_oma(&topo, &zero, &radio).r_total, 0.0);
}

#[test]
fn oma_matches_reference_instance() {
    let sc = ScenarioConfig {
        placement_seed: Some(3),
        ..ScenarioConfig::default()
    };
    let topo = sc.topology(0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ch = ChannelRealization::sample(&topo, &sc.link, sc.ris.elements, &mut rng).unwrap();
    let radio = sc.radio.resolve().unwrap();
    let states = sc.ris.panel_states(&vec![0.4; 32], &vec![2.0; 32]);
    let noise = sc.noise(&radio);
    let links = arisnoma::network::PreparedChannels::new(&ch).compose(&states, &noise).unwrap();
    let got = arisnoma::harness::rate_oma(&topo, &links, &radio);
    let panels: Vec<PanelCfg> = (0..2)
        .map(|_| PanelCfg {
            phase: vec![0.4; 16],
            amp: vec![2.0; 16],
            amplitude: 1.0,
            active: true,
        })
        .collect();
    let want = common::rates(&topo, &ch, &panels, &[0.75; 3], &[radio.p_t; 3], radio.sigma2, noise.sigma_v2, sc.edge_variant, true);
    assert!((got.r_total - want.total).abs() < 1e-9);
}

fn small_sweep() -> ExperimentConfig {
    let mut c = ExperimentConfig::tiny();
    c.realizations = 3;
    c.sweep.values = vec![0.0];
    c.oracle.q_phase = 4;
    c.oracle.q_lambda = 3;
    c.oracle.q_amp = 2;
    c
}

#[test]
fn single_point_single_realization_flags_interval() {
    let mut c = small_sweep();
    c.realizations = 1;
    let out = run_sweep(&c).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].ci95_half_width, None);
}

#[test]
fn identical_points_give_identical_means() {
    let mut c = small_sweep();
    c.sweep.values = vec![10.0, 10.0];
    let out = run_sweep(&c).unwrap();
    assert_eq!(out.rows[0].mean_sum_rate.to_bits(), out.rows[1].mean_sum_rate.to_bits());
    c.sweep.controller = Controller::Random;
    c.env.episode_len = 5;
    let out = run_sweep(&c).unwrap();
    assert_eq!(out.rows[0].mean_sum_rate.to_bits(), out.rows[1].mean_sum_rate.to_bits());
}

#[test]
fn oracle_sweep_is_monotone_in_power() {
    let mut c = small_sweep();
    c.realizations = 8;
    c.sweep.values = vec![-30.0, -10.0, 10.0, 30.0];
    let rows = run_sweep(&c).unwrap().rows;
    for w in rows.windows(2) {
        assert!(w[1].mean_sum_rate >= w[0].mean_sum_rate);
    }
}

#[test]
fn element_sweep_resizes_panels() {
    let mut c = small_sweep();
    c.sweep.variable = SweepVariable::Elements;
    c.sweep.values = vec![1.0, 2.0];
    c.sweep.controller = Controller::Random;
    c.env.episode_len = 3;
    let out = run_sweep(&c).unwrap();
    assert_eq!(out.rows.len(), 2);
    assert_eq!(out.rows[1].variable, "elements");
}

fn untrained(c: &ExperimentConfig) -> Checkpoint {
    let sc = c.resolved_scenario();
    let env = arisnoma::env::Env::new(sc.clone(), c.resolved_env(), 0).unwrap();
    let p = arisnoma::hppo::trainer::initial_params(&env, &c.train, 5);
    Checkpoint::new(p, "untrained".into(), 5, env.action_spec())
}

fn eval_cfg() -> ExperimentConfig {
    let mut c = ExperimentConfig::tiny();
    c.env.episode_len = 10;
    c
}

#[test]
fn untrained_evaluation_is_reproducible() {
    let c = eval_cfg();
    let ck = untrained(&c);
    let a = evaluate_policy(&ck, &c, 4).unwrap();
    let b = evaluate_policy(&ck, &c, 4).unwrap();
    assert_eq!(a.row, b.row);
    assert_eq!(a.realizations, b.realizations);
}

#[test]
fn passive_matches_active_at_unit_amplification() {
    let mut c = eval_cfg();
    c.scenario.ris.sigma_v2 = Some(0.0);
    let mut ck = untrained(&c);
    // Drive every amplification mean deep into saturation at p -> 1.
    let spec = ck.action;
    let hidden = ck.params.mean_head.input_dim();
    let n_out = ck.params.mean_head.output_dim();
    let bias0 = hidden * n_out;
    for i in spec.n_phase + spec.n_lambda..n_out {
        ck.params.mean_head.params[bias0 + i] = -50.0;
        for j in 0..hidden {
            ck.params.mean_head.params[i * hidden + j] = 0.0;
        }
    }
    c.mode = Mode::ArisNoma;
    let active = evaluate_policy(&ck, &c, 3).unwrap().row.mean_sum_rate;
    c.mode = Mode::PrisNoma;
    let passive = evaluate_policy(&ck, &c, 3).unwrap().row.mean_sum_rate;
    assert!((active - passive).abs() <= 1e-9 * passive, "{active} vs {passive}");
}

#[test]
fn incompatible_checkpoint_is_refused() {
    let c = eval_cfg();
    let ck = untrained(&c);
    let mut other = c.clone();
    other.scenario.ris.elements = [3, 3];
    assert!(matches!(evaluate_policy(&ck, &other, 2), Err(Error::IncompatibleCheckpoint(_))));
}

#[test]
fn random_baseline_is_reproducible() {
    let c = eval_cfg();
    assert_eq!(evaluate_random(&c, 3).unwrap().row, evaluate_random(&c, 3).unwrap().row);
}

#[test]
fn empty_rows_give_header_only_table() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    write_metrics(&p, &[]).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), METRIC_HEADER.join(",") + "\n");
    assert!(read_metric_rows(&p).unwrap().is_empty());
}

#[test]
fn export_is_byte_identical_and_manifest_round_trips() {
    let mut c = small_sweep();
    c.sweep.values = vec![-10.0, 10.0];
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let m1 = export(&run_sweep(&c).unwrap(), &c, "sweep", d1.path()).unwrap();
    let m2 = export(&run_sweep(&c).unwrap(), &c, "sweep", d2.path()).unwrap();
    assert_eq!(m1, m2);
    for f in m1.files.iter().chain(std::iter::once(&"manifest.json".to_string())) {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        let b = std::fs::read(d2.path().join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let back = Manifest::load(&d1.path().join("manifest.json")).unwrap();
    assert_eq!(back.config, c);
    let rows = read_metric_rows(&d1.path().join("metrics.csv")).unwrap();
    assert_eq!(rows, run_sweep(&c).unwrap().rows);
    for fig in ["fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c"] {
        assert!(m1.files.iter().any(|f| f.starts_with(&format!("figures/{fig}"))), "{fig} missing");
    }
}

#[test]
fn export_to_unwritable_path_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let c = small_sweep();
    let err = export(&Default::default(), &c, "sweep", &blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}
