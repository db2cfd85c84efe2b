use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use multicake::geometry::CakeConfig;
use multicake::preferences::{
    linked_bonus_model, log_utility_model, BonusMode, DivisionKey, EpsilonCategoryModel,
    PreferenceModel, Role, ScriptedOracle,
};
use multicake::sperner::{
    solve_envy_free, three_player_square, LabeledTriangulation, SolveOptions, SolveReport,
    FLAG_CONFIRMED_CHOICES,
};
use multicake::triangulation::Triangulation;
use multicake::verifier::{envy_report, player_name, preferred_set};
use multicake::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(p: &[usize]) -> CakeConfig {
    CakeConfig::new(p.to_vec()).unwrap()
}

fn log_pair(c: &CakeConfig, seed: u64) -> Vec<Arc<dyn PreferenceModel>> {
    vec![
        Arc::new(log_utility_model(c, 2 * seed, 0.5).unwrap()),
        Arc::new(log_utility_model(c, 2 * seed + 1, 0.5).unwrap()),
    ]
}

fn bonus_pair() -> Vec<Arc<dyn PreferenceModel>> {
    vec![
        Arc::new(linked_bonus_model(0.5, BonusMode::Same).unwrap()),
        Arc::new(linked_bonus_model(0.5, BonusMode::Different).unwrap()),
    ]
}

fn category_pair(c: &CakeConfig) -> Vec<Arc<dyn PreferenceModel>> {
    let cakes = c.cakes();
    [Role::A, Role::B]
        .into_iter()
        .map(|r| -> Arc<dyn PreferenceModel> {
            if cakes == 3 {
                Arc::new(EpsilonCategoryModel::three_cakes(0.1, r).unwrap())
            } else {
                Arc::new(EpsilonCategoryModel::poker(0.1, r).unwrap())
            }
        })
        .collect()
}

#[test]
fn random_vertices_satisfy_sperner() {
    let cases: Vec<(CakeConfig, u32, Vec<Arc<dyn PreferenceModel>>)> = vec![
        (config(&[2, 2]), 128, bonus_pair()),
        (config(&[2, 2]), 128, log_pair(&config(&[2, 2]), 3)),
        (config(&[2, 3]), 64, log_pair(&config(&[2, 3]), 4)),
        (config(&[3, 3, 3]), 8, category_pair(&config(&[3, 3, 3]))),
        (config(&[3, 3, 3]), 8, log_pair(&config(&[3, 3, 3]), 5)),
        (
            config(&[4, 4, 4, 4]),
            2,
            category_pair(&config(&[4, 4, 4, 4])),
        ),
        (config(&[4, 4, 4]), 4, log_pair(&config(&[4, 4, 4]), 6)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (c, mesh, models) in cases {
        let tri = Triangulation::build_with_cap(&c, mesh, u128::MAX).unwrap();
        let n = tri.vertex_count();
        let lt = LabeledTriangulation::new(tri, models).unwrap();
        for _ in 0..10_000 {
            lt.label(rng.random_range(0..n)).unwrap();
        }
        let check = lt.check_sperner();
        assert!(check.ok, "{c}: {:?}", check.violations.first());
    }
}

#[test]
fn full_cell_count_meets_n_minus_d() {
    let cases: Vec<(CakeConfig, Vec<Vec<Arc<dyn PreferenceModel>>>)> = vec![
        (
            config(&[2, 2]),
            vec![bonus_pair(), log_pair(&config(&[2, 2]), 1)],
        ),
        (
            config(&[2, 3]),
            vec![log_pair(&config(&[2, 3]), 1), log_pair(&config(&[2, 3]), 2)],
        ),
        (
            config(&[3, 3, 3]),
            vec![
                category_pair(&config(&[3, 3, 3])),
                log_pair(&config(&[3, 3, 3]), 1),
            ],
        ),
    ];
    for (c, pairs) in cases {
        let bound = (c.selection_count() - c.dimension()) as u64;
        for models in pairs {
            for mesh in [2, 4, 8] {
                let lt = LabeledTriangulation::new(
                    Triangulation::build(&c, mesh).unwrap(),
                    models.clone(),
                )
                .unwrap();
                let found = lt.count_full_cells().unwrap();
                assert!(found >= bound, "{c} N={mesh}: {found} < {bound}");
            }
        }
    }
}

fn recompute_delta(c: &CakeConfig, models: &[Arc<dyn PreferenceModel>], r: &SolveReport) -> f64 {
    let named: BTreeMap<String, Arc<dyn PreferenceModel>> = r
        .allocation
        .keys()
        .map(|p| {
            (
                p.clone(),
                models[multicake::verifier::player_index(p).unwrap()].clone(),
            )
        })
        .collect();
    envy_report(c, &r.division, &r.allocation, &named)
        .unwrap()
        .delta
}

#[test]
fn reported_delta_matches_the_verifier() {
    let prism = config(&[2, 3]);
    for seed in 0..5 {
        let models = log_pair(&prism, seed);
        let r = solve_envy_free(&prism, &models, &SolveOptions::new(vec![4, 8, 16], 1e-3)).unwrap();
        assert_eq!(
            r.delta.to_bits(),
            recompute_delta(&prism, &models, &r).to_bits()
        );
    }
    let square = config(&[2, 2]);
    let models = bonus_pair();
    let r = solve_envy_free(&square, &models, &SolveOptions::new(vec![2, 4], 1e-3)).unwrap();
    assert_eq!(
        r.delta.to_bits(),
        recompute_delta(&square, &models, &r).to_bits()
    );
    let three: Vec<Arc<dyn PreferenceModel>> = (0..3)
        .map(|i| -> Arc<dyn PreferenceModel> {
            Arc::new(log_utility_model(&square, 30 + i, 0.5).unwrap())
        })
        .collect();
    let r = three_player_square(&three, &SolveOptions::new(vec![4, 8], 1e-3)).unwrap();
    assert_eq!(
        r.delta.to_bits(),
        recompute_delta(&square, &three, &r).to_bits()
    );
}

#[test]
fn lazy_labeling_queries_each_touched_vertex_once() {
    let c = config(&[2, 3]);
    let lt =
        LabeledTriangulation::new(Triangulation::build(&c, 8).unwrap(), log_pair(&c, 2)).unwrap();
    let mut touched = BTreeSet::new();
    let mut last = 0;
    for (i, cell) in lt.triangulation().cells().enumerate() {
        if i % 7 != 0 {
            continue;
        }
        for &v in &cell.vertex_ids {
            lt.label(v).unwrap();
            lt.label(v).unwrap();
            touched.insert(v);
        }
        assert!(lt.query_count() >= last);
        last = lt.query_count();
        assert_eq!(lt.query_count(), touched.len());
    }
    lt.count_full_cells().unwrap();
    assert!(lt.query_count() <= lt.triangulation().vertex_count());
    assert_eq!(lt.query_count(), lt.labeled_count());
}

/// Drives a solve with a choice-only player by answering every request from
/// a hidden utility model, as a person would.
fn solve_with_hidden_player(
    c: &CakeConfig,
    hidden: &dyn PreferenceModel,
    other: Arc<dyn PreferenceModel>,
    options: &SolveOptions,
) -> (SolveReport, Arc<ScriptedOracle>, usize) {
    let oracle = Arc::new(ScriptedOracle::default());
    let models: Vec<Arc<dyn PreferenceModel>> = vec![oracle.clone(), other];
    let mut asked = 0;
    loop {
        match solve_envy_free(c, &models, options) {
            Ok(r) => return (r, oracle, asked),
            Err(Error::AnswerNeeded {
                player,
                mesh,
                coords,
                ..
            }) => {
                assert_eq!(player, "A");
                let key = DivisionKey::new(&coords, mesh);
                let answer = hidden.prefer(c, &key.division()).unwrap();
                oracle.record(c, key, answer).unwrap();
                asked += 1;
            }
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn choice_only_player_is_confirmed_and_replays_exactly() {
    let c = config(&[2, 3]);
    let hidden = log_utility_model(&c, 10, 0.5).unwrap();
    let other: Arc<dyn PreferenceModel> = Arc::new(log_utility_model(&c, 11, 0.5).unwrap());
    let options = SolveOptions::new(vec![2, 4, 8], 1e-3);
    let (r, oracle, asked) = solve_with_hidden_player(&c, &hidden, other.clone(), &options);
    assert!(r.converged && r.disjoint);
    assert!(r.flags.iter().any(|f| f == FLAG_CONFIRMED_CHOICES));
    assert_eq!(asked, oracle.len());
    let best = preferred_set(&hidden, &c, &r.division).unwrap();
    assert!(best.contains(&r.allocation[&player_name(0)]));

    let replay = Arc::new(multicake::preferences::scripted_oracle(oracle.answers()));
    let models: Vec<Arc<dyn PreferenceModel>> = vec![replay, other];
    let again = solve_envy_free(&c, &models, &options).unwrap();
    assert_eq!(
        serde_json::to_string(&r).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}

#[test]
fn missing_answer_is_reported_for_the_owner() {
    let c = config(&[2, 3]);
    let models: Vec<Arc<dyn PreferenceModel>> = vec![
        Arc::new(log_utility_model(&c, 1, 0.5).unwrap()),
        Arc::new(ScriptedOracle::default()),
    ];
    match solve_envy_free(&c, &models, &SolveOptions::new(vec![2], 1e-3)) {
        Err(Error::AnswerNeeded {
            player,
            mesh,
            coords,
            confirmation,
        }) => {
            assert_eq!(player, "B");
            assert!(!confirmation);
            assert_eq!(mesh, 2);
            let pure = coords
                .iter()
                .all(|row| row.iter().filter(|&&y| y > 0).count() == 1);
            assert!(!pure, "pure vertices answer themselves");
        }
        other => panic!("expected a pending answer, got {other:?}"),
    }
}
