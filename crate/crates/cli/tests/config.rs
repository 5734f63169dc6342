use invbench::models::ModelKind;
use invbench::problems::ProblemKind;
use invbench_cli::RunConfig;
use proptest::prelude::*;

#[test]
fn default_config_round_trips() {
    let cfg = RunConfig::default();
    let text = cfg.to_toml();
    assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    assert_eq!(cfg.data.train_samples, 10_000);
    assert_eq!(cfg.models.len(), 11);
}

#[test]
fn omitted_sections_take_defaults() {
    let cfg = RunConfig::parse("seed = 3\n[schedule]\nepochs = 5\n").unwrap();
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.schedule.epochs, 5);
    assert_eq!(cfg.schedule.batch_size, 256);
    assert_eq!(cfg.eval.conditions, 250);
    assert_eq!(cfg.eval.samples, 256);
    assert_eq!(cfg.ballistics.gravity, 9.81);
}

#[test]
fn invalid_configs_are_rejected() {
    let cases = [
        ("", "seed"),
        ("seed = 1\nmodel_list = []\n", "unknown field"),
        ("seed = 1\nmodels = []\n", "empty"),
        ("seed = 1\nmodels = [\"inn\", \"inn\"]\n", "twice"),
        ("seed = 1\nmodels = [\"gan\"]\n", "unknown variant"),
        ("seed = 1\n[losses.cinn]\nkind = \"l2_mmd\"\nalpha = 1.0\nbeta = 1.0\nsigma = 0.1\n", "cannot be trained"),
        ("seed = 1\n[losses.nope]\nkind = \"l2_mmd\"\nalpha = 1.0\nbeta = 1.0\nsigma = 0.1\n", "unknown model"),
        ("seed = 1\n[schedule]\nepochs = 0\n", "positive"),
        ("seed = 1\n[eval]\neps = -0.1\n", "eps"),
        ("seed = 1\n[model]\nlipschitz = 1.5\n", "lipschitz"),
        ("seed = 1\n[kinematics]\nlengths = [0.5, -0.5, 1.0]\n", "lengths"),
        ("seed = 1\n[plot]\nkinematics_target = [1.0]\n", "targets"),
    ];
    for (text, needle) in cases {
        let e = RunConfig::parse(text).expect_err(text).to_string();
        assert!(e.contains(needle), "{text:?}: {e}");
    }
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        0u64..=i64::MAX as u64,
        proptest::sample::subsequence(ModelKind::ALL.to_vec(), 1..=11),
        proptest::sample::subsequence(vec![ProblemKind::Kinematics, ProblemKind::Ballistics], 1..=2),
        1e-6f64..1.0,
        0.01f64..10.0,
        proptest::option::of(1e-4f64..1.0),
        1usize..100_000,
        (0.5f64..20.0, 1e-3f64..1.0),
    )
        .prop_map(|(seed, models, problems, lr, sigma, eps, budget, (g, drag))| {
            let mut cfg = RunConfig {
                seed,
                models,
                problems,
                ..RunConfig::default()
            };
            cfg.schedule.adam.lr = lr;
            cfg.eval.eps = eps;
            cfg.model.budget = budget;
            cfg.ballistics.gravity = g;
            cfg.ballistics.drag = drag;
            let mut spec = invbench::losses::LossSpec::new(invbench::losses::LossKind::MlYz);
            spec.sigma = sigma;
            cfg.losses.insert("inn".into(), spec);
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_serialize_parse_is_identity(cfg in arb_config()) {
        let once = RunConfig::parse(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&once, &cfg);
        let twice = RunConfig::parse(&once.to_toml()).unwrap();
        prop_assert_eq!(twice, once);
    }
}
