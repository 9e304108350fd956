mod support;

use std::collections::BTreeMap;
use std::time::Duration;

use boltrm_cli::config::{AblationRow, ExperimentConfig};
use boltrm_cli::manifest::{read_json, record, write, write_json, StageRecord, PIPELINE_FILE};
use boltrm_cli::stages::{EpisodeFile, MetricsFile};
use boltrm_core::cl::Selection;
use boltrm_core::metrics::DomainScores;
use proptest::prelude::*;

fn selection() -> impl Strategy<Value = Selection> {
    prop_oneof![
        Just(Selection::Highest),
        Just(Selection::Multinomial),
        Just(Selection::Split50),
        Just(Selection::Split10High),
        Just(Selection::Split10Low),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_survives_toml(
        seed in any::<u64>(),
        b in 1usize..=10,
        sel in selection(),
        lr in 1e-4f64..0.1,
        rows in prop::collection::vec((1usize..=10, 1usize..=3), 0..4),
    ) {
        let mut cfg = ExperimentConfig::with_seed(seed);
        cfg.run.seed = seed;
        cfg.run.b = b;
        cfg.run.selection = sel;
        cfg.run.optim.lr = lr;
        cfg.ablation = rows
            .iter()
            .enumerate()
            .map(|(i, &(b, conv))| AblationRow { b: Some(b), conv: Some(conv), ..AblationRow::named(format!("r{i}")) })
            .collect();
        let text = toml::to_string(&cfg).unwrap();
        prop_assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn episode_and_metrics_survive_json(
        index in 1u32..20,
        loss in 0.0f64..10.0,
        replay in prop::collection::btree_map(1u32..10, 0usize..500, 0..5),
        accs in prop::collection::vec(0.0f64..=1.0, 1..6),
    ) {
        let dir = support::scratch(&format!("json-{index}-{}", replay.len()));
        let ep = EpisodeFile {
            index,
            trained: replay.keys().copied().chain([index]).collect(),
            replay_counts: replay.clone(),
            samples_seen: replay.values().sum(),
            steps: 3,
            mean_loss: loss,
            trunk_seed: index as u64 * 31,
            head_seeds: replay.keys().map(|&d| (d, d as u64 + 7)).collect(),
            checkpoint: format!("episode_{index}.brm"),
            checkpoint_sha256: "ab".repeat(32),
            hashes_after_episode: vec!["cd".repeat(32); index as usize],
        };
        write_json(&dir.join("ep.json"), &ep).unwrap();
        prop_assert_eq!(read_json::<EpisodeFile>(&dir.join("ep.json")).unwrap(), ep);

        let per_domain: BTreeMap<u32, DomainScores> = accs
            .iter()
            .enumerate()
            .map(|(i, &a)| (i as u32 + 1, DomainScores { precision: a, recall: a / 2.0, f1: a / 3.0, support: i * 10, zero_division: i % 2 == 0 }))
            .collect();
        let m = MetricsFile { acc: accs[0], la: loss / 10.0, fm: accs.get(1).copied(), per_domain, friedman: None, cd: None };
        write_json(&dir.join("m.json"), &m).unwrap();
        prop_assert_eq!(read_json::<MetricsFile>(&dir.join("m.json")).unwrap(), m);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn stage_records_survive_disk(contents in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..64), 1..4), ms in 0u64..100_000) {
        let dir = support::scratch(&format!("rec-{}-{ms}", contents.len()));
        let paths: Vec<_> = contents
            .iter()
            .enumerate()
            .map(|(i, bytes)| {
                let p = dir.join(format!("f{i}.bin"));
                write(&p, bytes).unwrap();
                p
            })
            .collect();
        record(&dir, "s", "fp", &paths, Duration::from_millis(ms)).unwrap();
        let back: BTreeMap<String, StageRecord> = read_json(&dir.join(PIPELINE_FILE)).unwrap();
        prop_assert_eq!(back["s"].outputs.len(), contents.len());
        prop_assert_eq!(back["s"].wall_clock_ms, ms);
        let again = serde_json::to_string(&back).unwrap();
        prop_assert_eq!(serde_json::from_str::<BTreeMap<String, StageRecord>>(&again).unwrap(), back);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
