use std::collections::{BTreeMap, BTreeSet};

use boltrm_core::cl::{
    run_sequence, select_domains, train_episode, weights_from_nll, BufferConfig, DomainWeights, EnsembleModel,
    EpisodeModel, Maintenance, ReplayBuffer, RunConfig, RunMode, Selection,
};
use boltrm_core::mtf::{DomainImages, EncodedSample};
use boltrm_core::nn::{FeatureGenerator, HeadClassifier, NetConfig};
use boltrm_core::seed::{derive_seed, rng_from_seed};
use boltrm_core::sim::ClassLabel;
use boltrm_core::Error;
use proptest::prelude::*;
use rand::Rng;

const SIZE: usize = 8;

fn tiny_cfg() -> RunConfig {
    RunConfig {
        filters: 4,
        batch_size: 8,
        seed: 11,
        ..RunConfig::default()
    }
}

/// Class `c` lights up a class-specific quadrant on top of noise; domains
/// differ by a global offset.
fn sample(label: usize, domain: u32, rng: &mut impl Rng) -> EncodedSample {
    let mut planes = vec![0f32; 2 * SIZE * SIZE];
    for (i, v) in planes.iter_mut().enumerate() {
        let (r, c) = ((i / SIZE) % SIZE, i % SIZE);
        let quadrant = (r / (SIZE / 2)) * 2 + c / (SIZE / 2);
        let signal = if quadrant == label { 0.6 } else { 0.0 };
        *v = signal + 0.05 * domain as f32 + rng.random_range(0.0..0.3);
    }
    EncodedSample {
        label: ClassLabel::from_index(label).unwrap(),
        planes,
    }
}

fn tiny_domains(d: u32, train: usize, test: usize) -> Vec<DomainImages> {
    let mut rng = rng_from_seed(5);
    (1..=d)
        .map(|id| DomainImages {
            domain_id: id,
            train: (0..train).map(|i| sample(i % 3, id, &mut rng)).collect(),
            test: (0..test).map(|i| sample(i % 3, id, &mut rng)).collect(),
        })
        .collect()
}

fn net() -> NetConfig {
    tiny_cfg().net_config(2, SIZE)
}

#[test]
fn weight_examples() {
    let w = weights_from_nll(&[0.0, 2f64.ln()], 2).unwrap();
    assert!((w.w[0] - 1.0 / 3.0).abs() < 1e-12 && (w.w[1] - 2.0 / 3.0).abs() < 1e-12);
    let w = weights_from_nll(&[0.0; 3], 5).unwrap();
    assert_eq!(&w.w[3..], &[0.0, 0.0]);
    for v in &w.w[..3] {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
    let w = weights_from_nll(&[0.7], 4).unwrap();
    assert_eq!(w.w, vec![1.0, 0.0, 0.0, 0.0]);
    assert!(weights_from_nll(&[], 3).is_err());
    assert!(weights_from_nll(&[f64::NAN], 3).is_err());
}

#[test]
fn huge_losses_stay_finite() {
    let w = weights_from_nll(&[745.0, 740.0, 1.0], 3).unwrap();
    assert!(w.w.iter().all(|v| v.is_finite()));
    assert!((w.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn weights_normalized_and_monotone(
        nll in prop::collection::vec(0.0f64..20.0, 1..8),
        pick in 0usize..8,
        bump in 1e-3f64..5.0,
    ) {
        let d = nll.len() + 2;
        let w = weights_from_nll(&nll, d).unwrap();
        prop_assert!((w.w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.w.iter().all(|&v| v >= 0.0));
        prop_assert!(w.w[nll.len()..].iter().all(|&v| v == 0.0));
        let i = pick % nll.len();
        let mut raised = nll.clone();
        raised[i] += bump;
        let w2 = weights_from_nll(&raised, d).unwrap();
        if nll.len() > 1 {
            prop_assert!(w2.w[i] > w.w[i]);
        }
    }

    #[test]
    fn selection_always_contains_new_domain(
        raw in prop::collection::vec(0.0f64..1.0, 1..10),
        b in 1usize..6,
        seed in any::<u64>(),
        sel in 0usize..5,
    ) {
        let selection = [Selection::Highest, Selection::Multinomial, Selection::Split50,
            Selection::Split10High, Selection::Split10Low][sel];
        let k_next = raw.len() as u32 + 1;
        let total: f64 = raw.iter().sum::<f64>().max(1e-12);
        let weights = DomainWeights { w: raw.iter().map(|v| v / total).collect() };
        let chosen = select_domains(&weights, k_next, b, selection, &mut rng_from_seed(seed));
        prop_assert!(chosen.contains(&k_next));
        prop_assert_eq!(chosen.len(), b.min(k_next as usize));
        prop_assert!(chosen.iter().all(|&d| d >= 1 && d <= k_next));
    }
}

#[test]
fn selection_examples() {
    let mut rng = rng_from_seed(0);
    let w = DomainWeights { w: vec![0.0; 4] };
    assert_eq!(select_domains(&w, 1, 5, Selection::Highest, &mut rng), BTreeSet::from([1]));
    let w = DomainWeights { w: vec![0.1, 0.2, 0.7] };
    assert_eq!(select_domains(&w, 4, 2, Selection::Highest, &mut rng), BTreeSet::from([4, 3]));
    let w = DomainWeights { w: vec![0.5, 0.5] };
    assert_eq!(select_domains(&w, 3, 2, Selection::Highest, &mut rng), BTreeSet::from([3, 1]));
}

#[test]
fn split_selections_mix_high_and_low() {
    // ascending weights: domain 9 is heaviest, domain 1 lightest
    let w = DomainWeights {
        w: (1..=9).map(|i| i as f64 / 45.0).collect(),
    };
    let mut rng = rng_from_seed(0);
    let pick = |s, rng: &mut _| select_domains(&w, 10, 5, s, rng);
    assert_eq!(pick(Selection::Highest, &mut rng), BTreeSet::from([10, 9, 8, 7, 6]));
    assert_eq!(pick(Selection::Split50, &mut rng), BTreeSet::from([10, 9, 8, 1, 2]));
    assert_eq!(pick(Selection::Split10High, &mut rng), BTreeSet::from([10, 9, 1, 2, 3]));
    assert_eq!(pick(Selection::Split10Low, &mut rng), BTreeSet::from([10, 9, 8, 7, 1]));
}

#[test]
fn multinomial_follows_weights() {
    let w = DomainWeights { w: vec![0.8, 0.2, 0.0] };
    let mut rng = rng_from_seed(3);
    let trials = 4000;
    let mut hits = [0usize; 3];
    for _ in 0..trials {
        for d in select_domains(&w, 4, 2, Selection::Multinomial, &mut rng) {
            if d < 4 {
                hits[d as usize - 1] += 1;
            }
        }
    }
    assert_eq!(hits[2], 0);
    // binomial sd at p=0.8 over 4000 draws is ~0.0063
    assert!((hits[0] as f64 / trials as f64 - 0.8).abs() < 0.03, "{hits:?}");
}

fn episode(index: u32, domains: &[u32], seed: u64) -> EpisodeModel {
    let net = net();
    let trunk = FeatureGenerator::init(net, derive_seed(seed, "trunk", index as u64)).unwrap();
    let heads = domains
        .iter()
        .map(|&d| (d, HeadClassifier::init(net, derive_seed(seed, "head", d as u64)).unwrap()))
        .collect();
    EpisodeModel { index, trunk, heads }
}

#[test]
fn predict_averages_covering_episodes() {
    let domains = tiny_domains(1, 4, 4);
    let x = &domains[0].test[0];
    let mut model = EnsembleModel::new(net());
    assert!(matches!(model.predict(x, 1), Err(Error::DomainNotTrained(1))));
    let e1 = episode(1, &[1], 1);
    let single = e1.probs(std::slice::from_ref(x), 1).unwrap();
    model.episodes.push(e1.clone());
    assert_eq!(model.predict(x, 1).unwrap(), single);

    let e2 = episode(2, &[1, 2], 2);
    let other = e2.probs(std::slice::from_ref(x), 1).unwrap();
    model.episodes.push(e2.clone());
    let p = model.predict(x, 1).unwrap();
    for c in 0..3 {
        assert!((p[c] - (single[c] + other[c]) / 2.0).abs() < 1e-15);
    }
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(matches!(model.predict(x, 3), Err(Error::DomainNotTrained(3))));

    let reversed = EnsembleModel {
        net: net(),
        episodes: vec![e2, e1],
    };
    let q = reversed.predict(x, 1).unwrap();
    for c in 0..3 {
        assert!((p[c] - q[c]).abs() < 1e-15);
    }
}

#[test]
fn predict_one_hot_average() {
    // zero weights and a large bias make each head a near one-hot classifier
    let mk = |index: u32, hot: usize| {
        let mut e = episode(index, &[1], 9);
        let head = e.heads.get_mut(&1).unwrap();
        head.weight.data.iter_mut().for_each(|w| *w = 0.0);
        head.bias.data = vec![-800.0; 3];
        head.bias.data[hot] = 0.0;
        e
    };
    let model = EnsembleModel {
        net: net(),
        episodes: vec![mk(1, 0), mk(2, 1)],
    };
    let x = &tiny_domains(1, 1, 1)[0].test[0];
    let p = model.predict(x, 1).unwrap();
    assert_eq!(p, vec![0.5, 0.5, 0.0]);
}

fn labelled(n: usize, label: usize) -> Vec<EncodedSample> {
    (0..n)
        .map(|i| EncodedSample {
            label: ClassLabel::from_index(label).unwrap(),
            planes: vec![i as f32],
        })
        .collect()
}

#[test]
fn small_stream_is_kept_whole() {
    let mut buffer = ReplayBuffer::new(BufferConfig::default());
    let stream = labelled(60, 0);
    buffer.insert(1, &stream, &mut rng_from_seed(0));
    assert_eq!(buffer.count(1), 60);
    let kept: Vec<usize> = buffer.samples(1).iter().map(|s| s.stream_index).collect();
    assert_eq!(kept, (0..60).collect::<Vec<_>>());
}

#[test]
fn reservoir_inclusion_is_uniform() {
    let cap = 20;
    let cfg = BufferConfig {
        capacity_per_domain: cap,
        ..BufferConfig::default()
    };
    let stream = labelled(2 * cap, 1);
    let trials = 1000;
    let mut kept = vec![0usize; 2 * cap];
    let mut rng = rng_from_seed(17);
    for _ in 0..trials {
        let mut buffer = ReplayBuffer::new(cfg);
        // two inserts exercise the carried-over stream position
        buffer.insert(1, &stream[..cap / 2], &mut rng);
        buffer.insert(1, &stream[cap / 2..], &mut rng);
        assert_eq!(buffer.count(1), cap);
        for s in buffer.samples(1) {
            kept[s.stream_index] += 1;
        }
    }
    for (i, &k) in kept.iter().enumerate() {
        let p = k as f64 / trials as f64;
        assert!((p - 0.5).abs() <= 0.05, "sample {i} kept with p = {p}");
    }
}

#[test]
fn reservoir_tracks_class_proportions() {
    let mut stream = labelled(150, 0);
    stream.extend(labelled(90, 1));
    stream.extend(labelled(60, 2));
    let mut buffer = ReplayBuffer::new(BufferConfig::default());
    buffer.insert(2, &stream, &mut rng_from_seed(1));
    let mut counts = [0usize; 3];
    for s in buffer.samples(2) {
        counts[s.sample.label.index()] += 1;
    }
    assert_eq!(counts, [50, 30, 20]);
}

#[test]
fn fifo_keeps_latest() {
    let cfg = BufferConfig {
        capacity_per_domain: 7,
        maintenance: Maintenance::Fifo,
        ..BufferConfig::default()
    };
    let mut buffer = ReplayBuffer::new(cfg);
    let stream = labelled(25, 2);
    let mut rng = rng_from_seed(0);
    buffer.insert(3, &stream[..10], &mut rng);
    buffer.insert(3, &stream[10..], &mut rng);
    let kept: Vec<usize> = buffer.samples(3).iter().map(|s| s.stream_index).collect();
    assert_eq!(kept, (18..25).collect::<Vec<_>>());
}

#[test]
fn draw_is_class_balanced() {
    let mut stream = labelled(80, 0);
    stream.extend(labelled(10, 1));
    stream.extend(labelled(10, 2));
    let mut buffer = ReplayBuffer::new(BufferConfig::default());
    buffer.insert(1, &stream, &mut rng_from_seed(0));
    let drawn = buffer.draw(1, 30, None, &mut rng_from_seed(1));
    let mut counts = [0usize; 3];
    for s in &drawn {
        counts[s.sample.label.index()] += 1;
    }
    assert_eq!(counts, [10, 10, 10]);
    assert_eq!(buffer.draw(1, 500, None, &mut rng_from_seed(1)).len(), 100);
}

#[test]
fn episode_freezes_earlier_models() {
    let domains = tiny_domains(3, 24, 9);
    let train: Vec<&[EncodedSample]> = domains.iter().map(|d| d.train.as_slice()).collect();
    let cfg = tiny_cfg();
    let mut model = EnsembleModel::new(net());
    let mut buffer = ReplayBuffer::new(cfg.buffer);
    for k in 1..=3u32 {
        let before: Vec<String> = model.episodes.iter().map(|e| e.checkpoint_hash().unwrap()).collect();
        let selected: BTreeSet<u32> = (1..=k).collect();
        let stats = train_episode(&train, &buffer, &mut model, &cfg, k, &selected).unwrap();
        let after: Vec<String> = model.episodes.iter().map(|e| e.checkpoint_hash().unwrap()).collect();
        assert_eq!(&after[..before.len()], &before[..]);
        assert_eq!(stats.trained, (1..=k).collect::<Vec<_>>());
        for d in 1..k {
            assert_eq!(stats.replay_counts[&d], 24);
        }
        buffer.insert(k, train[k as usize - 1], &mut rng_from_seed(k as u64));
    }
}

#[test]
fn missing_buffer_falls_back() {
    let domains = tiny_domains(2, 12, 3);
    let train: Vec<&[EncodedSample]> = domains.iter().map(|d| d.train.as_slice()).collect();
    let cfg = tiny_cfg();
    let mut model = EnsembleModel::new(net());
    let buffer = ReplayBuffer::new(cfg.buffer);
    let stats = train_episode(&train, &buffer, &mut model, &cfg, 2, &BTreeSet::from([1, 2])).unwrap();
    assert_eq!(stats.trained, vec![2]);
    assert!(model.episodes[0].covers(2) && !model.episodes[0].covers(1));
}

#[test]
fn run_is_deterministic_and_frozen() {
    let domains = tiny_domains(4, 30, 12);
    let cfg = RunConfig { b: 3, ..tiny_cfg() };
    let a = run_sequence(&domains, SIZE, &cfg).unwrap();
    let b = run_sequence(&domains, SIZE, &cfg).unwrap();
    assert_eq!(a.accuracy, b.accuracy);
    assert_eq!(a.hashes_mid_run, b.hashes_mid_run);
    assert_eq!(a.episodes, b.episodes);

    for (k, row) in a.accuracy.rows().iter().enumerate() {
        assert_eq!(row.len(), k + 1);
    }
    let last = a.hashes_mid_run.last().unwrap();
    for mid in &a.hashes_mid_run {
        assert_eq!(&last[..mid.len()], &mid[..]);
    }
    for e in &a.episodes {
        assert!(e.stats.trained.len() <= 3 && e.stats.trained.contains(&e.index));
        assert!((e.weights.w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(e.weights.w[e.index as usize..].iter().all(|&w| w == 0.0));
    }
    for p in &a.predictions {
        let row = a.accuracy.final_row().unwrap()[p.domain_id as usize - 1];
        assert_eq!(p.accuracy(), row);
    }
}

#[test]
fn isolated_matches_b1() {
    let domains = tiny_domains(3, 18, 9);
    let iso = RunConfig {
        mode: RunMode::Isolated,
        b: 3,
        ..tiny_cfg()
    };
    let b1 = RunConfig { b: 1, ..tiny_cfg() };
    let a = run_sequence(&domains, SIZE, &iso).unwrap();
    let b = run_sequence(&domains, SIZE, &b1).unwrap();
    let d = a.accuracy.d();
    for i in 0..d {
        assert_eq!(a.accuracy.get(i, i), b.accuracy.get(i, i));
    }
    assert_eq!(a.hashes_mid_run, b.hashes_mid_run);
    // an isolated episode covers only its own domain
    for (k, e) in a.model.episodes.iter().enumerate() {
        assert_eq!(e.trained_domains().collect::<Vec<_>>(), vec![k as u32 + 1]);
    }
}

#[test]
fn parameter_accounting() {
    let domains = tiny_domains(4, 12, 3);
    let cfg = RunConfig { b: 2, ..tiny_cfg() };
    let out = run_sequence(&domains, SIZE, &cfg).unwrap();
    let n = net();
    let g = FeatureGenerator::init(n, 0).unwrap().param_count();
    let h = HeadClassifier::zeros(n).param_count();
    let heads: usize = out.episodes.iter().map(|e| e.stats.trained.len()).sum();
    assert_eq!(out.model.param_count(), 4 * g + heads * h);
    let per_episode: BTreeMap<u32, usize> = out
        .model
        .episodes
        .iter()
        .map(|e| (e.index, e.heads.len()))
        .collect();
    assert_eq!(per_episode[&1], 1);
    assert!(per_episode.values().all(|&c| c <= 2));
}

#[test]
fn checkpoints_round_trip() {
    let e = episode(3, &[1, 3], 4);
    let bytes = e.checkpoint_bytes().unwrap();
    let back = EpisodeModel::from_checkpoint(3, net(), &bytes).unwrap();
    assert_eq!(back, e);
    assert_eq!(back.checkpoint_hash().unwrap(), e.checkpoint_hash().unwrap());
}

#[test]
fn bad_configs_are_rejected() {
    let domains = tiny_domains(2, 6, 3);
    let cfg = RunConfig { b: 3, ..tiny_cfg() };
    assert!(matches!(run_sequence(&domains, SIZE, &cfg), Err(Error::Config { .. })));
    let cfg = RunConfig {
        validation_fraction: 0.0,
        ..tiny_cfg()
    };
    assert!(matches!(run_sequence(&domains, SIZE, &cfg), Err(Error::Config { .. })));
}
