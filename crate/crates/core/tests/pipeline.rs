use nodepro_core::embedding::EmbeddingMatrix;
use nodepro_core::profile::{profile_all, read_profiles_csv, write_profiles_csv, ProfileConfig};
use nodepro_core::report::{node_profile_table, read_report_csv, write_report_csv};
use nodepro_core::split::make_split;
use nodepro_core::synth::{kb_harness, load_mask, planted_partition, save_mask, KBConfig, PlantedConfig};
use nodepro_core::train::{train, TrainConfig};
use nodepro_core::uncertainty::{categorize, uncertainties, PredictionTrace, TaxonomyConfig};
use nodepro_core::LabeledDataset;

fn planted(seed: u64) -> LabeledDataset {
    planted_partition(&PlantedConfig { num_nodes: 120, num_classes: 3, seed, ..Default::default() }).unwrap()
}

#[test]
fn saved_dataset_loads_back_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let ds = planted(3);
    ds.save(dir.path()).unwrap();
    let d = dir.path();
    let back = LabeledDataset::load(
        &d.join("edges.tsv"),
        &d.join("features.npfx"),
        &d.join("labels.tsv"),
        3,
        false,
        true,
    )
    .unwrap();
    assert_eq!(back.graph, ds.graph);
    // NPFX holds float32, so the reloaded matrix is the rounded one.
    assert_eq!(back.features.to_npfx(), ds.features.to_npfx());
    for (a, b) in back.features.values().iter().zip(ds.features.values()) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
    }
    assert_eq!(back.labels, ds.labels);
}

/// Profile, train, join and serialize; returns every produced byte stream.
fn run_pipeline(ds: &LabeledDataset, dir: &std::path::Path) -> Vec<Vec<u8>> {
    let profiles = profile_all(ds, &ProfileConfig::default()).unwrap();
    let cfg = TrainConfig { max_epochs: 60, num_checkpoints: 12, hidden_dim: 16, ..Default::default() };
    let split = make_split(ds.num_nodes(), cfg.split_mode, cfg.seed).unwrap();
    let out = train(ds, &split, &cfg).unwrap();
    let u = uncertainties(&out.trace, &ds.labels).unwrap();
    let cats = categorize(&u, &TaxonomyConfig::default());
    let table = node_profile_table(&profiles, &u, &cats).unwrap();

    let mut prof_csv = Vec::new();
    write_profiles_csv(&profiles, &mut prof_csv).unwrap();
    assert_eq!(read_profiles_csv(prof_csv.as_slice()).unwrap(), profiles);
    let mut report_csv = Vec::new();
    write_report_csv(&table, &mut report_csv).unwrap();
    assert_eq!(read_report_csv(report_csv.as_slice()).unwrap(), table);

    out.trace.save(&dir.join("trace.nptr")).unwrap();
    out.embeddings.save(&dir.join("emb.npem")).unwrap();
    assert_eq!(PredictionTrace::load(&dir.join("trace.nptr")).unwrap(), out.trace);
    assert_eq!(EmbeddingMatrix::load(&dir.join("emb.npem")).unwrap(), out.embeddings);
    vec![prof_csv, report_csv, out.trace.to_nptr(), out.embeddings.to_npem()]
}

#[test]
fn pipeline_is_deterministic_across_thread_counts() {
    let ds = planted(8);
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_pipeline(&ds, dir.path()))
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run_pipeline(&ds, dir.path()));
}

#[test]
fn kb_masks_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let kb = kb_harness(&KBConfig { num_entities: 80, num_triplets: 150, seed: 5, ..Default::default() }).unwrap();
    for (name, mask) in [("corrupted.tsv", &kb.corrupted), ("flipped.tsv", &kb.flipped)] {
        let path = dir.path().join(name);
        save_mask(mask, &path).unwrap();
        assert_eq!(&load_mask(&path).unwrap(), mask);
    }
    assert_eq!(kb.flipped.iter().filter(|&&f| f).count(), 45);
}
