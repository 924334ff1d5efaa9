use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nodepro_core::features::load_features;
use nodepro_core::graph::{load_graph, LoadOptions};
use nodepro_core::inductive::{
    categorization_accuracy, ground_truth_categories, knn_categorize, write_result_csv, InductiveConfig,
};
use nodepro_core::labels::load_labels;
use nodepro_core::profile::{
    icfd, ncd, read_profiles_csv, rwcd, write_profiles_csv, write_walk_counts_csv, DataProfile,
    ProfileConfig,
};
use nodepro_core::report::{node_profile_table, read_report_csv, write_report_csv, write_scatter_csv};
use nodepro_core::split::{make_split, SplitMask, SplitMode};
use nodepro_core::synth::{kb_harness, load_mask, planted_partition, save_mask, KBConfig, PlantedConfig};
use nodepro_core::train::{evaluate_checkpoints, per_category_curves, train, write_curves_csv, TrainConfig};
use nodepro_core::uncertainty::{categorize, uncertainties, PredictionTrace};
use nodepro_core::embedding::EmbeddingMatrix;
use nodepro_core::{Error, LabeledDataset, Result};
use serde_json::json;

use crate::{Cli, Command, DatasetArgs, InductArgs, KbArgs, PlantedArgs, ProfileArgs, ReportArgs, SplitKind, SynthCommand, TrainArgs};

/// What a command read and wrote, for the manifest.
pub struct Outcome {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Lines to print on stdout.
    pub stdout: Vec<String>,
}

impl Outcome {
    fn new(command: &str, out_dir: &Path) -> Outcome {
        Outcome {
            command: command.into(),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            out_dir: out_dir.to_path_buf(),
            stdout: Vec::new(),
        }
    }

    fn output(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Writes a CSV-style output through `f` and records it.
    fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.output(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.outputs.push(path);
        Ok(())
    }

    /// Records an output written elsewhere, plus its sidecar when present.
    fn record(&mut self, path: PathBuf) {
        let sidecar = nodepro_core::binfmt::sidecar_path(&path);
        self.outputs.push(path);
        if sidecar.exists() {
            self.outputs.push(sidecar);
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Read {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn load_dataset(args: &DatasetArgs, out: &mut Outcome) -> Result<LabeledDataset> {
    out.inputs.extend([args.edges.clone(), args.features.clone(), args.labels.clone()]);
    LabeledDataset::load(
        &args.edges,
        &args.features,
        &args.labels,
        args.num_classes,
        args.directed,
        !args.no_symmetrize,
    )
}

fn dataset_config(args: &DatasetArgs) -> serde_json::Value {
    json!({
        "num_classes": args.num_classes,
        "directed": args.directed,
        "symmetrize": !args.no_symmetrize,
    })
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Profile(a) => profile(a, cli.seed),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Report(a) => report(a),
        Command::Induct(a) => induct(a),
        Command::Synth(SynthCommand::Planted(a)) => planted(a, cli.seed),
        Command::Synth(SynthCommand::Kb(a)) => kb(a, cli.seed),
        Command::Rerun(_) => unreachable!("handled by the caller"),
    }
}

pub fn profile_config(a: &ProfileArgs, seed: u64) -> ProfileConfig {
    ProfileConfig {
        epsilon: a.epsilon,
        walks_per_node: a.walks,
        walk_length: a.walk_length,
        walk_seed: seed,
        neighborhood: a.neighborhood,
        count_walk_start: a.count_walk_start,
        weighted_walks: false,
    }
}

fn profile(a: &ProfileArgs, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::new("profile", &a.out);
    let cfg = profile_config(a, seed);
    cfg.validate()?;
    let ds = load_dataset(&a.data, &mut out)?;
    create_dir(&a.out)?;

    let s_f = icfd(&ds.features, &ds.labels)?;
    let s_l = ncd(&ds.graph, &ds.labels, &cfg)?;
    let walks = rwcd(&ds.graph, &ds.labels, &cfg)?;
    let profiles: Vec<DataProfile> = (0..ds.num_nodes())
        .map(|v| DataProfile {
            s_f: s_f.values[v],
            s_l: s_l.values[v],
            s_h: walks.scores.values[v],
            flags: s_f.flags[v] | s_l.flags[v] | walks.scores.flags[v],
        })
        .collect();
    out.write_with("profiles.csv", |w| write_profiles_csv(&profiles, w))?;
    if a.walk_counts {
        out.write_with("walk_counts.csv", |w| write_walk_counts_csv(&walks.counts, w))?;
    }
    out.config = json!({ "dataset": dataset_config(&a.data), "profile": cfg });
    Ok(out)
}

pub fn train_config(a: &TrainArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        model: a.model,
        hidden_dim: a.hidden,
        num_layers: a.layers,
        learning_rate: a.lr,
        max_epochs: a.max_epochs,
        patience: a.patience,
        num_checkpoints: a.checkpoints,
        seed,
        split_mode: match a.split {
            SplitKind::Full => SplitMode::Full,
            SplitKind::Partial => SplitMode::Partial {
                train_frac: a.train_frac,
                val_frac: a.val_frac,
            },
        },
        neighborhood: a.neighborhood,
    }
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::new("train", &a.out);
    let cfg = train_config(a, seed);
    cfg.validate()?;
    let taxonomy = a.taxonomy.config()?;
    let ds = load_dataset(&a.data, &mut out)?;
    let split = match &a.split_file {
        Some(p) => {
            out.inputs.push(p.clone());
            let s = SplitMask::load(p)?;
            if s.len() != ds.num_nodes() {
                return Err(Error::Invalid(format!(
                    "split file covers {} nodes, dataset has {}",
                    s.len(),
                    ds.num_nodes()
                )));
            }
            s
        }
        None => make_split(ds.num_nodes(), cfg.split_mode, seed)?,
    };
    let augmented = match (&a.augmented_edges, &a.augmented_features) {
        (Some(e), Some(f)) => {
            out.inputs.extend([e.clone(), f.clone()]);
            let features = load_features(f)?;
            let graph = load_graph(
                e,
                LoadOptions {
                    num_nodes: Some(features.num_nodes()),
                    directed: a.data.directed,
                    symmetrize: !a.data.no_symmetrize,
                },
            )?;
            Some((graph, features))
        }
        _ => None,
    };
    create_dir(&a.out)?;

    let result = train(&ds, &split, &cfg)?;
    let trace_path = out.output("trace.nptr");
    result.trace.save(&trace_path)?;
    out.record(trace_path);
    let emb_path = out.output("emb.npem");
    result.embeddings.save(&emb_path)?;
    out.record(emb_path);
    let split_path = out.output("split.txt");
    split.save(&split_path)?;
    out.record(split_path);

    out.write_with("training_losses.csv", |w| {
        let mut csv = csv_writer(w);
        csv.write_record(["checkpoint", "epoch", "train_loss", "val_loss"])?;
        for (i, l) in result.losses.iter().enumerate() {
            csv.write_record([
                i.to_string(),
                l.epoch.to_string(),
                l.train_loss.to_string(),
                l.val_loss.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    let profiles = uncertainties(&result.trace, &ds.labels)?;
    let categories = categorize(&profiles, &taxonomy);
    let curves = per_category_curves(&result.trace, &ds.labels, &categories)?;
    out.write_with("loss_curves.csv", |w| write_curves_csv(&curves, w))?;

    if let Some((graph, features)) = &augmented {
        let (trace, emb) = evaluate_checkpoints(&result.checkpoints, graph, features, result.trace.meta().clone())?;
        let p = out.output("aug_trace.nptr");
        trace.save(&p)?;
        out.record(p);
        let p = out.output("aug_emb.npem");
        emb.save(&p)?;
        out.record(p);
    }

    out.config = json!({
        "dataset": dataset_config(&a.data),
        "train": cfg,
        "taxonomy": taxonomy,
        "realized_epochs": result.realized_epochs,
    });
    Ok(out)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn report(a: &ReportArgs) -> Result<Outcome> {
    let mut out = Outcome::new("report", &a.out);
    let taxonomy = a.taxonomy.config()?;
    out.inputs.extend([a.profiles.clone(), a.trace.clone(), a.labels.clone()]);
    let file = File::open(&a.profiles).map_err(|e| Error::Read {
        path: a.profiles.clone(),
        source: e,
    })?;
    let data = read_profiles_csv(file)?;
    let trace = PredictionTrace::load(&a.trace)?;
    let labels = load_labels(&a.labels, a.num_classes)?;
    if data.len() != trace.num_nodes() {
        return Err(Error::Invalid(format!(
            "profiles cover {} nodes but the trace covers {}",
            data.len(),
            trace.num_nodes()
        )));
    }
    let profiles = uncertainties(&trace, &labels)?;
    let categories = categorize(&profiles, &taxonomy);
    let table = node_profile_table(&data, &profiles, &categories)?;
    create_dir(&a.out)?;
    out.write_with("report.csv", |w| write_report_csv(&table, w))?;
    out.write_with("scatter.csv", |w| write_scatter_csv(&table, w))?;
    out.config = json!({ "num_classes": a.num_classes, "taxonomy": taxonomy });
    Ok(out)
}

fn induct(a: &InductArgs) -> Result<Outcome> {
    let mut out = Outcome::new("induct", &a.out);
    let taxonomy = a.taxonomy.config()?;
    let cfg = InductiveConfig {
        k_neighbors: a.k,
        metric: a.metric,
    };
    out.inputs.extend([a.reference_emb.clone(), a.reference_report.clone(), a.new_emb.clone()]);
    let reference = EmbeddingMatrix::load(&a.reference_emb)?;
    let file = File::open(&a.reference_report).map_err(|e| Error::Read {
        path: a.reference_report.clone(),
        source: e,
    })?;
    let ref_categories: Vec<_> = read_report_csv(file)?.into_iter().map(|r| r.category).collect();
    let all_new = EmbeddingMatrix::load(&a.new_emb)?;
    let new_ids: Vec<usize> = match &a.new_mask {
        Some(p) => {
            out.inputs.push(p.clone());
            let mask = load_mask(p)?;
            if mask.len() != all_new.num_nodes() {
                return Err(Error::Invalid(format!(
                    "mask covers {} nodes but --new-emb has {} rows",
                    mask.len(),
                    all_new.num_nodes()
                )));
            }
            (0..mask.len()).filter(|&v| mask[v]).collect()
        }
        None => (0..all_new.num_nodes()).collect(),
    };
    let new = all_new.select_rows(&new_ids);
    let result = knn_categorize(&reference, &ref_categories, &new, &cfg)?;

    let mut accuracy = None;
    if let (Some(tp), Some(lp)) = (&a.truth_trace, &a.truth_labels) {
        out.inputs.extend([tp.clone(), lp.clone()]);
        let trace = PredictionTrace::load(tp)?;
        let num_classes = a.num_classes.ok_or_else(|| Error::Config("--num-classes is required with --truth-labels".into()))?;
        let labels = load_labels(lp, num_classes)?;
        let truth = ground_truth_categories(&trace, &labels, &taxonomy, &new_ids)?;
        let acc = categorization_accuracy(&result.predicted, &truth)?;
        out.stdout.push(format!("accuracy={acc}"));
        accuracy = Some(acc);
    }
    create_dir(&a.out)?;
    out.write_with("induct.csv", |w| write_result_csv(&result, Some(&new_ids), w))?;
    if result.predicted.len() == 1 {
        out.stdout.push(format!("predicted={}", result.predicted[0]));
    }
    out.config = json!({ "inductive": cfg, "taxonomy": taxonomy, "accuracy": accuracy });
    Ok(out)
}

pub fn planted_config(a: &PlantedArgs, seed: u64) -> PlantedConfig {
    PlantedConfig {
        num_nodes: a.nodes,
        num_classes: a.classes,
        intra_edge_prob: a.intra,
        inter_edge_prob: a.inter,
        feature_dim: a.dim,
        feature_noise: a.noise,
        class_noise: a.class_noise.clone(),
        homophilous: a.homophilous,
        seed,
    }
}

fn planted(a: &PlantedArgs, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::new("synth planted", &a.out);
    let cfg = planted_config(a, seed);
    let ds = planted_partition(&cfg)?;
    create_dir(&a.out)?;
    ds.save(&a.out)?;
    for name in ["edges.tsv", "features.npfx", "labels.tsv"] {
        out.record(out.output(name));
    }
    out.config = json!({ "planted": cfg });
    Ok(out)
}

pub fn kb_config(a: &KbArgs, seed: u64) -> KBConfig {
    KBConfig {
        num_entities: a.entities,
        num_relations: a.relations,
        num_triplets: a.triplets,
        entity_dim: a.dim,
        corrupt_frac: a.corrupt,
        flip_frac: a.flip,
        seed,
    }
}

fn kb(a: &KbArgs, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::new("synth kb", &a.out);
    let cfg = kb_config(a, seed);
    let inst = kb_harness(&cfg)?;
    create_dir(&a.out)?;
    inst.dataset.save(&a.out)?;
    for name in ["edges.tsv", "features.npfx", "labels.tsv"] {
        out.record(out.output(name));
    }
    let p = out.output("corrupted_mask.tsv");
    save_mask(&inst.corrupted, &p)?;
    out.record(p);
    let p = out.output("flipped_mask.tsv");
    save_mask(&inst.flipped, &p)?;
    out.record(p);
    out.write_with("triplets.tsv", |w| {
        for (v, (h, r, t)) in inst.triplets.iter().enumerate() {
            writeln!(w, "{v}\t{h}\t{r}\t{t}")?;
        }
        Ok(())
    })?;
    out.config = json!({ "kb": cfg });
    Ok(out)
}
