//! Seeded fixture generators: planted-partition graphs, label flips and a
//! triplet graph with corrupted entities.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::{Edge, Graph};
use crate::labels::LabelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    /// Per-class noise scale overriding `feature_noise`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_noise: Option<Vec<f64>>,
    /// Require `intra_edge_prob >= inter_edge_prob`.
    #[serde(default)]
    pub homophilous: bool,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            num_nodes: 200,
            num_classes: 2,
            intra_edge_prob: 0.05,
            inter_edge_prob: 0.005,
            feature_dim: 8,
            feature_noise: 0.5,
            class_noise: None,
            homophilous: false,
            seed: 0,
        }
    }
}

fn check_frac(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be in [0, 1], got {x}")))
    }
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be at least 1".into()));
        }
        check_frac("intra_edge_prob", self.intra_edge_prob)?;
        check_frac("inter_edge_prob", self.inter_edge_prob)?;
        if self.homophilous && self.intra_edge_prob < self.inter_edge_prob {
            return Err(Error::Config(format!(
                "homophilous fixture needs intra_edge_prob >= inter_edge_prob ({} < {})",
                self.intra_edge_prob, self.inter_edge_prob
            )));
        }
        let bad_noise = |x: f64| !(x >= 0.0 && x.is_finite());
        if bad_noise(self.feature_noise) {
            return Err(Error::Config(format!("feature_noise must be >= 0, got {}", self.feature_noise)));
        }
        if let Some(noise) = &self.class_noise {
            if noise.len() != self.num_classes {
                return Err(Error::Config(format!(
                    "class_noise has {} entries for {} classes",
                    noise.len(),
                    self.num_classes
                )));
            }
            if noise.iter().any(|&x| bad_noise(x)) {
                return Err(Error::Config("class_noise entries must be >= 0".into()));
            }
        }
        Ok(())
    }

    fn noise_of(&self, class: usize) -> f64 {
        self.class_noise.as_ref().map_or(self.feature_noise, |n| n[class])
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Stochastic block model. Node `v` belongs to class `v mod C`; its features
/// are the class centroid (standard normal entries) plus isotropic Gaussian
/// noise of the class's scale.
pub fn planted_partition(config: &PlantedConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let n = config.num_nodes;
    let c = config.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let labels: Vec<usize> = (0..n).map(|v| v % c).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                config.intra_edge_prob
            } else {
                config.inter_edge_prob
            };
            if rng.random::<f64>() < p {
                edges.push(Edge::new(u, v));
            }
        }
    }

    let centroids: Vec<Vec<f64>> = (0..c).map(|_| gaussian_vec(&mut rng, config.feature_dim)).collect();
    let mut values = Vec::with_capacity(n * config.feature_dim);
    for &y in &labels {
        let s = config.noise_of(y);
        for &m in &centroids[y] {
            let z: f64 = rng.sample(StandardNormal);
            values.push(m + s * z);
        }
    }

    LabeledDataset::new(
        Graph::from_edges(n, edges, false)?,
        FeatureMatrix::new(n, config.feature_dim, values)?,
        LabelSet::single(c, labels)?,
    )
}

/// Gives `round(frac * N)` uniformly chosen nodes a uniformly chosen
/// different label.
pub fn flip_labels(labels: &LabelSet, frac: f64, seed: u64) -> Result<(LabelSet, Vec<bool>)> {
    let y = labels.require_single("label flipping")?;
    check_frac("flip fraction", frac)?;
    let c = labels.num_classes();
    let n = y.len();
    let count = (frac * n as f64).round() as usize;
    if count > 0 && c < 2 {
        return Err(Error::Config("cannot flip labels with fewer than 2 classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    let mut out = y.to_vec();
    let mut mask = vec![false; n];
    for v in chosen {
        let r = rng.random_range(0..c - 1);
        out[v] = if r >= y[v] { r + 1 } else { r };
        mask[v] = true;
    }
    Ok((LabelSet::single(c, out)?, mask))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBConfig {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_triplets: usize,
    pub entity_dim: usize,
    pub corrupt_frac: f64,
    pub flip_frac: f64,
    pub seed: u64,
}

impl Default for KBConfig {
    fn default() -> Self {
        KBConfig {
            num_entities: 1000,
            num_relations: 50,
            num_triplets: 2000,
            entity_dim: 16,
            corrupt_frac: 0.01,
            flip_frac: 0.30,
            seed: 0,
        }
    }
}

impl KBConfig {
    /// Distinct (head, relation, tail) triples with head != tail.
    pub fn capacity(&self) -> u128 {
        let e = self.num_entities as u128;
        e * e.saturating_sub(1) * self.num_relations as u128
    }

    pub fn validate(&self) -> Result<()> {
        check_frac("corrupt_frac", self.corrupt_frac)?;
        check_frac("flip_frac", self.flip_frac)?;
        if self.num_entities < 3 || self.num_relations == 0 {
            return Err(Error::Config("need at least 3 entities and 1 relation".into()));
        }
        if self.entity_dim == 0 {
            return Err(Error::Config("entity_dim must be at least 1".into()));
        }
        if self.num_triplets as u128 > self.capacity() {
            return Err(Error::Config(format!(
                "{} triplets requested but only {} distinct triples exist",
                self.num_triplets,
                self.capacity()
            )));
        }
        if self.capacity() > usize::MAX as u128 {
            return Err(Error::Config("entity/relation counts are too large".into()));
        }
        Ok(())
    }
}

/// Output of [`kb_harness`].
#[derive(Debug, Clone)]
pub struct KBInstance {
    pub dataset: LabeledDataset,
    /// `(head, relation, tail)` per node, after corruption.
    pub triplets: Vec<(usize, usize, usize)>,
    pub corrupted: Vec<bool>,
    pub flipped: Vec<bool>,
}

/// One node per triplet, an edge between any two triplets that share an
/// entity, features `[head | relation | tail]` of random unit vectors, label 1
/// for valid and 0 for corrupted triplets, then label flips on top.
pub fn kb_harness(config: &KBConfig) -> Result<KBInstance> {
    config.validate()?;
    let ne = config.num_entities;
    let nr = config.num_relations;
    let n = config.num_triplets;
    let d = config.entity_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let entities: Vec<Vec<f64>> = (0..ne).map(|_| unit_vec(&mut rng, d)).collect();
    let relations: Vec<Vec<f64>> = (0..nr).map(|_| unit_vec(&mut rng, d)).collect();

    let per_head = nr * (ne - 1);
    let mut triplets: Vec<(usize, usize, usize)> = index::sample(&mut rng, config.capacity() as usize, n)
        .into_iter()
        .map(|i| {
            let h = i / per_head;
            let rest = i % per_head;
            let r = rest / (ne - 1);
            let t = rest % (ne - 1);
            (h, r, if t >= h { t + 1 } else { t })
        })
        .collect();

    let n_corrupt = (config.corrupt_frac * n as f64).round() as usize;
    let mut corrupted = vec![false; n];
    let mut chosen = index::sample(&mut rng, n, n_corrupt).into_vec();
    chosen.sort_unstable();
    for v in chosen {
        let (h, r, t) = triplets[v];
        let replace_head = rng.random::<bool>();
        let keep = if replace_head { t } else { h };
        let old = if replace_head { h } else { t };
        let new = loop {
            let e = rng.random_range(0..ne);
            if e != keep && e != old {
                break e;
            }
        };
        triplets[v] = if replace_head { (new, r, t) } else { (h, r, new) };
        corrupted[v] = true;
    }

    let mut by_entity: Vec<Vec<usize>> = vec![Vec::new(); ne];
    for (v, &(h, _, t)) in triplets.iter().enumerate() {
        by_entity[h].push(v);
        if t != h {
            by_entity[t].push(v);
        }
    }
    let mut pairs = BTreeSet::new();
    for nodes in &by_entity {
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    let edges: Vec<Edge> = pairs.into_iter().map(|(a, b)| Edge::new(a, b)).collect();

    let mut values = Vec::with_capacity(n * 3 * d);
    for &(h, r, t) in &triplets {
        values.extend(&entities[h]);
        values.extend(&relations[r]);
        values.extend(&entities[t]);
    }

    let clean = LabelSet::single(2, corrupted.iter().map(|&c| usize::from(!c)).collect())?;
    let flip_seed = rng.random::<u64>();
    let (labels, flipped) = flip_labels(&clean, config.flip_frac, flip_seed)?;

    Ok(KBInstance {
        dataset: LabeledDataset::new(
            Graph::from_edges(n, edges, false)?,
            FeatureMatrix::new(n, 3 * d, values)?,
            labels,
        )?,
        triplets,
        corrupted,
        flipped,
    })
}

/// `node<TAB>0|1` per line.
pub fn write_mask<W: Write>(mask: &[bool], mut out: W) -> Result<()> {
    for (v, &m) in mask.iter().enumerate() {
        writeln!(out, "{v}\t{}", u8::from(m))?;
    }
    Ok(())
}

pub fn save_mask(mask: &[bool], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_mask(mask, &mut buf)?;
    crate::binfmt::write_file(path, &buf)
}

pub fn load_mask(path: &Path) -> Result<Vec<bool>> {
    let file = std::fs::File::open(path).map_err(|e| Error::read(path, e))?;
    let mut mask = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (node, flag) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected node<TAB>0|1"))?;
        let node: usize = node
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, i + 1, "bad node id"))?;
        if node != mask.len() {
            return Err(Error::parse(path, i + 1, format!("expected node {}, found {node}", mask.len())));
        }
        mask.push(match flag.trim() {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(path, i + 1, format!("mask value {other:?} is not 0 or 1"))),
        });
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{icfd, rwcd, ProfileConfig};
    use proptest::prelude::*;

    #[test]
    fn no_inter_edges_gives_single_class_components() {
        let ds = planted_partition(&PlantedConfig {
            num_nodes: 120,
            num_classes: 3,
            intra_edge_prob: 0.1,
            inter_edge_prob: 0.0,
            ..Default::default()
        })
        .unwrap();
        let y = ds.labels.require_single("t").unwrap();
        assert!(ds.graph.edges().iter().all(|e| y[e.source] == y[e.target]));
        let h = rwcd(&ds.graph, &ds.labels, &ProfileConfig::default()).unwrap();
        assert!(h.scores.values.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn zero_noise_gives_zero_icfd() {
        let ds = planted_partition(&PlantedConfig { feature_noise: 0.0, ..Default::default() }).unwrap();
        let f = icfd(&ds.features, &ds.labels).unwrap();
        assert!(f.values.iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn noisy_class_has_higher_icfd_than_clean_class() {
        let ds = planted_partition(&PlantedConfig {
            num_nodes: 200,
            num_classes: 2,
            class_noise: Some(vec![0.5, 0.0]),
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let f = icfd(&ds.features, &ds.labels).unwrap();
        let mean = |c: usize| {
            let vals: Vec<f64> = (0..200).filter(|v| v % 2 == c).map(|v| f.values[v]).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        assert!(mean(0) > mean(1) + 1e-3, "{} vs {}", mean(0), mean(1));
    }

    #[test]
    fn planted_config_validation() {
        let bad = [
            PlantedConfig { intra_edge_prob: 1.5, ..Default::default() },
            PlantedConfig { num_classes: 0, ..Default::default() },
            PlantedConfig { feature_noise: -1.0, ..Default::default() },
            PlantedConfig { class_noise: Some(vec![0.1]), ..Default::default() },
            PlantedConfig { intra_edge_prob: 0.01, inter_edge_prob: 0.1, homophilous: true, ..Default::default() },
        ];
        for c in &bad {
            assert!(planted_partition(c).is_err(), "{c:?}");
        }
    }

    #[test]
    fn flip_extremes_and_counts() {
        let l = LabelSet::single(2, vec![0, 1, 1, 0, 1]).unwrap();
        let (same, mask) = flip_labels(&l, 0.0, 1).unwrap();
        assert_eq!(same, l);
        assert!(mask.iter().all(|&m| !m));
        let (inv, mask) = flip_labels(&l, 1.0, 1).unwrap();
        assert_eq!(inv.require_single("t").unwrap(), &[1, 0, 0, 1, 0]);
        assert!(mask.iter().all(|&m| m));

        let l = LabelSet::single(4, (0..100).map(|v| v % 4).collect()).unwrap();
        let (f, mask) = flip_labels(&l, 0.3, 9).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 30);
        let (a, b) = (l.require_single("t").unwrap(), f.require_single("t").unwrap());
        for v in 0..100 {
            assert_eq!(a[v] != b[v], mask[v]);
        }
        assert!(flip_labels(&LabelSet::single(1, vec![0, 0]).unwrap(), 0.5, 0).is_err());
        assert!(flip_labels(&l, 1.2, 0).is_err());
    }

    #[test]
    fn kb_clean_instance() {
        let kb = kb_harness(&KBConfig {
            num_triplets: 300,
            corrupt_frac: 0.0,
            flip_frac: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(kb.dataset.num_nodes(), 300);
        assert!(kb.dataset.labels.require_single("t").unwrap().iter().all(|&y| y == 1));
        assert!(kb.corrupted.iter().chain(&kb.flipped).all(|&m| !m));
        let distinct: BTreeSet<_> = kb.triplets.iter().collect();
        assert_eq!(distinct.len(), 300);
    }

    #[test]
    fn kb_edges_follow_shared_entities() {
        let kb = kb_harness(&KBConfig {
            num_entities: 40,
            num_relations: 3,
            num_triplets: 150,
            ..Default::default()
        })
        .unwrap();
        let shares = |a: (usize, usize, usize), b: (usize, usize, usize)| {
            a.0 == b.0 || a.0 == b.2 || a.2 == b.0 || a.2 == b.2
        };
        let edges: BTreeSet<(usize, usize)> =
            kb.dataset.graph.edges().iter().map(|e| (e.source, e.target)).collect();
        assert_eq!(edges.len(), kb.dataset.graph.num_edges(), "duplicate edge");
        for u in 0..150 {
            for v in (u + 1)..150 {
                assert_eq!(edges.contains(&(u, v)), shares(kb.triplets[u], kb.triplets[v]), "{u} {v}");
            }
        }
    }

    #[test]
    fn kb_two_triplets_sharing_an_entity_get_one_edge() {
        // With 3 entities every pair of triplets shares at least one entity,
        // and many share two; still exactly one edge per pair.
        let kb = kb_harness(&KBConfig {
            num_entities: 3,
            num_relations: 2,
            num_triplets: 12,
            corrupt_frac: 0.0,
            flip_frac: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(kb.dataset.graph.num_edges(), 12 * 11 / 2);
    }

    #[test]
    fn kb_default_rates() {
        let c = KBConfig::default();
        assert_eq!((c.corrupt_frac, c.flip_frac), (0.01, 0.30));
        let kb = kb_harness(&c).unwrap();
        assert_eq!(kb.corrupted.iter().filter(|&&m| m).count(), 20);
        assert_eq!(kb.flipped.iter().filter(|&&m| m).count(), 600);
        let y = kb.dataset.labels.require_single("t").unwrap();
        for v in 0..c.num_triplets {
            assert_eq!(y[v] == 0, kb.corrupted[v] != kb.flipped[v]);
        }
        let cap = KBConfig { num_entities: 3, num_relations: 1, num_triplets: 7, ..Default::default() };
        assert!(kb_harness(&cap).is_err());
    }

    #[test]
    fn kb_features_are_unit_blocks() {
        let kb = kb_harness(&KBConfig { num_triplets: 50, entity_dim: 5, ..Default::default() }).unwrap();
        for row in kb.dataset.features.rows() {
            for block in row.chunks(5) {
                let n: f64 = block.iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mask_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mask.tsv");
        let m = vec![true, false, false, true];
        save_mask(&m, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "0\t1\n1\t0\n2\t0\n3\t1\n");
        assert_eq!(load_mask(&p).unwrap(), m);
        std::fs::write(&p, "0\t2\n").unwrap();
        assert!(load_mask(&p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn generators_reproducible(seed in 0u64..10_000) {
            let p = PlantedConfig { num_nodes: 60, seed, ..Default::default() };
            let (a, b) = (planted_partition(&p).unwrap(), planted_partition(&p).unwrap());
            prop_assert_eq!(a.graph.edges(), b.graph.edges());
            prop_assert_eq!(a.features, b.features);
            let k = KBConfig { num_triplets: 80, num_entities: 30, seed, ..Default::default() };
            let (a, b) = (kb_harness(&k).unwrap(), kb_harness(&k).unwrap());
            prop_assert_eq!(a.triplets, b.triplets);
            prop_assert_eq!(a.flipped, b.flipped);
            prop_assert_eq!(a.dataset.graph.edges(), b.dataset.graph.edges());
        }

        #[test]
        fn flip_count_follows_rounding(n in 1usize..200, frac in 0.0f64..=1.0, seed in 0u64..100) {
            let l = LabelSet::single(3, (0..n).map(|v| v % 3).collect()).unwrap();
            let (_, mask) = flip_labels(&l, frac, seed).unwrap();
            prop_assert_eq!(mask.iter().filter(|&&m| m).count(), (frac * n as f64).round() as usize);
        }
    }
}
