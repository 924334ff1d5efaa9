//! Data-centric difficulty scores: intra-class feature dissimilarity (ICFD),
//! neighborhood class divergence (NCD) and random-walk class divergence (RWCD).
//!
//! Every kernel is a pure function over immutable inputs. Per-node results are
//! written into preallocated slots, so outputs do not depend on how many
//! threads rayon uses.

mod icfd;
mod ncd;
mod rwcd;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::graph::NeighborhoodMode;

pub use icfd::icfd;
pub use ncd::{ncd, ncd_multilabel};
pub use rwcd::{rwcd, write_walk_counts_csv, RwcdOutput, WalkLabelCounts};

pub const DEFAULT_EPSILON: f64 = 1e-10;
pub const DEFAULT_WALKS_PER_NODE: usize = 100;
pub const DEFAULT_WALK_LENGTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub epsilon: f64,
    pub walks_per_node: usize,
    /// Number of steps per walk; a walk visits at most this many nodes beyond its start.
    pub walk_length: usize,
    pub walk_seed: u64,
    pub neighborhood: NeighborhoodMode,
    pub count_walk_start: bool,
    /// Reserved; weight-proportional walk steps are not implemented.
    pub weighted_walks: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            epsilon: DEFAULT_EPSILON,
            walks_per_node: DEFAULT_WALKS_PER_NODE,
            walk_length: DEFAULT_WALK_LENGTH,
            walk_seed: 0,
            neighborhood: NeighborhoodMode::Out,
            count_walk_start: false,
            weighted_walks: false,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.walks_per_node == 0 {
            return Err(Error::Config("walks per node must be at least 1".into()));
        }
        if self.walk_length == 0 {
            return Err(Error::Config("walk length must be at least 1".into()));
        }
        if self.weighted_walks {
            return Err(Error::Unsupported("weighted random walks".into()));
        }
        Ok(())
    }
}

/// Diagnostic flags recording which fallback rule produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ProfileFlags(u8);

impl ProfileFlags {
    pub const EMPTY: ProfileFlags = ProfileFlags(0);
    pub const SINGLETON_CLASS: ProfileFlags = ProfileFlags(1);
    pub const ISOLATED_NODE: ProfileFlags = ProfileFlags(1 << 1);
    pub const EMPTY_WALK: ProfileFlags = ProfileFlags(1 << 2);
    pub const ZERO_NORM_FEATURE: ProfileFlags = ProfileFlags(1 << 3);

    const NAMES: [(ProfileFlags, &'static str); 4] = [
        (ProfileFlags::SINGLETON_CLASS, "singleton_class"),
        (ProfileFlags::ISOLATED_NODE, "isolated_node"),
        (ProfileFlags::EMPTY_WALK, "empty_walk"),
        (ProfileFlags::ZERO_NORM_FEATURE, "zero_norm_feature"),
    ];

    pub fn contains(self, other: ProfileFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: ProfileFlags) {
        self.0 |= other.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut flags = ProfileFlags::EMPTY;
        for part in s.split(';').filter(|p| !p.is_empty()) {
            let (flag, _) = Self::NAMES
                .iter()
                .find(|(_, name)| *name == part)
                .ok_or_else(|| Error::Invalid(format!("unknown profile flag {part:?}")))?;
            flags.insert(*flag);
        }
        Ok(flags)
    }
}

impl std::ops::BitOr for ProfileFlags {
    type Output = ProfileFlags;

    fn bitor(self, rhs: Self) -> Self {
        ProfileFlags(self.0 | rhs.0)
    }
}

impl fmt::Display for ProfileFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in Self::NAMES {
            if self.contains(flag) {
                if !first {
                    f.write_str(";")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// Per-node output of one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub values: Vec<f64>,
    pub flags: Vec<ProfileFlags>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataProfile {
    pub s_f: f64,
    pub s_l: f64,
    pub s_h: f64,
    pub flags: ProfileFlags,
}

/// Runs the three kernels and merges their outputs node by node.
pub fn profile_all(dataset: &LabeledDataset, config: &ProfileConfig) -> Result<Vec<DataProfile>> {
    config.validate()?;
    let f = icfd(&dataset.features, &dataset.labels)?;
    let l = ncd(&dataset.graph, &dataset.labels, config)?;
    let h = rwcd(&dataset.graph, &dataset.labels, config)?;
    Ok((0..dataset.num_nodes())
        .map(|v| DataProfile {
            s_f: f.values[v],
            s_l: l.values[v],
            s_h: h.scores.values[v],
            flags: f.flags[v] | l.flags[v] | h.scores.flags[v],
        })
        .collect())
}

/// `node_id,s_f,s_l,s_h,flags`
pub fn write_profiles_csv<W: Write>(profiles: &[DataProfile], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node_id", "s_f", "s_l", "s_h", "flags"])?;
    for (v, p) in profiles.iter().enumerate() {
        w.write_record([
            v.to_string(),
            p.s_f.to_string(),
            p.s_l.to_string(),
            p.s_h.to_string(),
            p.flags.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profiles_csv<R: std::io::Read>(input: R) -> Result<Vec<DataProfile>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<&str> {
            rec.get(k)
                .ok_or_else(|| Error::Invalid(format!("profile row {i} is missing column {k}")))
        };
        let num = |k: usize| -> Result<f64> {
            field(k)?
                .parse()
                .map_err(|_| Error::Invalid(format!("profile row {i} column {k} is not a number")))
        };
        let node: usize = field(0)?
            .parse()
            .map_err(|_| Error::Invalid(format!("profile row {i} has a bad node id")))?;
        if node != i {
            return Err(Error::Invalid(format!(
                "profile rows must be ordered by node id (row {i} holds node {node})"
            )));
        }
        out.push(DataProfile {
            s_f: num(1)?,
            s_l: num(2)?,
            s_h: num(3)?,
            flags: ProfileFlags::parse(field(4)?)?,
        });
    }
    Ok(out)
}
