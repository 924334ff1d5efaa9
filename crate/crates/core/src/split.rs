use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Validation,
    Test,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SplitMode {
    Partial { train_frac: f64, val_frac: f64 },
    /// Every node is used for training, validation and testing at once.
    Full,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitMode::Partial {
                train_frac,
                val_frac,
            } => write!(f, "partial({train_frac},{val_frac})"),
            SplitMode::Full => f.write_str("full"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMask {
    roles: Vec<Role>,
    full: bool,
}

impl SplitMask {
    pub fn full(num_nodes: usize) -> Self {
        SplitMask {
            roles: vec![Role::None; num_nodes],
            full: true,
        }
    }

    pub fn from_roles(roles: Vec<Role>) -> Self {
        SplitMask { roles, full: false }
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn role(&self, v: usize) -> Role {
        self.roles[v]
    }

    pub fn is_train(&self, v: usize) -> bool {
        self.full || self.roles[v] == Role::Train
    }

    pub fn is_validation(&self, v: usize) -> bool {
        self.full || self.roles[v] == Role::Validation
    }

    pub fn is_test(&self, v: usize) -> bool {
        self.full || self.roles[v] == Role::Test
    }

    /// Per-node membership for one role (full mode selects every node).
    pub fn select(&self, role: Role) -> Vec<bool> {
        (0..self.len())
            .map(|v| match role {
                Role::Train => self.is_train(v),
                Role::Validation => self.is_validation(v),
                Role::Test => self.is_test(v),
                Role::None => !self.full && self.roles[v] == Role::None,
            })
            .collect()
    }

    pub fn nodes_with(&self, role: Role) -> Vec<usize> {
        self.select(role)
            .iter()
            .enumerate()
            .filter_map(|(v, &on)| on.then_some(v))
            .collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.select(role).iter().filter(|&&b| b).count()
    }

    /// One role character per line: T, V, E, N, or F in full mode.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for &r in &self.roles {
            let ch = if self.full {
                'F'
            } else {
                match r {
                    Role::Train => 'T',
                    Role::Validation => 'V',
                    Role::Test => 'E',
                    Role::None => 'N',
                }
            };
            writeln!(out, "{ch}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let mut roles = Vec::new();
        let mut full = None;
        for (i, line) in text.lines().enumerate() {
            let (role, is_full) = match line.trim() {
                "T" => (Role::Train, false),
                "V" => (Role::Validation, false),
                "E" => (Role::Test, false),
                "N" => (Role::None, false),
                "F" => (Role::None, true),
                other => {
                    return Err(Error::parse(path, i + 1, format!("unknown role {other:?}")))
                }
            };
            if *full.get_or_insert(is_full) != is_full {
                return Err(Error::parse(path, i + 1, "full-mode and partial roles mixed"));
            }
            roles.push(role);
        }
        Ok(SplitMask {
            roles,
            full: full.unwrap_or(false),
        })
    }
}

/// Random partial split (remainder goes to test) or the full-train flag.
pub fn make_split(num_nodes: usize, mode: SplitMode, seed: u64) -> Result<SplitMask> {
    let (train_frac, val_frac) = match mode {
        SplitMode::Full => return Ok(SplitMask::full(num_nodes)),
        SplitMode::Partial {
            train_frac,
            val_frac,
        } => (train_frac, val_frac),
    };
    if !(train_frac > 0.0 && val_frac > 0.0) {
        return Err(Error::Config(format!(
            "split fractions must be positive, got {train_frac} and {val_frac}"
        )));
    }
    if train_frac + val_frac > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "split fractions sum to {} > 1",
            train_frac + val_frac
        )));
    }
    let n_train = ((train_frac * num_nodes as f64).round() as usize).min(num_nodes);
    let n_val = ((val_frac * num_nodes as f64).round() as usize).min(num_nodes - n_train);

    let mut order: Vec<usize> = (0..num_nodes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut roles = vec![Role::Test; num_nodes];
    for &v in &order[..n_train] {
        roles[v] = Role::Train;
    }
    for &v in &order[n_train..n_train + n_val] {
        roles[v] = Role::Validation;
    }
    Ok(SplitMask::from_roles(roles))
}
