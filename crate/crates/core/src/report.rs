//! Per-node table joining data-centric scores with checkpoint uncertainty.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::profile::{DataProfile, ProfileFlags};
use crate::uncertainty::{DifficultyCategory, UncertaintyProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeProfile {
    pub data: DataProfile,
    pub uncertainty: UncertaintyProfile,
    pub category: DifficultyCategory,
}

pub fn node_profile_table(
    data: &[DataProfile],
    uncertainty: &[UncertaintyProfile],
    categories: &[DifficultyCategory],
) -> Result<Vec<NodeProfile>> {
    if data.len() != uncertainty.len() || data.len() != categories.len() {
        return Err(Error::Invalid(format!(
            "node count mismatch: {} data profiles, {} trace nodes, {} categories",
            data.len(),
            uncertainty.len(),
            categories.len()
        )));
    }
    Ok(data
        .iter()
        .zip(uncertainty)
        .zip(categories)
        .map(|((&data, &uncertainty), &category)| NodeProfile {
            data,
            uncertainty,
            category,
        })
        .collect())
}

pub const REPORT_HEADER: [&str; 9] = [
    "node_id", "s_f", "s_l", "s_h", "mean_p", "v_ep", "v_al", "category", "flags",
];

pub fn write_report_csv<W: Write>(table: &[NodeProfile], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for (v, r) in table.iter().enumerate() {
        w.write_record([
            v.to_string(),
            r.data.s_f.to_string(),
            r.data.s_l.to_string(),
            r.data.s_h.to_string(),
            r.uncertainty.mean_p.to_string(),
            r.uncertainty.v_ep.to_string(),
            r.uncertainty.v_al.to_string(),
            r.category.to_string(),
            r.data.flags.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<NodeProfile>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::Invalid(format!(
            "report header must be {}",
            REPORT_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|_| Error::Invalid(format!("report row {i}: column {} is not a number", REPORT_HEADER[k])))
        };
        if rec[0].parse::<usize>().ok() != Some(i) {
            return Err(Error::Invalid(format!("report row {i} must hold node {i}")));
        }
        out.push(NodeProfile {
            data: DataProfile {
                s_f: num(1)?,
                s_l: num(2)?,
                s_h: num(3)?,
                flags: ProfileFlags::parse(&rec[8])?,
            },
            uncertainty: UncertaintyProfile {
                mean_p: num(4)?,
                v_ep: num(5)?,
                v_al: num(6)?,
            },
            category: rec[7].parse()?,
        });
    }
    Ok(out)
}

/// Long-form `v_ep,v_al,score,category,score_name` rows: every node once for
/// each of `s_f`, `s_l` and `s_h`.
pub fn write_scatter_csv<W: Write>(table: &[NodeProfile], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["v_ep", "v_al", "score", "category", "score_name"])?;
    type Score = fn(&DataProfile) -> f64;
    let scores: [(&str, Score); 3] = [("s_f", |d| d.s_f), ("s_l", |d| d.s_l), ("s_h", |d| d.s_h)];
    for (name, get) in scores {
        for r in table {
            w.write_record([
                r.uncertainty.v_ep.to_string(),
                r.uncertainty.v_al.to_string(),
                get(&r.data).to_string(),
                r.category.to_string(),
                name.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
