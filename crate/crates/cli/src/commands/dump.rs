use std::path::{Path, PathBuf};

use so3krates::data::read_extxyz;
use so3krates::geometry::symbol;
use so3krates::model::{pca_2d, Branch, Model, PairKind, Trace};

use super::train::open_checkpoint;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Attention,
    Sphc,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpSummary {
    pub attention_rows: Option<usize>,
    pub sphc_rows: Option<usize>,
    pub files: Vec<PathBuf>,
}

/// Writes `attention.csv` and/or `sphc.csv` for every structure in `data`.
///
/// `attention.csv`: `structure,layer,pair,branch,head,i,j,distance,alpha`
/// with `pair` either `local` or `nonlocal`; layers count from 1.
///
/// `sphc.csv`: `structure,layer,atom,element,pc1,pc2,chi_0..` with one row
/// per atom and layer output. The two principal components are computed
/// over all rows of the file.
pub fn dump(checkpoint: &Path, data: &Path, what: DumpKind, out: &Path) -> Result<DumpSummary, CliError> {
    let ckpt = open_checkpoint(checkpoint)?;
    if !data.is_file() {
        return Err(CliError::Config(format!("dataset {} not found", data.display())));
    }
    let set = read_extxyz(data)?;
    let model = Model::from_params(ckpt.config.clone(), ckpt.params.clone())?;
    let traces: Vec<Trace> = set
        .structures
        .iter()
        .map(|s| model.trace(s).map(|(_, t)| t))
        .collect::<Result<_, _>>()?;
    std::fs::create_dir_all(out)?;
    let mut summary = DumpSummary {
        attention_rows: None,
        sphc_rows: None,
        files: Vec::new(),
    };

    if matches!(what, DumpKind::Attention | DumpKind::All) {
        let path = out.join("attention.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["structure", "layer", "pair", "branch", "head", "i", "j", "distance", "alpha"])?;
        let mut rows = 0;
        for (k, (s, t)) in set.structures.iter().zip(&traces).enumerate() {
            for r in &t.attention {
                let d: f64 = (0..3)
                    .map(|c| (s.positions[r.i][c] - s.positions[r.j][c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                w.write_record([
                    k.to_string(),
                    (r.layer + 1).to_string(),
                    match r.kind {
                        PairKind::Local => "local",
                        PairKind::NonLocal => "nonlocal",
                    }
                    .to_string(),
                    match r.branch {
                        Branch::Feature => "feature",
                        Branch::Sphc => "sphc",
                    }
                    .to_string(),
                    r.head.to_string(),
                    r.i.to_string(),
                    r.j.to_string(),
                    d.to_string(),
                    r.alpha.to_string(),
                ])?;
                rows += 1;
            }
        }
        w.flush()?;
        summary.attention_rows = Some(rows);
        summary.files.push(path);
    }

    if matches!(what, DumpKind::Sphc | DumpKind::All) {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (k, (s, t)) in set.structures.iter().zip(&traces).enumerate() {
            for (layer, chi) in t.chi.iter().enumerate().skip(1) {
                for atom in 0..s.len() {
                    points.push(chi.row_slice(atom).to_vec());
                    labels.push((k, layer, atom, s.atomic_numbers[atom]));
                }
            }
        }
        let pca = pca_2d(&points);
        let dim = points.first().map_or(0, Vec::len);
        let path = out.join("sphc.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let mut header: Vec<String> = ["structure", "layer", "atom", "element", "pc1", "pc2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..dim).map(|c| format!("chi_{c}")));
        w.write_record(&header)?;
        for (row, ((k, layer, atom, z), p)) in labels.iter().zip(&points).enumerate() {
            let mut rec = vec![
                k.to_string(),
                layer.to_string(),
                atom.to_string(),
                symbol(*z).unwrap_or("?").to_string(),
                pca.projections[row][0].to_string(),
                pca.projections[row][1].to_string(),
            ];
            rec.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        summary.sphc_rows = Some(points.len());
        summary.files.push(path);
    }
    Ok(summary)
}
