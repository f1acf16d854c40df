//! Extended-XYZ reading and writing.
//!
//! Each frame is
//!
//! ```text
//! <atom count>
//! energy=<float> energy_unit=<name> length_unit=<name> Properties=species:S:1:pos:R:3[:forces:R:3]
//! <symbol> <x> <y> <z> [<fx> <fy> <fz>]
//! ...
//! ```
//!
//! Keys on the comment line are whitespace-separated `key=value` tokens;
//! unknown keys are ignored and `energy` may be absent. Floats are written
//! with 17 significant digits, so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::{atomic_number, symbol, MolecularStructure};

use super::{DataError, Dataset};

fn parse_err(line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses extended-XYZ text.
pub fn parse_extxyz(text: &str) -> Result<Dataset, DataError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut pos = 0;
    let mut structures = Vec::new();
    let mut units: Option<(String, String)> = None;
    while pos < lines.len() {
        if lines[pos].trim().is_empty() {
            pos += 1;
            continue;
        }
        let count_line = pos + 1;
        let n: usize = lines[pos]
            .trim()
            .parse()
            .map_err(|_| parse_err(count_line, format!("expected an atom count, found {:?}", lines[pos])))?;
        if n == 0 {
            return Err(parse_err(count_line, "atom count must be positive"));
        }
        let header = *lines
            .get(pos + 1)
            .ok_or_else(|| parse_err(count_line + 1, "missing property line"))?;
        let mut energy = None;
        let mut energy_unit = "model-unit".to_string();
        let mut length_unit = "Angstrom".to_string();
        for token in header.split_whitespace() {
            let Some((key, value)) = token.split_once('=') else {
                continue;
            };
            let value = value.trim_matches('"');
            match key {
                "energy" => {
                    energy = Some(
                        value
                            .parse::<f64>()
                            .map_err(|_| parse_err(count_line + 1, format!("bad energy {value:?}")))?,
                    )
                }
                "energy_unit" => energy_unit = value.to_string(),
                "length_unit" => length_unit = value.to_string(),
                _ => {}
            }
        }
        match &units {
            None => units = Some((energy_unit, length_unit)),
            Some(u) if *u != (energy_unit.clone(), length_unit.clone()) => {
                return Err(parse_err(count_line + 1, "units differ from earlier frames"));
            }
            Some(_) => {}
        }
        let mut numbers = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        let mut forces: Vec<[f64; 3]> = Vec::new();
        let mut with_forces = None;
        for k in 0..n {
            let lineno = pos + 3 + k;
            let line = lines.get(pos + 2 + k).copied().unwrap_or("");
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || fields[0].parse::<usize>().is_ok() {
                return Err(parse_err(
                    lineno,
                    format!("frame declares {n} atoms but only {k} atom lines follow"),
                ));
            }
            let has_f = match fields.len() {
                4 => false,
                7 => true,
                m => return Err(parse_err(lineno, format!("expected 4 or 7 fields, found {m}"))),
            };
            if *with_forces.get_or_insert(has_f) != has_f {
                return Err(parse_err(lineno, "forces given for some atoms but not others"));
            }
            let z = atomic_number(fields[0])
                .ok_or_else(|| parse_err(lineno, format!("unknown element symbol {:?}", fields[0])))?;
            let nums = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| parse_err(lineno, format!("bad number {f:?}"))))
                .collect::<Result<Vec<f64>, _>>()?;
            numbers.push(z);
            positions.push([nums[0], nums[1], nums[2]]);
            if has_f {
                forces.push([nums[3], nums[4], nums[5]]);
            }
        }
        let mut s = MolecularStructure::new(numbers, positions).map_err(|e| parse_err(count_line, e.to_string()))?;
        s.energy = energy;
        if with_forces == Some(true) {
            s.forces = Some(forces);
        }
        structures.push(s);
        pos += 2 + n;
    }
    let (energy_unit, length_unit) = units.unwrap_or_else(|| ("model-unit".into(), "Angstrom".into()));
    Ok(Dataset {
        structures,
        energy_unit,
        length_unit,
    })
}

/// Renders a dataset as extended-XYZ text.
pub fn format_extxyz(data: &Dataset) -> String {
    let mut out = String::new();
    for s in &data.structures {
        let _ = writeln!(out, "{}", s.len());
        let mut header = String::new();
        if let Some(e) = s.energy {
            let _ = write!(header, "energy={e:.16e} ");
        }
        let props = if s.forces.is_some() {
            "species:S:1:pos:R:3:forces:R:3"
        } else {
            "species:S:1:pos:R:3"
        };
        let _ = writeln!(
            out,
            "{header}energy_unit={} length_unit={} Properties={props}",
            data.energy_unit, data.length_unit
        );
        for (k, (&z, p)) in s.atomic_numbers.iter().zip(&s.positions).enumerate() {
            let _ = write!(
                out,
                "{} {:.16e} {:.16e} {:.16e}",
                symbol(z).expect("validated element"),
                p[0],
                p[1],
                p[2]
            );
            if let Some(f) = &s.forces {
                let _ = write!(out, " {:.16e} {:.16e} {:.16e}", f[k][0], f[k][1], f[k][2]);
            }
            out.push('\n');
        }
    }
    out
}

pub fn read_extxyz(path: &Path) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_extxyz(&text).map_err(|e| match e {
        DataError::Parse { line, msg } => DataError::File {
            path: path.display().to_string(),
            line,
            msg,
        },
        other => other,
    })
}

pub fn write_extxyz(data: &Dataset, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, format_extxyz(data)).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
