//! CSV writing. Every number is written with 17 significant digits so the
//! files read back to the exact doubles.

use std::io::Write;
use std::path::{Path, PathBuf};

use cosim::models::Model;
use cosim::orchestrator::reference::DenseTrace;
use cosim::orchestrator::{ReplayMode, Trace};

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `out.csv` for a single mode, `out_MODE.csv` when several share a path.
pub fn mode_path(base: &Path, mode: ReplayMode, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    suffixed(base, mode.name())
}

pub fn suffixed(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    base.with_file_name(name)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, comment: Option<&str>, header: &[String], rows: &[Vec<String>]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    if let Some(c) = comment {
        writeln!(tmp, "# {c}")?;
    }
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut tmp);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn output_header(model: &Model) -> Vec<String> {
    let mut h = vec!["time".to_string()];
    for s in &model.systems {
        h.extend((0..s.n_out).map(|k| format!("{}.y{k}", s.name)));
    }
    h.push("iterations".into());
    h
}

pub fn trace_rows(trace: &Trace) -> Vec<Vec<String>> {
    trace
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![num(r.t)];
            row.extend(r.outputs.iter().map(|&y| num(y)));
            row.push(r.iterations.to_string());
            row
        })
        .collect()
}

pub fn state_header(model: &Model) -> Vec<String> {
    let mut h = vec!["time".to_string()];
    for s in &model.systems {
        h.extend((0..s.n_st).map(|k| format!("{}.x{k}", s.name)));
    }
    h
}

pub fn reference_rows(r: &DenseTrace) -> Vec<Vec<String>> {
    r.times
        .iter()
        .zip(&r.states)
        .map(|(t, s)| std::iter::once(num(*t)).chain(s.iter().map(|&v| num(v))).collect())
        .collect()
}

pub fn dt_comment(dts: &[f64]) -> String {
    format!("dt grid: {}", dts.iter().map(|d| num(*d)).collect::<Vec<_>>().join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths() {
        let p = Path::new("out/run.csv");
        assert_eq!(mode_path(p, ReplayMode::Rollback, false), PathBuf::from("out/run.csv"));
        assert_eq!(mode_path(p, ReplayMode::CostaricaSsr, true), PathBuf::from("out/run_COSTARICA_SSR.csv"));
        assert_eq!(suffixed(Path::new("trace"), "reference"), PathBuf::from("trace_reference"));
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
