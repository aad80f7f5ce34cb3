use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};

/// Marker written for numeric fields that could not be computed.
pub const UNAVAILABLE: &str = "NA";

/// Creates `<out>/<command>-<UTC timestamp>`, adding `-1`, `-2`, … if the
/// name is taken. Never reuses an existing directory.
pub fn create_run_dir(out: &Path, command: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let base = format!("{command}-{stamp}");
    for k in 0..1000 {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = out.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::InternalInconsistency(format!("could not allocate a run directory under {}", out.display())))
}

/// Key-value tree written as `summary.kvtree` (TOML syntax).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(Table);

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a dotted path, creating intermediate tables.
    pub fn set(&mut self, path: &str, value: impl Into<Value>) -> &mut Self {
        let mut parts: Vec<&str> = path.split('.').collect();
        let last = parts.pop().expect("non-empty path");
        let mut t = &mut self.0;
        for p in parts {
            t = t
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .expect("path component is a table");
        }
        t.insert(last.to_string(), value.into());
        self
    }

    /// Non-finite numbers become [`UNAVAILABLE`].
    pub fn set_num(&mut self, path: &str, v: Option<f64>) -> &mut Self {
        match v {
            Some(x) if x.is_finite() => self.set(path, x),
            _ => self.set(path, UNAVAILABLE),
        }
    }

    /// Any serializable value, via its TOML form.
    pub fn set_serialized<T: Serialize>(&mut self, path: &str, v: &T) -> Result<&mut Self> {
        let value = Value::try_from(v).map_err(|e| Error::InternalInconsistency(e.to_string()))?;
        Ok(self.set(path, value))
    }

    pub fn get(&self, path: &str) -> Option<&Value> {
        let mut parts = path.split('.').peekable();
        let mut t = &self.0;
        while let Some(p) = parts.next() {
            let v = t.get(p)?;
            if parts.peek().is_none() {
                return Some(v);
            }
            t = v.as_table()?;
        }
        None
    }

    pub fn table(&self) -> &Table {
        &self.0
    }

    pub fn render(&self) -> String {
        toml::to_string(&self.0).expect("tables always serialize")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("summary.kvtree"), self.render())?;
        Ok(())
    }
}

pub fn fmt_num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => UNAVAILABLE.to_string(),
    }
}

/// One evaluated strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: String,
    pub ope_value: Option<f64>,
    pub exact_value: Option<f64>,
    pub mc_value: Option<f64>,
    /// Per-epoch total variation between the estimated and exact reward laws.
    pub tv: Vec<Option<f64>>,
    /// `ok`, or the failure kind.
    pub rank_status: String,
    pub detail: String,
    pub wall_ms: f64,
}

impl ReportRow {
    pub fn abs_error(&self) -> Option<f64> {
        Some((self.ope_value? - self.exact_value?).abs())
    }

    pub fn max_tv(&self) -> Option<f64> {
        self.tv.iter().try_fold(0.0f64, |m, t| t.map(|x| m.max(x)))
    }
}

/// Writes `rows.csv`; `extra` adds named columns per row.
pub fn write_rows(dir: &Path, horizon: usize, rows: &[ReportRow], extra: &[(&str, Vec<String>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("rows.csv")).map_err(csv_err)?;
    let mut header = vec!["strategy".to_string(), "j_ope".into(), "j_exact".into(), "j_mc".into(), "abs_error".into()];
    header.extend((0..=horizon).map(|t| format!("tv_t{t}")));
    header.extend(["rank_status".to_string(), "detail".into(), "wall_ms".into()]);
    header.extend(extra.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![
            r.strategy.clone(),
            fmt_num(r.ope_value),
            fmt_num(r.exact_value),
            fmt_num(r.mc_value),
            fmt_num(r.abs_error()),
        ];
        rec.extend((0..=horizon).map(|t| fmt_num(r.tv.get(t).copied().flatten())));
        rec.extend([r.rank_status.clone(), r.detail.clone(), format!("{:.3}", r.wall_ms)]);
        rec.extend(extra.iter().map(|(_, col)| col[i].clone()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an arbitrary table as `<name>.csv`.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InternalInconsistency(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dirs_never_collide() {
        let dir = tempfile::tempdir().unwrap();
        let a = create_run_dir(dir.path(), "evaluate").unwrap();
        let b = create_run_dir(dir.path(), "evaluate").unwrap();
        assert_ne!(a, b);
        assert!(a.is_dir() && b.is_dir());
    }

    #[test]
    fn summary_paths_and_unavailable() {
        let mut s = Summary::new();
        s.set("a.b.c", 1i64).set("a.d", "x").set_num("v", Some(f64::NAN));
        assert_eq!(s.get("a.b.c"), Some(&Value::Integer(1)));
        assert_eq!(s.get("v").and_then(Value::as_str), Some(UNAVAILABLE));
        let back: Table = toml::from_str(&s.render()).unwrap();
        assert_eq!(&back, s.table());
    }

    #[test]
    fn rows_mark_missing_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let row = ReportRow {
            strategy: "g".into(),
            ope_value: Some(0.5),
            exact_value: None,
            mc_value: Some(f64::INFINITY),
            tv: vec![Some(0.0), None],
            rank_status: "ok".into(),
            detail: String::new(),
            wall_ms: 1.0,
        };
        assert_eq!(row.abs_error(), None);
        assert_eq!(row.max_tv(), None);
        write_rows(dir.path(), 1, &[row], &[("rank", vec!["1".into()])]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "strategy,j_ope,j_exact,j_mc,abs_error,tv_t0,tv_t1,rank_status,detail,wall_ms,rank"
        );
        assert_eq!(lines.next().unwrap(), "g,0.5,NA,NA,NA,0,NA,ok,,1.000,1");
    }
}
