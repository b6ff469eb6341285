//! CSV, JSON and gnuplot writers.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::commands::CliError;

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes rows with 17 significant digits so every value round-trips.
pub fn write_csv(path: &Path, columns: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(out, "{}", columns.join(","))?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// One panel of a gnuplot script: a title, a y label and the columns
/// plotted against the first one.
pub struct Panel<'a> {
    pub title: &'a str,
    pub ylabel: &'a str,
    pub columns: &'a [&'a str],
}

/// Writes `<csv>.gp`, a script that plots the named CSV columns.
pub fn write_gnuplot(csv: &Path, x: &str, panels: &[Panel<'_>]) -> Result<(), CliError> {
    let name = csv.file_name().and_then(|n| n.to_str()).unwrap_or("data.csv");
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str("set grid\n");
    s.push_str(&format!("set multiplot layout {},1\n", panels.len()));
    for p in panels {
        s.push_str(&format!("set title '{}'\nset xlabel '{x}'\nset ylabel '{}'\n", p.title, p.ylabel));
        let series: Vec<String> = p
            .columns
            .iter()
            .map(|c| format!("'{name}' using (column('{x}')):(column('{c}')) with lines title '{c}'"))
            .collect();
        s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    }
    s.push_str("unset multiplot\npause mouse close\n");
    let path = csv.with_extension("gp");
    fs::write(&path, s).map_err(|e| CliError::io(&path, e))
}
